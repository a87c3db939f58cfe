#include <cmath>

#include "doctest.h"
#include "oracles.hpp"
#include "vecflow/errors.hpp"
#include "vecflow/flow.hpp"
#include "vecflow/optim.hpp"
#include "vecflow/refiner.hpp"

using namespace vecflow;

namespace {

Tensor ones(std::size_t r, std::size_t c, double v = 1.0) { return Tensor::full({r, c}, v); }

VelocityField constant_field(double c) {
  return [c](const Tensor& z, double, bool) { return Tensor::full(z.shape(), c); };
}

bool bit_equal(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() && std::equal(a.data().begin(), a.data().end(), b.data().begin());
}

double variance(const Tensor& t) {
  double m = 0, v = 0;
  for (double x : t.data()) m += x / t.numel();
  for (double x : t.data()) v += (x - m) * (x - m) / t.numel();
  return v;
}

DiTConfig tiny_dit() {
  DiTConfig c;
  c.num_blocks = 1;
  c.width = 16;
  c.heads = 2;
  c.latent_len = 4;
  c.latent_width = 6;
  c.cond_tokens = 2;
  c.cond_width = 8;
  c.cond_dim = 3;
  c.time_freq_dim = 8;
  c.ffn_mult = 2;
  return c;
}

}  // namespace

TEST_CASE("interpolation endpoints") {
  Rng rng(1);
  const Tensor z0 = oracle::random_tensor({3, 4}, rng, false), z1 = oracle::random_tensor({3, 4}, rng, false);
  CHECK(bit_equal(interpolate(z0, z1, 0.0), z0));
  CHECK(bit_equal(interpolate(z0, z1, 1.0), z1));
  const Tensor mid = interpolate(Tensor::zeros({2, 2}), ones(2, 2, 2.0), 0.5);
  for (double v : mid.data()) CHECK(v == 1.0);
  CHECK_THROWS_AS(interpolate(z0, Tensor::zeros({4, 3}), 0.5), ShapeError);
  // Noise never reaches the fine endpoint.
  const Tensor noised = noise_augment(z0, 400, NoiseSchedule::linear(), 3);
  CHECK(bit_equal(interpolate(noised, z1, 1.0), z1));
}

TEST_CASE("flow loss") {
  Rng rng(2);
  const Tensor z0 = oracle::random_tensor({3, 4}, rng, false), z1 = oracle::random_tensor({3, 4}, rng, false);
  CHECK(flow_loss(sub(z1, z0), z0, z1).item() == 0.0);
  double want = 0;
  for (std::size_t i = 0; i < z0.numel(); ++i) want += (z1[i] - z0[i]) * (z1[i] - z0[i]) / z0.numel();
  CHECK(flow_loss(Tensor::zeros({3, 4}), z0, z1).item() == doctest::Approx(want).epsilon(1e-14));
  const double hand = flow_loss(Tensor::from({1, 2}, {1, 1}), Tensor::zeros({1, 2}), Tensor::from({1, 2}, {1, 3})).item();
  CHECK(hand == 2.0);
  // Any perturbation of the exact velocity raises the loss above zero.
  Tensor off = sub(z1, z0);
  off.mutable_data()[5] += 1e-3;
  CHECK(flow_loss(off, z0, z1).item() > 0.0);
}

TEST_CASE("noise schedule and augmentation") {
  const NoiseSchedule s = NoiseSchedule::linear();
  REQUIRE(s.alpha_bars.size() == 1001);
  CHECK(s.alpha_bars[0] == 1.0);
  for (std::size_t t = 1; t <= s.T; ++t) CHECK(s.alpha_bars[t] < s.alpha_bars[t - 1]);
  CHECK(s.betas.front() == doctest::Approx(1e-4));
  CHECK(s.betas.back() == doctest::Approx(0.02));

  Rng rng(3);
  const Tensor z0 = oracle::random_tensor({100, 100}, rng, false);
  CHECK(bit_equal(noise_augment(z0, 0, s, 1), z0));
  const Tensor pure = noise_augment(Tensor::zeros({100, 100}), s.T, s, 2);
  CHECK(variance(pure) == doctest::Approx(1.0).epsilon(0.05));
  for (std::size_t t : {1u, 100u, 400u, 1000u}) CHECK(variance(noise_augment(z0, t, s, 3 + t)) == doctest::Approx(1.0).epsilon(0.05));
  CHECK(bit_equal(noise_augment(z0, 400, s, 9), noise_augment(z0, 400, s, 9)));
  CHECK_THROWS_AS(noise_augment(z0, 1001, s, 9), ContractError);
}

TEST_CASE("sampler oracles") {
  const NoiseSchedule sched = NoiseSchedule::linear();
  FlowHyper h;
  SampleOptions o;
  o.use_noise_aug = false;
  Rng rng(4);
  const Tensor z0 = oracle::random_tensor({3, 2}, rng, false);

  SUBCASE("constant velocity integrates exactly") {
    for (std::size_t n : {1u, 3u, 7u, 25u}) {
      h.num_steps = n;
      const Tensor z = sample(z0, constant_field(0.5), h, sched, o);
      for (std::size_t i = 0; i < z.numel(); ++i) CHECK(z[i] == doctest::Approx(z0[i] + 0.5).epsilon(1e-13));
    }
  }
  SUBCASE("single step with unit guidance") {
    h.num_steps = 1;
    h.cfg_scale = 1.0;
    VelocityField f = [](const Tensor& z, double t, bool cond) {
      return Tensor::full(z.shape(), cond ? 2.0 + t : -100.0);
    };
    const Tensor z = sample(z0, f, h, sched, o);
    for (std::size_t i = 0; i < z.numel(); ++i) CHECK(z[i] == z0[i] + 2.0);
  }
  SUBCASE("first-order convergence on v = t") {
    VelocityField f = [](const Tensor& z, double t, bool) { return Tensor::full(z.shape(), t); };
    auto err = [&](std::size_t n) {
      h.num_steps = n;
      const Tensor z = sample(Tensor::zeros({1, 1}), f, h, sched, o);
      return std::abs(z[0] - 0.5);
    };
    const double ratio = err(10) / err(20);
    CHECK(ratio >= 1.8);
    CHECK(ratio <= 2.2);
  }
  SUBCASE("guidance combines the two predictions") {
    h.num_steps = 1;
    h.cfg_scale = 3.0;
    VelocityField f = [](const Tensor& z, double, bool cond) { return Tensor::full(z.shape(), cond ? 1.0 : 0.5); };
    const Tensor z = sample(z0, f, h, sched, o);
    for (std::size_t i = 0; i < z.numel(); ++i) CHECK(z[i] == doctest::Approx(z0[i] + 0.5 + 3.0 * 0.5));
  }
  SUBCASE("trajectory records every state") {
    h.num_steps = 4;
    std::vector<Tensor> traj;
    o.trajectory = &traj;
    sample(z0, constant_field(1.0), h, sched, o);
    CHECK(traj.size() == 5);
    CHECK(bit_equal(traj.front(), z0));
    CHECK(path_straightness(traj) == doctest::Approx(0.0).scale(1.0).epsilon(1e-20));
  }
}

TEST_CASE("unit guidance equals conditional sampling bit for bit") {
  VelocityModel model(tiny_dit(), 1);
  Rng rng(5);
  for (auto& t : model.params().tensors())
    for (auto& v : t.mutable_data()) v += 0.1 * rng.normal();
  const std::vector<double> cond{0.1, 0.2, 0.3};
  const Tensor z0 = oracle::random_tensor({4, 6}, rng, false);
  FlowHyper h;
  h.cfg_scale = 1.0;
  h.num_steps = 6;
  SampleOptions o;
  o.seed = 3;
  const Tensor guided = sample(z0, model_field(model, cond), h, NoiseSchedule::linear(), o);
  const VelocityField cond_only = [&](const Tensor& z, double t, bool) {
    return model.predict(z, t, model.condition_tokens(cond));
  };
  const Tensor plain = sample(z0, cond_only, h, NoiseSchedule::linear(), o);
  CHECK(bit_equal(guided, plain));
}

TEST_CASE("untrained model returns the coarse latent") {
  const VelocityModel model(tiny_dit(), 2);
  Rng rng(6);
  const Tensor z0 = oracle::random_tensor({4, 6}, rng, false);
  FlowHyper h;
  SampleOptions o;
  o.use_noise_aug = false;
  CHECK(bit_equal(sample(z0, model_field(model, {0, 0, 0}), h, NoiseSchedule::linear(), o), z0));
}

TEST_CASE("path straightness") {
  CHECK(path_straightness({Tensor::scalar(0), Tensor::scalar(1), Tensor::scalar(1)}) == doctest::Approx(1.0));
  // Oracle: velocities (z_{k+1} - z_k) * steps against the net displacement.
  const std::vector<double> pts{0.0, 0.3, 1.2, 1.0};
  double want = 0;
  const double net = pts.back() - pts.front();
  for (std::size_t k = 0; k + 1 < pts.size(); ++k) {
    const double v = (pts[k + 1] - pts[k]) * 3;
    want += (v - net) * (v - net) / (net * net) / 3;
  }
  std::vector<Tensor> traj, scaled;
  for (double p : pts) {
    traj.push_back(Tensor::scalar(p));
    scaled.push_back(Tensor::scalar(2 * p));
  }
  CHECK(path_straightness(traj) == doctest::Approx(want).epsilon(1e-12));
  CHECK(path_straightness(scaled) == doctest::Approx(path_straightness(traj)).epsilon(1e-12));
  CHECK_THROWS_AS(path_straightness({Tensor::scalar(1)}), ContractError);
  const auto j = trajectory_to_json(traj);
  CHECK(j.at("norms").size() == 4);
}

TEST_CASE("training step") {
  const DiTConfig cfg = tiny_dit();
  const NoiseSchedule sched = NoiseSchedule::linear();
  Rng rng(7);
  std::vector<LatentPair> batch;
  for (std::uint64_t i = 0; i < 3; ++i)
    batch.push_back({oracle::random_tensor({4, 6}, rng, false), oracle::random_tensor({4, 6}, rng, false), {0.1, 0.2, 0.3}, i});

  SUBCASE("fresh model loss is the mean squared noised displacement") {
    VelocityModel model(cfg, 1);
    FlowHyper h;
    auto params = model.params().tensors();
    AdamState adam = AdamState::for_params(params, {});
    const FlowStepOptions opt{4, 9, 1e-3, 1.0};
    const double loss = train_step(batch, model, adam, h, sched, opt);
    double want = 0;
    for (const auto& p : batch) {
      const std::uint64_t s = derive_seed(opt.seed, {opt.step, p.id});
      const Tensor noised = noise_augment(p.z0, h.t_aug_train, sched, s);
      want += mse(Tensor::zeros(p.z1.shape()), sub(p.z1, noised)).item() / batch.size();
    }
    CHECK(loss == doctest::Approx(want).epsilon(1e-12));
  }
  SUBCASE("identity coupling is already optimal") {
    VelocityModel model(cfg, 2);
    FlowHyper h;
    h.t_aug_train = 0;
    std::vector<LatentPair> same = batch;
    for (auto& p : same) p.z1 = p.z0;
    auto params = model.params().tensors();
    AdamState adam = AdamState::for_params(params, {});
    CHECK(train_step(same, model, adam, h, sched, {0, 1, 1e-3, 1.0}) == 0.0);
  }
  SUBCASE("evaluate_loss matches the pre-update loss and batch order does not matter") {
    VelocityModel a(cfg, 3), b(cfg, 3);
    FlowHyper h;
    const FlowStepOptions opt{2, 5, 1e-3, 1.0};
    const double ev = evaluate_loss(batch, a, h, sched, opt);
    auto pa = a.params().tensors();
    AdamState adam = AdamState::for_params(pa, {});
    CHECK(train_step(batch, a, adam, h, sched, opt) == doctest::Approx(ev).epsilon(1e-14));
    std::vector<LatentPair> reversed(batch.rbegin(), batch.rend());
    CHECK(evaluate_loss(reversed, b, h, sched, opt) == doctest::Approx(ev).epsilon(1e-14));
  }
  SUBCASE("single-pair overfit") {
    VelocityModel model(cfg, 4);
    FlowHyper h;
    h.t_aug_train = 0;
    h.cond_dropout = 0.0;
    auto params = model.params().tensors();
    AdamState adam = AdamState::for_params(params, {});
    const std::vector<LatentPair> one{batch[0]};
    const double first = evaluate_loss(one, model, h, sched, {0, 1, 1e-3, 1.0});
    for (std::uint64_t step = 0; step < 1000; ++step) train_step(one, model, adam, h, sched, {step, 1, 3e-3, 1.0});
    CHECK(evaluate_loss(one, model, h, sched, {1000, 1, 1e-3, 1.0}) < 0.01 * first);
  }
  SUBCASE("always-dropped condition makes both predictions coincide") {
    VelocityModel model(cfg, 5);
    FlowHyper h;
    h.cond_dropout = 1.0;
    auto params = model.params().tensors();
    AdamState adam = AdamState::for_params(params, {});
    for (std::uint64_t step = 0; step < 50; ++step) train_step(batch, model, adam, h, sched, {step, 1, 1e-3, 1.0});
    // cond.proj never receives gradient, so it stays at zero.
    const Tensor proj = model.params().find("cond.proj.weight");
    for (double v : proj.data()) CHECK(v == 0.0);
    const VelocityField f = model_field(model, {0.7, -0.3, 0.9});
    const Tensor z = batch[1].z0;
    CHECK(bit_equal(f(z, 0.3, true), f(z, 0.3, false)));
  }
}

TEST_CASE("hyperparameter validation") {
  FlowHyper h;
  h.num_steps = 0;
  CHECK_THROWS_AS(h.validate(1000), ConfigError);
  h = FlowHyper{};
  h.t_aug_train = 2000;
  CHECK_THROWS_AS(h.validate(1000), ConfigError);
  h = FlowHyper{};
  h.cond_dropout = 1.5;
  CHECK_THROWS_AS(h.validate(1000), ConfigError);
}
