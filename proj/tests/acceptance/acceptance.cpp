// Acceptance run: prints one PASS/FAIL line per criterion and exits nonzero if
// any criterion fails. Heavy criteria (VAE overfit, end-to-end experiment,
// ablations) train real models; their artifacts land in --work.
#include <chrono>
#include <cstdarg>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "oracles.hpp"
#include "vecflow/config.hpp"
#include "vecflow/dataset.hpp"
#include "vecflow/flow.hpp"
#include "vecflow/meshing.hpp"
#include "vecflow/pipeline.hpp"
#include "vecflow/sampling.hpp"

namespace fs = std::filesystem;
using namespace vecflow;
using nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

bool bit_equal(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() && std::equal(a.data().begin(), a.data().end(), b.data().begin());
}

double variance(const Tensor& t) {
  double m = 0, v = 0;
  for (double x : t.data()) m += x / static_cast<double>(t.numel());
  for (double x : t.data()) v += (x - m) * (x - m) / static_cast<double>(t.numel());
  return v;
}

Logger prefixed(const std::string& tag) {
  return [tag](const std::string& line) { std::cerr << "[" << tag << "] " << line << '\n'; };
}

// Settings for the training-based criteria, all derived from the run config.
constexpr std::size_t kOverfitShapes = 8;
constexpr std::size_t kOverfitSteps = 3000;
constexpr double kOverfitBudget = 600.0;
constexpr double kEndToEndBudget = 7200.0;

class Acceptance {
 public:
  Acceptance(RunConfig config, fs::path work) : config_(std::move(config)), work_(std::move(work)) {
    fs::create_directories(work_);
    write_json(work_ / "config.json", config_to_json(config_));
  }

  Outcome gradients();
  Outcome flow_algebra();
  Outcome sampler();
  Outcome identity_at_init();
  Outcome noise_augmentation();
  Outcome token_matching();
  Outcome meshing();
  Outcome vae_overfit();
  Outcome end_to_end();
  Outcome ablations();

  json record;

 private:
  const Dataset& dataset();
  const ShapeVae& overfit_vae();
  struct Desk {
    std::unique_ptr<ShapeVae> vae;
    FlowBundle flow;
    FlowTrainResult flow_result;
    EvalReport report;
    double seconds = 0.0;
  };
  Desk& desk();
  FlowBundle train_variant(const std::string& pairing, bool noise_aug, FlowTrainResult& result);

  RunConfig config_;
  fs::path work_;
  std::optional<Dataset> dataset_;
  double dataset_seconds_ = 0.0;
  std::unique_ptr<ShapeVae> overfit_vae_;
  double overfit_mae_ = 0.0;
  double overfit_seconds_ = 0.0;
  std::unique_ptr<Desk> desk_;
};

Outcome Acceptance::gradients() {
  const auto t0 = Clock::now();
  const auto results = oracle::run_gradient_suite(20, 2024);
  const double secs = since(t0);
  double worst = 0.0;
  std::string worst_name;
  for (const auto& [name, err] : results) {
    record["gradients"][name] = err;
    if (err >= worst) {
      worst = err;
      worst_name = name;
    }
  }
  return {worst < 1e-4 && secs < 120.0,
          fmt("%zu operations x 20 instances, worst rel err %.2e (%s), %.1f s", results.size(), worst,
              worst_name.c_str(), secs)};
}

Outcome Acceptance::flow_algebra() {
  Rng rng(1);
  bool ok = true;
  for (int i = 0; i < 20; ++i) {
    const Tensor z0 = oracle::random_tensor({32, 8}, rng, false), z1 = oracle::random_tensor({32, 8}, rng, false);
    ok &= bit_equal(interpolate(z0, z1, 0.0), z0) && bit_equal(interpolate(z0, z1, 1.0), z1);
    ok &= flow_loss(sub(z1, z0), z0, z1).item() == 0.0;
    Tensor off = sub(z1, z0);
    off.mutable_data()[static_cast<std::size_t>(rng.integer(0, 255))] += 1e-6;
    ok &= flow_loss(off, z0, z1).item() > 0.0;
  }
  const Tensor mid = interpolate(Tensor::zeros({2, 3}), Tensor::full({2, 3}, 2.0), 0.5);
  bool mid_ok = true;
  for (double v : mid.data()) mid_ok &= v == 1.0;
  const double hand =
      flow_loss(Tensor::from({1, 2}, {1, 1}), Tensor::zeros({1, 2}), Tensor::from({1, 2}, {1, 3})).item();
  return {ok && mid_ok && hand == 2.0,
          fmt("endpoints exact and zero-iff-exact on 20 instances: %s; midpoint %s; hand case loss %.17g", ok ? "yes" : "no",
              mid_ok ? "exact" : "off", hand)};
}

Outcome Acceptance::sampler() {
  const NoiseSchedule sched = NoiseSchedule::linear();
  SampleOptions o;
  o.use_noise_aug = false;
  FlowHyper h;
  Rng rng(2);
  const Tensor z0 = oracle::random_tensor({8, 4}, rng, false);
  double const_err = 0.0;
  for (std::size_t n : {1u, 2u, 5u, 10u, 25u, 100u}) {
    h.num_steps = n;
    const Tensor z = sample(z0, [](const Tensor& z, double, bool) { return Tensor::full(z.shape(), 0.75); }, h, sched, o);
    for (std::size_t i = 0; i < z.numel(); ++i) const_err = std::max(const_err, std::abs(z[i] - (z0[i] + 0.75)));
  }
  auto endpoint_error = [&](std::size_t n) {
    h.num_steps = n;
    const Tensor z = sample(Tensor::zeros({1, 1}), [](const Tensor& z, double t, bool) { return Tensor::full(z.shape(), t); },
                            h, sched, o);
    return std::abs(z[0] - 0.5);
  };
  const double ratio = endpoint_error(10) / endpoint_error(20);

  DiTConfig small = config_.flow.dit;
  VelocityModel model(small, 7);
  for (auto& t : model.params().tensors())
    for (auto& v : t.mutable_data()) v += 0.05 * rng.normal();
  const std::vector<double> cond(small.cond_dim, 0.3);
  const Tensor zl = oracle::random_tensor({small.latent_len, small.latent_width}, rng, false);
  h.num_steps = 5;
  h.cfg_scale = 1.0;
  o.use_noise_aug = true;
  o.seed = 11;
  const Tensor guided = sample(zl, model_field(model, cond), h, sched, o);
  const Tensor y = model.condition_tokens(cond);
  const Tensor plain =
      sample(zl, [&](const Tensor& z, double t, bool) { return model.predict(z, t, y); }, h, sched, o);
  const bool same = bit_equal(guided, plain);
  return {const_err < 1e-12 && ratio >= 1.8 && ratio <= 2.2 && same,
          fmt("constant field max err %.1e over 1..100 steps; error ratio 10/20 steps %.4f; cfg=1 bit-identical: %s",
              const_err, ratio, same ? "yes" : "no")};
}

Outcome Acceptance::identity_at_init() {
  const ShapeVae& vae = overfit_vae();
  const Dataset& ds = dataset();
  const auto train = ds.split("train");
  const DatasetEntry& e = *train.front();
  const std::uint64_t seed = config_.seed;
  FlowBundle flow{std::make_unique<VelocityModel>(config_.flow.dit, seed),
                  LatentStats::fit(raw_latents(vae, train, "matched", seed)), config_.flow.hyper, seed};

  // Latent level: sampling the fresh model returns z0 bit for bit.
  FlowHyper h = config_.flow.hyper;
  SampleOptions so;
  so.use_noise_aug = false;
  const Tensor z0 = flow.stats.normalize(vae.encode(e.coarse_cloud, e.matching.coarse_queries, EncodeMode::Deterministic).tokens);
  const bool latent_same = bit_equal(sample(z0, model_field(*flow.model, e.cond), h, NoiseSchedule::linear(), so), z0);

  RefineSettings rs;
  rs.hyper = h;
  rs.use_noise_aug = false;
  rs.seed = seed;
  const CoarseInput coarse{e.coarse_cloud, Transform{}};
  const RefineResult refined = refine(vae, &flow, coarse, e.cond, config_.eval, config_.dataset.latent_len, rs);
  rs.mode = RefineMode::VaeRoundTrip;
  const RefineResult round = refine(vae, nullptr, coarse, e.cond, config_.eval, config_.dataset.latent_len, rs);
  if (round.mesh.empty() || refined.mesh.empty()) return {false, "round-trip mesh is empty"};
  PointCloud a, b;
  a.points = refined.mesh.vertices;
  b.points = round.mesh.vertices;
  const double cd = chamfer_distance(a, b);
  record["identity_chamfer"] = cd;
  return {latent_same && cd < 1e-6,
          fmt("fresh model returns z0 exactly: %s; refined vs VAE round-trip mesh Chamfer %.3e (%zu vertices)",
              latent_same ? "yes" : "no", cd, a.size())};
}

Outcome Acceptance::noise_augmentation() {
  const NoiseSchedule s = NoiseSchedule::linear();
  bool decreasing = s.alpha_bars[0] == 1.0;
  for (std::size_t t = 1; t <= s.T; ++t) decreasing &= s.alpha_bars[t] < s.alpha_bars[t - 1];
  Rng rng(3);
  const Tensor z0 = oracle::random_tensor({100, 100}, rng, false);
  const bool identity = bit_equal(noise_augment(z0, 0, s, 1), z0);
  double worst = std::abs(variance(noise_augment(Tensor::zeros({100, 100}), s.T, s, 2)) - 1.0);
  for (std::size_t t : {1u, 100u, 400u, 700u, 1000u})
    worst = std::max(worst, std::abs(variance(noise_augment(z0, t, s, 10 + t)) - 1.0));
  return {decreasing && identity && worst < 0.05,
          fmt("alpha_bars strictly decreasing: %s; t_aug=0 identity: %s; worst variance deviation %.2f%% on 1e4 elements",
              decreasing ? "yes" : "no", identity ? "yes" : "no", 100.0 * worst)};
}

Outcome Acceptance::token_matching() {
  const Dataset& ds = dataset();
  const DatasetEntry& e = ds.entries.front();
  const TokenMatching self = match_tokens(e.matching.fine_queries, e.matching.fine_queries.query_points);
  bool identity = duplicate_fraction(self) == 0.0;
  for (std::size_t i = 0; i < self.map.size(); ++i) identity &= self.map[i] == i;

  int wins = 0;
  for (std::uint64_t trial = 0; trial < 100; ++trial) {
    Rng rng(derive_seed(77, {trial}));
    PointCloud c;
    for (int i = 0; i < 512; ++i) c.points.push_back({rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5)});
    auto min_pair = [](const PointCloud& p) {
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < p.size(); ++i)
        for (std::size_t j = i + 1; j < p.size(); ++j) best = std::min(best, distance(p.points[i], p.points[j]));
      return best;
    };
    wins += min_pair(farthest_point_sampling(c, 64, 0).query_points) >=
            min_pair(random_downsample(c, 64, derive_seed(78, {trial})).query_points);
  }
  record["mean_duplicate_fraction"] = ds.mean_duplicate_fraction;
  record["fps_wins"] = wins;
  return {identity && ds.mean_duplicate_fraction < 0.05 && wins >= 95,
          fmt("identity coupling exact: %s; desk dataset (M=%zu, %zu shapes) mean duplicate fraction %.4f; FPS wins %d/100",
              identity ? "yes" : "no", config_.dataset.latent_len, ds.entries.size(), ds.mean_duplicate_fraction, wins)};
}

Outcome Acceptance::meshing() {
  const ShapeSpec sphere = ShapeSpec::sphere(0.4);
  const SdfGrid g = build_sdf_grid([&](const Vec3& p) { return eval_sdf(sphere, p); }, 64);
  const TriMesh m = marching_cubes(g);
  const double cell = g.cell_size().x;
  double worst = 0.0;
  for (const auto& v : m.vertices) worst = std::max(worst, std::abs(norm(v) - 0.4));
  const EdgeReport r = edge_report(m);
  const TriMesh plane = marching_cubes(build_sdf_grid([](const Vec3& p) { return p.z; }, 16));
  double plane_err = 0.0;
  for (const auto& v : plane.vertices) plane_err = std::max(plane_err, std::abs(v.z));
  return {r.watertight() && worst <= 1.5 * cell && !plane.empty() && plane_err < 1e-9,
          fmt("sphere R=64: %zu triangles, watertight %s, max radius error %.4f (%.2f cells); plane max |z| %.1e",
              m.triangles.size(), r.watertight() ? "yes" : "no", worst, worst / cell, plane_err)};
}

const Dataset& Acceptance::dataset() {
  if (!dataset_) {
    const auto t0 = Clock::now();
    dataset_ = generate_dataset(config_.dataset);
    dataset_seconds_ = since(t0);
    save_dataset(*dataset_, config_, work_ / "data");
    std::cerr << fmt("[data] %zu entries in %.1f s\n", dataset_->entries.size(), dataset_seconds_);
  }
  return *dataset_;
}

const ShapeVae& Acceptance::overfit_vae() {
  if (!overfit_vae_) {
    VaeTrainConfig t = config_.vae;
    t.steps = kOverfitSteps;
    t.max_shapes = kOverfitShapes;
    t.include_coarse = false;
    const auto shapes = vae_training_shapes(dataset(), t);
    overfit_vae_ = std::make_unique<ShapeVae>(t.model, config_.seed);
    VaeTrainOptions o;
    o.log = prefixed("overfit");
    const VaeTrainResult r = train_vae(*overfit_vae_, shapes, t, config_.seed, o);
    overfit_seconds_ = r.seconds;
    write_curve_csv(work_ / "overfit_vae_loss.csv", r.curve);
    double mae = 0.0;
    for (std::size_t i = 0; i < shapes.size(); ++i)
      mae += near_surface_mae(*overfit_vae_, shapes[i], config_.eval.mae_points, t.near_surface_band,
                              derive_seed(config_.seed, {0x0ae, i})) /
             static_cast<double>(shapes.size());
    overfit_mae_ = mae;
    record["overfit"] = {{"shapes", shapes.size()}, {"mae", mae}, {"seconds", r.seconds}};
  }
  return *overfit_vae_;
}

Outcome Acceptance::vae_overfit() {
  overfit_vae();
  return {overfit_mae_ < 0.02 && overfit_seconds_ < kOverfitBudget,
          fmt("%zu shapes, %zu steps: near-surface MAE %.4f in %.0f s (limits 0.02, %.0f s)", kOverfitShapes,
              kOverfitSteps, overfit_mae_, overfit_seconds_, kOverfitBudget)};
}

Acceptance::Desk& Acceptance::desk() {
  if (!desk_) {
    desk_ = std::make_unique<Desk>();
    Desk& d = *desk_;
    const auto t0 = Clock::now();
    const Dataset& ds = dataset();
    d.vae = std::make_unique<ShapeVae>(config_.vae.model, config_.seed);
    VaeTrainOptions vo;
    vo.log = prefixed("vae");
    vo.checkpoint = work_ / "vae_state.ckpt";
    vo.resume = false;
    const VaeTrainResult vr = train_vae(*d.vae, vae_training_shapes(ds, config_.vae), config_.vae, config_.seed, vo);
    write_curve_csv(work_ / "vae_loss.csv", vr.curve);
    save_vae(work_ / "vae", *d.vae, config_.seed);

    d.flow = train_variant(config_.flow.pairing, config_.flow.noise_aug, d.flow_result);
    save_flow(work_ / "flow", d.flow);
    write_curve_csv(work_ / "flow_loss.csv", d.flow_result.curve);

    EvalSettings es;
    es.hyper = d.flow.hyper;
    es.use_noise_aug = config_.flow.noise_aug;
    es.seed = config_.seed;
    es.log = prefixed("eval");
    d.report = evaluate(*d.vae, &d.flow, ds.split("test"), config_.eval, config_.dataset.latent_len, es);
    d.seconds = dataset_seconds_ + since(t0);
    write_eval_csv(work_ / "metrics.csv", d.report);
    std::ofstream(work_ / "summary.txt") << d.report.summary();

    double recon = 0.0;
    const auto test = ds.split("test");
    for (const auto* e : test)
      recon += near_surface_mae(*d.vae, {e->fine_cloud, e->matching.fine_queries, e->fine_shape()}, config_.eval.mae_points,
                                0.05, derive_seed(config_.seed, {0x3ec, e->id})) /
               static_cast<double>(test.size());
    record["desk"] = {{"vae_seconds", vr.seconds},
                      {"vae_final_loss", vr.losses.empty() ? 0.0 : vr.losses.back()},
                      {"heldout_fine_vae_mae", recon},
                      {"flow_seconds", d.flow_result.seconds},
                      {"flow_initial_loss", d.flow_result.initial_loss},
                      {"flow_final_loss", d.flow_result.final_loss},
                      {"mean_chamfer_coarse", d.report.mean_chamfer_coarse},
                      {"mean_chamfer_refined", d.report.mean_chamfer_refined},
                      {"mean_improvement", d.report.mean_improvement},
                      {"improved_fraction", d.report.improved_fraction},
                      {"mean_sdf_mae", d.report.mean_sdf_mae},
                      {"total_seconds", d.seconds}};
  }
  return *desk_;
}

FlowBundle Acceptance::train_variant(const std::string& pairing, bool noise_aug, FlowTrainResult& result) {
  Desk& d = *desk_;
  const auto train = dataset().split("train");
  FlowTrainConfig fc = config_.flow;
  fc.pairing = pairing;
  fc.noise_aug = noise_aug;
  FlowBundle b;
  b.seed = config_.seed;
  b.hyper = fc.hyper;
  b.stats = LatentStats::fit(raw_latents(*d.vae, train, pairing, config_.seed, config_.flow.anchor_draws));
  b.model = std::make_unique<VelocityModel>(fc.dit, config_.seed);
  const auto pairs = encode_pairs(*d.vae, train, b.stats, pairing, config_.seed, config_.flow.anchor_draws);
  FlowTrainOptions o;
  o.log = prefixed("flow " + pairing + (noise_aug ? "" : " no-aug"));
  result = train_flow(*b.model, pairs, fc, config_.seed, o);
  return b;
}

Outcome Acceptance::end_to_end() {
  const Desk& d = desk();
  const auto& r = d.report;
  return {r.improved_fraction >= 0.8 && r.mean_improvement >= 0.2 && d.seconds <= kEndToEndBudget,
          fmt("%zu held-out shapes: refined beats coarse on %.0f%%, mean improvement %.1f%% (chamfer %.5f -> %.5f), "
              "total %.0f s",
              r.rows.size(), 100.0 * r.improved_fraction, 100.0 * r.mean_improvement, r.mean_chamfer_coarse,
              r.mean_chamfer_refined, d.seconds)};
}

Outcome Acceptance::ablations() {
  Desk& d = desk();
  FlowTrainResult random_result;
  const std::string other = config_.flow.pairing == "matched" ? "random" : "matched";
  train_variant(other, config_.flow.noise_aug, random_result);
  write_curve_csv(work_ / ("flow_loss_" + other + ".csv"), random_result.curve);
  const double matched = config_.flow.pairing == "matched" ? d.flow_result.final_loss : random_result.final_loss;
  const double random = config_.flow.pairing == "matched" ? random_result.final_loss : d.flow_result.final_loss;

  FlowTrainResult plain_result;
  FlowBundle plain = train_variant(config_.flow.pairing, false, plain_result);
  write_curve_csv(work_ / "flow_loss_no_aug.csv", plain_result.curve);
  EvalSettings es;
  es.hyper = plain.hyper;
  es.use_noise_aug = false;
  es.seed = config_.seed;
  es.log = prefixed("eval no-aug");
  const EvalReport no_aug = evaluate(*d.vae, &plain, dataset().split("test"), config_.eval, config_.dataset.latent_len, es);
  write_eval_csv(work_ / "metrics_no_aug.csv", no_aug);
  const double delta = no_aug.mean_chamfer_refined - d.report.mean_chamfer_refined;
  record["ablation"] = {{"matched_final_loss", matched},
                        {"random_final_loss", random},
                        {"no_aug_final_loss", plain_result.final_loss},
                        {"no_aug_mean_chamfer_refined", no_aug.mean_chamfer_refined},
                        {"no_aug_mean_improvement", no_aug.mean_improvement},
                        {"no_aug_chamfer_delta", delta}};
  return {random > matched && std::isfinite(delta),
          fmt("final flow loss matched %.4f vs random pairing %.4f; without noise augmentation held-out Chamfer "
              "%.5f -> %.5f (delta %+.5f, %s)",
              matched, random, d.report.mean_chamfer_refined, no_aug.mean_chamfer_refined, delta,
              delta > 0 ? "worse without augmentation" : "better without augmentation")};
}

}  // namespace

int main(int argc, char** argv) {
  tune_allocator();
  CLI::App app{"acceptance criteria"};
  std::string config_path, work = "acceptance_work";
  std::vector<int> only;
  app.add_option("--config", config_path, "run config (desk experiment)");
  app.add_option("--work", work, "directory for artifacts");
  app.add_option("--only", only, "criteria to run (default all)")->check(CLI::Range(1, 10));
  CLI11_PARSE(app, argc, argv);

  RunConfig config;
  try {
    config = config_path.empty() ? config_from_json(json::object()) : load_config(config_path);
    config.validate();
  } catch (const std::exception& e) {
    std::cerr << "config: " << e.what() << '\n';
    return 2;
  }
  Acceptance acc(config, work);
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradient correctness", [&] { return acc.gradients(); }},
      {"flow algebra", [&] { return acc.flow_algebra(); }},
      {"sampler correctness", [&] { return acc.sampler(); }},
      {"identity at initialization", [&] { return acc.identity_at_init(); }},
      {"noise augmentation", [&] { return acc.noise_augmentation(); }},
      {"token matching", [&] { return acc.token_matching(); }},
      {"meshing", [&] { return acc.meshing(); }},
      {"VAE desk training", [&] { return acc.vae_overfit(); }},
      {"end-to-end desk experiment", [&] { return acc.end_to_end(); }},
      {"ablation echo", [&] { return acc.ablations(); }},
  };
  const std::set<int> selected(only.begin(), only.end());
  std::vector<std::string> lines;
  bool all = true;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!selected.empty() && !selected.count(id)) continue;
    Outcome o;
    const auto t0 = Clock::now();
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const std::string line = fmt("criterion %d (%s): %s - ", id, criteria[i].first.c_str(), o.pass ? "PASS" : "FAIL") + o.detail;
    acc.record["criteria"][std::to_string(id)] = {{"pass", o.pass}, {"detail", o.detail}, {"seconds", since(t0)}};
    write_json(fs::path(work) / "acceptance.json", acc.record);
    std::cout << line << std::endl;
    lines.push_back(line);
    all &= o.pass;
  }
  std::cout << "\nsummary\n";
  for (const auto& l : lines) std::cout << l << '\n';
  return all ? 0 : 1;
}
