#include "vecflow/flow.hpp"

#include <cmath>

#include "vecflow/errors.hpp"
#include "vecflow/rng.hpp"

namespace vecflow {

NoiseSchedule NoiseSchedule::linear(std::size_t T, double beta_start, double beta_end) {
  if (T == 0) throw ContractError("NoiseSchedule: T must be positive");
  NoiseSchedule s;
  s.T = T;
  s.betas.resize(T);
  s.alpha_bars.resize(T + 1);
  s.alpha_bars[0] = 1.0;
  for (std::size_t i = 0; i < T; ++i) {
    const double frac = T == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(T - 1);
    s.betas[i] = beta_start + (beta_end - beta_start) * frac;
    s.alpha_bars[i + 1] = s.alpha_bars[i] * (1.0 - s.betas[i]);
  }
  return s;
}

void FlowHyper::validate(std::size_t T) const {
  if (t_aug_train > T) throw ConfigError("flow.hyper.t_aug_train: must be <= " + std::to_string(T));
  if (t_aug_infer > T) throw ConfigError("flow.hyper.t_aug_infer: must be <= " + std::to_string(T));
  if (num_steps == 0) throw ConfigError("flow.hyper.num_steps: must be >= 1");
  if (!(cfg_scale >= 0.0)) throw ConfigError("flow.hyper.cfg_scale: must be >= 0");
  if (!(cond_dropout >= 0.0 && cond_dropout <= 1.0)) throw ConfigError("flow.hyper.cond_dropout: must lie in [0, 1]");
  if (!(sigma_min >= 0.0)) throw ConfigError("flow.hyper.sigma_min: must be >= 0");
}

void to_json(nlohmann::json& j, const FlowHyper& h) {
  j = {{"sigma_min", h.sigma_min}, {"t_aug_train", h.t_aug_train}, {"t_aug_infer", h.t_aug_infer},
       {"num_steps", h.num_steps}, {"cfg_scale", h.cfg_scale},     {"cond_dropout", h.cond_dropout}};
}

void from_json(const nlohmann::json& j, FlowHyper& h) {
  h.sigma_min = j.at("sigma_min");
  h.t_aug_train = j.at("t_aug_train");
  h.t_aug_infer = j.at("t_aug_infer");
  h.num_steps = j.at("num_steps");
  h.cfg_scale = j.at("cfg_scale");
  h.cond_dropout = j.at("cond_dropout");
}

Tensor interpolate(const Tensor& z0, const Tensor& z1, double t) {
  if (z0.shape() != z1.shape()) {
    throw ShapeError("interpolate: " + shape_str(z0.shape()) + " vs " + shape_str(z1.shape()));
  }
  return add(scale(z0, 1.0 - t), scale(z1, t));
}

Tensor flow_loss(const Tensor& v_pred, const Tensor& z0, const Tensor& z1) {
  if (v_pred.shape() != z0.shape() || z0.shape() != z1.shape()) throw ShapeError("flow_loss: shape mismatch");
  return mse(v_pred, sub(z1, z0));
}

Tensor noise_augment(const Tensor& z0, std::size_t t_aug, const NoiseSchedule& schedule, std::uint64_t seed) {
  if (t_aug > schedule.T) throw ContractError("noise_augment: t_aug exceeds the schedule length");
  if (t_aug == 0) return z0;
  const double ab = schedule.alpha_bars[t_aug];
  const double a = std::sqrt(ab), b = std::sqrt(1.0 - ab);
  Rng rng(derive_seed(seed, {0xa06}));
  std::vector<double> out(z0.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a * z0[i] + b * rng.normal();
  return Tensor::from(z0.shape(), std::move(out));
}

namespace {

Tensor batch_loss(const std::vector<LatentPair>& batch, const VelocityModel& model, const FlowHyper& hyper,
                  const NoiseSchedule& schedule, const FlowStepOptions& options) {
  if (batch.empty()) throw ContractError("train_step: empty batch");
  Tensor total;
  for (const auto& pair : batch) {
    const std::uint64_t s = derive_seed(options.seed, {options.step, pair.id});
    Rng rng(s);
    const double t = rng.uniform();
    const bool drop = rng.uniform() < hyper.cond_dropout;
    const Tensor z0 = noise_augment(pair.z0, hyper.t_aug_train, schedule, s);
    const Tensor y = drop ? model.null_tokens() : model.condition_tokens(pair.cond);
    const Tensor v = model.predict(interpolate(z0, pair.z1, t), t, y);
    const Tensor l = flow_loss(v, z0, pair.z1);
    total = total.defined() ? add(total, l) : l;
  }
  return scale(total, 1.0 / static_cast<double>(batch.size()));
}

}  // namespace

double train_step(const std::vector<LatentPair>& batch, VelocityModel& model, AdamState& adam,
                  const FlowHyper& hyper, const NoiseSchedule& schedule, const FlowStepOptions& options) {
  model.params().zero_grad();
  const Tensor loss = batch_loss(batch, model, hyper, schedule, options);
  const double value = loss.item();
  backward(loss);
  auto params = model.params().tensors();
  if (options.grad_clip > 0) clip_grad_norm(params, options.grad_clip);
  adam.hyper.lr = options.lr;
  adam_step(params, adam);
  return value;
}

double evaluate_loss(const std::vector<LatentPair>& batch, const VelocityModel& model, const FlowHyper& hyper,
                     const NoiseSchedule& schedule, const FlowStepOptions& options) {
  NoGradGuard guard;
  return batch_loss(batch, model, hyper, schedule, options).item();
}

VelocityField model_field(const VelocityModel& model, const std::vector<double>& cond) {
  const Tensor y_cond = model.condition_tokens(cond).detach();
  const Tensor y_null = model.null_tokens().detach();
  return [&model, y_cond, y_null](const Tensor& z, double t, bool conditional) {
    return model.predict(z, t, conditional ? y_cond : y_null);
  };
}

Tensor sample(const Tensor& z0, const VelocityField& field, const FlowHyper& hyper, const NoiseSchedule& schedule,
              const SampleOptions& options) {
  if (hyper.num_steps == 0) throw ContractError("sample: num_steps must be >= 1");
  NoGradGuard guard;
  Tensor z = options.use_noise_aug ? noise_augment(z0, hyper.t_aug_infer, schedule, options.seed) : z0;
  if (options.trajectory) {
    options.trajectory->clear();
    options.trajectory->push_back(z);
  }
  const double dt = 1.0 / static_cast<double>(hyper.num_steps);
  for (std::size_t k = 0; k < hyper.num_steps; ++k) {
    const double t = static_cast<double>(k) * dt;
    Tensor v = field(z, t, true);
    if (hyper.cfg_scale != 1.0) {
      const Tensor v_null = field(z, t, false);
      v = add(v_null, scale(sub(v, v_null), hyper.cfg_scale));
    }
    if (v.shape() != z.shape()) throw ShapeError("sample: velocity shape " + shape_str(v.shape()));
    z = add(z, scale(v, dt));
    if (options.trajectory) options.trajectory->push_back(z);
  }
  return z;
}

double path_straightness(const std::vector<Tensor>& trajectory) {
  if (trajectory.size() < 2) throw ContractError("path_straightness: need at least 2 states");
  const std::size_t steps = trajectory.size() - 1;
  const Tensor& first = trajectory.front();
  const Tensor& last = trajectory.back();
  const std::size_t n = first.numel();
  for (const auto& s : trajectory) {
    if (s.numel() != n) throw ShapeError("path_straightness: states differ in size");
  }
  double denom = 0.0;
  for (std::size_t i = 0; i < n; ++i) denom += (last[i] - first[i]) * (last[i] - first[i]);
  double total = 0.0;
  for (std::size_t k = 0; k < steps; ++k) {
    double dev = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double v = (trajectory[k + 1][i] - trajectory[k][i]) * static_cast<double>(steps);
      const double d = v - (last[i] - first[i]);
      dev += d * d;
    }
    total += dev;
  }
  if (denom == 0.0) {
    if (total == 0.0) return 0.0;
    throw ContractError("path_straightness: closed trajectory has no net displacement");
  }
  return total / (static_cast<double>(steps) * denom);
}

nlohmann::json trajectory_to_json(const std::vector<Tensor>& trajectory) {
  nlohmann::json norms = nlohmann::json::array();
  for (const auto& s : trajectory) {
    double acc = 0.0;
    for (double v : s.data()) acc += v * v;
    norms.push_back(std::sqrt(acc));
  }
  nlohmann::json j = {{"norms", norms}};
  j["straightness"] = trajectory.size() >= 2 ? path_straightness(trajectory) : 0.0;
  return j;
}

}  // namespace vecflow
