#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "json.hpp"
#include "vecflow/optim.hpp"
#include "vecflow/refiner.hpp"
#include "vecflow/tensor.hpp"

namespace vecflow {

// DDPM linear beta schedule. alpha_bars has T+1 entries with alpha_bars[0] = 1.
struct NoiseSchedule {
  std::size_t T = 0;
  std::vector<double> betas;       // betas[i] for step i+1
  std::vector<double> alpha_bars;  // cumulative product up to step t

  static NoiseSchedule linear(std::size_t T = 1000, double beta_start = 1e-4, double beta_end = 0.02);
};

struct FlowHyper {
  double sigma_min = 1e-5;  // kept for reference; the training target is deterministic
  std::size_t t_aug_train = 400;
  std::size_t t_aug_infer = 100;
  std::size_t num_steps = 25;
  double cfg_scale = 2.0;
  double cond_dropout = 0.1;

  void validate(std::size_t T) const;
};

void to_json(nlohmann::json& j, const FlowHyper& h);
void from_json(const nlohmann::json& j, FlowHyper& h);

// (1 - t) z0 + t z1
Tensor interpolate(const Tensor& z0, const Tensor& z1, double t);

// MSE between v_pred and z1 - z0.
Tensor flow_loss(const Tensor& v_pred, const Tensor& z0, const Tensor& z1);

// sqrt(abar[t]) z0 + sqrt(1 - abar[t]) eps.
Tensor noise_augment(const Tensor& z0, std::size_t t_aug, const NoiseSchedule& schedule, std::uint64_t seed);

struct LatentPair {
  Tensor z0;  // coarse tokens
  Tensor z1;  // fine tokens
  std::vector<double> cond;
  std::uint64_t id = 0;  // stable per-pair key for the random streams
};

struct FlowStepOptions {
  std::uint64_t step = 0;
  std::uint64_t seed = 0;
  double lr = 1e-3;
  double grad_clip = 1.0;  // <= 0 disables clipping
};

// One optimization step over a batch. Per pair: t ~ U[0,1], z0 noised at
// t_aug_train, condition replaced by the null tokens with probability
// cond_dropout, target z1 - noised z0. The random stream of each pair depends
// only on (seed, step, id). Returns the batch loss before the update.
double train_step(const std::vector<LatentPair>& batch, VelocityModel& model, AdamState& adam,
                  const FlowHyper& hyper, const NoiseSchedule& schedule, const FlowStepOptions& options);

// Batch loss without an update, using the same random draws as train_step.
double evaluate_loss(const std::vector<LatentPair>& batch, const VelocityModel& model, const FlowHyper& hyper,
                     const NoiseSchedule& schedule, const FlowStepOptions& options);

// Velocity oracle used by the sampler: (z, t, conditional) -> v.
using VelocityField = std::function<Tensor(const Tensor& z, double t, bool conditional)>;

VelocityField model_field(const VelocityModel& model, const std::vector<double>& cond);

struct SampleOptions {
  bool use_noise_aug = true;
  std::uint64_t seed = 0;
  std::vector<Tensor>* trajectory = nullptr;  // receives num_steps + 1 states when set
};

// Explicit Euler from t = 0 to 1 with classifier-free guidance.
Tensor sample(const Tensor& z0, const VelocityField& field, const FlowHyper& hyper, const NoiseSchedule& schedule,
              const SampleOptions& options);

// Mean over steps of |v_k - (z_end - z_start)|^2 / |z_end - z_start|^2 where
// v_k = (z_{k+1} - z_k) * steps.
double path_straightness(const std::vector<Tensor>& trajectory);

// {"norms": [...per state L2 norm...], "straightness": x}
nlohmann::json trajectory_to_json(const std::vector<Tensor>& trajectory);

}  // namespace vecflow
