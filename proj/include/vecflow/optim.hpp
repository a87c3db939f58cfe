#pragma once

#include <cstdint>
#include <vector>

#include "vecflow/tensor.hpp"

namespace vecflow {

struct AdamHyper {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::uint64_t step = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  AdamHyper hyper;

  static AdamState for_params(const std::vector<Tensor>& params, AdamHyper hyper);
};

// One bias-corrected Adam update using each parameter's accumulated gradient.
// Parameters without a gradient are treated as having zero gradient.
void adam_step(std::vector<Tensor>& params, AdamState& state);

// Same update with explicit gradient arrays (one per parameter).
void adam_step(std::vector<Tensor>& params, const std::vector<std::vector<double>>& grads, AdamState& state);

// Rescales all gradients so their joint L2 norm is at most max_norm. Returns the
// norm before clipping.
double clip_grad_norm(std::vector<Tensor>& params, double max_norm);

// Linear warm-up from start_lr to peak_lr, then cosine decay to final_frac*peak.
struct LrSchedule {
  double peak_lr = 1e-3;
  double start_lr = 1e-6;
  std::uint64_t warmup_steps = 0;
  std::uint64_t total_steps = 0;  // 0 disables decay
  double final_frac = 0.1;

  double at(std::uint64_t step) const;
};

}  // namespace vecflow
