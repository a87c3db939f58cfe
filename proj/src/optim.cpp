#include "vecflow/optim.hpp"

#include <cmath>
#include <numbers>

namespace vecflow {

AdamState AdamState::for_params(const std::vector<Tensor>& params, AdamHyper hyper) {
  AdamState s;
  s.hyper = hyper;
  for (const auto& p : params) {
    s.m.emplace_back(p.numel(), 0.0);
    s.v.emplace_back(p.numel(), 0.0);
  }
  return s;
}

namespace {

void check_state(const std::vector<Tensor>& params, const AdamState& state) {
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw ContractError("adam_step: state tracks " + std::to_string(state.m.size()) + " parameters, got " +
                        std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (state.m[i].size() != params[i].numel() || state.v[i].size() != params[i].numel()) {
      throw ContractError("adam_step: moment length mismatch for parameter " + std::to_string(i));
    }
  }
}

void update_one(std::span<double> p, std::span<const double> g, std::vector<double>& m, std::vector<double>& v,
                const AdamHyper& h, double bc1, double bc2) {
  for (std::size_t j = 0; j < p.size(); ++j) {
    m[j] = h.beta1 * m[j] + (1.0 - h.beta1) * g[j];
    v[j] = h.beta2 * v[j] + (1.0 - h.beta2) * g[j] * g[j];
    const double mhat = m[j] / bc1;
    const double vhat = v[j] / bc2;
    p[j] -= h.lr * mhat / (std::sqrt(vhat) + h.eps);
  }
}

}  // namespace

void adam_step(std::vector<Tensor>& params, AdamState& state) {
  check_state(params, state);
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(state.hyper.beta1, t);
  const double bc2 = 1.0 - std::pow(state.hyper.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    update_one(params[i].mutable_data(), params[i].grad(), state.m[i], state.v[i], state.hyper, bc1, bc2);
  }
}

void adam_step(std::vector<Tensor>& params, const std::vector<std::vector<double>>& grads, AdamState& state) {
  check_state(params, state);
  if (grads.size() != params.size()) throw ContractError("adam_step: gradient count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].size() != params[i].numel()) throw ContractError("adam_step: gradient length mismatch");
  }
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(state.hyper.beta1, t);
  const double bc2 = 1.0 - std::pow(state.hyper.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    update_one(params[i].mutable_data(), grads[i], state.m[i], state.v[i], state.hyper, bc1, bc2);
  }
}

double clip_grad_norm(std::vector<Tensor>& params, double max_norm) {
  double sq = 0.0;
  for (auto& p : params) {
    if (!p.has_grad()) continue;
    for (double g : p.grad()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double k = max_norm / norm;
    for (auto& p : params) {
      if (!p.has_grad()) continue;
      for (auto& g : p.mutable_grad()) g *= k;
    }
  }
  return norm;
}

double LrSchedule::at(std::uint64_t step) const {
  if (warmup_steps > 0 && step < warmup_steps) {
    const double f = static_cast<double>(step) / static_cast<double>(warmup_steps);
    return start_lr + (peak_lr - start_lr) * f;
  }
  if (total_steps <= warmup_steps) return peak_lr;
  const double span = static_cast<double>(total_steps - warmup_steps);
  const double f = std::min(1.0, static_cast<double>(step - warmup_steps) / span);
  const double cosine = 0.5 * (1.0 + std::cos(std::numbers::pi * f));
  return peak_lr * (final_frac + (1.0 - final_frac) * cosine);
}

}  // namespace vecflow
