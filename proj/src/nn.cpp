#include "vecflow/nn.hpp"

#include <cmath>

namespace vecflow {

Tensor ParameterSet::add(std::string name, Tensor value) {
  for (const auto& [existing, _] : items_) {
    if (existing == name) throw ContractError("duplicate parameter name: " + name);
  }
  items_.emplace_back(std::move(name), value);
  return value;
}

std::vector<Tensor> ParameterSet::tensors() const {
  std::vector<Tensor> out;
  out.reserve(items_.size());
  for (const auto& [_, t] : items_) out.push_back(t);
  return out;
}

Tensor ParameterSet::find(const std::string& name) const {
  for (const auto& [n, t] : items_) {
    if (n == name) return t;
  }
  throw ContractError("unknown parameter: " + name);
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [_, t] : items_) n += t.numel();
  return n;
}

void ParameterSet::zero_grad() {
  for (auto& [_, t] : items_) t.zero_grad();
}

Linear Linear::create(ParameterSet& params, const std::string& name, std::size_t in, std::size_t out, Rng& rng,
                      Init init) {
  Linear l;
  l.weight = params.add(name + ".weight", Tensor::zeros({in, out}, true));
  l.bias = params.add(name + ".bias", Tensor::zeros({out}, true));
  if (init == Init::Xavier) {
    const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
    for (auto& w : l.weight.mutable_data()) w = rng.uniform(-bound, bound);
  }
  return l;
}

LayerNorm LayerNorm::create(ParameterSet& params, const std::string& name, std::size_t width) {
  return {params.add(name + ".gamma", Tensor::full({width}, 1.0, true)),
          params.add(name + ".beta", Tensor::zeros({width}, true))};
}

MultiHeadAttention MultiHeadAttention::create(ParameterSet& params, const std::string& name, std::size_t width,
                                              std::size_t kv_width, std::size_t heads, Rng& rng) {
  if (heads == 0 || width % heads != 0) {
    throw ContractError(name + ": width " + std::to_string(width) + " not divisible by heads " + std::to_string(heads));
  }
  MultiHeadAttention a;
  a.to_q = Linear::create(params, name + ".q", width, width, rng);
  a.to_k = Linear::create(params, name + ".k", kv_width, width, rng);
  a.to_v = Linear::create(params, name + ".v", kv_width, width, rng);
  a.to_out = Linear::create(params, name + ".out", width, width, rng);
  a.heads = heads;
  return a;
}

Tensor MultiHeadAttention::operator()(const Tensor& queries, const Tensor& context) const {
  if (context.cols() != to_k.in_width()) {
    throw ContractError("attention: context width " + std::to_string(context.cols()) + " != " +
                        std::to_string(to_k.in_width()));
  }
  const Tensor q = to_q(queries), k = to_k(context), v = to_v(context);
  if (heads == 1) return to_out(attention(q, k, v));
  const std::size_t dh = q.cols() / heads;
  std::vector<Tensor> outs;
  outs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    outs.push_back(attention(slice_cols(q, h * dh, dh), slice_cols(k, h * dh, dh), slice_cols(v, h * dh, dh)));
  }
  return to_out(concat_cols(outs));
}

FeedForward FeedForward::create(ParameterSet& params, const std::string& name, std::size_t width, std::size_t hidden,
                                Rng& rng, Init out_init) {
  return {Linear::create(params, name + ".fc1", width, hidden, rng),
          Linear::create(params, name + ".fc2", hidden, width, rng, out_init)};
}

}  // namespace vecflow
