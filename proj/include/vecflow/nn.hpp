#pragma once

#include <string>
#include <utility>
#include <vector>

#include "vecflow/rng.hpp"
#include "vecflow/tensor.hpp"

namespace vecflow {

// Ordered, named collection of trainable tensors. Order is registration order
// and is what checkpoints and the optimizer iterate over.
class ParameterSet {
 public:
  Tensor add(std::string name, Tensor value);
  const std::vector<std::pair<std::string, Tensor>>& items() const { return items_; }
  std::vector<Tensor> tensors() const;
  Tensor find(const std::string& name) const;
  std::size_t scalar_count() const;
  void zero_grad();

 private:
  std::vector<std::pair<std::string, Tensor>> items_;
};

enum class Init { Xavier, Zero };

struct Linear {
  Tensor weight;  // [in, out]
  Tensor bias;    // [out]

  static Linear create(ParameterSet& params, const std::string& name, std::size_t in, std::size_t out, Rng& rng,
                       Init init = Init::Xavier);
  Tensor operator()(const Tensor& x) const { return add_row(matmul(x, weight), bias); }
  std::size_t in_width() const { return weight.dim(0); }
  std::size_t out_width() const { return weight.dim(1); }
};

struct LayerNorm {
  Tensor gamma;
  Tensor beta;

  static LayerNorm create(ParameterSet& params, const std::string& name, std::size_t width);
  Tensor operator()(const Tensor& x) const { return layer_norm(x, gamma, beta); }
};

// Multi-head attention with separate query and key/value sources; the same
// module serves self-attention by passing the same tensor twice.
struct MultiHeadAttention {
  Linear to_q, to_k, to_v, to_out;
  std::size_t heads = 1;

  static MultiHeadAttention create(ParameterSet& params, const std::string& name, std::size_t width,
                                   std::size_t kv_width, std::size_t heads, Rng& rng);
  Tensor operator()(const Tensor& queries, const Tensor& context) const;
};

// Two-layer GELU MLP.
struct FeedForward {
  Linear fc1, fc2;

  static FeedForward create(ParameterSet& params, const std::string& name, std::size_t width, std::size_t hidden,
                            Rng& rng, Init out_init = Init::Xavier);
  Tensor operator()(const Tensor& x) const { return fc2(gelu(fc1(x))); }
};

}  // namespace vecflow
