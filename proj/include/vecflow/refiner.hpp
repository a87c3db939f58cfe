#pragma once

#include <cstdint>
#include <vector>

#include "json.hpp"
#include "vecflow/nn.hpp"

namespace vecflow {

// Reference sizes of the full-scale model; desk runs use the defaults below.
inline constexpr std::size_t kReferenceBlocks = 24;
inline constexpr std::size_t kReferenceWidth = 768;
inline constexpr std::size_t kReferenceHeads = 12;
inline constexpr std::size_t kReferenceLatentLength = 2048;

struct DiTConfig {
  std::size_t num_blocks = 4;
  std::size_t width = 64;
  std::size_t heads = 4;
  std::size_t latent_len = 32;    // M
  std::size_t latent_width = 64;  // D_lat of the incoming tokens
  std::size_t cond_tokens = 4;    // K
  std::size_t cond_width = 64;
  std::size_t cond_dim = 20;      // length of the raw condition vector
  std::size_t time_freq_dim = 64;
  std::size_t ffn_mult = 4;

  void validate() const;
};

void to_json(nlohmann::json& j, const DiTConfig& c);
void from_json(const nlohmann::json& j, DiTConfig& c);

// x * (1 + gamma) + s with s and gamma broadcast over rows.
Tensor modulate(const Tensor& x, const Tensor& s, const Tensor& gamma);

// Sinusoidal features of 1000 t (half cosines, half sines).
std::vector<double> timestep_features(double t, std::size_t dim);

struct DiTBlock {
  Linear ada;  // gelu(t_embed) -> 9D: (s, gamma, g) for msa, mca, ffn
  MultiHeadAttention self_attn, cross_attn;
  FeedForward ff;

  Tensor operator()(const Tensor& z, const Tensor& y, const Tensor& t_embed) const;
};

class VelocityModel {
 public:
  VelocityModel(const DiTConfig& config, std::uint64_t seed);
  VelocityModel(const VelocityModel&) = delete;
  VelocityModel& operator=(const VelocityModel&) = delete;

  const DiTConfig& config() const { return config_; }
  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }
  const std::vector<DiTBlock>& blocks() const { return blocks_; }

  // [1 x D]
  Tensor time_embedding(double t) const;

  // Condition vector -> [K x cond_width] tokens. The learned null token is the
  // base row, so an all-dropped condition is null_tokens().
  Tensor condition_tokens(const std::vector<double>& cond) const;
  Tensor null_tokens() const;

  // v(t, z_t, y); z_t is [M x D_lat] and y is [K x cond_width].
  Tensor predict(const Tensor& z_t, double t, const Tensor& y) const;

 private:
  DiTConfig config_;
  ParameterSet params_;
  Linear time_fc1_, time_fc2_;
  Linear cond_proj_;
  Tensor null_token_;
  Linear in_proj_;
  std::vector<DiTBlock> blocks_;
  LayerNorm final_norm_;
  Linear out_proj_;
};

}  // namespace vecflow
