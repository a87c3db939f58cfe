#pragma once

#include <cstdint>
#include <vector>

#include "json.hpp"
#include "vecflow/geometry.hpp"
#include "vecflow/nn.hpp"
#include "vecflow/sampling.hpp"

namespace vecflow {

struct VaeConfig {
  std::size_t width = 64;         // transformer width D
  std::size_t latent_width = 64;  // token width D_lat
  std::size_t heads = 4;
  std::size_t decoder_blocks = 2;
  std::size_t num_frequencies = 8;  // Fourier octaves L
  std::size_t ffn_mult = 4;
  double beta_kl = 1e-6;
  double init_logvar = -6.0;  // bias of the log-variance head at initialization

  void validate() const;
};

void to_json(nlohmann::json& j, const VaeConfig& c);
void from_json(const nlohmann::json& j, VaeConfig& c);

// [n x 3] tensor from a cloud.
Tensor points_tensor(const PointCloud& cloud, bool requires_grad = false);

// Fourier features [p, sin(2^j pi p), cos(2^j pi p)]_{j<L} followed by a
// learnable affine projection to the model width.
struct PosEmbed {
  Linear proj;
  std::size_t num_frequencies = 0;

  static PosEmbed create(ParameterSet& params, const std::string& name, std::size_t num_frequencies,
                         std::size_t width, Rng& rng);
  static std::size_t feature_width(std::size_t num_frequencies) { return 3 + 6 * num_frequencies; }
  Tensor features(const Tensor& points) const;
  Tensor operator()(const Tensor& points) const { return proj(features(points)); }
};

// Variational latent token set, rows aligned with anchors.
struct LatentSet {
  Tensor tokens;  // [M x D_lat]
  Tensor mean;
  Tensor logvar;
  QuerySet anchors;
};

enum class EncodeMode { Deterministic, Sampled };

// Point-set VAE. The encoder is a single cross-attention layer from the query
// anchors into the full surface cloud; the decoder runs self-attention blocks
// over the latent tokens and lets arbitrary positions cross-attend into them
// to regress signed distance.
class ShapeVae {
 public:
  ShapeVae(const VaeConfig& config, std::uint64_t seed);
  ShapeVae(const ShapeVae&) = delete;
  ShapeVae& operator=(const ShapeVae&) = delete;

  const VaeConfig& config() const { return config_; }
  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }

  // Tensor-level passes (differentiable with respect to parameters and, if
  // flagged, the point tensors).
  struct Moments {
    Tensor mean;
    Tensor logvar;
  };
  Moments encode_moments(const Tensor& surface, const Tensor& queries) const;
  Tensor reparameterize(const Moments& moments, std::uint64_t seed) const;
  Tensor decode_tensor(const Tensor& tokens, const Tensor& positions) const;  // [n x 1]

  LatentSet encode(const PointCloud& surface, const QuerySet& queries, EncodeMode mode, std::uint64_t seed = 0) const;
  std::vector<double> decode(const Tensor& tokens, const PointCloud& positions) const;
  std::vector<double> decode(const LatentSet& latent, const PointCloud& positions) const {
    return decode(latent.tokens, positions);
  }

  // Sets the output head to zero so every prediction is exactly 0.
  void zero_output_head();

 private:
  VaeConfig config_;
  ParameterSet params_;

  PosEmbed enc_embed_;
  LayerNorm enc_norm_q_, enc_norm_kv_, enc_norm_ff_;
  MultiHeadAttention enc_attn_;
  FeedForward enc_ff_;
  Linear mean_head_, logvar_head_;

  Linear dec_in_;
  struct Block {
    LayerNorm norm_attn, norm_ff;
    MultiHeadAttention attn;
    FeedForward ff;
  };
  std::vector<Block> dec_blocks_;
  PosEmbed dec_embed_;
  LayerNorm dec_norm_q_, dec_norm_kv_, dec_norm_ff_, dec_norm_out_;
  MultiHeadAttention dec_cross_;
  FeedForward dec_ff_;
  Linear head_;
};

// Mean over all entries of 0.5 (mu^2 + exp(logvar) - 1 - logvar).
Tensor kl_divergence(const Tensor& mean, const Tensor& logvar);

// MSE(pred, truth) + beta_kl * KL(mean, logvar).
Tensor vae_loss(const Tensor& pred_sdf, const Tensor& true_sdf, const Tensor& mean, const Tensor& logvar,
                double beta_kl);

}  // namespace vecflow
