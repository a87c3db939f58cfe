#include "vecflow/shape2vec.hpp"

#include <numbers>

#include "vecflow/errors.hpp"
#include "vecflow/rng.hpp"

namespace vecflow {

void VaeConfig::validate() const {
  if (width == 0 || latent_width == 0) throw ConfigError("vae.width: must be positive");
  if (heads == 0 || width % heads != 0) throw ConfigError("vae.heads: width must be divisible by heads");
  if (num_frequencies == 0) throw ConfigError("vae.num_frequencies: must be positive");
  if (ffn_mult == 0) throw ConfigError("vae.ffn_mult: must be positive");
  if (beta_kl < 0) throw ConfigError("vae.beta_kl: must be >= 0");
}

void to_json(nlohmann::json& j, const VaeConfig& c) {
  j = {{"width", c.width},     {"latent_width", c.latent_width},       {"heads", c.heads},
       {"decoder_blocks", c.decoder_blocks}, {"num_frequencies", c.num_frequencies}, {"ffn_mult", c.ffn_mult},
       {"beta_kl", c.beta_kl}, {"init_logvar", c.init_logvar}};
}

void from_json(const nlohmann::json& j, VaeConfig& c) {
  c.width = j.at("width");
  c.latent_width = j.at("latent_width");
  c.heads = j.at("heads");
  c.decoder_blocks = j.at("decoder_blocks");
  c.num_frequencies = j.at("num_frequencies");
  c.ffn_mult = j.at("ffn_mult");
  c.beta_kl = j.at("beta_kl");
  c.init_logvar = j.at("init_logvar");
}

Tensor points_tensor(const PointCloud& cloud, bool requires_grad) {
  std::vector<double> v;
  v.reserve(cloud.size() * 3);
  for (const auto& p : cloud.points) v.insert(v.end(), {p.x, p.y, p.z});
  return Tensor::from({cloud.size(), 3}, std::move(v), requires_grad);
}

PosEmbed PosEmbed::create(ParameterSet& params, const std::string& name, std::size_t num_frequencies,
                          std::size_t width, Rng& rng) {
  return {Linear::create(params, name, feature_width(num_frequencies), width, rng), num_frequencies};
}

Tensor PosEmbed::features(const Tensor& points) const {
  if (points.ndim() != 2 || points.cols() != 3) throw ShapeError("PosEmbed: expected [n x 3] points");
  const std::size_t L = num_frequencies;
  std::vector<double> freq(3 * 3 * L, 0.0);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t j = 0; j < L; ++j) freq[c * 3 * L + c * L + j] = std::ldexp(std::numbers::pi, static_cast<int>(j));
  const Tensor phases = matmul(points, Tensor::from({3, 3 * L}, std::move(freq)));
  return concat_cols({points, sin(phases), cos(phases)});
}

ShapeVae::ShapeVae(const VaeConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  Rng rng(derive_seed(seed, {0x7ae}));
  const std::size_t D = config_.width, Dl = config_.latent_width;
  enc_embed_ = PosEmbed::create(params_, "enc.embed", config_.num_frequencies, D, rng);
  enc_norm_q_ = LayerNorm::create(params_, "enc.norm_q", D);
  enc_norm_kv_ = LayerNorm::create(params_, "enc.norm_kv", D);
  enc_attn_ = MultiHeadAttention::create(params_, "enc.attn", D, D, config_.heads, rng);
  enc_norm_ff_ = LayerNorm::create(params_, "enc.norm_ff", D);
  enc_ff_ = FeedForward::create(params_, "enc.ff", D, config_.ffn_mult * D, rng);
  mean_head_ = Linear::create(params_, "enc.mean", D, Dl, rng);
  logvar_head_ = Linear::create(params_, "enc.logvar", D, Dl, rng, Init::Zero);
  for (auto& b : logvar_head_.bias.mutable_data()) b = config_.init_logvar;

  dec_in_ = Linear::create(params_, "dec.in", Dl, D, rng);
  for (std::size_t i = 0; i < config_.decoder_blocks; ++i) {
    const std::string n = "dec.block" + std::to_string(i);
    Block b;
    b.norm_attn = LayerNorm::create(params_, n + ".norm_attn", D);
    b.attn = MultiHeadAttention::create(params_, n + ".attn", D, D, config_.heads, rng);
    b.norm_ff = LayerNorm::create(params_, n + ".norm_ff", D);
    b.ff = FeedForward::create(params_, n + ".ff", D, config_.ffn_mult * D, rng);
    dec_blocks_.push_back(std::move(b));
  }
  dec_embed_ = PosEmbed::create(params_, "dec.embed", config_.num_frequencies, D, rng);
  dec_norm_q_ = LayerNorm::create(params_, "dec.norm_q", D);
  dec_norm_kv_ = LayerNorm::create(params_, "dec.norm_kv", D);
  dec_cross_ = MultiHeadAttention::create(params_, "dec.cross", D, D, config_.heads, rng);
  dec_norm_ff_ = LayerNorm::create(params_, "dec.norm_ff", D);
  dec_ff_ = FeedForward::create(params_, "dec.ff", D, D, rng);
  dec_norm_out_ = LayerNorm::create(params_, "dec.norm_out", D);
  head_ = Linear::create(params_, "dec.head", D, 1, rng);
}

ShapeVae::Moments ShapeVae::encode_moments(const Tensor& surface, const Tensor& queries) const {
  const Tensor q = enc_embed_(queries);
  const Tensor kv = enc_embed_(surface);
  Tensor h = add(q, enc_attn_(enc_norm_q_(q), enc_norm_kv_(kv)));
  h = add(h, enc_ff_(enc_norm_ff_(h)));
  return {mean_head_(h), logvar_head_(h)};
}

Tensor ShapeVae::reparameterize(const Moments& m, std::uint64_t seed) const {
  Rng rng(derive_seed(seed, {0xe95}));
  std::vector<double> eps(m.mean.numel());
  for (auto& e : eps) e = rng.normal();
  return add(m.mean, mul(exp(scale(m.logvar, 0.5)), Tensor::from(m.mean.shape(), std::move(eps))));
}

Tensor ShapeVae::decode_tensor(const Tensor& tokens, const Tensor& positions) const {
  if (tokens.ndim() != 2 || tokens.cols() != config_.latent_width) {
    throw ContractError("decode: latent width " + std::to_string(tokens.cols()) + " != " +
                        std::to_string(config_.latent_width));
  }
  Tensor z = dec_in_(tokens);
  for (const auto& b : dec_blocks_) {
    const Tensor n = b.norm_attn(z);
    z = add(z, b.attn(n, n));
    z = add(z, b.ff(b.norm_ff(z)));
  }
  const Tensor ctx = dec_norm_kv_(z);
  const Tensor q = dec_embed_(positions);
  Tensor h = add(q, dec_cross_(dec_norm_q_(q), ctx));
  h = add(h, dec_ff_(dec_norm_ff_(h)));
  return head_(dec_norm_out_(h));
}

LatentSet ShapeVae::encode(const PointCloud& surface, const QuerySet& queries, EncodeMode mode,
                           std::uint64_t seed) const {
  if (surface.empty() || queries.size() == 0) throw ContractError("encode: empty surface or query set");
  NoGradGuard guard;
  Moments m = encode_moments(points_tensor(surface), points_tensor(queries.query_points));
  LatentSet out;
  out.tokens = mode == EncodeMode::Deterministic ? m.mean : reparameterize(m, seed);
  out.mean = m.mean;
  out.logvar = m.logvar;
  out.anchors = queries;
  return out;
}

std::vector<double> ShapeVae::decode(const Tensor& tokens, const PointCloud& positions) const {
  NoGradGuard guard;
  std::vector<double> out;
  out.reserve(positions.size());
  constexpr std::size_t kChunk = 8192;
  // The latent self-attention stack is recomputed per chunk; it is tiny next
  // to the query cross-attention.
  for (std::size_t start = 0; start < positions.size(); start += kChunk) {
    const std::size_t n = std::min(kChunk, positions.size() - start);
    PointCloud chunk;
    chunk.points.assign(positions.points.begin() + static_cast<std::ptrdiff_t>(start),
                        positions.points.begin() + static_cast<std::ptrdiff_t>(start + n));
    const Tensor pred = decode_tensor(tokens, points_tensor(chunk));
    out.insert(out.end(), pred.data().begin(), pred.data().end());
  }
  return out;
}

void ShapeVae::zero_output_head() {
  for (auto& w : head_.weight.mutable_data()) w = 0.0;
  for (auto& b : head_.bias.mutable_data()) b = 0.0;
}

Tensor kl_divergence(const Tensor& mean, const Tensor& logvar) {
  if (mean.shape() != logvar.shape()) throw ShapeError("kl_divergence: mean/logvar shape mismatch");
  const Tensor terms = sub(add(mul(mean, mean), exp(logvar)), add_scalar(logvar, 1.0));
  return scale(vecflow::mean(terms), 0.5);
}

Tensor vae_loss(const Tensor& pred_sdf, const Tensor& true_sdf, const Tensor& mean, const Tensor& logvar,
                double beta_kl) {
  if (pred_sdf.numel() != true_sdf.numel()) throw ContractError("vae_loss: prediction/target length mismatch");
  const Tensor target = true_sdf.shape() == pred_sdf.shape() ? true_sdf : reshape(true_sdf, pred_sdf.shape());
  const Tensor rec = mse(pred_sdf, target);
  if (beta_kl == 0.0) return rec;
  return add(rec, scale(kl_divergence(mean, logvar), beta_kl));
}

}  // namespace vecflow
