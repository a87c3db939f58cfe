#include "vecflow/refiner.hpp"

#include <cmath>

#include "vecflow/errors.hpp"

namespace vecflow {

void DiTConfig::validate() const {
  if (num_blocks == 0) throw ConfigError("flow.dit.num_blocks: must be positive");
  if (width == 0 || heads == 0 || width % heads != 0) throw ConfigError("flow.dit.heads: width must be divisible by heads");
  if (latent_len == 0 || latent_width == 0) throw ConfigError("flow.dit.latent_len: must be positive");
  if (cond_tokens == 0 || cond_width == 0) throw ConfigError("flow.dit.cond_tokens: must be positive");
  if (time_freq_dim < 2 || time_freq_dim % 2 != 0) throw ConfigError("flow.dit.time_freq_dim: must be even and >= 2");
  if (ffn_mult == 0) throw ConfigError("flow.dit.ffn_mult: must be positive");
}

void to_json(nlohmann::json& j, const DiTConfig& c) {
  j = {{"num_blocks", c.num_blocks},   {"width", c.width},
       {"heads", c.heads},             {"latent_len", c.latent_len},
       {"latent_width", c.latent_width}, {"cond_tokens", c.cond_tokens},
       {"cond_width", c.cond_width},   {"cond_dim", c.cond_dim},
       {"time_freq_dim", c.time_freq_dim}, {"ffn_mult", c.ffn_mult}};
}

void from_json(const nlohmann::json& j, DiTConfig& c) {
  c.num_blocks = j.at("num_blocks");
  c.width = j.at("width");
  c.heads = j.at("heads");
  c.latent_len = j.at("latent_len");
  c.latent_width = j.at("latent_width");
  c.cond_tokens = j.at("cond_tokens");
  c.cond_width = j.at("cond_width");
  c.cond_dim = j.at("cond_dim");
  c.time_freq_dim = j.at("time_freq_dim");
  c.ffn_mult = j.at("ffn_mult");
}

Tensor modulate(const Tensor& x, const Tensor& s, const Tensor& gamma) {
  return add_row(mul_row(x, add_scalar(gamma, 1.0)), s);
}

std::vector<double> timestep_features(double t, std::size_t dim) {
  const std::size_t half = dim / 2;
  std::vector<double> out(dim);
  for (std::size_t i = 0; i < half; ++i) {
    const double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) / static_cast<double>(half));
    const double arg = 1000.0 * t * freq;
    out[i] = std::cos(arg);
    out[half + i] = std::sin(arg);
  }
  return out;
}

Tensor DiTBlock::operator()(const Tensor& z, const Tensor& y, const Tensor& t_embed) const {
  const std::size_t D = z.cols();
  const Tensor mods = ada(gelu(t_embed));
  auto chunk = [&](std::size_t i) { return slice_cols(mods, i * D, D); };
  const Tensor none;

  Tensor h = modulate(layer_norm(z, none, none), chunk(0), chunk(1));
  Tensor out = add(z, mul_row(self_attn(h, h), chunk(2)));
  h = modulate(layer_norm(out, none, none), chunk(3), chunk(4));
  out = add(out, mul_row(cross_attn(h, y), chunk(5)));
  h = modulate(layer_norm(out, none, none), chunk(6), chunk(7));
  return add(out, mul_row(ff(h), chunk(8)));
}

VelocityModel::VelocityModel(const DiTConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  Rng rng(derive_seed(seed, {0xd17}));
  const std::size_t D = config_.width;
  time_fc1_ = Linear::create(params_, "time.fc1", config_.time_freq_dim, D, rng);
  time_fc2_ = Linear::create(params_, "time.fc2", D, D, rng);
  cond_proj_ = Linear::create(params_, "cond.proj", std::max<std::size_t>(config_.cond_dim, 1),
                              config_.cond_tokens * config_.cond_width, rng, Init::Zero);
  std::vector<double> null(config_.cond_width);
  for (auto& v : null) v = 0.02 * rng.normal();
  null_token_ = params_.add("cond.null", Tensor::from({config_.cond_width}, std::move(null), true));
  in_proj_ = Linear::create(params_, "in_proj", config_.latent_width, D, rng);
  for (std::size_t i = 0; i < config_.num_blocks; ++i) {
    const std::string n = "block" + std::to_string(i);
    DiTBlock b;
    b.ada = Linear::create(params_, n + ".ada", D, 9 * D, rng, Init::Zero);
    b.self_attn = MultiHeadAttention::create(params_, n + ".msa", D, D, config_.heads, rng);
    b.cross_attn = MultiHeadAttention::create(params_, n + ".mca", D, config_.cond_width, config_.heads, rng);
    b.ff = FeedForward::create(params_, n + ".ffn", D, config_.ffn_mult * D, rng);
    blocks_.push_back(std::move(b));
  }
  final_norm_ = LayerNorm::create(params_, "final_norm", D);
  out_proj_ = Linear::create(params_, "out_proj", D, config_.latent_width, rng, Init::Zero);
}

Tensor VelocityModel::time_embedding(double t) const {
  if (!(t >= 0.0 && t <= 1.0)) throw ContractError("time_embedding: t must lie in [0, 1]");
  const Tensor f = Tensor::from({1, config_.time_freq_dim}, timestep_features(t, config_.time_freq_dim));
  return time_fc2_(gelu(time_fc1_(f)));
}

Tensor VelocityModel::condition_tokens(const std::vector<double>& cond) const {
  if (cond.size() != config_.cond_dim) {
    throw ContractError("condition vector has length " + std::to_string(cond.size()) + ", expected " +
                        std::to_string(config_.cond_dim));
  }
  if (cond.empty()) return null_tokens();
  const Tensor c = Tensor::from({1, cond.size()}, cond);
  const Tensor tokens = reshape(cond_proj_(c), {config_.cond_tokens, config_.cond_width});
  return add_row(tokens, null_token_);
}

Tensor VelocityModel::null_tokens() const {
  return add_row(Tensor::zeros({config_.cond_tokens, config_.cond_width}), null_token_);
}

Tensor VelocityModel::predict(const Tensor& z_t, double t, const Tensor& y) const {
  if (z_t.ndim() != 2 || z_t.rows() != config_.latent_len || z_t.cols() != config_.latent_width) {
    throw ContractError("predict: latent shape " + shape_str(z_t.shape()) + " does not match [" +
                        std::to_string(config_.latent_len) + " x " + std::to_string(config_.latent_width) + "]");
  }
  if (y.ndim() != 2 || y.cols() != config_.cond_width) {
    throw ContractError("predict: condition shape " + shape_str(y.shape()));
  }
  const Tensor temb = time_embedding(t);
  Tensor h = in_proj_(z_t);
  for (const auto& b : blocks_) h = b(h, y, temb);
  return out_proj_(final_norm_(h));
}

}  // namespace vecflow
