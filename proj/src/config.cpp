#include "vecflow/config.hpp"

#include <fstream>

#include "vecflow/errors.hpp"

namespace vecflow {

using nlohmann::json;

namespace {

bool same_kind(const json& expected, const json& given) {
  // Literals built in code are signed even when non-negative.
  if (expected.is_number_unsigned())
    return given.is_number_unsigned() || (given.is_number_integer() && given.get<std::int64_t>() >= 0);
  if (expected.is_number_integer()) return given.is_number_integer();
  if (expected.is_number()) return given.is_number();
  if (expected.is_array()) {
    if (!given.is_array()) return false;
    if (expected.empty()) return true;
    for (const auto& e : given) {
      if (!same_kind(expected.front(), e)) return false;
    }
    return true;
  }
  return expected.type() == given.type();
}

std::string kind_name(const json& j) {
  if (j.is_number_unsigned()) return "non-negative integer";
  if (j.is_number_integer()) return "integer";
  if (j.is_number()) return "number";
  return j.type_name();
}

// Keys whose object value is a free-form map rather than a fixed schema.
bool is_map_key(const std::string& path) { return path == "dataset.base_mix"; }

void overlay(json& base, const json& overrides, const std::string& prefix) {
  if (!overrides.is_object()) throw ConfigError((prefix.empty() ? "config" : prefix) + ": expected an object");
  for (const auto& [key, value] : overrides.items()) {
    const std::string path = prefix.empty() ? key : prefix + "." + key;
    if (!base.contains(key)) throw ConfigError(path + ": unknown key");
    json& slot = base[key];
    if (is_map_key(path)) {
      if (!value.is_object()) throw ConfigError(path + ": expected an object");
      for (const auto& [name, weight] : value.items()) {
        if (!weight.is_number()) throw ConfigError(path + "." + name + ": expected number");
      }
      slot = value;
    } else if (slot.is_object()) {
      overlay(slot, value, path);
    } else {
      if (!same_kind(slot, value)) throw ConfigError(path + ": expected " + kind_name(slot) + ", got " + kind_name(value));
      slot = value;
    }
  }
}

template <class T>
void read(const json& j, const std::string& path, T& out) {
  const json* node = &j;
  std::size_t start = 0;
  while (true) {
    const std::size_t dot = path.find('.', start);
    node = &node->at(path.substr(start, dot - start));
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  try {
    out = node->get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

}  // namespace

void RunConfig::validate() const {
  const auto& d = dataset;
  if (d.latent_len == 0) throw ConfigError("dataset.latent_len: must be positive");
  if (d.surface_points < 4 * d.latent_len) {
    throw ConfigError("dataset.surface_points: N=" + std::to_string(d.surface_points) + " must be >= 4M=" +
                      std::to_string(4 * d.latent_len));
  }
  if (!(d.holdout_fraction >= 0.0 && d.holdout_fraction < 1.0)) throw ConfigError("dataset.holdout_fraction: must lie in [0, 1)");
  if (d.base_mix.empty()) throw ConfigError("dataset.base_mix: needs at least one base");
  double total = 0.0;
  for (const auto& [name, w] : d.base_mix) {
    try {
      base_kind_from_string(name);
    } catch (const std::exception&) {
      throw ConfigError("dataset.base_mix." + name + ": unknown base");
    }
    if (w < 0) throw ConfigError("dataset.base_mix." + name + ": weight must be >= 0");
    total += w;
  }
  if (total <= 0) throw ConfigError("dataset.base_mix: weights sum to zero");
  auto range = [](const std::vector<double>& r, const std::string& key, double lo_bound) {
    if (r.size() != 2 || !(r[0] <= r[1]) || r[0] < lo_bound) throw ConfigError(key + ": expected [lo, hi] with lo <= hi");
  };
  range(d.radius_range, "dataset.radius_range", 1e-3);
  range(d.box_half_range, "dataset.box_half_range", 1e-3);
  range(d.superquadric_exponent_range, "dataset.superquadric_exponent_range", 0.1);
  range(d.superquadric_scale_range, "dataset.superquadric_scale_range", 1e-3);
  range(d.amplitude_range, "dataset.amplitude_range", 0.0);
  if (d.amplitude_range[1] > kMaxDetailAmplitude) throw ConfigError("dataset.amplitude_range: amplitudes must be <= 0.1");
  if (d.detail_terms > d.detail_frequencies.size()) {
    throw ConfigError("dataset.detail_terms: exceeds the number of detail_frequencies");
  }
  if (d.cond_slots < d.detail_terms) throw ConfigError("dataset.cond_slots: must be >= detail_terms");
  if (d.noise_amp < 0) throw ConfigError("dataset.noise_amp: must be >= 0");
  if (d.attenuation < 0) throw ConfigError("dataset.attenuation: must be >= 0");

  vae.model.validate();
  if (vae.steps == 0) throw ConfigError("vae.steps: must be positive");
  if (vae.batch_shapes == 0) throw ConfigError("vae.batch_shapes: must be positive");
  if (vae.queries_per_shape == 0) throw ConfigError("vae.queries_per_shape: must be positive");
  if (!(vae.near_surface_fraction >= 0 && vae.near_surface_fraction <= 1)) {
    throw ConfigError("vae.near_surface_fraction: must lie in [0, 1]");
  }
  if (vae.log_every == 0) throw ConfigError("vae.log_every: must be positive");

  flow.dit.validate();
  flow.hyper.validate(1000);
  if (flow.dit.latent_len != d.latent_len) throw ConfigError("flow.dit.latent_len: must equal dataset.latent_len");
  if (flow.dit.latent_width != vae.model.latent_width) {
    throw ConfigError("flow.dit.latent_width: must equal vae.model.latent_width");
  }
  if (flow.dit.cond_dim != cond_dim()) {
    throw ConfigError("flow.dit.cond_dim: must equal 5 * dataset.cond_slots = " + std::to_string(cond_dim()));
  }
  if (flow.pairing != "matched" && flow.pairing != "random") throw ConfigError("flow.pairing: expected matched or random");
  if (flow.steps == 0) throw ConfigError("flow.steps: must be positive");
  if (flow.batch == 0) throw ConfigError("flow.batch: must be positive");
  if (flow.anchor_draws == 0) throw ConfigError("flow.anchor_draws: must be positive");
  if (flow.log_every == 0) throw ConfigError("flow.log_every: must be positive");

  if (eval.grid_resolution < 2) throw ConfigError("eval.grid_resolution: must be >= 2");
  if (eval.grid_bound <= 0.5) throw ConfigError("eval.grid_bound: must exceed 0.5");
  if (eval.metric_points == 0 || eval.mae_points == 0) throw ConfigError("eval.metric_points: must be positive");
  if (eval.decode_batch == 0) throw ConfigError("eval.decode_batch: must be positive");
}

json config_to_json(const RunConfig& c) {
  const auto& d = c.dataset;
  json freqs = json::array();
  for (const auto& f : d.detail_frequencies) freqs.push_back(f);
  json j;
  j["seed"] = c.seed;
  j["dataset"] = {{"num_shapes", d.num_shapes},
                  {"holdout_fraction", d.holdout_fraction},
                  {"base_mix", d.base_mix},
                  {"radius_range", d.radius_range},
                  {"box_half_range", d.box_half_range},
                  {"superquadric_exponent_range", d.superquadric_exponent_range},
                  {"superquadric_scale_range", d.superquadric_scale_range},
                  {"detail_frequencies", freqs},
                  {"detail_terms", d.detail_terms},
                  {"amplitude_range", d.amplitude_range},
                  {"noise_amp", d.noise_amp},
                  {"attenuation", d.attenuation},
                  {"noise_terms", d.noise_terms},
                  {"noise_max_frequency", d.noise_max_frequency},
                  {"surface_points", d.surface_points},
                  {"latent_len", d.latent_len},
                  {"cond_slots", d.cond_slots},
                  {"seed", d.seed}};
  const auto& v = c.vae;
  j["vae"] = {{"model", v.model},
              {"lr", v.lr},
              {"warmup_fraction", v.warmup_fraction},
              {"final_lr_fraction", v.final_lr_fraction},
              {"grad_clip", v.grad_clip},
              {"steps", v.steps},
              {"batch_shapes", v.batch_shapes},
              {"queries_per_shape", v.queries_per_shape},
              {"near_surface_fraction", v.near_surface_fraction},
              {"near_surface_sigma", v.near_surface_sigma},
              {"near_surface_band", v.near_surface_band},
              {"sample_bound", v.sample_bound},
              {"include_coarse", v.include_coarse},
              {"max_shapes", v.max_shapes},
              {"log_every", v.log_every},
              {"checkpoint_every", v.checkpoint_every}};
  const auto& f = c.flow;
  j["flow"] = {{"dit", f.dit},
               {"hyper", f.hyper},
               {"lr", f.lr},
               {"warmup_fraction", f.warmup_fraction},
               {"final_lr_fraction", f.final_lr_fraction},
               {"grad_clip", f.grad_clip},
               {"steps", f.steps},
               {"batch", f.batch},
               {"pairing", f.pairing},
               {"anchor_draws", f.anchor_draws},
               {"noise_aug", f.noise_aug},
               {"log_every", f.log_every}};
  j["eval"] = {{"grid_resolution", c.eval.grid_resolution},
               {"grid_bound", c.eval.grid_bound},
               {"metric_points", c.eval.metric_points},
               {"mae_points", c.eval.mae_points},
               {"decode_batch", c.eval.decode_batch}};
  j["paths"] = {{"data_dir", c.paths.data_dir},
                {"checkpoint_dir", c.paths.checkpoint_dir},
                {"out_dir", c.paths.out_dir}};
  return j;
}

RunConfig config_from_json(const json& overrides) {
  json merged = config_to_json(RunConfig{});
  if (!overrides.is_null()) overlay(merged, overrides, "");
  RunConfig c;
  read(merged, "seed", c.seed);
  auto& d = c.dataset;
  read(merged, "dataset.num_shapes", d.num_shapes);
  read(merged, "dataset.holdout_fraction", d.holdout_fraction);
  read(merged, "dataset.base_mix", d.base_mix);
  read(merged, "dataset.radius_range", d.radius_range);
  read(merged, "dataset.box_half_range", d.box_half_range);
  read(merged, "dataset.superquadric_exponent_range", d.superquadric_exponent_range);
  read(merged, "dataset.superquadric_scale_range", d.superquadric_scale_range);
  read(merged, "dataset.detail_frequencies", d.detail_frequencies);
  read(merged, "dataset.detail_terms", d.detail_terms);
  read(merged, "dataset.amplitude_range", d.amplitude_range);
  read(merged, "dataset.noise_amp", d.noise_amp);
  read(merged, "dataset.attenuation", d.attenuation);
  read(merged, "dataset.noise_terms", d.noise_terms);
  read(merged, "dataset.noise_max_frequency", d.noise_max_frequency);
  read(merged, "dataset.surface_points", d.surface_points);
  read(merged, "dataset.latent_len", d.latent_len);
  read(merged, "dataset.cond_slots", d.cond_slots);
  read(merged, "dataset.seed", d.seed);
  auto& v = c.vae;
  read(merged, "vae.model", v.model);
  read(merged, "vae.lr", v.lr);
  read(merged, "vae.warmup_fraction", v.warmup_fraction);
  read(merged, "vae.final_lr_fraction", v.final_lr_fraction);
  read(merged, "vae.grad_clip", v.grad_clip);
  read(merged, "vae.steps", v.steps);
  read(merged, "vae.batch_shapes", v.batch_shapes);
  read(merged, "vae.queries_per_shape", v.queries_per_shape);
  read(merged, "vae.near_surface_fraction", v.near_surface_fraction);
  read(merged, "vae.near_surface_sigma", v.near_surface_sigma);
  read(merged, "vae.near_surface_band", v.near_surface_band);
  read(merged, "vae.sample_bound", v.sample_bound);
  read(merged, "vae.include_coarse", v.include_coarse);
  read(merged, "vae.max_shapes", v.max_shapes);
  read(merged, "vae.log_every", v.log_every);
  read(merged, "vae.checkpoint_every", v.checkpoint_every);
  auto& f = c.flow;
  read(merged, "flow.dit", f.dit);
  read(merged, "flow.hyper", f.hyper);
  read(merged, "flow.lr", f.lr);
  read(merged, "flow.warmup_fraction", f.warmup_fraction);
  read(merged, "flow.final_lr_fraction", f.final_lr_fraction);
  read(merged, "flow.grad_clip", f.grad_clip);
  read(merged, "flow.steps", f.steps);
  read(merged, "flow.batch", f.batch);
  read(merged, "flow.pairing", f.pairing);
  read(merged, "flow.anchor_draws", f.anchor_draws);
  read(merged, "flow.noise_aug", f.noise_aug);
  read(merged, "flow.log_every", f.log_every);
  read(merged, "eval.grid_resolution", c.eval.grid_resolution);
  read(merged, "eval.grid_bound", c.eval.grid_bound);
  read(merged, "eval.metric_points", c.eval.metric_points);
  read(merged, "eval.mae_points", c.eval.mae_points);
  read(merged, "eval.decode_batch", c.eval.decode_batch);
  read(merged, "paths.data_dir", c.paths.data_dir);
  read(merged, "paths.checkpoint_dir", c.paths.checkpoint_dir);
  read(merged, "paths.out_dir", c.paths.out_dir);
  c.validate();
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  json j;
  try {
    j = read_json(path);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

void write_json(const std::filesystem::path& path, const json& j) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  return json::parse(in);
}

}  // namespace vecflow
