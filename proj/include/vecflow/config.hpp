#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "vecflow/flow.hpp"
#include "vecflow/geometry.hpp"
#include "vecflow/refiner.hpp"
#include "vecflow/shape2vec.hpp"

namespace vecflow {

struct DatasetConfig {
  std::size_t num_shapes = 80;
  double holdout_fraction = 0.2;
  std::map<std::string, double> base_mix{{"sphere", 1.0}};  // base name -> sampling weight
  std::vector<double> radius_range{0.35, 0.45};
  std::vector<double> box_half_range{0.25, 0.4};
  std::vector<double> superquadric_exponent_range{0.6, 1.0};
  std::vector<double> superquadric_scale_range{0.3, 0.42};
  // Candidate detail frequencies; each shape uses detail_terms of them.
  std::vector<std::array<int, 3>> detail_frequencies{{4, 0, 0}, {0, 4, 0}, {0, 0, 4}};
  std::size_t detail_terms = 3;
  std::vector<double> amplitude_range{0.03, 0.08};
  double noise_amp = 0.02;
  double attenuation = 0.0;
  std::size_t noise_terms = 3;
  int noise_max_frequency = 2;
  std::size_t surface_points = 1024;  // N
  std::size_t latent_len = 32;        // M
  std::size_t cond_slots = 4;         // detail terms encoded in the condition vector
  std::uint64_t seed = 1;
};

struct VaeTrainConfig {
  VaeConfig model;
  double lr = 1e-3;
  double warmup_fraction = 0.05;
  double final_lr_fraction = 0.05;
  double grad_clip = 1.0;
  std::size_t steps = 3000;
  std::size_t batch_shapes = 4;
  std::size_t queries_per_shape = 512;
  double near_surface_fraction = 0.5;
  double near_surface_sigma = 0.02;
  double near_surface_band = 0.05;
  double sample_bound = 0.55;
  bool include_coarse = true;
  std::size_t max_shapes = 0;  // 0 = whole training split
  std::size_t log_every = 50;
  std::size_t checkpoint_every = 500;
};

struct FlowTrainConfig {
  DiTConfig dit;
  FlowHyper hyper;
  double lr = 1e-3;
  double warmup_fraction = 0.05;
  double final_lr_fraction = 0.05;
  double grad_clip = 1.0;
  std::size_t steps = 3000;
  std::size_t batch = 16;
  std::string pairing = "matched";  // "matched" or "random"
  std::size_t anchor_draws = 1;     // anchor sets per training shape; extra draws redo the downsample
  bool noise_aug = true;            // false trains with t_aug = 0
  std::size_t log_every = 50;
};

struct EvalConfig {
  std::size_t grid_resolution = 64;
  double grid_bound = 0.6;
  std::size_t metric_points = 8192;
  std::size_t mae_points = 4096;
  std::size_t decode_batch = 8192;
};

struct PathsConfig {
  std::string data_dir = "data";
  std::string checkpoint_dir = "checkpoints";
  std::string out_dir = "out";
};

struct RunConfig {
  DatasetConfig dataset;
  VaeTrainConfig vae;
  FlowTrainConfig flow;
  EvalConfig eval;
  PathsConfig paths;
  std::uint64_t seed = 0;

  // Cross-field checks (N >= 4M, widths agree, ...). Throws ConfigError naming
  // the offending key.
  void validate() const;
  std::size_t cond_dim() const { return 5 * dataset.cond_slots; }
};

nlohmann::json config_to_json(const RunConfig& config);

// Defaults overlaid with `overrides`. Unknown keys and values of the wrong type
// raise ConfigError naming the key path (e.g. "vae.steps").
RunConfig config_from_json(const nlohmann::json& overrides);
RunConfig load_config(const std::filesystem::path& path);

void write_json(const std::filesystem::path& path, const nlohmann::json& j);
nlohmann::json read_json(const std::filesystem::path& path);

}  // namespace vecflow
