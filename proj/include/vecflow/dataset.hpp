#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "vecflow/config.hpp"
#include "vecflow/geometry.hpp"
#include "vecflow/sampling.hpp"

namespace vecflow {

// One coarse/fine pair. Both clouds live in the frame that normalizes the
// coarse cloud to the unit box; the fine shape is registered to it, so the
// two are spatially aligned.
struct DatasetEntry {
  std::size_t id = 0;
  std::string split;  // "train" or "test"
  ShapeSpec fine;
  ShapeSpec coarse;
  Transform frame;
  PointCloud fine_cloud;
  PointCloud coarse_cloud;
  TokenMatching matching;  // fine anchors (two-stage downsample) and matched coarse anchors
  std::vector<double> cond;

  FramedShape fine_shape() const { return {fine, frame}; }
  FramedShape coarse_shape() const { return {coarse, frame}; }
};

struct Dataset {
  std::vector<DatasetEntry> entries;
  double mean_duplicate_fraction = 0.0;

  std::vector<const DatasetEntry*> split(const std::string& name) const;
};

// Detail terms flattened to [kx/8, ky/8, kz/8, a cos(phi)/0.1, a sin(phi)/0.1]
// per slot, zero-padded to `slots` terms. Terms are sorted by frequency first,
// so the vector does not depend on the order they are listed in.
std::vector<double> condition_vector(const ShapeSpec& spec, std::size_t slots);

ShapeSpec draw_fine_spec(const DatasetConfig& config, std::uint64_t seed);
DatasetEntry make_entry(const DatasetConfig& config, std::size_t id, std::uint64_t seed);

// Fully in-memory generation; ids 0..n-1 with a seeded 80/20 style split.
Dataset generate_dataset(const DatasetConfig& config);

// manifest.json + entries/<id>.json under dir.
void save_dataset(const Dataset& dataset, const RunConfig& config, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

nlohmann::json entry_to_json(const DatasetEntry& entry);
DatasetEntry entry_from_json(const nlohmann::json& j);

// Checks normalization, matching and spec invariants of every entry. Returns
// one message per violation (empty when the dataset is valid).
std::vector<std::string> verify_dataset(const Dataset& dataset, const DatasetConfig& config);

}  // namespace vecflow
