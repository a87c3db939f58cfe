#pragma once

#include <cstdint>
#include <vector>

#include "vecflow/geometry.hpp"

namespace vecflow {

// Subset of a cloud, kept in selection order.
struct QuerySet {
  PointCloud query_points;
  std::vector<std::size_t> source_indices;  // into the originating cloud

  std::size_t size() const { return source_indices.size(); }
};

QuerySet gather(const PointCloud& cloud, std::vector<std::size_t> indices);

// Coarse anchors chosen as nearest coarse-cloud points of the fine anchors, so
// token i of the coarse latent sits where token i of the fine latent sits.
struct TokenMatching {
  QuerySet fine_queries;
  QuerySet coarse_queries;
  std::vector<std::size_t> map;  // map[i]: coarse-cloud index matched to fine query i
};

// k distinct indices drawn uniformly without replacement (seeded Fisher-Yates).
QuerySet random_downsample(const PointCloud& cloud, std::size_t k, std::uint64_t seed);

// Greedy max-min selection starting at start_index; ties go to the lowest index.
QuerySet farthest_point_sampling(const PointCloud& cloud, std::size_t k, std::size_t start_index);

// Random downsample to 4M, then FPS to M starting from the first random pick.
// Indices refer to the original cloud.
QuerySet two_stage_downsample(const PointCloud& cloud, std::size_t m, std::uint64_t seed);

// Brute-force nearest neighbour of every fine query in the coarse cloud,
// ties to the lowest index.
TokenMatching match_tokens(const QuerySet& fine_queries, const PointCloud& coarse_cloud);

// Fraction of fine queries whose matched coarse index is shared with another
// fine query.
double duplicate_fraction(const TokenMatching& matching);

// Index-only serialization; points are recovered from the owning cloud.
nlohmann::json matching_to_json(const TokenMatching& matching);
TokenMatching matching_from_json(const nlohmann::json& j, const PointCloud& fine_cloud, const PointCloud& coarse_cloud);

}  // namespace vecflow
