#include "vecflow/sampling.hpp"

#include <limits>
#include <numeric>
#include <unordered_map>

#include "vecflow/errors.hpp"
#include "vecflow/rng.hpp"

namespace vecflow {

QuerySet gather(const PointCloud& cloud, std::vector<std::size_t> indices) {
  QuerySet q;
  q.query_points.points.reserve(indices.size());
  const bool normals = cloud.normals.size() == cloud.size();
  for (auto i : indices) {
    if (i >= cloud.size()) throw ContractError("gather: index " + std::to_string(i) + " out of range");
    q.query_points.points.push_back(cloud.points[i]);
    if (normals) q.query_points.normals.push_back(cloud.normals[i]);
  }
  q.source_indices = std::move(indices);
  return q;
}

QuerySet random_downsample(const PointCloud& cloud, std::size_t k, std::uint64_t seed) {
  if (k > cloud.size()) {
    throw ContractError("random_downsample: k=" + std::to_string(k) + " exceeds cloud size " +
                        std::to_string(cloud.size()));
  }
  std::vector<std::size_t> idx(cloud.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng(derive_seed(seed, {0xd0}));
  for (std::size_t i = 0; i < k; ++i) {
    const auto j = static_cast<std::size_t>(rng.integer(static_cast<std::int64_t>(i), static_cast<std::int64_t>(idx.size() - 1)));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(k);
  return gather(cloud, std::move(idx));
}

QuerySet farthest_point_sampling(const PointCloud& cloud, std::size_t k, std::size_t start_index) {
  if (cloud.empty()) throw ContractError("farthest_point_sampling: empty cloud");
  if (k < 1 || k > cloud.size()) throw ContractError("farthest_point_sampling: k out of range");
  if (start_index >= cloud.size()) throw ContractError("farthest_point_sampling: start_index out of range");
  const std::size_t n = cloud.size();
  std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
  std::vector<std::size_t> chosen{start_index};
  chosen.reserve(k);
  std::size_t last = start_index;
  while (chosen.size() < k) {
    std::size_t best = 0;
    double best_d = -1.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = squared_distance(cloud.points[i], cloud.points[last]);
      if (d < nearest[i]) nearest[i] = d;
      if (nearest[i] > best_d) {
        best_d = nearest[i];
        best = i;
      }
    }
    chosen.push_back(best);
    last = best;
  }
  return gather(cloud, std::move(chosen));
}

QuerySet two_stage_downsample(const PointCloud& cloud, std::size_t m, std::uint64_t seed) {
  if (m == 0) throw ContractError("two_stage_downsample: M must be >= 1");
  if (cloud.size() < 4 * m) {
    throw ContractError("two_stage_downsample: cloud has " + std::to_string(cloud.size()) + " points, needs >= 4M = " +
                        std::to_string(4 * m));
  }
  const QuerySet pool = random_downsample(cloud, 4 * m, seed);
  const QuerySet picked = farthest_point_sampling(pool.query_points, m, 0);
  std::vector<std::size_t> idx;
  idx.reserve(m);
  for (auto i : picked.source_indices) idx.push_back(pool.source_indices[i]);
  return gather(cloud, std::move(idx));
}

TokenMatching match_tokens(const QuerySet& fine_queries, const PointCloud& coarse_cloud) {
  if (coarse_cloud.empty()) throw ContractError("match_tokens: coarse cloud is empty");
  TokenMatching out;
  out.fine_queries = fine_queries;
  out.map.reserve(fine_queries.size());
  for (const auto& q : fine_queries.query_points.points) {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < coarse_cloud.size(); ++j) {
      const double d = squared_distance(q, coarse_cloud.points[j]);
      if (d < best_d) {
        best_d = d;
        best = j;
      }
    }
    out.map.push_back(best);
  }
  out.coarse_queries = gather(coarse_cloud, out.map);
  return out;
}

double duplicate_fraction(const TokenMatching& matching) {
  if (matching.map.empty()) return 0.0;
  std::unordered_map<std::size_t, std::size_t> counts;
  for (auto i : matching.map) ++counts[i];
  std::size_t shared = 0;
  for (auto i : matching.map) shared += counts[i] > 1 ? 1 : 0;
  return static_cast<double>(shared) / static_cast<double>(matching.map.size());
}

nlohmann::json matching_to_json(const TokenMatching& matching) {
  return {{"fine_indices", matching.fine_queries.source_indices}, {"map", matching.map}};
}

TokenMatching matching_from_json(const nlohmann::json& j, const PointCloud& fine_cloud, const PointCloud& coarse_cloud) {
  TokenMatching m;
  m.fine_queries = gather(fine_cloud, j.at("fine_indices").get<std::vector<std::size_t>>());
  m.map = j.at("map").get<std::vector<std::size_t>>();
  if (m.map.size() != m.fine_queries.size()) throw ContractError("matching: map length differs from fine queries");
  m.coarse_queries = gather(coarse_cloud, m.map);
  return m;
}

}  // namespace vecflow
