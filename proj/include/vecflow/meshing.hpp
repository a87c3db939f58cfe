#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

#include "vecflow/geometry.hpp"

namespace vecflow {

// Scalar samples on the corner lattice of an axis-aligned box. values are
// x-major: index = (ix * R + iy) * R + iz.
struct SdfGrid {
  std::size_t resolution = 0;
  Aabb bounds{{-0.55, -0.55, -0.55}, {0.55, 0.55, 0.55}};
  std::vector<double> values;

  std::size_t index(std::size_t ix, std::size_t iy, std::size_t iz) const {
    return (ix * resolution + iy) * resolution + iz;
  }
  Vec3 position(std::size_t ix, std::size_t iy, std::size_t iz) const;
  Vec3 cell_size() const;
};

inline Aabb default_grid_bounds() { return {{-0.55, -0.55, -0.55}, {0.55, 0.55, 0.55}}; }

using PointField = std::function<double(const Vec3&)>;
using BatchField = std::function<std::vector<double>(const std::vector<Vec3>&)>;

// Evaluates fn at every lattice corner. The batched form receives positions
// in chunks of at most batch_size. Non-finite values raise NumericError with
// the offending position.
SdfGrid build_sdf_grid(const PointField& fn, std::size_t resolution, const Aabb& bounds = default_grid_bounds());
SdfGrid build_sdf_grid(const BatchField& fn, std::size_t resolution, const Aabb& bounds, std::size_t batch_size);

struct TriMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<std::uint32_t, 3>> triangles;

  bool empty() const { return triangles.empty(); }
};

// Triangulation for each of the 256 inside/outside corner patterns, as lists
// of cube-edge indices (three per triangle). Built once on first use.
// Corner c sits at offset (c & 1, (c >> 1) & 1, (c >> 2) & 1); a corner is
// inside when its value is below the iso level.
struct MarchingCubesTable {
  std::array<std::array<int, 2>, 12> edge_corners;
  std::array<std::vector<int>, 256> triangles;
};
const MarchingCubesTable& marching_cubes_table();

// Isosurface at `iso` with linear edge interpolation. Vertices on shared
// lattice edges are emitted once. Triangles face the region where value > iso.
TriMesh marching_cubes(const SdfGrid& grid, double iso = 0.0);

struct EdgeReport {
  std::size_t edges = 0;
  std::size_t boundary_edges = 0;     // used by one triangle
  std::size_t nonmanifold_edges = 0;  // used by three or more
  std::size_t misoriented_edges = 0;  // same direction in both triangles
  bool watertight() const { return edges > 0 && boundary_edges == 0 && nonmanifold_edges == 0; }
};
EdgeReport edge_report(const TriMesh& mesh);

double triangle_area(const TriMesh& mesh, std::size_t t);

// ASCII OBJ, 1-based faces, 6 significant digits, locale independent.
void export_obj(const TriMesh& mesh, const std::filesystem::path& destination);
TriMesh read_obj(const std::filesystem::path& source);

// Area-weighted random points on the mesh surface.
PointCloud sample_mesh_surface(const TriMesh& mesh, std::size_t n, std::uint64_t seed);

// 0.5 * (mean_a min_b d + mean_b min_a d), Euclidean distances unless squared.
double chamfer_distance(const PointCloud& a, const PointCloud& b, bool squared = false);

double sdf_mae(const PointField& pred, const PointField& truth, const PointCloud& sample_points);

}  // namespace vecflow
