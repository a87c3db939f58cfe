#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"
#include "vecflow/errors.hpp"
#include "vecflow/geometry.hpp"
#include "vecflow/meshing.hpp"

using namespace vecflow;

namespace {

std::filesystem::path temp_file(const std::string& name) { return std::filesystem::temp_directory_path() / name; }

std::vector<std::string> lines_of(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::vector<std::string> out;
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

}  // namespace

TEST_CASE("grid construction") {
  const SdfGrid g = build_sdf_grid([](const Vec3&) { return 1.0; }, 7);
  CHECK(g.values.size() == 343);
  for (double v : g.values) CHECK(v == 1.0);

  const ShapeSpec sphere = ShapeSpec::sphere(0.4);
  const SdfGrid s = build_sdf_grid([&](const Vec3& p) { return eval_sdf(sphere, p); }, 32);
  const double cell = s.cell_size().x;
  std::size_t best = 0;
  for (std::size_t i = 0; i < s.values.size(); ++i)
    if (s.values[i] < s.values[best]) best = i;
  CHECK(std::abs(s.values[best] + 0.4) <= 1.5 * cell);
  CHECK(s.position(0, 0, 0) == s.bounds.lo);
  CHECK(s.position(31, 31, 31).x == doctest::Approx(s.bounds.hi.x));

  // Batched evaluation sees every corner once and in index order.
  std::size_t seen = 0;
  const SdfGrid b = build_sdf_grid(
      [&](const std::vector<Vec3>& ps) {
        CHECK(ps.size() <= 100);
        std::vector<double> out;
        for (const auto& p : ps) out.push_back(eval_sdf(sphere, p));
        seen += ps.size();
        return out;
      },
      32, default_grid_bounds(), 100);
  CHECK(seen == 32768);
  CHECK(b.values == s.values);

  CHECK_THROWS_AS(build_sdf_grid([](const Vec3& p) { return p.x > 0.5 ? std::nan("") : 0.0; }, 8), NumericError);
}

TEST_CASE("marching cubes table") {
  const auto& t = marching_cubes_table();
  CHECK(t.triangles[0].empty());
  CHECK(t.triangles[255].empty());
  for (int c = 1; c < 255; ++c) {
    CHECK(!t.triangles[c].empty());
    CHECK(t.triangles[c].size() % 3 == 0);
    CHECK(t.triangles[c].size() <= 15);
  }
  // Single-corner cases produce one triangle.
  for (int c = 0; c < 8; ++c) CHECK(t.triangles[1 << c].size() == 3);
}

TEST_CASE("marching cubes on analytic fields") {
  SdfGrid positive = build_sdf_grid([](const Vec3&) { return 1.0; }, 8);
  CHECK(marching_cubes(positive).empty());

  const TriMesh plane = marching_cubes(build_sdf_grid([](const Vec3& p) { return p.z; }, 16));
  REQUIRE(!plane.empty());
  for (const auto& v : plane.vertices) CHECK(std::abs(v.z) < 1e-9);

  const ShapeSpec sphere = ShapeSpec::sphere(0.4);
  const SdfGrid g = build_sdf_grid([&](const Vec3& p) { return eval_sdf(sphere, p); }, 64);
  const TriMesh mesh = marching_cubes(g);
  const double cell = g.cell_size().x;
  for (const auto& v : mesh.vertices) {
    CHECK(norm(v) >= 0.4 - 1.5 * cell);
    CHECK(norm(v) <= 0.4 + 1.5 * cell);
  }
  const EdgeReport r = edge_report(mesh);
  CHECK(r.watertight());
  CHECK(r.misoriented_edges == 0);
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    for (auto i : mesh.triangles[t]) CHECK(i < mesh.vertices.size());
    CHECK(triangle_area(mesh, t) > 1e-12);
  }
  // Triangles face outward: normal agrees with the radial direction.
  const auto& tri = mesh.triangles.front();
  const Vec3 a = mesh.vertices[tri[0]], b = mesh.vertices[tri[1]], c = mesh.vertices[tri[2]];
  CHECK(dot(cross(b - a, c - a), a + b + c) > 0.0);
}

TEST_CASE("bumpy and boxy shapes mesh watertight") {
  const ShapeSpec box = ShapeSpec::box({0.3, 0.2, 0.25}, {{{0, 4, 0}, 0.03, 0.2}});
  const ShapeSpec bumpy = ShapeSpec::sphere(0.35, {{{4, 0, 0}, 0.08, 0.0}, {{0, 0, 4}, 0.05, 1.0}});
  for (const auto& spec : {box, bumpy}) {
    const TriMesh m = marching_cubes(build_sdf_grid([&](const Vec3& p) { return eval_sdf(spec, p); }, 40));
    CHECK(edge_report(m).watertight());
  }
}

TEST_CASE("obj export and import") {
  TriMesh tri;
  tri.vertices = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}};
  tri.triangles = {{0, 1, 2}};
  const auto path = temp_file("vecflow_tri.obj");
  export_obj(tri, path);
  int v = 0, f = 0;
  for (const auto& line : lines_of(path)) {
    v += line.rfind("v ", 0) == 0;
    f += line.rfind("f ", 0) == 0;
  }
  CHECK(v == 3);
  CHECK(f == 1);
  CHECK(lines_of(path).back() == "f 1 2 3");

  const ShapeSpec sphere = ShapeSpec::sphere(0.4);
  const TriMesh mesh = marching_cubes(build_sdf_grid([&](const Vec3& p) { return eval_sdf(sphere, p); }, 24));
  export_obj(mesh, path);
  const TriMesh back = read_obj(path);
  REQUIRE(back.vertices.size() == mesh.vertices.size());
  CHECK(back.triangles == mesh.triangles);
  for (std::size_t i = 0; i < mesh.vertices.size(); ++i) CHECK(distance(back.vertices[i], mesh.vertices[i]) < 1e-5);

  export_obj(TriMesh{}, path);
  const auto empty_lines = lines_of(path);
  for (const auto& line : empty_lines) CHECK(line.rfind("#", 0) == 0);
  CHECK(read_obj(path).empty());
  std::filesystem::remove(path);

  // A regular file cannot be used as a parent directory.
  const auto blocker = temp_file("vecflow_blocker");
  std::ofstream(blocker) << "x";
  CHECK_THROWS(export_obj(tri, blocker / "x.obj"));
  std::filesystem::remove(blocker);
}

TEST_CASE("chamfer distance") {
  PointCloud a, b, c;
  a.points = {{0, 0, 0}};
  b.points = {{1, 0, 0}};
  CHECK(chamfer_distance(a, a) == 0.0);
  CHECK(chamfer_distance(a, b) == doctest::Approx(1.0));
  a.points = {{0, 0, 0}, {2, 0, 0}};
  CHECK(chamfer_distance(a, b) == doctest::Approx(1.0));
  CHECK(chamfer_distance(a, b) == chamfer_distance(b, a));
  CHECK(chamfer_distance(a, b, true) == doctest::Approx(1.0));
  c.points = {{2, 0, 0}, {0, 0, 0}, {0, 0, 0}};
  CHECK(chamfer_distance(a, c) == 0.0);
  CHECK_THROWS_AS(chamfer_distance(a, PointCloud{}), ContractError);
}

TEST_CASE("mesh surface sampling is area weighted and on the mesh") {
  TriMesh m;
  // Two unit-height triangles in z=0 with areas 1 and 3.
  m.vertices = {{0, 0, 0}, {2, 0, 0}, {0, 1, 0}, {10, 0, 0}, {16, 0, 0}, {10, 1, 0}};
  m.triangles = {{0, 1, 2}, {3, 4, 5}};
  const PointCloud s = sample_mesh_surface(m, 20000, 3);
  std::size_t right = 0;
  for (const auto& p : s.points) {
    CHECK(p.z == 0.0);
    right += p.x >= 10.0;
  }
  CHECK(static_cast<double>(right) / 20000 == doctest::Approx(0.75).epsilon(0.02));
  CHECK(sample_mesh_surface(m, 100, 3).points == sample_mesh_surface(m, 100, 3).points);
}

TEST_CASE("field error") {
  const ShapeSpec sphere = ShapeSpec::sphere(0.4);
  const ShapeSpec bumpy = ShapeSpec::sphere(0.4, {{{4, 0, 0}, 0.05, 0.0}});
  const PointField t = [&](const Vec3& p) { return eval_sdf(bumpy, p); };
  const PointCloud band = sample_surface(bumpy, 500, 2);
  CHECK(sdf_mae(t, t, band) == 0.0);
  CHECK(sdf_mae([&](const Vec3& p) { return t(p) + 0.1; }, t, band) == doctest::Approx(0.1));
  CHECK(sdf_mae([&](const Vec3& p) { return eval_sdf(sphere, p); }, t, band) <= 0.05);
}
