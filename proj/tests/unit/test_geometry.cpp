#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "vecflow/errors.hpp"
#include "vecflow/geometry.hpp"
#include "vecflow/meshing.hpp"
#include "vecflow/rng.hpp"

using namespace vecflow;

namespace {

// Displacement written out term by term, independent of the library's loop.
double bumpy_sphere_oracle(double r, const std::vector<DetailTerm>& terms, const Vec3& p) {
  const double len = std::sqrt(p.x * p.x + p.y * p.y + p.z * p.z);
  double d = 0.0;
  for (const auto& t : terms)
    d += t.amplitude * std::sin((t.frequency[0] * p.x + t.frequency[1] * p.y + t.frequency[2] * p.z) / len + t.phase);
  return len - (r + d);
}

ShapeSpec bumpy_sphere() {
  return ShapeSpec::sphere(0.4, {{{4, 0, 0}, 0.05, 0.0}, {{0, 3, 1}, 0.03, 0.7}});
}

}  // namespace

TEST_CASE("sphere field values") {
  const ShapeSpec s = ShapeSpec::sphere(0.4);
  CHECK(eval_sdf(s, Vec3{0, 0, 0}) == doctest::Approx(-0.4));
  CHECK(std::abs(eval_sdf(s, Vec3{0.4, 0, 0})) < 1e-15);
  const ShapeSpec b = ShapeSpec::sphere(0.4, {{{4, 0, 0}, 0.05, 0.0}});
  CHECK(eval_sdf(b, Vec3{0.45, 0, 0}) == doctest::Approx(0.45 - (0.4 + 0.05 * std::sin(4.0))).epsilon(1e-14));
  CHECK(eval_sdf(b, Vec3{0.45, 0, 0}) == doctest::Approx(0.087839).epsilon(1e-5));
  // The origin falls back to the base value.
  CHECK(eval_sdf(b, Vec3{0, 0, 0}) == doctest::Approx(-0.4));
}

TEST_CASE("bumpy sphere matches the written-out displacement") {
  const ShapeSpec s = bumpy_sphere();
  for (const Vec3 p : {Vec3{0.1, 0.2, -0.3}, Vec3{-0.5, 0.01, 0.2}, Vec3{0.0, 0.0, 0.45}})
    CHECK(eval_sdf(s, p) == doctest::Approx(bumpy_sphere_oracle(0.4, s.detail, p)).epsilon(1e-13));
}

TEST_CASE("sign test for radial-detail spheres") {
  const ShapeSpec s = bumpy_sphere();
  const double amp = s.max_detail(), delta = 0.01;
  Rng rng(2);
  for (int i = 0; i < 200; ++i) {
    Vec3 d{rng.normal(), rng.normal(), rng.normal()};
    d = d / norm(d);
    CHECK(eval_sdf(s, d * (0.4 - amp - delta)) < 0.0);
    CHECK(eval_sdf(s, d * (0.4 + amp + delta)) > 0.0);
  }
}

TEST_CASE("box and superquadric fields vanish on their sampled surfaces") {
  const ShapeSpec box = ShapeSpec::box({0.3, 0.2, 0.25}, {{{0, 4, 0}, 0.03, 0.2}});
  const ShapeSpec sq = ShapeSpec::superquadric(0.7, 0.8, {0.35, 0.3, 0.4}, {{{0, 0, 4}, 0.04, 1.1}});
  CHECK(eval_sdf(ShapeSpec::box({0.3, 0.2, 0.25}), Vec3{0, 0, 0}) == doctest::Approx(-0.2));
  for (const auto& spec : {box, sq}) {
    const PointCloud c = sample_surface(spec, 512, 4);
    double worst = 0.0;
    for (const auto& p : c.points) worst = std::max(worst, std::abs(eval_sdf(spec, p)));
    CHECK(worst < 1e-4);
  }
}

TEST_CASE("spec validation") {
  CHECK_THROWS_AS(ShapeSpec::sphere(0.4, {{{1, 0, 0}, 0.2, 0.0}}).validate(), ContractError);
  CHECK_THROWS_AS(ShapeSpec::sphere(-1.0).validate(), ContractError);
  ShapeSpec bad = ShapeSpec::box({0.1, 0.1, 0.1});
  bad.base_params.pop_back();
  CHECK_THROWS_AS(bad.validate(), ContractError);
}

TEST_CASE("spec json round trip uses the documented field names") {
  const ShapeSpec s = ShapeSpec::superquadric(0.7, 0.9, {0.3, 0.35, 0.4}, {{{1, 2, 3}, 0.02, 0.5}}, 42);
  const nlohmann::json j = s;
  for (const char* key : {"base", "base_params", "detail", "seed"}) CHECK(j.contains(key));
  CHECK(j.at("base") == "superquadric");
  CHECK(j.get<ShapeSpec>() == s);
}

TEST_CASE("surface sampling") {
  const PointCloud c = sample_surface(ShapeSpec::sphere(0.4), 300, 1);
  REQUIRE(c.size() == 300);
  REQUIRE(c.normals.size() == 300);
  for (std::size_t i = 0; i < c.size(); ++i) {
    CHECK(std::abs(norm(c.points[i]) - 0.4) < 1e-4);
    CHECK(dot(c.normals[i], c.points[i] / norm(c.points[i])) == doctest::Approx(1.0).epsilon(1e-6));
  }
  const PointCloud again = sample_surface(ShapeSpec::sphere(0.4), 300, 1);
  CHECK(again.points == c.points);

  const ShapeSpec bumpy = bumpy_sphere();
  const PointCloud b = sample_surface(bumpy, 4096, 9);
  double worst = 0.0;
  for (const auto& p : b.points) worst = std::max(worst, std::abs(bumpy_sphere_oracle(0.4, bumpy.detail, p)));
  CHECK(worst < 1e-4);
}

TEST_CASE("normalize to unit box") {
  PointCloud cube;
  for (int i = 0; i < 8; ++i) cube.points.push_back({i & 1 ? 1.0 : -1.0, i & 2 ? 1.0 : -1.0, i & 4 ? 1.0 : -1.0});
  auto [n, t] = normalize_to_unit_box(cube);
  CHECK(t.scale == doctest::Approx(0.5));
  const Aabb box = bounding_box(n);
  CHECK(box.lo == Vec3{-0.5, -0.5, -0.5});
  CHECK(box.hi == Vec3{0.5, 0.5, 0.5});

  auto [n2, t2] = normalize_to_unit_box(n);
  CHECK(t2.scale == doctest::Approx(1.0));
  CHECK(norm(t2.translation) < 1e-15);
  CHECK(n2.points == n.points);

  PointCloud two;
  two.points = {{0, 0, 0}, {2, 0, 0}};
  auto [n3, t3] = normalize_to_unit_box(two);
  CHECK(n3.points[0] == Vec3{-0.5, 0, 0});
  CHECK(n3.points[1] == Vec3{0.5, 0, 0});
  CHECK(t3.invert(n3.points[1]) == Vec3{2, 0, 0});

  PointCloud same;
  same.points = {{1, 1, 1}, {1, 1, 1}};
  CHECK_THROWS_AS(normalize_to_unit_box(same), ContractError);
}

TEST_CASE("framed shapes scale their field with the frame") {
  const ShapeSpec s = ShapeSpec::sphere(0.4);
  const FramedShape f{s, Transform{0.5, {0.1, 0, 0}}};
  // Surface point (0.4,0,0) maps to 0.3; the centre maps to 0.1.
  CHECK(std::abs(f.sdf({0.3, 0, 0})) < 1e-15);
  CHECK(f.sdf({0.1, 0, 0}) == doctest::Approx(-0.2));
}

TEST_CASE("degrade") {
  const ShapeSpec plain = ShapeSpec::box({0.3, 0.2, 0.25}, {}, 5);
  CHECK(degrade(plain, 0.0, 3) == plain);

  const ShapeSpec fine = ShapeSpec::sphere(0.4, {{{4, 0, 0}, 0.05, 0.0}, {{0, 4, 0}, 0.05, 1.0}});
  const ShapeSpec coarse = degrade(fine, 0.0, 3);
  Rng rng(8);
  for (int i = 0; i < 100; ++i) {
    const Vec3 p{rng.uniform(-0.6, 0.6), rng.uniform(-0.6, 0.6), rng.uniform(-0.6, 0.6)};
    CHECK(eval_sdf(coarse, p) == doctest::Approx(base_sdf(fine, p)).epsilon(1e-14));
  }

  const double noise = 0.02;
  const ShapeSpec noisy = degrade(fine, noise, 11);
  CHECK(noisy.base == fine.base);
  CHECK(noisy.base_params == fine.base_params);
  for (const auto& t : noisy.detail) CHECK(std::abs(t.amplitude) <= noise + 1e-15);
  CHECK(degrade(fine, noise, 11) == noisy);

  const PointCloud fc = sample_surface(fine, 2048, 1), cc = sample_surface(noisy, 2048, 1);
  CHECK(chamfer_distance(fc, cc) > 0.0);
  const Aabb fb = bounding_box(fc), cb = bounding_box(cc);
  const double allowed = 2 * (fine.max_detail() + noise);
  for (int a = 0; a < 3; ++a) {
    CHECK(std::abs(fb.lo[a] - cb.lo[a]) <= allowed);
    CHECK(std::abs(fb.hi[a] - cb.hi[a]) <= allowed);
  }
}
