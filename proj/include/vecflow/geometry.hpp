#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

namespace vecflow {

struct Vec3 {
  double x = 0.0, y = 0.0, z = 0.0;

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  Vec3 operator/(double s) const { return {x / s, y / s, z / s}; }
  double operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }
  bool operator==(const Vec3&) const = default;
};

inline double dot(const Vec3& a, const Vec3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
inline double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }
inline double distance(const Vec3& a, const Vec3& b) { return norm(a - b); }
inline double squared_distance(const Vec3& a, const Vec3& b) { return dot(a - b, a - b); }
inline Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}

// Ordered point samples. Index order is significant: downstream query sets
// and latent tokens refer to points by index.
struct PointCloud {
  std::vector<Vec3> points;
  std::vector<Vec3> normals;  // empty or same length as points

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
};

struct Aabb {
  Vec3 lo, hi;
  Vec3 extent() const { return hi - lo; }
  Vec3 center() const { return (lo + hi) * 0.5; }
};

Aabb bounding_box(const PointCloud& cloud);

enum class BaseKind { Sphere, Box, Superquadric };

std::string to_string(BaseKind kind);
BaseKind base_kind_from_string(const std::string& name);

// One radial bump: amplitude * sin(frequency . direction + phase).
struct DetailTerm {
  std::array<int, 3> frequency{0, 0, 0};
  double amplitude = 0.0;
  double phase = 0.0;
  bool operator==(const DetailTerm&) const = default;
};

inline constexpr double kMaxDetailAmplitude = 0.1;

// Parametric shape: base primitive plus a radial displacement field.
//
// base_params by kind:
//   sphere:        [radius]
//   box:           [half_x, half_y, half_z]
//   superquadric:  [e1, e2, scale_x, scale_y, scale_z]  (e1 = north-south, e2 = east-west exponent)
struct ShapeSpec {
  BaseKind base = BaseKind::Sphere;
  std::vector<double> base_params{0.4};
  std::vector<DetailTerm> detail;
  std::uint64_t seed = 0;

  static ShapeSpec sphere(double radius, std::vector<DetailTerm> detail = {}, std::uint64_t seed = 0);
  static ShapeSpec box(Vec3 half_extents, std::vector<DetailTerm> detail = {}, std::uint64_t seed = 0);
  static ShapeSpec superquadric(double e1, double e2, Vec3 scales, std::vector<DetailTerm> detail = {},
                                std::uint64_t seed = 0);

  // Throws ContractError on wrong parameter counts, non-positive extents or
  // detail amplitudes above kMaxDetailAmplitude.
  void validate() const;
  double max_detail() const;  // sum of |amplitude|
  bool operator==(const ShapeSpec&) const = default;
};

void to_json(nlohmann::json& j, const ShapeSpec& spec);
void from_json(const nlohmann::json& j, ShapeSpec& spec);

// Signed distance of the undisplaced primitive.
double base_sdf(const ShapeSpec& spec, const Vec3& p);

// Radial displacement sum at direction p/|p| (0 at the origin).
double displacement(const ShapeSpec& spec, const Vec3& p);

// Signed field, negative inside.
//
// Sphere bases give f(p) = |p| - (r + sum a sin(k . p/|p| + phi)): the zero set
// is exactly the displaced surface and the value is the radial distance to it.
// Box and superquadric bases give f(p) = base_sdf(p) - displacement(p); the zero
// set is the displaced surface and |grad f| <= 1 + sum |a||k| / |p|, so |f|
// overestimates the Euclidean distance by at most that factor. The superquadric
// base value is itself the radial distance along p to the undisplaced surface.
double eval_sdf(const ShapeSpec& spec, const Vec3& p);
std::vector<double> eval_sdf(const ShapeSpec& spec, const PointCloud& points);

// Central-difference gradient of eval_sdf.
Vec3 sdf_gradient(const ShapeSpec& spec, const Vec3& p, double h = 1e-6);

// n points on the zero level set. Each point starts on the base surface along a
// random direction and is Newton-projected along the field gradient; points
// that fail to reach |f| < 1e-7 in 50 iterations are redrawn, and the call
// fails (NumericError) after 10 n rejections. Normals are unit gradients.
PointCloud sample_surface(const ShapeSpec& spec, std::size_t n, std::uint64_t seed);

// Uniform scale + translation, p' = scale * p + translation.
struct Transform {
  double scale = 1.0;
  Vec3 translation;

  Vec3 apply(const Vec3& p) const { return p * scale + translation; }
  Vec3 invert(const Vec3& q) const { return (q - translation) / scale; }
  PointCloud apply(const PointCloud& cloud) const;
  PointCloud invert(const PointCloud& cloud) const;
};

void to_json(nlohmann::json& j, const Transform& t);
void from_json(const nlohmann::json& j, Transform& t);

// Longest AABB side becomes 1 and the AABB is centered at the origin.
std::pair<PointCloud, Transform> normalize_to_unit_box(const PointCloud& cloud);

// A shape expressed in a normalized frame: field(q) = scale * f(invert(q)).
struct FramedShape {
  ShapeSpec spec;
  Transform frame;

  double sdf(const Vec3& q) const { return frame.scale * eval_sdf(spec, frame.invert(q)); }
};

struct DegradeOptions {
  double attenuation = 0.0;     // multiplier applied to existing detail amplitudes
  std::size_t noise_terms = 3;  // low-frequency artifact bumps
  int max_frequency = 2;        // per-axis bound on artifact frequencies
};

// Coarse counterpart of a fine shape: same base, attenuated detail plus
// low-frequency pseudo-random bumps with |amplitude| <= noise_amp.
ShapeSpec degrade(const ShapeSpec& spec, double noise_amp, std::uint64_t seed, const DegradeOptions& options = {});

}  // namespace vecflow
