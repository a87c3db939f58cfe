#include "vecflow/geometry.hpp"

#include <algorithm>
#include <limits>
#include <numbers>

#include "vecflow/errors.hpp"
#include "vecflow/rng.hpp"

namespace vecflow {

Aabb bounding_box(const PointCloud& cloud) {
  if (cloud.empty()) throw ContractError("bounding_box of empty cloud");
  Aabb box{cloud.points.front(), cloud.points.front()};
  for (const auto& p : cloud.points) {
    box.lo = {std::min(box.lo.x, p.x), std::min(box.lo.y, p.y), std::min(box.lo.z, p.z)};
    box.hi = {std::max(box.hi.x, p.x), std::max(box.hi.y, p.y), std::max(box.hi.z, p.z)};
  }
  return box;
}

std::string to_string(BaseKind kind) {
  switch (kind) {
    case BaseKind::Sphere: return "sphere";
    case BaseKind::Box: return "box";
    case BaseKind::Superquadric: return "superquadric";
  }
  return "unknown";
}

BaseKind base_kind_from_string(const std::string& name) {
  if (name == "sphere") return BaseKind::Sphere;
  if (name == "box") return BaseKind::Box;
  if (name == "superquadric") return BaseKind::Superquadric;
  throw ContractError("unknown base primitive: " + name);
}

ShapeSpec ShapeSpec::sphere(double radius, std::vector<DetailTerm> detail, std::uint64_t seed) {
  return {BaseKind::Sphere, {radius}, std::move(detail), seed};
}

ShapeSpec ShapeSpec::box(Vec3 h, std::vector<DetailTerm> detail, std::uint64_t seed) {
  return {BaseKind::Box, {h.x, h.y, h.z}, std::move(detail), seed};
}

ShapeSpec ShapeSpec::superquadric(double e1, double e2, Vec3 s, std::vector<DetailTerm> detail, std::uint64_t seed) {
  return {BaseKind::Superquadric, {e1, e2, s.x, s.y, s.z}, std::move(detail), seed};
}

void ShapeSpec::validate() const {
  const std::size_t expected = base == BaseKind::Sphere ? 1 : (base == BaseKind::Box ? 3 : 5);
  if (base_params.size() != expected) {
    throw ContractError(to_string(base) + " expects " + std::to_string(expected) + " base_params, got " +
                        std::to_string(base_params.size()));
  }
  for (double v : base_params) {
    if (!(v > 0.0) || !std::isfinite(v)) throw ContractError(to_string(base) + ": base_params must be positive");
  }
  for (const auto& t : detail) {
    if (std::abs(t.amplitude) > kMaxDetailAmplitude) {
      throw ContractError("detail amplitude " + std::to_string(t.amplitude) + " exceeds " +
                          std::to_string(kMaxDetailAmplitude));
    }
  }
}

double ShapeSpec::max_detail() const {
  double s = 0.0;
  for (const auto& t : detail) s += std::abs(t.amplitude);
  return s;
}

void to_json(nlohmann::json& j, const ShapeSpec& spec) {
  nlohmann::json detail = nlohmann::json::array();
  for (const auto& t : spec.detail) {
    detail.push_back({{"frequency", t.frequency}, {"amplitude", t.amplitude}, {"phase", t.phase}});
  }
  j = {{"base", to_string(spec.base)}, {"base_params", spec.base_params}, {"detail", detail}, {"seed", spec.seed}};
}

void from_json(const nlohmann::json& j, ShapeSpec& spec) {
  spec.base = base_kind_from_string(j.at("base").get<std::string>());
  spec.base_params = j.at("base_params").get<std::vector<double>>();
  spec.detail.clear();
  for (const auto& t : j.at("detail")) {
    spec.detail.push_back({t.at("frequency").get<std::array<int, 3>>(), t.at("amplitude").get<double>(),
                           t.at("phase").get<double>()});
  }
  spec.seed = j.at("seed").get<std::uint64_t>();
}

namespace {

double superquadric_inside_outside(const std::vector<double>& q, const Vec3& p) {
  const double e1 = q[0], e2 = q[1];
  const double xy = std::pow(std::abs(p.x / q[2]), 2.0 / e2) + std::pow(std::abs(p.y / q[3]), 2.0 / e2);
  return std::pow(xy, e2 / e1) + std::pow(std::abs(p.z / q[4]), 2.0 / e1);
}

}  // namespace

double base_sdf(const ShapeSpec& spec, const Vec3& p) {
  const auto& q = spec.base_params;
  switch (spec.base) {
    case BaseKind::Sphere: return norm(p) - q[0];
    case BaseKind::Box: {
      const Vec3 d{std::abs(p.x) - q[0], std::abs(p.y) - q[1], std::abs(p.z) - q[2]};
      const Vec3 outside{std::max(d.x, 0.0), std::max(d.y, 0.0), std::max(d.z, 0.0)};
      return norm(outside) + std::min(std::max({d.x, d.y, d.z}), 0.0);
    }
    case BaseKind::Superquadric: {
      const double r = norm(p);
      if (r == 0.0) return -std::min({q[2], q[3], q[4]});
      const double f = superquadric_inside_outside(q, p);
      return r * (1.0 - std::pow(f, -q[0] / 2.0));
    }
  }
  return 0.0;
}

double displacement(const ShapeSpec& spec, const Vec3& p) {
  const double r = norm(p);
  if (r == 0.0 || spec.detail.empty()) return 0.0;
  const Vec3 n = p / r;
  double d = 0.0;
  for (const auto& t : spec.detail) {
    d += t.amplitude * std::sin(t.frequency[0] * n.x + t.frequency[1] * n.y + t.frequency[2] * n.z + t.phase);
  }
  return d;
}

double eval_sdf(const ShapeSpec& spec, const Vec3& p) { return base_sdf(spec, p) - displacement(spec, p); }

std::vector<double> eval_sdf(const ShapeSpec& spec, const PointCloud& points) {
  std::vector<double> out;
  out.reserve(points.size());
  for (const auto& p : points.points) out.push_back(eval_sdf(spec, p));
  return out;
}

Vec3 sdf_gradient(const ShapeSpec& spec, const Vec3& p, double h) {
  const double inv = 0.5 / h;
  return {(eval_sdf(spec, p + Vec3{h, 0, 0}) - eval_sdf(spec, p - Vec3{h, 0, 0})) * inv,
          (eval_sdf(spec, p + Vec3{0, h, 0}) - eval_sdf(spec, p - Vec3{0, h, 0})) * inv,
          (eval_sdf(spec, p + Vec3{0, 0, h}) - eval_sdf(spec, p - Vec3{0, 0, h})) * inv};
}

namespace {

// Point on the undisplaced base surface along unit direction n.
Vec3 base_surface_along(const ShapeSpec& spec, const Vec3& n) {
  const auto& q = spec.base_params;
  switch (spec.base) {
    case BaseKind::Sphere: return n * (q[0] + displacement(spec, n));
    case BaseKind::Box: {
      const double t = 1.0 / std::max({std::abs(n.x) / q[0], std::abs(n.y) / q[1], std::abs(n.z) / q[2]});
      return n * t;
    }
    case BaseKind::Superquadric: return n * std::pow(superquadric_inside_outside(q, n), -q[0] / 2.0);
  }
  return n;
}

constexpr double kProjectionTolerance = 1e-7;
constexpr int kProjectionIterations = 50;

bool project_to_surface(const ShapeSpec& spec, Vec3& p) {
  for (int it = 0; it < kProjectionIterations; ++it) {
    const double f = eval_sdf(spec, p);
    if (std::abs(f) < kProjectionTolerance) return true;
    const Vec3 g = sdf_gradient(spec, p);
    const double gg = dot(g, g);
    if (!(gg > 1e-12)) return false;
    p = p - g * (f / gg);
  }
  return std::abs(eval_sdf(spec, p)) < kProjectionTolerance;
}

}  // namespace

PointCloud sample_surface(const ShapeSpec& spec, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw ContractError("sample_surface: n must be >= 1");
  spec.validate();
  PointCloud cloud;
  cloud.points.reserve(n);
  cloud.normals.reserve(n);
  Rng rng(derive_seed(seed, {0x5a3f}));
  std::size_t rejections = 0;
  while (cloud.size() < n) {
    Vec3 dir{rng.normal(), rng.normal(), rng.normal()};
    const double len = norm(dir);
    if (len < 1e-12) continue;
    dir = dir / len;
    Vec3 p = base_surface_along(spec, dir);
    if (!project_to_surface(spec, p)) {
      if (++rejections > 10 * n) {
        throw NumericError("sample_surface: projection failed for " + std::to_string(rejections) + " samples");
      }
      continue;
    }
    Vec3 g = sdf_gradient(spec, p);
    const double gl = norm(g);
    cloud.points.push_back(p);
    cloud.normals.push_back(gl > 0 ? g / gl : dir);
  }
  return cloud;
}

PointCloud Transform::apply(const PointCloud& cloud) const {
  PointCloud out;
  out.points.reserve(cloud.size());
  for (const auto& p : cloud.points) out.points.push_back(apply(p));
  out.normals = cloud.normals;
  return out;
}

PointCloud Transform::invert(const PointCloud& cloud) const {
  PointCloud out;
  out.points.reserve(cloud.size());
  for (const auto& p : cloud.points) out.points.push_back(invert(p));
  out.normals = cloud.normals;
  return out;
}

void to_json(nlohmann::json& j, const Transform& t) {
  j = {{"scale", t.scale}, {"translation", {t.translation.x, t.translation.y, t.translation.z}}};
}

void from_json(const nlohmann::json& j, Transform& t) {
  t.scale = j.at("scale").get<double>();
  const auto v = j.at("translation").get<std::array<double, 3>>();
  t.translation = {v[0], v[1], v[2]};
}

std::pair<PointCloud, Transform> normalize_to_unit_box(const PointCloud& cloud) {
  if (cloud.size() < 2) throw ContractError("normalize_to_unit_box: need at least 2 points");
  const Aabb box = bounding_box(cloud);
  const Vec3 e = box.extent();
  const double longest = std::max({e.x, e.y, e.z});
  if (!(longest > 0.0)) throw ContractError("normalize_to_unit_box: all points identical");
  Transform t;
  t.scale = 1.0 / longest;
  t.translation = box.center() * (-t.scale);
  return {t.apply(cloud), t};
}

ShapeSpec degrade(const ShapeSpec& spec, double noise_amp, std::uint64_t seed, const DegradeOptions& options) {
  if (noise_amp < 0.0) throw ContractError("degrade: noise_amp must be >= 0");
  ShapeSpec coarse = spec;
  coarse.detail.clear();
  if (options.attenuation != 0.0) {
    for (auto t : spec.detail) {
      t.amplitude *= options.attenuation;
      coarse.detail.push_back(t);
    }
  }
  if (noise_amp > 0.0 && options.noise_terms > 0) {
    Rng rng(derive_seed(seed, {0xdeca}));
    const int fmax = std::max(1, options.max_frequency);
    for (std::size_t i = 0; i < options.noise_terms; ++i) {
      DetailTerm t;
      do {
        for (auto& k : t.frequency) k = static_cast<int>(rng.integer(-fmax, fmax));
      } while (t.frequency == std::array<int, 3>{0, 0, 0});
      t.amplitude = std::min(noise_amp, kMaxDetailAmplitude) * rng.uniform();
      t.phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
      coarse.detail.push_back(t);
    }
  }
  return coarse;
}

}  // namespace vecflow
