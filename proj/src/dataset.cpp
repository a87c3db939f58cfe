#include "vecflow/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <tuple>

#include "vecflow/errors.hpp"
#include "vecflow/rng.hpp"

namespace vecflow {

using nlohmann::json;

namespace {

json cloud_to_json(const PointCloud& cloud) {
  std::vector<double> pts, nrm;
  pts.reserve(cloud.size() * 3);
  for (const auto& p : cloud.points) pts.insert(pts.end(), {p.x, p.y, p.z});
  for (const auto& n : cloud.normals) nrm.insert(nrm.end(), {n.x, n.y, n.z});
  return {{"points", pts}, {"normals", nrm}};
}

std::vector<Vec3> unflatten(const std::vector<double>& v, const std::string& what) {
  if (v.size() % 3 != 0) throw IoError(what + ": coordinate count not divisible by 3");
  std::vector<Vec3> out(v.size() / 3);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = {v[3 * i], v[3 * i + 1], v[3 * i + 2]};
  return out;
}

PointCloud cloud_from_json(const json& j) {
  PointCloud c;
  c.points = unflatten(j.at("points").get<std::vector<double>>(), "points");
  c.normals = unflatten(j.at("normals").get<std::vector<double>>(), "normals");
  return c;
}

}  // namespace

std::vector<const DatasetEntry*> Dataset::split(const std::string& name) const {
  std::vector<const DatasetEntry*> out;
  for (const auto& e : entries) {
    if (e.split == name) out.push_back(&e);
  }
  return out;
}

std::vector<double> condition_vector(const ShapeSpec& spec, std::size_t slots) {
  std::vector<DetailTerm> terms = spec.detail;
  std::sort(terms.begin(), terms.end(), [](const DetailTerm& a, const DetailTerm& b) {
    return std::tie(a.frequency, a.amplitude, a.phase) > std::tie(b.frequency, b.amplitude, b.phase);
  });
  std::vector<double> out(5 * slots, 0.0);
  for (std::size_t i = 0; i < std::min(slots, terms.size()); ++i) {
    const auto& d = terms[i];
    out[5 * i + 0] = d.frequency[0] / 8.0;
    out[5 * i + 1] = d.frequency[1] / 8.0;
    out[5 * i + 2] = d.frequency[2] / 8.0;
    out[5 * i + 3] = d.amplitude * std::cos(d.phase) / kMaxDetailAmplitude;
    out[5 * i + 4] = d.amplitude * std::sin(d.phase) / kMaxDetailAmplitude;
  }
  return out;
}

ShapeSpec draw_fine_spec(const DatasetConfig& config, std::uint64_t seed) {
  Rng rng(seed);
  double total = 0.0;
  for (const auto& [name, w] : config.base_mix) total += w;
  double pick = rng.uniform() * total;
  std::string base_name = config.base_mix.begin()->first;
  for (const auto& [name, w] : config.base_mix) {
    if (w <= 0) continue;
    base_name = name;
    if (pick < w) break;
    pick -= w;
  }
  auto draw = [&rng](const std::vector<double>& r) { return rng.uniform(r[0], r[1]); };

  std::vector<std::array<int, 3>> freqs = config.detail_frequencies;
  std::shuffle(freqs.begin(), freqs.end(), rng.engine());
  std::vector<DetailTerm> detail;
  for (std::size_t i = 0; i < config.detail_terms; ++i) {
    DetailTerm t;
    t.frequency = freqs[i];
    t.amplitude = draw(config.amplitude_range);
    t.phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    detail.push_back(t);
  }

  ShapeSpec spec;
  switch (base_kind_from_string(base_name)) {
    case BaseKind::Sphere:
      spec = ShapeSpec::sphere(draw(config.radius_range), detail, seed);
      break;
    case BaseKind::Box: {
      const Vec3 h{draw(config.box_half_range), draw(config.box_half_range), draw(config.box_half_range)};
      spec = ShapeSpec::box(h, detail, seed);
      break;
    }
    case BaseKind::Superquadric: {
      const double e1 = draw(config.superquadric_exponent_range);
      const double e2 = draw(config.superquadric_exponent_range);
      const Vec3 s{draw(config.superquadric_scale_range), draw(config.superquadric_scale_range),
                   draw(config.superquadric_scale_range)};
      spec = ShapeSpec::superquadric(e1, e2, s, detail, seed);
      break;
    }
  }
  spec.validate();
  return spec;
}

DatasetEntry make_entry(const DatasetConfig& config, std::size_t id, std::uint64_t seed) {
  DatasetEntry e;
  e.id = id;
  e.fine = draw_fine_spec(config, derive_seed(seed, {id, 1}));
  DegradeOptions opts;
  opts.attenuation = config.attenuation;
  opts.noise_terms = config.noise_terms;
  opts.max_frequency = config.noise_max_frequency;
  e.coarse = degrade(e.fine, config.noise_amp, derive_seed(seed, {id, 2}), opts);

  const PointCloud fine_raw = sample_surface(e.fine, config.surface_points, derive_seed(seed, {id, 3}));
  const PointCloud coarse_raw = sample_surface(e.coarse, config.surface_points, derive_seed(seed, {id, 4}));
  auto [coarse_cloud, frame] = normalize_to_unit_box(coarse_raw);
  e.coarse_cloud = std::move(coarse_cloud);
  e.frame = frame;
  e.fine_cloud = frame.apply(fine_raw);

  const QuerySet fine_q = two_stage_downsample(e.fine_cloud, config.latent_len, derive_seed(seed, {id, 5}));
  e.matching = match_tokens(fine_q, e.coarse_cloud);
  e.cond = condition_vector(e.fine, config.cond_slots);
  return e;
}

Dataset generate_dataset(const DatasetConfig& config) {
  Dataset ds;
  const std::size_t n = config.num_shapes;
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(derive_seed(config.seed, {0x5b1}));
  std::shuffle(order.begin(), order.end(), rng.engine());
  const auto n_test = static_cast<std::size_t>(std::llround(config.holdout_fraction * static_cast<double>(n)));
  std::vector<std::string> split(n, "train");
  for (std::size_t i = n - n_test; i < n; ++i) split[order[i]] = "test";

  double dup = 0.0;
  for (std::size_t id = 0; id < n; ++id) {
    DatasetEntry e = make_entry(config, id, config.seed);
    e.split = split[id];
    dup += duplicate_fraction(e.matching);
    ds.entries.push_back(std::move(e));
  }
  ds.mean_duplicate_fraction = n ? dup / static_cast<double>(n) : 0.0;
  return ds;
}

json entry_to_json(const DatasetEntry& e) {
  return {{"id", e.id},
          {"split", e.split},
          {"fine", e.fine},
          {"coarse", e.coarse},
          {"frame", e.frame},
          {"fine_cloud", cloud_to_json(e.fine_cloud)},
          {"coarse_cloud", cloud_to_json(e.coarse_cloud)},
          {"matching", matching_to_json(e.matching)},
          {"cond", e.cond}};
}

DatasetEntry entry_from_json(const json& j) {
  DatasetEntry e;
  try {
    e.id = j.at("id");
    e.split = j.at("split");
    e.fine = j.at("fine");
    e.coarse = j.at("coarse");
    e.frame = j.at("frame");
    e.fine_cloud = cloud_from_json(j.at("fine_cloud"));
    e.coarse_cloud = cloud_from_json(j.at("coarse_cloud"));
    e.matching = matching_from_json(j.at("matching"), e.fine_cloud, e.coarse_cloud);
    e.cond = j.at("cond").get<std::vector<double>>();
  } catch (const json::exception& ex) {
    throw IoError(std::string("malformed dataset entry: ") + ex.what());
  }
  return e;
}

namespace {

std::string entry_file(std::size_t id) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "entry_%05zu.json", id);
  return buf;
}

}  // namespace

void save_dataset(const Dataset& ds, const RunConfig& config, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "entries");
  json list = json::array();
  for (const auto& e : ds.entries) {
    const std::string file = "entries/" + entry_file(e.id);
    write_json(dir / file, entry_to_json(e));
    list.push_back({{"id", e.id}, {"split", e.split}, {"file", file}, {"duplicate_fraction", duplicate_fraction(e.matching)}});
  }
  const json manifest = {{"format", "vecflow-dataset"},
                         {"version", 1},
                         {"num_entries", ds.entries.size()},
                         {"mean_duplicate_fraction", ds.mean_duplicate_fraction},
                         {"entries", list},
                         {"config", config_to_json(config)}};
  write_json(dir / "manifest.json", manifest);
}

Dataset load_dataset(const std::filesystem::path& dir) {
  const json manifest = read_json(dir / "manifest.json");
  Dataset ds;
  try {
    ds.mean_duplicate_fraction = manifest.at("mean_duplicate_fraction");
    for (const auto& item : manifest.at("entries")) {
      ds.entries.push_back(entry_from_json(read_json(dir / item.at("file").get<std::string>())));
    }
  } catch (const json::exception& ex) {
    throw IoError((dir / "manifest.json").string() + ": " + ex.what());
  }
  return ds;
}

std::vector<std::string> verify_dataset(const Dataset& ds, const DatasetConfig& config) {
  std::vector<std::string> issues;
  auto fail = [&issues](const DatasetEntry& e, const std::string& msg) {
    issues.push_back("entry " + std::to_string(e.id) + ": " + msg);
  };
  constexpr double kTol = 1e-9;
  for (const auto& e : ds.entries) {
    try {
      e.fine.validate();
      e.coarse.validate();
    } catch (const std::exception& ex) {
      fail(e, ex.what());
      continue;
    }
    if (e.split != "train" && e.split != "test") fail(e, "unknown split '" + e.split + "'");
    if (e.fine.base != e.coarse.base || e.fine.base_params != e.coarse.base_params) fail(e, "coarse base differs from fine base");
    if (e.fine_cloud.size() != config.surface_points || e.coarse_cloud.size() != config.surface_points) {
      fail(e, "cloud size differs from surface_points");
    }
    if (e.coarse_cloud.size() < 2) continue;

    const Aabb box = bounding_box(e.coarse_cloud);
    const Vec3 ext = box.extent(), ctr = box.center();
    const double longest = std::max({ext.x, ext.y, ext.z});
    if (std::abs(longest - 1.0) > kTol) fail(e, "coarse cloud longest side is " + std::to_string(longest));
    if (std::max({std::abs(ctr.x), std::abs(ctr.y), std::abs(ctr.z)}) > kTol) fail(e, "coarse cloud is not centered");

    // Fine and coarse differ only in detail, so their boxes differ by at most
    // twice the total displacement.
    const double slack = 2.0 * (e.fine.max_detail() + e.coarse.max_detail()) * e.frame.scale + kTol;
    const Aabb fbox = bounding_box(e.fine_cloud);
    for (int a = 0; a < 3; ++a) {
      if (std::abs(fbox.lo[a] - box.lo[a]) > slack || std::abs(fbox.hi[a] - box.hi[a]) > slack) {
        fail(e, "fine cloud is not aligned with the coarse cloud");
        break;
      }
    }

    const FramedShape fine = e.fine_shape(), coarse = e.coarse_shape();
    for (std::size_t i = 0; i < e.fine_cloud.size(); i += 97) {
      if (std::abs(fine.sdf(e.fine_cloud.points[i])) > 1e-4 * e.frame.scale) {
        fail(e, "fine cloud point " + std::to_string(i) + " is off the surface");
        break;
      }
    }
    for (std::size_t i = 0; i < e.coarse_cloud.size(); i += 97) {
      if (std::abs(coarse.sdf(e.coarse_cloud.points[i])) > 1e-4 * e.frame.scale) {
        fail(e, "coarse cloud point " + std::to_string(i) + " is off the surface");
        break;
      }
    }

    const auto& m = e.matching;
    if (m.map.size() != config.latent_len || m.fine_queries.size() != config.latent_len ||
        m.coarse_queries.size() != config.latent_len) {
      fail(e, "matching size differs from latent_len");
      continue;
    }
    for (std::size_t i = 0; i < m.map.size(); ++i) {
      const std::size_t fi = m.fine_queries.source_indices[i];
      if (fi >= e.fine_cloud.size() || m.map[i] >= e.coarse_cloud.size()) {
        fail(e, "matching index out of range at " + std::to_string(i));
        break;
      }
      const Vec3 q = e.fine_cloud.points[fi];
      if (!(m.fine_queries.query_points.points[i] == q) ||
          !(m.coarse_queries.query_points.points[i] == e.coarse_cloud.points[m.map[i]])) {
        fail(e, "anchor points do not match their source indices at " + std::to_string(i));
        break;
      }
      const double d = squared_distance(q, e.coarse_cloud.points[m.map[i]]);
      bool nearest = true;
      for (const auto& p : e.coarse_cloud.points) {
        if (squared_distance(q, p) < d) {
          nearest = false;
          break;
        }
      }
      if (!nearest) {
        fail(e, "coarse anchor " + std::to_string(i) + " is not the nearest coarse point");
        break;
      }
    }
    if (e.cond != condition_vector(e.fine, config.cond_slots)) fail(e, "condition vector does not match the fine spec");
  }
  return issues;
}

}  // namespace vecflow
