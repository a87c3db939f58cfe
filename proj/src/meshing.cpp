#include "vecflow/meshing.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <utility>

#include "vecflow/errors.hpp"
#include "vecflow/rng.hpp"

namespace vecflow {

Vec3 SdfGrid::position(std::size_t ix, std::size_t iy, std::size_t iz) const {
  const Vec3 step = cell_size();
  return {bounds.lo.x + step.x * static_cast<double>(ix), bounds.lo.y + step.y * static_cast<double>(iy),
          bounds.lo.z + step.z * static_cast<double>(iz)};
}

Vec3 SdfGrid::cell_size() const { return bounds.extent() / static_cast<double>(resolution - 1); }

namespace {

void check_grid_args(std::size_t resolution, const Aabb& bounds) {
  if (resolution < 2) throw ContractError("build_sdf_grid: resolution must be >= 2");
  const Vec3 e = bounds.extent();
  if (!(e.x > 0 && e.y > 0 && e.z > 0)) throw ContractError("build_sdf_grid: empty bounds");
}

std::string fmt_point(const Vec3& p) {
  std::ostringstream os;
  os.imbue(std::locale::classic());
  os << '(' << p.x << ", " << p.y << ", " << p.z << ')';
  return os.str();
}

}  // namespace

SdfGrid build_sdf_grid(const PointField& fn, std::size_t resolution, const Aabb& bounds) {
  return build_sdf_grid(
      [&fn](const std::vector<Vec3>& pts) {
        std::vector<double> out;
        out.reserve(pts.size());
        for (const auto& p : pts) out.push_back(fn(p));
        return out;
      },
      resolution, bounds, 4096);
}

SdfGrid build_sdf_grid(const BatchField& fn, std::size_t resolution, const Aabb& bounds, std::size_t batch_size) {
  check_grid_args(resolution, bounds);
  if (batch_size == 0) batch_size = 1;
  SdfGrid grid;
  grid.resolution = resolution;
  grid.bounds = bounds;
  const std::size_t total = resolution * resolution * resolution;
  grid.values.resize(total);
  std::vector<Vec3> batch;
  batch.reserve(batch_size);
  std::size_t first = 0;
  auto flush = [&]() {
    const auto vals = fn(batch);
    if (vals.size() != batch.size()) throw ContractError("build_sdf_grid: field returned wrong number of values");
    for (std::size_t i = 0; i < vals.size(); ++i) {
      if (!std::isfinite(vals[i])) throw NumericError("non-finite SDF value at " + fmt_point(batch[i]));
      grid.values[first + i] = vals[i];
    }
    first += batch.size();
    batch.clear();
  };
  for (std::size_t ix = 0; ix < resolution; ++ix)
    for (std::size_t iy = 0; iy < resolution; ++iy)
      for (std::size_t iz = 0; iz < resolution; ++iz) {
        batch.push_back(grid.position(ix, iy, iz));
        if (batch.size() == batch_size) flush();
      }
  if (!batch.empty()) flush();
  return grid;
}

// ---------------------------------------------------------------------------
// Table construction.
//
// Each cube face is treated on its own: crossed face edges are joined into
// segments, and on ambiguous faces (diagonal inside corners) every inside
// corner is cut off separately. Because the rule only looks at the four
// corners of a face, the two cubes sharing a face always produce the same
// segments, which makes the extracted surface closed. Segments are oriented
// with the inside region on their left when seen from outside the cube; the
// resulting loops are fan-triangulated.

namespace {

Vec3 corner_pos(int c) { return {double(c & 1), double((c >> 1) & 1), double((c >> 2) & 1)}; }

MarchingCubesTable build_table() {
  MarchingCubesTable table{};
  std::map<std::pair<int, int>, int> edge_id;
  int e = 0;
  for (int a = 0; a < 8; ++a)
    for (int bit = 0; bit < 3; ++bit) {
      const int b = a | (1 << bit);
      if (b == a) continue;
      table.edge_corners[e] = {a, b};
      edge_id[{a, b}] = e++;
    }
  auto edge_between = [&](int a, int b) { return edge_id.at({std::min(a, b), std::max(a, b)}); };
  auto edge_mid = [&](int edge) {
    return (corner_pos(table.edge_corners[edge][0]) + corner_pos(table.edge_corners[edge][1])) * 0.5;
  };

  // Faces as cyclic corner lists with outward normals.
  struct Face {
    std::array<int, 4> corners;
    Vec3 normal;
  };
  std::vector<Face> faces;
  for (int axis = 0; axis < 3; ++axis) {
    const int u = (axis + 1) % 3, v = (axis + 2) % 3;
    for (int side = 0; side < 2; ++side) {
      Face f;
      const int base = side << axis;
      f.corners = {base, base | (1 << u), base | (1 << u) | (1 << v), base | (1 << v)};
      Vec3 n;
      const double s = side ? 1.0 : -1.0;
      n = axis == 0 ? Vec3{s, 0, 0} : (axis == 1 ? Vec3{0, s, 0} : Vec3{0, 0, s});
      f.normal = n;
      faces.push_back(f);
    }
  }

  for (int mask = 0; mask < 256; ++mask) {
    auto inside = [mask](int c) { return ((mask >> c) & 1) != 0; };
    std::array<int, 12> next;
    next.fill(-1);
    auto add_segment = [&](int ea, int eb, int inside_corner, const Vec3& n) {
      const Vec3 A = edge_mid(ea), B = edge_mid(eb);
      const Vec3 left = cross(n, B - A);
      if (dot(left, corner_pos(inside_corner) - A) < 0) std::swap(ea, eb);
      if (next[ea] != -1) throw std::logic_error("marching cubes table: edge has two outgoing segments");
      next[ea] = eb;
    };
    for (const auto& f : faces) {
      std::vector<int> crossed;
      int first_inside = -1;
      for (int i = 0; i < 4; ++i) {
        const int a = f.corners[i], b = f.corners[(i + 1) % 4];
        if (inside(a) != inside(b)) crossed.push_back(edge_between(a, b));
        if (inside(a) && first_inside < 0) first_inside = a;
      }
      if (crossed.size() == 2) {
        add_segment(crossed[0], crossed[1], first_inside, f.normal);
      } else if (crossed.size() == 4) {
        for (int i = 0; i < 4; ++i) {
          const int c = f.corners[i];
          if (!inside(c)) continue;
          const int prev = f.corners[(i + 3) % 4], nxt = f.corners[(i + 1) % 4];
          add_segment(edge_between(prev, c), edge_between(c, nxt), c, f.normal);
        }
      }
    }
    std::array<bool, 12> used{};
    for (int start = 0; start < 12; ++start) {
      if (next[start] < 0 || used[start]) continue;
      std::vector<int> loop;
      for (int cur = start; !used[cur]; cur = next[cur]) {
        if (next[cur] < 0) throw std::logic_error("marching cubes table: open loop");
        used[cur] = true;
        loop.push_back(cur);
      }
      // Loop winding puts the inside on the right-hand normal; flip so that
      // triangles face the outside.
      for (std::size_t i = 1; i + 1 < loop.size(); ++i) {
        table.triangles[mask].insert(table.triangles[mask].end(), {loop[0], loop[i + 1], loop[i]});
      }
    }
  }
  return table;
}

}  // namespace

const MarchingCubesTable& marching_cubes_table() {
  static const MarchingCubesTable table = build_table();
  return table;
}

double triangle_area(const TriMesh& mesh, std::size_t t) {
  const auto& tri = mesh.triangles[t];
  const Vec3 a = mesh.vertices[tri[0]], b = mesh.vertices[tri[1]], c = mesh.vertices[tri[2]];
  return 0.5 * norm(cross(b - a, c - a));
}

TriMesh marching_cubes(const SdfGrid& grid, double iso) {
  const std::size_t R = grid.resolution;
  if (R < 2 || grid.values.size() != R * R * R) throw ContractError("marching_cubes: invalid grid");
  const auto& table = marching_cubes_table();
  TriMesh mesh;
  // Vertex id per lattice edge: key = 3 * lattice_index + axis.
  std::vector<std::int64_t> vertex_of(3 * R * R * R, -1);

  auto edge_vertex = [&](std::size_t ix, std::size_t iy, std::size_t iz, int edge) -> std::uint32_t {
    const int a = table.edge_corners[edge][0], b = table.edge_corners[edge][1];
    const int axis = (a ^ b) == 1 ? 0 : ((a ^ b) == 2 ? 1 : 2);
    const std::size_t ax = ix + (a & 1), ay = iy + ((a >> 1) & 1), az = iz + ((a >> 2) & 1);
    const std::size_t la = grid.index(ax, ay, az);
    const std::size_t key = 3 * la + static_cast<std::size_t>(axis);
    if (vertex_of[key] >= 0) return static_cast<std::uint32_t>(vertex_of[key]);
    const std::size_t bx = ix + (b & 1), by = iy + ((b >> 1) & 1), bz = iz + ((b >> 2) & 1);
    const double va = grid.values[la], vb = grid.values[grid.index(bx, by, bz)];
    const double t = (iso - va) / (vb - va);
    const Vec3 pa = grid.position(ax, ay, az), pb = grid.position(bx, by, bz);
    mesh.vertices.push_back(pa + (pb - pa) * t);
    vertex_of[key] = static_cast<std::int64_t>(mesh.vertices.size() - 1);
    return static_cast<std::uint32_t>(vertex_of[key]);
  };

  for (std::size_t ix = 0; ix + 1 < R; ++ix)
    for (std::size_t iy = 0; iy + 1 < R; ++iy)
      for (std::size_t iz = 0; iz + 1 < R; ++iz) {
        int mask = 0;
        for (int c = 0; c < 8; ++c) {
          const double v = grid.values[grid.index(ix + (c & 1), iy + ((c >> 1) & 1), iz + ((c >> 2) & 1))];
          if (v < iso) mask |= 1 << c;
        }
        const auto& tris = table.triangles[mask];
        for (std::size_t k = 0; k < tris.size(); k += 3) {
          const std::array<std::uint32_t, 3> tri{edge_vertex(ix, iy, iz, tris[k]), edge_vertex(ix, iy, iz, tris[k + 1]),
                                                 edge_vertex(ix, iy, iz, tris[k + 2])};
          mesh.triangles.push_back(tri);
          if (triangle_area(mesh, mesh.triangles.size() - 1) <= 1e-12) mesh.triangles.pop_back();
        }
      }
  return mesh;
}

EdgeReport edge_report(const TriMesh& mesh) {
  // directed count per undirected edge: (forward uses, backward uses)
  std::map<std::pair<std::uint32_t, std::uint32_t>, std::pair<int, int>> uses;
  for (const auto& t : mesh.triangles) {
    for (int i = 0; i < 3; ++i) {
      const std::uint32_t a = t[i], b = t[(i + 1) % 3];
      auto& u = uses[{std::min(a, b), std::max(a, b)}];
      (a < b ? u.first : u.second) += 1;
    }
  }
  EdgeReport r;
  r.edges = uses.size();
  for (const auto& [_, u] : uses) {
    const int total = u.first + u.second;
    if (total == 1) ++r.boundary_edges;
    if (total > 2) ++r.nonmanifold_edges;
    if (total == 2 && (u.first == 2 || u.second == 2)) ++r.misoriented_edges;
  }
  return r;
}

void export_obj(const TriMesh& mesh, const std::filesystem::path& destination) {
  if (destination.has_parent_path()) std::filesystem::create_directories(destination.parent_path());
  std::ofstream os(destination, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot write OBJ: " + destination.string());
  os << "# vecflow mesh: " << mesh.vertices.size() << " vertices, " << mesh.triangles.size() << " triangles\n";
  char buf[64];
  auto put = [&](double v) {
    auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 6);
    os.put(' ');
    os.write(buf, res.ptr - buf);
  };
  for (const auto& v : mesh.vertices) {
    os << 'v';
    put(v.x);
    put(v.y);
    put(v.z);
    os << '\n';
  }
  for (const auto& t : mesh.triangles) os << "f " << t[0] + 1 << ' ' << t[1] + 1 << ' ' << t[2] + 1 << '\n';
  if (!os) throw IoError("write failed: " + destination.string());
}

TriMesh read_obj(const std::filesystem::path& source) {
  std::ifstream is(source);
  if (!is) throw IoError("cannot read OBJ: " + source.string());
  TriMesh mesh;
  std::string line;
  std::size_t lineno = 0;
  auto parse_double = [&](std::string_view tok) {
    double v = 0.0;
    auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (res.ec != std::errc()) throw IoError(source.string() + ":" + std::to_string(lineno) + ": bad number");
    return v;
  };
  while (std::getline(is, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "v") {
      std::string x, y, z;
      ls >> x >> y >> z;
      mesh.vertices.push_back({parse_double(x), parse_double(y), parse_double(z)});
    } else if (tag == "f") {
      std::vector<std::uint32_t> idx;
      std::string tok;
      while (ls >> tok) {
        const long long raw = std::stoll(tok.substr(0, tok.find('/')));
        const long long i = raw < 0 ? static_cast<long long>(mesh.vertices.size()) + raw : raw - 1;
        if (i < 0) throw IoError(source.string() + ":" + std::to_string(lineno) + ": bad face index");
        idx.push_back(static_cast<std::uint32_t>(i));
      }
      for (std::size_t k = 1; k + 1 < idx.size(); ++k) mesh.triangles.push_back({idx[0], idx[k], idx[k + 1]});
    }
  }
  for (const auto& t : mesh.triangles)
    for (auto i : t)
      if (i >= mesh.vertices.size()) throw IoError(source.string() + ": face index out of range");
  return mesh;
}

PointCloud sample_mesh_surface(const TriMesh& mesh, std::size_t n, std::uint64_t seed) {
  if (mesh.triangles.empty()) throw ContractError("sample_mesh_surface: mesh has no triangles");
  std::vector<double> cdf;
  cdf.reserve(mesh.triangles.size());
  double total = 0.0;
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) cdf.push_back(total += triangle_area(mesh, t));
  if (!(total > 0.0)) throw ContractError("sample_mesh_surface: mesh has zero area");
  Rng rng(derive_seed(seed, {0x0b1}));
  PointCloud out;
  out.points.reserve(n);
  out.normals.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double r = rng.uniform(0.0, total);
    const auto t = std::min<std::size_t>(std::upper_bound(cdf.begin(), cdf.end(), r) - cdf.begin(), cdf.size() - 1);
    const auto& tri = mesh.triangles[t];
    const Vec3 a = mesh.vertices[tri[0]], b = mesh.vertices[tri[1]], c = mesh.vertices[tri[2]];
    double u = rng.uniform(), v = rng.uniform();
    if (u + v > 1.0) {
      u = 1.0 - u;
      v = 1.0 - v;
    }
    out.points.push_back(a + (b - a) * u + (c - a) * v);
    const Vec3 nrm = cross(b - a, c - a);
    const double len = norm(nrm);
    out.normals.push_back(len > 0 ? nrm / len : Vec3{0, 0, 1});
  }
  return out;
}

namespace {

double mean_nearest(const PointCloud& from, const PointCloud& to, bool squared) {
  double acc = 0.0;
  for (const auto& p : from.points) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& q : to.points) best = std::min(best, squared_distance(p, q));
    acc += squared ? best : std::sqrt(best);
  }
  return acc / static_cast<double>(from.size());
}

}  // namespace

double chamfer_distance(const PointCloud& a, const PointCloud& b, bool squared) {
  if (a.empty() || b.empty()) throw ContractError("chamfer_distance: empty cloud");
  return 0.5 * (mean_nearest(a, b, squared) + mean_nearest(b, a, squared));
}

double sdf_mae(const PointField& pred, const PointField& truth, const PointCloud& sample_points) {
  if (sample_points.empty()) throw ContractError("sdf_mae: no sample points");
  double acc = 0.0;
  for (const auto& p : sample_points.points) acc += std::abs(pred(p) - truth(p));
  return acc / static_cast<double>(sample_points.size());
}

}  // namespace vecflow
