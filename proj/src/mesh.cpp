#include "pinchlab/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numbers>
#include <tuple>

#include "pinchlab/error.hpp"

namespace pinchlab {

namespace {

constexpr double kPi = std::numbers::pi;

int encode(int face, int slot) { return 3 * face + slot; }
Corner decode(int code) { return Corner{code / 3, code % 3}; }

// Kahan's numerically stable Heron formula.
double heron_area(double a, double b, double c) {
  std::array<double, 3> s{a, b, c};
  std::sort(s.begin(), s.end(), std::greater<>());
  const double x = s[0], y = s[1], z = s[2];
  const double p = (x + (y + z)) * (z - (x - y)) * (z + (x - y)) * (x + (y - z));
  return 0.25 * std::sqrt(std::max(p, 0.0));
}

// Angle opposite to side c in a triangle with sides a, b, c.
double opposite_angle(double a, double b, double c) {
  const double cosine = (a * a + b * b - c * c) / (2.0 * a * b);
  return std::acos(std::clamp(cosine, -1.0, 1.0));
}

struct HalfEdge {
  int from;
  int to;
  int code;
};

void fnv_mix(std::uint64_t& h, const void* data, std::size_t n) {
  const auto* bytes = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= bytes[i];
    h *= 1099511628211ULL;
  }
}

} // namespace

SimplicialSurface SimplicialSurface::embedded(std::vector<Vec3> positions, std::vector<Face> faces) {
  SimplicialSurface m;
  m.num_vertices_ = static_cast<int>(positions.size());
  for (const auto& p : positions)
    if (!p.allFinite()) throw InvalidArgument("vertex position is not finite");
  m.positions_ = std::move(positions);
  m.faces_ = std::move(faces);
  m.build(nullptr);
  return m;
}

SimplicialSurface SimplicialSurface::intrinsic(int num_vertices, std::vector<Face> faces,
                                               const std::map<EdgeKey, double>& lengths) {
  SimplicialSurface m;
  m.num_vertices_ = num_vertices;
  m.faces_ = std::move(faces);
  m.build(&lengths);
  return m;
}

const std::vector<Vec3>& SimplicialSurface::positions() const {
  if (!positions_) throw InvalidArgument("mesh is intrinsic: no embedding available");
  return *positions_;
}

void SimplicialSurface::build(const std::map<EdgeKey, double>* lengths) {
  const int nv = num_vertices_;
  const int nf = num_faces();
  if (nv <= 0 || nf <= 0) throw InvalidArgument("mesh has no vertices or faces");

  for (int f = 0; f < nf; ++f) {
    const Face& t = faces_[f];
    for (int q = 0; q < 3; ++q)
      if (t[q] < 0 || t[q] >= nv)
        throw InvalidArgument("face " + std::to_string(f) + " references vertex " +
                              std::to_string(t[q]) + " outside [0, " + std::to_string(nv) + ")");
    if (t[0] == t[1] || t[1] == t[2] || t[2] == t[0])
      throw InvalidArgument("face " + std::to_string(f) + " repeats a vertex");
  }

  std::vector<HalfEdge> half;
  half.reserve(3 * static_cast<std::size_t>(nf));
  for (int f = 0; f < nf; ++f)
    for (int q = 0; q < 3; ++q) half.push_back({faces_[f][q], faces_[f][(q + 1) % 3], encode(f, q)});
  std::sort(half.begin(), half.end(), [](const HalfEdge& x, const HalfEdge& y) {
    return std::tie(x.from, x.to) < std::tie(y.from, y.to);
  });
  for (std::size_t i = 1; i < half.size(); ++i)
    if (half[i].from == half[i - 1].from && half[i].to == half[i - 1].to)
      throw InvalidArgument("directed edge " + std::to_string(half[i].from) + "->" +
                            std::to_string(half[i].to) +
                            " appears twice: inconsistent orientation or non-manifold edge");
  auto find_half = [&](int from, int to) -> int {
    auto it = std::lower_bound(half.begin(), half.end(), std::pair{from, to},
                               [](const HalfEdge& h, const std::pair<int, int>& k) {
                                 return std::tie(h.from, h.to) < std::tie(k.first, k.second);
                               });
    if (it == half.end() || it->from != from || it->to != to) return -1;
    return it->code;
  };

  edges_.clear();
  edge_corners_.clear();
  for (const HalfEdge& h : half) {
    if (h.from > h.to) continue;
    const int twin = find_half(h.to, h.from);
    if (twin < 0)
      throw InvalidArgument("edge " + std::to_string(h.from) + "-" + std::to_string(h.to) +
                            " is a boundary edge or has inconsistent orientation");
    edges_.push_back({h.from, h.to});
    edge_corners_.push_back({h.code, twin});
  }
  for (const HalfEdge& h : half)
    if (h.from > h.to && find_half(h.to, h.from) < 0)
      throw InvalidArgument("edge " + std::to_string(h.to) + "-" + std::to_string(h.from) +
                            " is a boundary edge or has inconsistent orientation");

  edge_lengths_.assign(edges_.size(), 0.0);
  for (std::size_t e = 0; e < edges_.size(); ++e) {
    double len;
    if (positions_) {
      len = ((*positions_)[edges_[e].a] - (*positions_)[edges_[e].b]).norm();
    } else {
      auto it = lengths->find(edges_[e]);
      if (it == lengths->end())
        throw InvalidArgument("missing length for edge " + std::to_string(edges_[e].a) + "-" +
                              std::to_string(edges_[e].b));
      len = it->second;
    }
    if (!(len > 0.0) || !std::isfinite(len))
      throw InvalidArgument("edge " + std::to_string(edges_[e].a) + "-" +
                            std::to_string(edges_[e].b) + " has non-positive length");
    edge_lengths_[e] = len;
  }

  face_lengths_.resize(nf);
  corner_angles_.resize(nf);
  face_areas_.resize(nf);
  vertex_areas_ = Eigen::VectorXd::Zero(nv);
  total_volume_ = 0.0;
  for (int f = 0; f < nf; ++f) {
    const Face& t = faces_[f];
    auto& l = face_lengths_[f];
    for (int q = 0; q < 3; ++q) l[q] = edge_length(t[q], t[(q + 1) % 3]);
    for (int q = 0; q < 3; ++q) {
      const double side = l[(q + 1) % 3];
      const double others = l[q] + l[(q + 2) % 3];
      if (!(side < others))
        throw InvalidArgument("face " + std::to_string(f) +
                              " violates the strict triangle inequality (degenerate face)");
    }
    // Angle at t[q] lies between edges q (t[q]->t[q+1]) and q+2 (t[q+2]->t[q]).
    for (int q = 0; q < 3; ++q)
      corner_angles_[f][q] = opposite_angle(l[q], l[(q + 2) % 3], l[(q + 1) % 3]);
    const double area = heron_area(l[0], l[1], l[2]);
    if (!(area > 0.0)) throw InvalidArgument("face " + std::to_string(f) + " has zero area");
    face_areas_[f] = area;
    total_volume_ += area;
    for (int q = 0; q < 3; ++q) vertex_areas_[t[q]] += area / 3.0;
  }

  std::vector<int> corner_count(nv, 0);
  for (const Face& t : faces_)
    for (int v : t) ++corner_count[v];
  stars_.assign(nv, {});
  for (int v = 0; v < nv; ++v)
    if (corner_count[v] == 0) throw InvalidArgument("vertex " + std::to_string(v) + " is isolated");
  std::vector<int> first_corner(nv, -1);
  for (int f = 0; f < nf; ++f)
    for (int q = 0; q < 3; ++q)
      if (first_corner[faces_[f][q]] < 0) first_corner[faces_[f][q]] = encode(f, q);
  for (int v = 0; v < nv; ++v) {
    auto& star = stars_[v];
    int code = first_corner[v];
    do {
      const Corner c = decode(code);
      star.push_back(c);
      const int next_vertex = faces_[c.face][(c.slot + 2) % 3];
      code = find_half(v, next_vertex);
      if (code < 0 || static_cast<int>(star.size()) > corner_count[v])
        throw InvalidArgument("vertex " + std::to_string(v) + " is not a manifold vertex");
    } while (code != first_corner[v]);
    if (static_cast<int>(star.size()) != corner_count[v])
      throw InvalidArgument("vertex " + std::to_string(v) + " has a disconnected star");
  }
}

int SimplicialSurface::edge_index(int i, int j) const {
  const EdgeKey key = EdgeKey::of(i, j);
  auto it = std::lower_bound(edges_.begin(), edges_.end(), key);
  if (it == edges_.end() || *it != key)
    throw InvalidArgument("no edge " + std::to_string(i) + "-" + std::to_string(j));
  return static_cast<int>(it - edges_.begin());
}

Corner SimplicialSurface::directed_edge_corner(int i, int j) const {
  const int e = edge_index(i, j);
  return decode(edge_corners_[e][i < j ? 0 : 1]);
}

double SimplicialSurface::mean_edge_length() const {
  double s = 0.0;
  for (double l : edge_lengths_) s += l;
  return s / static_cast<double>(edge_lengths_.size());
}

double SimplicialSurface::angle_sum(int v) const {
  double s = 0.0;
  for (const Corner& c : stars_[v]) s += corner_angles_[c.face][c.slot];
  return s;
}

std::uint64_t SimplicialSurface::content_hash() const {
  std::uint64_t h = 1469598103934665603ULL;
  fnv_mix(h, &num_vertices_, sizeof num_vertices_);
  for (const Face& t : faces_) fnv_mix(h, t.data(), sizeof(int) * 3);
  for (double l : edge_lengths_) fnv_mix(h, &l, sizeof l);
  if (positions_)
    for (const Vec3& p : *positions_) fnv_mix(h, p.data(), sizeof(double) * 3);
  return h;
}

SimplicialSurface SimplicialSurface::scaled(double factor) const {
  if (!(factor > 0.0)) throw InvalidArgument("scale factor must be positive");
  if (positions_) {
    std::vector<Vec3> p = *positions_;
    for (auto& x : p) x *= factor;
    return embedded(std::move(p), faces_);
  }
  std::map<EdgeKey, double> lengths;
  for (std::size_t e = 0; e < edges_.size(); ++e) lengths[edges_[e]] = edge_lengths_[e] * factor;
  return intrinsic(num_vertices_, faces_, lengths);
}

SimplicialSurface SimplicialSurface::rigidly_moved(const Eigen::Matrix3d& rotation,
                                                   const Vec3& translation) const {
  std::vector<Vec3> p = positions();
  for (auto& x : p) x = rotation * x + translation;
  return embedded(std::move(p), faces_);
}

SimplicialSurface SimplicialSurface::relabeled(const std::vector<int>& perm) const {
  if (static_cast<int>(perm.size()) != num_vertices_)
    throw InvalidArgument("permutation size does not match vertex count");
  std::vector<Face> faces = faces_;
  for (auto& t : faces)
    for (int& v : t) v = perm[v];
  if (positions_) {
    std::vector<Vec3> p(num_vertices_);
    for (int v = 0; v < num_vertices_; ++v) p[perm[v]] = (*positions_)[v];
    return embedded(std::move(p), std::move(faces));
  }
  std::map<EdgeKey, double> lengths;
  for (std::size_t e = 0; e < edges_.size(); ++e)
    lengths[EdgeKey::of(perm[edges_[e].a], perm[edges_[e].b])] = edge_lengths_[e];
  return intrinsic(num_vertices_, std::move(faces), lengths);
}

double CurvatureField::gauss_bonnet_sum(const SimplicialSurface& m) const {
  return K.dot(m.vertex_areas());
}

CurvatureField gaussian_curvature(const SimplicialSurface& m) {
  CurvatureField out;
  out.angle_defect.resize(m.num_vertices());
  out.K.resize(m.num_vertices());
  for (int v = 0; v < m.num_vertices(); ++v) {
    out.angle_defect[v] = 2.0 * kPi - m.angle_sum(v);
    out.K[v] = out.angle_defect[v] / m.vertex_area(v);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Generators

namespace {

struct UnitIcosphere {
  std::vector<Vec3> vertices;
  std::vector<Face> faces;
};

UnitIcosphere unit_icosphere(int subdivisions) {
  if (subdivisions < 0 || subdivisions > kMaxSubdivisions)
    throw InvalidArgument("subdivisions must lie in [0, " + std::to_string(kMaxSubdivisions) +
                          "], got " + std::to_string(subdivisions));
  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  UnitIcosphere s;
  s.vertices = {{-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0}, {0, -1, t}, {0, 1, t},
                {0, -1, -t}, {0, 1, -t}, {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
  for (auto& v : s.vertices) v.normalize();
  s.faces = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
             {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
             {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
             {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};
  for (int level = 0; level < subdivisions; ++level) {
    std::map<EdgeKey, int> midpoint;
    auto mid = [&](int a, int b) {
      const EdgeKey key = EdgeKey::of(a, b);
      auto it = midpoint.find(key);
      if (it != midpoint.end()) return it->second;
      s.vertices.push_back((s.vertices[a] + s.vertices[b]).normalized());
      const int id = static_cast<int>(s.vertices.size()) - 1;
      midpoint.emplace(key, id);
      return id;
    };
    std::vector<Face> next;
    next.reserve(s.faces.size() * 4);
    for (const Face& f : s.faces) {
      const int ab = mid(f[0], f[1]), bc = mid(f[1], f[2]), ca = mid(f[2], f[0]);
      next.push_back({f[0], ab, ca});
      next.push_back({f[1], bc, ab});
      next.push_back({f[2], ca, bc});
      next.push_back({ab, bc, ca});
    }
    s.faces = std::move(next);
  }
  return s;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Uniform double in [0,1) from counter `i` of stream `seed`.
double counter_uniform(std::uint64_t seed, std::uint64_t i) {
  const std::uint64_t bits = splitmix64(seed ^ splitmix64(i));
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

constexpr int kProfileTerms = 8;

} // namespace

SimplicialSurface generate_icosphere(double radius, int subdivisions) {
  if (!(radius > 0.0)) throw InvalidArgument("icosphere radius must be positive");
  UnitIcosphere s = unit_icosphere(subdivisions);
  for (auto& v : s.vertices) v *= radius;
  return SimplicialSurface::embedded(std::move(s.vertices), std::move(s.faces));
}

SimplicialSurface generate_ellipsoid(double a, double b, double c, int subdivisions) {
  if (!(a > 0.0 && b > 0.0 && c > 0.0)) throw InvalidArgument("ellipsoid axes must be positive");
  UnitIcosphere s = unit_icosphere(subdivisions);
  for (auto& v : s.vertices) v = Vec3(a * v.x(), b * v.y(), c * v.z());
  return SimplicialSurface::embedded(std::move(s.vertices), std::move(s.faces));
}

SimplicialSurface generate_flat_torus(double length1, double length2, int n1, int n2) {
  if (!(length1 > 0.0 && length2 > 0.0)) throw InvalidArgument("torus side lengths must be positive");
  if (n1 < 3 || n2 < 3) throw InvalidArgument("torus grid counts must be at least 3");
  const double h1 = length1 / n1, h2 = length2 / n2;
  const double diag = std::hypot(h1, h2);
  std::vector<Face> faces;
  std::map<EdgeKey, double> lengths;
  for (int i = 0; i < n1; ++i)
    for (int j = 0; j < n2; ++j) {
      const int v00 = torus_vertex(i, j, n1, n2);
      const int v10 = torus_vertex(i + 1, j, n1, n2);
      const int v11 = torus_vertex(i + 1, j + 1, n1, n2);
      const int v01 = torus_vertex(i, j + 1, n1, n2);
      faces.push_back({v00, v10, v11});
      faces.push_back({v00, v11, v01});
      lengths[EdgeKey::of(v00, v10)] = h1;
      lengths[EdgeKey::of(v00, v01)] = h2;
      lengths[EdgeKey::of(v00, v11)] = diag;
    }
  return SimplicialSurface::intrinsic(n1 * n2, std::move(faces), lengths);
}

double perturbation_profile(const Vec3& u, int frequency, std::uint64_t seed) {
  double g = 0.0;
  for (int term = 0; term < kProfileTerms; ++term) {
    const std::uint64_t base = 4ULL * static_cast<std::uint64_t>(term);
    // Uniform direction on S^2 via (z, phi) sampling, plus a uniform phase.
    const double z = 2.0 * counter_uniform(seed, base) - 1.0;
    const double phi = 2.0 * kPi * counter_uniform(seed, base + 1);
    const double phase = 2.0 * kPi * counter_uniform(seed, base + 2);
    const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    const Vec3 w(r * std::cos(phi), r * std::sin(phi), z);
    g += std::cos(frequency * w.dot(u) + phase);
  }
  return g / kProfileTerms;
}

SimplicialSurface generate_perturbed_sphere(double amplitude, int frequency, std::uint64_t seed,
                                            int subdivisions) {
  if (!(amplitude >= 0.0 && amplitude <= 0.5))
    throw InvalidArgument("perturbation amplitude must lie in [0, 0.5]");
  UnitIcosphere s = unit_icosphere(subdivisions);
  if (amplitude > 0.0)
    for (auto& v : s.vertices) v *= 1.0 + amplitude * perturbation_profile(v, frequency, seed);
  return SimplicialSurface::embedded(std::move(s.vertices), std::move(s.faces));
}

} // namespace pinchlab
