#include "pinchlab/geodesy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <mutex>
#include <numbers>
#include <queue>
#include <random>
#include <tuple>

#include "pinchlab/error.hpp"
#include "pinchlab/operators.hpp"

namespace pinchlab {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kInf = std::numeric_limits<double>::infinity();

struct Graph {
  std::vector<int> offsets;
  std::vector<int> targets;
  std::vector<double> weights;
};

int steiner_node(const SimplicialSurface& m, int steiner, int edge, int i) {
  return m.num_vertices() + steiner * edge + i;
}

Graph build_graph(const SimplicialSurface& m, int steiner) {
  const int num_nodes = m.num_vertices() + steiner * m.num_edges();
  std::vector<std::tuple<int, int, double>> arcs;
  const int per_side = steiner + 2;
  arcs.reserve(static_cast<std::size_t>(m.num_faces()) * (3 * per_side) * (3 * per_side) / 2);

  std::vector<int> ids;
  std::vector<Eigen::Vector2d> pts;
  std::vector<int> side;  // which face edge a point lies on, -1 for corners
  std::vector<int> pos;   // position along that edge
  for (int f = 0; f < m.num_faces(); ++f) {
    const Face& t = m.faces()[f];
    const double l0 = m.face_edge_length(f, 0), l2 = m.face_edge_length(f, 2);
    const double c0 = m.corner_angle(f, 0);
    const std::array<Eigen::Vector2d, 3> corner = {Eigen::Vector2d(0, 0), Eigen::Vector2d(l0, 0),
                                                   Eigen::Vector2d(l2 * std::cos(c0), l2 * std::sin(c0))};
    ids.clear();
    pts.clear();
    side.clear();
    pos.clear();
    for (int q = 0; q < 3; ++q) {
      ids.push_back(t[q]);
      pts.push_back(corner[q]);
      side.push_back(-1);
      pos.push_back(q);
    }
    for (int q = 0; q < 3; ++q) {
      const int a = t[q], b = t[(q + 1) % 3];
      const int e = m.edge_index(a, b);
      const bool forward = m.edges()[e].a == a;
      for (int i = 0; i < steiner; ++i) {
        const double s = static_cast<double>(i + 1) / (steiner + 1);  // from a
        const int slot = forward ? i : steiner - 1 - i;
        ids.push_back(steiner_node(m, steiner, e, slot));
        pts.push_back((1.0 - s) * corner[q] + s * corner[(q + 1) % 3]);
        side.push_back(q);
        pos.push_back(i + 1);
      }
    }
    // Points on a common edge are only joined to their neighbours there.
    auto edge_position = [&](int k, int q) -> int {
      if (side[k] == q) return pos[k];
      if (side[k] == -1) {
        if (pos[k] == q) return 0;
        if (pos[k] == (q + 1) % 3) return steiner + 1;
      }
      return -1;
    };
    const int np = static_cast<int>(ids.size());
    for (int u = 0; u < np; ++u)
      for (int v = u + 1; v < np; ++v) {
        bool collinear_skip = false;
        for (int q = 0; q < 3; ++q) {
          const int pu = edge_position(u, q), pv = edge_position(v, q);
          if (pu >= 0 && pv >= 0 && std::abs(pu - pv) > 1) collinear_skip = true;
        }
        if (collinear_skip) continue;
        const double w = (pts[u] - pts[v]).norm();
        const int a = std::min(ids[u], ids[v]), b = std::max(ids[u], ids[v]);
        arcs.emplace_back(a, b, w);
      }
  }
  std::sort(arcs.begin(), arcs.end());
  // Segments along mesh edges appear once per adjacent face; keep one.
  std::vector<std::tuple<int, int, double>> unique;
  unique.reserve(arcs.size());
  for (const auto& a : arcs)
    if (unique.empty() || std::get<0>(unique.back()) != std::get<0>(a) || std::get<1>(unique.back()) != std::get<1>(a))
      unique.push_back(a);

  Graph g;
  g.offsets.assign(static_cast<std::size_t>(num_nodes) + 1, 0);
  for (const auto& [a, b, w] : unique) {
    ++g.offsets[a + 1];
    ++g.offsets[b + 1];
  }
  for (int i = 0; i < num_nodes; ++i) g.offsets[i + 1] += g.offsets[i];
  g.targets.resize(g.offsets.back());
  g.weights.resize(g.offsets.back());
  std::vector<int> fill(g.offsets.begin(), g.offsets.end() - 1);
  for (const auto& [a, b, w] : unique) {
    g.targets[fill[a]] = b;
    g.weights[fill[a]++] = w;
    g.targets[fill[b]] = a;
    g.weights[fill[b]++] = w;
  }
  return g;
}

void dijkstra(const std::vector<int>& offsets, const std::vector<int>& targets, const std::vector<double>& weights,
              int source, std::vector<double>& dist, std::vector<int>& pred) {
  const int n = static_cast<int>(offsets.size()) - 1;
  dist.assign(static_cast<std::size_t>(n), kInf);
  pred.assign(static_cast<std::size_t>(n), -1);
  using Item = std::pair<double, int>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
  dist[source] = 0.0;
  heap.emplace(0.0, source);
  while (!heap.empty()) {
    const auto [d, u] = heap.top();
    heap.pop();
    if (d > dist[u]) continue;
    for (int k = offsets[u]; k < offsets[u + 1]; ++k) {
      const int v = targets[k];
      const double nd = d + weights[k];
      if (nd < dist[v] || (nd == dist[v] && u < pred[v])) {
        const bool improved = nd < dist[v];
        dist[v] = nd;
        pred[v] = u;
        if (improved) heap.emplace(nd, v);
      }
    }
  }
}

int matching_icosphere_level(const SimplicialSurface& m) {
  const double radius = std::sqrt(m.total_volume() / (4.0 * kPi));
  const double h = m.mean_edge_length() / radius;
  const int level = static_cast<int>(std::lround(std::log2(1.05 / h)));
  return std::clamp(level, 1, 6);
}

} // namespace

double calibrate_icosphere_error(int subdivisions, int steiner) {
  static std::mutex mutex;
  static std::map<std::pair<int, int>, double> cache;
  {
    std::lock_guard<std::mutex> lock(mutex);
    auto it = cache.find({subdivisions, steiner});
    if (it != cache.end()) return it->second;
  }
  const SimplicialSurface sphere = generate_icosphere(1.0, subdivisions);
  const Graph g = build_graph(sphere, steiner);
  const int n = sphere.num_vertices();
  const auto& p = sphere.positions();
  double worst = 0.0;
  std::vector<double> dist;
  std::vector<int> pred;
  for (int source : {0, n / 3, (2 * n) / 3}) {
    dijkstra(g.offsets, g.targets, g.weights, source, dist, pred);
    for (int v = 0; v < n; ++v) {
      const double exact = std::acos(std::clamp(p[source].dot(p[v]), -1.0, 1.0));
      if (exact < 0.25) continue;
      worst = std::max(worst, std::abs(dist[v] - exact) / exact);
    }
  }
  std::lock_guard<std::mutex> lock(mutex);
  cache[{subdivisions, steiner}] = worst;
  return worst;
}

DistanceEngine::DistanceEngine(const SimplicialSurface& m, int steiner) : surface_(&m), steiner_(steiner) {
  if (steiner < 0 || steiner > 8) throw InvalidArgument("steiner point count must be in [0, 8]");
  Graph g = build_graph(m, steiner);
  offsets_ = std::move(g.offsets);
  targets_ = std::move(g.targets);
  weights_ = std::move(g.weights);
  std::vector<double> dist;
  std::vector<int> pred;
  dijkstra(offsets_, targets_, weights_, 0, dist, pred);
  for (int v = 0; v < m.num_vertices(); ++v)
    if (!std::isfinite(dist[v])) throw InvalidArgument("mesh is disconnected");
  certified_error_ = calibrate_icosphere_error(matching_icosphere_level(m), steiner);
}

DistanceField DistanceEngine::from(int source) const {
  if (source < 0 || source >= surface_->num_vertices()) throw InvalidArgument("source vertex out of range");
  DistanceField out;
  out.source = source;
  out.method = "refined-graph";
  out.certified_error = certified_error_;
  dijkstra(offsets_, targets_, weights_, source, out.node_distance, out.predecessor);
  out.distance = Eigen::Map<const Eigen::VectorXd>(out.node_distance.data(), surface_->num_vertices());
  return out;
}

namespace {

} // namespace

std::vector<int> DistanceEngine::node_vertices(int node) const {
  const SimplicialSurface& m = *surface_;
  if (node < 0 || node >= num_nodes()) throw InvalidArgument("node_vertices: node out of range");
  if (node < m.num_vertices()) return {node};
  const EdgeKey& e = m.edges()[(node - m.num_vertices()) / steiner_];
  return {e.a, e.b};
}

namespace {

double cross2(const Eigen::Vector2d& u, const Eigen::Vector2d& v) { return u.x() * v.y() - u.y() * v.x(); }

// Faces incident to a graph node.
std::vector<int> node_faces(const SimplicialSurface& m, int steiner, int node) {
  std::vector<int> out;
  if (node < m.num_vertices()) {
    for (const Corner& c : m.vertex_star(node)) out.push_back(c.face);
  } else {
    const EdgeKey e = m.edges()[(node - m.num_vertices()) / steiner];
    out.push_back(m.directed_edge_corner(e.a, e.b).face);
    out.push_back(m.directed_edge_corner(e.b, e.a).face);
  }
  std::sort(out.begin(), out.end());
  return out;
}

int shared_vertex_count(const Face& a, const Face& b) {
  int n = 0;
  for (int x : a)
    for (int y : b) n += x == y;
  return n;
}

// Faces strictly between F and G around their common vertex v, on the shorter side.
std::vector<int> fan_between(const SimplicialSurface& m, int v, int F, int G) {
  const auto& star = m.vertex_star(v);
  const int d = static_cast<int>(star.size());
  int iF = -1, iG = -1;
  for (int k = 0; k < d; ++k) {
    if (star[k].face == F) iF = k;
    if (star[k].face == G) iG = k;
  }
  if (iF < 0 || iG < 0) throw ConsistencyError("path faces do not share a vertex");
  const int forward = (iG - iF + d) % d;
  std::vector<int> out;
  if (forward <= d - forward) {
    for (int k = 1; k < forward; ++k) out.push_back(star[(iF + k) % d].face);
  } else {
    for (int k = 1; k < d - forward; ++k) out.push_back(star[(iF - k + d) % d].face);
  }
  return out;
}

int common_vertex(const Face& a, const Face& b) {
  for (int x : a)
    for (int y : b)
      if (x == y) return x;
  return -1;
}

struct Portal {
  Eigen::Vector2d left, right;
  int left_vertex = -1, right_vertex = -1;
};

struct StripCorner {
  Eigen::Vector2d p;
  int portal = 0;
  int vertex = -1;
};

struct StripPath {
  std::vector<int> strip;
  std::vector<std::array<Eigen::Vector2d, 3>> layouts;  // per strip face, by slot
  std::vector<Portal> portals;
  std::vector<StripCorner> corners;
  double length = 0.0;
};

int slot_of(const SimplicialSurface& m, int f, int v) {
  for (int q = 0; q < 3; ++q)
    if (m.faces()[f][q] == v) return q;
  throw ConsistencyError("vertex not in face");
}

// Unfolds the face strip into the plane and pulls a taut string from source to target.
StripPath pull_string(const SimplicialSurface& m, const std::vector<int>& strip, int source, int target) {
  StripPath out;
  out.strip = strip;
  std::array<Eigen::Vector2d, 3> pos;
  {
    const int f = strip.front();
    const double l0 = m.face_edge_length(f, 0), l2 = m.face_edge_length(f, 2), c0 = m.corner_angle(f, 0);
    pos = {Eigen::Vector2d(0, 0), Eigen::Vector2d(l0, 0), Eigen::Vector2d(l2 * std::cos(c0), l2 * std::sin(c0))};
  }
  out.layouts.push_back(pos);
  const Eigen::Vector2d start = pos[slot_of(m, strip.front(), source)];
  auto& portals = out.portals;
  portals.push_back({start, start, source, source});
  for (std::size_t k = 0; k + 1 < strip.size(); ++k) {
    const int F = strip[k], G = strip[k + 1];
    const Face& tf = m.faces()[F];
    const Face& tg = m.faces()[G];
    int qa = -1;
    for (int q = 0; q < 3; ++q)
      for (int r = 0; r < 3; ++r)
        if (tg[r] == tf[(q + 1) % 3] && tg[(r + 1) % 3] == tf[q]) qa = q;
    if (qa < 0) throw ConsistencyError("consecutive strip faces do not share an edge");
    const int a = tf[qa], b = tf[(qa + 1) % 3];
    const Eigen::Vector2d pa = pos[qa], pb = pos[(qa + 1) % 3];
    portals.push_back({pb, pa, b, a});
    // G contains b -> a with its third vertex to the left of that edge.
    const int rb = slot_of(m, G, b);
    const double beta = m.corner_angle(G, rb);
    const double lbc = m.face_edge_length(G, (rb + 2) % 3);
    const Eigen::Vector2d u = (pa - pb).normalized();
    std::array<Eigen::Vector2d, 3> next;
    next[rb] = pb;
    next[(rb + 1) % 3] = pa;
    next[(rb + 2) % 3] = pb + lbc * (std::cos(beta) * u + std::sin(beta) * Eigen::Vector2d(-u.y(), u.x()));
    pos = next;
    out.layouts.push_back(pos);
  }
  const Eigen::Vector2d end = pos[slot_of(m, strip.back(), target)];
  portals.push_back({end, end, target, target});

  auto& corners = out.corners;
  corners.push_back({start, 0, source});
  Eigen::Vector2d apex = start, left = start, right = start;
  int apex_i = 0, left_i = 0, right_i = 0;
  const int np = static_cast<int>(portals.size());
  for (int i = 1; i < np; ++i) {
    const Eigen::Vector2d& l = portals[i].left;
    const Eigen::Vector2d& r = portals[i].right;
    if (cross2(right - apex, r - apex) >= 0.0) {
      if (apex == right || cross2(left - apex, r - apex) < 0.0) {
        right = r;
        right_i = i;
      } else {
        corners.push_back({left, left_i, portals[left_i].left_vertex});
        apex = left;
        apex_i = left_i;
        left = right = apex;
        left_i = right_i = apex_i;
        i = apex_i;
        continue;
      }
    }
    if (cross2(left - apex, l - apex) <= 0.0) {
      if (apex == left || cross2(right - apex, l - apex) > 0.0) {
        left = l;
        left_i = i;
      } else {
        corners.push_back({right, right_i, portals[right_i].right_vertex});
        apex = right;
        apex_i = right_i;
        left = right = apex;
        left_i = right_i = apex_i;
        i = apex_i;
        continue;
      }
    }
  }
  corners.push_back({end, np - 1, target});
  for (std::size_t c = 0; c + 1 < corners.size(); ++c) out.length += (corners[c + 1].p - corners[c].p).norm();
  return out;
}

// The strip with the faces around vertex v (near the given portal) replaced
// by the other side of v's star. Empty if no alternative exists.
std::vector<int> reroute(const SimplicialSurface& m, const std::vector<int>& strip, int v, int portal) {
  auto contains = [&](int f) {
    const Face& t = m.faces()[f];
    return t[0] == v || t[1] == v || t[2] == v;
  };
  const int n = static_cast<int>(strip.size());
  int i0 = std::clamp(portal - 1, 0, n - 1), i1 = std::clamp(portal, 0, n - 1);
  if (!contains(strip[i0]) || !contains(strip[i1])) return {};
  while (i0 > 0 && contains(strip[i0 - 1])) --i0;
  while (i1 + 1 < n && contains(strip[i1 + 1])) ++i1;
  if (i0 == i1) return {};
  const auto& star = m.vertex_star(v);
  const int d = static_cast<int>(star.size());
  int a = -1, b = -1;
  for (int k = 0; k < d; ++k) {
    if (star[k].face == strip[i0]) a = k;
    if (star[k].face == strip[i1]) b = k;
  }
  if (a < 0 || b < 0 || a == b) return {};
  std::vector<int> forward, backward;
  for (int k = (a + 1) % d; k != b; k = (k + 1) % d) forward.push_back(star[k].face);
  for (int k = (a - 1 + d) % d; k != b; k = (k - 1 + d) % d) backward.push_back(star[k].face);
  const std::vector<int> current(strip.begin() + i0 + 1, strip.begin() + i1);
  const std::vector<int>* other = nullptr;
  if (current == forward)
    other = &backward;
  else if (current == backward)
    other = &forward;
  else
    return {};
  std::vector<int> out(strip.begin(), strip.begin() + i0 + 1);
  out.insert(out.end(), other->begin(), other->end());
  out.insert(out.end(), strip.begin() + i1, strip.end());
  return out;
}

struct Shot {
  bool hit = false;
  double offset = 0.0;  // signed distance of the target from the ray
  double length = 0.0;
  std::vector<GeodesicPiece> pieces;
};

// Traces the straight line leaving `a` at angle phi (measured in a's star from
// its first corner) for at most max_length and records its closest approach to `b`.
Shot shoot(const SimplicialSurface& m, int a, int b, double phi, double max_length) {
  const auto& star = m.vertex_star(a);
  std::size_t c = 0;
  double acc = 0.0;
  while (c + 1 < star.size() && phi > acc + m.corner_angle(star[c].face, star[c].slot)) {
    acc += m.corner_angle(star[c].face, star[c].slot);
    ++c;
  }
  int F = star[c].face;
  const int q = star[c].slot;
  const double alpha = std::clamp(phi - acc, 0.0, m.corner_angle(F, q));
  std::array<Eigen::Vector2d, 3> L;
  L[q] = Eigen::Vector2d::Zero();
  L[(q + 1) % 3] = Eigen::Vector2d(m.face_edge_length(F, q), 0.0);
  L[(q + 2) % 3] = m.face_edge_length(F, (q + 2) % 3) * Eigen::Vector2d(std::cos(m.corner_angle(F, q)),
                                                                          std::sin(m.corner_angle(F, q)));
  const Eigen::Vector2d dir(std::cos(alpha), std::sin(alpha));
  int exit_slot = (q + 1) % 3;  // first face: leave through the edge opposite a
  int entry_slot = -1;
  double t_in = 0.0;

  Shot out;
  double best_distance = kInf, t_best = 0.0;
  std::size_t best_piece = 0;
  const int max_faces = 4 * m.num_faces();
  for (int steps = 0; steps < max_faces; ++steps) {
    if (entry_slot >= 0) {
      // Leave through whichever other edge the ray meets first.
      exit_slot = -1;
      double t_exit = kInf;
      for (int s = 0; s < 3; ++s) {
        if (s == entry_slot) continue;
        const Eigen::Vector2d e = L[(s + 1) % 3] - L[s];
        const double den = cross2(dir, e);
        if (std::abs(den) < 1e-300) continue;
        const double t = cross2(L[s], e) / den;
        const double u = cross2(L[s], dir) / den;
        if (u >= -1e-12 && u <= 1.0 + 1e-12 && t >= t_in && t < t_exit) {
          t_exit = t;
          exit_slot = s;
        }
      }
      if (exit_slot < 0) break;
    }
    const Eigen::Vector2d e = L[(exit_slot + 1) % 3] - L[exit_slot];
    const double den = cross2(dir, e);
    const double t_out = std::abs(den) < 1e-300 ? t_in : std::max(t_in, cross2(L[exit_slot], e) / den);
    const Face& tri = m.faces()[F];
    for (int r = 0; r < 3; ++r) {
      if (tri[r] != b) continue;
      const double t = std::clamp(L[r].dot(dir), t_in, t_out);
      const double distance = (L[r] - t * dir).norm();
      if (distance < best_distance) {
        best_distance = distance;
        out.offset = cross2(dir, L[r]);
        t_best = L[r].dot(dir);
        best_piece = out.pieces.size();
        out.hit = true;
      }
    }
    out.pieces.push_back({F, L, t_in * dir, t_out * dir, t_out - t_in});
    if (t_out > max_length) break;
    // Unfold the neighbour across the exit edge.
    const int va = tri[exit_slot], vb = tri[(exit_slot + 1) % 3];
    const Corner g = m.directed_edge_corner(vb, va);
    const int G = g.face, rb = g.slot;
    const Eigen::Vector2d pa = L[exit_slot], pb = L[(exit_slot + 1) % 3];
    const double beta = m.corner_angle(G, rb);
    const double lbc = m.face_edge_length(G, (rb + 2) % 3);
    const Eigen::Vector2d u = (pa - pb).normalized();
    std::array<Eigen::Vector2d, 3> next;
    next[rb] = pb;
    next[(rb + 1) % 3] = pa;
    next[(rb + 2) % 3] = pb + lbc * (std::cos(beta) * u + std::sin(beta) * Eigen::Vector2d(-u.y(), u.x()));
    F = G;
    L = next;
    entry_slot = rb;
    t_in = t_out;
  }
  if (!out.hit) return out;
  out.pieces.resize(best_piece + 1);
  auto& last = out.pieces.back();
  t_best = std::max(t_best, last.start.dot(dir));
  last.end = t_best * dir;
  last.length = (last.end - last.start).norm();
  out.length = t_best;
  return out;
}

// Angle of the first piece of a path in the star parametrization used by shoot().
double initial_angle(const SimplicialSurface& m, int a, const GeodesicPiece& piece) {
  const int q = slot_of(m, piece.face, a);
  const Eigen::Vector2d e = piece.layout[(q + 1) % 3] - piece.layout[q];
  const Eigen::Vector2d d = piece.end - piece.start;
  double phi = std::atan2(cross2(e, d), e.dot(d));
  for (const Corner& c : m.vertex_star(a)) {
    if (c.face == piece.face) break;
    phi += m.corner_angle(c.face, c.slot);
  }
  return phi;
}

} // namespace

GeodesicPath DistanceEngine::geodesic(const DistanceField& field, int target) const {
  const SimplicialSurface& m = *surface_;
  if (target < 0 || target >= m.num_vertices()) throw InvalidArgument("geodesic: target out of range");
  if (target == field.source) return GeodesicPath{field.source, target, {}, 0.0};

  std::vector<int> nodes;
  for (int node = target; node >= 0; node = field.predecessor[node]) {
    nodes.push_back(node);
    if (node == field.source) break;
  }
  std::reverse(nodes.begin(), nodes.end());

  // Face strip visited by the graph path.
  std::vector<int> strip;
  for (std::size_t k = 0; k + 1 < nodes.size(); ++k) {
    const auto a = node_faces(m, steiner_, nodes[k]);
    const auto b = node_faces(m, steiner_, nodes[k + 1]);
    std::vector<int> common;
    std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(common));
    if (common.empty()) throw ConsistencyError("graph arc without a common face");
    int face = common.front();
    if (!strip.empty() && std::find(common.begin(), common.end(), strip.back()) != common.end()) face = strip.back();
    if (!strip.empty() && face == strip.back()) continue;
    if (!strip.empty() && shared_vertex_count(m.faces()[strip.back()], m.faces()[face]) < 2) {
      const int v = nodes[k] < m.num_vertices() ? nodes[k] : common_vertex(m.faces()[strip.back()], m.faces()[face]);
      for (int g : fan_between(m, v, strip.back(), face)) strip.push_back(g);
    }
    strip.push_back(face);
  }

  StripPath best = pull_string(m, strip, field.source, target);
  // Reroute around snag vertices while that shortens the path.
  for (int iteration = 0; iteration < 64; ++iteration) {
    bool improved = false;
    for (std::size_t c = 1; c + 1 < best.corners.size() && !improved; ++c) {
      const auto alternative = reroute(m, best.strip, best.corners[c].vertex, best.corners[c].portal);
      if (alternative.empty()) continue;
      StripPath candidate = pull_string(m, alternative, field.source, target);
      if (candidate.length < best.length - 1e-12 * std::max(1.0, best.length)) {
        best = std::move(candidate);
        improved = true;
      }
    }
    if (!improved) break;
  }
  const auto& portals = best.portals;
  const auto& corners = best.corners;

  // Split the taut string at every portal crossing into per-face pieces.
  GeodesicPath out;
  out.source = field.source;
  out.target = target;
  Eigen::Vector2d prev = corners.front().p;
  int prev_portal = 0;
  auto piece_to = [&](const Eigen::Vector2d& X, int portal) {
    const double len = (X - prev).norm();
    if (len > 0.0) {
      const int k = prev_portal;
      out.pieces.push_back({best.strip[k], best.layouts[k], prev, X, len});
      out.length += len;
    }
    prev = X;
    prev_portal = portal;
  };
  for (std::size_t c = 0; c + 1 < corners.size(); ++c) {
    const Eigen::Vector2d S = corners[c].p, E = corners[c + 1].p;
    for (int i = corners[c].portal + 1; i < corners[c + 1].portal; ++i) {
      const Portal& P = portals[i];
      const Eigen::Vector2d d = E - S, e = P.left - P.right;
      const double den = cross2(d, e);
      double t = 0.5;
      if (std::abs(den) > 1e-300) t = std::clamp(cross2(d, S - P.right) / den, 0.0, 1.0);
      piece_to(P.right + t * e, i);
    }
    piece_to(E, corners[c + 1].portal);
  }

  // Refine by shooting: secant iteration on the initial angle until the
  // straight line through the faces meets the target.
  if (!out.pieces.empty()) {
    const double scale = m.mean_edge_length();
    const double max_length = 1.2 * out.length + 2.0 * scale;
    const double phi0 = initial_angle(m, field.source, out.pieces.front());
    auto fire = [&](double phi) { return shoot(m, field.source, target, phi, max_length); };
    // Bracket a sign change of the offset on each side of phi0, then refine
    // with the Illinois variant of regula falsi.
    auto solve = [&](double lo, Shot slo, double hi, Shot shi) {
      for (int it = 0; it < 60; ++it) {
        const double mid = (lo * shi.offset - hi * slo.offset) / (shi.offset - slo.offset);
        Shot smid = fire(mid);
        if (!smid.hit) return smid;
        if (std::abs(smid.offset) < 1e-12 * scale) return smid;
        if ((smid.offset > 0) == (shi.offset > 0)) {
          hi = mid;
          shi = std::move(smid);
          slo.offset *= 0.5;
        } else {
          lo = mid;
          slo = std::move(smid);
          shi.offset *= 0.5;
        }
        if (std::abs(hi - lo) < 1e-15) return fire(mid);
      }
      return fire(lo);
    };
    Shot centre = fire(phi0);
    Shot s1;
    if (centre.hit && std::abs(centre.offset) < 1e-12 * scale) s1 = centre;
    // Shots that miss the target's star carry no offset; the scan walks past them.
    for (int side : {-1, 1}) {
      double prev_phi = phi0;
      Shot prev = centre;
      for (int k = 1; k <= 60; ++k) {
        const double phi = phi0 + side * 0.005 * k;
        Shot cur = fire(phi);
        if (cur.hit && prev.hit && (cur.offset > 0) != (prev.offset > 0)) {
          Shot root = side < 0 ? solve(phi, cur, prev_phi, prev) : solve(prev_phi, prev, phi, cur);
          if (root.hit && std::abs(root.offset) < 1e-9 * scale && (!s1.hit || root.length < s1.length))
            s1 = std::move(root);
          break;
        }
        prev_phi = phi;
        prev = std::move(cur);
      }
    }
    if (s1.hit && std::abs(s1.offset) < 1e-9 * scale && s1.length < out.length + 1e-9 * scale) {
      out.pieces = std::move(s1.pieces);
      out.length = s1.length;
    }
  }
  return out;
}

std::vector<PathSample> DistanceEngine::trace(const DistanceField& field, int target,
                                              const Eigen::VectorXd& values) const {
  const SimplicialSurface& m = *surface_;
  if (values.size() != m.num_vertices()) throw InvalidArgument("trace: value vector has wrong length");
  const GeodesicPath path = geodesic(field, target);
  std::vector<PathSample> out{{0.0, values[field.source]}};
  double s = 0.0;
  for (const auto& piece : path.pieces) {
    s += piece.length;
    out.push_back({s, interpolate_linear(m, piece, piece.end, values)});
  }
  return out;
}

double interpolate_linear(const SimplicialSurface& m, const GeodesicPiece& piece, const Eigen::Vector2d& X,
                          const Eigen::VectorXd& values) {
  const auto& L = piece.layout;
  const double area = cross2(L[1] - L[0], L[2] - L[0]);
  const Face& t = m.faces()[piece.face];
  double out = 0.0;
  for (int q = 0; q < 3; ++q) {
    const double lambda = cross2(L[(q + 1) % 3] - X, L[(q + 2) % 3] - X) / area;
    out += lambda * values[t[q]];
  }
  return out;
}

std::vector<double> sample_uniform(const TransportAtlas& atlas, const GeodesicPath& path, const FunctionField& f,
                                   const TangentField& grad, double h) {
  const SimplicialSurface& m = atlas.surface();
  const int steps = static_cast<int>(std::floor(path.length / h));
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(steps) + 1);
  std::size_t k = 0;
  double before = 0.0;  // arclength at the start of piece k
  for (int i = 0; i <= steps; ++i) {
    const double s = i * h;
    while (k + 1 < path.pieces.size() && before + path.pieces[k].length < s) before += path.pieces[k++].length;
    if (path.pieces.empty()) {
      out.push_back(f[path.source]);
      continue;
    }
    const GeodesicPiece& piece = path.pieces[k];
    const double t = std::clamp((s - before) / piece.length, 0.0, 1.0);
    const Eigen::Vector2d X = piece.start + t * (piece.end - piece.start);
    const auto& L = piece.layout;
    const double area = cross2(L[1] - L[0], L[2] - L[0]);
    const Face& tri = m.faces()[piece.face];
    // Direction of the face frame's x-axis inside this layout.
    const Eigen::Vector2d ex = (L[1] - L[0]).normalized();
    const double frame = std::atan2(ex.y(), ex.x());
    double linear = 0.0, taylor = 0.0;
    for (int q = 0; q < 3; ++q) {
      const double lambda = cross2(L[(q + 1) % 3] - X, L[(q + 2) % 3] - X) / area;
      const int v = tri[q];
      const Eigen::Vector2d g = rotation2(frame + atlas.vertex_to_face(piece.face, q)) * grad[v];
      linear += lambda * f[v];
      taylor += lambda * (f[v] + g.dot(X - L[q]));
    }
    out.push_back(0.5 * (linear + taylor));
  }
  return out;
}

DistanceField geodesic_distances(const SimplicialSurface& m, int source) { return DistanceEngine(m).from(source); }

double excess(const DistanceField& dp, const DistanceField& dq, int x) {
  return dp[x] + dq[x] - dp[dq.source];
}

int argmax_vertex(const FunctionField& f) {
  int best = 0;
  for (int v = 1; v < f.size(); ++v)
    if (f[v] > f[best]) best = v;
  return best;
}

FunctionField normalize_band_function(const FunctionField& f, int n) {
  const double norm = lp_norm(f, 2.0);
  if (!(norm > 0.0)) throw InvalidArgument("cannot normalize the zero function");
  return f * (1.0 / (std::sqrt(n + 1.0) * norm));
}

CosineProfile almost_cosine_profile(const TransportAtlas& atlas, const FunctionField& f1, const DistanceField& dp) {
  const SimplicialSurface& m = f1.surface();
  Eigen::VectorXd h(m.num_vertices());
  for (int v = 0; v < m.num_vertices(); ++v) h[v] = std::cos(dp[v]);
  const FunctionField diff = f1 - FunctionField(m, std::move(h));
  CosineProfile out;
  out.sup_dev = lp_norm(diff, std::numeric_limits<double>::infinity());
  out.l2_grad_dev = l2_norm(gradient(atlas, diff));
  return out;
}

PoleDecomposition locate_poles(const DistanceEngine& engine, const TransportAtlas& atlas, const FunctionField& f1,
                               const PoleTolerances& tol) {
  const SimplicialSurface& m = engine.surface();
  const int nv = m.num_vertices();
  PoleDecomposition dec;
  dec.tolerances = tol;
  const int p = argmax_vertex(f1);
  dec.poles.push_back(p);
  dec.parities.push_back(0);
  dec.pole_fields.push_back(engine.from(p));
  const DistanceField& dp = dec.pole_fields[0];

  dec.profile_deviation = almost_cosine_profile(atlas, f1, dp).sup_dev;
  if (dec.profile_deviation > tol.profile) {
    dec.diagnostic = "cosine profile deviation " + std::to_string(dec.profile_deviation) + " exceeds " +
                     std::to_string(tol.profile);
    return dec;
  }

  struct Candidate {
    double deviation;
    int vertex;
    int shell;
  };
  std::vector<Candidate> candidates;
  const int max_shell = static_cast<int>(std::floor((dp.distance.maxCoeff() + tol.shell) / kPi));
  dec.shell_sizes.assign(static_cast<std::size_t>(std::max(max_shell, 1)), 0);
  for (int v = 0; v < nv; ++v)
    for (int s = 1; s <= max_shell; ++s) {
      const double dev = std::abs(dp[v] - s * kPi);
      if (dev <= tol.shell) {
        candidates.push_back({dev, v, s});
        ++dec.shell_sizes[s - 1];
      }
    }
  if (dec.shell_sizes[0] == 0) {
    dec.diagnostic = "no vertex within " + std::to_string(tol.shell) + " of distance pi from the pole";
    return dec;
  }
  // Candidates of one shell that are joined by mesh edges form one cluster,
  // represented by its member closest to the shell.
  std::vector<int> index_of(static_cast<std::size_t>(nv) * max_shell, -1);
  for (int c = 0; c < static_cast<int>(candidates.size()); ++c)
    index_of[static_cast<std::size_t>(candidates[c].shell - 1) * nv + candidates[c].vertex] = c;
  std::vector<int> parent(candidates.size());
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (const EdgeKey& e : m.edges())
    for (int s = 1; s <= max_shell; ++s) {
      const int x = index_of[static_cast<std::size_t>(s - 1) * nv + e.a];
      const int y = index_of[static_cast<std::size_t>(s - 1) * nv + e.b];
      if (x >= 0 && y >= 0) parent[find(x)] = find(y);
    }
  std::vector<int> best(candidates.size(), -1);
  for (int c = 0; c < static_cast<int>(candidates.size()); ++c) {
    int& b = best[find(c)];
    if (b < 0 || std::tie(candidates[c].deviation, candidates[c].vertex) <
                     std::tie(candidates[b].deviation, candidates[b].vertex))
      b = c;
  }
  std::vector<Candidate> representatives;
  for (int b : best)
    if (b >= 0) representatives.push_back(candidates[b]);
  std::sort(representatives.begin(), representatives.end(), [](const Candidate& a, const Candidate& b) {
    return std::tie(a.deviation, a.vertex) < std::tie(b.deviation, b.vertex);
  });
  constexpr int kMaxPoles = 12;
  for (const Candidate& c : representatives) {
    bool clustered = false;
    for (const DistanceField& field : dec.pole_fields)
      if (field[c.vertex] < tol.cluster) {
        clustered = true;
        break;
      }
    if (clustered) continue;
    if (static_cast<int>(dec.poles.size()) > kMaxPoles) {
      dec.diagnostic = "more than " + std::to_string(kMaxPoles) + " pole clusters";
      return dec;
    }
    dec.poles.push_back(c.vertex);
    dec.parities.push_back(c.shell);
    dec.pole_fields.push_back(engine.from(c.vertex));
  }

  std::vector<bool> covered(static_cast<std::size_t>(nv), false);
  bool any_b = false;
  for (int i = 0; i < static_cast<int>(dec.poles.size()); ++i)
    for (int j = i + 1; j < static_cast<int>(dec.poles.size()); ++j) {
      PolePair pr;
      pr.i = i;
      pr.j = j;
      pr.distance = dec.pole_fields[i][dec.poles[j]];
      pr.k = static_cast<int>(std::lround(pr.distance / kPi));
      pr.deviation = std::abs(pr.distance - pr.k * kPi);
      pr.parity_consistent = (pr.k % 2 == 0) == (dec.parities[i] % 2 == dec.parities[j] % 2);
      dec.parity_ok = dec.parity_ok && pr.parity_consistent;
      if (std::abs(pr.distance - kPi) <= tol.shell) {
        any_b = true;
        pr.membership.assign(static_cast<std::size_t>(nv), false);
        for (int v = 0; v < nv; ++v)
          if (dec.pole_fields[i][v] + dec.pole_fields[j][v] <= pr.distance + tol.excess) {
            pr.membership[v] = true;
            covered[v] = true;
          }
      }
      dec.pairs.push_back(std::move(pr));
    }
  const auto count = std::count(covered.begin(), covered.end(), true);
  dec.coverage = static_cast<double>(count) / nv;
  dec.covers = count == nv;
  dec.success = any_b;
  if (!any_b) dec.diagnostic = "no pole pair at distance pi";
  return dec;
}

std::vector<int> farthest_point_sample(const DistanceEngine& engine, int count, int start,
                                       std::vector<DistanceField>* fields) {
  const int nv = engine.surface().num_vertices();
  count = std::min(count, nv);
  std::vector<int> out;
  Eigen::VectorXd nearest = Eigen::VectorXd::Constant(nv, kInf);
  int next = start;
  for (int s = 0; s < count; ++s) {
    out.push_back(next);
    DistanceField d = engine.from(next);
    nearest = nearest.cwiseMin(d.distance);
    if (fields) fields->push_back(std::move(d));
    int best = 0;
    for (int v = 1; v < nv; ++v)
      if (nearest[v] > nearest[best]) best = v;
    next = best;
  }
  return out;
}

DiameterCheck diameter_and_excess_check(const DistanceEngine& engine, const PoleDecomposition& dec, double tolerance,
                                        int samples) {
  if (!dec.success || dec.poles.size() != 2)
    throw InvalidArgument("diameter check needs a decomposition with exactly two poles");
  DiameterCheck out;
  std::vector<DistanceField> fields;
  const auto sample = farthest_point_sample(engine, samples, dec.poles[0], &fields);
  for (std::size_t a = 0; a < sample.size(); ++a)
    for (std::size_t b = 0; b < sample.size(); ++b) out.diameter = std::max(out.diameter, fields[a][sample[b]]);
  for (int v = 0; v < engine.surface().num_vertices(); ++v)
    out.max_excess = std::max(out.max_excess, excess(dec.pole_fields[0], dec.pole_fields[1], v));
  out.pass = std::abs(out.diameter - kPi) <= tolerance && out.max_excess <= tolerance;
  return out;
}

namespace {

double path_residual(const std::vector<double>& g, double h) {
  double total = 0.0;
  for (std::size_t k = 1; k + 1 < g.size(); ++k) total += std::abs((g[k + 1] - 2.0 * g[k] + g[k - 1]) / (h * h) + g[k]) * h;
  return total;
}

} // namespace

SegmentDiagnostics segment_diagnostics(const DistanceEngine& engine, const FunctionField& f1, int n_pairs,
                                       double threshold, std::uint64_t seed) {
  if (n_pairs < 100) throw InvalidArgument("segment diagnostics need at least 100 pairs");
  const SimplicialSurface& m = engine.surface();
  const int nv = m.num_vertices();
  const double h = m.mean_edge_length();
  const TransportAtlas atlas(m);
  const TangentField grad = gradient(atlas, f1);
  std::mt19937_64 rng(seed);
  SegmentDiagnostics out;
  out.sources = std::max(1, n_pairs / 20);
  int good_total = 0, good_sources = 0;
  for (int s = 0; s < out.sources; ++s) {
    const int targets = s + 1 < out.sources ? 20 : n_pairs - 20 * (out.sources - 1);
    const int source = static_cast<int>(rng() % static_cast<std::uint64_t>(nv));
    const DistanceField field = engine.from(source);
    int good = 0;
    for (int t = 0; t < targets; ++t) {
      int target = static_cast<int>(rng() % static_cast<std::uint64_t>(nv));
      if (target == source) target = (target + 1) % nv;
      const GeodesicPath path = engine.geodesic(field, target);
      const double integral = path_residual(sample_uniform(atlas, path, f1, grad, h), h);
      out.max_integral = std::max(out.max_integral, integral);
      if (integral <= threshold) ++good;
    }
    good_total += good;
    if (good >= (1.0 - threshold) * targets) ++good_sources;
    out.pairs += targets;
  }
  out.fraction_good_pairs = static_cast<double>(good_total) / out.pairs;
  out.q_fraction = static_cast<double>(good_sources) / out.sources;
  return out;
}

} // namespace pinchlab
