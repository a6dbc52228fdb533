#include "pinchlab/spheremap.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numbers>
#include <sstream>

#include <Eigen/Geometry>
#include <json.hpp>

#include "pinchlab/error.hpp"

namespace pinchlab {

namespace {

constexpr double kPi = std::numbers::pi;

double arc(const Eigen::Vector3d& a, const Eigen::Vector3d& b) { return std::acos(std::clamp(a.dot(b), -1.0, 1.0)); }

} // namespace

SphereMapReport sphere_map_from_functions(const std::vector<FunctionField>& band) {
  if (band.size() < 2) throw InvalidArgument("sphere map needs at least two band functions");
  const SimplicialSurface& m = band.front().surface();
  const int nv = m.num_vertices();
  SphereMapReport out;
  out.n = static_cast<int>(band.size()) - 1;
  out.band_multiplicity = static_cast<int>(band.size());
  out.band = band;
  out.raw.resize(nv, out.n + 1);
  for (int s = 0; s <= out.n; ++s) out.raw.col(s) = band[s].values();
  out.psi.resize(nv, out.n + 1);
  for (int v = 0; v < nv; ++v) {
    const double r = out.raw.row(v).norm();
    if (r < 1e-12) {
      std::ostringstream msg;
      msg << "sphere map: Psi~ vanishes at vertex " << v << " (|Psi~| = " << r << ")";
      throw Rejected(msg.str());
    }
    out.psi.row(v) = out.raw.row(v) / r;
    out.max_raw_deviation = std::max(out.max_raw_deviation, std::abs(r - 1.0));
  }
  return out;
}

SphereMapReport build_sphere_map(const SimplicialSurface& m, const Spectrum& spectrum, const ProjectionSpec& band) {
  if (spectrum.domain != PencilDomain::Function) throw InvalidArgument("sphere map needs a function spectrum");
  const int n = band.n();
  const auto idx = band_indices(band, spectrum);
  if (static_cast<int>(idx.size()) < n + 1) {
    std::ostringstream msg;
    msg << "sphere map: band [" << band.low() << ", " << band.high() << "] holds " << idx.size()
        << " eigenpairs, need " << n + 1;
    throw Rejected(msg.str());
  }
  // Solver eigenvectors are orthonormal in the normalized inner product.
  const double scale = 1.0 / std::sqrt(static_cast<double>(n + 1));
  std::vector<FunctionField> functions;
  std::vector<double> lambdas;
  for (int s = 0; s <= n; ++s) {
    functions.emplace_back(m, spectrum.vectors.col(idx[s]) * scale);
    lambdas.push_back(spectrum.eigenvalues[idx[s]]);
  }
  SphereMapReport out = sphere_map_from_functions(functions);
  out.band_multiplicity = static_cast<int>(idx.size());
  out.band_eigenvalues = std::move(lambdas);
  return out;
}

namespace {

// Subdivision stops after a fixed depth: three points on one great circle
// reproduce their long sides in the midpoint triangle.
double spherical_area_rec(const Eigen::Vector3d& a, const Eigen::Vector3d& b, const Eigen::Vector3d& c, int depth) {
  if (depth < 6 && std::max({arc(a, b), arc(b, c), arc(c, a)}) > kPi / 2) {
    const Eigen::Vector3d ab = a + b, bc = b + c, ca = c + a;
    if (ab.norm() > 1e-12 && bc.norm() > 1e-12 && ca.norm() > 1e-12) {
      const Eigen::Vector3d mab = ab.normalized(), mbc = bc.normalized(), mca = ca.normalized();
      return spherical_area_rec(a, mab, mca, depth + 1) + spherical_area_rec(mab, b, mbc, depth + 1) +
             spherical_area_rec(mca, mbc, c, depth + 1) + spherical_area_rec(mab, mbc, mca, depth + 1);
    }
  }
  const double numerator = a.dot(b.cross(c));
  const double denominator = 1.0 + a.dot(b) + b.dot(c) + c.dot(a);
  return 2.0 * std::atan2(numerator, denominator);
}

} // namespace

double signed_spherical_area(const Eigen::Vector3d& a, const Eigen::Vector3d& b, const Eigen::Vector3d& c) {
  return spherical_area_rec(a, b, c, 0);
}

double mapping_degree(const SimplicialSurface& m, const Eigen::MatrixXd& psi) {
  if (psi.cols() != 3 || psi.rows() != m.num_vertices())
    throw InvalidArgument("mapping_degree: expects one unit 3-vector per vertex");
  std::vector<double> areas;
  areas.reserve(m.faces().size());
  for (const Face& f : m.faces()) {
    const Eigen::Vector3d a = psi.row(f[0]).transpose(), b = psi.row(f[1]).transpose(), c = psi.row(f[2]).transpose();
    areas.push_back(signed_spherical_area(a, b, c));
  }
  return pairwise_sum(areas.data(), areas.size()) / (4.0 * kPi);
}

void map_quality(const DistanceEngine& engine, SphereMapReport& report, int sample_points, double net_spacing) {
  const SimplicialSurface& m = engine.surface();
  if (report.n != 2) throw InvalidArgument("map_quality is implemented for maps into S^2");
  if (report.psi.rows() != m.num_vertices()) throw InvalidArgument("map_quality: map and surface disagree");
  if (sample_points * (sample_points - 1) / 2 < 500)
    throw InvalidArgument("map_quality needs at least 500 sample pairs");
  if (!(net_spacing > 0.0)) throw InvalidArgument("map_quality: net spacing must be positive");
  const Eigen::MatrixXd& psi = report.psi;
  const int nv = m.num_vertices();

  std::vector<DistanceField> fields;
  const auto sample = farthest_point_sample(engine, sample_points, 0, &fields);
  report.sample_points = static_cast<int>(sample.size());
  report.sample_pairs = 0;
  report.eps_dist = 0.0;
  for (std::size_t i = 0; i < sample.size(); ++i)
    for (std::size_t j = i + 1; j < sample.size(); ++j) {
      const double dm = fields[i][sample[j]];
      const double ds = arc(psi.row(sample[i]).transpose(), psi.row(sample[j]).transpose());
      report.eps_dist = std::max(report.eps_dist, std::abs(dm - ds));
      ++report.sample_pairs;
    }

  // Net frame: x-axis at the image of vertex 0, y-axis towards the first
  // vertex whose image is at least half a radian away.
  const Eigen::Vector3d ax = psi.row(0).transpose();
  Eigen::Vector3d ay = Eigen::Vector3d::Zero();
  for (int v = 1; v < nv; ++v) {
    const Eigen::Vector3d p = psi.row(v).transpose();
    if (arc(ax, p) >= 0.5) {
      ay = (p - ax * ax.dot(p)).normalized();
      break;
    }
  }
  if (ay.isZero()) ay = ax.unitOrthogonal();
  const Eigen::Vector3d az = ax.cross(ay);

  report.net.clear();
  const double step = net_spacing * kPi / 180.0;
  const int rings = static_cast<int>(std::lround(kPi / step));
  report.eps_dens = 0.0;
  for (int r = 0; r <= rings; ++r) {
    const double theta = kPi * r / rings;
    const int count = std::max(1, static_cast<int>(std::lround(2.0 * kPi * std::sin(theta) / step)));
    for (int k = 0; k < count; ++k) {
      const double phi = 2.0 * kPi * k / count;
      const Eigen::Vector3d u =
          std::sin(theta) * std::cos(phi) * ax + std::sin(theta) * std::sin(phi) * ay + std::cos(theta) * az;
      const double best = (psi * u).maxCoeff();
      const double distance = std::acos(std::clamp(best, -1.0, 1.0));
      report.net.push_back({theta, phi, distance});
      report.eps_dens = std::max(report.eps_dens, distance);
    }
  }
  report.gh_upper = 1.5 * std::max(report.eps_dist, report.eps_dens);
  report.degree = mapping_degree(m, psi);
  report.degree_defect = std::abs(report.degree - std::round(report.degree));
  report.quality_computed = true;
}

FiniteMetricSpace::FiniteMetricSpace(Eigen::MatrixXd distances, std::vector<std::string> labels)
    : d_(std::move(distances)), labels_(std::move(labels)) {
  const int n = static_cast<int>(d_.rows());
  if (n == 0 || d_.cols() != n) throw InvalidArgument("metric space: distance matrix must be square and nonempty");
  if (!labels_.empty() && static_cast<int>(labels_.size()) != n)
    throw InvalidArgument("metric space: label count does not match the matrix");
  if (!d_.allFinite()) throw InvalidArgument("metric space: non-finite distance");
  const double slack = 1e-12 * std::max(1.0, d_.cwiseAbs().maxCoeff());
  for (int i = 0; i < n; ++i) {
    if (d_(i, i) != 0.0) throw InvalidArgument("metric space: nonzero diagonal at " + std::to_string(i));
    for (int j = 0; j < n; ++j) {
      if (d_(i, j) < 0.0) throw InvalidArgument("metric space: negative distance");
      if (std::abs(d_(i, j) - d_(j, i)) > slack) throw InvalidArgument("metric space: matrix is not symmetric");
      if (i != j && d_(i, j) == 0.0) throw InvalidArgument("metric space: distinct points at distance 0");
    }
  }
  d_ = 0.5 * (d_ + d_.transpose()).eval();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k)
        if (d_(i, k) > d_(i, j) + d_(j, k) + slack) {
          std::ostringstream msg;
          msg << "metric space: triangle inequality fails for (" << i << ", " << j << ", " << k << ")";
          throw InvalidArgument(msg.str());
        }
}

FiniteMetricSpace FiniteMetricSpace::from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("metric space JSON: ") + e.what());
  }
  if (!j.contains("distances") || !j["distances"].is_array())
    throw FormatError("metric space JSON: missing \"distances\" array");
  const auto& rows = j["distances"];
  const int n = static_cast<int>(rows.size());
  Eigen::MatrixXd d(n, n);
  try {
    for (int i = 0; i < n; ++i) {
      if (!rows[i].is_array() || static_cast<int>(rows[i].size()) != n)
        throw FormatError("metric space JSON: row " + std::to_string(i) + " has the wrong length");
      for (int k = 0; k < n; ++k) d(i, k) = rows[i][k].get<double>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("metric space JSON: ") + e.what());
  }
  std::vector<std::string> labels;
  if (j.contains("labels")) labels = j["labels"].get<std::vector<std::string>>();
  return FiniteMetricSpace(std::move(d), std::move(labels));
}

FiniteMetricSpace FiniteMetricSpace::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path);
  std::ostringstream text;
  text << in.rdbuf();
  return from_json(text.str());
}

std::string FiniteMetricSpace::to_json() const {
  nlohmann::json j;
  auto& rows = j["distances"] = nlohmann::json::array();
  for (int i = 0; i < size(); ++i) {
    std::vector<double> row(static_cast<std::size_t>(size()));
    for (int k = 0; k < size(); ++k) row[k] = d_(i, k);
    rows.push_back(row);
  }
  if (!labels_.empty()) j["labels"] = labels_;
  return j.dump();
}

namespace {

// Search for a correspondence whose distortion is at most tau.
class CorrespondenceSearch {
public:
  CorrespondenceSearch(const FiniteMetricSpace& A, const FiniteMetricSpace& B) : A_(A), B_(B) {}

  bool feasible(double tau) {
    tau_ = tau;
    chosen_.clear();
    return extend(0);
  }

private:
  bool compatible(int a, int b) const {
    for (const auto& [x, y] : chosen_)
      if (std::abs(A_(a, x) - B_(b, y)) > tau_) return false;
    return true;
  }

  bool covered_a(int a) const {
    return std::any_of(chosen_.begin(), chosen_.end(), [&](const auto& p) { return p.first == a; });
  }
  bool covered_b(int b) const {
    return std::any_of(chosen_.begin(), chosen_.end(), [&](const auto& p) { return p.second == b; });
  }

  // Steps 0..|A|-1 cover the points of A, the remaining steps those of B.
  bool extend(int step) {
    const int na = A_.size(), nb = B_.size();
    if (step == na + nb) return true;
    if (step < na) {
      const int a = step;
      if (covered_a(a)) return extend(step + 1);
      for (int b = 0; b < nb; ++b) {
        if (!compatible(a, b)) continue;
        chosen_.emplace_back(a, b);
        if (extend(step + 1)) return true;
        chosen_.pop_back();
      }
      return false;
    }
    const int b = step - na;
    if (covered_b(b)) return extend(step + 1);
    for (int a = 0; a < na; ++a) {
      if (!compatible(a, b)) continue;
      chosen_.emplace_back(a, b);
      if (extend(step + 1)) return true;
      chosen_.pop_back();
    }
    return false;
  }

  const FiniteMetricSpace& A_;
  const FiniteMetricSpace& B_;
  double tau_ = 0.0;
  std::vector<std::pair<int, int>> chosen_;
};

} // namespace

double gh_bruteforce(const FiniteMetricSpace& A, const FiniteMetricSpace& B) {
  if (A.size() > kMaxBruteForcePoints || B.size() > kMaxBruteForcePoints)
    throw InvalidArgument("gh_bruteforce supports at most " + std::to_string(kMaxBruteForcePoints) + " points");
  // The optimal distortion is one of the pairwise differences.
  std::vector<double> candidates;
  for (int a = 0; a < A.size(); ++a)
    for (int x = 0; x < A.size(); ++x)
      for (int b = 0; b < B.size(); ++b)
        for (int y = 0; y < B.size(); ++y) candidates.push_back(std::abs(A(a, x) - B(b, y)));
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
  CorrespondenceSearch search(A, B);
  std::size_t lo = 0, hi = candidates.size() - 1;  // the largest candidate is always feasible
  while (lo < hi) {
    const std::size_t mid = (lo + hi) / 2;
    if (search.feasible(candidates[mid]))
      hi = mid;
    else
      lo = mid + 1;
  }
  return 0.5 * candidates[lo];
}

double suspension_distance(double t1, double t2, double dz) {
  const double c = std::cos(t1) * std::cos(t2) + std::sin(t1) * std::sin(t2) * std::cos(std::min(dz, kPi));
  if (c > 1.0 + 1e-12 || c < -1.0 - 1e-12) throw ConsistencyError("suspension cosine rule left [-1, 1]");
  return std::acos(std::clamp(c, -1.0, 1.0));
}

FiniteMetricSpace spherical_suspension(const FiniteMetricSpace& Z, const std::vector<double>& levels) {
  if (levels.size() < 2 || levels.front() != 0.0 || levels.back() != kPi)
    throw InvalidArgument("suspension levels must start at 0 and end at pi");
  if (!std::is_sorted(levels.begin(), levels.end()) ||
      std::adjacent_find(levels.begin(), levels.end()) != levels.end())
    throw InvalidArgument("suspension levels must be strictly increasing");
  struct Point {
    double t;
    int z;
  };
  std::vector<Point> points{{0.0, -1}};
  std::vector<std::string> labels{"0*"};
  for (std::size_t l = 1; l + 1 < levels.size(); ++l)
    for (int z = 0; z < Z.size(); ++z) {
      points.push_back({levels[l], z});
      std::ostringstream name;
      name << "[" << levels[l] << "," << (Z.labels().empty() ? std::to_string(z) : Z.labels()[z]) << "]";
      labels.push_back(name.str());
    }
  points.push_back({kPi, -1});
  labels.push_back("pi*");
  const int n = static_cast<int>(points.size());
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      const double dz = points[i].z >= 0 && points[j].z >= 0 ? Z(points[i].z, points[j].z) : 0.0;
      d(i, j) = d(j, i) = suspension_distance(points[i].t, points[j].t, dz);
    }
  return FiniteMetricSpace(std::move(d), std::move(labels));
}

SuspensionFit suspension_fit(const DistanceEngine& engine, const PoleDecomposition& dec, int pair_index,
                             const SuspensionOptions& options) {
  const SimplicialSurface& m = engine.surface();
  const int nv = m.num_vertices();
  if (pair_index < 0 || pair_index >= static_cast<int>(dec.pairs.size()))
    throw InvalidArgument("suspension_fit: no such pole pair");
  const PolePair& pair = dec.pairs[pair_index];
  if (pair.membership.empty()) throw InvalidArgument("suspension_fit: pole pair carries no B_ij set");
  const DistanceField& di = dec.pole_fields[pair.i];
  const DistanceField& dj = dec.pole_fields[pair.j];

  SuspensionFit out;
  out.equator_tolerance = options.equator_tolerance > 0.0 ? options.equator_tolerance : 2.0 * m.mean_edge_length();
  std::vector<bool> equator(static_cast<std::size_t>(nv), false);
  for (int v = 0; v < nv; ++v)
    if (pair.membership[v] && std::abs(di[v] - dj[v]) <= out.equator_tolerance) {
      equator[v] = true;
      ++out.equator_size;
    }
  if (out.equator_size == 0) throw Rejected("suspension_fit: empty equator set");

  // phi(x): where the geodesic from x to the farther pole crosses d_i = d_j,
  // snapped to a vertex of the face containing the crossing.
  const Eigen::VectorXd difference = di.distance - dj.distance;
  auto gap = [&](int v) { return std::abs(difference[v]); };
  auto snap = [&](int x) {
    if (equator[x]) return std::make_pair(x, false);
    const DistanceField& far = di[x] >= dj[x] ? di : dj;
    const GeodesicPath path = engine.geodesic(far, x);
    const double sx = difference[x] > 0 ? 1.0 : -1.0;
    // Pieces run from the far pole to x; walk them backwards from x.
    for (auto it = path.pieces.rbegin(); it != path.pieces.rend(); ++it) {
      const double g_start = sx * interpolate_linear(m, *it, it->start, difference);
      if (g_start > 0.0) continue;
      const double g_end = sx * interpolate_linear(m, *it, it->end, difference);
      const double t = g_end > g_start ? g_end / (g_end - g_start) : 0.0;
      const Eigen::Vector2d X = it->end + t * (it->start - it->end);
      const Face& tri = m.faces()[it->face];
      int best = -1;
      for (int q = 0; q < 3; ++q) {
        const int v = tri[q];
        if (best < 0) {
          best = q;
          continue;
        }
        const int b = tri[best];
        const bool closer = (it->layout[q] - X).norm() < (it->layout[best] - X).norm();
        if ((equator[v] && !equator[b]) || (equator[v] == equator[b] && closer)) best = q;
      }
      const int v = tri[best];
      return std::make_pair(v, !equator[v]);
    }
    int best = x;
    for (int v = 0; v < nv; ++v)
      if (equator[v] && (!equator[best] || gap(v) < gap(best))) best = v;
    return std::make_pair(best, true);
  };

  // Farthest-point sample restricted to B_ij, starting at pole i.
  std::vector<int> sample;
  std::vector<DistanceField> fields;
  Eigen::VectorXd nearest = Eigen::VectorXd::Constant(nv, std::numeric_limits<double>::infinity());
  int next = dec.poles[pair.i];
  for (int s = 0; s < options.samples; ++s) {
    sample.push_back(next);
    fields.push_back(engine.from(next));
    nearest = nearest.cwiseMin(fields.back().distance);
    int best = -1;
    for (int v = 0; v < nv; ++v)
      if (pair.membership[v] && (best < 0 || nearest[v] > nearest[best])) best = v;
    if (best < 0 || nearest[best] <= 0.0) break;
    next = best;
  }
  out.sample_points = static_cast<int>(sample.size());

  std::vector<int> phi(sample.size());
  std::map<int, DistanceField> equator_fields;
  for (std::size_t s = 0; s < sample.size(); ++s) {
    const auto [z, fallback] = snap(sample[s]);
    phi[s] = z;
    out.snapped += fallback ? 1 : 0;
    if (!equator_fields.count(z)) equator_fields.emplace(z, engine.from(z));
  }

  for (std::size_t a = 0; a < sample.size(); ++a)
    for (std::size_t b = a + 1; b < sample.size(); ++b) {
      const double t1 = std::clamp(di[sample[a]], 0.0, kPi);
      const double t2 = std::clamp(di[sample[b]], 0.0, kPi);
      const double dz = equator_fields.at(phi[a])[phi[b]];
      const double model = suspension_distance(t1, t2, dz);
      out.distortion = std::max(out.distortion, std::abs(fields[a][sample[b]] - model));
      ++out.sample_pairs;
    }
  return out;
}

std::string to_json(const SphereMapReport& r) {
  nlohmann::json j;
  j["n"] = r.n;
  j["band_multiplicity"] = r.band_multiplicity;
  j["band_eigenvalues"] = r.band_eigenvalues;
  j["max_raw_deviation"] = r.max_raw_deviation;
  if (r.quality_computed) {
    j["sample_points"] = r.sample_points;
    j["sample_pairs"] = r.sample_pairs;
    j["eps_dist"] = r.eps_dist;
    j["eps_dens"] = r.eps_dens;
    j["gh_upper"] = r.gh_upper;
    j["degree"] = r.degree;
    j["degree_defect"] = r.degree_defect;
    j["net_points"] = r.net.size();
  }
  return j.dump();
}

std::string to_json(const SuspensionFit& f) {
  nlohmann::json j;
  j["distortion"] = f.distortion;
  j["equator_tolerance"] = f.equator_tolerance;
  j["equator_size"] = f.equator_size;
  j["sample_points"] = f.sample_points;
  j["sample_pairs"] = f.sample_pairs;
  j["snapped"] = f.snapped;
  return j.dump();
}

std::string net_csv(const SphereMapReport& r) {
  std::ostringstream out;
  out.precision(17);
  out << "theta,phi,distance\n";
  for (const auto& p : r.net) out << p.theta << ',' << p.phi << ',' << p.distance << '\n';
  return out.str();
}

} // namespace pinchlab
