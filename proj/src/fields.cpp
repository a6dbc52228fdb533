#include "pinchlab/fields.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include <json.hpp>

#include "pinchlab/error.hpp"

namespace pinchlab {

namespace {

constexpr double kPi = std::numbers::pi;

void require_same(const SimplicialSurface& a, const SimplicialSurface& b) {
  if (&a != &b) throw InvalidArgument("fields live on different surfaces");
}

} // namespace

// ---------------------------------------------------------------------------

FunctionField::FunctionField(const SimplicialSurface& m, Eigen::VectorXd values)
    : surface_(&m), values_(std::move(values)) {
  if (values_.size() != m.num_vertices())
    throw InvalidArgument("function field length " + std::to_string(values_.size()) +
                          " does not match vertex count " + std::to_string(m.num_vertices()));
  if (!values_.allFinite()) throw InvalidArgument("function field has non-finite entries");
}

FunctionField FunctionField::constant(const SimplicialSurface& m, double value) {
  return FunctionField(m, Eigen::VectorXd::Constant(m.num_vertices(), value));
}

FunctionField FunctionField::from_positions(const SimplicialSurface& m,
                                            const std::function<double(const Vec3&)>& fn) {
  const auto& p = m.positions();
  Eigen::VectorXd v(m.num_vertices());
  for (int i = 0; i < m.num_vertices(); ++i) v[i] = fn(p[i]);
  return FunctionField(m, std::move(v));
}

FunctionField FunctionField::operator+(const FunctionField& o) const {
  require_same(surface(), o.surface());
  return FunctionField(surface(), values_ + o.values_);
}

FunctionField FunctionField::operator-(const FunctionField& o) const {
  require_same(surface(), o.surface());
  return FunctionField(surface(), values_ - o.values_);
}

FunctionField FunctionField::operator*(double s) const { return FunctionField(surface(), values_ * s); }

TangentField::TangentField(const SimplicialSurface& m, Eigen::MatrixX2d values)
    : surface_(&m), values_(std::move(values)) {
  if (values_.rows() != m.num_vertices())
    throw InvalidArgument("tangent field row count does not match vertex count");
  if (!values_.allFinite()) throw InvalidArgument("tangent field has non-finite entries");
}

TangentField TangentField::zero(const SimplicialSurface& m) {
  return TangentField(m, Eigen::MatrixX2d::Zero(m.num_vertices(), 2));
}

TangentField TangentField::operator+(const TangentField& o) const {
  require_same(surface(), o.surface());
  return TangentField(surface(), values_ + o.values_);
}

TangentField TangentField::operator*(double s) const { return TangentField(surface(), values_ * s); }

ESection::ESection(TangentField t, FunctionField f) : tangent(std::move(t)), scalar(std::move(f)) {
  require_same(tangent.surface(), scalar.surface());
}

Eigen::VectorXd ESection::to_vector() const {
  const int n = scalar.size();
  Eigen::VectorXd x(kSectionDofs * n);
  for (int v = 0; v < n; ++v) {
    x[3 * v] = tangent.values()(v, 0);
    x[3 * v + 1] = tangent.values()(v, 1);
    x[3 * v + 2] = scalar[v];
  }
  return x;
}

ESection ESection::from_vector(const SimplicialSurface& m, const Eigen::VectorXd& x) {
  const int n = m.num_vertices();
  if (x.size() != kSectionDofs * n) throw InvalidArgument("section vector has wrong length");
  Eigen::MatrixX2d t(n, 2);
  Eigen::VectorXd f(n);
  for (int v = 0; v < n; ++v) {
    t(v, 0) = x[3 * v];
    t(v, 1) = x[3 * v + 1];
    f[v] = x[3 * v + 2];
  }
  return ESection(TangentField(m, std::move(t)), FunctionField(m, std::move(f)));
}

ESection ESection::unit(const SimplicialSurface& m) {
  return ESection(TangentField::zero(m), FunctionField::constant(m, 1.0));
}

ESection ESection::operator+(const ESection& o) const {
  return ESection(tangent + o.tangent, scalar + o.scalar);
}

ESection ESection::operator*(double s) const { return ESection(tangent * s, scalar * s); }

// ---------------------------------------------------------------------------

Eigen::Matrix2d rotation2(double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  Eigen::Matrix2d r;
  r << c, -s, s, c;
  return r;
}

double wrap_angle(double angle) {
  double a = std::remainder(angle, 2.0 * kPi);
  if (a <= -kPi) a += 2.0 * kPi;
  return a;
}

TransportAtlas::TransportAtlas(const SimplicialSurface& m) : surface_(&m) {
  const int nf = m.num_faces();
  face_edge_angle_.resize(nf);
  for (int f = 0; f < nf; ++f) {
    const double c1 = m.corner_angle(f, 1), c2 = m.corner_angle(f, 2);
    face_edge_angle_[f] = {0.0, kPi - c1, 2.0 * kPi - c1 - c2};
  }
  scale_.resize(m.num_vertices());
  edge_angle_.resize(nf);
  vertex_to_face_.resize(nf);
  for (int v = 0; v < m.num_vertices(); ++v) {
    const double total = m.angle_sum(v);
    if (!(total > 0.0)) throw InvalidArgument("vertex " + std::to_string(v) + " has a degenerate star");
    const double s = 2.0 * kPi / total;
    scale_[v] = s;
    double theta = 0.0;
    for (const Corner& c : m.vertex_star(v)) {
      const double angle = m.corner_angle(c.face, c.slot);
      if (!(angle > 0.0))
        throw InvalidArgument("degenerate corner angle at vertex " + std::to_string(v));
      edge_angle_[c.face][c.slot] = theta;
      // Match the corner bisectors of the two frames.
      vertex_to_face_[c.face][c.slot] =
          face_edge_angle_[c.face][c.slot] + 0.5 * angle - (theta + 0.5 * s * angle);
      theta += s * angle;
    }
  }
}

double TransportAtlas::edge_angle(int i, int j) const {
  const Corner c = surface_->directed_edge_corner(i, j);
  return edge_angle_[c.face][c.slot];
}

double TransportAtlas::vertex_transport(int i, int j) const {
  return edge_angle(i, j) - edge_angle(j, i) + kPi;
}

double TransportAtlas::face_transport(int i, int j) const {
  const Corner to = surface_->directed_edge_corner(i, j);
  const Corner from = surface_->directed_edge_corner(j, i);
  return face_edge_angle_[to.face][to.slot] - face_edge_angle_[from.face][from.slot] + kPi;
}

Eigen::Vector2d TransportAtlas::transport(int i, int j, const Eigen::Vector2d& at_j) const {
  return rotation2(vertex_transport(i, j)) * at_j;
}

double TransportAtlas::face_loop_holonomy(int f) const {
  const Face& t = surface_->faces()[f];
  return wrap_angle(vertex_transport(t[1], t[0]) + vertex_transport(t[2], t[1]) +
                    vertex_transport(t[0], t[2]));
}

double TransportAtlas::vertex_loop_holonomy(int v) const {
  double total = 0.0;
  for (const Corner& c : surface_->vertex_star(v)) {
    const int b = surface_->faces()[c.face][(c.slot + 2) % 3];
    total += face_transport(v, b);
  }
  return wrap_angle(total);
}

TransportAtlas TransportAtlas::regauged(const Eigen::VectorXd& offsets) const {
  if (offsets.size() != surface_->num_vertices()) throw InvalidArgument("one gauge offset per vertex expected");
  TransportAtlas out = *this;
  for (int f = 0; f < surface_->num_faces(); ++f)
    for (int q = 0; q < 3; ++q) {
      const double beta = offsets[surface_->faces()[f][q]];
      out.edge_angle_[f][q] -= beta;
      out.vertex_to_face_[f][q] += beta;
    }
  return out;
}

// ---------------------------------------------------------------------------

double pairwise_sum(const double* x, std::size_t n) {
  if (n <= 16) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += x[i];
    return s;
  }
  const std::size_t half = n / 2;
  return pairwise_sum(x, half) + pairwise_sum(x + half, n - half);
}

namespace {

double weighted_mean(const SimplicialSurface& m, const Eigen::VectorXd& density) {
  Eigen::VectorXd terms = density.cwiseProduct(m.vertex_areas());
  return pairwise_sum(terms.data(), static_cast<std::size_t>(terms.size())) / m.total_volume();
}

} // namespace

double lp_norm(const FunctionField& f, double p) {
  const Eigen::VectorXd a = f.values().cwiseAbs();
  if (std::isinf(p) && p > 0) return a.maxCoeff();
  if (p == 1.0) return weighted_mean(f.surface(), a);
  if (p == 2.0) return std::sqrt(weighted_mean(f.surface(), a.cwiseProduct(a)));
  throw InvalidArgument("lp_norm supports p = 1, 2 or infinity");
}

double l2_norm(const TangentField& X) {
  return std::sqrt(weighted_mean(X.surface(), X.values().rowwise().squaredNorm()));
}

double l2_inner(const FunctionField& f, const FunctionField& g) {
  require_same(f.surface(), g.surface());
  return weighted_mean(f.surface(), f.values().cwiseProduct(g.values()));
}

double mean_value(const FunctionField& f) { return weighted_mean(f.surface(), f.values()); }

double e_inner(const ESection& S, const ESection& T) {
  require_same(S.surface(), T.surface());
  const Eigen::VectorXd pointwise =
      S.tangent.values().cwiseProduct(T.tangent.values()).rowwise().sum() +
      S.scalar.values().cwiseProduct(T.scalar.values());
  return weighted_mean(S.surface(), pointwise);
}

double e_norm(const ESection& S) { return std::sqrt(std::max(0.0, e_inner(S, S))); }

ESection s_of_f(const FunctionField& f, const TangentField& gradient) { return ESection(gradient, f); }

// ---------------------------------------------------------------------------

std::string to_json(const FunctionField& f) {
  nlohmann::json j = nlohmann::json::array();
  for (int v = 0; v < f.size(); ++v) j.push_back(f[v]);
  return j.dump();
}

std::string to_json(const ESection& S) {
  nlohmann::json j;
  auto& t = j["tangent"] = nlohmann::json::array();
  for (int v = 0; v < S.scalar.size(); ++v) t.push_back({S.tangent.values()(v, 0), S.tangent.values()(v, 1)});
  auto& s = j["scalar"] = nlohmann::json::array();
  for (int v = 0; v < S.scalar.size(); ++v) s.push_back(S.scalar[v]);
  return j.dump();
}

FunctionField function_from_json(const SimplicialSurface& m, const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    Eigen::VectorXd v(j.size());
    for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
    return FunctionField(m, std::move(v));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("function field JSON: ") + e.what());
  }
}

ESection section_from_json(const SimplicialSurface& m, const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    const auto& t = j.at("tangent");
    const auto& s = j.at("scalar");
    Eigen::MatrixX2d tv(t.size(), 2);
    Eigen::VectorXd sv(s.size());
    for (std::size_t i = 0; i < t.size(); ++i) {
      tv(static_cast<Eigen::Index>(i), 0) = t[i].at(0).get<double>();
      tv(static_cast<Eigen::Index>(i), 1) = t[i].at(1).get<double>();
    }
    for (std::size_t i = 0; i < s.size(); ++i) sv[static_cast<Eigen::Index>(i)] = s[i].get<double>();
    return ESection(TangentField(m, std::move(tv)), FunctionField(m, std::move(sv)));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("section JSON: ") + e.what());
  }
}

} // namespace pinchlab
