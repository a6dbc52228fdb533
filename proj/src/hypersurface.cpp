#include "pinchlab/hypersurface.hpp"

#include <cmath>
#include <sstream>

#include <Eigen/Eigenvalues>
#include <Eigen/Geometry>
#include <json.hpp>

#include "pinchlab/error.hpp"

namespace pinchlab {

namespace {

constexpr int kDim = 2;

// (1/Vol) sum_v area(v) x_v.
double volume_mean(const SimplicialSurface& m, const Eigen::VectorXd& x) {
  const Eigen::VectorXd w = m.vertex_areas().cwiseProduct(x);
  return pairwise_sum(w.data(), static_cast<std::size_t>(w.size())) / m.total_volume();
}

} // namespace

Eigen::Vector2d ShapeField::principal(int v) const {
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(A[v]);
  return es.eigenvalues();
}

double enclosed_volume(const SimplicialSurface& m) {
  const auto& p = m.positions();
  double total = 0.0;
  for (const Face& f : m.faces()) total += p[f[0]].dot(p[f[1]].cross(p[f[2]]));
  return total / 6.0;
}

ShapeField shape_operator(const SimplicialSurface& m) {
  if (!m.is_embedded()) throw InvalidArgument("shape_operator needs an embedded mesh");
  if (!(enclosed_volume(m) > 0.0)) throw InvalidArgument("shape_operator: faces are not outward oriented");
  const auto& p = m.positions();
  const int nv = m.num_vertices();

  ShapeField out;
  out.normal.assign(static_cast<std::size_t>(nv), Vec3::Zero());
  for (int f = 0; f < m.num_faces(); ++f) {
    const Face& t = m.faces()[f];
    const Vec3 n = (p[t[1]] - p[t[0]]).cross(p[t[2]] - p[t[0]]).normalized();
    for (int q = 0; q < 3; ++q) out.normal[t[q]] += m.corner_angle(f, q) * n;
  }
  for (auto& n : out.normal) n.normalize();

  out.A.resize(nv);
  out.tangent.resize(nv);
  out.h.resize(nv);
  for (int v = 0; v < nv; ++v) {
    const Vec3& n = out.normal[v];
    const auto& star = m.vertex_star(v);
    const int first = m.faces()[star.front().face][(star.front().slot + 1) % 3];
    const Vec3 d0 = p[first] - p[v];
    const Vec3 e1 = (d0 - n * n.dot(d0)).normalized();
    const Vec3 e2 = n.cross(e1);
    out.tangent[v].col(0) = e1;
    out.tangent[v].col(1) = e2;
    // Unknowns (a11, a12, a22); each neighbour contributes two equations.
    Eigen::Matrix3d N = Eigen::Matrix3d::Zero();
    Eigen::Vector3d r = Eigen::Vector3d::Zero();
    for (const Corner& c : star) {
      const int j = m.faces()[c.face][(c.slot + 1) % 3];
      const Vec3 d = p[j] - p[v];
      const Vec3 dn = out.normal[j] - n;
      const double x = d.dot(e1), y = d.dot(e2);
      const double u = dn.dot(e1), w = dn.dot(e2);
      const Eigen::Vector3d row1(x, y, 0.0), row2(0.0, x, y);
      N += row1 * row1.transpose() + row2 * row2.transpose();
      r += row1 * u + row2 * w;
    }
    const Eigen::Vector3d a = N.ldlt().solve(r);
    out.A[v] << a[0], a[1], a[1], a[2];
    out.h[v] = 0.5 * out.A[v].trace();
  }
  return out;
}

UmbilicityReport umbilicity_report(const SimplicialSurface& m, const ShapeField& shape) {
  const int nv = m.num_vertices();
  UmbilicityReport out;
  out.hbar = volume_mean(m, shape.h);
  Eigen::VectorXd dh(nv), dhbar(nv), did(nv), spread(nv), h2(nv);
  for (int v = 0; v < nv; ++v) {
    const Eigen::Matrix2d& A = shape.A[v];
    const Eigen::Matrix2d I = Eigen::Matrix2d::Identity();
    dh[v] = (A - shape.h[v] * I).squaredNorm();
    dhbar[v] = (A - out.hbar * I).squaredNorm();
    did[v] = (A - I).squaredNorm();
    spread[v] = (shape.h[v] - out.hbar) * (shape.h[v] - out.hbar);
    h2[v] = shape.h[v] * shape.h[v];
    out.pythagoras_residual = std::max(out.pythagoras_residual, std::abs(dhbar[v] - dh[v] - kDim * spread[v]));
  }
  out.defect_h = std::sqrt(volume_mean(m, dh));
  out.defect_hbar = std::sqrt(volume_mean(m, dhbar));
  out.defect_id = std::sqrt(volume_mean(m, did));
  out.h_spread = std::sqrt(volume_mean(m, spread));
  out.h_l2 = std::sqrt(volume_mean(m, h2));
  return out;
}

std::vector<ESection> coordinate_sections(const SimplicialSurface& m, const ShapeField& shape) {
  const int nv = m.num_vertices();
  std::vector<ESection> out;
  for (int k = 0; k < 3; ++k) {
    const Vec3 v = Vec3::Unit(k);
    Eigen::MatrixX2d tangent(nv, 2);
    Eigen::VectorXd scalar(nv);
    for (int x = 0; x < nv; ++x) {
      tangent.row(x) = (shape.tangent[x].transpose() * v).transpose();
      scalar[x] = shape.normal[x].dot(v);
    }
    out.emplace_back(TangentField(m, std::move(tangent)), FunctionField(m, std::move(scalar)));
  }
  return out;
}

UmbilicEigenBound umbilic_eigen_bound_check(const SimplicialSurface& m, const ShapeField& shape,
                                            const OperatorPencil& bundle, const Spectrum& spectrum,
                                            double relative_budget, double absolute_budget) {
  if (bundle.domain != PencilDomain::ESection || spectrum.domain != PencilDomain::ESection)
    throw InvalidArgument("umbilic bound needs the bundle pencil and its spectrum");
  if (spectrum.size() < 3) throw InvalidArgument("umbilic bound needs at least three bundle eigenpairs");
  UmbilicEigenBound out;
  out.relative_budget = relative_budget;
  out.absolute_budget = absolute_budget;
  out.lhs = spectrum.eigenvalues[2];
  const UmbilicityReport u = umbilicity_report(m, shape);
  out.rhs = 2.0 * u.defect_id * u.defect_id;
  out.slack = out.rhs - out.lhs;

  const auto sections = coordinate_sections(m, shape);
  Eigen::MatrixXd X(bundle.dimension(), 3);
  for (int k = 0; k < 3; ++k) {
    X.col(k) = sections[k].to_vector();
    out.energy_sum += bundle.quadratic_form(X.col(k));
  }
  Eigen::Matrix3d K = X.transpose() * (bundle.stiffness * X);
  Eigen::Matrix3d M = X.transpose() * (bundle.mass.asDiagonal() * X);
  K = 0.5 * (K + K.transpose()).eval();
  M = 0.5 * (M + M.transpose()).eval();
  Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::Matrix3d> ges(K, M);
  if (ges.info() != Eigen::Success) throw ConsistencyError("coordinate sections are linearly dependent");
  out.rayleigh_max = ges.eigenvalues().maxCoeff();
  const double bound = out.rhs * (1.0 + relative_budget) + absolute_budget;
  out.pass = out.lhs <= bound && out.rayleigh_max <= bound;
  return out;
}

ChengZhouReilly cheng_zhou_and_reilly_check(const SimplicialSurface& m, const ShapeField& shape,
                                            const Spectrum& spectrum, double K, double budget) {
  if (spectrum.domain != PencilDomain::Function || spectrum.size() < 2)
    throw InvalidArgument("Reilly check needs at least two Laplace eigenpairs");
  if (K < 0.0) throw InvalidArgument("Ricci lower-bound constant must be nonnegative");
  const UmbilicityReport u = umbilicity_report(m, shape);
  ChengZhouReilly out;
  out.budget = budget;
  const double n = kDim;
  out.cz_lhs = u.h_spread;
  out.cz_rhs = std::sqrt(K + (n - 1.0) / n) * u.defect_h / (n - 1.0);
  out.reilly_lhs = spectrum.eigenvalues[1];
  out.reilly_rhs = n * u.h_l2;
  out.cz_pass = out.cz_lhs <= out.cz_rhs * (1.0 + budget);
  out.reilly_pass = out.reilly_lhs <= out.reilly_rhs * (1.0 + budget);
  out.reilly_gap = std::abs(out.reilly_lhs - out.reilly_rhs) / out.reilly_rhs;
  return out;
}

Eigen::Vector2d spheroid_principal_curvatures(double a, double c, double theta) {
  const double s = std::sin(theta), co = std::cos(theta);
  const double W = std::sqrt(a * a * co * co + c * c * s * s);
  return {a * c / (W * W * W), c / (a * W)};
}

std::string to_json(const UmbilicityReport& r) {
  nlohmann::json j{{"defect_h", r.defect_h},   {"defect_hbar", r.defect_hbar}, {"defect_id", r.defect_id},
                   {"hbar", r.hbar},           {"h_l2", r.h_l2},               {"h_spread", r.h_spread},
                   {"pythagoras_residual", r.pythagoras_residual}};
  return j.dump();
}

std::string to_json(const UmbilicEigenBound& r) {
  nlohmann::json j{{"lhs", r.lhs},
                   {"rhs", r.rhs},
                   {"slack", r.slack},
                   {"rayleigh_max", r.rayleigh_max},
                   {"energy_sum", r.energy_sum},
                   {"relative_budget", r.relative_budget},
                   {"absolute_budget", r.absolute_budget},
                   {"pass", r.pass}};
  return j.dump();
}

std::string to_json(const ChengZhouReilly& r) {
  nlohmann::json j{{"cz_lhs", r.cz_lhs},           {"cz_rhs", r.cz_rhs},         {"reilly_lhs", r.reilly_lhs},
                   {"reilly_rhs", r.reilly_rhs},   {"reilly_gap", r.reilly_gap}, {"budget", r.budget},
                   {"cz_pass", r.cz_pass},         {"reilly_pass", r.reilly_pass}};
  return j.dump();
}

std::string shape_csv(const ShapeField& shape) {
  std::ostringstream out;
  out.precision(17);
  out << "vertex,a11,a12,a22,h\n";
  for (std::size_t v = 0; v < shape.A.size(); ++v)
    out << v << ',' << shape.A[v](0, 0) << ',' << shape.A[v](0, 1) << ',' << shape.A[v](1, 1) << ',' << shape.h[v]
        << '\n';
  return out.str();
}

} // namespace pinchlab
