#include "pinchlab/operators.hpp"

#include <cmath>

#include <Eigen/SparseCore>
#include <unsupported/Eigen/SparseExtra>

#include "pinchlab/error.hpp"

namespace pinchlab {

namespace {

using Triplets = std::vector<Eigen::Triplet<double>>;

SparseMatrix from_triplets(int n, const Triplets& t) {
  SparseMatrix A(n, n);
  A.setFromTriplets(t.begin(), t.end());
  A.makeCompressed();
  return A;
}

// Face layout with face[0] at the origin and face[1] on the positive x-axis.
std::array<Eigen::Vector2d, 3> face_layout(const SimplicialSurface& m, int f) {
  const double l0 = m.face_edge_length(f, 0);
  const double l2 = m.face_edge_length(f, 2);
  const double c0 = m.corner_angle(f, 0);
  return {Eigen::Vector2d(0.0, 0.0), Eigen::Vector2d(l0, 0.0),
          Eigen::Vector2d(l2 * std::cos(c0), l2 * std::sin(c0))};
}

} // namespace

double OperatorPencil::quadratic_form(const Eigen::VectorXd& x) const {
  if (x.size() != dimension()) throw InvalidArgument("vector length does not match pencil dimension");
  // Written as x_j sum_i K_ij (x_i - x_j) + x_j^2 (column sum), so any
  // vector in the kernel of a zero-column-sum matrix evaluates to exactly 0.
  std::vector<double> cols(static_cast<std::size_t>(dimension()));
  for (int j = 0; j < stiffness.outerSize(); ++j) {
    double diff = 0.0, off = 0.0, diag = 0.0;
    for (SparseMatrix::InnerIterator it(stiffness, j); it; ++it) {
      if (it.row() == j) {
        diag = it.value();
      } else {
        off += it.value();
        diff += it.value() * (x[it.row()] - x[j]);
      }
    }
    cols[j] = x[j] * diff + x[j] * x[j] * (off + diag);
  }
  return pairwise_sum(cols.data(), cols.size()) / volume();
}

double OperatorPencil::mass_norm_squared(const Eigen::VectorXd& x) const {
  const Eigen::VectorXd t = x.cwiseProduct(x).cwiseProduct(mass);
  return pairwise_sum(t.data(), static_cast<std::size_t>(t.size())) / volume();
}

double OperatorPencil::rayleigh_quotient(const Eigen::VectorXd& x) const {
  const double d = mass_norm_squared(x);
  if (!(d > 0.0)) throw InvalidArgument("Rayleigh quotient of the zero vector");
  return quadratic_form(x) / d;
}

Eigen::VectorXd OperatorPencil::weak_apply(const Eigen::VectorXd& x) const {
  return (stiffness * x).cwiseQuotient(mass);
}

OperatorPencil assemble_laplacian(const SimplicialSurface& m) {
  const int n = m.num_vertices();
  std::vector<double> weight(static_cast<std::size_t>(m.num_edges()), 0.0);
  for (int f = 0; f < m.num_faces(); ++f) {
    const Face& t = m.faces()[f];
    for (int q = 0; q < 3; ++q) {
      const double c = m.corner_angle(f, q);
      weight[m.edge_index(t[(q + 1) % 3], t[(q + 2) % 3])] += 0.5 * std::cos(c) / std::sin(c);
    }
  }
  OperatorPencil P;
  P.domain = PencilDomain::Function;
  P.surface = &m;
  P.mass = m.vertex_areas();
  Triplets trip;
  trip.reserve(2 * weight.size());
  for (int e = 0; e < m.num_edges(); ++e) {
    const EdgeKey k = m.edges()[e];
    if (weight[e] < 0.0) ++P.negative_weights;
    trip.emplace_back(k.a, k.b, -weight[e]);
    trip.emplace_back(k.b, k.a, -weight[e]);
  }
  SparseMatrix off = from_triplets(n, trip);
  // Diagonal as the exact negated column sum, so constants are in the kernel.
  trip.clear();
  for (int j = 0; j < n; ++j) {
    double s = 0.0;
    for (SparseMatrix::InnerIterator it(off, j); it; ++it) s += it.value();
    trip.emplace_back(j, j, -s);
    for (SparseMatrix::InnerIterator it(off, j); it; ++it) trip.emplace_back(it.row(), j, it.value());
  }
  P.stiffness = from_triplets(n, trip);
  return P;
}

std::array<Eigen::Vector2d, 3> hat_gradients(const SimplicialSurface& m, int f) {
  const auto p = face_layout(m, f);
  const double two_area = 2.0 * m.face_area(f);
  std::array<Eigen::Vector2d, 3> g;
  for (int q = 0; q < 3; ++q) {
    const Eigen::Vector2d e = p[(q + 2) % 3] - p[(q + 1) % 3];
    g[q] = Eigen::Vector2d(-e.y(), e.x()) / two_area;
  }
  return g;
}

std::vector<Eigen::Vector2d> face_gradients(const SimplicialSurface& m, const Eigen::VectorXd& f) {
  if (f.size() != m.num_vertices()) throw InvalidArgument("field length does not match vertex count");
  std::vector<Eigen::Vector2d> out(static_cast<std::size_t>(m.num_faces()));
  for (int F = 0; F < m.num_faces(); ++F) {
    const auto g = hat_gradients(m, F);
    const Face& t = m.faces()[F];
    out[F] = f[t[0]] * g[0] + f[t[1]] * g[1] + f[t[2]] * g[2];
  }
  return out;
}

TangentField gradient(const TransportAtlas& atlas, const FunctionField& f) {
  const SimplicialSurface& m = atlas.surface();
  if (&f.surface() != &m) throw InvalidArgument("field and atlas live on different surfaces");
  const auto gf = face_gradients(m, f.values());
  Eigen::MatrixX2d acc = Eigen::MatrixX2d::Zero(m.num_vertices(), 2);
  Eigen::VectorXd wsum = Eigen::VectorXd::Zero(m.num_vertices());
  for (int F = 0; F < m.num_faces(); ++F) {
    const double A = m.face_area(F);
    for (int q = 0; q < 3; ++q) {
      const int v = m.faces()[F][q];
      acc.row(v) += A * (rotation2(-atlas.vertex_to_face(F, q)) * gf[F]).transpose();
      wsum[v] += A;
    }
  }
  for (int v = 0; v < m.num_vertices(); ++v) acc.row(v) /= wsum[v];
  return TangentField(m, std::move(acc));
}

OperatorPencil assemble_bundle_laplacian(const TransportAtlas& atlas) {
  const SimplicialSurface& m = atlas.surface();
  const int n = kSectionDofs * m.num_vertices();
  Triplets trip;
  trip.reserve(static_cast<std::size_t>(m.num_faces()) * 81);

  using Row = Eigen::Matrix<double, 1, 9>;
  using Local = Eigen::Matrix<double, 9, 9>;
  for (int F = 0; F < m.num_faces(); ++F) {
    const double A = m.face_area(F);
    const auto grad = hat_gradients(m, F);
    std::array<Eigen::Matrix2d, 3> R;
    for (int q = 0; q < 3; ++q) R[q] = rotation2(atlas.vertex_to_face(F, q));

    // Linear functionals of the local unknowns (alpha_q in vertex frames, f_q).
    Row trace = Row::Zero(), fbar = Row::Zero();
    std::array<Row, 4> G;  // G(a,b) = d_b alpha_a in the face frame, index 2a+b
    std::array<Row, 2> df, abar;
    for (auto& r : G) r.setZero();
    for (auto& r : df) r.setZero();
    for (auto& r : abar) r.setZero();
    for (int q = 0; q < 3; ++q) {
      const Eigen::Vector2d rt = R[q].transpose() * grad[q];
      trace(3 * q) = rt.x();
      trace(3 * q + 1) = rt.y();
      fbar(3 * q + 2) = 1.0 / 3.0;
      for (int a = 0; a < 2; ++a) {
        for (int b = 0; b < 2; ++b)
          for (int c = 0; c < 2; ++c) G[2 * a + b](3 * q + c) = R[q](a, c) * grad[q][b];
        for (int c = 0; c < 2; ++c) abar[a](3 * q + c) = R[q](a, c) / 3.0;
        df[a](3 * q + 2) = grad[q][a];
      }
    }

    Local K = Local::Zero();
    // |grad alpha + f g|^2 = |G|^2 + 2 f tr G + 2 f^2
    for (const Row& r : G) K += A * r.transpose() * r;
    K += A * (trace.transpose() * fbar + fbar.transpose() * trace);
    // |df - alpha|^2 = |df|^2 - 2 df . alpha + |alpha|^2
    for (int a = 0; a < 2; ++a) {
      K += A * df[a].transpose() * df[a];
      K -= A * (df[a].transpose() * abar[a] + abar[a].transpose() * df[a]);
    }
    for (int q = 0; q < 3; ++q)
      for (int r = 0; r < 3; ++r) {
        const double mc = A / 12.0 * (q == r ? 2.0 : 1.0);
        K(3 * q + 2, 3 * r + 2) += 2.0 * mc;
        K.block<2, 2>(3 * q, 3 * r) += mc * R[q].transpose() * R[r];
      }

    const Face& t = m.faces()[F];
    for (int i = 0; i < 9; ++i)
      for (int j = 0; j < 9; ++j)
        if (K(i, j) != 0.0) trip.emplace_back(3 * t[i / 3] + i % 3, 3 * t[j / 3] + j % 3, K(i, j));
  }

  OperatorPencil P;
  P.domain = PencilDomain::ESection;
  P.surface = &m;
  SparseMatrix S = from_triplets(n, trip);
  // Symmetrize away assembly round-off.
  P.stiffness = 0.5 * (S + SparseMatrix(S.transpose()));
  P.stiffness.makeCompressed();
  P.mass.resize(n);
  for (int v = 0; v < m.num_vertices(); ++v) P.mass.segment<3>(3 * v).setConstant(m.vertex_area(v));
  return P;
}

SparseMatrix curvature_gradient_form(const SimplicialSurface& m, const Eigen::VectorXd& K) {
  if (K.size() != m.num_vertices()) throw InvalidArgument("curvature length does not match vertex count");
  Triplets trip;
  trip.reserve(static_cast<std::size_t>(m.num_faces()) * 9);
  for (int F = 0; F < m.num_faces(); ++F) {
    const Face& t = m.faces()[F];
    const double w = m.face_area(F) * (K[t[0]] + K[t[1]] + K[t[2]]) / 3.0;
    const auto g = hat_gradients(m, F);
    for (int q = 0; q < 3; ++q)
      for (int r = 0; r < 3; ++r) trip.emplace_back(t[q], t[r], w * g[q].dot(g[r]));
  }
  return from_triplets(m.num_vertices(), trip);
}

FunctionField weak_laplacian(const OperatorPencil& laplacian, const FunctionField& f) {
  if (laplacian.domain != PencilDomain::Function) throw InvalidArgument("weak Laplacian needs a function pencil");
  return FunctionField(f.surface(), laplacian.weak_apply(f.values()));
}

BochnerNorm pinching_norm_bochner(const OperatorPencil& laplacian, const Eigen::VectorXd& K,
                                  const FunctionField& f, int n) {
  return pinching_norm_bochner(laplacian, curvature_gradient_form(*laplacian.surface, K), f, n);
}

BochnerNorm pinching_norm_bochner(const OperatorPencil& L, const SparseMatrix& Q, const FunctionField& f,
                                  int n) {
  if (L.domain != PencilDomain::Function) throw InvalidArgument("Bochner route needs a function pencil");
  const Eigen::VectorXd& x = f.values();
  const Eigen::VectorXd lap = L.weak_apply(x);
  const double vol = L.volume();
  const double lap_sq = L.mass_norm_squared(lap);
  const double curv = x.dot(Q * x) / vol;
  const double f_lap = L.quadratic_form(x);
  const double f_sq = L.mass_norm_squared(x);
  BochnerNorm out;
  out.raw = lap_sq - curv - 2.0 * f_lap + n * f_sq;
  out.clamp = std::max(-out.raw, 0.0);
  out.value = std::sqrt(std::max(out.raw, 0.0));
  out.clamp_warning = out.clamp > 1e-6 * f_sq;
  return out;
}

double pinching_norm_bundle(const OperatorPencil& bundle, const ESection& S) {
  if (bundle.domain != PencilDomain::ESection) throw InvalidArgument("bundle norm needs a section pencil");
  return std::sqrt(std::max(bundle.quadratic_form(S.to_vector()), 0.0));
}

void export_matrix_market(const OperatorPencil& pencil, const std::string& stem) {
  const SparseMatrix lower = pencil.stiffness.triangularView<Eigen::Lower>();
  SparseMatrix mass(pencil.dimension(), pencil.dimension());
  Triplets trip;
  for (int i = 0; i < pencil.dimension(); ++i) trip.emplace_back(i, i, pencil.mass[i]);
  mass.setFromTriplets(trip.begin(), trip.end());
  if (!Eigen::saveMarket(lower, stem + ".stiffness.mtx", Eigen::Symmetric) ||
      !Eigen::saveMarket(mass, stem + ".mass.mtx", Eigen::Symmetric))
    throw Error("cannot write Matrix Market files with stem " + stem);
}

} // namespace pinchlab
