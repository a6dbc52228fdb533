#include "pinchlab/spectra.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include <Eigen/Dense>
#include <Eigen/SparseCholesky>
#include <json.hpp>

#include "pinchlab/error.hpp"

namespace pinchlab {

namespace {

double to_unit(std::uint64_t bits) { return static_cast<double>(bits >> 11) * 0x1.0p-53; }

Eigen::MatrixXd random_block(std::mt19937_64& rng, int rows, int cols) {
  Eigen::MatrixXd X(rows, cols);
  for (int j = 0; j < cols; ++j)
    for (int i = 0; i < rows; ++i) X(i, j) = 2.0 * to_unit(rng()) - 1.0;
  return X;
}

// Mass-orthonormalizes W against the M-orthonormal columns of Q and itself.
// Dependent columns are replaced by fresh random directions.
Eigen::MatrixXd orthonormalize(const Eigen::MatrixXd& Q, int qcols, Eigen::MatrixXd W,
                               const Eigen::VectorXd& mass, std::mt19937_64& rng) {
  auto project_out = [&](Eigen::Ref<Eigen::MatrixXd> X) {
    if (qcols == 0) return;
    for (int pass = 0; pass < 2; ++pass) {
      const Eigen::MatrixXd C = Q.leftCols(qcols).transpose() * (mass.asDiagonal() * X);
      X.noalias() -= Q.leftCols(qcols) * C;
    }
  };
  project_out(W);
  for (int j = 0; j < W.cols(); ++j) {
    for (int attempt = 0;; ++attempt) {
      const double before = std::sqrt(W.col(j).dot(mass.asDiagonal() * W.col(j)));
      for (int pass = 0; pass < 2; ++pass)
        for (int i = 0; i < j; ++i) W.col(j) -= W.col(i).dot(mass.asDiagonal() * W.col(j)) * W.col(i);
      const double after = std::sqrt(W.col(j).dot(mass.asDiagonal() * W.col(j)));
      if (after > 1e-10 * before && after > 0.0) {
        W.col(j) /= after;
        break;
      }
      if (attempt > 5) throw ConvergenceError("cannot extend the Krylov basis: subspace exhausted");
      Eigen::MatrixXd fresh = random_block(rng, static_cast<int>(W.rows()), 1);
      project_out(fresh);
      W.col(j) = fresh;
    }
  }
  return W;
}

std::vector<double> residuals_of(const OperatorPencil& P, const Eigen::VectorXd& lambda,
                                 const Eigen::MatrixXd& U) {
  std::vector<double> out(static_cast<std::size_t>(U.cols()));
  for (int j = 0; j < U.cols(); ++j) {
    const Eigen::VectorXd Mu = P.mass.cwiseProduct(U.col(j));
    const Eigen::VectorXd r = P.stiffness * U.col(j) - lambda[j] * Mu;
    out[j] = r.norm() / (Mu.norm() * std::max(1.0, std::abs(lambda[j])));
  }
  return out;
}

// Sign convention and deterministic ordering inside near-degenerate clusters.
void canonicalize(Spectrum& S) {
  const int k = S.size();
  for (int j = 0; j < k; ++j) {
    auto col = S.vectors.col(j);
    const double scale = col.cwiseAbs().maxCoeff();
    for (int i = 0; i < col.size(); ++i)
      if (std::abs(col[i]) > 1e-8 * scale) {
        if (col[i] < 0) col = -col;
        break;
      }
  }
  int start = 0;
  while (start < k) {
    int end = start + 1;
    while (end < k && std::abs(S.eigenvalues[end] - S.eigenvalues[start]) <=
                          1e-8 * std::max(1.0, std::abs(S.eigenvalues[start])))
      ++end;
    if (end - start > 1) {
      std::vector<int> idx(static_cast<std::size_t>(end - start));
      for (int i = 0; i < end - start; ++i) idx[i] = start + i;
      std::stable_sort(idx.begin(), idx.end(),
                       [&](int a, int b) { return S.vectors(0, a) > S.vectors(0, b); });
      const Eigen::MatrixXd block = S.vectors.middleCols(start, end - start);
      std::vector<double> vals(S.eigenvalues.begin() + start, S.eigenvalues.begin() + end);
      std::vector<double> res(S.residuals.begin() + start, S.residuals.begin() + end);
      for (int i = 0; i < end - start; ++i) {
        S.vectors.col(start + i) = block.col(idx[i] - start);
        S.eigenvalues[start + i] = vals[idx[i] - start];
        S.residuals[start + i] = res[idx[i] - start];
      }
    }
    start = end;
  }
}

class ShiftedSolver {
public:
  ShiftedSolver(const OperatorPencil& P, double shift, SolverMeta& meta) : P_(P) {
    for (int attempt = 0; attempt < 2; ++attempt) {
      const SparseMatrix A = P.stiffness - shift * SparseMatrix(P.mass.asDiagonal());
      ldlt_.compute(A);
      bool ok = ldlt_.info() == Eigen::Success;
      if (ok) {
        const Eigen::VectorXd d = ldlt_.vectorD().cwiseAbs();
        ok = d.minCoeff() > 1e-13 * d.maxCoeff();
      }
      if (ok) {
        meta.shift = shift;
        return;
      }
      ++meta.shift_perturbations;
      shift -= 0.1 * std::max(std::abs(shift), 1e-3);
    }
    throw ConvergenceError("shifted system is singular after a shift perturbation");
  }

  Eigen::MatrixXd apply(const Eigen::MatrixXd& X) const {
    return ldlt_.solve(P_.mass.asDiagonal() * X);
  }

private:
  const OperatorPencil& P_;
  Eigen::SimplicialLDLT<SparseMatrix> ldlt_;
};

} // namespace

FunctionField Spectrum::eigenfunction(int j) const {
  if (domain != PencilDomain::Function) throw InvalidArgument("spectrum is not of a function pencil");
  return FunctionField(*surface, vectors.col(j));
}

ESection Spectrum::eigensection(int j) const {
  if (domain != PencilDomain::ESection) throw InvalidArgument("spectrum is not of a section pencil");
  return ESection::from_vector(*surface, vectors.col(j));
}

Spectrum solve_smallest(const OperatorPencil& P, int k, const SolveOptions& opt) {
  const int n = P.dimension();
  if (k < 1) throw InvalidArgument("k must be positive");
  if (k > n / 10) throw InvalidArgument("k = " + std::to_string(k) + " exceeds 10% of the dimension " +
                                        std::to_string(n));
  if (!(opt.tol >= 1e-12)) throw InvalidArgument("tolerance below 1e-12");

  Spectrum S;
  S.domain = P.domain;
  S.surface = P.surface;
  S.meta.method = "lanczos";
  const int p = opt.block_size > 0 ? opt.block_size : std::min(std::max(k, 8), 24);
  const int keep = k + p;
  const int mmax = std::min(n, std::max(2 * keep, k + 4 * p));
  S.meta.block_size = p;

  ShiftedSolver op(P, opt.shift, S.meta);
  std::mt19937_64 rng(P.surface->content_hash() ^ static_cast<std::uint64_t>(P.dimension()));

  Eigen::MatrixXd Q(n, mmax);
  int cols = 0;
  Eigen::MatrixXd X = orthonormalize(Q, 0, random_block(rng, n, p), P.mass, rng);
  Q.leftCols(p) = X;
  cols = p;

  Eigen::VectorXd theta;
  Eigen::MatrixXd Y;
  std::vector<double> res;
  for (int cycle = 0;; ++cycle) {
    while (cols + p <= mmax) {
      Eigen::MatrixXd W = op.apply(X);
      ++S.meta.operator_applications;
      W = orthonormalize(Q, cols, std::move(W), P.mass, rng);
      Q.middleCols(cols, p) = W;
      cols += p;
      X = std::move(W);
    }
    S.meta.basis_size = cols;
    const Eigen::MatrixXd B = Q.leftCols(cols);
    Eigen::MatrixXd H = B.transpose() * (P.stiffness * B);
    H = 0.5 * (H + H.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(H);
    theta = es.eigenvalues();
    Y = B * es.eigenvectors().leftCols(std::min(keep, cols));
    res = residuals_of(P, theta.head(k), Y.leftCols(k));
    std::vector<int> pending;
    for (int j = 0; j < k; ++j)
      if (!(res[j] <= opt.tol)) pending.push_back(j);
    if (pending.empty()) break;
    if (cycle >= opt.max_restarts) {
      std::ostringstream msg;
      msg << "eigensolver did not converge after " << cycle << " restarts; residuals:";
      for (double r : res) msg << ' ' << r;
      throw ConvergenceError(msg.str());
    }
    ++S.meta.restarts;
    const int kept = static_cast<int>(Y.cols());
    Q.leftCols(kept) = orthonormalize(Q, 0, Y, P.mass, rng);
    cols = kept;
    std::vector<int> next = pending;
    for (int j = k; static_cast<int>(next.size()) < p && j < kept; ++j) next.push_back(j);
    for (int j = 0; static_cast<int>(next.size()) < p && j < k; ++j)
      if (std::find(next.begin(), next.end(), j) == next.end()) next.push_back(j);
    next.resize(static_cast<std::size_t>(p));
    X.resize(n, p);
    for (int i = 0; i < p; ++i) X.col(i) = Q.col(next[i]);
    // Expansion continues from the unconverged Ritz directions.
    X = op.apply(X);
    ++S.meta.operator_applications;
    X = orthonormalize(Q, cols, std::move(X), P.mass, rng);
    Q.middleCols(cols, p) = X;
    cols += p;
  }

  S.eigenvalues.assign(theta.data(), theta.data() + k);
  S.vectors = Y.leftCols(k) * std::sqrt(P.volume());
  S.residuals = res;
  canonicalize(S);
  return S;
}

Spectrum solve_dense(const OperatorPencil& P, int k) {
  const int n = P.dimension();
  if (n > kDenseLimit) throw InvalidArgument("dense solve limited to " + std::to_string(kDenseLimit) + " unknowns");
  if (k <= 0 || k > n) k = n;
  const Eigen::VectorXd s = P.mass.cwiseSqrt().cwiseInverse();
  Eigen::MatrixXd A = s.asDiagonal() * Eigen::MatrixXd(P.stiffness) * s.asDiagonal();
  A = 0.5 * (A + A.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(A);
  if (es.info() != Eigen::Success) throw ConvergenceError("dense eigensolver failed");
  Spectrum S;
  S.domain = P.domain;
  S.surface = P.surface;
  S.meta.method = "dense";
  S.eigenvalues.assign(es.eigenvalues().data(), es.eigenvalues().data() + k);
  S.vectors = s.asDiagonal() * es.eigenvectors().leftCols(k) * std::sqrt(P.volume());
  S.residuals = residuals_of(P, es.eigenvalues().head(k), S.vectors);
  canonicalize(S);
  return S;
}

ProjectionSpec::ProjectionSpec(int n, double delta) : n_(n), delta_(delta) {
  if (n < 2) throw InvalidArgument("projection dimension n must be at least 2");
  if (!(delta > 0.0) || !std::isfinite(delta)) throw InvalidArgument("projection delta must be positive");
}

double ProjectionSpec::low() const { return n_ - std::sqrt(delta_); }
double ProjectionSpec::high() const { return n_ + std::sqrt(delta_); }

bool ProjectionSpec::contains(double lambda) const {
  return lambda >= low() - 1e-9 && lambda <= high() + 1e-9;
}

std::vector<int> band_indices(const ProjectionSpec& spec, const Spectrum& S) {
  if (S.eigenvalues.empty() || !(S.eigenvalues.back() > spec.high() + 1e-9))
    throw InvalidArgument("spectrum does not cover the band [" + std::to_string(spec.low()) + ", " +
                          std::to_string(spec.high()) + "]; request more eigenpairs");
  std::vector<int> idx;
  for (int j = 0; j < S.size(); ++j)
    if (spec.contains(S.eigenvalues[j])) idx.push_back(j);
  return idx;
}

FunctionField project_band(const ProjectionSpec& spec, const Spectrum& S, const FunctionField& f) {
  if (S.domain != PencilDomain::Function) throw InvalidArgument("band projection needs a function spectrum");
  if (&f.surface() != S.surface) throw InvalidArgument("field and spectrum live on different surfaces");
  const Eigen::VectorXd w = f.values().cwiseProduct(f.surface().vertex_areas()) / f.surface().total_volume();
  Eigen::VectorXd out = Eigen::VectorXd::Zero(f.size());
  for (int j : band_indices(spec, S)) out += S.vectors.col(j).dot(w) * S.vectors.col(j);
  return FunctionField(f.surface(), std::move(out));
}

LambdaCertificate certify_lambda_k(const Spectrum& S, const OperatorPencil& P, int k) {
  if (k < 1 || k > S.size()) throw InvalidArgument("certify_lambda_k: k out of range");
  const Eigen::MatrixXd U = S.vectors.leftCols(k);
  Eigen::MatrixXd A = U.transpose() * (P.stiffness * U);
  Eigen::MatrixXd B = U.transpose() * (P.mass.asDiagonal() * U);
  A = 0.5 * (A + A.transpose()).eval();
  B = 0.5 * (B + B.transpose()).eval();
  Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> ges(A, B);
  if (ges.info() != Eigen::Success) throw ConsistencyError("certificate Gram matrix is not positive definite");
  LambdaCertificate c;
  c.lambda_k = S.eigenvalues[k - 1];
  c.upper_bound = ges.eigenvalues().maxCoeff();
  if (std::abs(c.upper_bound - c.lambda_k) > 1e-6 * std::max(1.0, std::abs(c.lambda_k)))
    throw ConsistencyError("Rayleigh-Ritz certificate " + std::to_string(c.upper_bound) +
                           " disagrees with lambda_k " + std::to_string(c.lambda_k));
  return c;
}

std::string to_json(const Spectrum& S, bool include_vectors) {
  nlohmann::json j;
  j["eigenvalues"] = S.eigenvalues;
  j["residuals"] = S.residuals;
  j["meta"] = {{"method", S.meta.method},
               {"shift", S.meta.shift},
               {"shift_perturbations", S.meta.shift_perturbations},
               {"restarts", S.meta.restarts},
               {"operator_applications", S.meta.operator_applications},
               {"block_size", S.meta.block_size},
               {"basis_size", S.meta.basis_size},
               {"domain", S.domain == PencilDomain::Function ? "function" : "esection"}};
  if (include_vectors) {
    auto& v = j["eigenfields"] = nlohmann::json::array();
    for (int c = 0; c < S.vectors.cols(); ++c) {
      std::vector<double> col(S.vectors.col(c).data(), S.vectors.col(c).data() + S.vectors.rows());
      v.push_back(col);
    }
  }
  return j.dump();
}

} // namespace pinchlab
