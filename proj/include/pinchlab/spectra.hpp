#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>

#include "pinchlab/fields.hpp"
#include "pinchlab/operators.hpp"

namespace pinchlab {

struct SolverMeta {
  std::string method;          // "lanczos" or "dense"
  double shift = 0.0;          // final shift used by shift-invert
  int shift_perturbations = 0;
  int restarts = 0;
  int operator_applications = 0;  // block solves with the shifted factor
  int block_size = 0;
  int basis_size = 0;
};

/// Ascending generalized eigenpairs of a pencil. Eigenvectors are
/// orthonormal in the volume-normalized mass inner product (1/Vol) x^T M y.
struct Spectrum {
  std::vector<double> eigenvalues;
  Eigen::MatrixXd vectors;  // one column per eigenpair
  /// ||K u - lambda M u|| / (||M u|| max(1, |lambda|)), Euclidean norms.
  std::vector<double> residuals;
  PencilDomain domain = PencilDomain::Function;
  const SimplicialSurface* surface = nullptr;
  SolverMeta meta;

  int size() const { return static_cast<int>(eigenvalues.size()); }
  FunctionField eigenfunction(int j) const;
  ESection eigensection(int j) const;
};

struct SolveOptions {
  double tol = 1e-10;
  /// Shift for shift-invert; eigenvalues above it are targeted.
  double shift = -0.01;
  int max_restarts = 60;
  /// 0 selects max(k, 8) capped at 24.
  int block_size = 0;
};

/// k smallest eigenpairs by block shift-invert Lanczos with full
/// reorthogonalization and explicit restarts. The start block is derived from
/// the mesh content hash, so results are reproducible.
Spectrum solve_smallest(const OperatorPencil& pencil, int k, const SolveOptions& options = {});

/// Dense reference solver (symmetric M^{-1/2} K M^{-1/2}); k <= 0 returns all pairs.
Spectrum solve_dense(const OperatorPencil& pencil, int k = 0);

/// Largest problem size accepted by solve_dense.
inline constexpr int kDenseLimit = 6000;

/// Band [n - sqrt(delta), n + sqrt(delta)] for the (n, delta)-projection.
class ProjectionSpec {
public:
  ProjectionSpec(int n, double delta);
  int n() const { return n_; }
  double delta() const { return delta_; }
  double low() const;
  double high() const;
  /// Closed membership with absolute slack 1e-9.
  bool contains(double lambda) const;

private:
  int n_;
  double delta_;
};

/// Mass-orthogonal projection of f onto the eigenfunctions with eigenvalue in
/// the band. Throws if the spectrum does not reach above the band.
FunctionField project_band(const ProjectionSpec& spec, const Spectrum& spectrum, const FunctionField& f);
/// Indices of eigenpairs inside the band.
std::vector<int> band_indices(const ProjectionSpec& spec, const Spectrum& spectrum);

struct LambdaCertificate {
  double lambda_k = 0.0;
  /// Largest Rayleigh-Ritz value over the span of the first k eigenvectors.
  double upper_bound = 0.0;
};

/// lambda_k (1-based) with an independent Rayleigh-Ritz certificate from the
/// raw forms. Throws ConsistencyError if they differ by more than 1e-6 relative.
LambdaCertificate certify_lambda_k(const Spectrum& spectrum, const OperatorPencil& pencil, int k);

/// {"eigenvalues": [...], "residuals": [...], "meta": {...}}.
std::string to_json(const Spectrum& spectrum, bool include_vectors = false);

} // namespace pinchlab
