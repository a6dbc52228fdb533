#pragma once

#include <optional>
#include <string>
#include <vector>

#include "pinchlab/fields.hpp"
#include "pinchlab/mesh.hpp"
#include "pinchlab/operators.hpp"
#include "pinchlab/spectra.hpp"

namespace pinchlab {

/// Everything the pinching analytics need for one surface. The surface must
/// outlive the set.
struct OperatorSet {
  const SimplicialSurface* surface = nullptr;
  TransportAtlas atlas;
  CurvatureField curvature;
  OperatorPencil laplacian;
  OperatorPencil bundle;
  SparseMatrix curvature_form;
  int n = 2;

  explicit OperatorSet(const SimplicialSurface& m);

  /// S_f = grad f + f e with the discrete gradient.
  ESection section_of(const FunctionField& f) const;
  BochnerNorm bochner(const FunctionField& f) const;
  double bundle_norm(const FunctionField& f) const;
};

struct ObataFit {
  double c = 0.0;
  double residual = 0.0;  // ||L f0 - n c f0|| / ||L f0||
  bool positive = false;
};

/// Least-squares c for L f0 = n c f0 with f0 = f - mean(f).
ObataFit estimate_obata_constant(const FunctionField& f, const OperatorSet& ops);

struct PinchRecord {
  std::string name;
  double norm_f = 0.0;
  double norm_laplacian = 0.0;
  double pinch_bochner = 0.0;
  double pinch_bundle = 0.0;
  double bochner_clamp = 0.0;
  double ratio_to_f = 0.0;          // pinch_bochner / ||f||
  double ratio_to_laplacian = 0.0;  // pinch_bochner / ||L f||
  double obata_c = 0.0;
  double obata_residual = 0.0;
};

struct PinchReport {
  std::vector<PinchRecord> records;
  /// sup over the span of ||Hess f + f g|| / ||f|| (Bochner route).
  double delta = 0.0;
  /// Same supremum with the bundle form on S_f.
  double delta_bundle = 0.0;
  /// max over the span of ||f||^2 / ||S_f||^2.
  double max_f_over_section = 0.0;
  /// Largest bundle Rayleigh quotient over span{S_f}.
  double section_rayleigh_max = 0.0;
  double gram_determinant = 0.0;
  /// Eigenvalues of the Laplacian inside the band, or -1 if not requested.
  int band_multiplicity = -1;
  double obata_c = 0.0;
  int n = 2;
  bool clamp_warning = false;
};

/// delta-pinching of span(fields). Throws if the normalized Gram determinant
/// is at most 1e-10. If `spectrum` and `band` are given, the report carries
/// the band multiplicity.
PinchReport certify_subspace_pinching(const std::vector<FunctionField>& fields, const OperatorSet& ops,
                                      const std::vector<std::string>& names = {},
                                      const Spectrum* spectrum = nullptr,
                                      const std::optional<ProjectionSpec>& band = std::nullopt);

std::string to_json(const PinchReport& report);
/// One row per function; header documented in the README.
std::string to_csv(const PinchReport& report);
std::string pinch_csv_header();

struct OmegaResult {
  int k = 0;
  /// k-th largest generalized eigenvalue of (Q1, Q2): sup over k-dim subspaces of the min quotient.
  double value = 0.0;
  /// k-th smallest: inf over k-dim subspaces of the max quotient.
  double inf_sup = 0.0;
  int basis_size = 0;
  bool converged = false;
  std::vector<std::pair<int, double>> history;  // (basis size, value)
};

/// Omega_k in the truncated basis of mean-zero Laplacian eigenfunctions,
/// doubling the basis from max(30, 5k) until the value moves less than 0.5%.
OmegaResult omega_k(const OperatorSet& ops, const Spectrum& laplacian_spectrum, int k);

struct OmegaIdentity {
  double left = 0.0;   // ||Hess f + (Lf/n) g||^2 via the bundle form
  double right = 0.0;  // (n-1)/n ||Lf||^2 - (1/Vol) int K |grad f|^2
  double residual = 0.0;
};

/// Compares the traceless-Hessian identity evaluated along two routes.
OmegaIdentity bochner_omega_identity_check(const FunctionField& f, const OperatorSet& ops);

/// Scalar parts of eigensections with eigenvalue <= threshold, orthonormalized.
std::vector<FunctionField> obata_kernel(const Spectrum& bundle_spectrum, double threshold);

} // namespace pinchlab
