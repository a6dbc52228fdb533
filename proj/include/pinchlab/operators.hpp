#pragma once

#include <array>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include "pinchlab/fields.hpp"
#include "pinchlab/mesh.hpp"

namespace pinchlab {

using SparseMatrix = Eigen::SparseMatrix<double>;

enum class PencilDomain { Function, ESection };

/// Generalized symmetric pencil (stiffness, mass) on one surface.
///
/// Stiffness holds raw integrals over the surface, mass is diagonal with
/// entry area(v) for each unknown attached to vertex v. The normalized
/// quantities (1/Vol) x^T K x are exposed through quadratic_form().
struct OperatorPencil {
  SparseMatrix stiffness;
  Eigen::VectorXd mass;
  PencilDomain domain = PencilDomain::Function;
  const SimplicialSurface* surface = nullptr;
  /// Edges whose cotangent weight is negative (function pencil only).
  int negative_weights = 0;

  int dimension() const { return static_cast<int>(mass.size()); }
  double volume() const { return surface->total_volume(); }

  /// (1/Vol) x^T K x, accumulated so that kernel vectors evaluate to 0 exactly.
  double quadratic_form(const Eigen::VectorXd& x) const;
  /// (1/Vol) x^T M x.
  double mass_norm_squared(const Eigen::VectorXd& x) const;
  double rayleigh_quotient(const Eigen::VectorXd& x) const;
  /// M^{-1} K x.
  Eigen::VectorXd weak_apply(const Eigen::VectorXd& x) const;
};

/// Cotangent Laplacian with lumped (barycentric) mass.
OperatorPencil assemble_laplacian(const SimplicialSurface& m);

/// Gradient of f on each face, in that face's frame.
std::vector<Eigen::Vector2d> face_gradients(const SimplicialSurface& m, const Eigen::VectorXd& f);

/// Gradients of the three hat functions of face f, in the face frame.
std::array<Eigen::Vector2d, 3> hat_gradients(const SimplicialSurface& m, int f);

/// Area-weighted average of face gradients, expressed in vertex frames.
TangentField gradient(const TransportAtlas& atlas, const FunctionField& f);

/// Galerkin form of (1/Vol) int |grad alpha + f g|^2 + |df - alpha|^2 on
/// sections alpha + f e, piecewise linear in vertex frames.
OperatorPencil assemble_bundle_laplacian(const TransportAtlas& atlas);

/// Sparse form with f^T Q f = sum_F area(F) * Kbar(F) * |grad_F f|^2, Kbar the
/// face mean of vertex curvature.
SparseMatrix curvature_gradient_form(const SimplicialSurface& m, const Eigen::VectorXd& K);

/// Weak Laplacian M^{-1} K f.
FunctionField weak_laplacian(const OperatorPencil& laplacian, const FunctionField& f);

struct BochnerNorm {
  double value = 0.0;      // sqrt(max(raw, 0))
  double raw = 0.0;        // unclamped squared value
  double clamp = 0.0;      // max(-raw, 0)
  bool clamp_warning = false;  // clamp > 1e-6 ||f||^2
};

/// ||Hess f + f g||_2 via the integrated Bochner identity
/// ||Lf||^2 - (1/Vol) int K |grad f|^2 - 2 (1/Vol) int f Lf + n ||f||^2.
BochnerNorm pinching_norm_bochner(const OperatorPencil& laplacian, const Eigen::VectorXd& K,
                                  const FunctionField& f, int n = 2);
/// Same, with the curvature form precomputed.
BochnerNorm pinching_norm_bochner(const OperatorPencil& laplacian, const SparseMatrix& curvature_form,
                                  const FunctionField& f, int n = 2);

/// sqrt of the bundle quadratic form at S.
double pinching_norm_bundle(const OperatorPencil& bundle, const ESection& S);

/// Writes <stem>.stiffness.mtx and <stem>.mass.mtx (symmetric coordinate format).
void export_matrix_market(const OperatorPencil& pencil, const std::string& stem);

} // namespace pinchlab
