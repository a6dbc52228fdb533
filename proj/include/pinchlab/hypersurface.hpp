#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>

#include "pinchlab/fields.hpp"
#include "pinchlab/mesh.hpp"
#include "pinchlab/operators.hpp"
#include "pinchlab/spectra.hpp"

namespace pinchlab {

/// Extrinsic curvature of an embedded surface, per vertex.
///
/// A is expressed in the orthonormal tangent basis (tangent[v].col(0),
/// tangent[v].col(1)); the first basis vector is the projection of the first
/// outgoing star edge, matching the vertex frames of TransportAtlas up to the
/// angle rescaling. With outward normals the unit sphere has A = Id.
struct ShapeField {
  std::vector<Eigen::Matrix2d> A;
  Eigen::VectorXd h;  // (1/2) tr A
  std::vector<Vec3> normal;
  std::vector<Eigen::Matrix<double, 3, 2>> tangent;

  /// Principal curvatures at v, ascending.
  Eigen::Vector2d principal(int v) const;
};

/// Angle-weighted normals and a 1-ring least-squares fit of dnu = A on the
/// tangential parts of edge and normal differences. Throws on intrinsic
/// meshes and on meshes with negative enclosed volume.
ShapeField shape_operator(const SimplicialSurface& m);

/// Signed volume enclosed by an embedded closed surface.
double enclosed_volume(const SimplicialSurface& m);

struct UmbilicityReport {
  double defect_h = 0.0;     // ||A - h Id||_2
  double defect_hbar = 0.0;  // ||A - hbar Id||_2
  double defect_id = 0.0;    // ||A - Id||_2
  double hbar = 0.0;
  double h_l2 = 0.0;
  double h_spread = 0.0;  // ||h - hbar||_2
  /// |defect_hbar^2 - defect_h^2 - n ||h - hbar||^2|, largest pointwise value.
  double pythagoras_residual = 0.0;
};

UmbilicityReport umbilicity_report(const SimplicialSurface& m, const ShapeField& shape);

/// S_v = grad f_v + <nu, v> e for v = e_1, e_2, e_3, with f_v = <x, v>.
std::vector<ESection> coordinate_sections(const SimplicialSurface& m, const ShapeField& shape);

struct UmbilicEigenBound {
  double lhs = 0.0;    // lambda_3 of the bundle pencil
  double rhs = 0.0;    // 2 ||A - Id||_2^2
  double slack = 0.0;  // rhs - lhs
  /// Largest bundle Rayleigh quotient over span{S_e1, S_e2, S_e3}.
  double rayleigh_max = 0.0;
  /// sum_v of the bundle energies of S_v; equals rhs in the smooth setting.
  double energy_sum = 0.0;
  double relative_budget = 0.05;
  double absolute_budget = 0.1;
  bool pass = false;  // lhs and rayleigh_max both <= rhs (1 + rel) + abs
};

UmbilicEigenBound umbilic_eigen_bound_check(const SimplicialSurface& m, const ShapeField& shape,
                                            const OperatorPencil& bundle, const Spectrum& bundle_spectrum,
                                            double relative_budget = 0.05, double absolute_budget = 0.1);

struct ChengZhouReilly {
  double cz_lhs = 0.0;  // ||h - hbar||_2
  double cz_rhs = 0.0;  // (1/(n-1)) sqrt(K + (n-1)/n) ||A - h Id||_2
  double reilly_lhs = 0.0;  // lambda_1
  double reilly_rhs = 0.0;  // n ||h||_2
  double budget = 0.05;
  bool cz_pass = false;
  bool reilly_pass = false;
  /// |lambda_1 - n ||h||_2| / (n ||h||_2).
  double reilly_gap = 0.0;
};

/// `K` bounds the Ricci curvature from below by -K lambda_1; pass 0 for convex surfaces.
ChengZhouReilly cheng_zhou_and_reilly_check(const SimplicialSurface& m, const ShapeField& shape,
                                            const Spectrum& function_spectrum, double K, double budget = 0.05);

/// Principal curvatures (meridian, parallel) of the spheroid with semi-axes
/// (a, a, c) at the point with polar angle theta of the parametrization
/// (a sin theta cos phi, a sin theta sin phi, c cos theta).
Eigen::Vector2d spheroid_principal_curvatures(double a, double c, double theta);

std::string to_json(const UmbilicityReport& r);
std::string to_json(const UmbilicEigenBound& r);
std::string to_json(const ChengZhouReilly& r);
/// vertex,a11,a12,a22,h rows.
std::string shape_csv(const ShapeField& shape);

} // namespace pinchlab
