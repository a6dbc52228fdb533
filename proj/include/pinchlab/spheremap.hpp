#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>

#include "pinchlab/fields.hpp"
#include "pinchlab/geodesy.hpp"
#include "pinchlab/mesh.hpp"
#include "pinchlab/spectra.hpp"

namespace pinchlab {

struct SphereNetPoint {
  double theta = 0.0;  // polar angle in the net frame
  double phi = 0.0;
  double distance = 0.0;  // spherical distance to the nearest image vertex
};

/// Eigenfunction map Psi = Psi~/|Psi~| into S^n and its quality measures.
struct SphereMapReport {
  int n = 2;
  int band_multiplicity = 0;
  std::vector<double> band_eigenvalues;
  /// f_1..f_{n+1}: L2-orthogonal, each with ||f_s||_2^2 = 1/(n+1).
  std::vector<FunctionField> band;
  Eigen::MatrixXd raw;  // row v = Psi~(v)
  Eigen::MatrixXd psi;  // row v = Psi(v), unit length
  double max_raw_deviation = 0.0;  // max_v | |Psi~(v)| - 1 |

  bool quality_computed = false;
  int sample_points = 0;
  int sample_pairs = 0;
  double eps_dist = 0.0;
  double eps_dens = 0.0;
  double gh_upper = 0.0;  // 1.5 max(eps_dist, eps_dens)
  double degree = 0.0;
  double degree_defect = 0.0;  // distance of degree to the nearest integer
  std::vector<SphereNetPoint> net;
};

/// Psi from the first n+1 eigenfunctions inside the band. Throws Rejected if
/// the band holds fewer than n+1 eigenpairs or Psi~ vanishes at a vertex.
SphereMapReport build_sphere_map(const SimplicialSurface& m, const Spectrum& spectrum, const ProjectionSpec& band);

/// Same map from explicitly given band functions (rows of the basis are mixed
/// by nothing; the functions are used as they are).
SphereMapReport sphere_map_from_functions(const std::vector<FunctionField>& band);

/// Fills eps_dist over the pairs of a farthest-point sample, eps_dens on a
/// geodesic net of the given spacing and the degree. Requires n = 2 and
/// sample_points*(sample_points-1)/2 >= 500.
///
/// The net is laid out in a frame attached to the image (the images of two
/// fixed vertices), so rotating the band basis rotates the net with it.
void map_quality(const DistanceEngine& engine, SphereMapReport& report, int sample_points = 40,
                 double net_spacing_degrees = 2.0);

/// Sum of signed spherical areas of the image triangles over 4 pi.
double mapping_degree(const SimplicialSurface& m, const Eigen::MatrixXd& psi);

/// Signed area of the spherical triangle (a, b, c); subdivided along great
/// circles while any side exceeds pi/2.
double signed_spherical_area(const Eigen::Vector3d& a, const Eigen::Vector3d& b, const Eigen::Vector3d& c);

/// Finite metric space, validated on construction.
class FiniteMetricSpace {
public:
  explicit FiniteMetricSpace(Eigen::MatrixXd distances, std::vector<std::string> labels = {});

  int size() const { return static_cast<int>(d_.rows()); }
  double operator()(int i, int j) const { return d_(i, j); }
  const Eigen::MatrixXd& matrix() const { return d_; }
  const std::vector<std::string>& labels() const { return labels_; }
  double diameter() const { return d_.maxCoeff(); }

  /// {"name": ..., "labels": [...], "distances": [[...], ...]}; name and labels optional.
  static FiniteMetricSpace from_json(const std::string& text);
  static FiniteMetricSpace load(const std::string& path);
  std::string to_json() const;

private:
  Eigen::MatrixXd d_;
  std::vector<std::string> labels_;
};

inline constexpr int kMaxBruteForcePoints = 7;

/// Exact Gromov-Hausdorff distance: half the least distortion over all
/// correspondences, by threshold search over candidate distortions.
double gh_bruteforce(const FiniteMetricSpace& A, const FiniteMetricSpace& B);

/// Distance in the spherical suspension between [t1, z1] and [t2, z2] with d(z1, z2) = dz.
double suspension_distance(double t1, double t2, double dz);

/// Points 0*, (t, z) for interior levels t and z in Z (level-major), pi*.
FiniteMetricSpace spherical_suspension(const FiniteMetricSpace& Z, const std::vector<double>& levels);

struct SuspensionOptions {
  /// Equator band |d(x, x_i) - d(x, x_j)| <= tolerance; 0 selects 2 x mean edge length.
  double equator_tolerance = 0.0;
  int samples = 48;
};

struct SuspensionFit {
  double distortion = 0.0;
  double equator_tolerance = 0.0;
  int equator_size = 0;
  int sample_points = 0;
  int sample_pairs = 0;
  /// Samples whose path to the farther pole met no equator vertex and were
  /// snapped to the path vertex closest to the equator instead.
  int snapped = 0;
};

/// Distortion of x -> [d(x, x_i), phi(x)] from B_ij into the suspension over
/// the equator set Z_ij, with Z distances measured in the surface.
SuspensionFit suspension_fit(const DistanceEngine& engine, const PoleDecomposition& decomposition, int pair_index,
                             const SuspensionOptions& options = {});

std::string to_json(const SphereMapReport& report);
std::string to_json(const SuspensionFit& fit);
/// theta,phi,distance rows.
std::string net_csv(const SphereMapReport& report);

} // namespace pinchlab
