#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "pinchlab/fields.hpp"
#include "pinchlab/mesh.hpp"

namespace pinchlab {

/// Geodesic distances from one source vertex.
struct DistanceField {
  int source = -1;
  Eigen::VectorXd distance;  // per mesh vertex
  std::string method;
  /// Calibrated relative error of the method at this mesh resolution.
  double certified_error = 0.0;

  // Full graph state, kept for path tracing.
  std::vector<double> node_distance;
  std::vector<int> predecessor;

  double operator[](int v) const { return distance[v]; }
};

/// A point on a traced path: arclength from the source and the interpolated
/// field value there.
struct PathSample {
  double arclength = 0.0;
  double value = 0.0;
};

/// Straight segment of a geodesic inside one face, in an unfolded layout of
/// that face (layout[q] is the position of face vertex q).
struct GeodesicPiece {
  int face = -1;
  std::array<Eigen::Vector2d, 3> layout;
  Eigen::Vector2d start, end;
  double length = 0.0;
};

/// Polyhedral geodesic: the shortest graph path pulled taut inside the strip
/// of faces it crosses.
struct GeodesicPath {
  int source = -1;
  int target = -1;
  std::vector<GeodesicPiece> pieces;
  double length = 0.0;
};

/// Shortest paths on a refined graph: every edge carries `steiner` interior
/// points, and all point pairs of a face are joined by straight segments in
/// the face's intrinsic layout.
class DistanceEngine {
public:
  explicit DistanceEngine(const SimplicialSurface& m, int steiner = 3);

  const SimplicialSurface& surface() const { return *surface_; }
  int num_nodes() const { return static_cast<int>(offsets_.size()) - 1; }
  /// Relative error bound calibrated on the icosphere at matching resolution.
  double certified_error() const { return certified_error_; }

  DistanceField from(int source) const;
  /// Mesh vertices a graph node sits on: the vertex itself, or the endpoints
  /// of the edge carrying a Steiner point.
  std::vector<int> node_vertices(int node) const;
  /// Taut geodesic from field.source to target.
  GeodesicPath geodesic(const DistanceField& field, int target) const;
  /// Linear interpolant of `values` at the corners and edge crossings of geodesic().
  std::vector<PathSample> trace(const DistanceField& field, int target, const Eigen::VectorXd& values) const;

private:
  const SimplicialSurface* surface_;
  int steiner_;
  std::vector<int> offsets_;
  std::vector<int> targets_;
  std::vector<double> weights_;
  double certified_error_ = 0.0;
};

double interpolate_linear(const SimplicialSurface& m, const GeodesicPiece& piece, const Eigen::Vector2d& X,
                          const Eigen::VectorXd& values);

/// f at arclength steps 0, h, 2h, ... along the path, reconstructed from
/// vertex values and gradients so that quadratic functions are reproduced exactly.
std::vector<double> sample_uniform(const TransportAtlas& atlas, const GeodesicPath& path, const FunctionField& f,
                                   const TangentField& grad, double h);

/// Calibrated relative error of a `steiner` refined graph on the unit
/// icosphere with the given subdivision level (cached per process).
double calibrate_icosphere_error(int subdivisions, int steiner = 3);

DistanceField geodesic_distances(const SimplicialSurface& m, int source);

/// d_p(x) + d_q(x) - d_p(q).
double excess(const DistanceField& dp, const DistanceField& dq, int x);

/// Argmax vertex (lowest index on ties).
int argmax_vertex(const FunctionField& f);
/// f scaled to ||f||_2^2 = 1/(n+1).
FunctionField normalize_band_function(const FunctionField& f, int n = 2);

struct CosineProfile {
  double sup_dev = 0.0;
  double l2_grad_dev = 0.0;
};

CosineProfile almost_cosine_profile(const TransportAtlas& atlas, const FunctionField& f1, const DistanceField& dp);

struct PoleTolerances {
  double shell = 0.15;
  double cluster = 0.3;
  double excess = 0.1;
  /// Largest cosine-profile deviation at which poles are located at all.
  double profile = 0.3;
};

struct PolePair {
  int i = 0;
  int j = 0;
  double distance = 0.0;
  int k = 0;  // round(distance / pi)
  double deviation = 0.0;
  bool parity_consistent = true;
  /// Only pairs at distance about pi carry a B_ij set.
  std::vector<bool> membership;
};

struct PoleDecomposition {
  bool success = false;
  std::string diagnostic;
  double profile_deviation = 0.0;
  std::vector<int> poles;     // vertex ids, poles[0] = p
  std::vector<int> parities;  // shell index m_i
  std::vector<PolePair> pairs;
  std::vector<int> shell_sizes;  // |A_m| for m = 1, 2, ...
  double coverage = 0.0;         // fraction of vertices in some B_ij
  bool covers = false;
  bool parity_ok = true;
  PoleTolerances tolerances;
  std::vector<DistanceField> pole_fields;
};

PoleDecomposition locate_poles(const DistanceEngine& engine, const TransportAtlas& atlas, const FunctionField& f1,
                               const PoleTolerances& tol = {});

struct DiameterCheck {
  double diameter = 0.0;
  double max_excess = 0.0;
  bool pass = false;
};

/// Diameter over a 64-point farthest-point sample and maximal excess w.r.t.
/// the pole pair. Requires a two-pole decomposition.
DiameterCheck diameter_and_excess_check(const DistanceEngine& engine, const PoleDecomposition& dec,
                                        double tolerance = 0.05, int samples = 64);

/// Farthest-point sample of `count` vertices starting at `start`.
std::vector<int> farthest_point_sample(const DistanceEngine& engine, int count, int start = 0,
                                       std::vector<DistanceField>* fields = nullptr);

struct SegmentDiagnostics {
  double fraction_good_pairs = 0.0;
  double q_fraction = 0.0;
  int pairs = 0;
  int sources = 0;
  double max_integral = 0.0;
};

/// Integrates |(f o gamma)'' + f o gamma| along traced shortest paths for
/// n_pairs random vertex pairs (about 20 targets per source).
SegmentDiagnostics segment_diagnostics(const DistanceEngine& engine, const FunctionField& f1, int n_pairs,
                                       double threshold, std::uint64_t seed = 1);

} // namespace pinchlab
