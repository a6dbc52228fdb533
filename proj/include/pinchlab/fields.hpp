#pragma once

#include <array>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "pinchlab/mesh.hpp"

namespace pinchlab {

/// Per-vertex scalar field. Holds a non-owning reference to its surface,
/// which must outlive the field.
class FunctionField {
public:
  FunctionField(const SimplicialSurface& m, Eigen::VectorXd values);
  static FunctionField constant(const SimplicialSurface& m, double value);
  /// Samples fn at embedded vertex positions.
  static FunctionField from_positions(const SimplicialSurface& m, const std::function<double(const Vec3&)>& fn);

  const SimplicialSurface& surface() const { return *surface_; }
  const Eigen::VectorXd& values() const { return values_; }
  double operator[](int v) const { return values_[v]; }
  int size() const { return static_cast<int>(values_.size()); }

  FunctionField operator+(const FunctionField& o) const;
  FunctionField operator-(const FunctionField& o) const;
  FunctionField operator*(double s) const;

private:
  const SimplicialSurface* surface_;
  Eigen::VectorXd values_;
};

/// Per-vertex tangent vectors, row v expressed in vertex v's frame.
class TangentField {
public:
  TangentField(const SimplicialSurface& m, Eigen::MatrixX2d values);
  static TangentField zero(const SimplicialSurface& m);

  const SimplicialSurface& surface() const { return *surface_; }
  const Eigen::MatrixX2d& values() const { return values_; }
  Eigen::Vector2d operator[](int v) const { return values_.row(v).transpose(); }

  TangentField operator+(const TangentField& o) const;
  TangentField operator*(double s) const;

private:
  const SimplicialSurface* surface_;
  Eigen::MatrixX2d values_;
};

/// Section alpha + f e of E = TM (+) R e.
struct ESection {
  TangentField tangent;
  FunctionField scalar;

  ESection(TangentField t, FunctionField f);
  const SimplicialSurface& surface() const { return scalar.surface(); }

  /// Interleaved per-vertex layout [alpha_x, alpha_y, f] used by the bundle pencil.
  Eigen::VectorXd to_vector() const;
  static ESection from_vector(const SimplicialSurface& m, const Eigen::VectorXd& x);
  /// The unit section e = (0, 1).
  static ESection unit(const SimplicialSurface& m);

  ESection operator+(const ESection& o) const;
  ESection operator*(double s) const;
};

inline constexpr int kSectionDofs = 3;

/// Discrete Levi-Civita connection.
///
/// Each vertex carries a tangent frame obtained by flattening its star with
/// angles rescaled to total 2*pi; the frame's x-axis is the first outgoing
/// edge of the star. Each face carries a frame whose x-axis is the edge
/// face[0] -> face[1]. All transports are rotations, stored as angles.
class TransportAtlas {
public:
  explicit TransportAtlas(const SimplicialSurface& m);

  const SimplicialSurface& surface() const { return *surface_; }

  /// 2*pi / (angle sum at v).
  double angle_scale(int v) const { return scale_[v]; }
  /// Direction of edge face[q] -> face[q+1] in the frame of vertex face[q].
  double corner_edge_angle(int f, int q) const { return edge_angle_[f][q]; }
  /// Direction of the directed edge i -> j in i's frame.
  double edge_angle(int i, int j) const;
  /// Direction of edge face[q] -> face[q+1] in the frame of face f.
  double face_edge_angle(int f, int q) const { return face_edge_angle_[f][q]; }
  /// Rotation taking vectors at vertex face[q] into the frame of face f.
  double vertex_to_face(int f, int q) const { return vertex_to_face_[f][q]; }
  /// Rotation carrying a vector at j into i's frame across edge ij.
  double vertex_transport(int i, int j) const;
  /// Rotation carrying a vector in the frame of the face containing j -> i
  /// into the frame of the face containing i -> j (unfolding across the edge).
  double face_transport(int i, int j) const;

  Eigen::Vector2d transport(int i, int j, const Eigen::Vector2d& at_j) const;

  /// Rotation accumulated by vertex transports around the boundary of face f.
  double face_loop_holonomy(int f) const;
  /// Rotation accumulated by face transports around the star of v.
  double vertex_loop_holonomy(int v) const;

  /// Same connection expressed in vertex frames rotated by offsets[v].
  TransportAtlas regauged(const Eigen::VectorXd& offsets) const;

private:
  const SimplicialSurface* surface_;
  std::vector<double> scale_;
  std::vector<std::array<double, 3>> edge_angle_;
  std::vector<std::array<double, 3>> face_edge_angle_;
  std::vector<std::array<double, 3>> vertex_to_face_;
};

Eigen::Matrix2d rotation2(double angle);
/// Wraps an angle to (-pi, pi].
double wrap_angle(double angle);

/// Sum with a fixed pairwise tree, independent of thread count.
double pairwise_sum(const double* x, std::size_t n);

/// Volume-normalized L^p norm, p in {1, 2, infinity}.
double lp_norm(const FunctionField& f, double p);
double l2_norm(const TangentField& X);
/// (1/Vol) sum_v (<X_v, Y_v> + f_v h_v) area(v).
double e_inner(const ESection& S, const ESection& T);
double e_norm(const ESection& S);
/// Volume-normalized L2 inner product of functions.
double l2_inner(const FunctionField& f, const FunctionField& g);
/// Volume-normalized mean (1/Vol) sum f area.
double mean_value(const FunctionField& f);

/// S_f = grad f + f e. `gradient` must be the discrete gradient of f.
ESection s_of_f(const FunctionField& f, const TangentField& gradient);

std::string to_json(const FunctionField& f);
std::string to_json(const ESection& S);
FunctionField function_from_json(const SimplicialSurface& m, const std::string& text);
ESection section_from_json(const SimplicialSurface& m, const std::string& text);

} // namespace pinchlab
