#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

namespace pinchlab {

using Vec3 = Eigen::Vector3d;
using Face = std::array<int, 3>;

/// Undirected edge, always stored with a < b.
struct EdgeKey {
  int a = 0;
  int b = 0;

  static EdgeKey of(int i, int j) { return i < j ? EdgeKey{i, j} : EdgeKey{j, i}; }
  friend auto operator<=>(const EdgeKey&, const EdgeKey&) = default;
};

/// The slot-th vertex of a face. The corner "owns" the outgoing edge
/// face[slot] -> face[slot + 1].
struct Corner {
  int face = 0;
  int slot = 0;
};

/// Closed, consistently oriented triangulated surface.
///
/// Either embedded (vertex positions in R^3, lengths derived) or intrinsic
/// (edge lengths only). Immutable after construction; every constructor
/// validates the manifold, orientation and triangle-inequality invariants.
class SimplicialSurface {
public:
  static SimplicialSurface embedded(std::vector<Vec3> positions, std::vector<Face> faces);
  static SimplicialSurface intrinsic(int num_vertices, std::vector<Face> faces,
                                     const std::map<EdgeKey, double>& lengths);

  int num_vertices() const { return num_vertices_; }
  int num_faces() const { return static_cast<int>(faces_.size()); }
  int num_edges() const { return static_cast<int>(edges_.size()); }
  int euler_characteristic() const { return num_vertices() - num_edges() + num_faces(); }

  bool is_embedded() const { return positions_.has_value(); }
  /// Throws InvalidArgument on intrinsic meshes.
  const std::vector<Vec3>& positions() const;

  const std::vector<Face>& faces() const { return faces_; }
  const std::vector<EdgeKey>& edges() const { return edges_; }
  const std::vector<double>& edge_lengths() const { return edge_lengths_; }
  int edge_index(int i, int j) const;
  double edge_length(int i, int j) const { return edge_lengths_[edge_index(i, j)]; }

  /// Length of edge face[q] -> face[q+1].
  double face_edge_length(int f, int q) const { return face_lengths_[f][q]; }
  /// Interior angle at face[q].
  double corner_angle(int f, int q) const { return corner_angles_[f][q]; }
  double face_area(int f) const { return face_areas_[f]; }
  double vertex_area(int v) const { return vertex_areas_[v]; }
  const Eigen::VectorXd& vertex_areas() const { return vertex_areas_; }
  double total_volume() const { return total_volume_; }
  double mean_edge_length() const;

  /// Corners incident to v in counter-clockwise order.
  const std::vector<Corner>& vertex_star(int v) const { return stars_[v]; }
  /// Sum of interior angles at v.
  double angle_sum(int v) const;

  /// Face containing the directed edge i -> j, with the slot of i in it.
  Corner directed_edge_corner(int i, int j) const;

  /// 64-bit FNV-1a digest of connectivity, lengths and (if any) positions.
  std::uint64_t content_hash() const;

  SimplicialSurface scaled(double factor) const;
  /// Applies x -> R x + t to an embedded mesh.
  SimplicialSurface rigidly_moved(const Eigen::Matrix3d& rotation, const Vec3& translation) const;
  /// New vertex v' = perm[v].
  SimplicialSurface relabeled(const std::vector<int>& perm) const;

private:
  SimplicialSurface() = default;
  void build(const std::map<EdgeKey, double>* lengths);

  int num_vertices_ = 0;
  std::optional<std::vector<Vec3>> positions_;
  std::vector<Face> faces_;
  std::vector<EdgeKey> edges_;
  std::vector<double> edge_lengths_;
  std::vector<std::array<int, 2>> edge_corners_;  // encoded face*3+slot, for a->b then b->a
  std::vector<std::array<double, 3>> face_lengths_;
  std::vector<std::array<double, 3>> corner_angles_;
  std::vector<double> face_areas_;
  Eigen::VectorXd vertex_areas_;
  double total_volume_ = 0.0;
  std::vector<std::vector<Corner>> stars_;
};

/// Per-vertex Gaussian curvature from angle defects.
struct CurvatureField {
  Eigen::VectorXd angle_defect;  // 2*pi - angle sum
  Eigen::VectorXd K;             // angle_defect / vertex_area

  /// sum_v K(v) area(v); equals 2*pi*chi up to rounding.
  double gauss_bonnet_sum(const SimplicialSurface& m) const;
};

CurvatureField gaussian_curvature(const SimplicialSurface& m);

// Generators. All are deterministic functions of their arguments.

inline constexpr int kMaxSubdivisions = 8;

SimplicialSurface generate_icosphere(double radius, int subdivisions);
SimplicialSurface generate_ellipsoid(double a, double b, double c, int subdivisions);
SimplicialSurface generate_flat_torus(double length1, double length2, int n1, int n2);
/// Unit icosphere with radius 1 + amplitude * g(u), g a seeded band-limited
/// function with |g| <= 1 (see README for the generator).
SimplicialSurface generate_perturbed_sphere(double amplitude, int frequency, std::uint64_t seed,
                                            int subdivisions);

/// Band-limited radial profile used by generate_perturbed_sphere.
double perturbation_profile(const Vec3& unit_direction, int frequency, std::uint64_t seed);

/// Torus vertex index for grid coordinate (i, j).
inline int torus_vertex(int i, int j, int n1, int n2) {
  return ((i % n1 + n1) % n1) * n2 + ((j % n2 + n2) % n2);
}

// IO

void save_off(const SimplicialSurface& m, const std::string& path);
SimplicialSurface load_off(const std::string& path);
std::string to_off_string(const SimplicialSurface& m);
SimplicialSurface parse_off(const std::string& text);

/// {"faces": [[i,j,k],...], "edge_lengths": [[i,j,l],...]} with sorted edge keys.
std::string to_intrinsic_json(const SimplicialSurface& m);
SimplicialSurface parse_intrinsic_json(const std::string& text);

/// Dispatches on extension: .off or .json.
SimplicialSurface load_mesh(const std::string& path);
void save_mesh(const SimplicialSurface& m, const std::string& path);

} // namespace pinchlab
