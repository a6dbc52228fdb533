#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Geometry>

#include "pinchlab/error.hpp"
#include "pinchlab/mesh.hpp"

using namespace pinchlab;

namespace {

// Surface area of the prolate spheroid with semi-axes (a, a, c), c > a.
double prolate_area(double a, double c) {
  const double e = std::sqrt(1.0 - a * a / (c * c));
  return 2.0 * M_PI * a * a * (1.0 + c / (a * e) * std::asin(e));
}

double total_area(const SimplicialSurface& m) {
  double s = 0.0;
  for (int f = 0; f < m.num_faces(); ++f) s += m.face_area(f);
  return s;
}

Eigen::Matrix3d some_rotation() {
  return (Eigen::AngleAxisd(0.7, Eigen::Vector3d(1, 2, 3).normalized()) *
          Eigen::AngleAxisd(-1.1, Eigen::Vector3d::UnitZ()))
      .toRotationMatrix();
}

} // namespace

TEST_CASE("icosphere counts follow the subdivision recursion") {
  for (int s = 0; s <= 3; ++s) {
    const auto m = generate_icosphere(1.0, s);
    const int p = 1 << (2 * s);
    CHECK(m.num_vertices() == 10 * p + 2);
    CHECK(m.num_faces() == 20 * p);
    CHECK(m.euler_characteristic() == 2);
    for (const Vec3& x : m.positions()) CHECK(x.norm() == doctest::Approx(1.0).epsilon(1e-14));
  }
}

TEST_CASE("Gauss-Bonnet holds exactly for angle defects") {
  const std::vector<SimplicialSurface> meshes{generate_icosphere(1.0, 3), generate_ellipsoid(1.0, 1.3, 0.8, 3),
                                              generate_perturbed_sphere(0.2, 4, 9, 3),
                                              generate_flat_torus(3.0, 5.0, 9, 14)};
  for (const auto& m : meshes) {
    const CurvatureField K = gaussian_curvature(m);
    CHECK(K.gauss_bonnet_sum(m) == doctest::Approx(2.0 * M_PI * m.euler_characteristic()).epsilon(1e-10));
  }
}

TEST_CASE("flat torus is flat with the exact area") {
  const auto m = generate_flat_torus(2.0 * M_PI, 3.0, 12, 7);
  CHECK(m.euler_characteristic() == 0);
  CHECK(m.total_volume() == doctest::Approx(6.0 * M_PI).epsilon(1e-13));
  const CurvatureField K = gaussian_curvature(m);
  CHECK(K.angle_defect.cwiseAbs().maxCoeff() < 1e-12);
  CHECK_FALSE(m.is_embedded());
  CHECK_THROWS_AS(m.positions(), InvalidArgument);
}

TEST_CASE("areas converge to the analytic values") {
  CHECK(total_area(generate_icosphere(1.0, 4)) == doctest::Approx(4.0 * M_PI).epsilon(0.01));
  CHECK(total_area(generate_icosphere(2.0, 4)) == doctest::Approx(16.0 * M_PI).epsilon(0.01));
  CHECK(total_area(generate_ellipsoid(1.0, 1.0, 1.5, 4)) == doctest::Approx(prolate_area(1.0, 1.5)).epsilon(0.01));
  const auto m = generate_icosphere(1.0, 3);
  CHECK(m.vertex_areas().sum() == doctest::Approx(total_area(m)).epsilon(1e-12));
  CHECK(m.total_volume() == doctest::Approx(total_area(m)).epsilon(1e-12));
}

TEST_CASE("rigid motions preserve the intrinsic data") {
  const auto m = generate_perturbed_sphere(0.1, 3, 5, 2);
  const auto moved = m.rigidly_moved(some_rotation(), Vec3(0.3, -2.0, 7.0));
  REQUIRE(moved.num_edges() == m.num_edges());
  for (int e = 0; e < m.num_edges(); ++e)
    CHECK(moved.edge_lengths()[e] == doctest::Approx(m.edge_lengths()[e]).epsilon(1e-12));
  for (int v = 0; v < m.num_vertices(); ++v) {
    CHECK(moved.vertex_area(v) == doctest::Approx(m.vertex_area(v)).epsilon(1e-11));
    CHECK(moved.angle_sum(v) == doctest::Approx(m.angle_sum(v)).epsilon(1e-12));
  }
}

TEST_CASE("scaling multiplies lengths and areas") {
  const auto m = generate_ellipsoid(1.0, 1.2, 0.7, 2);
  const double s = 2.5;
  const auto big = m.scaled(s);
  for (int e = 0; e < m.num_edges(); ++e)
    CHECK(big.edge_lengths()[e] == doctest::Approx(s * m.edge_lengths()[e]).epsilon(1e-13));
  CHECK(big.total_volume() == doctest::Approx(s * s * m.total_volume()).epsilon(1e-12));
  CHECK_THROWS_AS(m.scaled(-1.0), InvalidArgument);
}

TEST_CASE("relabeling permutes vertex data") {
  const auto m = generate_icosphere(1.0, 2);
  std::vector<int> perm(m.num_vertices());
  std::iota(perm.begin(), perm.end(), 0);
  std::reverse(perm.begin(), perm.end());
  const auto r = m.relabeled(perm);
  for (int v = 0; v < m.num_vertices(); ++v) CHECK(r.vertex_area(perm[v]) == doctest::Approx(m.vertex_area(v)));
  CHECK(r.content_hash() != m.content_hash());
}

TEST_CASE("generators are deterministic") {
  CHECK(generate_perturbed_sphere(0.1, 3, 42, 2).content_hash() ==
        generate_perturbed_sphere(0.1, 3, 42, 2).content_hash());
  CHECK(generate_perturbed_sphere(0.1, 3, 42, 2).content_hash() !=
        generate_perturbed_sphere(0.1, 3, 43, 2).content_hash());
  for (int i = 0; i < 50; ++i) {
    const Vec3 u = Vec3(std::sin(i), std::cos(3.0 * i), std::sin(0.5 * i) + 0.1).normalized();
    CHECK(std::abs(perturbation_profile(u, 3, 7)) <= 1.0);
  }
}

TEST_CASE("OFF and intrinsic JSON round trips") {
  const auto m = generate_ellipsoid(1.0, 1.1, 1.3, 1);
  const auto back = parse_off(to_off_string(m));
  CHECK(back.content_hash() == m.content_hash());

  const auto t = generate_flat_torus(4.0, 5.0, 5, 6);
  const auto tb = parse_intrinsic_json(to_intrinsic_json(t));
  CHECK(tb.num_faces() == t.num_faces());
  for (int e = 0; e < t.num_edges(); ++e) CHECK(tb.edge_lengths()[e] == t.edge_lengths()[e]);
}

TEST_CASE("invalid input is rejected") {
  CHECK_THROWS_AS(parse_off("OFF\n3 1 0\n0 0 0\n1 0 0\n"), FormatError);
  CHECK_THROWS_AS(parse_off("not a mesh"), FormatError);
  CHECK_THROWS_AS(parse_intrinsic_json("{\"faces\": 3}"), FormatError);
  // An open triangle is not a closed surface.
  CHECK_THROWS_AS(SimplicialSurface::embedded({Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0)}, {{0, 1, 2}}),
                  InvalidArgument);
  CHECK_THROWS_AS(generate_icosphere(-1.0, 2), InvalidArgument);
  CHECK_THROWS_AS(generate_icosphere(1.0, kMaxSubdivisions + 1), InvalidArgument);
  CHECK_THROWS_AS(generate_flat_torus(1.0, 1.0, 2, 5), InvalidArgument);
  CHECK_THROWS_AS(generate_perturbed_sphere(0.9, 3, 1, 2), InvalidArgument);
}

TEST_CASE("stars are complete and counter-clockwise") {
  const auto m = generate_icosphere(1.0, 2);
  const auto& p = m.positions();
  for (int v = 0; v < m.num_vertices(); ++v) {
    const auto& star = m.vertex_star(v);
    CHECK((star.size() == 5 || star.size() == 6));
    for (const Corner& c : star) {
      const Face& f = m.faces()[c.face];
      CHECK(f[c.slot] == v);
      const Vec3 n = (p[f[1]] - p[f[0]]).cross(p[f[2]] - p[f[0]]);
      CHECK(n.dot(p[v]) > 0.0);
    }
  }
}
