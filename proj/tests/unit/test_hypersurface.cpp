#include <doctest.h>

#include <algorithm>
#include <cmath>

#include <Eigen/Geometry>

#include "pinchlab/error.hpp"
#include "pinchlab/hypersurface.hpp"
#include "pinchlab/pinching.hpp"

using namespace pinchlab;

namespace {

// Surface of revolution (a sin t, c cos t): meridian and parallel curvatures.
Eigen::Vector2d spheroid_oracle(double a, double c, double t) {
  const double q = a * a * std::cos(t) * std::cos(t) + c * c * std::sin(t) * std::sin(t);
  return {a * c / std::pow(q, 1.5), c / (a * std::sqrt(q))};
}

} // namespace

TEST_CASE("shape operator of a round sphere") {
  for (double R : {1.0, 2.5}) {
    // Pointwise errors stall along the seams of the base icosahedron; the L2 defect converges.
    double previous = 1.0;
    for (int level = 3; level <= 5; ++level) {
      const auto m = generate_icosphere(R, level);
      const ShapeField s = shape_operator(m);
      double worst = 0.0;
      for (int v = 0; v < m.num_vertices(); ++v) {
        worst = std::max(worst, (s.A[v] - Eigen::Matrix2d::Identity() / R).norm() * R);
        CHECK(s.normal[v].dot(m.positions()[v].normalized()) == doctest::Approx(1.0).epsilon(1e-3));
        CHECK((s.tangent[v].transpose() * s.tangent[v] - Eigen::Matrix2d::Identity()).norm() < 1e-12);
        CHECK(std::abs(s.tangent[v].col(0).dot(s.normal[v])) < 1e-12);
      }
      CHECK(worst < 0.05);
      const double defect = umbilicity_report(m, s).defect_h * R;
      CHECK(defect < 0.8 * previous);
      previous = defect;
    }
  }
}

TEST_CASE("spheroid curvature formula") {
  for (double t : {0.1, 0.7, 1.3, 2.0, 3.0}) {
    const Eigen::Vector2d k = spheroid_principal_curvatures(1.0, 1.5, t);
    CHECK((k - spheroid_oracle(1.0, 1.5, t)).norm() < 1e-12);
  }
  // Sphere: both equal to 1 / radius.
  CHECK((spheroid_principal_curvatures(2.0, 2.0, 0.4) - Eigen::Vector2d(0.5, 0.5)).norm() < 1e-12);
}

TEST_CASE("mesh curvatures of a spheroid follow the formula") {
  const double a = 1.0, c = 1.5;
  const auto m = generate_ellipsoid(a, a, c, 4);
  const ShapeField s = shape_operator(m);
  double worst = 0.0, total = 0.0;
  for (int v = 0; v < m.num_vertices(); ++v) {
    const double t = std::acos(std::clamp(m.positions()[v].z() / c, -1.0, 1.0));
    Eigen::Vector2d exact = spheroid_oracle(a, c, t);
    if (exact[0] > exact[1]) std::swap(exact[0], exact[1]);
    const double err = (s.principal(v) - exact).cwiseAbs().maxCoeff() / exact.maxCoeff();
    worst = std::max(worst, err);
    total += err;
  }
  CHECK(total / m.num_vertices() < 0.02);
  CHECK(worst < 0.1);
}

TEST_CASE("umbilicity report on the sphere and the ellipsoid") {
  const auto sphere = generate_icosphere(1.0, 3);
  const UmbilicityReport r = umbilicity_report(sphere, shape_operator(sphere));
  CHECK(r.defect_h < 0.02);
  CHECK(r.defect_id < 0.02);
  CHECK(r.hbar == doctest::Approx(1.0).epsilon(0.01));
  CHECK(r.pythagoras_residual < 1e-10);

  const auto e = generate_ellipsoid(1.0, 1.0, 1.5, 3);
  const UmbilicityReport re = umbilicity_report(e, shape_operator(e));
  CHECK(re.defect_h > 5.0 * r.defect_h);
  CHECK(re.pythagoras_residual < 1e-10);
  // Umbilicity defects are ordered: hbar is the best constant in L2.
  CHECK(re.defect_hbar >= re.defect_h - 1e-12);
  CHECK(to_json(re).find("\"defect_h\"") != std::string::npos);
}

TEST_CASE("curvature is invariant under rigid motions") {
  const auto m = generate_ellipsoid(1.0, 1.2, 0.9, 3);
  const Eigen::Matrix3d R = Eigen::AngleAxisd(0.9, Vec3(1, 1, 0).normalized()).toRotationMatrix();
  const ShapeField a = shape_operator(m), b = shape_operator(m.rigidly_moved(R, Vec3(-2, 1, 4)));
  for (int v = 0; v < m.num_vertices(); ++v) {
    CHECK((a.principal(v) - b.principal(v)).norm() < 1e-9);
    CHECK(a.h[v] == doctest::Approx(b.h[v]).epsilon(1e-9));
  }
}

TEST_CASE("enclosed volume and orientation") {
  const auto m = generate_icosphere(1.0, 4);
  CHECK(enclosed_volume(m) == doctest::Approx(4.0 * M_PI / 3.0).epsilon(0.01));
  CHECK(enclosed_volume(generate_ellipsoid(1.0, 2.0, 0.5, 4)) == doctest::Approx(4.0 * M_PI / 3.0).epsilon(0.01));
  const Eigen::Matrix3d mirror = Eigen::Vector3d(-1, 1, 1).asDiagonal();
  const auto reflected = m.rigidly_moved(mirror, Vec3::Zero());
  CHECK(enclosed_volume(reflected) < 0.0);
  CHECK_THROWS_AS(shape_operator(reflected), InvalidArgument);
  CHECK_THROWS_AS(shape_operator(generate_flat_torus(1.0, 1.0, 6, 6)), InvalidArgument);
}

TEST_CASE("coordinate sections of the unit sphere have unit norm") {
  const auto m = generate_icosphere(1.0, 4);
  const ShapeField s = shape_operator(m);
  const auto S = coordinate_sections(m, s);
  REQUIRE(S.size() == 3);
  for (const auto& section : S) CHECK(e_norm(section) == doctest::Approx(1.0).epsilon(0.01));
}

TEST_CASE("eigenvalue bound, Cheng-Zhou and Reilly on the sphere") {
  const auto m = generate_icosphere(1.0, 3);
  const OperatorSet ops(m);
  const ShapeField s = shape_operator(m);
  const UmbilicEigenBound b = umbilic_eigen_bound_check(m, s, ops.bundle, solve_smallest(ops.bundle, 6));
  CHECK(b.pass);
  CHECK(b.lhs <= b.rhs * 1.05 + 0.1);
  CHECK(b.rayleigh_max >= b.lhs - 1e-9);

  const Spectrum L = solve_smallest(ops.laplacian, 6);
  const ChengZhouReilly c = cheng_zhou_and_reilly_check(m, s, L, 0.0);
  CHECK(c.cz_pass);
  CHECK(c.reilly_pass);
  CHECK(c.reilly_gap < 0.03);
  CHECK_THROWS_AS(cheng_zhou_and_reilly_check(m, s, L, -1.0), InvalidArgument);
  CHECK_THROWS_AS(umbilic_eigen_bound_check(m, s, ops.laplacian, L), InvalidArgument);
}

TEST_CASE("shape csv layout") {
  const auto m = generate_icosphere(1.0, 1);
  const std::string csv = shape_csv(shape_operator(m));
  CHECK(csv.rfind("vertex,a11,a12,a22,h\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == m.num_vertices() + 1);
}
