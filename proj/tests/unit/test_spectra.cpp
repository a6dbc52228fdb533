#include <doctest.h>

#include <cmath>

#include <Eigen/Geometry>

#include "pinchlab/error.hpp"
#include "pinchlab/operators.hpp"
#include "pinchlab/spectra.hpp"

using namespace pinchlab;

namespace {

double max_relative_gap(const Spectrum& a, const Spectrum& b, int k) {
  double gap = 0.0;
  for (int i = 0; i < k; ++i)
    gap = std::max(gap, std::abs(a.eigenvalues[i] - b.eigenvalues[i]) / std::max(1.0, std::abs(b.eigenvalues[i])));
  return gap;
}

} // namespace

TEST_CASE("iterative solver agrees with the dense oracle") {
  const auto m = generate_ellipsoid(1.0, 1.2, 0.9, 2);
  const OperatorPencil L = assemble_laplacian(m);
  CHECK(max_relative_gap(solve_smallest(L, 12), solve_dense(L, 12), 12) < 1e-9);
  const OperatorPencil B = assemble_bundle_laplacian(TransportAtlas(m));
  CHECK(max_relative_gap(solve_smallest(B, 10), solve_dense(B, 10), 10) < 1e-9);
}

TEST_CASE("eigenvectors are orthonormal in the normalized mass product") {
  const auto m = generate_icosphere(1.0, 3);
  const OperatorPencil L = assemble_laplacian(m);
  const Spectrum S = solve_smallest(L, 10);
  const Eigen::MatrixXd G = S.vectors.transpose() * L.mass.asDiagonal() * S.vectors / m.total_volume();
  CHECK((G - Eigen::MatrixXd::Identity(10, 10)).lpNorm<Eigen::Infinity>() < 1e-9);
  for (double r : S.residuals) CHECK(r < 1e-8);
  // Ascending up to the cluster tolerance used for canonical ordering.
  for (int i = 1; i < S.size(); ++i) CHECK(S.eigenvalues[i] >= S.eigenvalues[i - 1] - 1e-8);
}

TEST_CASE("sphere and flat torus spectra") {
  // Pencils refer to their surface, so the meshes stay alive for the solve.
  const auto sphere_mesh = generate_icosphere(1.0, 4);
  const Spectrum s = solve_smallest(assemble_laplacian(sphere_mesh), 10);
  const double sphere[] = {0, 2, 2, 2, 6, 6, 6, 6, 6, 12};
  CHECK(std::abs(s.eigenvalues[0]) < 1e-8);
  for (int i = 1; i < 10; ++i) CHECK(s.eigenvalues[i] == doctest::Approx(sphere[i]).epsilon(0.02));

  // m^2 + k^2 on the 2 pi square torus: 0, 1 (x4), 2 (x4), 4 (x4).
  const auto torus_mesh = generate_flat_torus(2 * M_PI, 2 * M_PI, 32, 32);
  const Spectrum t = solve_smallest(assemble_laplacian(torus_mesh), 13);
  const double torus[] = {0, 1, 1, 1, 1, 2, 2, 2, 2, 4, 4, 4, 4};
  for (int i = 1; i < 13; ++i) CHECK(t.eigenvalues[i] == doctest::Approx(torus[i]).epsilon(0.03));
}

TEST_CASE("eigenvalues scale with the inverse square of the size") {
  const auto m = generate_perturbed_sphere(0.1, 2, 3, 2);
  const Spectrum a = solve_smallest(assemble_laplacian(m), 8);
  const auto big = m.scaled(3.0);
  const Spectrum b = solve_smallest(assemble_laplacian(big), 8);
  for (int i = 1; i < 8; ++i) CHECK(b.eigenvalues[i] == doctest::Approx(a.eigenvalues[i] / 9.0).epsilon(1e-9));
}

TEST_CASE("eigenvalues are invariant under rigid motions") {
  const auto m = generate_ellipsoid(1.0, 1.3, 0.8, 2);
  const Eigen::Matrix3d R = Eigen::AngleAxisd(1.0, Eigen::Vector3d(1, -1, 2).normalized()).toRotationMatrix();
  const Spectrum a = solve_smallest(assemble_bundle_laplacian(TransportAtlas(m)), 8);
  const auto moved = m.rigidly_moved(R, Vec3(1, 2, 3));
  const Spectrum b = solve_smallest(assemble_bundle_laplacian(TransportAtlas(moved)), 8);
  CHECK(max_relative_gap(a, b, 8) < 1e-9);
}

TEST_CASE("solves are reproducible bit for bit") {
  const auto m = generate_icosphere(1.0, 3);
  const OperatorPencil L = assemble_laplacian(m);
  const Spectrum a = solve_smallest(L, 10), b = solve_smallest(L, 10);
  for (int i = 0; i < 10; ++i) CHECK(a.eigenvalues[i] == b.eigenvalues[i]);
  CHECK((a.vectors - b.vectors).norm() == 0.0);
  CHECK(to_json(a) == to_json(b));
}

TEST_CASE("projection band") {
  const ProjectionSpec spec(2, 0.25);
  CHECK(spec.low() == doctest::Approx(1.5));
  CHECK(spec.high() == doctest::Approx(2.5));
  CHECK(spec.contains(1.5));
  CHECK(spec.contains(2.5 + 1e-10));
  CHECK_FALSE(spec.contains(2.6));
  CHECK_THROWS_AS(ProjectionSpec(1, 0.1), InvalidArgument);
  CHECK_THROWS_AS(ProjectionSpec(2, -0.1), InvalidArgument);

  const auto m = generate_icosphere(1.0, 3);
  const OperatorPencil L = assemble_laplacian(m);
  const Spectrum S = solve_smallest(L, 10);
  CHECK(band_indices(spec, S) == std::vector<int>{1, 2, 3});
  const auto z = FunctionField::from_positions(m, [](const Vec3& p) { return p.z() + 0.5 * p.x() * p.y(); });
  const FunctionField Pz = project_band(spec, S, z);
  const FunctionField PPz = project_band(spec, S, Pz);
  CHECK((PPz - Pz).values().norm() < 1e-10 * Pz.values().norm());
  const auto zz = FunctionField::from_positions(m, [](const Vec3& p) { return p.z(); });
  CHECK(std::sqrt(L.mass_norm_squared((Pz - zz).values()) / L.mass_norm_squared(zz.values())) < 0.01);
  const Spectrum short_spectrum = solve_smallest(L, 3);
  CHECK_THROWS_AS(project_band(spec, short_spectrum, z), InvalidArgument);
}

TEST_CASE("Rayleigh-Ritz certificate") {
  const auto m = generate_icosphere(1.0, 3);
  const OperatorPencil L = assemble_laplacian(m);
  const Spectrum S = solve_smallest(L, 10);
  const LambdaCertificate c = certify_lambda_k(S, L, 10);
  CHECK(c.upper_bound == doctest::Approx(c.lambda_k).epsilon(1e-9));
  CHECK_THROWS_AS(certify_lambda_k(S, L, 11), InvalidArgument);
}

TEST_CASE("solver preconditions") {
  const auto m = generate_icosphere(1.0, 1);
  const OperatorPencil L = assemble_laplacian(m);
  CHECK_THROWS_AS(solve_smallest(L, 0), InvalidArgument);
  CHECK_THROWS_AS(solve_smallest(L, 40), InvalidArgument);
  SolveOptions tight;
  tight.tol = 1e-14;
  CHECK_THROWS_AS(solve_smallest(L, 2, tight), InvalidArgument);
  const Spectrum S = solve_dense(L);
  CHECK(S.size() == L.dimension());
  CHECK(S.meta.method == "dense");
}
