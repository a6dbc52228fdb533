#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "pinchlab/error.hpp"
#include "pinchlab/operators.hpp"
#include "pinchlab/pinching.hpp"

using namespace pinchlab;

namespace {

double mass_norm(const OperatorPencil& P, const Eigen::VectorXd& x) { return std::sqrt(P.mass_norm_squared(x)); }

bool symmetric(const SparseMatrix& A) { return (SparseMatrix(A.transpose()) - A).norm() <= 1e-12 * A.norm(); }

} // namespace

TEST_CASE("cotangent Laplacian: symmetric, constants in the kernel") {
  for (const auto& m : {generate_icosphere(1.0, 3), generate_flat_torus(3.0, 4.0, 10, 12)}) {
    const OperatorPencil L = assemble_laplacian(m);
    CHECK(symmetric(L.stiffness));
    const Eigen::VectorXd one = Eigen::VectorXd::Ones(m.num_vertices());
    CHECK((L.stiffness * one).lpNorm<Eigen::Infinity>() < 1e-12);
    CHECK(L.quadratic_form(one) == 0.0);
    CHECK(L.mass.sum() == doctest::Approx(m.total_volume()).epsilon(1e-12));
  }
  CHECK(assemble_laplacian(generate_icosphere(1.0, 3)).negative_weights == 0);
}

TEST_CASE("Laplacian of spherical harmonics converges under refinement") {
  // z has eigenvalue 2, xy eigenvalue 6; the lumped residual is first order in h.
  double previous_z = 0.0, previous_q = 0.0;
  for (int level = 2; level <= 4; ++level) {
    const auto m = generate_icosphere(1.0, level);
    const OperatorPencil L = assemble_laplacian(m);
    const auto z = FunctionField::from_positions(m, [](const Vec3& p) { return p.z(); });
    const auto q = FunctionField::from_positions(m, [](const Vec3& p) { return p.x() * p.y(); });
    const double ez = mass_norm(L, (weak_laplacian(L, z) - z * 2.0).values()) / mass_norm(L, z.values());
    const double eq = mass_norm(L, (weak_laplacian(L, q) - q * 6.0).values()) / mass_norm(L, q.values());
    if (level > 2) {
      CHECK(ez < 0.6 * previous_z);
      CHECK(eq < 0.6 * previous_q);
    }
    previous_z = ez;
    previous_q = eq;
  }
  CHECK(previous_z < 0.02);
}

TEST_CASE("Laplacian of a Fourier mode on the flat torus") {
  const int n = 40;
  const auto m = generate_flat_torus(2.0 * M_PI, 2.0 * M_PI, n, n);
  const OperatorPencil L = assemble_laplacian(m);
  Eigen::VectorXd f(m.num_vertices());
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) f[torus_vertex(i, j, n, n)] = std::cos(2.0 * M_PI * i / n) * std::sin(4.0 * M_PI * j / n);
  // Eigenvalue 1 + 4 = 5.
  CHECK(L.rayleigh_quotient(f) == doctest::Approx(5.0).epsilon(0.01));
}

TEST_CASE("bundle pencil: symmetric, positive, and exact on e") {
  const std::vector<SimplicialSurface> meshes{generate_icosphere(1.0, 2), generate_icosphere(3.0, 2),
                                              generate_ellipsoid(1.0, 0.8, 1.6, 2),
                                              generate_perturbed_sphere(0.3, 2, 11, 2),
                                              generate_flat_torus(2.0, 7.0, 5, 9)};
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g;
  for (const auto& m : meshes) {
    const TransportAtlas atlas(m);
    const OperatorPencil B = assemble_bundle_laplacian(atlas);
    CHECK(B.dimension() == 3 * m.num_vertices());
    CHECK(symmetric(B.stiffness));
    CHECK(B.rayleigh_quotient(ESection::unit(m).to_vector()) == doctest::Approx(2.0).epsilon(1e-12));
    for (int t = 0; t < 5; ++t) {
      Eigen::VectorXd x(B.dimension());
      for (int i = 0; i < x.size(); ++i) x[i] = g(rng);
      CHECK(B.quadratic_form(x) >= 0.0);
    }
  }
}

TEST_CASE("bundle energy is gauge invariant") {
  const auto m = generate_ellipsoid(1.0, 1.3, 0.9, 2);
  const TransportAtlas atlas(m);
  Eigen::VectorXd offsets(m.num_vertices());
  for (int v = 0; v < offsets.size(); ++v) offsets[v] = std::sin(3.0 * v);
  const TransportAtlas other = atlas.regauged(offsets);
  const OperatorPencil B = assemble_bundle_laplacian(atlas);
  const OperatorPencil Bg = assemble_bundle_laplacian(other);
  std::mt19937_64 rng(8);
  std::normal_distribution<double> g;
  Eigen::VectorXd x(B.dimension());
  for (int i = 0; i < x.size(); ++i) x[i] = g(rng);
  Eigen::VectorXd y = x;
  for (int v = 0; v < m.num_vertices(); ++v) y.segment<2>(3 * v) = rotation2(-offsets[v]) * x.segment<2>(3 * v);
  CHECK(Bg.quadratic_form(y) == doctest::Approx(B.quadratic_form(x)).epsilon(1e-11));
}

TEST_CASE("pinching norms of spherical harmonics") {
  double previous = 1.0;
  for (int level = 2; level <= 4; ++level) {
    const auto m = generate_icosphere(1.0, level);
    const OperatorSet ops(m);
    const auto z = FunctionField::from_positions(m, [](const Vec3& p) { return p.z(); });
    const double nz = std::sqrt(ops.laplacian.mass_norm_squared(z.values()));
    CHECK(ops.bochner(z).value / nz < 1e-6);
    // The bundle route carries a discretization defect that shrinks with h.
    const double bz = ops.bundle_norm(z) / nz;
    CHECK(bz < 0.8 * previous);
    previous = bz;
  }
  const auto m = generate_icosphere(1.0, 4);
  const OperatorSet ops(m);
  // ||Hess f + f g||^2 = (36 - 6 - 12 + 2) ||f||^2 for a degree-2 harmonic.
  const auto q = FunctionField::from_positions(m, [](const Vec3& p) { return p.x() * p.y(); });
  const double nq = std::sqrt(ops.laplacian.mass_norm_squared(q.values()));
  CHECK(ops.bochner(q).value / nq == doctest::Approx(std::sqrt(20.0)).epsilon(0.03));
  CHECK(ops.bundle_norm(q) / nq == doctest::Approx(std::sqrt(20.0)).epsilon(0.03));
  // Constants: Hess c + c g = c g, of norm c sqrt(2).
  const auto c = FunctionField::constant(m, 1.5);
  CHECK(ops.bundle_norm(c) == doctest::Approx(1.5 * std::sqrt(2.0)).epsilon(1e-10));
}

TEST_CASE("discrete gradient is exact for linear functions on a flat torus") {
  const int n = 6;
  const auto m = generate_flat_torus(6.0, 6.0, n, n);
  const TransportAtlas atlas(m);
  Eigen::VectorXd f = Eigen::VectorXd::Zero(m.num_vertices());
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) f[torus_vertex(i, j, n, n)] = std::cos(2.0 * M_PI * i / n);
  const auto grads = face_gradients(m, f);
  CHECK(static_cast<int>(grads.size()) == m.num_faces());
  // Hat gradients sum to zero on every face.
  for (int t = 0; t < m.num_faces(); ++t) {
    const auto h = hat_gradients(m, t);
    CHECK((h[0] + h[1] + h[2]).norm() < 1e-12);
  }
}

TEST_CASE("scaling covariance of the pencils") {
  const auto m = generate_perturbed_sphere(0.1, 3, 4, 2);
  const auto big = m.scaled(2.0);
  const auto z = FunctionField::from_positions(m, [](const Vec3& p) { return p.z() * p.z() + p.x(); });
  const OperatorPencil L = assemble_laplacian(m), Lb = assemble_laplacian(big);
  CHECK(Lb.rayleigh_quotient(z.values()) == doctest::Approx(L.rayleigh_quotient(z.values()) / 4.0).epsilon(1e-12));
}

TEST_CASE("matrix market export writes both matrices") {
  const auto m = generate_icosphere(1.0, 1);
  const auto dir = std::filesystem::temp_directory_path() / "pinchlab_mtx_test";
  std::filesystem::create_directories(dir);
  const std::string stem = (dir / "lap").string();
  export_matrix_market(assemble_laplacian(m), stem);
  CHECK(std::filesystem::file_size(stem + ".stiffness.mtx") > 0);
  CHECK(std::filesystem::file_size(stem + ".mass.mtx") > 0);
  std::filesystem::remove_all(dir);
}
