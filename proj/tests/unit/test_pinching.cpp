#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "pinchlab/error.hpp"
#include "pinchlab/pinching.hpp"

using namespace pinchlab;

namespace {

FunctionField coordinate(const SimplicialSurface& m, int k) {
  return FunctionField::from_positions(m, [k](const Vec3& p) { return p[k]; });
}

} // namespace

TEST_CASE("coordinate functions of the sphere are almost pinched") {
  const auto coarse = generate_icosphere(1.0, 2);
  const OperatorSet cops(coarse);
  const PinchReport rc = certify_subspace_pinching({coordinate(coarse, 0), coordinate(coarse, 1), coordinate(coarse, 2)}, cops);
  const auto m = generate_icosphere(1.0, 3);
  const OperatorSet ops(m);
  const PinchReport r = certify_subspace_pinching({coordinate(m, 0), coordinate(m, 1), coordinate(m, 2)}, ops);
  CHECK(r.delta < 0.05);
  CHECK(r.delta_bundle < 0.7 * rc.delta_bundle);
  CHECK(r.records.size() == 3);
  CHECK(r.obata_c == doctest::Approx(1.0).epsilon(0.02));
  CHECK(r.gram_determinant == doctest::Approx(1.0).epsilon(0.01));

  // Pinching degrades monotonically as the ellipsoid departs from the sphere.
  double previous = r.delta;
  for (double c : {1.2, 1.5}) {
    const auto e = generate_ellipsoid(1.0, 1.0, c, 3);
    const OperatorSet eops(e);
    const PinchReport re = certify_subspace_pinching({coordinate(e, 0), coordinate(e, 1), coordinate(e, 2)}, eops);
    CHECK(re.delta > previous + 0.1);
    CHECK(re.delta_bundle > r.delta_bundle);
    previous = re.delta;
  }
}

TEST_CASE("the pinching defect is scale invariant in f") {
  const auto m = generate_icosphere(1.0, 2);
  const OperatorSet ops(m);
  const auto f = FunctionField::from_positions(m, [](const Vec3& p) { return p.x() * p.z() + 0.3 * p.y(); });
  const PinchReport a = certify_subspace_pinching({f}, ops);
  const PinchReport b = certify_subspace_pinching({f * -7.0}, ops);
  CHECK(a.delta == doctest::Approx(b.delta).epsilon(1e-12));
}

TEST_CASE("dependent or constant inputs are rejected") {
  const auto m = generate_icosphere(1.0, 2);
  const OperatorSet ops(m);
  const auto z = coordinate(m, 2);
  CHECK_THROWS_AS(certify_subspace_pinching({z, z * 2.0}, ops), InvalidArgument);
  CHECK_THROWS_AS(certify_subspace_pinching({}, ops), InvalidArgument);
  CHECK_THROWS_AS(estimate_obata_constant(FunctionField::constant(m, 2.0), ops), InvalidArgument);
}

TEST_CASE("Obata constant of a first eigenfunction") {
  const auto m = generate_icosphere(2.0, 3);
  const OperatorSet ops(m);
  // On the sphere of radius 2, L z = (2 / 4) z, so n c = 1/2.
  const ObataFit fit = estimate_obata_constant(coordinate(m, 2), ops);
  CHECK(fit.c == doctest::Approx(0.25).epsilon(0.02));
  CHECK(fit.positive);
  CHECK(fit.residual < 0.02);
}

TEST_CASE("traceless Hessian identity along two routes") {
  const auto m = generate_ellipsoid(1.0, 1.2, 0.9, 3);
  const OperatorSet ops(m);
  for (const auto& f : {coordinate(m, 0), coordinate(m, 2),
                        FunctionField::from_positions(m, [](const Vec3& p) { return p.x() * p.y(); })}) {
    const OmegaIdentity id = bochner_omega_identity_check(f, ops);
    CHECK(id.residual < 0.05);
  }
}

TEST_CASE("Omega vanishes on the flat torus") {
  const auto m = generate_flat_torus(2 * M_PI, 2 * M_PI, 20, 20);
  const OperatorSet ops(m);
  const Spectrum S = solve_smallest(ops.laplacian, 40);
  for (int k = 1; k <= 2; ++k) {
    const OmegaResult o = omega_k(ops, S, k);
    CHECK(std::abs(o.value) < 1e-6);
  }
}

TEST_CASE("Omega needs enough eigenpairs") {
  const auto m = generate_icosphere(1.0, 2);
  const OperatorSet ops(m);
  const Spectrum S = solve_smallest(ops.laplacian, 10);
  CHECK_THROWS_AS(omega_k(ops, S, 1), InvalidArgument);
  CHECK_THROWS_AS(omega_k(ops, S, 0), InvalidArgument);
}

TEST_CASE("bundle near-kernel spans the coordinate functions") {
  const auto m = generate_icosphere(1.0, 3);
  const OperatorSet ops(m);
  const Spectrum B = solve_smallest(ops.bundle, 6);
  const auto kernel = obata_kernel(B, 0.05);
  REQUIRE(kernel.size() == 3);
  for (int k = 0; k < 3; ++k) {
    const FunctionField x = coordinate(m, k);
    double captured = 0.0;
    for (const auto& b : kernel) captured += std::pow(l2_inner(x, b), 2);
    CHECK(captured / l2_inner(x, x) == doctest::Approx(1.0).epsilon(0.01));
  }
  CHECK_THROWS_AS(obata_kernel(solve_smallest(ops.laplacian, 4), 0.05), InvalidArgument);
}

TEST_CASE("report serialization") {
  const auto m = generate_icosphere(1.0, 2);
  const OperatorSet ops(m);
  const PinchReport r = certify_subspace_pinching({coordinate(m, 0), coordinate(m, 1)}, ops, {"x", "y"});
  const std::string csv = to_csv(r);
  CHECK(csv.rfind(pinch_csv_header(), 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
  CHECK(to_json(r).find("\"delta\"") != std::string::npos);
}
