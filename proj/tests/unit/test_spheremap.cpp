#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include <Eigen/Geometry>

#include "pinchlab/error.hpp"
#include "pinchlab/operators.hpp"
#include "pinchlab/spheremap.hpp"

using namespace pinchlab;

namespace {

// Enumerates every relation R in A x B with full projections.
double gh_by_relations(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B) {
  const int na = static_cast<int>(A.rows()), nb = static_cast<int>(B.rows());
  const int cells = na * nb;
  double best = std::numeric_limits<double>::infinity();
  for (unsigned long mask = 1; mask < (1UL << cells); ++mask) {
    std::vector<int> rows(na, 0), cols(nb, 0);
    std::vector<std::pair<int, int>> pairs;
    for (int c = 0; c < cells; ++c)
      if (mask & (1UL << c)) {
        rows[c / nb] = cols[c % nb] = 1;
        pairs.emplace_back(c / nb, c % nb);
      }
    if (std::count(rows.begin(), rows.end(), 0) || std::count(cols.begin(), cols.end(), 0)) continue;
    double dis = 0.0;
    for (const auto& p : pairs)
      for (const auto& q : pairs) dis = std::max(dis, std::abs(A(p.first, q.first) - B(p.second, q.second)));
    best = std::min(best, dis);
  }
  return 0.5 * best;
}

// Shortest-path closure of random edge weights: always a metric.
Eigen::MatrixXd random_metric(int n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> w(0.2, 2.0);
  Eigen::MatrixXd d(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j <= i; ++j) d(i, j) = d(j, i) = i == j ? 0.0 : w(rng);
  for (int k = 0; k < n; ++k)
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) d(i, j) = std::min(d(i, j), d(i, k) + d(k, j));
  return d;
}

FunctionField coordinate(const SimplicialSurface& m, int k) {
  return FunctionField::from_positions(m, [k](const Vec3& p) { return p[k]; });
}

} // namespace

TEST_CASE("exact GH distance agrees with relation enumeration") {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 30; ++trial) {
    const int na = 1 + trial % 3, nb = 1 + (trial / 3) % 4;
    const Eigen::MatrixXd a = random_metric(na, rng), b = random_metric(nb, rng);
    const double expected = gh_by_relations(a, b);
    CHECK(gh_bruteforce(FiniteMetricSpace(a), FiniteMetricSpace(b)) == doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("GH distance behaves like a metric on finite spaces") {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 10; ++trial) {
    const FiniteMetricSpace A(random_metric(3, rng)), B(random_metric(4, rng)), C(random_metric(2, rng));
    const double ab = gh_bruteforce(A, B), ba = gh_bruteforce(B, A);
    CHECK(ab == doctest::Approx(ba).epsilon(1e-12));
    CHECK(gh_bruteforce(A, A) == 0.0);
    CHECK(ab <= gh_bruteforce(A, C) + gh_bruteforce(C, B) + 1e-12);
    // Rescaling both spaces rescales the distance.
    CHECK(gh_bruteforce(FiniteMetricSpace(A.matrix() * 3.0), FiniteMetricSpace(B.matrix() * 3.0)) ==
          doctest::Approx(3.0 * ab).epsilon(1e-12));
    // Against a point: half the diameter.
    CHECK(gh_bruteforce(A, FiniteMetricSpace(Eigen::MatrixXd::Zero(1, 1))) ==
          doctest::Approx(0.5 * A.diameter()).epsilon(1e-12));
  }
  Eigen::MatrixXd big = Eigen::MatrixXd::Ones(8, 8) - Eigen::MatrixXd::Identity(8, 8);
  CHECK_THROWS_AS(gh_bruteforce(FiniteMetricSpace(big), FiniteMetricSpace(big)), InvalidArgument);
}

TEST_CASE("finite metric spaces are validated") {
  Eigen::MatrixXd d(3, 3);
  d << 0, 1, 3, 1, 0, 1, 3, 1, 0;
  CHECK_THROWS_AS(FiniteMetricSpace{d}, InvalidArgument);
  d(0, 2) = d(2, 0) = 2;
  CHECK_NOTHROW(FiniteMetricSpace{d});
  Eigen::MatrixXd asym = d;
  asym(0, 1) = 1.5;
  CHECK_THROWS_AS(FiniteMetricSpace{asym}, InvalidArgument);
  Eigen::MatrixXd diag = d;
  diag(1, 1) = 0.1;
  CHECK_THROWS_AS(FiniteMetricSpace{diag}, InvalidArgument);
  CHECK_THROWS_AS(FiniteMetricSpace(d, {"a", "b"}), InvalidArgument);
  CHECK_THROWS_AS(FiniteMetricSpace(Eigen::MatrixXd(0, 0)), InvalidArgument);

  const FiniteMetricSpace X(d, {"a", "b", "c"});
  const FiniteMetricSpace Y = FiniteMetricSpace::from_json(X.to_json());
  CHECK(Y.matrix() == X.matrix());
  CHECK(Y.labels() == X.labels());
  CHECK_THROWS_AS(FiniteMetricSpace::from_json("{\"distances\": [[0, 1]]}"), Error);
  CHECK_THROWS_AS(FiniteMetricSpace::from_json("not json"), FormatError);
}

TEST_CASE("suspension distance matches the suspension of a circle") {
  // The suspension of the unit circle is the unit sphere: [t, theta] -> polar coordinates.
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> t(0.0, M_PI), theta(0.0, 2 * M_PI);
  for (int k = 0; k < 200; ++k) {
    const double t1 = t(rng), t2 = t(rng), a = theta(rng), b = theta(rng);
    const Vec3 p(std::sin(t1) * std::cos(a), std::sin(t1) * std::sin(a), std::cos(t1));
    const Vec3 q(std::sin(t2) * std::cos(b), std::sin(t2) * std::sin(b), std::cos(t2));
    double dz = std::abs(a - b);
    dz = std::min(dz, 2 * M_PI - dz);
    const double exact = std::atan2(p.cross(q).norm(), p.dot(q));
    CHECK(suspension_distance(t1, t2, dz) == doctest::Approx(exact).epsilon(1e-9));
  }
  CHECK(suspension_distance(0.3, 1.2, 5.0) == doctest::Approx(0.3 + 1.2));
}

TEST_CASE("spherical suspension of a finite space") {
  Eigen::MatrixXd d(2, 2);
  d << 0, 1, 1, 0;
  const FiniteMetricSpace Z(d);
  const FiniteMetricSpace S = spherical_suspension(Z, {0.0, 1.0, 2.0, M_PI});
  CHECK(S.size() == 2 + 2 * 2);
  CHECK(S(0, S.size() - 1) == doctest::Approx(M_PI));
  CHECK(S(0, 1) == doctest::Approx(1.0));
  CHECK(S(1, 2) == doctest::Approx(suspension_distance(1.0, 1.0, 1.0)));
  CHECK_THROWS_AS(spherical_suspension(Z, {0.0, 2.0, 1.0, M_PI}), InvalidArgument);
  CHECK_THROWS_AS(spherical_suspension(Z, {0.5, 1.0, M_PI}), InvalidArgument);
}

TEST_CASE("signed spherical areas and degree") {
  const Vec3 x(1, 0, 0), y(0, 1, 0), z(0, 0, 1);
  CHECK(signed_spherical_area(x, y, z) == doctest::Approx(M_PI / 2));
  CHECK(signed_spherical_area(y, x, z) == doctest::Approx(-M_PI / 2));
  // A hemisphere, split internally along great circles.
  CHECK(std::abs(signed_spherical_area(x, Vec3(-0.5, std::sqrt(3) / 2, 0), Vec3(-0.5, -std::sqrt(3) / 2, 0))) <=
        2 * M_PI + 1e-9);

  const auto m = generate_icosphere(1.0, 2);
  Eigen::MatrixXd psi(m.num_vertices(), 3);
  for (int v = 0; v < m.num_vertices(); ++v) psi.row(v) = m.positions()[v].normalized().transpose();
  CHECK(mapping_degree(m, psi) == doctest::Approx(1.0).epsilon(1e-9));
  psi.col(0) *= -1.0;
  CHECK(mapping_degree(m, psi) == doctest::Approx(-1.0).epsilon(1e-9));
}

TEST_CASE("sphere map of the round sphere") {
  const auto m = generate_icosphere(1.0, 3);
  const Spectrum S = solve_smallest(assemble_laplacian(m), 10);
  SphereMapReport r = build_sphere_map(m, S, ProjectionSpec(2, 0.25));
  CHECK(r.band_multiplicity == 3);
  CHECK(r.max_raw_deviation < 0.05);
  for (int v = 0; v < m.num_vertices(); ++v) CHECK(r.psi.row(v).norm() == doctest::Approx(1.0));
  for (int s = 0; s < 3; ++s) CHECK(l2_inner(r.band[s], r.band[s]) == doctest::Approx(1.0 / 3.0).epsilon(1e-9));

  const DistanceEngine engine(m);
  map_quality(engine, r, 40, 4.0);
  CHECK(r.quality_computed);
  CHECK(r.gh_upper < 0.2);
  CHECK(std::abs(std::abs(r.degree) - 1.0) < 0.01);
  CHECK(r.degree_defect < 0.01);
  CHECK(r.sample_pairs == 40 * 39 / 2);
  CHECK(net_csv(r).rfind("theta,phi,distance", 0) == 0);
  CHECK_THROWS_AS(map_quality(engine, r, 20, 4.0), InvalidArgument);
}

TEST_CASE("sphere map quality does not depend on the band basis") {
  const auto m = generate_icosphere(1.0, 3);
  const Spectrum S = solve_smallest(assemble_laplacian(m), 10);
  SphereMapReport a = build_sphere_map(m, S, ProjectionSpec(2, 0.25));
  const Eigen::Matrix3d Q = Eigen::AngleAxisd(0.7, Vec3(1, 2, -1).normalized()).toRotationMatrix();
  std::vector<FunctionField> rotated;
  for (int s = 0; s < 3; ++s) {
    Eigen::VectorXd f = Eigen::VectorXd::Zero(m.num_vertices());
    for (int r = 0; r < 3; ++r) f += Q(s, r) * a.band[r].values();
    rotated.emplace_back(m, f);
  }
  SphereMapReport b = sphere_map_from_functions(rotated);
  const DistanceEngine engine(m);
  map_quality(engine, a, 40, 4.0);
  map_quality(engine, b, 40, 4.0);
  CHECK(b.eps_dist == doctest::Approx(a.eps_dist).epsilon(1e-9));
  CHECK(b.eps_dens == doctest::Approx(a.eps_dens).epsilon(1e-6));
  CHECK(b.degree == doctest::Approx(a.degree).epsilon(1e-9));
}

TEST_CASE("a band without enough eigenpairs is rejected") {
  // Smallest nonzero eigenvalue 1.8^2 lies above the band [1.5, 2.5].
  const double L = 2 * M_PI / 1.8;
  const auto m = generate_flat_torus(L, L, 16, 16);
  const Spectrum S = solve_smallest(assemble_laplacian(m), 10);
  CHECK_THROWS_AS(build_sphere_map(m, S, ProjectionSpec(2, 0.25)), Rejected);
  CHECK_THROWS_AS(build_sphere_map(m, solve_smallest(assemble_bundle_laplacian(TransportAtlas(m)), 6),
                                   ProjectionSpec(2, 0.25)),
                  InvalidArgument);
}

TEST_CASE("a vanishing map is rejected") {
  const auto m = generate_icosphere(1.0, 1);
  const FunctionField x = coordinate(m, 0), y = coordinate(m, 1);
  CHECK_THROWS_AS(sphere_map_from_functions({x, y}), Rejected);
  CHECK_THROWS_AS(sphere_map_from_functions({x}), InvalidArgument);
}

TEST_CASE("shipped icosphere skeleton is reproducible") {
  const FiniteMetricSpace shipped =
      FiniteMetricSpace::load(std::string(PINCHLAB_TEST_DATA_DIR) + "/gh/octahedron_icosphere_s5.json");
  const auto m = generate_icosphere(1.0, 5);
  const DistanceEngine engine(m);
  const int ids[] = {41, 21, 16, 36, 25, 28};
  for (int a = 0; a < 6; ++a) {
    const Vec3 axis = Vec3::Unit(a / 2) * (a % 2 ? -1.0 : 1.0);
    CHECK((m.positions()[ids[a]] - axis).norm() < 1e-12);
    const DistanceField d = engine.from(ids[a]);
    for (int b = 0; b < 6; ++b) CHECK(d[ids[b]] == doctest::Approx(shipped(a, b)).epsilon(1e-12));
  }
  const FiniteMetricSpace round = FiniteMetricSpace::load(std::string(PINCHLAB_TEST_DATA_DIR) + "/gh/octahedron_round.json");
  const double gh = gh_bruteforce(shipped, round);
  CHECK(gh >= 0.0);
  CHECK(gh <= 0.5 * (M_PI - shipped(0, 1)) + 1e-12);
}
