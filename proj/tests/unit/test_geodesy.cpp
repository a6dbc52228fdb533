#include <doctest.h>

#include <cmath>
#include <set>

#include <Eigen/Geometry>

#include "pinchlab/error.hpp"
#include "pinchlab/geodesy.hpp"
#include "pinchlab/operators.hpp"

using namespace pinchlab;

namespace {

double great_circle(const Vec3& a, const Vec3& b) {
  return std::atan2(a.normalized().cross(b.normalized()).norm(), a.normalized().dot(b.normalized()));
}

// Exact distance on the flat torus between grid points (i, j) and (k, l).
double torus_distance(int i, int j, int k, int l, double L1, double L2, int n1, int n2) {
  double dx = std::abs(i - k) * L1 / n1, dy = std::abs(j - l) * L2 / n2;
  dx = std::min(dx, L1 - dx);
  dy = std::min(dy, L2 - dy);
  return std::hypot(dx, dy);
}

} // namespace

TEST_CASE("sphere distances match great circles") {
  const auto m = generate_icosphere(1.0, 4);
  const DistanceEngine engine(m);
  const auto& p = m.positions();
  for (int source : {0, 17, 500}) {
    const DistanceField d = engine.from(source);
    double worst = 0.0;
    for (int v = 0; v < m.num_vertices(); ++v) {
      const double exact = great_circle(p[source], p[v]);
      if (exact > 0.3) worst = std::max(worst, std::abs(d[v] - exact) / exact);
    }
    CHECK(worst <= engine.certified_error());
    CHECK(d[source] == 0.0);
  }
  CHECK(engine.certified_error() > 0.0);
  CHECK(engine.certified_error() < 0.02);
}

TEST_CASE("flat torus distances converge to the periodic Euclidean metric") {
  const int n1 = 24, n2 = 18;
  const double L1 = 6.0, L2 = 4.0;
  const auto m = generate_flat_torus(L1, L2, n1, n2);
  double previous = 1.0;
  for (int steiner : {1, 3, 5, 8}) {
    const DistanceEngine engine(m, steiner);
    const DistanceField d = engine.from(torus_vertex(3, 5, n1, n2));
    double worst = 0.0;
    for (int i = 0; i < n1; ++i)
      for (int j = 0; j < n2; ++j) {
        const double exact = torus_distance(3, 5, i, j, L1, L2, n1, n2);
        const double got = d[torus_vertex(i, j, n1, n2)];
        CHECK(got >= exact - 1e-12);
        if (exact > 0.0) worst = std::max(worst, (got - exact) / exact);
      }
    CHECK(worst < previous);
    previous = worst;
  }
  CHECK(previous < 0.01);
}

TEST_CASE("distances are symmetric and satisfy the triangle inequality") {
  const auto m = generate_perturbed_sphere(0.2, 3, 6, 3);
  const DistanceEngine engine(m);
  const DistanceField a = engine.from(3), b = engine.from(400);
  CHECK(a[400] == doctest::Approx(b[3]).epsilon(1e-12));
  for (int x = 0; x < m.num_vertices(); ++x) CHECK(excess(a, b, x) >= -1e-12);
}

TEST_CASE("distances scale with the surface and ignore rigid motions") {
  const auto m = generate_ellipsoid(1.0, 1.2, 0.8, 3);
  const DistanceField d = DistanceEngine(m).from(7);
  const DistanceField s = DistanceEngine(m.scaled(2.0)).from(7);
  const Eigen::Matrix3d R = Eigen::AngleAxisd(0.4, Vec3(0, 1, 1).normalized()).toRotationMatrix();
  const DistanceField r = DistanceEngine(m.rigidly_moved(R, Vec3(5, 0, 0))).from(7);
  for (int v = 0; v < m.num_vertices(); ++v) {
    CHECK(s[v] == doctest::Approx(2.0 * d[v]).epsilon(1e-12));
    CHECK(r[v] == doctest::Approx(d[v]).epsilon(1e-10));
  }
}

TEST_CASE("taut geodesics are at most as long as graph paths") {
  const auto m = generate_icosphere(1.0, 4);
  const DistanceEngine engine(m);
  const auto& p = m.positions();
  const DistanceField d = engine.from(10);
  for (int target : {200, 1000, 2000, 2500}) {
    const GeodesicPath path = engine.geodesic(d, target);
    CHECK(path.length <= d[target] + 1e-12);
    CHECK(path.length == doctest::Approx(great_circle(p[10], p[target])).epsilon(0.005));
    double sum = 0.0;
    for (const auto& piece : path.pieces) sum += piece.length;
    CHECK(sum == doctest::Approx(path.length).epsilon(1e-12));
    // A linear function of the ambient coordinates traced along the path.
    const auto z = FunctionField::from_positions(m, [](const Vec3& q) { return q.z(); });
    const auto samples = engine.trace(d, target, z.values());
    CHECK(samples.front().arclength == 0.0);
    CHECK(samples.front().value == doctest::Approx(p[10].z()));
    CHECK(samples.back().value == doctest::Approx(p[target].z()));
  }
}

TEST_CASE("farthest point sampling returns distinct spread-out vertices") {
  const auto m = generate_icosphere(1.0, 3);
  const DistanceEngine engine(m);
  const auto sample = farthest_point_sample(engine, 12, 0);
  CHECK(std::set<int>(sample.begin(), sample.end()).size() == 12);
  CHECK(sample.front() == 0);
  const DistanceField d0 = engine.from(0);
  CHECK(d0[sample[1]] == doctest::Approx(M_PI).epsilon(0.01));
}

TEST_CASE("cosine profile and poles of the height function") {
  const auto m = generate_icosphere(1.0, 4);
  const DistanceEngine engine(m);
  const TransportAtlas atlas(m);
  const FunctionField z =
      normalize_band_function(FunctionField::from_positions(m, [](const Vec3& p) { return p.z(); }));
  CHECK(l2_inner(z, z) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  const int top = argmax_vertex(z);
  CHECK(m.positions()[top].z() == doctest::Approx(1.0));
  const CosineProfile profile = almost_cosine_profile(atlas, z, engine.from(top));
  CHECK(profile.sup_dev < 0.05);

  const PoleDecomposition dec = locate_poles(engine, atlas, z);
  REQUIRE(dec.success);
  REQUIRE(dec.poles.size() == 2);
  CHECK(m.positions()[dec.poles[0]].z() > 0.99);
  CHECK(m.positions()[dec.poles[1]].z() < -0.99);
  CHECK(dec.pairs[0].distance == doctest::Approx(M_PI).epsilon(0.01));
  const DiameterCheck dc = diameter_and_excess_check(engine, dec);
  CHECK(dc.diameter == doctest::Approx(M_PI).epsilon(0.01));
  CHECK(dc.max_excess < 0.05);
}

TEST_CASE("geodesy preconditions") {
  const auto m = generate_icosphere(1.0, 2);
  const DistanceEngine engine(m);
  CHECK_THROWS_AS(engine.from(-1), InvalidArgument);
  CHECK_THROWS_AS(DistanceEngine(m, 9), InvalidArgument);
  CHECK_THROWS_AS(normalize_band_function(FunctionField::constant(m, 0.0)), InvalidArgument);
  const auto z = FunctionField::from_positions(m, [](const Vec3& p) { return p.z(); });
  CHECK_THROWS_AS(segment_diagnostics(engine, z, 50, 0.2), InvalidArgument);
}

TEST_CASE("segment diagnostics on the sphere") {
  const auto m = generate_icosphere(1.0, 4);
  const DistanceEngine engine(m);
  const FunctionField z =
      normalize_band_function(FunctionField::from_positions(m, [](const Vec3& p) { return p.z(); }));
  const SegmentDiagnostics sd = segment_diagnostics(engine, z, 100, 0.2, 3);
  CHECK(sd.pairs == 100);
  CHECK(sd.sources == 5);
  CHECK(sd.fraction_good_pairs >= 0.95);
}
