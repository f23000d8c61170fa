#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "mfdeg/degree.hpp"
#include "mfdeg/kirchhoff.hpp"

#include <cmath>
#include <numbers>

using namespace mfdeg;

namespace {

constexpr double kPi = std::numbers::pi;
const double kA = 1 / std::sqrt(kPi);
constexpr double kRobinCenter = -0.21046091723789806;
constexpr double kRobinBoundary = -0.1424006840649793;

// Disk with a wide band of constant-count outer rings, so that boundary
// neighbourhoods do not see the sector seams of the graded core.
std::shared_ptr<const GreenTable> disk_table() {
  static const auto T = [] {
    auto L = std::make_shared<NeumannLaplacian>(make_disk(12, 10));
    return std::make_shared<const GreenTable>(L, GreenTable::Options{});
  }();
  return T;
}

SurfacePoint at(double x, double y) {
  SurfacePoint p;
  p.x = Vec2(x, y);
  return p;
}

Configuration interior(std::vector<SurfacePoint> pts) {
  Configuration c;
  c.p = static_cast<int>(pts.size());
  c.points = std::move(pts);
  return c;
}

Configuration on_boundary(const SurfaceMesh& m, std::vector<double> s) {
  Configuration c;
  c.q = static_cast<int>(s.size());
  for (double t : s) c.points.push_back(m.boundary_point(0, t));
  return c;
}

// F(theta) for one boundary point with V = 1 + eps cos(theta) on the disk:
// the Robin term is constant, so F is 2 kappa ln V up to a constant.
double boundary_scan(double theta, double eps) { return 8 * kPi * std::log(1 + eps * std::cos(theta)); }

}  // namespace

TEST_CASE("single point with constant potential: F^1 = exp(kappa R), F = 64 pi^2 R") {
  const auto T = disk_table();
  const KirchhoffRouth K(T, Potential::parse("1"));
  const auto c = interior({at(0.1, -0.05)});
  const double R = T->robin(c.points[0]);
  // F reads H through the interaction interpolant, the value through the Robin one
  CHECK(K.F(c.points[0], c, 0) == doctest::Approx(std::exp(8 * kPi * R)).epsilon(1e-3));
  CHECK(K.value(c) == doctest::Approx(64 * kPi * kPi * R).epsilon(1e-12));
  // and R itself against the images value at the centre
  CHECK(K.value(interior({at(0, 0)})) == doctest::Approx(64 * kPi * kPi * kRobinCenter).epsilon(0.01));
}

TEST_CASE("scaling the potential scales F^i and leaves the gradient alone") {
  const auto T = disk_table();
  const KirchhoffRouth K1(T, Potential::parse("1+0.3*x")), K3(T, Potential::parse("3*(1+0.3*x)"));
  const auto c = interior({at(0.1, 0.05), at(-0.15, 0.1)});
  SurfacePoint x = at(0.02, -0.1);
  CHECK(K3.F(x, c, 0) == doctest::Approx(3 * K1.F(x, c, 0)).epsilon(1e-12));
  const Eigen::VectorXd g1 = K1.gradient(c), g3 = K3.gradient(c);
  CHECK((g1 - g3).norm() <= 1e-7 * g1.norm());
}

TEST_CASE("antipodal interior pair: equal F at both centres") {
  const auto T = disk_table();
  const KirchhoffRouth K(T, Potential::parse("1"));
  const auto c = interior({at(0.2, 0.1), at(-0.2, -0.1)});
  const double f1 = K.F(c.points[0], c, 0), f2 = K.F(c.points[1], c, 1);
  CHECK(std::abs(f1 - f2) <= 0.01 * f1);
}

TEST_CASE("value is bitwise invariant under allowed permutations") {
  const auto T = disk_table();
  const auto& m = T->mesh();
  const KirchhoffRouth K(T, Potential::parse("1+0.3*x+0.1*y^2"));
  Configuration c = interior({at(0.1, 0.05), at(-0.2, 0.1)});
  c.q = 2;
  c.p = 2;
  c.points.push_back(m.boundary_point(0, 0.4));
  c.points.push_back(m.boundary_point(0, 2.1));
  const double v = K.value(c);
  for (const auto& r : K.relabellings(c)) CHECK(K.value(r) == v);
  CHECK(K.relabellings(c).size() == 4);
}

TEST_CASE("two boundary points, constant potential: gap theta and 2 pi - theta") {
  const auto T = disk_table();
  const auto& m = T->mesh();
  const double len = m.boundary_loops[0].length;
  const KirchhoffRouth K(T, Potential::parse("1"));
  for (double gap : {0.3, 1.0, 2.5}) {
    const double s0 = 0.37;
    // seen from the second point the gap is 2 pi - theta
    const auto a = on_boundary(m, {s0, s0 + gap * kA});
    const auto b = on_boundary(m, {s0 + gap * kA, s0 + len});
    CHECK(std::abs(K.value(a) - K.value(b)) <= 1e-10 * std::abs(K.value(a)));
    // rotating the pair changes the value only at the discretisation level
    const auto r = on_boundary(m, {s0 + 1.1, s0 + 1.1 + gap * kA});
    CHECK(std::abs(K.value(a) - K.value(r)) <= 1e-3 * std::abs(K.value(a)));
  }
}

TEST_CASE("gradient vanishes at the disk centre for constant potential") {
  const auto T = disk_table();
  const KirchhoffRouth K(T, Potential::parse("1"));
  const auto c = interior({at(0, 0)});
  const Eigen::VectorXd g = K.gradient(c);
  const Eigen::MatrixXd H = K.hessian(c);
  // the Newton displacement to the discrete critical point is below 1e-3 diam
  const Eigen::VectorXd d = H.ldlt().solve(g);
  CHECK(d.norm() < 1e-3 * T->mesh().diameter);
  // the centre is a minimum: R grows towards the boundary
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(H);
  CHECK(es.eigenvalues().minCoeff() > 0);
  // images oracle: R'' = 2 per axis at the centre, Hessian 128 pi^2
  const double exact = 128 * kPi * kPi;
  CHECK(H(0, 0) == doctest::Approx(exact).epsilon(0.03));
  CHECK(H(1, 1) == doctest::Approx(exact).epsilon(0.03));
}

TEST_CASE("directional finite differences converge at second order") {
  const auto T = disk_table();
  const KirchhoffRouth K(T, Potential::parse("1+0.3*x"));
  const auto c = interior({at(0.1, 0.05)});
  const Eigen::VectorXd g = K.gradient(c);
  const Vec2 dir(0.6, 0.8);
  auto err = [&](double t) {
    auto p = c, q = c;
    p.points[0].x += t * dir;
    q.points[0].x -= t * dir;
    return std::abs((K.value(p) - K.value(q)) / (2 * t) - g.dot(dir));
  };
  const double e1 = err(1e-2), e2 = err(5e-3);
  CHECK(e1 / e2 > 3);
  CHECK(e1 / e2 < 5.5);
}

TEST_CASE("census on the disk, one interior point: a single minimum near the centre") {
  const auto T = disk_table();
  const KirchhoffRouth K(T, Potential::parse("1+0.3*x"));
  const auto r = K.find_critical_points(1, 0, 40, 1e-3, 3);
  REQUIRE(r.points.size() == 1);
  const auto& cp = r.points[0];
  CHECK(cp.morse_index == 0);
  CHECK(cp.nondegenerate);
  CHECK(cp.grad_norm <= 1e-3);
  CHECK(r.signed_sum == degree::ph_degree(1, 0, 1).convert_to<long>());
  // 16 pi ln V + 64 pi^2 R with R'' = 2 at the centre of the unit-area disk
  const double x = cp.config.points[0].x.x();
  CHECK(x == doctest::Approx(-16 * kPi * 0.3 / (128 * kPi * kPi)).epsilon(0.05));
  CHECK(std::abs(cp.config.points[0].x.y()) < 1e-3);
  // L2 for an interior minimum with V near 1: kappa F (kappa + Delta ln V) > 0
  CHECK(cp.cls == Classification::V_plus);
  const double F = K.F(cp.config.points[0], cp.config, 0);
  CHECK(cp.L == doctest::Approx(8 * kPi * F * (8 * kPi - 0.09 / std::pow(1 + 0.3 * x, 2))).epsilon(0.01));
}

TEST_CASE("census on the disk boundary against a brute-force scan") {
  const auto T = disk_table();
  const auto& m = T->mesh();
  const double eps = 0.3 * kA;
  // oracle: extrema of 8 pi ln(1 + eps cos theta) on a fine grid
  std::vector<std::pair<double, int>> oracle;  // angle, morse index
  const int n = 3600;
  for (int k = 0; k < n; ++k) {
    const double t0 = 2 * kPi * (k - 1) / n, t1 = 2 * kPi * k / n, t2 = 2 * kPi * (k + 1) / n;
    const double f0 = boundary_scan(t0, eps), f1 = boundary_scan(t1, eps), f2 = boundary_scan(t2, eps);
    if (f1 > f0 && f1 > f2) oracle.push_back({t1, 1});
    if (f1 < f0 && f1 < f2) oracle.push_back({t1, 0});
  }
  REQUIRE(oracle.size() == 2);

  const KirchhoffRouth K(T, Potential::parse("1+0.3*x"));
  const auto r = K.find_critical_points(0, 1, 40, 1e-3, 5);
  REQUIRE(r.points.size() == 2);
  CHECK(r.all_nondegenerate);
  CHECK(r.signed_sum == 0);
  for (const auto& cp : r.points) {
    const Vec2 p = cp.config.points[0].x;
    const double theta = std::atan2(p.y(), p.x());
    bool matched = false;
    for (const auto& [t, idx] : oracle) {
      const double d = std::abs(std::remainder(theta - t, 2 * kPi));
      if (d < 0.02) {
        matched = true;
        CHECK(cp.morse_index == idx);
        // analytic second derivative in arclength
        const double c = std::cos(t);
        const double f2 = 8 * kPi * (-eps * c / (1 + eps * c) - eps * eps * (1 - c * c) / std::pow(1 + eps * c, 2)) / (kA * kA);
        CHECK(cp.hessian_eigenvalues[0] == doctest::Approx(f2).epsilon(0.1));
      }
    }
    CHECK(matched);
    CHECK(cp.cls == Classification::V_minus);  // convex boundary, k_g > 0 dominates
  }
}

TEST_CASE("constant potential, one boundary point: every critical point is flagged degenerate") {
  const auto T = disk_table();
  const KirchhoffRouth K(T, Potential::parse("1"));
  const auto r = K.find_critical_points(0, 1, 12, 1e-3, 11);
  REQUIRE(!r.points.empty());
  CHECK_FALSE(r.all_nondegenerate);
  for (const auto& cp : r.points) {
    CHECK_FALSE(cp.nondegenerate);
    CHECK(cp.cls == Classification::degenerate);
  }
  // the gradient is flat along the whole circle
  const auto& m = T->mesh();
  for (double s : {0.1, 0.9, 2.3, 3.0}) CHECK(std::abs(K.gradient(on_boundary(m, {s}))[0]) < 0.05);
}

TEST_CASE("two boundary points on the disk: ordered census sums to zero") {
  const auto T = disk_table();
  const KirchhoffRouth K(T, Potential::parse("1+0.3*x"));
  const auto r = K.find_critical_points(0, 2, 120, 1e-3, 2);
  CHECK(r.all_nondegenerate);
  CHECK(r.signed_sum == 0);
}

TEST_CASE("L1 on the disk with constant potential is -2 k_g sum sqrt(F)") {
  const auto T = disk_table();
  const auto& m = T->mesh();
  const KirchhoffRouth K(T, Potential::parse("1"));
  const auto c = on_boundary(m, {0.3});
  double err = 0;
  const double l1 = K.L1(c, &err);
  CHECK(l1 < 0);
  CHECK(l1 == doctest::Approx(-2 / kA * std::exp(2 * kPi * kRobinBoundary)).epsilon(0.02));
  CHECK(err < 1e-3 * std::abs(l1));
  // two points: a sum of two negative terms
  CHECK(K.L1(on_boundary(m, {0.3, 2.0})) < 0);
}

TEST_CASE("L2 identity against the five-point Laplacian") {
  const auto T = disk_table();
  const KirchhoffRouth K(T, Potential::parse("1"));
  const auto c = interior({at(0.05, -0.02)});
  // five-point stencil of F converges at second order under refinement
  const double l1 = K.laplacian_F(c, 0, 2e-2), l2 = K.laplacian_F(c, 0, 1e-2), l3 = K.laplacian_F(c, 0, 5e-3);
  CHECK(std::abs(l1 - l2) / std::abs(l2 - l3) > 3);
  // V = 1 on a flat domain: L2 = kappa Delta F; the identity uses Delta H = 1
  // exactly, the stencil sees the interpolant (a few percent apart)
  double err = 0;
  const double L = K.L2(c, &err);
  CHECK(L == doctest::Approx(8 * kPi * l3).epsilon(0.08));
  CHECK(err < 1e-3 * L);
}

TEST_CASE("errors") {
  const auto T = disk_table();
  const auto& m = T->mesh();
  const KirchhoffRouth K(T, Potential::parse("1"));
  const auto ci = interior({at(0.1, 0)});
  const auto cb = on_boundary(m, {0.5});
  CHECK_THROWS_AS(K.L1(ci), std::invalid_argument);
  CHECK_THROWS_AS(K.L2(cb), std::invalid_argument);
  const auto pair = interior({at(0.1, 0), at(-0.1, 0)});
  CHECK_THROWS_AS(K.F(pair.points[1], pair, 0), DegenerateConfiguration);
  CHECK_THROWS_AS(K.value(interior({at(0.1, 0), at(0.1 + 1e-4, 0)})), DegenerateConfiguration);
  CHECK_THROWS_AS(K.find_critical_points(0, 0, 10, 1e-3, 1), std::invalid_argument);
  CHECK_THROWS_AS(K.gradient(interior({at(kA - 1e-3, 0)})), DegenerateConfiguration);
}

TEST_CASE("census is independent of the thread count") {
  const auto T = disk_table();
  const KirchhoffRouth K(T, Potential::parse("1+0.3*x"));
  const auto a = K.find_critical_points(0, 1, 16, 1e-3, 9, 1);
  const auto b = K.find_critical_points(0, 1, 16, 1e-3, 9, 4);
  REQUIRE(a.points.size() == b.points.size());
  for (size_t i = 0; i < a.points.size(); ++i) CHECK(a.points[i].value == b.points[i].value);
}

TEST_CASE("annulus, one boundary point: two critical points per loop, sum zero") {
  auto L = std::make_shared<NeumannLaplacian>(make_annulus(0.4, 96, 16));
  const auto T = std::make_shared<const GreenTable>(L, GreenTable::Options{});
  const KirchhoffRouth K(T, Potential::parse("1+0.3*x"));
  const auto r = K.find_critical_points(0, 1, 60, 1e-3, 4);
  CHECK(r.points.size() == 4);
  CHECK(r.all_nondegenerate);
  CHECK(r.signed_sum == 0);
  // the inner loop is concave seen from the domain: k_g < 0 there
  int plus = 0;
  for (const auto& cp : r.points) plus += cp.cls == Classification::V_plus;
  CHECK(plus == 2);
}
