#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "mfdeg/mesh.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <set>

using namespace mfdeg;

namespace {

constexpr double kPi = std::numbers::pi;

double gauss_bonnet(const SurfaceMesh& m) {
  double s = 0;
  for (int v = 0; v < m.num_vertices(); ++v) s += m.is_boundary(v) ? m.turning_angle[v] : m.gauss_curvature[v] * m.vertex_area[v];
  return s;
}

// Independent edge/face census straight from the triangle list.
int euler_from_lists(const SurfaceMesh& m) {
  std::set<std::pair<int, int>> e;
  for (const auto& t : m.triangles)
    for (int k = 0; k < 3; ++k) e.insert({std::min(t[k], t[(k + 1) % 3]), std::max(t[k], t[(k + 1) % 3])});
  return m.num_vertices() - static_cast<int>(e.size()) + static_cast<int>(m.triangles.size());
}

void check_invariants(const SurfaceMesh& m) {
  double s = 0;
  for (double a : m.vertex_area) s += a;
  CHECK(std::abs(s - m.total_area) <= 1e-12 * m.total_area);
  std::set<int> bverts;
  for (const auto& L : m.boundary_loops) {
    CHECK(L.verts.size() >= 3);
    for (int v : L.verts) CHECK(bverts.insert(v).second);
  }
  for (int v = 0; v < m.num_vertices(); ++v) CHECK((bverts.count(v) == 1) == m.is_boundary(v));
}

}  // namespace

TEST_CASE("disk mesh: normalisation and topology") {
  const auto m = make_disk(8);
  CHECK(m.total_area == doctest::Approx(1.0).epsilon(1e-13));
  const auto t = topology(m);
  CHECK(t.boundary_count == 1);
  CHECK(t.chi == 1);
  CHECK(t.genus == 0);
  check_invariants(m);
}

TEST_CASE("annulus and pants topology") {
  const auto a = make_annulus(0.5, 48, 8);
  const auto ta = topology(a);
  CHECK(a.boundary_loops.size() == 2);
  CHECK(ta.chi == euler_from_lists(a));
  CHECK(ta.chi == 0);
  CHECK(ta.genus == 0);
  check_invariants(a);

  const auto p = make_pants(12);
  const auto tp = topology(p);
  CHECK(tp.boundary_count == 3);
  CHECK(tp.chi == -1);
  CHECK(tp.genus == 0);
  check_invariants(p);
}

TEST_CASE("loop orientation keeps the domain on the left") {
  const auto a = make_annulus(0.5, 32, 4);
  for (const auto& L : a.boundary_loops) {
    double area2 = 0;
    for (size_t k = 0; k < L.verts.size(); ++k) {
      const Vec2& p = a.vertices[L.verts[k]];
      const Vec2& q = a.vertices[L.verts[(k + 1) % L.verts.size()]];
      area2 += p.x() * q.y() - p.y() * q.x();
    }
    // outer loop counter-clockwise, inner clockwise
    CHECK((L.length > 3.0 ? area2 > 0 : area2 < 0));
  }
}

TEST_CASE("euler characteristic survives refinement; discrete Gauss-Bonnet") {
  for (const auto& m : {make_disk(4), make_annulus(0.4, 24, 3), make_pants(12)}) {
    const int chi = topology(m).chi;
    CHECK(gauss_bonnet(m) == doctest::Approx(2 * kPi * chi).epsilon(1e-10).scale(1.0));
    const auto r = refine_uniform(m);
    CHECK(topology(r).chi == chi);
    CHECK(std::abs(gauss_bonnet(r) - 2 * kPi * chi) <= 1e-8);
    check_invariants(r);
    CHECK(r.total_area == doctest::Approx(1.0).epsilon(1e-13));
  }
}

TEST_CASE("curvature fields on flat domains") {
  const auto m = make_disk(10);
  for (int v = 0; v < m.num_vertices(); ++v)
    if (!m.is_boundary(v)) CHECK(std::abs(m.gauss_curvature[v]) < 1e-9);
  const double a = 1 / std::sqrt(kPi);
  // boundary of the unit-area disk: k_g close to 1/a
  for (int v : m.boundary_loops[0].verts) CHECK(m.geodesic_curvature[v] == doctest::Approx(1 / a).epsilon(0.02));
}

TEST_CASE("smooth boundary curve follows the circle") {
  const auto m = make_disk(10);
  double r0 = 0;
  for (int v : m.boundary_loops[0].verts) r0 += m.vertices[v].norm();
  r0 /= static_cast<double>(m.boundary_loops[0].verts.size());
  const auto& L = m.boundary_loops[0];
  double worst = 0;
  for (int k = 0; k < 400; ++k) {
    const double s = L.length * k / 400.0;
    worst = std::max(worst, std::abs(m.curve(0, s).norm() - r0));
    const Vec2 t = m.curve_tangent(0, s);
    const Vec2 x = m.curve(0, s);
    CHECK(std::abs(t.dot(x.normalized())) < 1e-3);
  }
  CHECK(worst < 1e-4 * r0);
}

TEST_CASE("interior chart is a translation") {
  const auto m = make_disk(8);
  const int v = 5;
  const auto c = build_chart(m, v, 0.1);
  CHECK(c.y[v].norm() < 1e-15);
  for (int w = 0; w < m.num_vertices(); ++w) {
    CHECK((c.y[w] - (m.vertices[w] - m.vertices[v])).norm() < 1e-14);
    CHECK(c.phi[w] == 0.0);
  }
  // nearby centers agree to first order: exact for translations
  const auto c2 = build_chart(m, m.neighbors[v][0], 0.1);
  const Vec2 shift = c.y[m.neighbors[v][0]];
  for (int w = 0; w < m.num_vertices(); ++w) CHECK((c.y[w] - c2.y[w] - shift).norm() < 1e-14);
}

TEST_CASE("boundary chart on a straight edge is a rigid motion") {
  const auto m = make_square(10);
  int v = -1;
  for (int w : m.boundary_loops[0].verts)
    if (std::abs(m.vertices[w].y()) < 1e-14 && std::abs(m.vertices[w].x() - 0.5) < 1e-14) v = w;
  REQUIRE(v >= 0);
  const auto c = build_chart(m, v, 0.2);
  CHECK(c.curvature == doctest::Approx(0.0).scale(1.0));
  for (int w : m.boundary_loops[0].verts)
    if ((m.vertices[w] - m.vertices[v]).norm() < 0.2) CHECK(std::abs(c.y[w].y()) < 1e-14);
  for (int w = 0; w < m.num_vertices(); ++w) CHECK(c.y[w].y() >= -1e-14);
}

TEST_CASE("boundary chart flattens the circle") {
  const auto m = make_disk(16);
  const int v = m.boundary_loops[0].verts[7];
  const double r = 0.1;
  const auto c = build_chart(m, v, r);
  CHECK(c.y[v].norm() < 1e-15);
  CHECK(std::abs(c.phi[v]) < 1e-15);
  CHECK(c.flatten_residual < 1e-3 * r);
  for (int w = 0; w < m.num_vertices(); ++w)
    if ((m.vertices[w] - m.vertices[v]).norm() < r) CHECK(c.y[w].y() >= -1e-3 * r);
  // radius so large that the quadratic correction cannot keep up
  CHECK_THROWS_AS(build_chart(m, v, 0.5, 1e-3), MeshError);
}

TEST_CASE("parse, format and validation errors") {
  const auto m = make_disk(3);
  const auto back = parse_mesh(format_mesh(m));
  CHECK(back.num_vertices() == m.num_vertices());
  CHECK(back.content_hash() == m.content_hash());

  // two triangles sharing an edge with the same direction
  CHECK_THROWS_AS(parse_mesh("4 2 1\n0 0\n1 0\n0 1\n1 1\n0 1 2\n1 2 3\n0 1 3 2\n"), MeshError);
  // three triangles on one edge
  CHECK_THROWS_AS(parse_mesh("5 3 1\n0 0\n1 0\n0 1\n0 -1\n1 1\n0 1 2\n1 0 3\n0 1 4\n0 1 2\n"), MeshError);
  // closed surface (tetrahedron boundary) is rejected: planar coordinates with no boundary
  CHECK_THROWS_AS(parse_mesh("4 4 0\n0 0\n1 0\n0 1\n0.3 0.3\n0 1 2\n0 3 1\n1 3 2\n2 3 0\n"), MeshError);
  CHECK_THROWS_AS(parse_mesh("3 1 1\n0 0\n1 0\n"), MeshError);
  CHECK_THROWS_AS(parse_mesh("3 1 1\n0 0\n1 0\n0 1\n0 1 2\n0 1\n"), MeshError);
  CHECK_THROWS_AS(load_mesh("/nonexistent/file.msh"), MeshError);
  // a valid single triangle
  const auto tri = parse_mesh("3 1 1\n0 0\n1 0\n0 1\n0 1 2\n0 1 2\n");
  CHECK(tri.total_area == doctest::Approx(1.0));
  CHECK(topology(tri).chi == 1);
}

TEST_CASE("file round trip") {
  const auto m = make_annulus(0.5, 20, 3);
  const auto path = (std::filesystem::temp_directory_path() / "mfdeg_mesh_rt.msh").string();
  save_mesh(m, path);
  const auto back = load_mesh(path);
  CHECK(back.boundary_loops.size() == 2);
  CHECK(back.total_area == doctest::Approx(1.0).epsilon(1e-13));
  std::filesystem::remove(path);
}

TEST_CASE("local refinement toward a point") {
  const auto m = make_disk(6);
  const Vec2 focus = m.vertices[m.boundary_loops[0].verts[0]];
  const double h_min = 2e-3;
  const auto r = refine_toward(m, focus, h_min, 0.3, 0.3);
  CHECK(topology(r).chi == 1);
  check_invariants(r);
  double shortest_near = 1e9;
  for (const auto& t : r.triangles)
    for (int k = 0; k < 3; ++k) {
      const Vec2 a = r.vertices[t[k]], b = r.vertices[t[(k + 1) % 3]];
      if ((a - focus).norm() < 0.01) shortest_near = std::min(shortest_near, (a - b).norm());
    }
  CHECK(shortest_near <= h_min * 1.01);
  // boundary stays on the circle
  double rmax = 0, rmin = 1e9;
  for (int v : r.boundary_loops[0].verts) {
    rmax = std::max(rmax, r.vertices[v].norm());
    rmin = std::min(rmin, r.vertices[v].norm());
  }
  CHECK(rmax - rmin < 2e-3 * rmax);
}

TEST_CASE("snapping inserts a vertex") {
  const auto m = make_disk(6);
  SurfacePoint p;
  p.x = Vec2(0.0731, -0.0417);
  int v = -1;
  const auto s = snap_point(m, p, v);
  CHECK(v == m.num_vertices());
  CHECK((s.vertices[v] - p.x).norm() < 1e-15);
  CHECK(s.total_area == doctest::Approx(1.0).epsilon(1e-13));
  CHECK(topology(s).chi == 1);
  int w = -1;
  const auto s2 = snap_point(s, p, w);
  CHECK(w == v);
  CHECK(s2.num_vertices() == s.num_vertices());

  const auto bp = m.boundary_point(0, 0.1234);
  int vb = -1;
  const auto sb = snap_point(m, bp, vb);
  CHECK(sb.is_boundary(vb));
  CHECK(sb.boundary_loops[0].verts.size() == m.boundary_loops[0].verts.size() + 1);
  CHECK(topology(sb).chi == 1);
}
