#pragma once

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace mfdeg {

using Vec2 = Eigen::Vector2d;

struct MeshError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Ordered boundary cycle with the domain on its left.
struct BoundaryLoop {
  std::vector<int> verts;
  std::vector<double> s;  // polygonal arclength at each vertex, s[0] = 0
  std::vector<Vec2> tangent;  // unit tangent estimate at each vertex
  std::vector<bool> corner;   // turning angle too large for a smooth tangent
  double length = 0;
};

// A location on the surface. Boundary points carry their loop and arclength
// parameter; x is always filled in.
struct SurfacePoint {
  Vec2 x = Vec2::Zero();
  int loop = -1;
  double s = 0;
  bool on_boundary() const { return loop >= 0; }
};

struct TopologyReport {
  int chi = 0;
  int genus = 0;
  int boundary_count = 0;
  int V = 0, E = 0, F = 0;
};

class UniformGrid {
 public:
  void build(const std::vector<Vec2>& lo, const std::vector<Vec2>& hi, double cell);
  void query(const Vec2& lo, const Vec2& hi, std::vector<int>& out) const;
  bool empty() const { return cells_.empty(); }

 private:
  Vec2 origin_ = Vec2::Zero();
  double cell_ = 1;
  int nx_ = 0, ny_ = 0;
  std::vector<std::vector<int>> cells_;
};

struct SurfaceMesh {
  std::vector<Vec2> vertices;
  std::vector<std::array<int, 3>> triangles;
  std::vector<BoundaryLoop> boundary_loops;

  std::vector<double> vertex_area;
  double total_area = 0;
  std::vector<double> gauss_curvature;     // angle defect / vertex area, interior vertices
  std::vector<double> geodesic_curvature;  // turning angle / half edge length, boundary vertices
  std::vector<double> turning_angle;

  std::vector<int> loop_of;      // -1 for interior vertices
  std::vector<int> loop_index;   // position inside its loop
  std::vector<std::vector<int>> neighbors;
  std::vector<std::vector<int>> vertex_triangles;
  double mean_edge = 0;
  double diameter = 0;
  double scale_applied = 1;  // factor used to reach unit area

  int num_vertices() const { return static_cast<int>(vertices.size()); }
  bool is_boundary(int v) const { return loop_of[v] >= 0; }

  SurfacePoint vertex_point(int v) const;
  SurfacePoint boundary_point(int loop, double s) const;
  // Point of the smooth boundary curve (cubic Hermite through the loop).
  Vec2 curve(int loop, double s) const;
  Vec2 curve_tangent(int loop, double s) const;
  double wrap(int loop, double s) const;
  // Signed periodic parameter difference b - a in (-L/2, L/2].
  double param_diff(int loop, double a, double b) const;
  // Piecewise-linear interpolation of a per-vertex quantity along a loop.
  double loop_interp(int loop, double s, const std::vector<double>& field) const;

  // Triangle containing p (or the closest one within tol) and barycentrics.
  bool locate(const Vec2& p, int& tri, Eigen::Vector3d& bary, double tol = 1e-10) const;
  int nearest_vertex(const Vec2& p) const;
  void vertices_within(const Vec2& p, double r, std::vector<int>& out) const;
  // Vertices reachable in at most k edge steps (excluding v itself).
  std::vector<int> rings(int v, int k) const;
  double boundary_distance(const Vec2& p) const;
  std::string content_hash() const;

  UniformGrid vgrid, tgrid;
};

// Validates topology and orientation, builds loops, curvature and lookup
// structures; optionally rescales to unit area.
SurfaceMesh finalize_mesh(std::vector<Vec2> vertices, std::vector<std::array<int, 3>> triangles,
                          const std::vector<std::vector<int>>& loops_hint, bool normalize = true);

SurfaceMesh load_mesh(const std::string& path);
void save_mesh(const SurfaceMesh& mesh, const std::string& path);
SurfaceMesh parse_mesh(const std::string& text);
std::string format_mesh(const SurfaceMesh& mesh);

TopologyReport topology(const SurfaceMesh& mesh);

struct Chart {
  SurfacePoint center;
  int center_vertex = -1;
  bool boundary = false;
  double radius = 0;
  Vec2 origin = Vec2::Zero();
  Vec2 t1 = Vec2(1, 0), t2 = Vec2(0, 1);  // tangent and inward normal for boundary charts
  double curvature = 0;                    // k in w = z - i (k/2) z^2
  std::vector<Vec2> y;                     // per-vertex chart coordinates
  std::vector<double> phi;                 // per-vertex conformal factor, metric = e^phi |dy|^2
  double flatten_residual = 0;             // max |y2| over boundary vertices inside 2r

  Vec2 map(const Vec2& x) const;
  double conformal_factor(const Vec2& x) const;
};

Chart build_chart(const SurfaceMesh& mesh, const SurfacePoint& xi, double radius, double flatten_tol = 1e-2);
// Frame only (origin, axes, curvature); no per-vertex arrays, no checks.
Chart chart_frame(const SurfaceMesh& mesh, const SurfacePoint& xi);
Chart build_chart(const SurfaceMesh& mesh, int vertex, double radius, double flatten_tol = 1e-2);
// Largest radius admissible around xi given other designated points.
double default_chart_radius(const SurfaceMesh& mesh, const SurfacePoint& xi, const std::vector<SurfacePoint>& others = {});

// --- generators and refinement (mesh_gen.cpp) ---
SurfaceMesh make_disk(int rings, int outer_rings = 3);
SurfaceMesh make_annulus(double inner_ratio, int n_theta, int n_r);
SurfaceMesh make_square(int n);
// Unit square grid with rectangular holes given as cell ranges [i0,i1)x[j0,j1).
SurfaceMesh make_holed_square(int n, const std::vector<std::array<int, 4>>& holes);
SurfaceMesh make_pants(int n);

SurfaceMesh refine_uniform(const SurfaceMesh& mesh);
// Longest-edge bisection until every triangle meets size(x) at its closest
// vertex to the focus; boundary midpoints follow the smooth boundary curve.
SurfaceMesh refine_local(const SurfaceMesh& mesh, const std::function<double(const Vec2&)>& size, int max_passes = 60);
SurfaceMesh refine_toward(const SurfaceMesh& mesh, const Vec2& focus, double h_min, double grade, double radius);
// Insert p as a vertex (edge split or triangle split plus local Delaunay
// flips). Returns the new mesh; vertex receives the id of p.
SurfaceMesh snap_point(const SurfaceMesh& mesh, const SurfacePoint& p, int& vertex, double tol = 1e-9);

}  // namespace mfdeg
