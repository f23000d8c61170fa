#include "mfdeg/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <numbers>
#include <queue>
#include <set>
#include <sstream>
#include <unordered_map>

namespace mfdeg {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kCornerAngle = 0.5;  // radians of turning that break the smooth tangent

uint64_t edge_key(int a, int b) {
  const auto lo = static_cast<uint64_t>(std::min(a, b)), hi = static_cast<uint64_t>(std::max(a, b));
  return (lo << 32) | hi;
}

double cross(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

double signed_area(const Vec2& a, const Vec2& b, const Vec2& c) { return 0.5 * cross(b - a, c - a); }

double corner_angle(const Vec2& at, const Vec2& b, const Vec2& c) {
  const Vec2 u = b - at, v = c - at;
  return std::atan2(std::abs(cross(u, v)), u.dot(v));
}

Vec2 rot90(const Vec2& v) { return {-v.y(), v.x()}; }

}  // namespace

// ---------------------------------------------------------------- grid

void UniformGrid::build(const std::vector<Vec2>& lo, const std::vector<Vec2>& hi, double cell) {
  cells_.clear();
  if (lo.empty()) return;
  Vec2 bmin = lo[0], bmax = hi[0];
  for (size_t i = 0; i < lo.size(); ++i) {
    bmin = bmin.cwiseMin(lo[i]);
    bmax = bmax.cwiseMax(hi[i]);
  }
  cell_ = std::max(cell, 1e-12);
  origin_ = bmin;
  nx_ = std::max(1, static_cast<int>(std::ceil((bmax.x() - bmin.x()) / cell_)) + 1);
  ny_ = std::max(1, static_cast<int>(std::ceil((bmax.y() - bmin.y()) / cell_)) + 1);
  // keep memory bounded on very graded meshes
  while (static_cast<long>(nx_) * ny_ > 4000000) {
    cell_ *= 2;
    nx_ = std::max(1, static_cast<int>(std::ceil((bmax.x() - bmin.x()) / cell_)) + 1);
    ny_ = std::max(1, static_cast<int>(std::ceil((bmax.y() - bmin.y()) / cell_)) + 1);
  }
  cells_.assign(static_cast<size_t>(nx_) * ny_, {});
  for (size_t i = 0; i < lo.size(); ++i) {
    const int i0 = std::clamp(static_cast<int>((lo[i].x() - origin_.x()) / cell_), 0, nx_ - 1);
    const int i1 = std::clamp(static_cast<int>((hi[i].x() - origin_.x()) / cell_), 0, nx_ - 1);
    const int j0 = std::clamp(static_cast<int>((lo[i].y() - origin_.y()) / cell_), 0, ny_ - 1);
    const int j1 = std::clamp(static_cast<int>((hi[i].y() - origin_.y()) / cell_), 0, ny_ - 1);
    for (int a = i0; a <= i1; ++a)
      for (int b = j0; b <= j1; ++b) cells_[static_cast<size_t>(b) * nx_ + a].push_back(static_cast<int>(i));
  }
}

void UniformGrid::query(const Vec2& lo, const Vec2& hi, std::vector<int>& out) const {
  out.clear();
  if (cells_.empty()) return;
  const int i0 = std::clamp(static_cast<int>(std::floor((lo.x() - origin_.x()) / cell_)), 0, nx_ - 1);
  const int i1 = std::clamp(static_cast<int>(std::floor((hi.x() - origin_.x()) / cell_)), 0, nx_ - 1);
  const int j0 = std::clamp(static_cast<int>(std::floor((lo.y() - origin_.y()) / cell_)), 0, ny_ - 1);
  const int j1 = std::clamp(static_cast<int>(std::floor((hi.y() - origin_.y()) / cell_)), 0, ny_ - 1);
  for (int a = i0; a <= i1; ++a)
    for (int b = j0; b <= j1; ++b) {
      const auto& c = cells_[static_cast<size_t>(b) * nx_ + a];
      out.insert(out.end(), c.begin(), c.end());
    }
  if (i1 > i0 || j1 > j0) {
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
  }
}

// ---------------------------------------------------------------- finalize

SurfaceMesh finalize_mesh(std::vector<Vec2> vertices, std::vector<std::array<int, 3>> triangles,
                          const std::vector<std::vector<int>>& loops_hint, bool normalize) {
  const int nv = static_cast<int>(vertices.size());
  if (nv < 3 || triangles.empty()) throw MeshError("mesh has no triangles");
  std::vector<int> used(nv, 0);
  for (const auto& t : triangles) {
    for (int k = 0; k < 3; ++k) {
      if (t[k] < 0 || t[k] >= nv) throw MeshError("triangle index out of range");
      used[t[k]] = 1;
    }
    if (t[0] == t[1] || t[1] == t[2] || t[0] == t[2]) throw MeshError("triangle with repeated vertex");
  }
  for (int v = 0; v < nv; ++v)
    if (!used[v]) throw MeshError("vertex " + std::to_string(v) + " not referenced by any triangle");

  // orientation fix before the combinatorial checks so loops come out right
  double area_sum = 0;
  for (const auto& t : triangles) area_sum += signed_area(vertices[t[0]], vertices[t[1]], vertices[t[2]]);
  if (area_sum < 0)
    for (auto& t : triangles) std::swap(t[1], t[2]);

  struct EdgeUse {
    int count = 0;
    int a = -1, b = -1;  // direction in first triangle
    bool opposite = true;
  };
  std::unordered_map<uint64_t, EdgeUse> edges;
  edges.reserve(triangles.size() * 2);
  for (const auto& t : triangles)
    for (int k = 0; k < 3; ++k) {
      const int a = t[k], b = t[(k + 1) % 3];
      auto& e = edges[edge_key(a, b)];
      if (e.count == 0) {
        e.a = a;
        e.b = b;
      } else if (e.a == a) {
        e.opposite = false;
      }
      ++e.count;
    }
  std::vector<int> next(nv, -1), prev(nv, -1);
  for (const auto& [key, e] : edges) {
    if (e.count > 2) throw MeshError("non-manifold edge (" + std::to_string(e.a) + "," + std::to_string(e.b) + ")");
    if (e.count == 2 && !e.opposite) throw MeshError("inconsistent orientation across edge (" + std::to_string(e.a) + "," + std::to_string(e.b) + ")");
    if (e.count == 1) {
      if (next[e.a] != -1 || prev[e.b] != -1) throw MeshError("non-manifold boundary vertex");
      next[e.a] = e.b;
      prev[e.b] = e.a;
    }
  }
  for (int v = 0; v < nv; ++v)
    if ((next[v] == -1) != (prev[v] == -1)) throw MeshError("broken boundary at vertex " + std::to_string(v));

  for (const auto& t : triangles) {
    const double a = signed_area(vertices[t[0]], vertices[t[1]], vertices[t[2]]);
    if (a < 0) throw MeshError("flipped triangle: inconsistent planar orientation");
  }

  std::vector<std::vector<int>> loops;
  std::vector<int> seen(nv, 0);
  for (int v = 0; v < nv; ++v) {
    if (next[v] == -1 || seen[v]) continue;
    std::vector<int> loop;
    int w = v;
    while (!seen[w]) {
      seen[w] = 1;
      loop.push_back(w);
      w = next[w];
    }
    if (w != v) throw MeshError("boundary edges do not close into a loop");
    loops.push_back(std::move(loop));
  }
  if (loops.empty()) throw MeshError("closed surface: empty boundary is not supported");
  for (const auto& l : loops)
    if (l.size() < 3) throw MeshError("boundary loop shorter than 3 vertices");

  if (!loops_hint.empty()) {
    std::vector<int> owner(nv, -1);
    for (size_t i = 0; i < loops.size(); ++i)
      for (int v : loops[i]) owner[v] = static_cast<int>(i);
    std::vector<std::vector<int>> ordered;
    std::vector<int> taken(loops.size(), 0);
    size_t hinted = 0;
    for (const auto& h : loops_hint) {
      if (h.size() < 3) throw MeshError("boundary loop in file shorter than 3 vertices");
      for (int v : h)
        if (v < 0 || v >= nv) throw MeshError("boundary loop index out of range");
      const int li = owner[h[0]];
      if (li < 0) throw MeshError("boundary loop lists interior vertex " + std::to_string(h[0]));
      if (taken[li]) throw MeshError("boundary loops overlap");
      std::set<int> a(h.begin(), h.end()), b(loops[li].begin(), loops[li].end());
      if (a != b || a.size() != h.size()) throw MeshError("boundary loop does not match mesh boundary");
      const auto& L = loops[li];
      for (size_t k = 0; k < h.size(); ++k) {
        const int u = h[k], w = h[(k + 1) % h.size()];
        if (next[u] != w && next[w] != u) throw MeshError("boundary loop is not a boundary cycle");
      }
      taken[li] = 1;
      hinted += h.size();
      // rotate the oriented loop to start at the hint's first vertex
      auto it = std::find(L.begin(), L.end(), h[0]);
      std::vector<int> r(it, L.end());
      r.insert(r.end(), L.begin(), it);
      ordered.push_back(std::move(r));
    }
    size_t nb = 0;
    for (const auto& l : loops) nb += l.size();
    if (hinted != nb) throw MeshError("boundary loops do not cover the boundary");
    loops = std::move(ordered);
  }

  SurfaceMesh m;
  double area = 0;
  for (const auto& t : triangles) {
    const double a = signed_area(vertices[t[0]], vertices[t[1]], vertices[t[2]]);
    area += a;
  }
  double scale = 1;
  if (normalize) {
    scale = 1.0 / std::sqrt(area);
    for (auto& v : vertices) v *= scale;
  }
  m.scale_applied = scale;
  m.vertices = std::move(vertices);
  m.triangles = std::move(triangles);

  m.vertex_area.assign(nv, 0.0);
  std::vector<double> angle_sum(nv, 0.0);
  m.vertex_triangles.assign(nv, {});
  m.neighbors.assign(nv, {});
  for (size_t ti = 0; ti < m.triangles.size(); ++ti) {
    const auto& t = m.triangles[ti];
    const Vec2 &a = m.vertices[t[0]], &b = m.vertices[t[1]], &c = m.vertices[t[2]];
    const double A = signed_area(a, b, c);
    if (!(A > 1e-300) || A < 1e-14 * std::max(1.0, (b - a).squaredNorm()))
      throw MeshError("degenerate triangle " + std::to_string(ti));
    for (int k = 0; k < 3; ++k) {
      m.vertex_area[t[k]] += A / 3.0;
      angle_sum[t[k]] += corner_angle(m.vertices[t[k]], m.vertices[t[(k + 1) % 3]], m.vertices[t[(k + 2) % 3]]);
      m.vertex_triangles[t[k]].push_back(static_cast<int>(ti));
      m.neighbors[t[k]].push_back(t[(k + 1) % 3]);
      m.neighbors[t[k]].push_back(t[(k + 2) % 3]);
    }
  }
  for (auto& nb : m.neighbors) {
    std::sort(nb.begin(), nb.end());
    nb.erase(std::unique(nb.begin(), nb.end()), nb.end());
  }
  m.total_area = 0;
  for (double a : m.vertex_area) m.total_area += a;

  m.loop_of.assign(nv, -1);
  m.loop_index.assign(nv, -1);
  m.gauss_curvature.assign(nv, 0.0);
  m.geodesic_curvature.assign(nv, 0.0);
  m.turning_angle.assign(nv, 0.0);
  for (size_t li = 0; li < loops.size(); ++li) {
    BoundaryLoop L;
    L.verts = loops[li];
    const size_t n = L.verts.size();
    L.s.resize(n);
    double acc = 0;
    for (size_t k = 0; k < n; ++k) {
      L.s[k] = acc;
      acc += (m.vertices[L.verts[(k + 1) % n]] - m.vertices[L.verts[k]]).norm();
      m.loop_of[L.verts[k]] = static_cast<int>(li);
      m.loop_index[L.verts[k]] = static_cast<int>(k);
    }
    L.length = acc;
    L.tangent.resize(n);
    L.corner.resize(n);
    for (size_t k = 0; k < n; ++k) {
      const int v = L.verts[k];
      const Vec2& p0 = m.vertices[L.verts[(k + n - 1) % n]];
      const Vec2& p1 = m.vertices[v];
      const Vec2& p2 = m.vertices[L.verts[(k + 1) % n]];
      const double d1 = (p1 - p0).norm(), d2 = (p2 - p1).norm();
      // derivative of the parabola through the three points, at the middle one
      Vec2 d = -d2 / (d1 * (d1 + d2)) * p0 + (d2 - d1) / (d1 * d2) * p1 + d1 / (d2 * (d1 + d2)) * p2;
      L.tangent[k] = d.normalized();
      const double turn = kPi - angle_sum[v];
      m.turning_angle[v] = turn;
      m.geodesic_curvature[v] = turn / (0.5 * (d1 + d2));
      L.corner[k] = std::abs(turn) > kCornerAngle;
    }
    m.boundary_loops.push_back(std::move(L));
  }
  for (int v = 0; v < nv; ++v)
    if (m.loop_of[v] < 0) m.gauss_curvature[v] = (2 * kPi - angle_sum[v]) / m.vertex_area[v];

  double el = 0;
  long ne = 0;
  for (int v = 0; v < nv; ++v)
    for (int w : m.neighbors[v])
      if (w > v) {
        el += (m.vertices[w] - m.vertices[v]).norm();
        ++ne;
      }
  m.mean_edge = el / static_cast<double>(ne);

  std::vector<Vec2> bpts;
  for (const auto& L : m.boundary_loops)
    for (int v : L.verts) bpts.push_back(m.vertices[v]);
  double diam = 0;
  for (size_t i = 0; i < bpts.size(); ++i)
    for (size_t j = i + 1; j < bpts.size(); ++j) diam = std::max(diam, (bpts[i] - bpts[j]).squaredNorm());
  m.diameter = std::sqrt(diam);

  m.vgrid.build(m.vertices, m.vertices, 2 * m.mean_edge);
  std::vector<Vec2> lo, hi;
  lo.reserve(m.triangles.size());
  hi.reserve(m.triangles.size());
  for (const auto& t : m.triangles) {
    lo.push_back(m.vertices[t[0]].cwiseMin(m.vertices[t[1]]).cwiseMin(m.vertices[t[2]]));
    hi.push_back(m.vertices[t[0]].cwiseMax(m.vertices[t[1]]).cwiseMax(m.vertices[t[2]]));
  }
  m.tgrid.build(lo, hi, 2 * m.mean_edge);
  return m;
}

// ---------------------------------------------------------------- queries

SurfacePoint SurfaceMesh::vertex_point(int v) const {
  SurfacePoint p;
  p.x = vertices.at(v);
  if (loop_of[v] >= 0) {
    p.loop = loop_of[v];
    p.s = boundary_loops[p.loop].s[loop_index[v]];
  }
  return p;
}

SurfacePoint SurfaceMesh::boundary_point(int loop, double s) const {
  if (loop < 0 || loop >= static_cast<int>(boundary_loops.size())) throw MeshError("no boundary loop " + std::to_string(loop));
  SurfacePoint p;
  p.loop = loop;
  p.s = wrap(loop, s);
  p.x = curve(loop, p.s);
  return p;
}

double SurfaceMesh::wrap(int loop, double s) const {
  const double L = boundary_loops[loop].length;
  s = std::fmod(s, L);
  if (s < 0) s += L;
  if (s >= L) s -= L;
  return s;
}

double SurfaceMesh::param_diff(int loop, double a, double b) const {
  const double L = boundary_loops[loop].length;
  double d = std::fmod(b - a, L);
  if (d > 0.5 * L) d -= L;
  if (d <= -0.5 * L) d += L;
  return d;
}

namespace {

struct Segment {
  int k0, k1;
  double u, len;
};

Segment find_segment(const BoundaryLoop& L, double s) {
  const size_t n = L.verts.size();
  auto it = std::upper_bound(L.s.begin(), L.s.end(), s);
  size_t k = (it == L.s.begin()) ? 0 : static_cast<size_t>(it - L.s.begin()) - 1;
  const size_t k1 = (k + 1) % n;
  const double len = (k1 == 0 ? L.length : L.s[k1]) - L.s[k];
  return {static_cast<int>(k), static_cast<int>(k1), std::clamp((s - L.s[k]) / len, 0.0, 1.0), len};
}

void segment_tangents(const SurfaceMesh& m, const BoundaryLoop& L, const Segment& g, Vec2& m0, Vec2& m1) {
  const Vec2 chord = (m.vertices[L.verts[g.k1]] - m.vertices[L.verts[g.k0]]).normalized();
  m0 = L.corner[g.k0] ? chord : L.tangent[g.k0];
  m1 = L.corner[g.k1] ? chord : L.tangent[g.k1];
}

}  // namespace

Vec2 SurfaceMesh::curve(int loop, double s) const {
  const auto& L = boundary_loops[loop];
  s = wrap(loop, s);
  const Segment g = find_segment(L, s);
  Vec2 m0, m1;
  segment_tangents(*this, L, g, m0, m1);
  const double u = g.u, u2 = u * u, u3 = u2 * u;
  const Vec2& p0 = vertices[L.verts[g.k0]];
  const Vec2& p1 = vertices[L.verts[g.k1]];
  return (2 * u3 - 3 * u2 + 1) * p0 + (u3 - 2 * u2 + u) * g.len * m0 + (-2 * u3 + 3 * u2) * p1 + (u3 - u2) * g.len * m1;
}

Vec2 SurfaceMesh::curve_tangent(int loop, double s) const {
  const auto& L = boundary_loops[loop];
  s = wrap(loop, s);
  const Segment g = find_segment(L, s);
  Vec2 m0, m1;
  segment_tangents(*this, L, g, m0, m1);
  const double u = g.u, u2 = u * u;
  const Vec2& p0 = vertices[L.verts[g.k0]];
  const Vec2& p1 = vertices[L.verts[g.k1]];
  const Vec2 d = ((6 * u2 - 6 * u) * p0 + (-6 * u2 + 6 * u) * p1) / g.len + (3 * u2 - 4 * u + 1) * m0 + (3 * u2 - 2 * u) * m1;
  return d.normalized();
}

double SurfaceMesh::loop_interp(int loop, double s, const std::vector<double>& field) const {
  const auto& L = boundary_loops[loop];
  const Segment g = find_segment(L, wrap(loop, s));
  return (1 - g.u) * field[L.verts[g.k0]] + g.u * field[L.verts[g.k1]];
}

bool SurfaceMesh::locate(const Vec2& p, int& tri, Eigen::Vector3d& bary, double tol) const {
  std::vector<int> cand;
  double pad = mean_edge;
  for (int attempt = 0; attempt < 6; ++attempt) {
    tgrid.query(p - Vec2(pad, pad), p + Vec2(pad, pad), cand);
    if (!cand.empty()) break;
    pad *= 2;
  }
  double best = -std::numeric_limits<double>::infinity();
  tri = -1;
  for (int ti : cand) {
    const auto& t = triangles[ti];
    const Vec2 &a = vertices[t[0]], &b = vertices[t[1]], &c = vertices[t[2]];
    const double A = signed_area(a, b, c);
    Eigen::Vector3d l(signed_area(p, b, c) / A, signed_area(a, p, c) / A, signed_area(a, b, p) / A);
    const double mn = l.minCoeff();
    if (mn > best) {
      best = mn;
      tri = ti;
      bary = l;
    }
  }
  return tri >= 0 && best >= -tol;
}

int SurfaceMesh::nearest_vertex(const Vec2& p) const {
  std::vector<int> cand;
  double r = 2 * mean_edge;
  for (int attempt = 0; attempt < 20; ++attempt) {
    vertices_within(p, r, cand);
    if (!cand.empty()) break;
    r *= 2;
  }
  if (cand.empty()) {
    cand.resize(vertices.size());
    for (size_t i = 0; i < vertices.size(); ++i) cand[i] = static_cast<int>(i);
  }
  int best = -1;
  double bd = std::numeric_limits<double>::infinity();
  for (int v : cand) {
    const double d = (vertices[v] - p).squaredNorm();
    if (d < bd) {
      bd = d;
      best = v;
    }
  }
  return best;
}

void SurfaceMesh::vertices_within(const Vec2& p, double r, std::vector<int>& out) const {
  std::vector<int> cand;
  vgrid.query(p - Vec2(r, r), p + Vec2(r, r), cand);
  out.clear();
  const double r2 = r * r;
  for (int v : cand)
    if ((vertices[v] - p).squaredNorm() <= r2) out.push_back(v);
}

std::vector<int> SurfaceMesh::rings(int v, int k) const {
  std::vector<int> depth(vertices.size(), -1);
  std::vector<int> out;
  std::queue<int> q;
  depth[v] = 0;
  q.push(v);
  while (!q.empty()) {
    const int a = q.front();
    q.pop();
    if (depth[a] == k) continue;
    for (int b : neighbors[a])
      if (depth[b] < 0) {
        depth[b] = depth[a] + 1;
        out.push_back(b);
        q.push(b);
      }
  }
  return out;
}

double SurfaceMesh::boundary_distance(const Vec2& p) const {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& L : boundary_loops) {
    const size_t n = L.verts.size();
    for (size_t k = 0; k < n; ++k) {
      const Vec2& a = vertices[L.verts[k]];
      const Vec2& b = vertices[L.verts[(k + 1) % n]];
      const Vec2 ab = b - a;
      const double t = std::clamp((p - a).dot(ab) / ab.squaredNorm(), 0.0, 1.0);
      best = std::min(best, (a + t * ab - p).norm());
    }
  }
  return best;
}

std::string SurfaceMesh::content_hash() const {
  uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](const void* data, size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < n; ++i) {
      h ^= p[i];
      h *= 1099511628211ULL;
    }
  };
  for (const auto& v : vertices) mix(v.data(), 2 * sizeof(double));
  for (const auto& t : triangles) mix(t.data(), 3 * sizeof(int));
  for (const auto& L : boundary_loops) mix(L.verts.data(), L.verts.size() * sizeof(int));
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

// ---------------------------------------------------------------- io

SurfaceMesh parse_mesh(const std::string& text) {
  std::istringstream in(text);
  in.imbue(std::locale::classic());
  std::string line;
  auto next_line = [&](const char* what) {
    while (std::getline(in, line)) {
      const auto pos = line.find_first_not_of(" \t\r");
      if (pos != std::string::npos && line[pos] != '#') return;
    }
    throw MeshError(std::string("unexpected end of mesh file while reading ") + what);
  };
  next_line("header");
  long V = -1, F = -1, B = -1;
  {
    std::istringstream h(line);
    if (!(h >> V >> F >> B) || V < 3 || F < 1 || B < 0) throw MeshError("bad header, expected 'V F B'");
  }
  std::vector<Vec2> verts(V);
  for (long i = 0; i < V; ++i) {
    next_line("vertices");
    std::istringstream l(line);
    double x, y, z = 0;
    if (!(l >> x >> y)) throw MeshError("bad vertex line " + std::to_string(i));
    if (l >> z && std::abs(z) > 1e-12) throw MeshError("non-planar vertex: only flat planar meshes are supported");
    verts[i] = Vec2(x, y);
  }
  std::vector<std::array<int, 3>> tris(F);
  for (long i = 0; i < F; ++i) {
    next_line("triangles");
    std::istringstream l(line);
    if (!(l >> tris[i][0] >> tris[i][1] >> tris[i][2])) throw MeshError("bad triangle line " + std::to_string(i));
  }
  std::vector<std::vector<int>> loops(B);
  for (long i = 0; i < B; ++i) {
    next_line("boundary loops");
    std::istringstream l(line);
    int v;
    while (l >> v) loops[i].push_back(v);
  }
  if (B == 0) throw MeshError("closed surface: empty boundary is not supported");
  return finalize_mesh(std::move(verts), std::move(tris), loops, true);
}

SurfaceMesh load_mesh(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw MeshError("cannot open mesh file '" + path + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_mesh(ss.str());
}

std::string format_mesh(const SurfaceMesh& mesh) {
  std::ostringstream os;
  os.imbue(std::locale::classic());
  os << std::setprecision(17);
  os << mesh.vertices.size() << ' ' << mesh.triangles.size() << ' ' << mesh.boundary_loops.size() << '\n';
  for (const auto& v : mesh.vertices) os << v.x() << ' ' << v.y() << '\n';
  for (const auto& t : mesh.triangles) os << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
  for (const auto& L : mesh.boundary_loops) {
    for (size_t k = 0; k < L.verts.size(); ++k) os << (k ? " " : "") << L.verts[k];
    os << '\n';
  }
  return os.str();
}

void save_mesh(const SurfaceMesh& mesh, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw MeshError("cannot write mesh file '" + path + "'");
  f << format_mesh(mesh);
}

TopologyReport topology(const SurfaceMesh& mesh) {
  TopologyReport r;
  std::set<uint64_t> edges;
  for (const auto& t : mesh.triangles)
    for (int k = 0; k < 3; ++k) edges.insert(edge_key(t[k], t[(k + 1) % 3]));
  r.V = mesh.num_vertices();
  r.E = static_cast<int>(edges.size());
  r.F = static_cast<int>(mesh.triangles.size());
  r.chi = r.V - r.E + r.F;
  r.boundary_count = static_cast<int>(mesh.boundary_loops.size());
  const int twice_g = 2 - r.chi - r.boundary_count;
  if (twice_g < 0 || twice_g % 2) throw MeshError("inconsistent topology: genus is not a non-negative integer");
  r.genus = twice_g / 2;
  return r;
}

// ---------------------------------------------------------------- charts

Vec2 Chart::map(const Vec2& x) const {
  const Vec2 d = x - origin;
  const std::complex<double> z(d.dot(t1), d.dot(t2));
  if (!boundary) return {z.real(), z.imag()};
  const std::complex<double> w = z - std::complex<double>(0, 0.5 * curvature) * z * z;
  return {w.real(), w.imag()};
}

double Chart::conformal_factor(const Vec2& x) const {
  if (!boundary) return 0.0;
  const Vec2 d = x - origin;
  const std::complex<double> z(d.dot(t1), d.dot(t2));
  return -2.0 * std::log(std::abs(1.0 - std::complex<double>(0, curvature) * z));
}

Chart chart_frame(const SurfaceMesh& mesh, const SurfacePoint& xi) {
  Chart c;
  c.center = xi;
  c.boundary = xi.on_boundary();
  c.origin = xi.x;
  if (c.boundary) {
    if (xi.loop >= static_cast<int>(mesh.boundary_loops.size())) throw MeshError("chart center on unknown loop");
    c.t1 = mesh.curve_tangent(xi.loop, xi.s);
    c.t2 = rot90(c.t1);
    c.curvature = mesh.loop_interp(xi.loop, xi.s, mesh.geodesic_curvature);
  }
  return c;
}

Chart build_chart(const SurfaceMesh& mesh, const SurfacePoint& xi, double radius, double flatten_tol) {
  if (!(radius > 0)) throw MeshError("chart radius must be positive");
  Chart c = chart_frame(mesh, xi);
  c.radius = radius;
  if (!c.boundary) {
    int tri;
    Eigen::Vector3d bary;
    if (!mesh.locate(xi.x, tri, bary, 1e-9)) throw MeshError("chart center is not on the mesh");
    if (radius > mesh.boundary_distance(xi.x) + 1e-12) throw MeshError("chart radius exceeds distance to the boundary");
  }
  const int nv = mesh.num_vertices();
  c.y.resize(nv);
  c.phi.resize(nv);
  for (int v = 0; v < nv; ++v) {
    c.y[v] = c.map(mesh.vertices[v]);
    c.phi[v] = c.conformal_factor(mesh.vertices[v]);
  }
  if (c.boundary) {
    double worst = 0;
    for (size_t li = 0; li < mesh.boundary_loops.size(); ++li)
      for (int v : mesh.boundary_loops[li].verts) {
        if ((mesh.vertices[v] - xi.x).norm() > radius) continue;
        if (static_cast<int>(li) != xi.loop) throw MeshError("chart radius reaches another boundary loop");
        worst = std::max(worst, std::abs(c.y[v].y()));
      }
    c.flatten_residual = worst;
    if (worst > flatten_tol * radius) throw MeshError("chart radius too large to flatten the boundary within tolerance");
  }
  // the vertex at the center, if any
  const int nvx = mesh.nearest_vertex(xi.x);
  if ((mesh.vertices[nvx] - xi.x).norm() < 1e-12 * std::max(1.0, mesh.diameter)) c.center_vertex = nvx;
  return c;
}

Chart build_chart(const SurfaceMesh& mesh, int vertex, double radius, double flatten_tol) {
  if (vertex < 0 || vertex >= mesh.num_vertices()) throw MeshError("chart center vertex out of range");
  Chart c = build_chart(mesh, mesh.vertex_point(vertex), radius, flatten_tol);
  c.center_vertex = vertex;
  return c;
}

double default_chart_radius(const SurfaceMesh& mesh, const SurfacePoint& xi, const std::vector<SurfacePoint>& others) {
  double r = 0.25 * mesh.diameter;
  for (const auto& o : others) {
    const double d = (o.x - xi.x).norm();
    if (d > 0) r = std::min(r, 0.5 * d);
  }
  if (!xi.on_boundary()) {
    r = std::min(r, mesh.boundary_distance(xi.x));
  } else {
    const double k = std::abs(mesh.loop_interp(xi.loop, xi.s, mesh.geodesic_curvature));
    if (k > 0) r = std::min(r, 0.25 / k);
    for (size_t li = 0; li < mesh.boundary_loops.size(); ++li) {
      if (static_cast<int>(li) == xi.loop) continue;
      for (int v : mesh.boundary_loops[li].verts) r = std::min(r, 0.5 * (mesh.vertices[v] - xi.x).norm());
    }
  }
  return r;
}

}  // namespace mfdeg
