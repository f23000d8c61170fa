#include "mfdeg/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <unordered_map>

namespace mfdeg {

namespace {

constexpr double kPi = std::numbers::pi;

uint64_t edge_key(int a, int b) {
  const auto lo = static_cast<uint64_t>(std::min(a, b)), hi = static_cast<uint64_t>(std::max(a, b));
  return (lo << 32) | hi;
}

double cross(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

struct Ring {
  std::vector<int> ids;
  std::vector<double> angle;  // increasing, in [offset, offset + 2pi)
};

Ring make_ring(std::vector<Vec2>& verts, double r, int n, double offset) {
  Ring R;
  for (int j = 0; j < n; ++j) {
    const double a = offset + 2 * kPi * j / n;
    R.ids.push_back(static_cast<int>(verts.size()));
    R.angle.push_back(a);
    verts.emplace_back(r * std::cos(a), r * std::sin(a));
  }
  return R;
}

// Triangulate the band between two concentric rings by merging angles.
void stitch(const Ring& A, const Ring& B, std::vector<std::array<int, 3>>& tris) {
  const int na = static_cast<int>(A.ids.size()), nb = static_cast<int>(B.ids.size());
  auto unwrap = [](double a, double ref) {
    while (a < ref - 1e-12) a += 2 * kPi;
    while (a >= ref + 2 * kPi - 1e-12) a -= 2 * kPi;
    return a;
  };
  // start B at the first angle >= A[0]
  int j0 = 0;
  double best = 1e300;
  for (int j = 0; j < nb; ++j) {
    const double d = unwrap(B.angle[j], A.angle[0]) - A.angle[0];
    if (d < best) {
      best = d;
      j0 = j;
    }
  }
  // step back one so that B[j0] precedes A[0]
  j0 = (j0 + nb - 1) % nb;
  const double base = unwrap(B.angle[j0], A.angle[0] - 2 * kPi + 1e-9);
  auto aang = [&](int i) { return unwrap(A.angle[i % na], base) + (i >= na ? 2 * kPi : 0.0); };
  auto bang = [&](int j) { return unwrap(B.angle[(j0 + j) % nb], base) + (j >= nb ? 2 * kPi : 0.0); };
  int i = 0, j = 0;
  while (i < na || j < nb) {
    const int ai = A.ids[i % na], ai1 = A.ids[(i + 1) % na];
    const int bj = B.ids[(j0 + j) % nb], bj1 = B.ids[(j0 + j + 1) % nb];
    bool advance_a;
    if (i == na) advance_a = false;
    else if (j == nb) advance_a = true;
    else advance_a = aang(i + 1) < bang(j + 1);
    if (advance_a) {
      tris.push_back({ai, bj, ai1});
      ++i;
    } else {
      tris.push_back({ai, bj, bj1});
      ++j;
    }
  }
}

}  // namespace

SurfaceMesh make_disk(int rings, int outer_rings) {
  if (rings < 1 || outer_rings < 0) throw MeshError("disk needs at least one ring");
  const double a = 1.0 / std::sqrt(kPi);
  const int total = rings + outer_rings;
  const double dr = a / total;
  std::vector<Vec2> verts{Vec2::Zero()};
  std::vector<std::array<int, 3>> tris;
  Ring prev;
  prev.ids = {0};
  prev.angle = {0.0};
  for (int k = 1; k <= total; ++k) {
    const int n = 6 * std::min(k, rings);
    const double offset = (k > rings && (k - rings) % 2 == 1) ? kPi / n : 0.0;
    Ring R = make_ring(verts, k * dr, n, offset);
    if (k == 1) {
      for (int j = 0; j < n; ++j) tris.push_back({0, R.ids[j], R.ids[(j + 1) % n]});
    } else {
      stitch(prev, R, tris);
    }
    prev = std::move(R);
  }
  return finalize_mesh(std::move(verts), std::move(tris), {prev.ids}, true);
}

SurfaceMesh make_annulus(double inner_ratio, int n_theta, int n_r) {
  if (!(inner_ratio > 0 && inner_ratio < 1) || n_theta < 3 || n_r < 1) throw MeshError("bad annulus parameters");
  const double ro = 1.0 / std::sqrt(kPi * (1 - inner_ratio * inner_ratio));
  const double ri = inner_ratio * ro;
  std::vector<Vec2> verts;
  std::vector<std::array<int, 3>> tris;
  Ring first, prev;
  for (int k = 0; k <= n_r; ++k) {
    const double r = ri + (ro - ri) * k / n_r;
    Ring R = make_ring(verts, r, n_theta, (k % 2) ? kPi / n_theta : 0.0);
    if (k == 0) first = R;
    else stitch(prev, R, tris);
    prev = std::move(R);
  }
  std::vector<int> inner(first.ids.rbegin(), first.ids.rend());
  return finalize_mesh(std::move(verts), std::move(tris), {prev.ids, inner}, true);
}

SurfaceMesh make_holed_square(int n, const std::vector<std::array<int, 4>>& holes) {
  if (n < 2) throw MeshError("square needs n >= 2");
  auto in_hole = [&](int i, int j) {
    for (const auto& h : holes)
      if (i >= h[0] && i < h[1] && j >= h[2] && j < h[3]) return true;
    return false;
  };
  std::vector<int> id((n + 1) * (n + 1), -1);
  std::vector<Vec2> verts;
  std::vector<std::array<int, 3>> tris;
  auto vid = [&](int i, int j) {
    int& v = id[j * (n + 1) + i];
    if (v < 0) {
      v = static_cast<int>(verts.size());
      verts.emplace_back(static_cast<double>(i) / n, static_cast<double>(j) / n);
    }
    return v;
  };
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) {
      if (in_hole(i, j)) continue;
      const int a = vid(i, j), b = vid(i + 1, j), c = vid(i + 1, j + 1), d = vid(i, j + 1);
      tris.push_back({a, b, c});
      tris.push_back({a, c, d});
    }
  return finalize_mesh(std::move(verts), std::move(tris), {}, true);
}

SurfaceMesh make_square(int n) { return make_holed_square(n, {}); }

SurfaceMesh make_pants(int n) {
  if (n < 8) throw MeshError("pair of pants needs n >= 8");
  const int h0 = n / 6, h1 = n / 2 - n / 12, h2 = n / 2 + n / 12, h3 = n - n / 6;
  const int v0 = n / 3, v1 = n - n / 3;
  return make_holed_square(n, {{h0, h1, v0, v1}, {h2, h3, v0, v1}});
}

// ---------------------------------------------------------------- refinement

namespace {

struct BoundaryParam {
  int loop = -1;
  double s = 0;
};

struct Refiner {
  const SurfaceMesh& base;
  std::vector<Vec2> verts;
  std::vector<std::array<int, 3>> tris;
  std::vector<BoundaryParam> bparam;
  std::unordered_map<uint64_t, std::array<int, 2>> edge_tris;

  explicit Refiner(const SurfaceMesh& m) : base(m), verts(m.vertices), tris(m.triangles) {
    bparam.resize(verts.size());
    for (int v = 0; v < m.num_vertices(); ++v)
      if (m.loop_of[v] >= 0) bparam[v] = {m.loop_of[v], m.boundary_loops[m.loop_of[v]].s[m.loop_index[v]]};
    for (size_t t = 0; t < tris.size(); ++t) add_edges(static_cast<int>(t));
  }

  void add_edge(int a, int b, int t) {
    auto [it, fresh] = edge_tris.try_emplace(edge_key(a, b), std::array<int, 2>{-1, -1});
    auto& e = it->second;
    if (e[0] == -1) e[0] = t;
    else e[1] = t;
  }
  void remove_edge(int a, int b, int t) {
    auto it = edge_tris.find(edge_key(a, b));
    if (it == edge_tris.end()) return;
    auto& e = it->second;
    if (e[0] == t) {
      e[0] = e[1];
      e[1] = -1;
    } else if (e[1] == t) {
      e[1] = -1;
    }
    if (e[0] == -1) edge_tris.erase(it);
  }
  void add_edges(int t) {
    for (int k = 0; k < 3; ++k) add_edge(tris[t][k], tris[t][(k + 1) % 3], t);
  }
  void remove_edges(int t) {
    for (int k = 0; k < 3; ++k) remove_edge(tris[t][k], tris[t][(k + 1) % 3], t);
  }
  int other(int a, int b, int t) const {
    auto it = edge_tris.find(edge_key(a, b));
    if (it == edge_tris.end()) return -1;
    return it->second[0] == t ? it->second[1] : it->second[0];
  }
  int longest(int t) const {
    int best = 0;
    double bl = -1;
    for (int k = 0; k < 3; ++k) {
      const int a = tris[t][k], b = tris[t][(k + 1) % 3];
      const double l = (verts[a] - verts[b]).squaredNorm();
      // deterministic tie break on the edge key
      if (l > bl * (1 + 1e-12) || (std::abs(l - bl) <= 1e-12 * bl && edge_key(a, b) < edge_key(tris[t][best], tris[t][(best + 1) % 3]))) {
        bl = l;
        best = k;
      }
    }
    return best;
  }

  std::unordered_map<uint64_t, int> midpoint_cache;

  int midpoint(int a, int b, bool boundary_edge) {
    auto it = midpoint_cache.find(edge_key(a, b));
    if (it != midpoint_cache.end()) return it->second;
    Vec2 p = 0.5 * (verts[a] + verts[b]);
    BoundaryParam bp;
    if (boundary_edge && bparam[a].loop >= 0 && bparam[a].loop == bparam[b].loop) {
      const int L = bparam[a].loop;
      const double d = base.param_diff(L, bparam[a].s, bparam[b].s);
      bp = {L, base.wrap(L, bparam[a].s + 0.5 * d)};
      p = base.curve(L, bp.s);
    }
    const int id = static_cast<int>(verts.size());
    verts.push_back(p);
    bparam.push_back(bp);
    midpoint_cache[edge_key(a, b)] = id;
    return id;
  }

  void bisect(int t, int k, int mid) {
    const auto tri = tris[t];
    const int a = tri[k], b = tri[(k + 1) % 3], c = tri[(k + 2) % 3];
    remove_edges(t);
    tris[t] = {a, mid, c};
    add_edges(t);
    tris.push_back({mid, b, c});
    add_edges(static_cast<int>(tris.size()) - 1);
  }

  void refine(int t, int depth = 0) {
    if (depth > 200) throw MeshError("longest-edge refinement did not terminate");
    int k = longest(t);
    int a = tris[t][k], b = tris[t][(k + 1) % 3];
    int n = other(a, b, t);
    while (n >= 0) {
      const int kn = longest(n);
      const int na = tris[n][kn], nb = tris[n][(kn + 1) % 3];
      if (edge_key(na, nb) == edge_key(a, b)) break;
      refine(n, depth + 1);
      n = other(a, b, t);
    }
    const int mid = midpoint(a, b, n < 0);
    if (n >= 0) {
      int kn = 0;
      for (; kn < 3; ++kn)
        if (edge_key(tris[n][kn], tris[n][(kn + 1) % 3]) == edge_key(a, b)) break;
      bisect(n, kn, mid);
    }
    bisect(t, k, mid);
  }
};

// Finalize a refined vertex/triangle set keeping the loop order and start
// vertices of the base mesh (base vertex ids are preserved by refinement).
SurfaceMesh finalize_like(const SurfaceMesh& base, std::vector<Vec2> verts, std::vector<std::array<int, 3>> tris, bool normalize) {
  SurfaceMesh raw = finalize_mesh(verts, tris, {}, false);
  std::vector<std::vector<int>> hint;
  for (const auto& L : base.boundary_loops) {
    const int v0 = L.verts[0];
    const auto& R = raw.boundary_loops[raw.loop_of[v0]];
    std::vector<int> h(R.verts.begin() + raw.loop_index[v0], R.verts.end());
    h.insert(h.end(), R.verts.begin(), R.verts.begin() + raw.loop_index[v0]);
    hint.push_back(std::move(h));
  }
  return finalize_mesh(std::move(verts), std::move(tris), hint, normalize);
}

}  // namespace

SurfaceMesh refine_local(const SurfaceMesh& mesh, const std::function<double(const Vec2&)>& size, int max_passes) {
  Refiner R(mesh);
  for (int pass = 0; pass < max_passes; ++pass) {
    bool changed = false;
    const size_t T = R.tris.size();
    for (size_t t = 0; t < T; ++t) {
      const auto& tri = R.tris[t];
      double target = size((R.verts[tri[0]] + R.verts[tri[1]] + R.verts[tri[2]]) / 3.0);
      for (int k = 0; k < 3; ++k) target = std::min(target, size(R.verts[tri[k]]));
      const int k = R.longest(static_cast<int>(t));
      const double len = (R.verts[tri[k]] - R.verts[tri[(k + 1) % 3]]).norm();
      if (len > target) {
        R.refine(static_cast<int>(t));
        changed = true;
      }
    }
    if (!changed) break;
  }
  return finalize_like(mesh, std::move(R.verts), std::move(R.tris), true);
}

SurfaceMesh refine_toward(const SurfaceMesh& mesh, const Vec2& focus, double h_min, double grade, double radius) {
  return refine_local(
      mesh,
      [&](const Vec2& x) {
        const double d = (x - focus).norm();
        if (d > radius) return 1e300;
        return std::max(h_min, grade * d);
      },
      200);
}

SurfaceMesh refine_uniform(const SurfaceMesh& mesh) {
  Refiner R(mesh);
  std::vector<std::array<int, 3>> out;
  out.reserve(4 * mesh.triangles.size());
  for (size_t t = 0; t < mesh.triangles.size(); ++t) {
    const auto tri = mesh.triangles[t];
    int m[3];
    for (int k = 0; k < 3; ++k) {
      const int a = tri[k], b = tri[(k + 1) % 3];
      m[k] = R.midpoint(a, b, R.other(a, b, static_cast<int>(t)) < 0);
    }
    out.push_back({tri[0], m[0], m[2]});
    out.push_back({m[0], tri[1], m[1]});
    out.push_back({m[2], m[1], tri[2]});
    out.push_back({m[0], m[1], m[2]});
  }
  return finalize_like(mesh, std::move(R.verts), std::move(out), true);
}

// ---------------------------------------------------------------- snapping

namespace {

bool in_circumcircle(const Vec2& a, const Vec2& b, const Vec2& c, const Vec2& d) {
  const double adx = a.x() - d.x(), ady = a.y() - d.y();
  const double bdx = b.x() - d.x(), bdy = b.y() - d.y();
  const double cdx = c.x() - d.x(), cdy = c.y() - d.y();
  const double det = (adx * adx + ady * ady) * (bdx * cdy - cdx * bdy) - (bdx * bdx + bdy * bdy) * (adx * cdy - cdx * ady) +
                     (cdx * cdx + cdy * cdy) * (adx * bdy - bdx * ady);
  return det > 1e-14;
}

}  // namespace

SurfaceMesh snap_point(const SurfaceMesh& mesh, const SurfacePoint& p, int& vertex, double tol) {
  const double h = tol * std::max(1.0, mesh.diameter);
  const int near = mesh.nearest_vertex(p.x);
  if ((mesh.vertices[near] - p.x).norm() <= h) {
    vertex = near;
    return mesh;
  }
  Refiner R(mesh);
  int va = -1, vb = -1, split_tri = -1;
  Vec2 pos = p.x;
  if (p.on_boundary()) {
    const auto& L = mesh.boundary_loops.at(p.loop);
    const double s = mesh.wrap(p.loop, p.s);
    auto it = std::upper_bound(L.s.begin(), L.s.end(), s);
    const size_t k = static_cast<size_t>(it - L.s.begin()) - 1;
    va = L.verts[k];
    vb = L.verts[(k + 1) % L.verts.size()];
    const double len = ((k + 1) % L.verts.size() == 0 ? L.length : L.s[k + 1]) - L.s[k];
    const double u = (s - L.s[k]) / len;
    pos = (1 - u) * mesh.vertices[va] + u * mesh.vertices[vb];  // on the chord: keeps the area
  } else {
    int tri;
    Eigen::Vector3d bary;
    if (!mesh.locate(p.x, tri, bary, 1e-9)) throw MeshError("point is not on the mesh");
    int zero = -1;
    for (int k = 0; k < 3; ++k)
      if (std::abs(bary[k]) < 1e-9) zero = k;
    if (zero >= 0) {
      va = mesh.triangles[tri][(zero + 1) % 3];
      vb = mesh.triangles[tri][(zero + 2) % 3];
    } else {
      split_tri = tri;
    }
  }
  const int nv = static_cast<int>(R.verts.size());
  R.verts.push_back(pos);
  R.bparam.push_back({});
  std::vector<int> fresh;
  if (split_tri >= 0) {
    const auto t = R.tris[split_tri];
    R.remove_edges(split_tri);
    R.tris[split_tri] = {t[0], t[1], nv};
    R.add_edges(split_tri);
    R.tris.push_back({t[1], t[2], nv});
    R.add_edges(static_cast<int>(R.tris.size()) - 1);
    R.tris.push_back({t[2], t[0], nv});
    R.add_edges(static_cast<int>(R.tris.size()) - 1);
  } else {
    auto it = R.edge_tris.find(edge_key(va, vb));
    const auto pair = it->second;
    for (int t : pair) {
      if (t < 0) continue;
      int k = 0;
      for (; k < 3; ++k)
        if (edge_key(R.tris[t][k], R.tris[t][(k + 1) % 3]) == edge_key(va, vb)) break;
      R.bisect(t, k, nv);
    }
  }
  // Lawson flips on edges opposite the new vertex
  std::vector<uint64_t> stack;
  auto push_opposite = [&](int t) {
    for (int k = 0; k < 3; ++k)
      if (R.tris[t][k] == nv) stack.push_back(edge_key(R.tris[t][(k + 1) % 3], R.tris[t][(k + 2) % 3]));
  };
  for (size_t t = 0; t < R.tris.size(); ++t)
    for (int k = 0; k < 3; ++k)
      if (R.tris[t][k] == nv) push_opposite(static_cast<int>(t));
  int guard = 0;
  while (!stack.empty() && guard++ < 10000) {
    const uint64_t key = stack.back();
    stack.pop_back();
    auto it = R.edge_tris.find(key);
    if (it == R.edge_tris.end() || it->second[1] < 0) continue;
    const int t0 = it->second[0], t1 = it->second[1];
    const int a = static_cast<int>(key >> 32), b = static_cast<int>(key & 0xffffffffu);
    auto opp = [&](int t) {
      for (int k = 0; k < 3; ++k)
        if (R.tris[t][k] != a && R.tris[t][k] != b) return R.tris[t][k];
      return -1;
    };
    const int c0 = opp(t0), c1 = opp(t1);
    if (c0 != nv && c1 != nv) continue;
    const int apex = (c0 == nv) ? c1 : c0;
    const int tn = (c0 == nv) ? t0 : t1;
    // orient (a, b, nv) counter-clockwise
    int pa = a, pb = b;
    if (cross(R.verts[pb] - R.verts[pa], R.verts[nv] - R.verts[pa]) < 0) std::swap(pa, pb);
    if (!in_circumcircle(R.verts[pa], R.verts[pb], R.verts[nv], R.verts[apex])) continue;
    // new triangles (nv, pa, apex) and (nv, apex, pb) must be positive
    if (cross(R.verts[pa] - R.verts[nv], R.verts[apex] - R.verts[nv]) <= 0) continue;
    if (cross(R.verts[apex] - R.verts[nv], R.verts[pb] - R.verts[nv]) <= 0) continue;
    const int ta = tn, tb = (tn == t0) ? t1 : t0;
    R.remove_edges(ta);
    R.remove_edges(tb);
    R.tris[ta] = {nv, pb, apex};
    R.tris[tb] = {nv, apex, pa};
    // keep counter-clockwise orientation
    for (int t : {ta, tb}) {
      auto& tr = R.tris[t];
      if (cross(R.verts[tr[1]] - R.verts[tr[0]], R.verts[tr[2]] - R.verts[tr[0]]) < 0) std::swap(tr[1], tr[2]);
    }
    R.add_edges(ta);
    R.add_edges(tb);
    stack.push_back(edge_key(pb, apex));
    stack.push_back(edge_key(apex, pa));
  }
  vertex = nv;
  return finalize_like(mesh, std::move(R.verts), std::move(R.tris), false);
}

}  // namespace mfdeg
