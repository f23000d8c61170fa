#include "mfdeg/green.hpp"
#include "mfdeg/parallel.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <thread>
#include <unordered_map>
#include <unordered_set>

namespace mfdeg {

namespace {

constexpr double kPi = std::numbers::pi;

bool read_binary(const std::string& path, std::vector<double>& data, int64_t expect) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return false;
  int64_t n = 0;
  in.read(reinterpret_cast<char*>(&n), sizeof n);
  if (!in || n != expect) return false;
  data.resize(static_cast<size_t>(n));
  in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(n * sizeof(double)));
  return static_cast<bool>(in);
}

void write_binary(const std::string& path, const double* data, int64_t n) {
  std::filesystem::create_directories(std::filesystem::path(path).parent_path());
  // write then rename so concurrent readers never see a partial file
  const std::string tmp = path + ".tmp" + std::to_string(std::hash<std::thread::id>{}(std::this_thread::get_id()));
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write cache file " + tmp);
    out.write(reinterpret_cast<const char*>(&n), sizeof n);
    out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n * sizeof(double)));
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace

double kappa(const SurfacePoint& p) { return p.on_boundary() ? 4 * kPi : 8 * kPi; }
double kappa(const SurfaceMesh& mesh, int vertex) { return mesh.is_boundary(vertex) ? 4 * kPi : 8 * kPi; }

double cutoff_profile(double s) {
  if (s <= 1) return 1;
  if (s >= 2) return 0;
  const double t = s - 1;
  return 1 - t * t * t * (10 - 15 * t + 6 * t * t);
}

GreenField green(const NeumannLaplacian& L, int pole) {
  const auto& M = L.mesh();
  if (pole < 0 || pole >= M.num_vertices()) throw std::invalid_argument("pole vertex out of range");
  VectorXd f = -L.mass() / L.mass().sum();
  f[pole] += 1.0;
  GreenField g;
  g.pole = pole;
  g.pole_point = M.vertex_point(pole);
  g.kappa = kappa(M, pole);
  g.values = L.solve_zero_mean(f);
  return g;
}

namespace detail {

double robin_lsq(const std::vector<Vec2>& y, const std::vector<double>& f) {
  const int n = static_cast<int>(y.size());
  if (n < 6) throw MeshError("too few neighbours around the pole for the Robin fit");
  double scale = 0;
  for (const auto& p : y) scale = std::max(scale, p.norm());
  Eigen::MatrixXd A(n, 6);
  Eigen::VectorXd b(n);
  for (int i = 0; i < n; ++i) {
    const Vec2 p = y[i] / scale;
    A.row(i) << 1, p.x(), p.y(), p.x() * p.x(), p.x() * p.y(), p.y() * p.y();
    b[i] = f[i];
  }
  const Eigen::VectorXd c = A.colPivHouseholderQr().solve(b);
  return c[0];
}

}  // namespace detail

double fit_robin_column(const SurfaceMesh& mesh, int pole, const VectorXd& column) {
  return fit_robin(mesh, pole, [&](int u) { return column[u]; });
}

LocalSingular local_singular(const NeumannLaplacian& L, int pole, int rings) {
  const auto& M = L.mesh();
  if (M.is_boundary(pole)) throw std::invalid_argument("local singular part is for interior poles");
  LocalSingular out;
  out.verts = M.rings(pole, rings);
  out.verts.insert(out.verts.begin(), pole);
  const auto inner = M.rings(pole, rings - 1);
  const int n = static_cast<int>(out.verts.size());
  std::unordered_map<int, int> loc;
  for (int i = 0; i < n; ++i) loc[out.verts[i]] = i;
  std::unordered_set<int> free(inner.begin(), inner.end());
  free.insert(pole);
  const double s = 4.0 / kappa(M, pole);
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n, n);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(n);
  const SpMat& K = L.stiffness();
  for (int i = 0; i < n; ++i) {
    const int u = out.verts[i];
    if (!free.count(u) || M.is_boundary(u)) {
      A(i, i) = 1;
      b[i] = s * std::log(1.0 / (M.vertices[u] - M.vertices[pole]).norm());
      continue;
    }
    // every neighbour of a free vertex lies inside the patch
    for (SpMat::InnerIterator it(K, u); it; ++it) A(i, loc.at(static_cast<int>(it.row()))) += it.value();
  }
  b[0] = 1;
  out.phi = A.partialPivLu().solve(b);
  return out;
}

double robin_value(const NeumannLaplacian& L, int pole, const VectorXd& column) {
  const auto& M = L.mesh();
  if (M.is_boundary(pole)) return fit_robin_column(M, pole, column);
  const LocalSingular ls = local_singular(L, pole);
  return column[pole] - ls.phi[0];
}

RegularPart regular_part(const NeumannLaplacian& L, const GreenField& G, const Chart& chart, double cutoff_radius) {
  const auto& mesh = L.mesh();
  if (!(cutoff_radius > 0) || 2 * cutoff_radius > chart.radius * (1 + 1e-12))
    throw MeshError("chart too small for the cutoff support");
  if ((chart.origin - mesh.vertices[G.pole]).norm() > 1e-12 * std::max(1.0, mesh.diameter))
    throw std::invalid_argument("chart is not centred at the pole");
  RegularPart r;
  r.pole = G.pole;
  r.kappa = G.kappa;
  r.cutoff_radius = cutoff_radius;
  r.robin = robin_value(L, G.pole, G.values);
  const double s = 4.0 / G.kappa;
  r.values = G.values;
  for (int v = 0; v < mesh.num_vertices(); ++v) {
    if (v == G.pole) continue;
    const double rho = chart.map(mesh.vertices[v]).norm();
    const double chi = cutoff_profile(rho / cutoff_radius);
    if (chi > 0) r.values[v] -= s * chi * std::log(1.0 / rho);
  }
  r.values[G.pole] = r.robin;
  return r;
}

RegularPart regular_part(const NeumannLaplacian& L, const GreenField& G) {
  const auto& mesh = L.mesh();
  const double rad = default_chart_radius(mesh, G.pole_point);
  return regular_part(L, G, build_chart(mesh, G.pole, rad), rad / 8);
}

// ---------------------------------------------------------------- store

std::string GreenStore::path(const std::string& hash, int pole) const {
  return (std::filesystem::path(dir_) / (hash + "_p" + std::to_string(pole) + ".bin")).string();
}

std::optional<VectorXd> GreenStore::load(const std::string& hash, int pole, int n) const {
  if (!enabled()) return std::nullopt;
  std::vector<double> d;
  if (!read_binary(path(hash, pole), d, n)) return std::nullopt;
  return Eigen::Map<VectorXd>(d.data(), n);
}

void GreenStore::save(const std::string& hash, int pole, const VectorXd& col) const {
  if (!enabled()) return;
  write_binary(path(hash, pole), col.data(), col.size());
}

GreenCache::GreenCache(std::shared_ptr<const NeumannLaplacian> L, GreenStore store)
    : L_(std::move(L)), store_(std::move(store)), hash_(L_->mesh().content_hash()) {}

VectorXd GreenCache::column(int pole) {
  {
    std::lock_guard<std::mutex> lk(mu_);
    auto it = cols_.find(pole);
    if (it != cols_.end()) return it->second;
  }
  VectorXd col;
  if (auto hit = store_.load(hash_, pole, L_->size())) {
    col = *hit;
  } else {
    col = green(*L_, pole).values;
    store_.save(hash_, pole, col);
  }
  std::lock_guard<std::mutex> lk(mu_);
  return cols_.emplace(pole, std::move(col)).first->second;
}

double GreenCache::robin(int pole) { return robin_value(*L_, pole, column(pole)); }

std::map<int, double> GreenCache::robin_field(const std::vector<int>& poles, int threads) {
  std::vector<double> vals(poles.size());
  parallel_for(static_cast<int>(poles.size()), threads, [&](int i) { vals[i] = robin(poles[i]); });
  std::map<int, double> out;
  for (size_t i = 0; i < poles.size(); ++i) out[poles[i]] = vals[i];
  return out;
}

// ---------------------------------------------------------------- table

GreenTable::GreenTable(std::shared_ptr<const NeumannLaplacian> L, const Options& opt) : L_(std::move(L)) {
  const auto& M = L_->mesh();
  n_ = M.num_vertices();
  radius_ = opt.mls_radius_edges * M.mean_edge;
  margin_ = opt.margin_radii * radius_;
  const size_t nn = static_cast<size_t>(n_) * n_;

  std::string file;
  if (!opt.cache_dir.empty())
    file = (std::filesystem::path(opt.cache_dir) / (M.content_hash() + "_table.bin")).string();
  if (file.empty() || !read_binary(file, H_, static_cast<int64_t>(nn))) {
    H_.assign(nn, 0.0);
    parallel_for(n_, opt.threads, [&](int v) {
      const VectorXd col = mfdeg::green(*L_, v).values;
      const double s = 4.0 / kappa(M, v);
      double* h = H_.data() + static_cast<size_t>(v) * n_;
      for (int x = 0; x < n_; ++x)
        h[x] = (x == v) ? 0.0 : col[x] - s * std::log(1.0 / (M.vertices[x] - M.vertices[v]).norm());
      if (M.is_boundary(v)) {
        h[v] = fit_robin_column(M, v, col);
      } else {
        // near the pole the continuous log leaves lattice error behind; the
        // discrete singular part removes it and agrees with the log on the
        // patch rim, so the column stays continuous
        const LocalSingular ls = local_singular(*L_, v);
        for (size_t i = 0; i < ls.verts.size(); ++i) h[ls.verts[i]] = col[ls.verts[i]] - ls.phi[i];
      }
    });
    if (!file.empty()) write_binary(file, H_.data(), static_cast<int64_t>(nn));
  }

  std::vector<int> every(n_), interior;
  for (int v = 0; v < n_; ++v) {
    every[v] = v;
    if (!M.is_boundary(v)) interior.push_back(v);
  }
  if (opt.circle_model) {
    for (const auto& lp : M.boundary_loops) {
      Vec2 ctr = Vec2::Zero();
      for (int v : lp.verts) ctr += M.vertices[v];
      ctr /= static_cast<double>(lp.verts.size());
      double lo = std::numeric_limits<double>::infinity(), hi = 0;
      for (int v : lp.verts) {
        const double r = (M.vertices[v] - ctr).norm();
        lo = std::min(lo, r);
        hi = std::max(hi, r);
      }
      if (hi - lo <= 1e-9 * hi) circles_.emplace_back(ctr, 0.5 * (lo + hi));
    }
  }
  for (int k = 0; k < 2; ++k) {
    const double f = k ? opt.alt_radius_factor : 1.0;
    Interp& I = interp_[k];
    I.all = Mls2D(M, every, f * radius_);
    I.interior = Mls2D(M, interior, f * radius_);
    I.robin = Mls2D(M, interior, f * std::max(radius_, opt.robin_radius_edges * M.mean_edge));
    for (size_t l = 0; l < M.boundary_loops.size(); ++l) {
      const double r1 = std::min(opt.boundary_radius_edges * M.mean_edge, 0.1 * M.boundary_loops[l].length);
      I.loops.emplace_back(M, static_cast<int>(l), f * std::max(r1, radius_));
    }
  }
  for (size_t l = 0; l < M.boundary_loops.size(); ++l) {
    double worst = 0;
    for (int v : M.boundary_loops[l].verts)
      worst = std::max(worst, std::abs(robin(M.vertex_point(v)) - robin_vertex(v)));
    loop_noise_.push_back(worst);
  }
  for (int v : interior) {
    if (M.boundary_distance(M.vertices[v]) < margin_) continue;
    interior_noise_ = std::max(interior_noise_, std::abs(robin(M.vertex_point(v)) - robin_vertex(v)));
  }
}

double GreenTable::G_vertex(int x, int pole) const {
  if (x == pole) throw std::invalid_argument("Green function is singular on the diagonal");
  const auto& M = mesh();
  return H_vertex(x, pole) + 4.0 / kappa(M, pole) * std::log(1.0 / (M.vertices[x] - M.vertices[pole]).norm());
}

Stencil GreenTable::pole_stencil(const SurfacePoint& y, int variant) const {
  const Interp& I = interp(variant);
  return y.on_boundary() ? I.loops.at(y.loop).stencil(y.s) : I.interior.stencil(y.x);
}

Stencil GreenTable::query_stencil(const SurfacePoint& x, int variant) const {
  const Interp& I = interp(variant);
  return x.on_boundary() ? I.loops.at(x.loop).stencil(x.s) : I.all.stencil(x.x);
}

double GreenTable::regular(const Stencil& sx, const Stencil& sy) const {
  double s = 0;
  for (size_t j = 0; j < sy.idx.size(); ++j) {
    const double* h = H_.data() + static_cast<size_t>(sy.idx[j]) * n_;
    double inner = 0;
    for (size_t i = 0; i < sx.idx.size(); ++i) inner += sx.w[i] * h[sx.idx[i]];
    s += sy.w[j] * inner;
  }
  return s;
}

double GreenTable::regular(const SurfacePoint& x, const SurfacePoint& y, int variant) const {
  return regular(query_stencil(x, variant), pole_stencil(y, variant));
}

double GreenTable::robin_model(const Vec2& y) const {
  double m = 0;
  for (const auto& [c, r] : circles_) m -= std::log(std::abs((y - c).squaredNorm() - r * r) / r) / (2 * kPi);
  return m;
}

double GreenTable::robin(const Stencil& sy, const SurfacePoint& y) const {
  if (y.on_boundary() || circles_.empty()) return sy.apply([&](int v) { return robin_vertex(v); });
  const auto& M = mesh();
  return robin_model(y.x) + sy.apply([&](int v) { return robin_vertex(v) - robin_model(M.vertices[v]); });
}

double GreenTable::robin(const SurfacePoint& y, int variant) const {
  return robin(y.on_boundary() ? pole_stencil(y, variant) : interp(variant).robin.stencil(y.x), y);
}

double GreenTable::green(const SurfacePoint& x, const SurfacePoint& y, int variant) const {
  const double d = (x.x - y.x).norm();
  if (!(d > 0)) throw std::invalid_argument("Green function is singular on the diagonal");
  return 4.0 / kappa(y) * std::log(1.0 / d) + regular(x, y, variant);
}

}  // namespace mfdeg
