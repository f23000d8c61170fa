#include "mfdeg/kirchhoff.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <complex>
#include <mutex>
#include <numeric>
#include <numbers>
#include <optional>
#include <random>
#include <thread>

namespace mfdeg {

namespace {

constexpr double kPi = std::numbers::pi;

Vec2 outward_normal(const SurfaceMesh& m, const SurfacePoint& b) {
  const Vec2 t = m.curve_tangent(b.loop, b.s);
  return Vec2(t.y(), -t.x());  // domain on the left of the tangent
}

}  // namespace

double Configuration::separation() const {
  double s = std::numeric_limits<double>::infinity();
  for (int i = 0; i < size(); ++i)
    for (int j = i + 1; j < size(); ++j) s = std::min(s, (points[i].x - points[j].x).norm());
  return s;
}

const char* to_string(Classification c) {
  switch (c) {
    case Classification::V_minus: return "V_minus";
    case Classification::V_plus: return "V_plus";
    default: return "degenerate";
  }
}

KirchhoffRouth::KirchhoffRouth(std::shared_ptr<const GreenTable> table, Potential V)
    : KirchhoffRouth(std::move(table), std::move(V), Options{}) {}

KirchhoffRouth::KirchhoffRouth(std::shared_ptr<const GreenTable> table, Potential V, const Options& opt)
    : table_(std::move(table)), V_(std::move(V)), opt_(opt) {
  min_sep_ = table_->mls_radius();
}

double KirchhoffRouth::F(const SurfacePoint& x, const Configuration& xi, int i, int variant) const {
  const auto& T = *table_;
  double e = 0;
  for (int j = 0; j < xi.size(); ++j) {
    const SurfacePoint& y = xi.points[j];
    const double kj = kappa(y);
    if (j == i) {
      double h = T.regular(x, y, variant);
      if (y.on_boundary()) {
        // chart convention: Gamma uses |w|, the table uses |x - y|
        const Chart c = chart_frame(mesh(), y);
        const Vec2 d = x.x - y.x;
        const std::complex<double> z(d.dot(c.t1), d.dot(c.t2));
        h += 4.0 / kj * std::log(std::abs(1.0 - std::complex<double>(0, 0.5 * c.curvature) * z));
      }
      e += kj * h;
    } else {
      if ((x.x - y.x).norm() < 1e-12) throw DegenerateConfiguration("evaluation point coincides with another pole");
      e += kj * T.green(x, y, variant);
    }
  }
  const double v = V_(x.x.x(), x.x.y());
  if (!(v > 0)) throw std::domain_error("potential must be positive");
  return v * std::exp(e);
}

double KirchhoffRouth::value(const Configuration& xi, int variant) const {
  if (xi.size() == 0) throw std::invalid_argument("empty configuration");
  if (xi.size() > 1 && xi.separation() < min_sep_) throw DegenerateConfiguration("configuration points too close");
  const auto& T = *table_;
  std::vector<double> terms;
  terms.reserve(2 * xi.size() + xi.size() * xi.size());
  std::vector<Stencil> qs, ps;
  for (const auto& y : xi.points) {
    qs.push_back(T.query_stencil(y, variant));
    ps.push_back(T.pole_stencil(y, variant));
  }
  for (int i = 0; i < xi.size(); ++i) {
    const auto& y = xi.points[i];
    const double k = kappa(y);
    const double v = V_(y.x.x(), y.x.y());
    if (!(v > 0)) throw std::domain_error("potential must be positive");
    terms.push_back(2 * k * std::log(v));
    terms.push_back(k * k * T.robin(y, variant));
    for (int j = 0; j < xi.size(); ++j) {
      if (j == i) continue;
      const auto& z = xi.points[j];
      const double g = 4.0 / kappa(z) * std::log(1.0 / (y.x - z.x).norm()) + T.regular(qs[i], ps[j]);
      terms.push_back(k * kappa(z) * g);
    }
  }
  // order-independent summation: bitwise invariant under permutations
  std::sort(terms.begin(), terms.end());
  double s = 0;
  for (double t : terms) s += t;
  return s;
}

Eigen::VectorXd KirchhoffRouth::coords(const Configuration& xi) const {
  Eigen::VectorXd t(xi.dim());
  int k = 0;
  for (int i = 0; i < xi.p; ++i) {
    t[k++] = xi.points[i].x.x();
    t[k++] = xi.points[i].x.y();
  }
  for (int i = xi.p; i < xi.size(); ++i) t[k++] = xi.points[i].s;
  return t;
}

Configuration KirchhoffRouth::from_coords(const Configuration& like, const Eigen::VectorXd& t) const {
  Configuration c = like;
  int k = 0;
  for (int i = 0; i < c.p; ++i) {
    c.points[i].x = Vec2(t[k], t[k + 1]);
    c.points[i].loop = -1;
    k += 2;
  }
  for (int i = c.p; i < c.size(); ++i) c.points[i] = mesh().boundary_point(like.points[i].loop, t[k++]);
  return c;
}

bool KirchhoffRouth::admissible(const Configuration& xi) const {
  const auto& M = mesh();
  for (int i = 0; i < xi.p; ++i) {
    int tri;
    Eigen::Vector3d bary;
    if (!M.locate(xi.points[i].x, tri, bary, 0)) return false;
    if (M.boundary_distance(xi.points[i].x) < table_->interior_margin()) return false;
  }
  return xi.size() < 2 || xi.separation() >= min_sep_;
}

Eigen::VectorXd KirchhoffRouth::gradient(const Configuration& xi, double step_scale) const {
  const double h = opt_.grad_step * mesh().diameter * step_scale;
  const Eigen::VectorXd t = coords(xi);
  Eigen::VectorXd g(t.size());
  for (int k = 0; k < t.size(); ++k) {
    Eigen::VectorXd tp = t, tm = t;
    tp[k] += h;
    tm[k] -= h;
    const Configuration cp = from_coords(xi, tp), cm = from_coords(xi, tm);
    if (!admissible(cp) || !admissible(cm)) throw DegenerateConfiguration("finite-difference stencil leaves the valid region");
    g[k] = (value(cp) - value(cm)) / (2 * h);
  }
  return g;
}

Eigen::MatrixXd KirchhoffRouth::hessian(const Configuration& xi, double step_scale, int variant) const {
  const double h = opt_.hess_step * mesh().diameter * step_scale;
  const Eigen::VectorXd t = coords(xi);
  const int n = static_cast<int>(t.size());
  auto f = [&](int a, double da, int b, double db) {
    Eigen::VectorXd s = t;
    if (a >= 0) s[a] += da;
    if (b >= 0) s[b] += db;
    const Configuration c = from_coords(xi, s);
    if (!admissible(c)) throw DegenerateConfiguration("finite-difference stencil leaves the valid region");
    return value(c, variant);
  };
  const double f0 = f(-1, 0, -1, 0);
  Eigen::MatrixXd H(n, n);
  for (int a = 0; a < n; ++a) {
    H(a, a) = (f(a, h, -1, 0) - 2 * f0 + f(a, -h, -1, 0)) / (h * h);
    for (int b = a + 1; b < n; ++b) {
      H(a, b) = H(b, a) = (f(a, h, b, h) - f(a, h, b, -h) - f(a, -h, b, h) + f(a, -h, b, -h)) / (4 * h * h);
    }
  }
  return H;
}

double KirchhoffRouth::L1_at(const Configuration& xi, int variant) const {
  const auto& M = mesh();
  double s = 0;
  for (int i = xi.p; i < xi.size(); ++i) {
    const auto& b = xi.points[i];
    const Jet2 j = V_.jet(b.x.x(), b.x.y());
    const Vec2 nu = outward_normal(M, b);
    const double dnlnV = (j.dx * nu.x() + j.dy * nu.y()) / j.v;
    const double kg = M.loop_interp(b.loop, b.s, M.geodesic_curvature);
    // F^i at its own pole: H(xi_i, xi_i) is the Robin value
    double ex = kappa(b) * table_->robin(b, variant);
    for (int j2 = 0; j2 < xi.size(); ++j2)
      if (j2 != i) ex += kappa(xi.points[j2]) * table_->green(b, xi.points[j2], variant);
    s -= (dnlnV + 2 * kg) * std::sqrt(j.v * std::exp(ex));
  }
  return s;
}

double KirchhoffRouth::L1(const Configuration& xi, double* err) const {
  if (xi.q < 1) throw std::invalid_argument("L1 needs at least one boundary point");
  const double s = L1_at(xi, 0);
  if (err) *err = std::abs(s - L1_at(xi, 1));
  return s;
}

double KirchhoffRouth::laplacian_F(const Configuration& xi, int i, double h) const {
  const Vec2 c = xi.points[i].x;
  auto at = [&](double dx, double dy) {
    SurfacePoint x;
    x.x = c + Vec2(dx, dy);
    return F(x, xi, i);
  };
  return (at(h, 0) + at(-h, 0) + at(0, h) + at(0, -h) - 4 * at(0, 0)) / (h * h);
}

double KirchhoffRouth::f3_at(const Configuration& xi, int i, double h, int variant) const {
  const auto& M = mesh();
  double ksum = 0;
  for (const auto& y : xi.points) ksum += kappa(y);
  // Delta G = Delta H = 1/|Sigma| away from the poles
  const double dE = ksum / M.total_area;
  const Vec2 c = xi.points[i].x;
  auto lnF = [&](double dx, double dy) {
    SurfacePoint x;
    x.x = c + Vec2(dx, dy);
    return std::log(F(x, xi, i, variant));
  };
  const Vec2 g((lnF(h, 0) - lnF(-h, 0)) / (2 * h), (lnF(0, h) - lnF(0, -h)) / (2 * h));
  const Jet2 j = V_.jet(c.x(), c.y());
  const double dlnV = (j.dxx + j.dyy) / j.v - (j.dx * j.dx + j.dy * j.dy) / (j.v * j.v);
  SurfacePoint x;
  x.x = c;
  const double Fi = F(x, xi, i, variant);
  const int v = M.nearest_vertex(c);
  const double K = M.is_boundary(v) ? 0.0 : M.gauss_curvature[v];
  return Fi * (dlnV + dE + g.squaredNorm() - 2 * K);
}

double KirchhoffRouth::L2_at(const Configuration& xi, double h, int variant) const {
  double s = 0;
  for (int i = 0; i < xi.p; ++i) s += kappa(xi.points[i]) * f3_at(xi, i, h, variant);
  return s;
}

double KirchhoffRouth::f2(const Configuration& xi, int i) const {
  if (i < xi.p) return 0;
  const auto& b = xi.points[i];
  const Jet2 j = V_.jet(b.x.x(), b.x.y());
  const Vec2 nu = outward_normal(mesh(), b);
  const double kg = mesh().loop_interp(b.loop, b.s, mesh().geodesic_curvature);
  return -((j.dx * nu.x() + j.dy * nu.y()) / j.v + 2 * kg) * F(b, xi, i);
}

double KirchhoffRouth::f3(const Configuration& xi, int i) const {
  if (i >= xi.p) throw std::invalid_argument("f3 is evaluated at interior points");
  return f3_at(xi, i, opt_.grad_step * mesh().diameter, 0);
}

double KirchhoffRouth::L2(const Configuration& xi, double* err) const {
  if (xi.q != 0) throw std::invalid_argument("L2 is defined for configurations without boundary points");
  const double h = opt_.grad_step * mesh().diameter;
  const double s = L2_at(xi, h, 0);
  if (err) *err = std::abs(s - L2_at(xi, 0.5 * h, 0)) + std::abs(s - L2_at(xi, h, 1));
  return s;
}

std::vector<Configuration> KirchhoffRouth::relabellings(const Configuration& xi) const {
  std::vector<int> a(xi.p), b(xi.q);
  std::iota(a.begin(), a.end(), 0);
  std::iota(b.begin(), b.end(), xi.p);
  std::vector<Configuration> out;
  do {
    std::vector<int> bb = b;
    do {
      Configuration c = xi;
      for (int i = 0; i < xi.p; ++i) c.points[i] = xi.points[a[i]];
      for (int i = 0; i < xi.q; ++i) c.points[xi.p + i] = xi.points[bb[i]];
      out.push_back(std::move(c));
    } while (std::next_permutation(bb.begin(), bb.end()));
  } while (std::next_permutation(a.begin(), a.end()));
  return out;
}

bool KirchhoffRouth::refine(Configuration& xi, double tol, double* grad_norm) const {
  double lambda = 1e-3;
  Eigen::VectorXd t = coords(xi);
  Eigen::VectorXd g;
  try {
    g = gradient(xi);
  } catch (const DegenerateConfiguration&) {
    return false;
  }
  const double max_step = 0.05 * mesh().diameter;
  for (int it = 0; it < opt_.max_iterations; ++it) {
    if (grad_norm) *grad_norm = g.norm();
    if (g.norm() <= tol) return true;
    Eigen::MatrixXd H;
    try {
      H = hessian(xi);
    } catch (const DegenerateConfiguration&) {
      return false;
    }
    bool accepted = false;
    while (lambda < 1e10) {
      const Eigen::MatrixXd A = H.transpose() * H + lambda * Eigen::MatrixXd::Identity(t.size(), t.size()) * (1 + H.squaredNorm() / t.size());
      Eigen::VectorXd d = A.ldlt().solve(-H.transpose() * g);
      if (d.norm() > max_step) d *= max_step / d.norm();
      const Configuration trial = from_coords(xi, t + d);
      if (admissible(trial)) {
        try {
          const Eigen::VectorXd gt = gradient(trial);
          if (gt.norm() < g.norm()) {
            xi = trial;
            t = coords(xi);
            g = gt;
            lambda = std::max(lambda / 4, 1e-12);
            accepted = true;
            break;
          }
        } catch (const DegenerateConfiguration&) {
        }
      }
      lambda *= 5;
    }
    if (!accepted) return false;
  }
  if (grad_norm) *grad_norm = g.norm();
  return g.norm() <= tol;
}

CriticalPoint KirchhoffRouth::analyse(const Configuration& xi) const {
  CriticalPoint cp;
  cp.config = xi;
  cp.value = value(xi);
  cp.grad_norm = gradient(xi).norm();
  const Eigen::MatrixXd H1 = hessian(xi, 1.0), H2 = hessian(xi, 0.5), H3 = hessian(xi, 1.0, 1);
  auto spectrum = [](const Eigen::MatrixXd& H) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (H + H.transpose()), Eigen::EigenvaluesOnly);
    return Eigen::VectorXd(es.eigenvalues());
  };
  cp.hessian_eigenvalues = spectrum(H1);
  const Eigen::VectorXd e2 = spectrum(H2), e3 = spectrum(H3);
  double kmax = 0;
  for (const auto& y : xi.points) kmax = std::max(kmax, kappa(y));
  const double floor = opt_.hessian_floor * kmax * kmax / mesh().total_area;
  // eigenvalues are matched in sorted order; a stiff direction's truncation
  // error stays out of the soft directions' bands
  cp.hessian_sigma = 10 * (cp.hessian_eigenvalues - e2).cwiseAbs() +
                     opt_.sensitivity_weight * (cp.hessian_eigenvalues - e3).cwiseAbs();
  cp.hessian_sigma.array() += floor;
  cp.morse_index = 0;
  for (int k = 0; k < cp.hessian_eigenvalues.size(); ++k) {
    if (cp.hessian_eigenvalues[k] < 0) ++cp.morse_index;
    if (std::abs(cp.hessian_eigenvalues[k]) < cp.hessian_sigma[k]) cp.nondegenerate = false;
  }
  double err = 0;
  cp.L = L(xi, &err);
  cp.L_error = 10 * err;
  if (!cp.nondegenerate || std::abs(cp.L) <= cp.L_error)
    cp.cls = Classification::degenerate;
  else
    cp.cls = cp.L < 0 ? Classification::V_minus : Classification::V_plus;
  return cp;
}

Configuration KirchhoffRouth::random_configuration(int p, int q, uint64_t seed) const {
  const auto& M = mesh();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> U(0, 1);
  std::vector<double> tri_cdf, loop_cdf;
  double acc = 0;
  for (const auto& t : M.triangles) {
    const Vec2 a = M.vertices[t[0]], b = M.vertices[t[1]], c = M.vertices[t[2]];
    acc += 0.5 * std::abs((b - a).x() * (c - a).y() - (b - a).y() * (c - a).x());
    tri_cdf.push_back(acc);
  }
  acc = 0;
  for (const auto& L : M.boundary_loops) loop_cdf.push_back(acc += L.length);
  for (int attempt = 0; attempt < 10000; ++attempt) {
    Configuration c;
    c.p = p;
    c.q = q;
    for (int i = 0; i < p; ++i) {
      const double r = U(rng) * tri_cdf.back();
      const auto k = std::lower_bound(tri_cdf.begin(), tri_cdf.end(), r) - tri_cdf.begin();
      double u = U(rng), v = U(rng);
      if (u + v > 1) u = 1 - u, v = 1 - v;
      const auto& t = M.triangles[k];
      SurfacePoint sp;
      sp.x = M.vertices[t[0]] + u * (M.vertices[t[1]] - M.vertices[t[0]]) + v * (M.vertices[t[2]] - M.vertices[t[0]]);
      c.points.push_back(sp);
    }
    for (int i = 0; i < q; ++i) {
      const double r = U(rng) * loop_cdf.back();
      const int l = static_cast<int>(std::lower_bound(loop_cdf.begin(), loop_cdf.end(), r) - loop_cdf.begin());
      c.points.push_back(M.boundary_point(l, U(rng) * M.boundary_loops[l].length));
    }
    // keep the start away from the edges of the admissible set
    if (!admissible(c)) continue;
    if (c.size() > 1 && c.separation() < 2 * min_sep_) continue;
    bool ok = true;
    for (int i = 0; i < p; ++i) ok = ok && M.boundary_distance(c.points[i].x) > table_->interior_margin() + 2 * opt_.hess_step * M.diameter;
    if (ok) return c;
  }
  throw DegenerateConfiguration("could not sample an admissible configuration");
}

CensusResult KirchhoffRouth::find_critical_points(int p, int q, int starts, double tol, uint64_t seed, int threads) const {
  if (p < 0 || q < 0 || 2 * p + q < 1) throw std::invalid_argument("need p, q >= 0 and 2p + q >= 1");
  if (starts < 1) throw std::invalid_argument("need at least one start");
  if (q > 0) {
    // the boundary points must fit on the loops with the minimum separation
    double total = 0;
    for (const auto& L : mesh().boundary_loops) total += L.length;
    if (q * 2 * min_sep_ > total) throw std::invalid_argument("too many boundary points for this mesh");
  }
  std::vector<std::optional<Configuration>> found(starts);
  std::vector<double> norms(starts, 0);
  if (threads <= 0) threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  threads = std::min(threads, starts);
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  std::mutex err_mu;
  std::exception_ptr err;
  for (int w = 0; w < threads; ++w)
    pool.emplace_back([&] {
      for (int s = next++; s < starts; s = next++) {
        try {
          // per-start seed: results do not depend on the thread schedule
          Configuration c = random_configuration(p, q, seed * 1000003ULL + static_cast<uint64_t>(s));
          double gn = 0;
          if (refine(c, tol, &gn)) found[s] = c;
          norms[s] = gn;
        } catch (...) {
          std::lock_guard<std::mutex> lk(err_mu);
          if (!err) err = std::current_exception();
        }
      }
    });
  for (auto& th : pool) th.join();
  if (err) std::rethrow_exception(err);

  CensusResult res;
  res.starts = starts;
  const double dedup = opt_.dedup_radius * mesh().diameter;
  std::vector<Configuration> uniq;
  std::vector<int> hits;
  auto insert = [&](const Configuration& c, int hit) {
    for (size_t u = 0; u < uniq.size(); ++u) {
      double d = 0;
      for (int i = 0; i < c.size(); ++i) {
        if (c.points[i].loop != uniq[u].points[i].loop) d = std::numeric_limits<double>::infinity();
        d = std::max(d, (c.points[i].x - uniq[u].points[i].x).norm());
      }
      if (d < dedup) {
        hits[u] += hit;
        return;
      }
    }
    uniq.push_back(c);
    hits.push_back(hit);
  };
  for (int s = 0; s < starts; ++s) {
    if (!found[s]) continue;
    ++res.converged;
    insert(*found[s], 1);
  }
  // complete each orbit so that the census covers every ordering
  const size_t direct = uniq.size();
  for (size_t u = 0; u < direct; ++u)
    for (const auto& c : relabellings(uniq[u])) insert(c, 0);
  std::vector<CriticalPoint> pts(uniq.size());
  std::atomic<int> next2{0};
  std::vector<std::thread> pool2;
  for (int w = 0; w < std::min<int>(threads, std::max<size_t>(1, uniq.size())); ++w)
    pool2.emplace_back([&] {
      for (int u = next2++; u < static_cast<int>(uniq.size()); u = next2++) {
        try {
          pts[u] = analyse(uniq[u]);
          pts[u].found_by = hits[u];
        } catch (...) {
          std::lock_guard<std::mutex> lk(err_mu);
          if (!err) err = std::current_exception();
        }
      }
    });
  for (auto& th : pool2) th.join();
  if (err) std::rethrow_exception(err);
  for (auto& cp : pts) {
    if (!cp.nondegenerate) res.all_nondegenerate = false;
    res.signed_sum += (cp.morse_index % 2) ? -1 : 1;
  }
  res.points = std::move(pts);
  return res;
}

}  // namespace mfdeg
