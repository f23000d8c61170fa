#include "mfdeg/bubble.hpp"
#include "mfdeg/parallel.hpp"

#include <Eigen/Dense>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace mfdeg {

namespace {

constexpr double kPi = std::numbers::pi;

// Dunavant degree-5 rule on the reference triangle: barycentrics and weights
// (weights sum to 1).
struct QuadPoint {
  double l0, l1, l2, w;
};
constexpr double a1 = 0.059715871789770, b1 = 0.470142064105115, w1 = 0.132394152788506;
constexpr double a2 = 0.797426985353087, b2 = 0.101286507323456, w2 = 0.125939180544827;
constexpr QuadPoint kRule[7] = {
    {1.0 / 3, 1.0 / 3, 1.0 / 3, 0.225}, {a1, b1, b1, w1}, {b1, a1, b1, w1}, {b1, b1, a1, w1},
    {a2, b2, b2, w2},                   {b2, a2, b2, w2}, {b2, b2, a2, w2},
};

double bubble_density(double lambda, double r2) {
  const double d = 1 + lambda * lambda * r2;
  return 8 * lambda * lambda / (d * d);
}

}  // namespace

double standard_bubble(double lambda, const Vec2& z, const Vec2& y) {
  return std::log(bubble_density(lambda, (y - z).squaredNorm()));
}

double planar_bubble_mass(double lambda, double radius_factor) {
  using boost::math::quadrature::gauss_kronrod;
  // t = lambda r; geometric panels keep the peak and the r^-3 tail resolved
  auto f = [](double t) { return 2 * kPi * t * 8 / ((1 + t * t) * (1 + t * t)); };
  double s = 0, a = 0, b = 0.125;
  while (a < radius_factor) {
    b = std::min(b, radius_factor);
    s += gauss_kronrod<double, 31>::integrate(f, a, b, 8, 1e-14);
    a = b;
    b *= 2;
  }
  (void)lambda;  // the integral is scale invariant in lambda
  return s;
}

BubbleProjector::BubbleProjector(std::shared_ptr<const NeumannLaplacian> L) : L_(std::move(L)) {}

double BubbleProjector::norm(const VectorXd& u) const { return std::sqrt(std::max(0.0, inner(u, u))); }

double BubbleProjector::local_edge(const Vec2& p) const {
  const auto& M = mesh();
  const int v = M.nearest_vertex(p);
  double s = 0;
  for (int u : M.neighbors[v]) s += (M.vertices[u] - M.vertices[v]).norm();
  return s / std::max<size_t>(1, M.neighbors[v].size());
}

void BubbleProjector::check(const BubbleParams& bp) const {
  if (!(bp.lambda > 0)) throw BubbleError("bubble lambda must be positive");
  if (!(bp.cutoff > 0)) throw BubbleError("bubble cutoff must be positive");
  const double h = local_edge(bp.center.x);
  if (h > 0.5 / bp.lambda)
    throw BubbleError("bubble core under-resolved: edge " + std::to_string(h) + " > 1/(2 lambda) = " + std::to_string(0.5 / bp.lambda));
  const auto& M = mesh();
  if (!bp.center.on_boundary()) {
    if (M.boundary_distance(bp.center.x) < 2 * bp.cutoff) throw BubbleError("interior bubble cutoff reaches the boundary");
  } else {
    const Chart c = chart_frame(M, bp.center);
    // w = z - i(k/2) z^2 is injective for |z| < 1/|k|; keep the support well inside
    if (std::abs(c.curvature) * 2 * bp.cutoff > 0.9 + 1e-12) throw BubbleError("boundary bubble cutoff too large for the boundary curvature");
    for (size_t li = 0; li < M.boundary_loops.size(); ++li) {
      if (static_cast<int>(li) == bp.center.loop) continue;
      for (int v : M.boundary_loops[li].verts)
        if ((M.vertices[v] - bp.center.x).norm() < 2 * bp.cutoff) throw BubbleError("boundary bubble cutoff reaches another loop");
    }
  }
}

VectorXd BubbleProjector::load(const BubbleParams& bp) const {
  const auto& M = mesh();
  const Chart c = chart_frame(M, bp.center);
  const double lam = bp.lambda, r0 = bp.cutoff;
  // |y| >= |z| (1 - |k| |z| / 2) with |z| the ambient distance
  const double reach = 2 * r0 / std::max(0.5, 1 - std::abs(c.curvature) * r0) + 1e-12;
  VectorXd b = VectorXd::Zero(M.num_vertices());
  auto integrand = [&](const Vec2& x) {
    const Vec2 y = c.map(x);
    const double s = y.norm() / r0;
    if (s >= 2) return 0.0;
    return cutoff_profile(s) * bubble_density(lam, y.squaredNorm()) * std::exp(-c.conformal_factor(x));
  };
  for (const auto& t : M.triangles) {
    const Vec2 &A = M.vertices[t[0]], &B = M.vertices[t[1]], &C = M.vertices[t[2]];
    const double hT = std::max({(A - B).norm(), (B - C).norm(), (C - A).norm()});
    const double d = ((A + B + C) / 3 - c.origin).norm();
    if (d - hT > reach) continue;
    const double ell = 1 / lam + std::max(0.0, d - hT);
    const int k = std::clamp(static_cast<int>(std::ceil(2 * hT / ell)), 1, 64);
    const double area = 0.5 * std::abs((B - A).x() * (C - A).y() - (B - A).y() * (C - A).x());
    const double sub = area / (k * k);
    double acc[3] = {0, 0, 0};
    auto add_sub = [&](const Eigen::Vector3d& p0, const Eigen::Vector3d& p1, const Eigen::Vector3d& p2) {
      for (const auto& q : kRule) {
        const Eigen::Vector3d l = q.l0 * p0 + q.l1 * p1 + q.l2 * p2;
        const Vec2 x = l[0] * A + l[1] * B + l[2] * C;
        const double f = q.w * sub * integrand(x);
        for (int j = 0; j < 3; ++j) acc[j] += f * l[j];
      }
    };
    for (int i = 0; i < k; ++i)
      for (int j = 0; j + i < k; ++j) {
        auto P = [&](int a, int b2) { return Eigen::Vector3d(1 - double(a + b2) / k, double(a) / k, double(b2) / k); };
        add_sub(P(i, j), P(i + 1, j), P(i, j + 1));
        if (i + j + 1 < k) add_sub(P(i + 1, j), P(i + 1, j + 1), P(i, j + 1));
      }
    for (int j = 0; j < 3; ++j) b[t[j]] += acc[j];
  }
  return b;
}

VectorXd BubbleProjector::project(const BubbleParams& bp) const {
  check(bp);
  VectorXd b = load(bp);
  const auto& m = L_->mass();
  b -= m * (b.sum() / m.sum());
  return L_->solve_zero_mean(b, 1e-9 * std::max(1.0, b.cwiseAbs().sum()));
}

VectorXd project_bubble(const NeumannLaplacian& L, const BubbleParams& bp) {
  // non-owning handle: L outlives the projector
  BubbleProjector P(std::shared_ptr<const NeumannLaplacian>(&L, [](const NeumannLaplacian*) {}));
  return P.project(bp);
}

double default_cutoff(const SurfaceMesh& mesh, const SurfacePoint& center, const std::vector<SurfacePoint>& others) {
  return 0.5 * default_chart_radius(mesh, center, others);
}

double max_cutoff(const SurfaceMesh& mesh, const SurfacePoint& center) {
  double r = 0.25 * mesh.diameter;
  if (!center.on_boundary()) return std::min(r, 0.5 * mesh.boundary_distance(center.x));
  const double k = std::abs(mesh.loop_interp(center.loop, center.s, mesh.geodesic_curvature));
  if (k > 0) r = std::min(r, 0.44 / k);  // check() allows 0.45/k; refinement moves k a little
  for (size_t li = 0; li < mesh.boundary_loops.size(); ++li) {
    if (static_cast<int>(li) == center.loop) continue;
    for (int v : mesh.boundary_loops[li].verts) r = std::min(r, 0.5 * (mesh.vertices[v] - center.x).norm() * (1 - 1e-9));
  }
  return r;
}

SurfaceMesh refine_for_bubble(const SurfaceMesh& mesh, const Vec2& center, double lambda_max, double cutoff, double grade) {
  return refine_toward(mesh, center, 1 / (8 * lambda_max), grade, 2.5 * cutoff);
}

SelfEnergyReport self_energy_check(const BubbleProjector& P, const SurfacePoint& center, const std::vector<double>& lambdas, double robin,
                                   double cutoff, int threads) {
  if (lambdas.size() < 5) throw BubbleError("self-energy regression needs at least 5 lambdas");
  const auto [lo, hi] = std::minmax_element(lambdas.begin(), lambdas.end());
  if (*hi < 4.99 * *lo) throw BubbleError("self-energy lambda grid must span at least a factor of 5");
  SelfEnergyReport r;
  r.kappa = kappa(center);
  r.robin = robin;
  r.cutoff = cutoff;
  r.vertices = P.mesh().num_vertices();
  r.lambdas = lambdas;
  std::sort(r.lambdas.begin(), r.lambdas.end());
  const int n = static_cast<int>(r.lambdas.size());
  r.energy.assign(n, 0);
  r.mass.assign(n, 0);
  for (double l : r.lambdas) P.check({l, center, cutoff});
  parallel_for(n, threads, [&](int i) {
    const BubbleParams bp{r.lambdas[i], center, cutoff};
    const VectorXd b = P.load(bp);
    r.mass[i] = b.sum();
    const VectorXd u = P.project(bp);
    r.energy[i] = P.inner(u, u);
  });
  for (int i = 1; i < n; ++i)
    if (!(r.energy[i] > r.energy[i - 1])) throw BubbleError("self energy not increasing in lambda: mesh under-resolved");
  const double area = P.mesh().total_area;
  Eigen::MatrixXd A(n, 2);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    const double l = r.lambdas[i];
    r.corrected.push_back(r.energy[i] - r.kappa * r.kappa / area * std::log(l) / (l * l));
    A(i, 0) = std::log(l);
    A(i, 1) = 1;
    y[i] = r.corrected[i];
  }
  const Eigen::Vector2d c = A.colPivHouseholderQr().solve(y);
  r.slope = c[0];
  r.intercept = c[1];
  r.fit_residual = (A * c - y).cwiseAbs().maxCoeff();
  Eigen::MatrixXd A3(n, 3);
  A3 << A, Eigen::VectorXd::NullaryExpr(n, [&](Eigen::Index i) { return 1 / (r.lambdas[i] * r.lambdas[i]); });
  const Eigen::Vector3d c3 = A3.colPivHouseholderQr().solve(y);
  r.slope3 = c3[0];
  r.intercept3 = c3[1];
  r.remainder3 = c3[2];
  r.expected_slope = 4 * r.kappa;
  r.expected_intercept = r.kappa * r.kappa * robin - 2 * r.kappa;
  r.slope_error = std::abs(r.slope - r.expected_slope) / std::abs(r.expected_slope);
  r.intercept_error = std::abs(r.intercept - r.expected_intercept) / std::abs(r.expected_intercept);
  return r;
}

double cross_energy(const BubbleProjector& P, const BubbleParams& a, const BubbleParams& b) {
  return P.inner(P.project(a), P.project(b));
}

// ------------------------------------------------------------------ ansatz

namespace {

struct Layout {
  int p = 0, q = 0;
  int size() const { return p + q; }
  int dim(int i) const { return i < p ? 4 : 3; }  // alpha, ln lambda, centre coordinates
  int offset(int i) const { return i <= p ? 4 * i : 4 * p + 3 * (i - p); }
  int total() const { return 4 * p + 3 * q; }
};

Eigen::VectorXd pack(const Layout& lay, const std::vector<double>& alphas, const std::vector<BubbleParams>& params) {
  Eigen::VectorXd t(lay.total());
  for (int i = 0; i < lay.size(); ++i) {
    const int o = lay.offset(i);
    t[o] = alphas[i];
    t[o + 1] = std::log(params[i].lambda);
    if (i < lay.p) {
      t[o + 2] = params[i].center.x.x();
      t[o + 3] = params[i].center.x.y();
    } else {
      t[o + 2] = params[i].center.s;
    }
  }
  return t;
}

void unpack(const SurfaceMesh& M, const Layout& lay, const Eigen::VectorXd& t, std::vector<double>& alphas, std::vector<BubbleParams>& params) {
  for (int i = 0; i < lay.size(); ++i) {
    const int o = lay.offset(i);
    alphas[i] = t[o];
    params[i].lambda = std::exp(t[o + 1]);
    if (i < lay.p) {
      params[i].center = SurfacePoint();
      params[i].center.x = Vec2(t[o + 2], t[o + 3]);
    } else {
      params[i].center = M.boundary_point(params[i].center.loop, t[o + 2]);
    }
  }
}

BubbleParams shifted(const SurfaceMesh& M, const BubbleParams& bp, int coord, double h) {
  BubbleParams b = bp;
  if (coord == 0) {
    b.lambda = bp.lambda * std::exp(h);
  } else if (bp.center.on_boundary()) {
    b.center = M.boundary_point(bp.center.loop, bp.center.s + h);
  } else {
    b.center.x[coord - 1] += h;
  }
  return b;
}

// Derivatives of P delta in ln lambda and the centre coordinates.
std::vector<VectorXd> derivatives(const BubbleProjector& P, const BubbleParams& bp, double rel) {
  const auto& M = P.mesh();
  const int nc = bp.center.on_boundary() ? 2 : 3;
  std::vector<VectorXd> out;
  for (int k = 0; k < nc; ++k) {
    const double h = k == 0 ? rel : rel * bp.cutoff;
    out.push_back((P.project(shifted(M, bp, k, h)) - P.project(shifted(M, bp, k, -h))) / (2 * h));
  }
  return out;
}

void finish(const BubbleProjector& P, Ansatz& a, const VectorXd* u, double rel) {
  const int n = static_cast<int>(a.params.size());
  a.psi = VectorXd::Zero(P.mesh().num_vertices());
  std::vector<VectorXd> cols(n);
  for (int i = 0; i < n; ++i) {
    cols[i] = P.project(a.params[i]);
    a.psi += a.alphas[i] * cols[i];
  }
  a.orthogonality.assign(n, {});
  a.orthogonality_max = 0;
  if (!u) {
    a.remainder = VectorXd::Zero(a.psi.size());
    a.remainder_norm = 0;
    return;
  }
  a.remainder = *u - a.psi;
  a.remainder_norm = P.norm(a.remainder);
  for (int i = 0; i < n; ++i) {
    auto& o = a.orthogonality[i];
    o.push_back(P.inner(a.remainder, cols[i]));
    for (const auto& d : derivatives(P, a.params[i], rel)) o.push_back(P.inner(a.remainder, d));
    for (double v : o) a.orthogonality_max = std::max(a.orthogonality_max, std::abs(v));
  }
}

}  // namespace

Ansatz make_ansatz(const BubbleProjector& P, const std::vector<double>& alphas, const std::vector<BubbleParams>& params, int p) {
  if (alphas.size() != params.size()) throw std::invalid_argument("ansatz needs one alpha per bubble");
  Ansatz a;
  a.alphas = alphas;
  a.params = params;
  if (p < 0) {
    p = 0;
    for (const auto& bp : params) p += !bp.center.on_boundary();
  }
  a.p = p;
  a.q = static_cast<int>(params.size()) - p;
  for (int i = 0; i < a.p + a.q; ++i)
    if (params[i].center.on_boundary() != (i >= a.p)) throw std::invalid_argument("ansatz lists interior bubbles first");
  finish(P, a, nullptr, 1e-5);
  return a;
}

Ansatz fit_decomposition(const BubbleProjector& P, const VectorXd& u, int p, int q, const Ansatz& init, const FitOptions& opt) {
  const auto& M = P.mesh();
  const auto& L = P.laplacian();
  if (u.size() != M.num_vertices()) throw std::invalid_argument("field size does not match the mesh");
  if (std::abs(L.integrate(u)) > 1e-8 * std::max(1.0, u.cwiseAbs().maxCoeff())) throw std::invalid_argument("field must have zero mean");
  if (static_cast<int>(init.params.size()) != p + q || static_cast<int>(init.alphas.size()) != p + q)
    throw std::invalid_argument("initial guess must list p + q bubbles");
  const Layout lay{p, q};
  for (int i = 0; i < p + q; ++i)
    if (init.params[i].center.on_boundary() != (i >= p)) throw std::invalid_argument("initial guess lists interior bubbles first");
  double sep_min = opt.separation_min;
  if (sep_min <= 0)
    for (const auto& bp : init.params) sep_min = std::max(sep_min, 2 * bp.cutoff);

  std::vector<double> alphas = init.alphas;
  std::vector<BubbleParams> params = init.params;
  auto admissible = [&](const std::vector<BubbleParams>& ps) {
    for (size_t i = 0; i < ps.size(); ++i) {
      if (ps[i].lambda < opt.lambda_min) return false;
      try {
        P.check(ps[i]);
      } catch (const BubbleError&) {
        return false;
      }
      if (!ps[i].center.on_boundary()) {
        int tri;
        Eigen::Vector3d bary;
        if (!M.locate(ps[i].center.x, tri, bary, 1e-9)) return false;
      }
      for (size_t j = 0; j < i; ++j)
        if ((ps[i].center.x - ps[j].center.x).norm() < sep_min) return false;
    }
    return true;
  };
  if (!admissible(params)) throw FitError("initial guess is outside the admissible set");

  const SpMat& K = L.stiffness();
  auto model = [&](const std::vector<double>& al, const std::vector<BubbleParams>& ps, std::vector<VectorXd>* cols) {
    VectorXd psi = VectorXd::Zero(u.size());
    for (size_t i = 0; i < ps.size(); ++i) {
      VectorXd c = P.project(ps[i]);
      psi += al[i] * c;
      if (cols) cols->push_back(std::move(c));
    }
    return psi;
  };
  std::vector<VectorXd> cols;
  VectorXd r = u - model(alphas, params, &cols);
  double obj = r.dot(K * r);
  const double scale = std::max(1e-300, u.dot(K * u));
  Eigen::VectorXd t = pack(lay, alphas, params);
  double mu = 1e-4;
  Ansatz a;
  a.p = p;
  a.q = q;
  for (int it = 0; it < opt.max_iterations; ++it) {
    a.iterations = it;
    if (obj <= 1e-28 * scale) {
      a.converged = true;
      break;
    }
    // Jacobian of psi: alpha columns are the bubbles, the rest alpha_i times
    // the finite-difference derivatives
    const int nt = lay.total();
    std::vector<VectorXd> J(nt);
    for (int i = 0; i < p + q; ++i) {
      const int o = lay.offset(i);
      J[o] = cols[i];
      const auto d = derivatives(P, params[i], opt.fd_step);
      for (size_t k = 0; k < d.size(); ++k) J[o + 1 + k] = alphas[i] * d[k];
    }
    Eigen::MatrixXd N(nt, nt);
    Eigen::VectorXd g(nt);
    std::vector<VectorXd> KJ(nt);
    for (int a2 = 0; a2 < nt; ++a2) KJ[a2] = K * J[a2];
    for (int a2 = 0; a2 < nt; ++a2) {
      g[a2] = KJ[a2].dot(r);
      for (int b = 0; b <= a2; ++b) N(a2, b) = N(b, a2) = KJ[a2].dot(J[b]);
    }
    bool accepted = false;
    Eigen::VectorXd step;
    while (mu < 1e12) {
      Eigen::MatrixXd A = N;
      for (int k = 0; k < nt; ++k) A(k, k) += mu * std::max(N(k, k), 1e-300);
      step = A.ldlt().solve(g);
      const Eigen::VectorXd tt = t + step;
      std::vector<double> al2 = alphas;
      std::vector<BubbleParams> ps2 = params;
      unpack(M, lay, tt, al2, ps2);
      if (admissible(ps2)) {
        std::vector<VectorXd> c2;
        const VectorXd r2 = u - model(al2, ps2, &c2);
        const double o2 = r2.dot(K * r2);
        if (o2 <= obj) {
          t = tt;
          alphas = std::move(al2);
          params = std::move(ps2);
          cols = std::move(c2);
          r = r2;
          obj = o2;
          mu = std::max(mu / 10, 1e-12);
          accepted = true;
          break;
        }
      }
      mu *= 10;
    }
    if (!accepted) {
      // no admissible decrease: converged if the gradient is already at noise level
      if (g.norm() <= 1e-10 * std::sqrt(scale) * std::sqrt(N.diagonal().sum())) a.converged = true;
      break;
    }
    double rel = 0;
    for (int k = 0; k < nt; ++k) rel = std::max(rel, std::abs(step[k]) / std::max(1.0, std::abs(t[k])));
    if (rel < opt.step_tol) {
      a.converged = true;
      break;
    }
  }
  if (!a.converged) throw FitError("decomposition fit did not converge");
  a.alphas = alphas;
  a.params = params;
  finish(P, a, &u, opt.fd_step);
  return a;
}

std::vector<int> bubble_peaks(const SurfaceMesh& M, const VectorXd& u, int p, int q, double sep) {
  std::vector<int> order(M.num_vertices());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) { return u[a] > u[b]; });
  std::vector<int> bnd, inn;
  auto far = [&](int v) {
    for (int w : bnd)
      if ((M.vertices[v] - M.vertices[w]).norm() < sep) return false;
    for (int w : inn)
      if ((M.vertices[v] - M.vertices[w]).norm() < sep) return false;
    return true;
  };
  for (int v : order)
    if (static_cast<int>(bnd.size()) < q && M.is_boundary(v) && far(v)) bnd.push_back(v);
  for (int v : order)
    if (static_cast<int>(inn.size()) < p && !M.is_boundary(v) && far(v) && M.boundary_distance(M.vertices[v]) > sep / 2) inn.push_back(v);
  if (static_cast<int>(bnd.size()) < q || static_cast<int>(inn.size()) < p) throw FitError("could not place the bubble centres");
  inn.insert(inn.end(), bnd.begin(), bnd.end());
  return inn;
}

Ansatz initial_ansatz(const BubbleProjector& P, const VectorXd& u, int p, int q,
                      const std::function<double(const SurfacePoint&)>& robin, const FitOptions& opt) {
  const auto& M = P.mesh();
  const std::vector<int> vs = bubble_peaks(M, u, p, q, 0.2 * M.diameter);
  std::vector<SurfacePoint> pts;
  for (int v : vs) pts.push_back(M.vertex_point(v));
  std::vector<BubbleParams> init;
  for (size_t i = 0; i < pts.size(); ++i) {
    std::vector<SurfacePoint> others;
    for (size_t j = 0; j < pts.size(); ++j)
      if (j != i) others.push_back(pts[j]);
    const double lam = std::exp((u[vs[i]] - kappa(pts[i]) * robin(pts[i])) / 4);
    init.push_back({std::max(lam, opt.lambda_min * 1.5), pts[i], default_cutoff(M, pts[i], others)});
  }
  return make_ansatz(P, std::vector<double>(pts.size(), 1.0), init, p);
}

}  // namespace mfdeg
