#include "mfdeg/solver.hpp"

#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace mfdeg {

namespace {

constexpr double kPi = 3.14159265358979323846;

double resonance(double rho) { return 4 * kPi * std::round(rho / (4 * kPi)); }

double h1(const NeumannLaplacian& L, const VectorXd& u) { return std::sqrt(std::max(0.0, L.inner(u, u))); }

using Triplets = std::vector<Eigen::Triplet<double>>;

// Rows and columns 0..n-1 hold K - rho D / Z; n is the mean multiplier, n+1
// the auxiliary t = c^T du carrying the rank-one term c c^T, c = sqrt(rho) b / Z.
void bordered(const MeanFieldProblem& prob, const VectorXd& b, double Z, Triplets& T, VectorXd& c) {
  const auto& L = prob.laplacian();
  const SpMat& K = L.stiffness();
  const int n = L.size();
  const double rho = prob.rho();
  T.reserve(K.nonZeros() + 4 * n + 2);
  for (int k = 0; k < K.outerSize(); ++k)
    for (SpMat::InnerIterator it(K, k); it; ++it) T.emplace_back(it.row(), it.col(), it.value());
  c = std::sqrt(rho) * b / Z;
  for (int i = 0; i < n; ++i) {
    T.emplace_back(i, i, -rho * b[i] / Z);
    T.emplace_back(i, n, L.mass()[i]);
    T.emplace_back(n, i, L.mass()[i]);
    T.emplace_back(i, n + 1, c[i]);
    T.emplace_back(n + 1, i, c[i]);
  }
  T.emplace_back(n + 1, n + 1, -1.0);
}

// Smallest singular value estimate by inverse iteration on A^T A.
double sigma_min(Eigen::SparseLU<SpMat>& lu, int n) {
  VectorXd x = VectorXd::Ones(n).normalized();
  double s = 0;
  for (int it = 0; it < 8; ++it) {
    VectorXd y = lu.transpose().solve(x);
    VectorXd z = lu.solve(y);
    if (!z.allFinite()) return 0;
    s = z.norm();
    if (!(s > 0)) return 0;
    x = z / s;
  }
  return 1 / std::sqrt(s);
}

void factor(Eigen::SparseLU<SpMat>& lu, const SpMat& A) {
  lu.analyzePattern(A);
  lu.factorize(A);
  if (lu.info() != Eigen::Success) throw SingularJacobian("bordered Jacobian is singular: " + lu.lastErrorMessage(), 0);
}

void check_step(Eigen::SparseLU<SpMat>& lu, const VectorXd& x, double scale) {
  if (!x.allFinite() || x.norm() > 1e12 * std::max(1.0, scale)) {
    const double s = sigma_min(lu, static_cast<int>(x.size()));
    throw SingularJacobian("Newton step blew up; smallest singular value estimate " + std::to_string(s), s);
  }
}

}  // namespace

// ------------------------------------------------------------------- problem

MeanFieldProblem::MeanFieldProblem(std::shared_ptr<const NeumannLaplacian> L, Potential V, double rho)
    : L_(std::move(L)), V_(std::move(V)), rho_(rho) {
  if (!(rho >= 0) || !std::isfinite(rho)) throw std::invalid_argument("rho must be finite and non-negative");
  if (std::abs(mesh().total_area - 1) > 1e-9) throw std::invalid_argument("mesh area must be 1");
  const auto& M = mesh();
  Vv_.resize(M.num_vertices());
  for (int v = 0; v < M.num_vertices(); ++v) {
    Vv_[v] = V_(M.vertices[v].x(), M.vertices[v].y());
    if (!(Vv_[v] > 0) || !std::isfinite(Vv_[v])) throw std::invalid_argument("potential must be positive on the mesh");
  }
}

MeanFieldProblem MeanFieldProblem::with_rho(double rho) const {
  MeanFieldProblem p = *this;
  if (!(rho >= 0) || !std::isfinite(rho)) throw std::invalid_argument("rho must be finite and non-negative");
  p.rho_ = rho;
  return p;
}

VectorXd MeanFieldProblem::weight(const VectorXd& u) const {
  if (u.size() != Vv_.size()) throw std::invalid_argument("field size does not match the mesh");
  if (!u.allFinite()) throw OverflowError("field is not finite");
  const double top = u.maxCoeff();
  if (top > max_u) throw OverflowError("max u = " + std::to_string(top) + " exceeds the e^u guard " + std::to_string(max_u));
  return L_->mass().cwiseProduct(Vv_).cwiseProduct(u.array().exp().matrix());
}

VectorXd MeanFieldProblem::source(const VectorXd& u) const {
  const VectorXd b = weight(u);
  const VectorXd& m = L_->mass();
  return rho_ * (b / b.sum() - m / m.sum());
}

double energy(const MeanFieldProblem& prob, const VectorXd& u) {
  return 0.5 * prob.laplacian().inner(u, u) - prob.rho() * std::log(prob.Z(u));
}

VectorXd grad_residual(const MeanFieldProblem& prob, const VectorXd& u) {
  return u - prob.laplacian().solve_projected(prob.source(u));
}

const char* to_string(SolveClass c) { return c == SolveClass::regular ? "regular" : "near_blowup"; }

// -------------------------------------------------------------------- Newton

namespace {

SolveResult finish(const MeanFieldProblem& prob, VectorXd u, double res, int iters, const SolveOptions& opt,
                   std::vector<double> history = {}) {
  SolveResult r;
  r.energy_history = std::move(history);
  r.rho = prob.rho();
  r.residual_norm = res;
  r.newton_iters = iters;
  r.energy = energy(prob, u);
  r.sup_u = u.maxCoeff();
  r.h1_norm = h1(prob.laplacian(), u);
  r.cls = r.sup_u > opt.near_blowup_sup ? SolveClass::near_blowup : SolveClass::regular;
  r.converged = true;
  r.u = std::move(u);
  return r;
}

double residual_norm(const MeanFieldProblem& prob, const VectorXd& u) { return h1(prob.laplacian(), grad_residual(prob, u)); }

}  // namespace

SolveResult newton_solve(const MeanFieldProblem& prob, const VectorXd& u0, const SolveOptions& opt) {
  const auto& L = prob.laplacian();
  const int n = L.size();
  if (u0.size() != n) throw std::invalid_argument("initial field size does not match the mesh");
  if (std::abs(L.integrate(u0)) > 1e-8 * std::max(1.0, u0.lpNorm<Eigen::Infinity>()))
    throw std::invalid_argument("initial field must have zero mean");
  VectorXd u = L.zero_mean(u0);
  double res = residual_norm(prob, u);
  std::vector<double> hist{energy(prob, u)};
  for (int it = 0; it < opt.max_iters; ++it) {
    if (res <= opt.tol) return finish(prob, std::move(u), res, it, opt, std::move(hist));
    const VectorXd b = prob.weight(u);
    const double Z = b.sum();
    Triplets T;
    VectorXd c;
    bordered(prob, b, Z, T, c);
    SpMat A(n + 2, n + 2);
    A.setFromTriplets(T.begin(), T.end());
    Eigen::SparseLU<SpMat> lu;
    factor(lu, A);
    VectorXd rhs = VectorXd::Zero(n + 2);
    rhs.head(n) = -(L.apply(u) - prob.source(u));
    rhs[n] = -L.mass().dot(u);
    const VectorXd x = lu.solve(rhs);
    check_step(lu, x, u.norm());
    const VectorXd du = x.head(n);
    // e^u changes by at most a factor e^2 per iteration
    double t = std::min(1.0, opt.max_sup_step / std::max(1e-300, du.lpNorm<Eigen::Infinity>()));
    bool accepted = false;
    for (int k = 0; k < opt.max_backtracks; ++k, t *= 0.5) {
      VectorXd trial = L.zero_mean(u + t * du);
      double r2;
      try {
        r2 = residual_norm(prob, trial);
      } catch (const OverflowError&) {
        continue;
      }
      if (std::isfinite(r2) && r2 <= (1 - 1e-4 * t) * res) {
        u = std::move(trial);
        res = r2;
        hist.push_back(energy(prob, u));
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      // rounding floor: a residual this close to tol cannot be improved
      if (res <= 10 * opt.tol) return finish(prob, std::move(u), res, it + 1, opt, std::move(hist));
      throw SolverError("line search failed at residual " + std::to_string(res));
    }
  }
  if (res <= opt.tol) return finish(prob, std::move(u), res, opt.max_iters, opt, std::move(hist));
  throw SolverError("Newton did not converge in " + std::to_string(opt.max_iters) + " iterations (residual " + std::to_string(res) + ")");
}

// ----------------------------------------------------------- pseudo-arclength

namespace {

// Newton on (u, rho) with the extra equation
//   T_u^T K (u - u_p) + T_rho (rho - rho_p) = 0
// through the predictor (u_p, rho_p) = (u1, rho1) + ds T.
SolveResult arclength_step(const MeanFieldProblem& base, const SolveResult& s0, const SolveResult& s1, double ds,
                           const SolveOptions& opt) {
  const auto& L = base.laplacian();
  const int n = L.size();
  VectorXd Tu = s1.u - s0.u;
  double Tr = s1.rho - s0.rho;
  const double len = std::sqrt(L.inner(Tu, Tu) + Tr * Tr);
  if (!(len > 0)) throw SolverError("arclength tangent vanishes");
  Tu /= len;
  Tr /= len;
  const VectorXd up = s1.u + ds * Tu;
  const double rp = s1.rho + ds * Tr;
  const VectorXd KTu = L.apply(Tu);
  VectorXd u = up;
  double rho = rp;
  for (int it = 0; it < opt.max_iters; ++it) {
    if (!(rho >= 0)) throw SolverError("arclength corrector left rho >= 0");
    const MeanFieldProblem prob = base.with_rho(rho);
    const double res = residual_norm(prob, u);
    const double arc = KTu.dot(u - up) + Tr * (rho - rp);
    if (res <= opt.tol && std::abs(arc) <= 1e-9 * std::max(1.0, std::abs(ds))) return finish(prob, L.zero_mean(u), res, it, opt);
    const VectorXd b = prob.weight(u);
    const double Z = b.sum();
    Triplets T;
    VectorXd c;
    bordered(prob, b, Z, T, c);
    const VectorXd Grho = -(b / Z - L.mass() / L.mass().sum());
    for (int i = 0; i < n; ++i) {
      if (Grho[i] != 0) T.emplace_back(i, n + 2, Grho[i]);
      if (KTu[i] != 0) T.emplace_back(n + 2, i, KTu[i]);
    }
    T.emplace_back(n + 2, n + 2, Tr);
    SpMat A(n + 3, n + 3);
    A.setFromTriplets(T.begin(), T.end());
    Eigen::SparseLU<SpMat> lu;
    factor(lu, A);
    VectorXd rhs = VectorXd::Zero(n + 3);
    rhs.head(n) = -(L.apply(u) - prob.source(u));
    rhs[n] = -L.mass().dot(u);
    rhs[n + 2] = -arc;
    const VectorXd x = lu.solve(rhs);
    check_step(lu, x, u.norm());
    // damp only against overflow; the augmented system has no merit function
    double t = 1;
    for (int k = 0; k < opt.max_backtracks; ++k, t *= 0.5)
      if ((u + t * x.head(n)).maxCoeff() <= base.max_u) break;
    u = L.zero_mean(u + t * x.head(n));
    rho += t * x[n + 2];
  }
  throw SolverError("arclength corrector did not converge");
}

VectorXd bubble_guess(const MeanFieldProblem& prob, const BubbleWarmStart& bw) {
  const auto sc = predicted_scales(*bw.kr, bw.xi, prob.rho());
  if (!sc) throw SolverError("bubble warm start: the mu law predicts no blow-up on this side");
  const auto& M = prob.mesh();
  const auto& TM = bw.kr->mesh();
  std::vector<SurfacePoint> pts;
  for (const auto& y : bw.xi.points) {
    if (!y.on_boundary()) {
      SurfacePoint x;
      x.x = y.x;
      pts.push_back(x);
    } else {
      const double s = y.s / TM.boundary_loops[y.loop].length * M.boundary_loops[y.loop].length;
      pts.push_back(M.boundary_point(y.loop, s));
    }
  }
  const BubbleProjector P(prob.laplacian_ptr());
  VectorXd u = VectorXd::Zero(M.num_vertices());
  for (size_t i = 0; i < pts.size(); ++i) {
    std::vector<SurfacePoint> others;
    for (size_t j = 0; j < pts.size(); ++j)
      if (j != i) others.push_back(pts[j]);
    const BubbleParams bp{std::min((*sc)[i], bw.lambda_max), pts[i], default_cutoff(M, pts[i], others)};
    u += P.project(bp);
  }
  return u;
}

}  // namespace

std::optional<std::vector<double>> predicted_scales(const KirchhoffRouth& kr, const Configuration& xi, double rho) {
  const int m = 2 * xi.p + xi.q;
  if (m < 1) throw std::invalid_argument("configuration is empty");
  const double rs = 4 * kPi * m;
  const double mu = (rho - rs) / rs;
  const double Lv = kr.L(xi);
  if (!(mu * Lv > 0)) return std::nullopt;
  std::vector<double> F(xi.size());
  for (int i = 0; i < xi.size(); ++i) F[i] = kr.F(xi.points[i], xi, i);
  double l1;
  if (xi.q) {
    // mu int V e^u = (pi/4) L1 sqrt(F^1) lambda_1 with int V e^u = rho* F^1 lambda_1^2 / 8
    l1 = 2 * kPi * Lv / (rs * std::sqrt(F[0]) * mu);
  } else {
    // lambda^2 / ln lambda = L2 / (2 rho* F^1 mu)
    const double A = Lv / (2 * rs * F[0] * mu);
    if (A <= 2 * std::exp(1.0)) return std::nullopt;
    l1 = std::sqrt(A * std::log(A));
    for (int it = 0; it < 100; ++it) l1 = std::sqrt(A * std::log(l1));
  }
  std::vector<double> lam(xi.size());
  for (int i = 0; i < xi.size(); ++i) lam[i] = l1 * std::sqrt(F[0] / F[i]);
  return lam;
}

// --------------------------------------------------------------- continuation

ContinuationResult continuation(const MeanFieldProblem& prob, const std::vector<double>& rho_path, const VectorXd& u0,
                                const ContinuationOptions& opt) {
  if (rho_path.empty()) throw std::invalid_argument("empty rho path");
  const double dir = rho_path.size() > 1 ? (rho_path.back() > rho_path.front() ? 1 : -1) : 1;
  for (size_t k = 0; k < rho_path.size(); ++k) {
    const double r = rho_path[k];
    if (!(r >= 0)) throw std::invalid_argument("rho path values must be non-negative");
    if (k && !((r - rho_path[k - 1]) * dir > 0)) throw std::invalid_argument("rho path must be strictly monotone");
    if (r > 0 && std::abs(r - resonance(r)) < opt.resonance_band)
      throw std::invalid_argument("rho = " + std::to_string(r) + " is inside the resonance band around 4 pi N");
  }

  ContinuationResult out;
  try {
    out.steps.push_back(newton_solve(prob.with_rho(rho_path[0]), u0, opt.solve));
    out.kinds.push_back("plain");
  } catch (const SolverError& e) {
    out.truncated = true;
    out.message = std::string("first point failed: ") + e.what();
    return out;
  }

  for (size_t k = 1; k < rho_path.size(); ++k) {
    const double target = rho_path[k];
    double h = target - out.steps.back().rho;
    int failures = 0, halvings = 0;
    while (out.steps.back().rho != target) {
      const SolveResult& cur = out.steps.back();
      const double next = std::abs(target - cur.rho) <= std::abs(h) ? target : cur.rho + h;
      const MeanFieldProblem p = prob.with_rho(next);
      try {
        out.steps.push_back(newton_solve(p, cur.u, opt.solve));
        out.kinds.push_back(halvings ? "bisected" : "plain");
        failures = 0;
        continue;
      } catch (const SolverError&) {
        ++failures;
      }
      if (opt.bubble && cur.cls == SolveClass::near_blowup) {
        try {
          out.steps.push_back(newton_solve(p, bubble_guess(p, *opt.bubble), opt.solve));
          out.kinds.push_back("bubble");
          failures = 0;
          continue;
        } catch (const SolverError&) {
        } catch (const BubbleError&) {
        }
      }
      if (failures >= opt.arclength_after && out.steps.size() >= 2) {
        try {
          const SolveResult& s0 = out.steps[out.steps.size() - 2];
          const double ds = std::abs(h) * std::sqrt(1 + prob.laplacian().inner(cur.u - s0.u, cur.u - s0.u) /
                                                            std::max(1e-300, (cur.rho - s0.rho) * (cur.rho - s0.rho)));
          SolveResult r = arclength_step(prob, s0, cur, ds, opt.solve);
          const bool past = (r.rho - target) * dir > 0;
          const bool band = r.rho > 0 && std::abs(r.rho - resonance(r.rho)) < opt.resonance_band;
          if (!band) {
            out.steps.push_back(std::move(r));
            out.kinds.push_back("arclength");
            failures = 0;
            if (past) h = target - out.steps.back().rho;
            continue;
          }
        } catch (const SolverError&) {
        }
      }
      if (++halvings > opt.max_bisections) {
        out.truncated = true;
        out.message = "step failed below the bisection floor at rho = " + std::to_string(cur.rho) + " toward " + std::to_string(target);
        return out;
      }
      h *= 0.5;
    }
  }
  return out;
}

// ------------------------------------------------------------- diagnostics

namespace {

// The same geometric point on the Green table's mesh.
SurfacePoint on_table(const SurfaceMesh& from, const SurfaceMesh& to, const SurfacePoint& y) {
  if (!y.on_boundary()) {
    SurfacePoint x;
    x.x = y.x;
    return x;
  }
  return to.boundary_point(y.loop, y.s / from.boundary_loops[y.loop].length * to.boundary_loops[y.loop].length);
}

}  // namespace

BlowupDiagnostics blowup_diagnostics(const MeanFieldProblem& prob, const SolveResult& res, int p, int q, const KirchhoffRouth& kr,
                                     const DiagnosticOptions& opt) {
  if (p < 0 || q < 0 || 2 * p + q < 1) throw std::invalid_argument("need p, q >= 0 with 2p + q >= 1");
  const auto& M = prob.mesh();
  const auto& TM = kr.mesh();
  const VectorXd& u = res.u;
  BlowupDiagnostics d;
  d.p = p;
  d.q = q;
  d.m = 2 * p + q;
  const double rs = 4 * kPi * d.m;
  const MeanFieldProblem pr = prob.with_rho(res.rho);

  const BubbleProjector P(prob.laplacian_ptr());
  const Ansatz guess = initial_ansatz(
      P, u, p, q, [&](const SurfacePoint& y) { return kr.table().robin(on_table(M, TM, y)); }, opt.fit);
  d.fit = fit_decomposition(P, u, p, q, guess, opt.fit);
  for (const auto& bp : d.fit.params)
    if (bp.lambda < opt.lambda_floor)
      throw FitError("fitted lambda " + std::to_string(bp.lambda) + " is below the resolution floor " + std::to_string(opt.lambda_floor));

  d.xi_fit.p = p;
  d.xi_fit.q = q;
  for (const auto& bp : d.fit.params) d.xi_fit.points.push_back(on_table(M, TM, bp.center));
  d.xi_critical = d.xi_fit;
  Configuration c = d.xi_fit;
  if (kr.refine(c, 1e-6 * rs * rs)) {
    d.xi_critical = c;
    d.critical_refined = true;
  }

  const VectorXd w = pr.weight(u);
  d.Z = w.sum();
  const int N = p + q;
  d.tau.resize(N);
  d.f2.resize(N);
  d.f3.assign(N, 0);
  d.g.resize(N);
  d.local_mass.resize(N);
  const auto& T = kr.table();
  std::vector<int> near;
  for (int i = 0; i < N; ++i) {
    const SurfacePoint& yi = d.xi_fit.points[i];
    const double a = d.fit.alphas[i], lam = d.fit.params[i].lambda;
    double eg = (a - 1) * kappa(yi) * T.robin(yi);
    for (int j = 0; j < N; ++j)
      if (j != i) eg += (d.fit.alphas[j] - 1) * kappa(d.xi_fit.points[j]) * T.green(yi, d.xi_fit.points[j]);
    d.g[i] = std::exp(eg);
    const double Fg = kr.F(yi, d.xi_fit, i) * d.g[i];
    d.tau[i] = 1 - rs / (8 * (2 * a - 1)) * Fg / d.Z * std::pow(lam, 4 * a - 2);
    d.f2[i] = kr.f2(d.xi_fit, i) * d.g[i];
    if (i < p) d.f3[i] = kr.f3(d.xi_fit, i) * d.g[i];
    M.vertices_within(d.fit.params[i].center.x, 2 * d.fit.params[i].cutoff, near);
    double s = 0;
    for (int v : near) s += w[v];
    d.local_mass[i] = res.rho * s / d.Z;
  }

  d.L = kr.L(d.xi_critical, &d.L_error);
  d.mu_observed = (res.rho - rs) / rs;
  const double F1 = kr.F(d.xi_fit.points[0], d.xi_fit, 0);
  const double l1 = d.fit.params[0].lambda;
  d.mu_predicted = q ? kPi / 4 / d.Z * d.L * std::sqrt(F1) * l1 : 1.0 / 16 / d.Z * d.L * std::log(l1);
  d.sign_agreement = (d.mu_observed > 0) == (d.L > 0) && d.mu_observed != 0 && d.L != 0;
  return d;
}

}  // namespace mfdeg
