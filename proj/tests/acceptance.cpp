// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include "disk_oracle.hpp"
#include "mfdeg/degree.hpp"
#include "mfdeg/solver.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>

using namespace mfdeg;
using oracle::kA;
using oracle::kPi;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

// Collects sub-checks; the first failing one is reported.
struct Checks {
  Outcome out;
  std::ostringstream notes;
  void require(bool ok, const std::string& what) {
    if (!ok && out.pass) {
      out.pass = false;
      out.detail = what;
    }
  }
  Outcome finish() {
    if (out.pass) out.detail = notes.str();
    return out;
  }
};

// ---------------------------------------------------------------- 1

Outcome degree_tables() {
  using degree::BigInt;
  Checks c;
  int cells = 0;
  for (int chi = -5; chi <= 2; ++chi) {
    BigInt running = 1;
    for (int m = 1; m <= 20; ++m) {
      const int l = (m - 1) / 2;
      // 1/l! prod_{i=1..l} (i - chi), evaluated here without the library
      BigInt num = 1, den = 1;
      for (int i = 1; i <= l; ++i) {
        num *= BigInt(i - chi);
        den *= i;
      }
      const BigInt product = num / den;
      c.require(num % den == 0, "product form not integral at m=" + std::to_string(m));
      const BigInt d = degree::degree_nonresonant(m, chi);
      c.require(d == product, "d != product form at m=" + std::to_string(m) + " chi=" + std::to_string(chi));
      c.require(degree::degree_binomial(m, chi) == product, "d != binomial form at m=" + std::to_string(m) + " chi=" + std::to_string(chi));
      c.require(running == d, "telescoping fails at m=" + std::to_string(m) + " chi=" + std::to_string(chi));
      const BigInt j = degree::degree_jump(m, chi);
      if (m % 2) c.require(j == 0, "odd jump nonzero at m=" + std::to_string(m) + " chi=" + std::to_string(chi));
      running += j;
      ++cells;
    }
  }
  c.notes << cells << " (m, chi) cells exact";
  return c.finish();
}

// ---------------------------------------------------------------- 2

Outcome poincare_hopf() {
  Checks c;
  struct Domain {
    std::string name;
    std::function<SurfaceMesh()> make;
  };
  const std::vector<Domain> domains{{"disk", [] { return make_disk(12, 10); }}, {"annulus", [] { return make_annulus(0.4, 144, 24); }}};
  for (const auto& dom : domains) {
    auto L = std::make_shared<NeumannLaplacian>(dom.make());
    const int chi = topology(L->mesh()).chi;
    const auto T = std::make_shared<const GreenTable>(L, GreenTable::Options{});
    const KirchhoffRouth K(T, Potential::parse("1+0.3*x"));
    for (auto [p, q] : {std::pair{1, 0}, {0, 1}, {0, 2}}) {
      const auto r = K.find_critical_points(p, q, 200, 1e-3, 17);
      const long want = degree::ph_degree(p, q, chi).convert_to<long>();
      const std::string tag = dom.name + " (" + std::to_string(p) + "," + std::to_string(q) + ")";
      c.require(r.signed_sum == want, tag + ": signed sum " + std::to_string(r.signed_sum) + " != " + std::to_string(want));
      c.require(r.all_nondegenerate, tag + ": degenerate critical point, sum not certified");
      c.notes << tag << " " << r.signed_sum << "/" << r.points.size() << "pts; ";
    }
  }
  return c.finish();
}

// ---------------------------------------------------------------- 3

Outcome bubble_mass() {
  Checks c;
  double worst = 0;
  for (double l : {1.0, 20.0, 100.0, 1000.0}) worst = std::max(worst, std::abs(planar_bubble_mass(l) / (8 * kPi) - 1));
  c.require(worst <= 1e-4, "relative mass error " + std::to_string(worst));
  c.notes << "max rel err " << worst;
  return c.finish();
}

// ---------------------------------------------------------------- 4

Outcome green_oracle() {
  Checks c;
  auto L = std::make_shared<NeumannLaplacian>(make_disk(16));
  const auto& m = L->mesh();
  double worst = 0;
  for (int pole : {m.nearest_vertex(Vec2::Zero()), m.nearest_vertex(Vec2(0.2, 0.15)), m.boundary_loops[0].verts[10]}) {
    const auto G = green(*L, pole);
    double err = 0, scale = 0;
    for (int v = 0; v < m.num_vertices(); ++v) {
      if ((m.vertices[v] - m.vertices[pole]).norm() < 0.1) continue;
      const double ex =
          m.is_boundary(pole) ? oracle::disk_green_boundary(m.vertices[v], m.vertices[pole]) : oracle::disk_green(m.vertices[v], m.vertices[pole]);
      err = std::max(err, std::abs(G.values[v] - ex));
      scale = std::max(scale, std::abs(ex));
    }
    worst = std::max(worst, err / scale);
  }
  c.require(worst <= 0.01, "images oracle rel err " + std::to_string(worst));
  GreenCache cache(L);
  std::mt19937 rng(2024);
  std::uniform_int_distribution<int> pick(0, L->size() - 1);
  double asym = 0;
  for (int k = 0; k < 40; ++k) {
    const int x = pick(rng), y = pick(rng);
    if (x == y) continue;
    const double gxy = cache.column(y)[x], gyx = cache.column(x)[y];
    asym = std::max(asym, std::abs(gxy - gyx) / std::max(std::abs(gxy), 1e-3));
  }
  c.require(asym <= 1e-6, "asymmetry " + std::to_string(asym));
  c.notes << "oracle rel err " << worst << ", asymmetry " << asym;
  return c.finish();
}

// ---------------------------------------------------------------- 5

Outcome self_energy() {
  Checks c;
  const std::vector<double> grid{20, 30, 45, 67, 100};
  for (bool boundary : {false, true}) {
    const SurfaceMesh base = make_disk(12, 10);
    const SurfacePoint c0 = base.vertex_point(base.nearest_vertex(boundary ? Vec2(kA, 0) : Vec2::Zero()));
    const double cutoff = max_cutoff(base, c0);
    auto mesh = std::make_shared<SurfaceMesh>(refine_for_bubble(base, c0.x, grid.back(), cutoff));
    auto L = std::make_shared<NeumannLaplacian>(mesh);
    const BubbleProjector P(L);
    const SurfacePoint centre = mesh->vertex_point(mesh->nearest_vertex(c0.x));
    const double R = boundary ? oracle::kRobinBoundary : oracle::kRobinCenter;
    const auto r = self_energy_check(P, centre, grid, R, cutoff);
    const std::string tag = boundary ? "boundary" : "interior";
    c.require(r.slope_error <= 0.03, tag + " slope rel err " + std::to_string(r.slope_error));
    c.require(r.intercept_error <= 0.05, tag + " intercept rel err " + std::to_string(r.intercept_error));
    c.notes << tag << " slope " << r.slope_error << " intercept " << r.intercept_error << "; ";
  }
  return c.finish();
}

// ---------------------------------------------------------------- 6

Outcome solver_sanity() {
  Checks c;
  auto L = std::make_shared<NeumannLaplacian>(make_disk(12, 10));
  const MeanFieldProblem P(L, Potential(), 1.0);
  std::vector<double> path;
  for (int k = 0; k < 20; ++k) path.push_back(0.5 + (3.9 * kPi - 0.5) * k / 19);
  const auto cont = continuation(P, path, VectorXd::Zero(L->size()));
  c.require(!cont.truncated && cont.steps.size() == path.size(), "constant-V path truncated: " + cont.message);
  double worst_u = 0, worst_r = 0;
  for (const auto& s : cont.steps) {
    worst_u = std::max(worst_u, s.u.cwiseAbs().maxCoeff());
    worst_r = std::max(worst_r, s.residual_norm);
  }
  // also from a perturbed start
  const MeanFieldProblem Q(L, Potential(), 2 * kPi);
  VectorXd u0 = VectorXd::Zero(L->size());
  for (int v = 0; v < L->size(); ++v) u0[v] = 1e-2 * std::sin(7.0 * v);
  const auto s = newton_solve(Q, L->zero_mean(u0));
  worst_u = std::max(worst_u, s.u.cwiseAbs().maxCoeff());
  worst_r = std::max(worst_r, s.residual_norm);
  c.require(worst_r <= 1e-10, "residual " + std::to_string(worst_r));
  c.require(worst_u <= 1e-10, "constant-V branch left u = 0: " + std::to_string(worst_u));

  // central differences of J against <r, v> in the energy inner product
  const MeanFieldProblem F(L, Potential::parse("1 + 0.3*x"), 5.0);
  const auto& M = L->mesh();
  VectorXd u(L->size()), v(L->size());
  for (int k = 0; k < L->size(); ++k) {
    u[k] = 0.5 * std::sin(3 * M.vertices[k].x() + 0.3) * std::cos(2 * M.vertices[k].y());
    v[k] = std::cos(2 * M.vertices[k].x()) * std::sin(3 * M.vertices[k].y() + 0.1);
  }
  u = L->zero_mean(u);
  v = L->zero_mean(v);
  v /= std::sqrt(L->inner(v, v));
  const double g = L->inner(grad_residual(F, u), v);
  std::vector<double> err;
  for (double t : {4e-2, 2e-2, 1e-2}) err.push_back(std::abs((energy(F, u + t * v) - energy(F, u - t * v)) / (2 * t) - g));
  const double r1 = err[0] / err[1], r2 = err[1] / err[2];
  c.require(r1 > 3.5 && r1 < 4.5 && r2 > 3.5 && r2 < 4.5, "halving ratios " + std::to_string(r1) + ", " + std::to_string(r2));
  c.notes << "max |u| " << worst_u << ", max residual " << worst_r << ", FD halving ratios " << r1 << ", " << r2;
  return c.finish();
}

// ---------------------------------------------------------------- 7

Outcome blowup_sign_law() {
  Checks c;
  const SurfaceMesh base = make_disk(12, 10);
  const Vec2 b = base.vertices[base.nearest_vertex(Vec2(kA, 0))];
  // uniform local refinement: graded meshes add a spurious translation mode
  auto L = std::make_shared<const NeumannLaplacian>(std::make_shared<SurfaceMesh>(refine_toward(base, b, 0.008, 0.0, 0.25)));
  const MeanFieldProblem P(L, Potential::parse("1 + 0.3*x"), 1.0);
  std::vector<double> rho{0.5, 3, 5.5, 8, 10.5};
  for (double mu : {-0.1, -0.08, -0.07, -0.06, -0.055, -0.05, -0.045, -0.04, -0.035}) rho.push_back(4 * kPi * (1 + mu));
  const auto path = continuation(P, rho, VectorXd::Zero(L->size()));
  c.require(!path.truncated, "continuation truncated: " + path.message);

  const auto T = std::make_shared<const GreenTable>(std::make_shared<NeumannLaplacian>(make_disk(12, 10)), GreenTable::Options{});
  const KirchhoffRouth K(T, Potential::parse("1 + 0.3*x"));
  std::vector<std::pair<double, BlowupDiagnostics>> resolved;  // by fitted lambda
  for (const auto& s : path.steps) {
    if (s.cls != SolveClass::near_blowup) continue;
    try {
      resolved.push_back({0, blowup_diagnostics(P, s, 0, 1, K)});
      resolved.back().first = resolved.back().second.fit.params[0].lambda;
    } catch (const FitError&) {
    }
  }
  c.require(resolved.size() >= 3, "fewer than three resolved states");
  if (resolved.size() < 3) return c.finish();
  std::sort(resolved.begin(), resolved.end(), [](const auto& x, const auto& y) { return x.first < y.first; });
  // the norm grows as rho rises toward 4 pi
  for (size_t k = 1; k < path.steps.size(); ++k)
    c.require(path.steps[k].h1_norm > path.steps[k - 1].h1_norm, "norm not increasing along the path");
  for (size_t k = resolved.size() - 3; k < resolved.size(); ++k) {
    const auto& d = resolved[k].second;
    const double ratio = d.mu_observed / d.mu_predicted;
    c.require(d.sign_agreement, "(rho - rho*) L <= 0 at lambda " + std::to_string(resolved[k].first));
    c.require(ratio >= 1.0 / 3 && ratio <= 3, "mu ratio " + std::to_string(ratio) + " at lambda " + std::to_string(resolved[k].first));
    c.notes << "lambda " << resolved[k].first << " mu " << d.mu_observed << "/" << d.mu_predicted << "; ";
  }
  c.notes << "L " << resolved.back().second.L;
  return c.finish();
}

// ---------------------------------------------------------------- 8

Outcome decomposition_round_trip() {
  Checks c;
  auto mesh = std::make_shared<SurfaceMesh>(make_disk(12, 10));
  auto L = std::make_shared<NeumannLaplacian>(mesh);
  const BubbleProjector P(L);
  BubbleParams inner{12, {}, 0.1}, outer{8, mesh->boundary_point(0, 1.0), 0.08};
  inner.center.x = Vec2(0.05, -0.03);
  const Ansatz exact = make_ansatz(P, {1.0, 1.0}, {inner, outer});
  Ansatz guess = exact;
  guess.alphas = {0.9, 1.1};
  guess.params[0].center.x += Vec2(0.02, 0.02);
  guess.params[0].lambda = 10;
  guess.params[1] = {9.5, mesh->boundary_point(0, 1.03), 0.08};

  const Ansatz a = fit_decomposition(P, exact.psi, 1, 1, guess);
  double perr = std::max({std::abs(a.alphas[0] - 1), std::abs(a.alphas[1] - 1), std::abs(a.params[0].lambda / 12 - 1),
                          std::abs(a.params[1].lambda / 8 - 1), (a.params[0].center.x - inner.center.x).norm(), std::abs(a.params[1].center.s - 1.0)});
  c.require(perr <= 1e-6, "parameter error " + std::to_string(perr));
  c.require(a.remainder_norm <= 1e-8, "|w| = " + std::to_string(a.remainder_norm));

  std::mt19937_64 rng(11);
  std::normal_distribution<double> N;
  double lerr = 0;
  for (int trial = 0; trial < 3; ++trial) {
    VectorXd pert(exact.psi.size());
    for (auto& v : pert) v = N(rng);
    pert = L->zero_mean(pert);
    pert *= 1e-3 / P.norm(pert);
    const Ansatz b = fit_decomposition(P, exact.psi + pert, 1, 1, guess);
    lerr = std::max({lerr, std::abs(b.params[0].lambda / 12 - 1), std::abs(b.params[1].lambda / 8 - 1)});
  }
  c.require(lerr <= 0.01, "perturbed lambda rel err " + std::to_string(lerr));
  c.notes << "param err " << perr << ", |w| " << a.remainder_norm << ", perturbed lambda err " << lerr;
  return c.finish();
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"1 degree tables exact", degree_tables},
      {"2 Poincare-Hopf census, disk and annulus", poincare_hopf},
      {"3 planar bubble mass 8 pi", bubble_mass},
      {"4 Green oracle and symmetry", green_oracle},
      {"5 self-energy slope and intercept", self_energy},
      {"6 solver sanity", solver_sanity},
      {"7 blow-up sign law", blowup_sign_law},
      {"8 decomposition round trip", decomposition_round_trip},
  };
  int failed = 0;
  for (const auto& [name, fn] : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("%s %s (%.1fs): %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), dt, o.detail.c_str());
    std::fflush(stdout);
    failed += !o.pass;
  }
  return failed ? 1 : 0;
}
