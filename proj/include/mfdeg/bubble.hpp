#pragma once

#include "mfdeg/elliptic.hpp"
#include "mfdeg/green.hpp"

#include <functional>
#include <memory>
#include <stdexcept>
#include <vector>

namespace mfdeg {

struct BubbleError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ln(8 lambda^2 / (1 + lambda^2 |y - z|^2)^2)
double standard_bubble(double lambda, const Vec2& z, const Vec2& y);

// Planar integral of exp(standard_bubble) over |y - z| <= radius_factor / lambda,
// Gauss-Legendre in the radial variable t = lambda r (the angular integral is
// exact). Tends to 8 pi.
double planar_bubble_mass(double lambda, double radius_factor = 1e3);

// cutoff: chi = 1 on |y| <= cutoff, 0 beyond 2 cutoff, in chart coordinates.
struct BubbleParams {
  double lambda = 1;
  SurfacePoint center;
  double cutoff = 0;
};

// Projected bubbles on one mesh. The source chi e^{delta - phi} is integrated
// against the hat functions with a degree-5 rule on each triangle, subdivided
// where the triangle is coarse against the local bubble scale.
class BubbleProjector {
 public:
  explicit BubbleProjector(std::shared_ptr<const NeumannLaplacian> L);

  const NeumannLaplacian& laplacian() const { return *L_; }
  const SurfaceMesh& mesh() const { return L_->mesh(); }

  // Load vector of chi e^{delta - phi}; its sum is the source mass.
  VectorXd load(const BubbleParams& bp) const;
  // Zero-mean solution of -Delta P = f - mean(f), Neumann.
  VectorXd project(const BubbleParams& bp) const;
  // H^1 seminorm inner product, the ambient metric for fits.
  double inner(const VectorXd& u, const VectorXd& v) const { return L_->inner(u, v); }
  double norm(const VectorXd& u) const;

  // Mean length of the edges at the vertex nearest to p.
  double local_edge(const Vec2& p) const;
  // Throws BubbleError unless the mesh puts about four vertices across the
  // core of radius 1/lambda (local edge <= 1/(2 lambda)) and the cutoff chart
  // fits in the domain.
  void check(const BubbleParams& bp) const;

 private:
  std::shared_ptr<const NeumannLaplacian> L_;
};

VectorXd project_bubble(const NeumannLaplacian& L, const BubbleParams& bp);

// Default cutoff radius around a point: half the admissible chart radius.
double default_cutoff(const SurfaceMesh& mesh, const SurfacePoint& center, const std::vector<SurfacePoint>& others = {});
// Largest cutoff BubbleProjector::check accepts for a single bubble: half the
// boundary distance inside, 0.44/|k_g| on the boundary, at most diameter/4.
// The lambda remainder of the self energy shrinks like 1/(lambda r0)^2, so
// asymptotic checks at moderate lambda want r0 as large as possible.
double max_cutoff(const SurfaceMesh& mesh, const SurfacePoint& center);

// Local refinement around a bubble centre: edge length 1/(8 lambda_max) at the
// centre, growing linearly with slope `grade` out to twice the cutoff.
SurfaceMesh refine_for_bubble(const SurfaceMesh& mesh, const Vec2& center, double lambda_max, double cutoff, double grade = 0.12);

struct SelfEnergyReport {
  double kappa = 0;
  double robin = 0;
  double cutoff = 0;
  int vertices = 0;
  std::vector<double> lambdas, energy;
  // energy minus the known next order term kappa^2 ln(lambda) / (|Sigma| lambda^2)
  std::vector<double> corrected;
  std::vector<double> mass;  // source mass at each lambda
  double slope = 0, intercept = 0;
  double expected_slope = 0, expected_intercept = 0;
  double slope_error = 0, intercept_error = 0;  // relative
  double fit_residual = 0;                      // max |corrected - (a ln lambda + c)|
  // a ln(lambda) + c + d / lambda^2: the same fit with the unknown O(1/lambda^2)
  // remainder as a third column; diagnostic only
  double slope3 = 0, intercept3 = 0, remainder3 = 0;
};

// <P delta, P delta> over a lambda grid, regressed on a ln(lambda) + c; the
// expected slope is 4 kappa and the expected intercept kappa^2 R - 2 kappa.
// center must be a vertex (or on the mesh) of P's mesh. Throws BubbleError if
// the grid is too short, a lambda is under-resolved, or the energies are not
// increasing in lambda.
SelfEnergyReport self_energy_check(const BubbleProjector& P, const SurfacePoint& center, const std::vector<double>& lambdas, double robin,
                                   double cutoff, int threads = 0);

// <P delta_1, P delta_2>; tends to kappa_1 kappa_2 G(xi_1, xi_2) for separated centres.
double cross_energy(const BubbleProjector& P, const BubbleParams& a, const BubbleParams& b);

// psi = sum_i alpha_i P delta_i and u = psi + w. Per point the orthogonality
// products are <w, P delta>, <w, lambda d/dlambda P delta> and <w, d/dxi_j P delta>
// for each chart direction (two inside, one along the boundary).
struct Ansatz {
  int p = 0, q = 0;
  std::vector<double> alphas;
  std::vector<BubbleParams> params;
  VectorXd psi;
  VectorXd remainder;
  double remainder_norm = 0;
  std::vector<std::vector<double>> orthogonality;
  double orthogonality_max = 0;
  int iterations = 0;
  bool converged = false;
};

Ansatz make_ansatz(const BubbleProjector& P, const std::vector<double>& alphas, const std::vector<BubbleParams>& params, int p = -1);

struct FitOptions {
  int max_iterations = 60;
  double step_tol = 1e-11;  // relative parameter change that counts as converged
  double lambda_min = 2;    // admissible set: lambda above this
  double separation_min = 0;  // and centres farther apart than this (0: 2 cutoffs)
  double fd_step = 1e-5;    // relative FD step for the lambda and centre columns
  double orthogonality_tol = 1e-6;
};

struct FitError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Local minimiser of ||u - psi|| over (alpha, xi, ln lambda) by Levenberg-
// Marquardt from `init`; p interior points first, then q boundary points.
// Throws FitError if an iterate leaves the admissible set or the iteration
// does not settle.
Ansatz fit_decomposition(const BubbleProjector& P, const VectorXd& u, int p, int q, const Ansatz& init, const FitOptions& opt = {});

// Greedy local maxima of u: q boundary vertices, then p interior vertices, each
// at least sep from the others and the interior ones sep/2 from the boundary.
// Interior first in the result. Throws FitError if they cannot be placed.
std::vector<int> bubble_peaks(const SurfaceMesh& M, const VectorXd& u, int p, int q, double sep);

// Starting ansatz for fit_decomposition: unit alphas at the peaks of u
// (separation 0.2 diameter), default cutoffs, and lambda from
// P delta(xi) ~ 4 ln lambda + kappa R with R supplied by `robin`.
Ansatz initial_ansatz(const BubbleProjector& P, const VectorXd& u, int p, int q,
                      const std::function<double(const SurfacePoint&)>& robin, const FitOptions& opt = {});

}  // namespace mfdeg
