#pragma once

#include "mfdeg/bubble.hpp"
#include "mfdeg/kirchhoff.hpp"
#include "mfdeg/potential.hpp"

#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace mfdeg {

// Numerical failure of a solve: divergence, overflow of e^u, singular Jacobian.
struct SolverError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct OverflowError : SolverError {
  using SolverError::SolverError;
};

struct SingularJacobian : SolverError {
  SingularJacobian(const std::string& what, double sigma) : SolverError(what), sigma_min(sigma) {}
  double sigma_min;  // smallest singular value estimate of the bordered Jacobian
};

// -Delta u = rho (V e^u / int V e^u - 1/|Sigma|), Neumann, zero mean. Discrete
// form with lumped mass m and stiffness K:
//   K u = rho (m V e^u / Z - m / |Sigma|),  Z = sum m V e^u.
class MeanFieldProblem {
 public:
  MeanFieldProblem(std::shared_ptr<const NeumannLaplacian> L, Potential V, double rho);

  const NeumannLaplacian& laplacian() const { return *L_; }
  std::shared_ptr<const NeumannLaplacian> laplacian_ptr() const { return L_; }
  const SurfaceMesh& mesh() const { return L_->mesh(); }
  const Potential& potential() const { return V_; }
  const VectorXd& V() const { return Vv_; }  // potential at the vertices
  double rho() const { return rho_; }
  MeanFieldProblem with_rho(double rho) const;

  // e^u is only formed for max u <= max_u; beyond that OverflowError.
  double max_u = 40;

  // m V e^u; Z is its sum.
  VectorXd weight(const VectorXd& u) const;
  double Z(const VectorXd& u) const { return weight(u).sum(); }
  // Right-hand side rho (m V e^u / Z - m / |Sigma|); sums to zero.
  VectorXd source(const VectorXd& u) const;

 private:
  std::shared_ptr<const NeumannLaplacian> L_;
  Potential V_;
  VectorXd Vv_;
  double rho_ = 0;
};

// J(u) = 1/2 u^T K u - rho ln Z(u).
double energy(const MeanFieldProblem& prob, const VectorXd& u);
// r = u - K^+ source(u): the gradient of J in the H^1 seminorm. Zero at solutions.
VectorXd grad_residual(const MeanFieldProblem& prob, const VectorXd& u);

enum class SolveClass { regular, near_blowup };
const char* to_string(SolveClass c);

struct SolveOptions {
  double tol = 1e-10;  // on the H^1 norm of the residual
  int max_iters = 50;
  int max_backtracks = 30;
  double max_sup_step = 2;  // cap on max |du| per Newton iteration
  // sup u above which a state counts as near blow-up; a user threshold
  double near_blowup_sup = 8;
};

struct SolveResult {
  VectorXd u;
  double rho = 0;
  double residual_norm = 0;
  double energy = 0;
  int newton_iters = 0;
  double sup_u = 0;
  double h1_norm = 0;
  SolveClass cls = SolveClass::regular;
  bool converged = false;
  std::string message;
  std::vector<double> energy_history;  // J at the start and after each accepted step
};

// Newton with the rank-one term of the normalised nonlinearity kept. The
// Jacobian is bordered twice, once by the mass row for the zero-mean constraint
// and once by an auxiliary unknown t = c^T du carrying the rank-one term, so it
// stays sparse. Backtracking on the residual norm. Throws SingularJacobian,
// OverflowError, or SolverError on divergence.
SolveResult newton_solve(const MeanFieldProblem& prob, const VectorXd& u0, const SolveOptions& opt = {});

// Bubble warm start near resonance: the ansatz sum P delta_i built on the
// critical point `xi` of the Kirchhoff-Routh function, with the scales taken
// from the mu law and the balance F^i lambda_i^2 = F^1 lambda_1^2 (tau_i = 0
// at alpha = 1). Cutoffs default per point.
struct BubbleWarmStart {
  std::shared_ptr<const KirchhoffRouth> kr;
  Configuration xi;
  double lambda_max = 200;  // scales are capped here
};

// lambda_1 from mu = (rho - rho*)/rho* through the mu law at xi; the other
// scales follow from the balance. Returns empty if the predicted side is wrong
// (mu L(xi) <= 0) or L vanishes.
std::optional<std::vector<double>> predicted_scales(const KirchhoffRouth& kr, const Configuration& xi, double rho);

struct ContinuationOptions {
  SolveOptions solve;
  int max_bisections = 8;  // halvings of a failed step before the path is truncated
  int arclength_after = 2;  // consecutive failures before switching to pseudo-arclength
  double resonance_band = 1e-3 * 4 * 3.14159265358979323846;
  std::optional<BubbleWarmStart> bubble;
};

struct ContinuationResult {
  std::vector<SolveResult> steps;
  std::vector<std::string> kinds;  // per step: "plain", "bisected", "arclength" or "bubble"
  bool truncated = false;
  std::string message;
};

// Warm-started path over rho_path (monotone, kept clear of 4 pi N by the
// resonance band). A failed step is halved; after arclength_after failures the
// step is retried by pseudo-arclength on (u, rho). A near_blowup state with a
// bubble warm start configured also tries the bubble ansatz.
ContinuationResult continuation(const MeanFieldProblem& prob, const std::vector<double>& rho_path, const VectorXd& u0,
                                const ContinuationOptions& opt = {});

struct DiagnosticOptions {
  double lambda_floor = 8;  // fits below this scale are not resolved
  FitOptions fit;
};

struct BlowupDiagnostics {
  int p = 0, q = 0, m = 0;
  Ansatz fit;
  Configuration xi_fit;       // fitted centres
  Configuration xi_critical;  // critical point of the KR function refined from xi_fit
  bool critical_refined = false;
  std::vector<double> tau, f2, f3, g;
  std::vector<double> local_mass;  // rho * mass within twice the cutoff / Z, per point
  double Z = 0;                    // int V e^u
  double L = 0, L_error = 0;       // at xi_critical
  double mu_observed = 0, mu_predicted = 0;
  bool sign_agreement = false;
};

// Fits u to p interior and q boundary bubbles from the local maxima of u and
// evaluates tau_i, f2, f3, the local masses and the mu law. kr supplies the
// Green data; its mesh can be coarser than the solution mesh. Throws FitError
// if the fit fails or a fitted lambda is below the floor.
BlowupDiagnostics blowup_diagnostics(const MeanFieldProblem& prob, const SolveResult& res, int p, int q, const KirchhoffRouth& kr,
                                     const DiagnosticOptions& opt = {});

}  // namespace mfdeg
