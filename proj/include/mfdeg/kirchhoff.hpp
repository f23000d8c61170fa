#pragma once

#include "mfdeg/green.hpp"
#include "mfdeg/potential.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace mfdeg {

struct DegenerateConfiguration : std::domain_error {
  using std::domain_error::domain_error;
};

// p interior points followed by q boundary points (loop + arclength).
struct Configuration {
  int p = 0, q = 0;
  std::vector<SurfacePoint> points;

  int size() const { return p + q; }
  int dim() const { return 2 * p + q; }
  double separation() const;
};

enum class Classification { V_minus, V_plus, degenerate };
const char* to_string(Classification c);

struct CriticalPoint {
  Configuration config;
  double value = 0;
  double grad_norm = 0;
  int morse_index = 0;
  Eigen::VectorXd hessian_eigenvalues;
  // per eigenvalue noise band: step-halving change, interpolant sensitivity
  // and the resolution floor; nondegenerate iff |lambda_k| >= sigma_k for all k
  Eigen::VectorXd hessian_sigma;
  bool nondegenerate = true;
  double L = 0;
  double L_error = 0;  // significance threshold actually used
  Classification cls = Classification::degenerate;
  int found_by = 0;  // number of starts that converged here
};

struct CensusResult {
  std::vector<CriticalPoint> points;
  int starts = 0;
  int converged = 0;
  long signed_sum = 0;  // sum of (-1)^morse over all points found
  // false if any point has a Hessian eigenvalue inside its noise band; the sum
  // is then not certified
  bool all_nondegenerate = true;
};

class KirchhoffRouth {
 public:
  struct Options {
    double grad_step = 1e-3;      // times diameter
    double hess_step = 5e-3;      // times diameter
    double dedup_radius = 1e-2;   // times diameter
    double sensitivity_weight = 3;  // sigma_H multiple of the primary/alternate interpolant gap
    // Curvatures below this fraction of kappa^2/|Sigma| are under the
    // discretisation error of the Robin function (about 1e-3 of it on the
    // test meshes), whatever the interpolants say.
    double hessian_floor = 2.5e-3;
    int max_iterations = 200;
  };

  KirchhoffRouth(std::shared_ptr<const GreenTable> table, Potential V);
  KirchhoffRouth(std::shared_ptr<const GreenTable> table, Potential V, const Options& opt);

  const SurfaceMesh& mesh() const { return table_->mesh(); }
  const GreenTable& table() const { return *table_; }
  const Potential& potential() const { return V_; }
  const Options& options() const { return opt_; }

  // F^i(x) = V(x) exp(kappa_i H(x, xi_i) + sum_{j != i} kappa_j G(x, xi_j)).
  // variant selects the table interpolant (see GreenTable).
  double F(const SurfacePoint& x, const Configuration& xi, int i, int variant = 0) const;
  double value(const Configuration& xi, int variant = 0) const;

  // Coordinates: (x, y) per interior point, arclength per boundary point.
  Eigen::VectorXd coords(const Configuration& xi) const;
  Configuration from_coords(const Configuration& like, const Eigen::VectorXd& t) const;
  bool admissible(const Configuration& xi) const;

  Eigen::VectorXd gradient(const Configuration& xi, double step_scale = 1) const;
  Eigen::MatrixXd hessian(const Configuration& xi, double step_scale = 1, int variant = 0) const;

  // err receives the step-halving plus interpolant-gap estimate (unscaled).
  double L1(const Configuration& xi, double* err = nullptr) const;
  // Uses Delta F = F (Delta ln F + |grad ln F|^2) with Delta ln F known in
  // closed form away from the poles, so only first differences of ln F^i are
  // taken numerically.
  double L2(const Configuration& xi, double* err = nullptr) const;
  // Five-point Laplacian of F^i at its own pole; a cross-check for L2.
  double laplacian_F(const Configuration& xi, int i, double h) const;
  double L(const Configuration& xi, double* err = nullptr) const { return xi.q ? L1(xi, err) : L2(xi, err); }
  // Pointwise ingredients of L at xi_i, with all alpha = 1:
  // f2 = -(d_nu ln V + 2 k_g) F^i on the boundary (0 inside), and
  // f3 = Delta F^i - 2 K F^i inside. L1 = sum f2 / sqrt(F^i), L2 = sum kappa f3.
  double f2(const Configuration& xi, int i) const;
  double f3(const Configuration& xi, int i) const;

  // All relabellings of xi that keep interior points first: the census runs
  // over ordered tuples, and relabelling maps critical points to critical
  // points with the same Hessian spectrum.
  std::vector<Configuration> relabellings(const Configuration& xi) const;

  // Newton-type solve of grad F = 0 from one start; returns false if it stalls.
  bool refine(Configuration& xi, double tol, double* grad_norm = nullptr) const;
  CriticalPoint analyse(const Configuration& xi) const;
  Configuration random_configuration(int p, int q, uint64_t seed) const;
  CensusResult find_critical_points(int p, int q, int starts, double tol, uint64_t seed, int threads = 0) const;

  double min_separation() const { return min_sep_; }

 private:
  double L1_at(const Configuration& xi, int variant) const;
  double L2_at(const Configuration& xi, double h, int variant) const;
  double f3_at(const Configuration& xi, int i, double h, int variant) const;
  std::shared_ptr<const GreenTable> table_;
  Potential V_;
  Options opt_;
  double min_sep_ = 0;
};

}  // namespace mfdeg
