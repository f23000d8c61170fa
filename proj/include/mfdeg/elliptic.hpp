#pragma once

#include "mfdeg/mesh.hpp"

#include <Eigen/Core>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>

#include <memory>
#include <string>

namespace mfdeg {

using SpMat = Eigen::SparseMatrix<double>;
using Eigen::VectorXd;

struct SolveError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Cotangent stiffness K (Neumann, constants in the kernel) and lumped mass.
// Immutable after construction; solves may run concurrently.
class NeumannLaplacian {
 public:
  explicit NeumannLaplacian(std::shared_ptr<const SurfaceMesh> mesh);
  explicit NeumannLaplacian(const SurfaceMesh& mesh);

  const SurfaceMesh& mesh() const { return *mesh_; }
  std::shared_ptr<const SurfaceMesh> mesh_ptr() const { return mesh_; }
  const SpMat& stiffness() const { return K_; }
  const VectorXd& mass() const { return m_; }
  int size() const { return static_cast<int>(m_.size()); }

  // u with K u = f and integrate(u) = 0. f is a vertex functional (a load
  // vector) and must satisfy sum(f) = 0.
  VectorXd solve_zero_mean(const VectorXd& f, double compat_tol = 1e-10) const;
  // Same, but f is first projected onto sum zero (no compatibility check).
  VectorXd solve_projected(VectorXd f) const;

  VectorXd apply(const VectorXd& u) const { return K_ * u; }
  double inner(const VectorXd& u, const VectorXd& v) const;
  double integrate(const VectorXd& u) const;
  double boundary_integrate(const VectorXd& u) const;
  VectorXd zero_mean(const VectorXd& u) const;
  // Lumped inverse mass times -K u: the discrete Laplacian as a field.
  VectorXd laplacian(const VectorXd& u) const;

 private:
  void check(const VectorXd& u) const;
  void assemble();

  std::shared_ptr<const SurfaceMesh> mesh_;
  SpMat K_;
  VectorXd m_;
  int ground_ = 0;
  Eigen::SimplicialLDLT<SpMat> factor_;
};

void write_field_csv(const std::string& path, const VectorXd& values);
VectorXd read_field_csv(const std::string& path, int expected_size = -1);

}  // namespace mfdeg
