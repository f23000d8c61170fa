#include "mfdeg/elliptic.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <vector>

namespace mfdeg {

NeumannLaplacian::NeumannLaplacian(std::shared_ptr<const SurfaceMesh> mesh) : mesh_(std::move(mesh)) { assemble(); }

NeumannLaplacian::NeumannLaplacian(const SurfaceMesh& mesh)
    : NeumannLaplacian(std::make_shared<const SurfaceMesh>(mesh)) {}

void NeumannLaplacian::assemble() {
  const auto& M = *mesh_;
  const int n = M.num_vertices();
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(M.triangles.size() * 12);
  m_ = VectorXd::Zero(n);
  for (const auto& t : M.triangles) {
    const Vec2 &a = M.vertices[t[0]], &b = M.vertices[t[1]], &c = M.vertices[t[2]];
    const double area2 = (b - a).x() * (c - a).y() - (b - a).y() * (c - a).x();
    if (!(area2 > 1e-14 * (b - a).squaredNorm())) throw SolveError("degenerate triangle in stiffness assembly");
    for (int k = 0; k < 3; ++k) {
      const int i = t[(k + 1) % 3], j = t[(k + 2) % 3];
      const Vec2 e1 = M.vertices[i] - M.vertices[t[k]], e2 = M.vertices[j] - M.vertices[t[k]];
      const double w = 0.5 * e1.dot(e2) / area2;  // half cotangent of the angle at t[k]
      trip.emplace_back(i, j, -w);
      trip.emplace_back(j, i, -w);
      trip.emplace_back(i, i, w);
      trip.emplace_back(j, j, w);
    }
    for (int k = 0; k < 3; ++k) m_[t[k]] += area2 / 6.0;
  }
  K_.resize(n, n);
  K_.setFromTriplets(trip.begin(), trip.end());
  K_.makeCompressed();

  // The kernel is the constants; replacing one row and column by the identity
  // gives an SPD matrix whose solution differs from the zero-mean one by a
  // constant, removed afterwards.
  ground_ = 0;
  SpMat A = K_;
  for (int k = 0; k < A.outerSize(); ++k)
    for (SpMat::InnerIterator it(A, k); it; ++it)
      if (it.row() == ground_ || it.col() == ground_) it.valueRef() = (it.row() == it.col()) ? 1.0 : 0.0;
  A.prune(0.0);
  factor_.compute(A);
  if (factor_.info() != Eigen::Success) throw SolveError("sparse factorization failed");
}

void NeumannLaplacian::check(const VectorXd& u) const {
  if (u.size() != m_.size())
    throw std::invalid_argument("field has " + std::to_string(u.size()) + " values, mesh has " + std::to_string(m_.size()));
}

VectorXd NeumannLaplacian::solve_zero_mean(const VectorXd& f, double compat_tol) const {
  check(f);
  const double s = f.sum();
  if (std::abs(s) > compat_tol * std::max(1.0, f.lpNorm<1>()))
    throw std::invalid_argument("incompatible right-hand side: sum " + std::to_string(s) + " is not zero");
  VectorXd b = f;
  b[ground_] = 0;
  VectorXd u = factor_.solve(b);
  if (factor_.info() != Eigen::Success || !u.allFinite()) throw SolveError("sparse solve failed");
  u = zero_mean(u);
  const VectorXd r = K_ * u - f;
  if (r.norm() > 1e-8 * std::max(1.0, f.norm())) throw SolveError("sparse solve did not reach the residual tolerance");
  return u;
}

VectorXd NeumannLaplacian::solve_projected(VectorXd f) const {
  check(f);
  f -= m_ * (f.sum() / m_.sum());
  return solve_zero_mean(f, 1e-8);
}

double NeumannLaplacian::inner(const VectorXd& u, const VectorXd& v) const {
  check(u);
  check(v);
  return u.dot(K_ * v);
}

double NeumannLaplacian::integrate(const VectorXd& u) const {
  check(u);
  return m_.dot(u);
}

double NeumannLaplacian::boundary_integrate(const VectorXd& u) const {
  check(u);
  double s = 0;
  for (const auto& L : mesh_->boundary_loops) {
    const size_t n = L.verts.size();
    for (size_t k = 0; k < n; ++k) {
      const int a = L.verts[k], b = L.verts[(k + 1) % n];
      s += 0.5 * (mesh_->vertices[a] - mesh_->vertices[b]).norm() * (u[a] + u[b]);
    }
  }
  return s;
}

VectorXd NeumannLaplacian::zero_mean(const VectorXd& u) const {
  check(u);
  return u.array() - m_.dot(u) / m_.sum();
}

VectorXd NeumannLaplacian::laplacian(const VectorXd& u) const {
  check(u);
  return -(K_ * u).cwiseQuotient(m_);
}

void write_field_csv(const std::string& path, const VectorXd& values) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "vertex_index,value\n" << std::setprecision(17);
  for (Eigen::Index i = 0; i < values.size(); ++i) out << i << ',' << values[i] << '\n';
  if (!out) throw std::runtime_error("write failed: " + path);
}

VectorXd read_field_csv(const std::string& path, int expected_size) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::string line;
  std::getline(in, line);
  if (line.rfind("vertex_index,value", 0) != 0) throw std::runtime_error(path + ": missing 'vertex_index,value' header");
  std::vector<double> vals;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    long idx;
    char comma;
    double v;
    if (!(ls >> idx >> comma >> v) || comma != ',') throw std::runtime_error(path + ": malformed line '" + line + "'");
    if (idx != static_cast<long>(vals.size())) throw std::runtime_error(path + ": vertex indices must be consecutive");
    vals.push_back(v);
  }
  if (expected_size >= 0 && static_cast<int>(vals.size()) != expected_size)
    throw std::invalid_argument(path + ": field size does not match the mesh");
  return Eigen::Map<VectorXd>(vals.data(), static_cast<Eigen::Index>(vals.size()));
}

}  // namespace mfdeg
