#pragma once

#include "mfdeg/mesh.hpp"

#include <vector>

namespace mfdeg {

// Linear functional f(x) ~ sum_k w[k] f(idx[k]) produced by a moving least
// squares fit; quadratic basis, Wendland C2 weight. Reproduces quadratics.
struct Stencil {
  std::vector<int> idx;
  std::vector<double> w;

  template <class F>
  double apply(F&& f) const {
    double s = 0;
    for (size_t k = 0; k < idx.size(); ++k) s += w[k] * f(idx[k]);
    return s;
  }
};

class Mls2D {
 public:
  Mls2D() = default;
  // sites: subset of mesh vertices; radius: support radius of the weight
  Mls2D(const SurfaceMesh& mesh, std::vector<int> sites, double radius);
  Stencil stencil(const Vec2& x) const;
  double radius() const { return radius_; }

 private:
  const SurfaceMesh* mesh_ = nullptr;
  std::vector<int> sites_;
  UniformGrid grid_;
  double radius_ = 0;
};

// Periodic 1D fit along one boundary loop in the arclength parameter.
class Mls1D {
 public:
  Mls1D() = default;
  Mls1D(const SurfaceMesh& mesh, int loop, double radius);
  Stencil stencil(double s) const;
  double radius() const { return radius_; }

 private:
  const SurfaceMesh* mesh_ = nullptr;
  int loop_ = -1;
  double radius_ = 0;
};

double wendland_c2(double r);

}  // namespace mfdeg
