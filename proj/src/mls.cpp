#include "mfdeg/mls.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

namespace mfdeg {

double wendland_c2(double r) {
  if (r >= 1) return 0;
  const double t = 1 - r;
  return t * t * t * t * (4 * r + 1);
}

Mls2D::Mls2D(const SurfaceMesh& mesh, std::vector<int> sites, double radius)
    : mesh_(&mesh), sites_(std::move(sites)), radius_(radius) {
  std::vector<Vec2> p;
  p.reserve(sites_.size());
  for (int v : sites_) p.push_back(mesh.vertices[v]);
  grid_.build(p, p, radius_);
}

Stencil Mls2D::stencil(const Vec2& x) const {
  Stencil st;
  std::vector<int> cand;
  double R = radius_;
  for (int attempt = 0; attempt < 8; ++attempt, R *= 1.5) {
    grid_.query(x - Vec2(R, R), x + Vec2(R, R), cand);
    Eigen::Matrix<double, 6, 6> A = Eigen::Matrix<double, 6, 6>::Zero();
    st.idx.clear();
    st.w.clear();
    std::vector<Eigen::Matrix<double, 6, 1>> basis;
    for (int c : cand) {
      const Vec2 d = (mesh_->vertices[sites_[c]] - x) / R;
      const double w = wendland_c2(d.norm());
      if (w <= 0) continue;
      Eigen::Matrix<double, 6, 1> b;
      b << 1, d.x(), d.y(), d.x() * d.x(), d.x() * d.y(), d.y() * d.y();
      A.noalias() += w * b * b.transpose();
      st.idx.push_back(sites_[c]);
      st.w.push_back(w);
      basis.push_back(b);
    }
    if (st.idx.size() < 8) continue;
    Eigen::LDLT<Eigen::Matrix<double, 6, 6>> ldlt(A);
    if (ldlt.info() != Eigen::Success || ldlt.rcond() < 1e-9) continue;
    const Eigen::Matrix<double, 6, 1> c = ldlt.solve(Eigen::Matrix<double, 6, 1>::Unit(0));
    for (size_t k = 0; k < st.idx.size(); ++k) st.w[k] *= basis[k].dot(c);
    return st;
  }
  throw MeshError("moving least squares: not enough sites near the query point");
}

Mls1D::Mls1D(const SurfaceMesh& mesh, int loop, double radius) : mesh_(&mesh), loop_(loop), radius_(radius) {}

Stencil Mls1D::stencil(double s) const {
  const auto& L = mesh_->boundary_loops[loop_];
  const int n = static_cast<int>(L.verts.size());
  s = mesh_->wrap(loop_, s);
  Stencil st;
  double R = radius_;
  for (int attempt = 0; attempt < 8; ++attempt, R *= 1.5) {
    Eigen::Matrix3d A = Eigen::Matrix3d::Zero();
    st.idx.clear();
    st.w.clear();
    std::vector<Eigen::Vector3d> basis;
    auto it = std::upper_bound(L.s.begin(), L.s.end(), s);
    const int k0 = static_cast<int>(it - L.s.begin()) - 1;
    // walk both directions from the containing segment
    for (int dir : {-1, 1}) {
      for (int step = (dir < 0 ? 0 : 1); step < n; ++step) {
        const int k = ((k0 + dir * step) % n + n) % n;
        const double d = mesh_->param_diff(loop_, s, L.s[k]) / R;
        if (std::abs(d) >= 1) break;
        const double w = wendland_c2(std::abs(d));
        Eigen::Vector3d b(1, d, d * d);
        A.noalias() += w * b * b.transpose();
        st.idx.push_back(L.verts[k]);
        st.w.push_back(w);
        basis.push_back(b);
      }
    }
    if (st.idx.size() < 4 || static_cast<int>(st.idx.size()) > n) continue;
    Eigen::LDLT<Eigen::Matrix3d> ldlt(A);
    if (ldlt.info() != Eigen::Success || ldlt.rcond() < 1e-9) continue;
    const Eigen::Vector3d c = ldlt.solve(Eigen::Vector3d::Unit(0));
    for (size_t k = 0; k < st.idx.size(); ++k) st.w[k] *= basis[k].dot(c);
    return st;
  }
  throw MeshError("moving least squares: boundary loop too coarse for the stencil");
}

}  // namespace mfdeg
