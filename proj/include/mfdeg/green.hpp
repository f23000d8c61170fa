#pragma once

#include "mfdeg/elliptic.hpp"
#include "mfdeg/mls.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace mfdeg {

// 8 pi in the interior, 4 pi on the boundary.
double kappa(const SurfacePoint& p);
double kappa(const SurfaceMesh& mesh, int vertex);

// Quintic smoothstep cutoff: 1 for s <= 1, 0 for s >= 2, C^2 in between.
double cutoff_profile(double s);

struct GreenField {
  int pole = -1;
  SurfacePoint pole_point;
  double kappa = 0;
  VectorXd values;
};

// -Delta G = delta_pole - 1/|Sigma|, Neumann, zero mean. pole must be a vertex.
GreenField green(const NeumannLaplacian& L, int pole);

struct RegularPart {
  int pole = -1;
  double kappa = 0;
  double cutoff_radius = 0;
  VectorXd values;  // G - Gamma, with the Robin value at the pole vertex
  double robin = 0;
};

// Gamma = (4/kappa) chi(|y|/c) ln(1/|y|) in the chart coordinates y.
// robin comes from robin_value.
RegularPart regular_part(const NeumannLaplacian& L, const GreenField& G, const Chart& chart, double cutoff_radius);
RegularPart regular_part(const NeumannLaplacian& L, const GreenField& G);  // default chart, cutoff r/8

// Limit of G - (4/kappa) ln(1/|y|) at the pole: quadratic least squares over
// neighbour rings 2..4. Used for boundary poles. The pole and its first ring carry an O(1) lattice error
// that does not shrink under refinement, so both are left out.
template <class ColumnFn>
double fit_robin(const SurfaceMesh& mesh, int pole, ColumnFn&& G);
double fit_robin_column(const SurfaceMesh& mesh, int pole, const VectorXd& column);

// Discrete singular part around an interior pole: on the patch of the first
// `rings` neighbour rings, solves K phi = e_pole with phi = (4/kappa) ln(1/|y|)
// held on the outer ring (and on any boundary vertex reached). phi carries the
// same lattice error as the discrete Green column, so G - phi is smooth up to
// and including the pole vertex.
struct LocalSingular {
  std::vector<int> verts;  // patch vertices, pole included
  VectorXd phi;
};
LocalSingular local_singular(const NeumannLaplacian& L, int pole, int rings = 6);

// Robin value of a Green column: G - phi at the pole for interior poles, the
// ring fit for boundary poles.
double robin_value(const NeumannLaplacian& L, int pole, const VectorXd& column);

// Column files keyed by mesh content hash and pole id.
class GreenStore {
 public:
  explicit GreenStore(std::string dir) : dir_(std::move(dir)) {}
  std::optional<VectorXd> load(const std::string& hash, int pole, int n) const;
  void save(const std::string& hash, int pole, const VectorXd& col) const;
  bool enabled() const { return !dir_.empty(); }

 private:
  std::string path(const std::string& hash, int pole) const;
  std::string dir_;
};

// Per-pole memo of Green columns and Robin values; thread safe.
class GreenCache {
 public:
  explicit GreenCache(std::shared_ptr<const NeumannLaplacian> L, GreenStore store = GreenStore(""));
  VectorXd column(int pole);
  double robin(int pole);
  std::map<int, double> robin_field(const std::vector<int>& poles, int threads = 1);
  const NeumannLaplacian& laplacian() const { return *L_; }

 private:
  std::shared_ptr<const NeumannLaplacian> L_;
  GreenStore store_;
  std::string hash_;
  std::mutex mu_;
  std::map<int, VectorXd> cols_;
};

// All Green columns with the singular part removed, interpolated off the
// vertices by moving least squares:
//   G(x,y) = s(y) ln(1/|x-y|) + H(x,y),  s = 4/kappa(y),
// table entries H(u,v) at vertex pairs, R(v) on the diagonal. For a pole on the
// boundary the fit runs along the loop in arclength; in the interior it uses
// interior vertices only.
class GreenTable {
 public:
  struct Options {
    int threads = 0;              // 0: hardware concurrency
    double mls_radius_edges = 3;  // MLS support radius in mean edge lengths
    double robin_radius_edges = 5;  // interior Robin interpolation; wider to average vertex scatter
    double boundary_radius_edges = 8;  // along loops, capped at a tenth of the loop length
    double margin_radii = 1.5;    // interior poles closer to the boundary than this many MLS radii are not trusted
    double alt_radius_factor = 1.5;  // second interpolant used to measure interpolation sensitivity
    bool circle_model = true;  // subtract the image logarithm of circular loops before interpolating R
    std::string cache_dir;
  };
  GreenTable(std::shared_ptr<const NeumannLaplacian> L, const Options& opt);

  const SurfaceMesh& mesh() const { return L_->mesh(); }
  int size() const { return n_; }
  double H_vertex(int x, int pole) const { return H_[static_cast<size_t>(pole) * n_ + x]; }
  double robin_vertex(int v) const { return H_vertex(v, v); }
  // Green value for x != pole rebuilt from the table: the discrete column away
  // from interior poles, with the lattice error removed on the pole patch.
  double G_vertex(int x, int pole) const;

  // variant 0 is the primary interpolant, variant 1 uses wider supports. The
  // two agree wherever the data are resolved; their gap is an error estimate.
  Stencil pole_stencil(const SurfacePoint& y, int variant = 0) const;
  Stencil query_stencil(const SurfacePoint& x, int variant = 0) const;
  double robin(const SurfacePoint& y, int variant = 0) const;
  double robin(const Stencil& sy, const SurfacePoint& y) const;  // sy: any stencil around y
  // Near a circular loop (centre c, radius r) the interior Robin function
  // behaves like -(1/2pi) ln(||y-c|^2 - r^2| / r); this sum over such loops is
  // taken out before interpolation and added back after. Zero if there are none.
  double robin_model(const Vec2& y) const;
  double regular(const SurfacePoint& x, const SurfacePoint& y, int variant = 0) const;
  double regular(const Stencil& sx, const Stencil& sy) const;
  double green(const SurfacePoint& x, const SurfacePoint& y, int variant = 0) const;
  // Smallest distance from the boundary at which interior poles are trusted.
  double interior_margin() const { return margin_; }
  double mls_radius() const { return radius_; }
  double loop_radius(int loop) const { return interp_[0].loops.at(loop).radius(); }
  // Largest deviation of the interpolated Robin function from its vertex
  // values: a data-driven noise level for second differences.
  double robin_noise(const SurfacePoint& y) const { return y.on_boundary() ? loop_noise_.at(y.loop) : interior_noise_; }

 private:
  std::shared_ptr<const NeumannLaplacian> L_;
  int n_ = 0;
  std::vector<double> H_;
  double radius_ = 0, margin_ = 0;
  struct Interp {
    Mls2D all, interior, robin;
    std::vector<Mls1D> loops;
  };
  Interp interp_[2];
  const Interp& interp(int variant) const { return interp_[variant ? 1 : 0]; }
  std::vector<double> loop_noise_;
  std::vector<std::pair<Vec2, double>> circles_;
  double interior_noise_ = 0;
};

// ---- template implementation

namespace detail {
double robin_lsq(const std::vector<Vec2>& y, const std::vector<double>& f);
}

template <class ColumnFn>
double fit_robin(const SurfaceMesh& mesh, int pole, ColumnFn&& G) {
  const Chart c = chart_frame(mesh, mesh.vertex_point(pole));
  const double s = 4.0 / kappa(mesh, pole);
  std::vector<Vec2> y;
  std::vector<double> f;
  const auto near = mesh.rings(pole, 1);
  for (int u : mesh.rings(pole, 4)) {
    if (std::find(near.begin(), near.end(), u) != near.end()) continue;
    const Vec2 yu = c.map(mesh.vertices[u]);
    y.push_back(yu);
    f.push_back(G(u) - s * std::log(1.0 / yu.norm()));
  }
  return detail::robin_lsq(y, f);
}

}  // namespace mfdeg
