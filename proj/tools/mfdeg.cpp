// mfdeg: command-line front end.
//   exit 0 success, 2 invalid input, 3 numerical failure; errors as JSON on stderr.

#include "mfdeg/bubble.hpp"
#include "mfdeg/degree.hpp"
#include "mfdeg/kirchhoff.hpp"
#include "mfdeg/parallel.hpp"
#include "mfdeg/solver.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#ifndef MFDEG_VERSION
#define MFDEG_VERSION "dev"
#endif

using namespace mfdeg;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct UsageError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct Globals {
  bool json_out = false;
  uint64_t seed = 0;
  int threads = 0;
  bool no_cache = false;
  std::string manifest;
  std::vector<std::string> argv;
};

struct RunRecord {
  std::string subcommand;
  std::string mesh_hash;
  std::vector<std::string> outputs;
};

std::string fnv1a(const std::string& bytes) {
  uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void require_file(const std::string& path) {
  if (!fs::is_regular_file(path)) throw UsageError("no such file: '" + path + "'");
}

std::shared_ptr<const SurfaceMesh> read_mesh(const std::string& path, RunRecord& rec) {
  require_file(path);
  auto m = std::make_shared<const SurfaceMesh>(load_mesh(path));
  rec.mesh_hash = m->content_hash();
  return m;
}

Potential read_potential(const std::string& text) {
  Potential V = Potential::parse(text);
  return V;
}

// Green cache directory: MFDEG_CACHE_DIR, else .mfdeg_cache beside the mesh.
std::string cache_dir(const Globals& g, const std::string& mesh_path) {
  if (g.no_cache) return "";
  fs::path dir;
  if (const char* env = std::getenv("MFDEG_CACHE_DIR"); env && *env)
    dir = env;
  else
    dir = fs::absolute(mesh_path).parent_path() / ".mfdeg_cache";
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) return "";  // read-only location: run uncached
  return dir.string();
}

int vertex_arg(const SurfaceMesh& M, int v, const char* what) {
  if (v < 0 || v >= M.num_vertices())
    throw UsageError(std::string(what) + " " + std::to_string(v) + " is not a vertex (mesh has " + std::to_string(M.num_vertices()) + ")");
  return v;
}

json point_json(const SurfacePoint& p) {
  json j{{"x", p.x.x()}, {"y", p.x.y()}, {"boundary", p.on_boundary()}};
  if (p.on_boundary()) {
    j["loop"] = p.loop;
    j["s"] = p.s;
  }
  return j;
}

void emit(const Globals& g, const json& j, const std::string& text) {
  if (g.json_out)
    std::cout << j.dump(2) << "\n";
  else
    std::cout << text;
}

void write_text(const std::string& path, const std::string& text, RunRecord& rec) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw UsageError("cannot write '" + path + "'");
  f << text;
  if (!f) throw std::runtime_error("write failed: " + path);
  rec.outputs.push_back(path);
}

std::vector<double> parse_list(const std::string& s, const char* what) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    size_t used = 0;
    double v;
    try {
      v = std::stod(tok, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || tok.find_first_not_of(" \t", used) != std::string::npos) throw UsageError(std::string("bad ") + what + " entry '" + tok + "'");
    out.push_back(v);
  }
  if (out.empty()) throw UsageError(std::string("empty ") + what);
  return out;
}

std::string fmt(double v) {
  std::ostringstream os;
  os.imbue(std::locale::classic());
  os << std::setprecision(17) << v;
  return os.str();
}

// ------------------------------------------------------------------ mesh

struct MeshInfoArgs {
  std::string path;
};

void run_mesh_info(const Globals& g, const MeshInfoArgs& a, RunRecord& rec) {
  const auto M = read_mesh(a.path, rec);
  const TopologyReport t = topology(*M);
  json loops = json::array();
  for (const auto& L : M->boundary_loops) loops.push_back({{"vertices", L.verts.size()}, {"length", L.length}});
  const json j{{"vertices", t.V},   {"edges", t.E},         {"faces", t.F},          {"chi", t.chi},
               {"genus", t.genus},  {"boundaries", t.boundary_count}, {"area", M->total_area},
               {"diameter", M->diameter}, {"mean_edge", M->mean_edge}, {"hash", M->content_hash()}, {"loops", loops}};
  std::ostringstream os;
  os << "V " << t.V << "  E " << t.E << "  F " << t.F << "\n"
     << "chi " << t.chi << "  genus " << t.genus << "  boundaries " << t.boundary_count << "\n"
     << "area " << M->total_area << "  diameter " << M->diameter << "  mean edge " << M->mean_edge << "\n"
     << "hash " << M->content_hash() << "\n";
  emit(g, j, os.str());
}

struct MeshGenArgs {
  std::string shape = "disk";
  int rings = 12, outer = 10, n = 16, ntheta = 96, nr = 16;
  double inner = 0.4;
  std::vector<double> refine_at;
  double h_min = 0, grade = 0, radius = 0.25;
  std::string out;
};

void run_mesh_gen(const Globals& g, const MeshGenArgs& a, RunRecord& rec) {
  SurfaceMesh M;
  if (a.shape == "disk")
    M = make_disk(a.rings, a.outer);
  else if (a.shape == "annulus")
    M = make_annulus(a.inner, a.ntheta, a.nr);
  else if (a.shape == "square")
    M = make_square(a.n);
  else if (a.shape == "pants")
    M = make_pants(a.n);
  else
    throw UsageError("unknown shape '" + a.shape + "'");
  if (!a.refine_at.empty()) {
    if (a.refine_at.size() != 2) throw UsageError("--refine-at takes x,y");
    if (a.h_min <= 0) throw UsageError("--refine-at needs --h-min > 0");
    M = refine_toward(M, Vec2(a.refine_at[0], a.refine_at[1]), a.h_min, a.grade, a.radius);
  }
  save_mesh(M, a.out);
  rec.outputs.push_back(a.out);
  M = load_mesh(a.out);  // the hash is that of the file as written
  rec.mesh_hash = M.content_hash();
  const TopologyReport t = topology(M);
  emit(g, json{{"path", a.out}, {"vertices", t.V}, {"faces", t.F}, {"chi", t.chi}, {"hash", M.content_hash()}},
       a.out + ": " + std::to_string(t.V) + " vertices, " + std::to_string(t.F) + " triangles, chi " + std::to_string(t.chi) + "\n");
}

// ----------------------------------------------------------- green, robin

struct GreenArgs {
  std::string mesh;
  int pole = -1;
  std::string out;
};

void run_green(const Globals& g, const GreenArgs& a, RunRecord& rec) {
  const auto M = read_mesh(a.mesh, rec);
  vertex_arg(*M, a.pole, "pole");
  auto L = std::make_shared<const NeumannLaplacian>(M);
  GreenCache C(L, GreenStore(cache_dir(g, a.mesh)));
  const VectorXd col = C.column(a.pole);
  const double R = C.robin(a.pole);
  write_field_csv(a.out, col);
  rec.outputs.push_back(a.out);
  const SurfacePoint p = M->vertex_point(a.pole);
  const json j{{"pole", a.pole}, {"point", point_json(p)}, {"kappa", kappa(p)}, {"robin", R}, {"min", col.minCoeff()}, {"max", col.maxCoeff()}, {"out", a.out}};
  emit(g, j, "pole " + std::to_string(a.pole) + "  kappa " + fmt(kappa(p)) + "  robin " + fmt(R) + "  -> " + a.out + "\n");
}

struct RobinArgs {
  std::string mesh;
  std::vector<int> poles;
};

void run_robin(const Globals& g, const RobinArgs& a, RunRecord& rec) {
  const auto M = read_mesh(a.mesh, rec);
  for (int v : a.poles) vertex_arg(*M, v, "pole");
  auto L = std::make_shared<const NeumannLaplacian>(M);
  GreenCache C(L, GreenStore(cache_dir(g, a.mesh)));
  const auto R = C.robin_field(a.poles, resolve_threads(g.threads));
  json arr = json::array();
  std::ostringstream os;
  for (int v : a.poles) {
    const SurfacePoint p = M->vertex_point(v);
    arr.push_back(json{{"pole", v}, {"point", point_json(p)}, {"kappa", kappa(p)}, {"robin", R.at(v)}});
    os << v << "  " << fmt(R.at(v)) << "\n";
  }
  emit(g, arr, os.str());
}

// -------------------------------------------------------------- kirchhoff

struct KrScanArgs {
  std::string mesh, potential = "1";
  int p = 0, q = 1, starts = 200;
  double tol = 0;
};

void run_kr_scan(const Globals& g, const KrScanArgs& a, RunRecord& rec) {
  if (a.starts < 1) throw UsageError("--starts must be at least 1");
  if (a.p < 0 || a.q < 0 || 2 * a.p + a.q < 1) throw UsageError("need p, q >= 0 and 2p + q >= 1");
  const Potential V = read_potential(a.potential);
  const auto M = read_mesh(a.mesh, rec);
  GreenTable::Options to;
  to.threads = g.threads;
  to.cache_dir = cache_dir(g, a.mesh);
  auto T = std::make_shared<const GreenTable>(std::make_shared<const NeumannLaplacian>(M), to);
  const KirchhoffRouth K(T, V);
  const double tol = a.tol > 0 ? a.tol : 1e-7;
  const CensusResult c = K.find_critical_points(a.p, a.q, a.starts, tol, g.seed, g.threads);
  json arr = json::array();
  std::ostringstream os;
  os << "starts " << c.starts << "  converged " << c.converged << "  critical points " << c.points.size() << "  signed sum " << c.signed_sum
     << (c.all_nondegenerate ? "" : "  (not certified: degenerate point)") << "\n";
  for (const auto& cp : c.points) {
    json pts = json::array();
    for (const auto& y : cp.config.points) pts.push_back(point_json(y));
    arr.push_back({{"points", pts},
                   {"value", cp.value},
                   {"grad_norm", cp.grad_norm},
                   {"morse_index", cp.morse_index},
                   {"L", cp.L},
                   {"L_error", cp.L_error},
                   {"nondegenerate", cp.nondegenerate},
                   {"found_by", cp.found_by},
                   {"class", to_string(cp.cls)}});
    os << "  value " << fmt(cp.value) << "  morse " << cp.morse_index << "  L " << fmt(cp.L) << "  " << to_string(cp.cls) << "\n";
  }
  emit(g, arr, os.str());
}

// ----------------------------------------------------------------- degree

struct DegreeArgs {
  int genus = 0, boundaries = 1, mmax = 10;
  bool csv = false;
};

void run_degree(const Globals& g, const DegreeArgs& a, RunRecord&) {
  if (a.mmax < 1 || a.mmax > degree::kMaxM) throw UsageError("--mmax must be in [1, " + std::to_string(degree::kMaxM) + "]");
  const auto t = degree::degree_table(a.genus, a.boundaries, a.mmax);
  degree::check_telescoping(t);
  if (a.csv && g.json_out) throw UsageError("--json and --csv are exclusive");
  if (g.json_out)
    std::cout << degree::to_json(t) << "\n";
  else
    std::cout << degree::to_csv(t);
}

// ----------------------------------------------------------------- bubble

struct SelfEnergyArgs {
  std::string mesh, lambdas = "20,30,45,67,100";
  int pole = -1;
  double cutoff = 0;
  bool no_refine = false;
};

void run_selfenergy(const Globals& g, const SelfEnergyArgs& a, RunRecord& rec) {
  const std::vector<double> lams = parse_list(a.lambdas, "lambda list");
  for (double l : lams)
    if (!(l > 1)) throw UsageError("lambdas must exceed 1");
  const auto base = read_mesh(a.mesh, rec);
  vertex_arg(*base, a.pole, "pole");
  const SurfacePoint c0 = base->vertex_point(a.pole);
  const double cutoff = a.cutoff > 0 ? a.cutoff : max_cutoff(*base, c0);
  auto M = a.no_refine ? base
                       : std::make_shared<const SurfaceMesh>(refine_for_bubble(*base, c0.x, *std::max_element(lams.begin(), lams.end()), cutoff));
  const int v = M->nearest_vertex(c0.x);
  const SurfacePoint c = M->vertex_point(v);
  auto L = std::make_shared<const NeumannLaplacian>(M);
  GreenCache C(L, GreenStore(cache_dir(g, a.mesh)));
  const double R = C.robin(v);
  const BubbleProjector P(L);
  const SelfEnergyReport r = self_energy_check(P, c, lams, R, cutoff, g.threads);
  const json j{{"pole", a.pole},
               {"point", point_json(c)},
               {"vertices", M->num_vertices()},
               {"kappa", r.kappa},
               {"robin", r.robin},
               {"cutoff", r.cutoff},
               {"lambdas", r.lambdas},
               {"energy", r.energy},
               {"mass", r.mass},
               {"slope", r.slope},
               {"intercept", r.intercept},
               {"expected_slope", r.expected_slope},
               {"expected_intercept", r.expected_intercept},
               {"slope_error", r.slope_error},
               {"intercept_error", r.intercept_error},
               {"fit_residual", r.fit_residual}};
  std::ostringstream os;
  os << "kappa " << fmt(r.kappa) << "  robin " << fmt(r.robin) << "  cutoff " << fmt(r.cutoff) << "  vertices " << M->num_vertices() << "\n";
  for (size_t i = 0; i < r.lambdas.size(); ++i) os << "  lambda " << r.lambdas[i] << "  <Pd,Pd> " << fmt(r.energy[i]) << "\n";
  os << "slope " << fmt(r.slope) << " (expected " << fmt(r.expected_slope) << ", rel err " << r.slope_error << ")\n"
     << "intercept " << fmt(r.intercept) << " (expected " << fmt(r.expected_intercept) << ", rel err " << r.intercept_error << ")\n";
  emit(g, j, os.str());
}

json ansatz_json(const Ansatz& A) {
  json bs = json::array();
  for (size_t i = 0; i < A.params.size(); ++i)
    bs.push_back({{"alpha", A.alphas[i]}, {"lambda", A.params[i].lambda}, {"center", point_json(A.params[i].center)}, {"cutoff", A.params[i].cutoff}});
  return json{{"p", A.p},
              {"q", A.q},
              {"bubbles", bs},
              {"remainder_norm", A.remainder_norm},
              {"orthogonality_max", A.orthogonality_max},
              {"iterations", A.iterations},
              {"converged", A.converged}};
}

struct FitArgs {
  std::string mesh, field;
  int p = 0, q = 1;
};

void run_fit(const Globals& g, const FitArgs& a, RunRecord& rec) {
  if (a.p < 0 || a.q < 0 || a.p + a.q < 1) throw UsageError("need p, q >= 0 and p + q >= 1");
  const auto M = read_mesh(a.mesh, rec);
  require_file(a.field);
  auto L = std::make_shared<const NeumannLaplacian>(M);
  VectorXd u;
  try {
    u = read_field_csv(a.field, M->num_vertices());
  } catch (const std::runtime_error& e) {
    throw UsageError(e.what());
  }
  GreenCache C(L, GreenStore(cache_dir(g, a.mesh)));
  const BubbleProjector P(L);
  const Ansatz init = initial_ansatz(P, L->zero_mean(u), a.p, a.q, [&](const SurfacePoint& y) { return C.robin(M->nearest_vertex(y.x)); });
  const Ansatz A = fit_decomposition(P, L->zero_mean(u), a.p, a.q, init);
  std::ostringstream os;
  for (size_t i = 0; i < A.params.size(); ++i)
    os << (static_cast<int>(i) < a.p ? "interior" : "boundary") << "  alpha " << fmt(A.alphas[i]) << "  lambda " << fmt(A.params[i].lambda) << "  at ("
       << fmt(A.params[i].center.x.x()) << ", " << fmt(A.params[i].center.x.y()) << ")\n";
  os << "|w| " << A.remainder_norm << "  orthogonality " << A.orthogonality_max << "\n";
  emit(g, ansatz_json(A), os.str());
}

// ------------------------------------------------------- solve, continue

json result_json(const SolveResult& r) {
  return json{{"rho", r.rho},
              {"residual", r.residual_norm},
              {"energy", r.energy},
              {"newton_iters", r.newton_iters},
              {"sup_u", r.sup_u},
              {"h1_norm", r.h1_norm},
              {"classification", to_string(r.cls)},
              {"converged", r.converged}};
}

struct SolveArgs {
  std::string mesh, potential = "1", u0, out;
  double rho = 0, tol = 1e-10;
};

void run_solve(const Globals& g, const SolveArgs& a, RunRecord& rec) {
  if (!(a.rho >= 0)) throw UsageError("--rho must be >= 0");
  const Potential V = read_potential(a.potential);
  const auto M = read_mesh(a.mesh, rec);
  auto L = std::make_shared<const NeumannLaplacian>(M);
  VectorXd u0 = VectorXd::Zero(L->size());
  if (!a.u0.empty()) {
    require_file(a.u0);
    try {
      u0 = L->zero_mean(read_field_csv(a.u0, L->size()));
    } catch (const std::runtime_error& e) {
      throw UsageError(e.what());
    }
  }
  const MeanFieldProblem P(L, V, a.rho);
  SolveOptions o;
  o.tol = a.tol;
  const SolveResult r = newton_solve(P, u0, o);
  if (!a.out.empty()) {
    write_field_csv(a.out, r.u);
    rec.outputs.push_back(a.out);
  }
  std::ostringstream os;
  os << "rho " << fmt(r.rho) << "  residual " << r.residual_norm << "  iterations " << r.newton_iters << "  sup u " << fmt(r.sup_u) << "  "
     << to_string(r.cls) << "\n";
  emit(g, result_json(r), os.str());
}

struct ContinueArgs {
  std::string mesh, potential = "1", out, kr_mesh, final_field;
  double rho_start = 0.5, rho_end = 0;
  int steps = 0, p = 0, q = 1;
  bool diagnose = false;
};

void run_continue(const Globals& g, const ContinueArgs& a, RunRecord& rec) {
  if (a.steps < 2) throw UsageError("--steps must be at least 2");
  if (!(a.rho_start >= 0) || !(a.rho_end >= 0)) throw UsageError("rho values must be >= 0");
  if (a.diagnose && (a.p < 0 || a.q < 0 || 2 * a.p + a.q < 1)) throw UsageError("--diagnose needs p, q >= 0 and 2p + q >= 1");
  const Potential V = read_potential(a.potential);
  const auto M = read_mesh(a.mesh, rec);
  if (!a.kr_mesh.empty()) require_file(a.kr_mesh);
  auto L = std::make_shared<const NeumannLaplacian>(M);
  std::vector<double> path;
  for (int k = 0; k < a.steps; ++k) path.push_back(a.rho_start + (a.rho_end - a.rho_start) * k / (a.steps - 1));
  const MeanFieldProblem P(L, V, a.rho_start);
  const ContinuationResult c = continuation(P, path, VectorXd::Zero(L->size()));

  std::unique_ptr<KirchhoffRouth> K;
  if (a.diagnose) {
    const std::string km = a.kr_mesh.empty() ? a.mesh : a.kr_mesh;
    GreenTable::Options to;
    to.threads = g.threads;
    to.cache_dir = cache_dir(g, km);
    auto TL = std::make_shared<const NeumannLaplacian>(std::make_shared<const SurfaceMesh>(load_mesh(km)));
    K = std::make_unique<KirchhoffRouth>(std::make_shared<const GreenTable>(TL, to), V);
  }

  std::ostringstream csv;
  csv.imbue(std::locale::classic());
  csv << "rho,sup_u,h1_norm,energy,residual,newton_iters,classification";
  if (a.diagnose) csv << ",lambda,mu_observed,mu_predicted,L,sign_agreement";
  csv << "\n";
  json steps = json::array();
  for (size_t k = 0; k < c.steps.size(); ++k) {
    const auto& s = c.steps[k];
    csv << fmt(s.rho) << "," << fmt(s.sup_u) << "," << fmt(s.h1_norm) << "," << fmt(s.energy) << "," << fmt(s.residual_norm) << "," << s.newton_iters
        << "," << to_string(s.cls);
    json js = result_json(s);
    js["step_kind"] = c.kinds[k];
    if (a.diagnose) {
      // only states with a resolved concentration carry a fit
      std::optional<BlowupDiagnostics> d;
      if (s.cls == SolveClass::near_blowup) {
        try {
          d = blowup_diagnostics(P, s, a.p, a.q, *K);
        } catch (const FitError&) {
        }
      }
      if (d) {
        csv << "," << fmt(d->fit.params[0].lambda) << "," << fmt(d->mu_observed) << "," << fmt(d->mu_predicted) << "," << fmt(d->L) << ","
            << (d->sign_agreement ? "true" : "false");
        json jd{{"lambdas", json::array()}, {"alphas", d->fit.alphas}, {"tau", d->tau}, {"local_mass", d->local_mass},
                {"mu_observed", d->mu_observed}, {"mu_predicted", d->mu_predicted}, {"L", d->L}, {"sign_agreement", d->sign_agreement}};
        for (const auto& bp : d->fit.params) jd["lambdas"].push_back(bp.lambda);
        js["diagnostics"] = jd;
      } else {
        csv << ",,,,,";
      }
    }
    csv << "\n";
    steps.push_back(js);
  }
  if (!a.out.empty()) write_text(a.out, csv.str(), rec);
  if (!a.final_field.empty() && !c.steps.empty()) {
    write_field_csv(a.final_field, c.steps.back().u);
    rec.outputs.push_back(a.final_field);
  }
  const json j{{"steps", steps}, {"truncated", c.truncated}, {"message", c.message}};
  std::ostringstream os;
  os << c.steps.size() << " of " << path.size() << " states" << (c.truncated ? " (truncated: " + c.message + ")" : "") << "\n";
  if (a.out.empty()) os << csv.str();
  emit(g, j, os.str());
  if (c.truncated) throw SolverError("continuation truncated: " + c.message);
}

// ---------------------------------------------------------------- manifest

void write_manifest(const Globals& g, const RunRecord& rec, double wall) {
  json outs = json::object();
  for (const auto& p : rec.outputs) outs[p] = fs::is_regular_file(p) ? fnv1a(slurp(p)) : "";
  json j;
  j["tool"] = "mfdeg";
  j["version"] = MFDEG_VERSION;
  j["subcommand"] = rec.subcommand;
  j["argv"] = g.argv;
  j["mesh_hash"] = rec.mesh_hash;
  j["seed"] = g.seed;
  j["threads"] = resolve_threads(g.threads);
  j["wall_time_s"] = wall;
  j["output_digests"] = outs;
  j["digest"] = "fnv1a64";
  std::ofstream f(g.manifest);
  if (!f) throw UsageError("cannot write manifest '" + g.manifest + "'");
  f << j.dump(2) << "\n";
}

int fail(int code, const std::string& kind, const std::string& msg) {
  std::cerr << json{{"error", kind}, {"message", msg}, {"exit_code", code}}.dump() << "\n";
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  std::cout.imbue(std::locale::classic());
  std::cout << std::setprecision(10);
  Globals g;
  for (int i = 0; i < argc; ++i) g.argv.emplace_back(argv[i]);

  CLI::App app{"Neumann mean-field equation: Green data, Kirchhoff-Routh census, degrees, bubbles, continuation", "mfdeg"};
  app.set_version_flag("--version", MFDEG_VERSION);
  app.require_subcommand(1);
  app.fallthrough();
  app.add_flag("--json", g.json_out, "emit JSON on stdout");
  app.add_option("--seed", g.seed, "seed for every stochastic choice");
  app.add_option("--threads", g.threads, "worker threads (0: all cores)")->check(CLI::NonNegativeNumber);
  app.add_flag("--no-cache", g.no_cache, "do not read or write the Green cache");
  app.add_option("--manifest", g.manifest, "write a run manifest JSON here");

  RunRecord rec;
  std::function<void()> action;
  auto on = [&](CLI::App* sub, std::string name, auto fn) { sub->callback([&, name, fn] { rec.subcommand = name; action = fn; }); };

  auto* mesh = app.add_subcommand("mesh", "mesh tools");
  mesh->require_subcommand(1);
  MeshInfoArgs mi;
  auto* info = mesh->add_subcommand("info", "topology and size of a mesh file");
  info->add_option("path", mi.path)->required();
  on(info, "mesh info", [&] { run_mesh_info(g, mi, rec); });
  MeshGenArgs mg;
  auto* gen = mesh->add_subcommand("gen", "write a generated unit-area mesh");
  gen->add_option("--shape", mg.shape, "disk | annulus | square | pants");
  gen->add_option("--rings", mg.rings, "disk: radial rings");
  gen->add_option("--outer", mg.outer, "disk: outer uniform rings");
  gen->add_option("--inner", mg.inner, "annulus: inner radius ratio");
  gen->add_option("--ntheta", mg.ntheta, "annulus: angular cells");
  gen->add_option("--nr", mg.nr, "annulus: radial cells");
  gen->add_option("-n", mg.n, "square, pants: cells per side");
  gen->add_option("--refine-at", mg.refine_at, "x,y focus of local refinement")->delimiter(',')->expected(2);
  gen->add_option("--h-min", mg.h_min, "edge length at the focus");
  gen->add_option("--grade", mg.grade, "growth of the edge length away from the focus");
  gen->add_option("--radius", mg.radius, "radius of the refined region");
  gen->add_option("--out", mg.out)->required();
  on(gen, "mesh gen", [&] { run_mesh_gen(g, mg, rec); });

  GreenArgs ga;
  auto* green = app.add_subcommand("green", "Neumann Green function of one pole");
  green->add_option("--mesh", ga.mesh)->required();
  green->add_option("--pole", ga.pole)->required();
  green->add_option("--out", ga.out, "field CSV")->required();
  on(green, "green", [&] { run_green(g, ga, rec); });

  RobinArgs ra;
  auto* robin = app.add_subcommand("robin", "Robin function at vertices");
  robin->add_option("--mesh", ra.mesh)->required();
  robin->add_option("--poles", ra.poles)->delimiter(',')->required();
  on(robin, "robin", [&] { run_robin(g, ra, rec); });

  auto* kr = app.add_subcommand("kr", "Kirchhoff-Routh function");
  kr->require_subcommand(1);
  KrScanArgs ka;
  auto* scan = kr->add_subcommand("scan", "multi-start census of critical points");
  scan->add_option("--mesh", ka.mesh)->required();
  scan->add_option("--potential", ka.potential, "expression in x, y");
  scan->add_option("-p", ka.p, "interior points");
  scan->add_option("-q", ka.q, "boundary points");
  scan->add_option("--starts", ka.starts);
  scan->add_option("--tol", ka.tol, "gradient tolerance");
  on(scan, "kr scan", [&] { run_kr_scan(g, ka, rec); });

  DegreeArgs da;
  auto* deg = app.add_subcommand("degree", "Leray-Schauder degree table");
  deg->add_option("--genus", da.genus);
  deg->add_option("--boundaries", da.boundaries);
  deg->add_option("--mmax", da.mmax);
  deg->add_flag("--csv", da.csv, "CSV output (default without --json)");
  on(deg, "degree", [&] { run_degree(g, da, rec); });

  auto* bubble = app.add_subcommand("bubble", "projected bubbles");
  bubble->require_subcommand(1);
  SelfEnergyArgs sa;
  auto* se = bubble->add_subcommand("selfenergy", "regress <P delta, P delta> on ln lambda");
  se->add_option("--mesh", sa.mesh)->required();
  se->add_option("--pole", sa.pole)->required();
  se->add_option("--lambdas", sa.lambdas);
  se->add_option("--cutoff", sa.cutoff, "cutoff radius (default: largest admissible)");
  se->add_flag("--no-refine", sa.no_refine, "use the mesh as given");
  on(se, "bubble selfenergy", [&] { run_selfenergy(g, sa, rec); });
  FitArgs fa;
  auto* fit = bubble->add_subcommand("fit", "decompose a field into projected bubbles");
  fit->add_option("--mesh", fa.mesh)->required();
  fit->add_option("--field", fa.field)->required();
  fit->add_option("-p", fa.p);
  fit->add_option("-q", fa.q);
  on(fit, "bubble fit", [&] { run_fit(g, fa, rec); });

  SolveArgs sv;
  auto* solve = app.add_subcommand("solve", "Newton solve at one rho");
  solve->add_option("--mesh", sv.mesh)->required();
  solve->add_option("--potential", sv.potential);
  solve->add_option("--rho", sv.rho)->required();
  solve->add_option("--u0", sv.u0, "initial field CSV");
  solve->add_option("--out", sv.out, "solution field CSV");
  solve->add_option("--tol", sv.tol);
  on(solve, "solve", [&] { run_solve(g, sv, rec); });

  ContinueArgs ca;
  auto* cont = app.add_subcommand("continue", "continuation in rho");
  cont->add_option("--mesh", ca.mesh)->required();
  cont->add_option("--potential", ca.potential);
  cont->add_option("--rho-start", ca.rho_start);
  cont->add_option("--rho-end", ca.rho_end)->required();
  cont->add_option("--steps", ca.steps)->required();
  cont->add_flag("--diagnose", ca.diagnose, "fit bubbles to near-blow-up states");
  cont->add_option("-p", ca.p);
  cont->add_option("-q", ca.q);
  cont->add_option("--kr-mesh", ca.kr_mesh, "coarser mesh for the Green table used by --diagnose");
  cont->add_option("--out", ca.out, "path CSV");
  cont->add_option("--final-field", ca.final_field, "field CSV of the last state");
  on(cont, "continue", [&] { run_continue(g, ca, rec); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail(2, "usage", e.what());
  }

  const auto t0 = std::chrono::steady_clock::now();
  try {
    action();
    if (!g.manifest.empty()) write_manifest(g, rec, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  } catch (const std::invalid_argument& e) {
    return fail(2, "invalid_input", e.what());
  } catch (const MeshError& e) {
    return fail(2, "mesh", e.what());
  } catch (const SolverError& e) {
    return fail(3, "solver", e.what());
  } catch (const FitError& e) {
    return fail(3, "fit", e.what());
  } catch (const std::exception& e) {
    return fail(3, "numerical", e.what());
  }
  return 0;
}
