// Batch experiment driver: deterministic CSV/JSON emission for the
// spectral-graph laboratory. Configuration comes from an optional JSON file
// plus --key=value overrides; every run writes a manifest next to its
// tables. Exit codes: 0 ok, 2 config validation, 3 numeric failure.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <thread>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "qelab/anisotropic.hpp"
#include "qelab/csv.hpp"
#include "qelab/nonbacktracking.hpp"
#include "qelab/operators.hpp"
#include "qelab/spectral.hpp"
#include "qelab/tree.hpp"
#include "qelab/variance.hpp"

using namespace qelab;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct ExperimentConfig {
  std::string command;
  int q = 2;
  std::vector<int> sizes;
  std::vector<std::uint64_t> seeds{1};
  std::vector<double> p;
  std::string graph = "petersen";
  std::string observable = "random_diagonal";  // |shell|identity|psi2
  int observable_k = 0;
  std::uint64_t observable_seed = 2024;
  std::string centering = "spherical";  // |none
  double lambda_min = -1.0, lambda_max = 1.0;
  int lambda_points = 81;
  std::vector<double> energies;
  std::vector<int> shells{1};
  std::vector<double> horizons{10.0, 20.0, 40.0};
  int taylor_m = 10;
  int shell_cap = 12;
  int depth = 3;
  double lambda = 0.1;
  std::optional<std::pair<double, double>> interval;
  std::string output_dir = "out";
  int jobs = 0;  // 0: logical cores
  double tol_kmc = 0.05;
  double tol_pairing = 1e-6;
};

class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& m) : std::runtime_error(m) {}
};

void validate(const ExperimentConfig& c) {
  if (!c.p.empty()) {
    double sum = 0;
    for (double v : c.p) {
      if (!(v > 0)) throw ValidationError("p: entries must be positive");
      sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-12)
      throw ValidationError("p: weights must sum to 1");
    if (static_cast<int>(c.p.size()) != c.q + 1)
      throw ValidationError("p: needs exactly q+1 weights");
  }
  if (!c.sizes.empty()) {
    for (std::size_t i = 1; i < c.sizes.size(); ++i)
      if (c.sizes[i] <= c.sizes[i - 1])
        throw ValidationError("sizes: must be strictly ascending");
  }
  if (c.seeds.empty()) throw ValidationError("seeds: must be nonempty");
  if (c.q < 1) throw ValidationError("q: branching must be >= 1");
  if (c.lambda_points < 2) throw ValidationError("lambda_points: >= 2");
  if (c.centering != "spherical" && c.centering != "none")
    throw ValidationError("centering: must be spherical or none");
}

json config_to_json(const ExperimentConfig& c) {
  json j;
  j["command"] = c.command;
  j["q"] = c.q;
  j["sizes"] = c.sizes;
  j["seeds"] = c.seeds;
  if (!c.p.empty()) j["p"] = c.p;
  j["graph"] = c.graph;
  j["observable"] = {{"kind", c.observable},
                     {"k", c.observable_k},
                     {"seed", c.observable_seed}};
  j["centering"] = c.centering;
  j["lambda_grid"] = {{"min", c.lambda_min},
                      {"max", c.lambda_max},
                      {"points", c.lambda_points}};
  if (!c.energies.empty()) j["energies"] = c.energies;
  j["shells"] = c.shells;
  j["horizons"] = c.horizons;
  j["taylor_m"] = c.taylor_m;
  j["shell_cap"] = c.shell_cap;
  j["depth"] = c.depth;
  j["lambda"] = c.lambda;
  j["output_dir"] = c.output_dir;
  j["jobs"] = c.jobs;
  return j;
}

void apply_json(const json& j, ExperimentConfig* c) {
  if (j.contains("q")) c->q = j["q"];
  if (j.contains("sizes")) c->sizes = j["sizes"].get<std::vector<int>>();
  if (j.contains("seeds"))
    c->seeds = j["seeds"].get<std::vector<std::uint64_t>>();
  if (j.contains("p")) c->p = j["p"].get<std::vector<double>>();
  if (j.contains("graph")) c->graph = j["graph"];
  if (j.contains("observable")) {
    const auto& o = j["observable"];
    if (o.contains("kind")) c->observable = o["kind"];
    if (o.contains("k")) c->observable_k = o["k"];
    if (o.contains("seed")) c->observable_seed = o["seed"];
  }
  if (j.contains("centering")) c->centering = j["centering"];
  if (j.contains("lambda_grid")) {
    const auto& g = j["lambda_grid"];
    if (g.contains("min")) c->lambda_min = g["min"];
    if (g.contains("max")) c->lambda_max = g["max"];
    if (g.contains("points")) c->lambda_points = g["points"];
  }
  if (j.contains("energies"))
    c->energies = j["energies"].get<std::vector<double>>();
  if (j.contains("shells")) c->shells = j["shells"].get<std::vector<int>>();
  if (j.contains("horizons"))
    c->horizons = j["horizons"].get<std::vector<double>>();
  if (j.contains("taylor_m")) c->taylor_m = j["taylor_m"];
  if (j.contains("shell_cap")) c->shell_cap = j["shell_cap"];
  if (j.contains("depth")) c->depth = j["depth"];
  if (j.contains("lambda")) c->lambda = j["lambda"];
  if (j.contains("output_dir")) c->output_dir = j["output_dir"];
  if (j.contains("jobs")) c->jobs = j["jobs"];
}

std::string git_describe() {
  FILE* pipe = popen("git describe --always --dirty 2>/dev/null", "r");
  if (!pipe) return "unknown";
  char buf[128] = {0};
  std::string out;
  while (fgets(buf, sizeof(buf), pipe)) out += buf;
  pclose(pipe);
  while (!out.empty() && (out.back() == '\n' || out.back() == '\r'))
    out.pop_back();
  return out.empty() ? "unknown" : out;
}

struct RunContext {
  ExperimentConfig cfg;
  std::chrono::steady_clock::time_point start;
  fs::path dir;

  explicit RunContext(ExperimentConfig c)
      : cfg(std::move(c)), start(std::chrono::steady_clock::now()) {
    dir = fs::path(cfg.output_dir);
    fs::create_directories(dir);
  }

  void write_csv(const std::string& name, const CsvWriter& csv) const {
    std::ofstream os(dir / name, std::ios::binary);
    csv.write(os);
  }

  void write_manifest(json extra = {}) const {
    json j;
    j["config"] = config_to_json(cfg);
    j["seed"] = cfg.seeds.front();
    j["git_describe"] = git_describe();
    j["elapsed_s"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
            .count();
    if (!extra.empty()) j["results"] = extra;
    std::ofstream os(dir / "manifest.json");
    os << j.dump(2) << "\n";
  }
};

// deterministic indexed parallel map; results land in pre-assigned slots
template <typename F>
void parallel_for(int jobs, int count, F&& body) {
  int workers = jobs > 0 ? jobs : int(std::thread::hardware_concurrency());
  workers = std::max(1, std::min(workers, count));
  if (workers == 1) {
    for (int i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&, w] {
      try {
        for (int i = next.fetch_add(1); i < count; i = next.fetch_add(1))
          body(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

RegularGraph load_graph(const ExperimentConfig& cfg, BondTable* bonds) {
  if (fs::exists(cfg.graph) && fs::path(cfg.graph).extension() == ".json") {
    std::ifstream is(cfg.graph);
    std::string text((std::istreambuf_iterator<char>(is)),
                     std::istreambuf_iterator<char>());
    auto [g, b] = graph_from_json(text);
    *bonds = std::move(b);
    return std::move(g);
  }
  RegularGraph g = build_named(cfg.graph);
  *bonds = make_bond_table(g);
  return g;
}

// Fail-fast invariant sweeps: each command runs the checks for the modules
// it touches and aborts on violation.
void invariants_operators(const RegularGraph& g, const BondTable& bonds) {
  PathSpace space(g, bonds);
  PathKernel K = random_kernel(space.index(1), 99);
  PathKernel back = apply_M(space, apply_Mstar(space, K));
  if ((back.values - K.values).norm() > 1e-10)
    throw std::runtime_error("invariant violation: M M* != I on H_1");
  PathKernel a = random_kernel(space.index(1), 7);
  PathKernel b = random_kernel(space.index(2), 8);
  cplx lhs = inner_h(g, apply_nabla(space, a), b);
  cplx rhs = inner_h(g, a, apply_nabla_star(space, b));
  if (std::abs(lhs - rhs) > 1e-10)
    throw std::runtime_error("invariant violation: grad adjoint mismatch");
}

void invariants_green(const TransitionWeights& p) {
  GreenState st = solve_green(p, cplx(0.2, 0.5));
  if (st.residual > 1e-10 || !st.branch_ok)
    throw std::runtime_error("invariant violation: green system residual");
}

void invariants_graph(const RegularGraph& g) {
  validate_graph(g);
  long deg = 0;
  for (auto& a : g.adj) deg += static_cast<long>(a.size());
  if (deg != static_cast<long>(g.n) * (g.q + 1))
    throw std::runtime_error("invariant violation: degree sum");
}

TransitionWeights weights_of(const ExperimentConfig& cfg) {
  if (cfg.p.empty()) {
    TransitionWeights tw;
    tw.p.assign(cfg.q + 1, 1.0 / (cfg.q + 1));
    return tw;
  }
  TransitionWeights tw{cfg.p};
  tw.validate();
  return tw;
}

ObservableSpec observable_of(const ExperimentConfig& cfg) {
  ObservableSpec spec;
  spec.k = cfg.observable_k;
  spec.seed = cfg.observable_seed;
  if (cfg.observable == "random_diagonal")
    spec.kind = ObservableKind::random_diagonal;
  else if (cfg.observable == "shell")
    spec.kind = ObservableKind::shell_kernel;
  else if (cfg.observable == "identity")
    spec.kind = ObservableKind::identity;
  else if (cfg.observable == "psi2")
    spec.kind = ObservableKind::psi2;
  else
    throw ValidationError("observable: unknown kind " + cfg.observable);
  return spec;
}

std::vector<double> lambda_grid(const ExperimentConfig& cfg) {
  std::vector<double> grid;
  for (int i = 0; i < cfg.lambda_points; ++i)
    grid.push_back(cfg.lambda_min + (cfg.lambda_max - cfg.lambda_min) * i /
                                        (cfg.lambda_points - 1));
  return grid;
}

// ---------------------------------------------------------------- commands

int cmd_generate(RunContext& ctx) {
  const auto& cfg = ctx.cfg;
  if (cfg.sizes.empty()) throw ValidationError("sizes: required for generate");
  CsvWriter csv({"n", "seed", "girth", "min_rho", "bad1_fraction", "file"});
  bool labelled = cfg.graph == "random-labelled";
  for (int n : cfg.sizes)
    for (auto seed : cfg.seeds) {
      RegularGraph g;
      BondTable b;
      if (labelled) {
        auto [gr, bt] = random_labelled_regular(n, cfg.q, seed);
        g = std::move(gr);
        b = std::move(bt);
      } else {
        g = random_regular(n, cfg.q + 1, seed);
        b = make_bond_table(g);
      }
      invariants_graph(g);
      GeometryProfile geo = geometry_profile(g);
      std::string fname = "graph_n" + std::to_string(n) + "_s" +
                          std::to_string(seed) + ".json";
      std::ofstream os(ctx.dir / fname);
      os << graph_to_json(g, &b) << "\n";
      csv.row({long(n), long(seed), long(geo.girth), long(geo.min_rho()),
               geo.bad_fraction(1), fname});
    }
  ctx.write_csv("generate.csv", csv);
  ctx.write_manifest();
  return 0;
}

int cmd_geometry(RunContext& ctx) {
  BondTable bonds;
  RegularGraph g = load_graph(ctx.cfg, &bonds);
  invariants_graph(g);
  GeometryProfile geo = geometry_profile(g);
  CsvWriter csv({"vertex", "rho"});
  for (int x = 0; x < g.n; ++x) csv.row({long(x), long(geo.rho[x])});
  ctx.write_csv("geometry.csv", csv);
  CsvWriter bad({"R", "bad_count"});
  for (int R = 0; R <= geo.girth + 2; ++R)
    bad.row({long(R), long(geo.bad_count(R))});
  ctx.write_csv("bad_count.csv", bad);
  ctx.write_manifest({{"girth", geo.girth}, {"min_rho", geo.min_rho()}});
  return 0;
}

int cmd_spectrum(RunContext& ctx) {
  BondTable bonds;
  RegularGraph g = load_graph(ctx.cfg, &bonds);
  invariants_graph(g);
  EigenSystem eig;
  if (!ctx.cfg.p.empty()) {
    if (!bonds.labelled())
      throw ValidationError("p: spectrum of A_p needs a labelled graph");
    eig = ap_eigensystem(bonds, weights_of(ctx.cfg));
  } else {
    eig = adjacency_eigensystem(g);
  }
  CsvWriter csv({"j", "lambda"});
  for (int j = 0; j < eig.n(); ++j) csv.row({long(j), eig.lambdas(j)});
  ctx.write_csv("spectrum.csv", csv);
  ctx.write_manifest({{"beta", eig.beta}});
  return 0;
}

int cmd_km_compare(RunContext& ctx) {
  const auto& cfg = ctx.cfg;
  if (cfg.sizes.empty()) throw ValidationError("sizes: required");
  CsvWriter csv({"n", "seed", "sup_cdf_distance"});
  double worst = 0;
  struct Row {
    int n;
    std::uint64_t seed;
    double dist;
  };
  std::vector<Row> rows(cfg.sizes.size() * cfg.seeds.size());
  parallel_for(cfg.jobs, int(rows.size()), [&](int i) {
    int n = cfg.sizes[i / cfg.seeds.size()];
    std::uint64_t seed = cfg.seeds[i % cfg.seeds.size()];
    RegularGraph g = random_regular(n, cfg.q + 1, seed);
    EigenSystem eig = adjacency_eigensystem(g);
    rows[i] = {n, seed, km_cdf_distance(eig, cfg.q)};
  });
  for (auto& r : rows) {
    csv.row({long(r.n), long(r.seed), r.dist});
    worst = std::max(worst, r.dist);
  }
  ctx.write_csv("km_compare.csv", csv);

  // histogram of the largest family member against the density mass
  RegularGraph g = random_regular(cfg.sizes.back(), cfg.q + 1, cfg.seeds[0]);
  EigenSystem eig = adjacency_eigensystem(g);
  PlancherelDensity dens = km_density(cfg.q);
  const int bins = 40;
  double lo = -dens.support(), hi = dens.support();
  CsvWriter hist({"bin_lo", "bin_hi", "empirical_mass", "km_mass"});
  for (int b = 0; b < bins; ++b) {
    double a = lo + (hi - lo) * b / bins, bnd = lo + (hi - lo) * (b + 1) / bins;
    int count = 0;
    for (int j = 0; j < eig.n(); ++j)
      if (eig.lambdas(j) >= a && eig.lambdas(j) < bnd) ++count;
    double mass = integrate([&](double x) { return dens(x); }, a, bnd, 1e-9,
                            24, 2)
                      .value;
    hist.row({a, bnd, double(count) / eig.n(), mass});
  }
  ctx.write_csv("km_histogram.csv", hist);

  // density and spherical tabulations: columns (lambda, value)
  CsvWriter denstab({"lambda", "value"});
  CsvWriter sphtab({"lambda", "d", "value"});
  for (int i = 0; i <= 200; ++i) {
    double lam = -dens.support() + 2 * dens.support() * i / 200.0;
    denstab.row({lam, dens(lam)});
    for (int d = 0; d <= 4; ++d)
      sphtab.row({lam, long(d), spherical_phi(cfg.q, lam, d)});
  }
  ctx.write_csv("km_density.csv", denstab);
  ctx.write_csv("spherical.csv", sphtab);
  ctx.write_manifest({{"worst_sup_distance", worst}});
  if (worst >= cfg.tol_kmc) {
    std::cerr << "km-compare: sup-CDF distance " << worst << " exceeds "
              << cfg.tol_kmc << "\n";
    return 3;
  }
  return 0;
}

int cmd_nb_spectrum(RunContext& ctx) {
  BondTable bonds;
  RegularGraph g = load_graph(ctx.cfg, &bonds);
  invariants_graph(g);
  EigenSystem eig = adjacency_eigensystem(g);
  auto rep = nb_spectrum_correspondence(bonds, eig);
  CsvWriter csv({"predicted_re", "predicted_im", "matched_re", "matched_im",
                 "abs_error", "family"});
  for (auto& p : rep.pairs)
    csv.row({p.predicted.real(), p.predicted.imag(), p.matched.real(),
             p.matched.imag(), p.abs_error, to_string(p.family)});
  ctx.write_csv("nb_spectrum.csv", csv);
  ctx.write_manifest({{"max_error", rep.max_error},
                      {"betti", rep.betti},
                      {"bipartite", rep.bipartite},
                      {"q_simple", rep.q_simple}});
  if (rep.max_error > ctx.cfg.tol_pairing) {
    std::cerr << "nb-spectrum: pairing error " << rep.max_error << "\n";
    return 3;
  }
  return 0;
}

int cmd_operators_selftest(RunContext& ctx) {
  struct Check {
    std::string graph, name;
    double residual, tol;
  };
  std::vector<Check> checks;
  auto run_graph = [&](const std::string& name, const RegularGraph& g) {
    BondTable bonds = make_bond_table(g);
    PathSpace space(g, bonds);
    Eigen::MatrixXd A = adjacency_matrix(g);
    for (int k : {1, 2, 3}) {
      PathKernel K = random_kernel(space.index(k), 100 + k);
      double r = (apply_M(space, apply_Mstar(space, K)).values - K.values)
                     .norm() /
                 std::sqrt(double(g.n));
      checks.push_back({name, "MMstar_H" + std::to_string(k), r, 1e-12});
    }
    PathKernel K0 = random_kernel(space.index(0), 55);
    PathKernel b0 = apply_M(space, apply_Mstar(space, K0));
    double r0 = (b0.values - (double(g.q + 1) / g.q) * K0.values).norm() /
                std::sqrt(double(g.n));
    checks.push_back({name, "MMstar_H0", r0, 1e-12});
    for (int k : {1, 2}) {
      PathKernel K = random_kernel(space.index(k), 200 + k);
      PathKernel viaM = apply_M(space, apply_nabla(space, K));
      viaM.values = -viaM.values;
      double r = (viaM.values - apply_nabla_star(space, K).values).norm() /
                 std::sqrt(double(g.n));
      checks.push_back({name, "gradstar_H" + std::to_string(k), r, 1e-12});
      GradedKernel gk;
      gk.add(K);
      Eigen::MatrixXcd lhs = fold_to_graph(space, apply_L(space, gk));
      Eigen::MatrixXcd F = fold_to_graph(space, gk);
      Eigen::MatrixXcd rhs = A.cast<cplx>() * F - F * A.cast<cplx>();
      checks.push_back({name, "fold_commutator_H" + std::to_string(k),
                        (lhs - rhs).cwiseAbs().maxCoeff(), 1e-12});
    }
  };
  run_graph("petersen", build_petersen());
  run_graph("heawood", build_heawood());
  run_graph("random50", random_regular(50, 3, 1));

  CsvWriter csv({"graph", "check", "residual", "tolerance", "pass"});
  bool all = true;
  for (auto& c : checks) {
    bool ok = c.residual < c.tol;
    all = all && ok;
    csv.row({c.graph, c.name, c.residual, c.tol, std::string(ok ? "1" : "0")});
  }
  ctx.write_csv("operators_selftest.csv", csv);
  ctx.write_manifest({{"all_pass", all}});
  if (!all) {
    std::cerr << "operators-selftest: residual out of tolerance\n";
    return 3;
  }
  return 0;
}

CsvWriter decay_csv(const DecayTable& t) {
  CsvWriter csv({"n", "seed", "girth", "beta", "var", "hsn_sq", "bad_term",
                 "slope"});
  for (auto& r : t.rows)
    csv.row({long(r.n), long(r.seed), long(r.girth), r.beta, r.var, r.hsn_sq,
             r.bad_term, t.slope});
  return csv;
}

int cmd_variance(RunContext& ctx) {
  const auto& cfg = ctx.cfg;
  if (cfg.sizes.size() < 3)
    throw ValidationError("sizes: need at least 3 family members");
  std::vector<FamilyMember> family(cfg.sizes.size() * cfg.seeds.size());
  parallel_for(cfg.jobs, int(family.size()), [&](int i) {
    int n = cfg.sizes[i / cfg.seeds.size()];
    std::uint64_t seed = cfg.seeds[i % cfg.seeds.size()];
    family[i] = make_family_member(n, cfg.q + 1, seed);
    invariants_graph(family[i].g);
  });
  invariants_operators(family[0].g, family[0].bonds);
  Centering cent = cfg.centering == "spherical" ? Centering::spherical
                                                : Centering::none;
  DecayTable t = decay_experiment(family, observable_of(cfg), cent);
  ctx.write_csv("variance.csv", decay_csv(t));
  // the smallest member's observable in the kernel dump format
  {
    PathSpace space(family[0].g, family[0].bonds);
    GradedKernel K = make_observable(space, family[0].eig, observable_of(cfg));
    ctx.write_csv("observable.csv", kernel_csv(K));
  }
  ctx.write_manifest({{"slope", t.slope},
                      {"strictly_decreasing", t.strictly_decreasing},
                      {"median_var", t.median_var}});
  return 0;
}

int cmd_nb_variance(RunContext& ctx) {
  const auto& cfg = ctx.cfg;
  if (cfg.sizes.empty()) throw ValidationError("sizes: required");
  CsvWriter csv({"n", "seed", "var", "count", "hsn_sq"});
  for (int n : cfg.sizes)
    for (auto seed : cfg.seeds) {
      FamilyMember fm = make_family_member(n, cfg.q + 1, seed);
      PathSpace space(fm.g, fm.bonds);
      invariants_operators(fm.g, fm.bonds);
      GradedKernel K;
      K.add(random_kernel(space.index(std::max(1, cfg.observable_k)),
                          cfg.observable_seed, true));
      auto rep = nb_variance(space, fm.eig, K, cfg.interval);
      csv.row({long(n), long(seed), rep.var, long(rep.count),
               rep.hsn_sq_centered});
    }
  ctx.write_csv("nb_variance.csv", csv);
  ctx.write_manifest();
  return 0;
}

int cmd_flow_average(RunContext& ctx) {
  const auto& cfg = ctx.cfg;
  BondTable bonds;
  RegularGraph g = load_graph(cfg, &bonds);
  invariants_graph(g);
  PathSpace space(g, bonds);
  invariants_operators(g, bonds);
  EigenSystem eig = adjacency_eigensystem(g);
  PathKernel K = random_kernel(space.index(1), cfg.observable_seed, true);
  K = center_shell(g, space.index(1), K);
  GradedKernel gk;
  gk.add(K);
  double base = gk.norm_h(g);
  double c1 = constant_Ck(1, eig.beta, g.q);
  CsvWriter csv({"T", "taylor_M", "required_M", "taylor_norm", "tail_bound",
                 "certified_bound", "lemma_rhs", "holds"});
  bool all = true;
  for (double T : cfg.horizons) {
    auto res = flow_average(space, gk, T, cfg.taylor_m, cfg.shell_cap);
    double rhs = (std::sqrt(c1) + 16.0) * base / std::pow(T, 1.0 / 7.0);
    bool ok = res.certified_norm_bound <= rhs;
    all = all && ok;
    csv.row({T, long(res.taylor_M), long(res.required_M), res.norm,
             res.tail_bound, res.certified_norm_bound, rhs,
             std::string(ok ? "1" : "0")});
  }
  ctx.write_csv("flow_average.csv", csv);
  ctx.write_manifest({{"all_hold", all}});
  return all ? 0 : 3;
}

int cmd_anis_green(RunContext& ctx) {
  const auto& cfg = ctx.cfg;
  TransitionWeights tw = weights_of(ctx.cfg);
  invariants_green(tw);
  CsvWriter csv({"gamma_re", "gamma_im", "w_re", "w_im", "residual",
                 "branch_ok"});
  json states = json::array();
  double worst = 0;
  for (double re : lambda_grid(cfg)) {
    cplx gamma(re, 0.05);
    GreenState st = solve_green(tw, gamma);
    worst = std::max(worst, st.residual);
    csv.row({gamma.real(), gamma.imag(), st.w.real(), st.w.imag(), st.residual,
             std::string(st.branch_ok ? "1" : "0")});
    json s;
    s["gamma"] = {gamma.real(), gamma.imag()};
    s["w"] = {st.w.real(), st.w.imag()};
    auto zs = json::array();
    for (auto& z : st.zeta) zs.push_back({z.real(), z.imag()});
    s["zeta"] = zs;
    s["residual"] = st.residual;
    states.push_back(s);
  }
  std::ofstream os(ctx.dir / "green_states.json");
  os << states.dump(2) << "\n";
  ctx.write_csv("anis_green.csv", csv);
  ctx.write_manifest({{"worst_residual", worst}});
  return worst < 1e-10 ? 0 : 3;
}

int cmd_anis_density(RunContext& ctx) {
  TransitionWeights tw = weights_of(ctx.cfg);
  invariants_green(tw);
  DensityTable t = anis_density(tw, lambda_grid(ctx.cfg));
  CsvWriter csv({"lambda", "density", "converged"});
  for (auto& pt : t.points)
    csv.row({pt.lambda, pt.density, std::string(pt.converged ? "1" : "0")});
  ctx.write_csv("anis_density.csv", csv);
  json support = json::array();
  for (auto& [lo, hi] : t.support) support.push_back({lo, hi});
  ctx.write_manifest({{"integral", t.integral},
                      {"deficit", t.deficit},
                      {"support", support}});
  return 0;
}

int cmd_anis_cylinders(RunContext& ctx) {
  TransitionWeights tw = weights_of(ctx.cfg);
  invariants_green(tw);
  GreenState st = solve_green_on_axis(tw, ctx.cfg.lambda);
  if (st.density() < 1e-8)
    throw ValidationError("lambda: spectral density vanishes at this energy");
  CylinderMeasure cm = harmonic_cylinders(st, ctx.cfg.depth);
  CsvWriter csv({"word", "weight"});
  for (std::size_t i = 0; i < cm.words.size(); ++i) {
    std::string w;
    for (int l : cm.words[i]) w += std::to_string(l) + "|";
    if (!w.empty()) w.pop_back();
    csv.row({w, cm.weights[i]});
  }
  ctx.write_csv("anis_cylinders.csv", csv);
  ctx.write_manifest({{"depth1_sum", cm.depth1_sum},
                      {"max_consistency_defect", cm.max_consistency_defect}});
  return 0;
}

int cmd_anis_variance(RunContext& ctx) {
  const auto& cfg = ctx.cfg;
  if (cfg.sizes.size() < 3)
    throw ValidationError("sizes: need at least 3 family members");
  TransitionWeights tw = weights_of(cfg);
  invariants_green(tw);
  std::vector<FamilyMember> family(cfg.sizes.size() * cfg.seeds.size());
  parallel_for(cfg.jobs, int(family.size()), [&](int i) {
    int n = cfg.sizes[i / cfg.seeds.size()];
    std::uint64_t seed = cfg.seeds[i % cfg.seeds.size()];
    family[i] = make_labelled_family_member(n, cfg.q, seed);
  });
  AnisObservable kind = cfg.observable == "shell" ? AnisObservable::shell1
                        : cfg.observable == "identity"
                            ? AnisObservable::identity
                            : AnisObservable::diagonal;
  DecayTable t = anis_variance_experiment(family, tw, kind,
                                          cfg.observable_seed, true);
  ctx.write_csv("anis_variance.csv", decay_csv(t));
  ctx.write_manifest({{"slope", t.slope},
                      {"strictly_decreasing", t.strictly_decreasing},
                      {"median_var", t.median_var}});
  return 0;
}

int cmd_transfer_decay(RunContext& ctx) {
  const auto& cfg = ctx.cfg;
  TransitionWeights tw = weights_of(cfg);
  invariants_green(tw);
  if (cfg.energies.empty())
    throw ValidationError("energies: required for transfer-decay");
  int n = cfg.sizes.empty() ? 50 : cfg.sizes[0];
  auto [g, bonds] = random_labelled_regular(n, cfg.q, cfg.seeds[0]);
  PathSpace space(g, bonds);
  CsvWriter csv({"e0", "m", "norm_S", "norm_Su_power", "delta", "u_constant"});
  bool all = true;
  for (double e0 : cfg.energies)
    for (int m : cfg.shells) {
      auto row = transfer_decay_point(space, tw, e0, m);
      csv.row({row.e0, long(row.m), row.norm_S, row.norm_Su_power, row.delta,
               std::string(row.u_constant ? "1" : "0")});
      if (std::abs(row.norm_S - 1.0) > 1e-8) all = false;
      if (!row.u_constant && row.delta <= 1e-3) all = false;
    }
  ctx.write_csv("transfer_decay.csv", csv);
  ctx.write_manifest({{"all_hold", all}});
  return all ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
  ExperimentConfig cfg;

  // the config file applies before flag overrides
  for (int i = 1; i < argc; ++i) {
    std::string arg = argv[i];
    if (arg.rfind("--config=", 0) == 0) {
      std::ifstream is(arg.substr(9));
      if (!is) {
        std::cerr << "config: cannot open " << arg.substr(9) << "\n";
        return 2;
      }
      try {
        apply_json(json::parse(is), &cfg);
      } catch (const std::exception& e) {
        std::cerr << "config: " << e.what() << "\n";
        return 2;
      }
    }
  }

  CLI::App app{"spectral laboratory for eigenfunction statistics on regular graphs"};
  app.set_help_all_flag("--help-all");
  std::string config_path;
  app.add_option("--config", config_path, "JSON config applied before flags");

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path,
                    "JSON config applied before flags (pre-scanned)");
    sub->add_option("--q", cfg.q);
    sub->add_option("--sizes", cfg.sizes)->delimiter(',');
    sub->add_option("--seeds", cfg.seeds)->delimiter(',');
    sub->add_option("--p", cfg.p)->delimiter(',');
    sub->add_option("--graph", cfg.graph);
    sub->add_option("--observable", cfg.observable);
    sub->add_option("--observable-k", cfg.observable_k);
    sub->add_option("--observable-seed", cfg.observable_seed);
    sub->add_option("--centering", cfg.centering);
    sub->add_option("--lambda-min", cfg.lambda_min);
    sub->add_option("--lambda-max", cfg.lambda_max);
    sub->add_option("--lambda-points", cfg.lambda_points);
    sub->add_option("--lambda", cfg.lambda);
    sub->add_option("--energies", cfg.energies)->delimiter(',');
    sub->add_option("--shells", cfg.shells)->delimiter(',');
    sub->add_option("--horizons", cfg.horizons)->delimiter(',');
    sub->add_option("--taylor-m", cfg.taylor_m);
    sub->add_option("--shell-cap", cfg.shell_cap);
    sub->add_option("--depth", cfg.depth);
    sub->add_option("--output_dir", cfg.output_dir);
    sub->add_option("--jobs", cfg.jobs);
    sub->add_option("--tol-km", cfg.tol_kmc);
  };

  std::map<std::string, std::function<int(RunContext&)>> dispatch{
      {"generate", cmd_generate},
      {"geometry", cmd_geometry},
      {"spectrum", cmd_spectrum},
      {"km-compare", cmd_km_compare},
      {"nb-spectrum", cmd_nb_spectrum},
      {"operators-selftest", cmd_operators_selftest},
      {"variance", cmd_variance},
      {"nb-variance", cmd_nb_variance},
      {"flow-average", cmd_flow_average},
      {"anis-green", cmd_anis_green},
      {"anis-density", cmd_anis_density},
      {"anis-cylinders", cmd_anis_cylinders},
      {"anis-variance", cmd_anis_variance},
      {"transfer-decay", cmd_transfer_decay},
  };
  for (auto& [name, fn] : dispatch) add_common(app.add_subcommand(name, ""));
  app.require_subcommand(1);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) ? 2 : 0;
  }

  std::string chosen = app.get_subcommands().front()->get_name();
  cfg.command = chosen;
  try {
    validate(cfg);
    RunContext ctx(cfg);
    int rc = dispatch.at(chosen)(ctx);
    return rc;
  } catch (const ValidationError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 3;
  }
}
