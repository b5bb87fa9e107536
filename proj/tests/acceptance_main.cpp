// Acceptance suite: every release-gating property with its tolerance pinned
// in code, one PASS/FAIL line each. Exit status is the number of failures.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "qelab/anisotropic.hpp"
#include "qelab/nonbacktracking.hpp"
#include "qelab/operators.hpp"
#include "qelab/spectral.hpp"
#include "qelab/tree.hpp"
#include "qelab/variance.hpp"
#include "support/oracles.hpp"

using namespace qelab;

namespace {

int failures = 0;

void report(int idx, const std::string& name, bool pass,
            const std::string& detail, double seconds) {
  std::printf("%s  criterion %2d: %-34s %s  [%.2fs]\n",
              pass ? "PASS" : "FAIL", idx, name.c_str(), detail.c_str(),
              seconds);
  std::fflush(stdout);
  if (!pass) ++failures;
}

template <typename F>
void criterion(int idx, const std::string& name, F&& body) {
  auto t0 = std::chrono::steady_clock::now();
  bool pass = false;
  std::string detail;
  try {
    pass = body(&detail);
  } catch (const std::exception& e) {
    detail = std::string("exception: ") + e.what();
  }
  double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  report(idx, name, pass, detail, secs);
}

struct Fx {
  RegularGraph g;
  BondTable bonds;
  PathSpace space;
  explicit Fx(RegularGraph gr)
      : g(std::move(gr)), bonds(make_bond_table(g)), space(g, bonds) {}
};

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.3g", v);
  return buf;
}

const TransitionWeights kSkewed{{0.5, 0.3, 0.2}};

bool crit1_operator_algebra(std::string* detail) {
  double worst = 0;
  std::vector<RegularGraph> graphs{build_petersen(), build_heawood(),
                                   random_regular(50, 3, 1)};
  for (auto& g : graphs) {
    Fx fx(std::move(g));
    Eigen::MatrixXd A = adjacency_matrix(fx.g);
    double rootn = std::sqrt(double(fx.g.n));
    for (int k : {1, 2, 3}) {
      PathKernel K = random_kernel(fx.space.index(k), 100 + k);
      worst = std::max(
          worst,
          (apply_M(fx.space, apply_Mstar(fx.space, K)).values - K.values)
                  .norm() /
              rootn);
    }
    PathKernel K0 = random_kernel(fx.space.index(0), 9);
    worst = std::max(
        worst, (apply_M(fx.space, apply_Mstar(fx.space, K0)).values -
                (double(fx.g.q + 1) / fx.g.q) * K0.values)
                       .norm() /
                   rootn);
    for (int k : {1, 2}) {
      PathKernel K = random_kernel(fx.space.index(k), 200 + k);
      PathKernel viaM = apply_M(fx.space, apply_nabla(fx.space, K));
      viaM.values = -viaM.values;
      worst = std::max(
          worst,
          (viaM.values - apply_nabla_star(fx.space, K).values).norm() / rootn);
      // L = (I - M) grad and the folded commutator
      GradedKernel gk;
      gk.add(K);
      GradedKernel LK = apply_L(fx.space, gk);
      PathKernel up = apply_nabla(fx.space, K);
      GradedKernel alt;
      alt.add(up);
      if (up.k >= 2) {
        PathKernel dn = apply_M(fx.space, up);
        dn.values = -dn.values;
        alt.add(dn);
      }
      for (auto& [kk, comp] : LK.shells)
        worst = std::max(
            worst,
            (comp.values - alt.shells.at(kk).values).norm() / rootn);
      Eigen::MatrixXcd lhs = fold_to_graph(fx.space, LK);
      Eigen::MatrixXcd F = fold_to_graph(fx.space, gk);
      Eigen::MatrixXcd rhs = A.cast<cplx>() * F - F * A.cast<cplx>();
      worst = std::max(worst, (lhs - rhs).cwiseAbs().maxCoeff());
    }
  }
  *detail = "max residual " + fmt(worst);
  return worst < 1e-12;
}

bool crit2_nb_correspondence(std::string* detail) {
  Fx pet(build_petersen());
  EigenSystem pe = adjacency_eigensystem(pet.g);
  auto rp = nb_spectrum_correspondence(pet.bonds, pe);
  Fx hw(build_heawood());
  EigenSystem he = adjacency_eigensystem(hw.g);
  auto rh = nb_spectrum_correspondence(hw.bonds, he);
  bool minus_q_heawood = false;
  for (auto& p : rh.pairs)
    if (std::abs(p.predicted - cplx(-2, 0)) < 1e-12 &&
        p.family == NBFamily::trivial)
      minus_q_heawood = true;
  bool minus_q_petersen = false;
  for (auto& p : rp.pairs)
    if (std::abs(p.predicted - cplx(-2, 0)) < 1e-9 &&
        p.family == NBFamily::trivial)
      minus_q_petersen = true;
  double err = std::max(rp.max_error, rh.max_error);
  bool ok = rp.pairs.size() == 30 && rh.pairs.size() == 42 && err < 1e-8 &&
            rp.q_simple && rh.q_simple && rh.bipartite && minus_q_heawood &&
            !rp.bipartite && !minus_q_petersen;
  *detail = "pairing error " + fmt(err);
  return ok;
}

bool crit3_kesten_mckay(std::string* detail) {
  RegularGraph g = random_regular(2000, 3, 1);
  EigenSystem eig = adjacency_eigensystem(g);
  double dist = km_cdf_distance(eig, 2);
  *detail = "sup-CDF distance " + fmt(dist);
  return dist < 0.05;
}

bool crit4_green_ratio(std::string* detail) {
  double worst = 0;
  for (double lambda : {-2.0, -1.0, 0.0, 1.0, 2.0}) {
    auto g_at = [&](int d) {
      return extrapolate_to_axis([&](double e) {
        return green_tree(2, cplx(lambda, e), d);
      });
    };
    cplx g0 = g_at(0).value;
    for (int d = 0; d <= 6; ++d) {
      cplx gd = g_at(d).value;
      worst = std::max(worst, std::abs(gd.imag() / g0.imag() -
                                       spherical_phi(2, lambda, d)));
    }
  }
  *detail = "max ratio error " + fmt(worst);
  return worst < 1e-6;
}

bool crit5_printed_constants(std::string* detail) {
  bool ok = true;
  std::string parts;
  // Prop-style inverse bound on both fixtures, k in {1,2}
  for (auto name : {"petersen", "heawood"}) {
    RegularGraph g = build_named(name);
    BondTable b = make_bond_table(g);
    PathSpace space(g, b);
    EigenSystem eig = adjacency_eigensystem(g);
    for (int k : {1, 2}) {
      auto rep = verify_inverse_bound(space, k, eig.beta);
      ok = ok && rep.holds;
    }
  }
  parts += "inverse-bound ok";

  // flow-average lemma at T in {10, 20, 40} on petersen, K in H^0_1
  Fx pet(build_petersen());
  EigenSystem eig = adjacency_eigensystem(pet.g);
  PathKernel K = random_kernel(pet.space.index(1), 5, true);
  K = center_shell(pet.g, pet.space.index(1), K);
  GradedKernel gk;
  gk.add(K);
  double base = gk.norm_h(pet.g);
  double c1 = constant_Ck(1, eig.beta, pet.g.q);
  for (double T : {10.0, 20.0, 40.0}) {
    auto res = flow_average(pet.space, gk, T, 10, 12);
    double rhs = (std::sqrt(c1) + 16.0) * base / std::pow(T, 1.0 / 7.0);
    ok = ok && (res.certified_norm_bound <= rhs);
  }
  parts += ", flow-average ok";

  // varnabla display at n in {1,2,3}
  GeometryProfile geo = geometry_profile(pet.g);
  PathKernel Kc = center_shell(pet.g, pet.space.index(1),
                               random_kernel(pet.space.index(1), 6, true));
  for (int n : {1, 2, 3}) {
    auto rep = variance_smoothing_check(pet.space, geo, eig, Kc, n);
    ok = ok && rep.varnabla_holds && rep.final_holds;
  }
  parts += ", varnabla ok";
  *detail = parts;
  return ok;
}

std::vector<FamilyMember> plain_family() {
  std::vector<FamilyMember> family;
  for (int n : {100, 200, 400, 800, 1600})
    for (std::uint64_t seed : {1, 2, 3})
      family.push_back(make_family_member(n, 3, seed));
  return family;
}

bool crit6_variance_decay(std::string* detail,
                          const std::vector<FamilyMember>& family) {
  ObservableSpec obs{ObservableKind::random_diagonal, 0, 2024};
  DecayTable t = decay_experiment(family, obs, Centering::spherical);
  *detail = "slope " + fmt(t.slope) + (t.strictly_decreasing ? ", monotone"
                                                             : ", NOT monotone");
  return t.strictly_decreasing && t.slope <= -0.5;
}

bool crit7_centered_variance(std::string* detail,
                             const std::vector<FamilyMember>& family) {
  ObservableSpec obs{ObservableKind::shell_kernel, 2, 77};
  DecayTable t = decay_experiment(family, obs, Centering::spherical);
  bool decreasing = t.median_var.back() < t.median_var.front();
  for (std::size_t i = 1; i < t.median_var.size(); ++i)
    decreasing = decreasing && t.median_var[i] < t.median_var[i - 1];

  double worst_adj = 0;
  for (const auto& fm : family) {
    PathSpace space(fm.g, fm.bonds);
    GradedKernel one;
    one.add(one_kernel(space.index(1)));
    auto rep = quantum_variance(space, fm.eig, one, Centering::spherical);
    worst_adj = std::max(worst_adj, rep.var);
  }
  *detail = "H_2 slope " + fmt(t.slope) + ", centered 1_1 var " +
            fmt(worst_adj);
  return decreasing && worst_adj < 1e-20;
}

bool crit8_anis_green(std::string* detail) {
  // residuals over a 50-point grid
  double worst_resid = 0;
  for (int i = 0; i < 50; ++i) {
    double re = -0.9 + 1.8 * i / 49.0;
    GreenState st = solve_green(kSkewed, cplx(re, 0.05));
    worst_resid = std::max(worst_resid, st.residual);
    if (!st.branch_ok) {
      *detail = "branch certificate failed";
      return false;
    }
  }
  // truncated-tree oracle agreement, words up to length 3
  double worst_oracle = 0;
  std::vector<std::vector<int>> words{{},        {0},       {1},    {2},
                                      {0, 1},    {1, 2},    {2, 0}, {0, 1, 0},
                                      {0, 1, 2}, {2, 1, 0}, {1, 0, 2}};
  for (double re : {-0.6, -0.2, 0.1, 0.35, 0.7}) {
    cplx gamma(re, 0.05);
    GreenState st = solve_green(kSkewed, gamma);
    for (auto& w : words) {
      cplx oracle = oracles::truncated_tree_green(kSkewed.p, gamma, w, 2500);
      worst_oracle =
          std::max(worst_oracle, std::abs(oracle - anis_green_kernel(st, w)));
    }
  }
  // isotropic reduction against the unweighted tree
  TransitionWeights iso{{1.0 / 3, 1.0 / 3, 1.0 / 3}};
  double worst_iso = 0;
  for (double re : {-0.5, 0.0, 0.4}) {
    cplx gamma(re, 0.05);
    GreenState st = solve_green(iso, gamma);
    for (int d = 0; d <= 3; ++d) {
      std::vector<int> word;
      for (int i = 0; i < d; ++i) word.push_back(i % 2);
      cplx lhs = anis_green_kernel(st, word);
      cplx rhs = 3.0 * green_tree(2, 3.0 * gamma, d);
      worst_iso = std::max(worst_iso, std::abs(lhs - rhs));
    }
  }
  *detail = "resid " + fmt(worst_resid) + ", oracle " + fmt(worst_oracle) +
            ", iso " + fmt(worst_iso);
  return worst_resid < 1e-10 && worst_oracle < 1e-6 && worst_iso < 1e-8;
}

bool crit9_kolmogorov(std::string* detail) {
  // 20 density-positive energies for the skewed weights
  std::vector<double> energies;
  for (int i = 0; i < 40 && energies.size() < 20; ++i) {
    double lambda = -0.45 + 0.9 * i / 39.0;
    GreenState st = solve_green_on_axis(kSkewed, lambda);
    if (st.density() > 1e-3 && st.extrapolation_converged)
      energies.push_back(lambda);
  }
  if (energies.size() < 20) {
    *detail = "found only " + std::to_string(energies.size()) +
              " density-positive energies";
    return false;
  }
  double worst_kolmo = 0, worst_consistency = 0;
  for (double lambda : energies) {
    GreenState st = solve_green_on_axis(kSkewed, lambda);
    double kolmo = 0;
    for (auto& z : st.zeta) kolmo += std::norm(z) / (1.0 + std::norm(z));
    worst_kolmo = std::max(worst_kolmo, std::abs(kolmo - 1.0));
  }
  for (double lambda : {energies[2], energies[9], energies[16]}) {
    GreenState st = solve_green_on_axis(kSkewed, lambda);
    CylinderMeasure cm = harmonic_cylinders(st, 3);
    worst_consistency =
        std::max(worst_consistency, cm.max_consistency_defect);
    worst_kolmo = std::max(worst_kolmo, std::abs(cm.depth1_sum - 1.0));
  }
  *detail = "kolmo " + fmt(worst_kolmo) + ", consistency " +
            fmt(worst_consistency);
  return worst_kolmo < 1e-8 && worst_consistency < 1e-10;
}

bool crit10_transfer_decay(std::string* detail) {
  auto [g, bonds] = random_labelled_regular(50, 2, 3);
  PathSpace space(g, bonds);
  double worst_norm = 0, min_delta = 1.0;
  for (double e0 : {-0.3, -0.15, 0.1, 0.2, 0.3}) {
    for (int m : {1, 2}) {
      auto row = transfer_decay_point(space, kSkewed, e0, m);
      if (row.u_constant) {
        *detail = "u unexpectedly constant";
        return false;
      }
      worst_norm = std::max(worst_norm, std::abs(row.norm_S - 1.0));
      min_delta = std::min(min_delta, row.delta);
    }
  }
  *detail = "|norm_S - 1| " + fmt(worst_norm) + ", min delta " +
            fmt(min_delta);
  return worst_norm < 1e-8 && min_delta >= 1e-3;
}

bool crit11_anis_variance(std::string* detail) {
  std::vector<FamilyMember> family;
  for (int n : {100, 200, 400, 800})
    for (std::uint64_t seed : {1, 2, 3})
      family.push_back(make_labelled_family_member(n, 2, seed));
  DecayTable td = anis_variance_experiment(family, kSkewed,
                                           AnisObservable::diagonal, 7, true);
  DecayTable t1 = anis_variance_experiment(family, kSkewed,
                                           AnisObservable::shell1, 8, true);
  bool mono_d = true, mono_1 = true;
  for (std::size_t i = 1; i < td.median_var.size(); ++i)
    mono_d = mono_d && td.median_var[i] < td.median_var[i - 1];
  for (std::size_t i = 1; i < t1.median_var.size(); ++i)
    mono_1 = mono_1 && t1.median_var[i] < t1.median_var[i - 1];
  *detail = "diag slope " + fmt(td.slope) + ", H_1 slope " + fmt(t1.slope);
  return mono_d && mono_1;
}

bool crit12_identity_suites(std::string* detail) {
  // isotropic identities on an unlabelled fixture
  RegularGraph g = random_regular(50, 3, 11);
  BondTable b = make_bond_table(g);
  PathSpace space(g, b);
  EigenSystem eig = adjacency_eigensystem(g);
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(-1, 1);
  Eigen::VectorXd a(g.n);
  for (int x = 0; x < g.n; ++x) a(x) = u(rng);
  double worst = 0;
  for (int m : {1, 2}) {
    PathKernel K = random_kernel(space.index(m), 700 + m);
    auto rep = isotropic_transfer_identities(space, eig, a, K);
    worst = std::max({worst, rep.max_residual_i, rep.max_residual_ii});
  }
  // two-branch diagonal identity on a labelled fixture
  auto [lg, lb] = random_labelled_regular(50, 2, 3);
  PathSpace lspace(lg, lb);
  EigenSystem leig = ap_eigensystem(lb, kSkewed);
  Eigen::VectorXd la(lg.n);
  for (int x = 0; x < lg.n; ++x) la(x) = u(rng);
  auto rep = m0_identity_check(lspace, leig, kSkewed, la);
  worst = std::max(worst, rep.max_residual);
  *detail = "max residual " + fmt(worst) + " over " +
            std::to_string(rep.checked) + "+18 eigenvalues";
  return worst < 1e-8 && rep.checked > 10;
}

}  // namespace

int main() {
  std::printf("acceptance suite\n");
  criterion(1, "operator algebra residuals", crit1_operator_algebra);
  criterion(2, "non-backtracking correspondence", crit2_nb_correspondence);
  criterion(3, "kesten-mckay law n=2000", crit3_kesten_mckay);
  criterion(4, "spherical/green boundary ratio", crit4_green_ratio);
  criterion(5, "printed-constant inequalities", crit5_printed_constants);

  auto t0 = std::chrono::steady_clock::now();
  std::vector<FamilyMember> family = plain_family();
  double prep =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  std::printf("       (family n=100..1600 x3 prepared in %.1fs)\n", prep);

  criterion(6, "variance decay (plain)", [&](std::string* d) {
    return crit6_variance_decay(d, family);
  });
  criterion(7, "variance decay (centered H_2)", [&](std::string* d) {
    return crit7_centered_variance(d, family);
  });
  criterion(8, "anisotropic green solver", crit8_anis_green);
  criterion(9, "kolmogorov relation + cylinders", crit9_kolmogorov);
  criterion(10, "weighted transfer decay", crit10_transfer_decay);
  criterion(11, "anisotropic variance decay", crit11_anis_variance);
  criterion(12, "identity suites", crit12_identity_suites);

  std::printf("%d criterion(s) failed\n", failures);
  return failures;
}
