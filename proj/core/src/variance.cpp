#include "qelab/variance.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include "qelab/nonbacktracking.hpp"
#include "qelab/tree.hpp"

namespace qelab {

namespace {

// <psi, F psi> for a real eigenvector column
cplx diag_element(const Eigen::MatrixXcd& F, const Eigen::VectorXd& psi) {
  return psi.cast<cplx>().dot(F * psi.cast<cplx>());
}

}  // namespace

VarianceReport quantum_variance(const PathSpace& s, const EigenSystem& eig,
                                const GradedKernel& K, Centering centering) {
  const RegularGraph& g = s.graph();
  VarianceReport rep;
  Eigen::MatrixXcd F = fold_to_graph(s, K);

  // shell means for the spherical centering
  std::vector<std::pair<int, cplx>> means;
  if (centering == Centering::spherical)
    for (const auto& [k, comp] : K.shells)
      means.emplace_back(k, shell_mean(g, comp));

  double acc = 0;
  for (int j = 0; j < eig.n(); ++j) {
    double lambda = eig.lambdas(j);
    cplx d = diag_element(F, eig.psis.col(j));
    cplx c = 0;
    if (centering == Centering::spherical)
      for (auto& [k, m] : means)
        c += m * shell_indicator_eigenvalue(g.q, lambda, k);
    rep.lambdas.push_back(lambda);
    rep.diagonals.push_back(d);
    rep.centerings.push_back(c);
    acc += std::norm(d - c);
  }
  rep.count = eig.n();
  rep.var = acc / double(g.n);

  // eq-estHS bound: HSN^2 of the centered kernel
  GradedKernel centered = K;
  if (centering == Centering::spherical)
    for (auto& [k, comp] : centered.shells)
      comp = center_shell(g, s.index(k), comp);
  rep.hsn_sq_centered = hsn_sq(fold_to_graph(s, centered), g.n);
  return rep;
}

VarianceReport nb_variance(const PathSpace& s, const EigenSystem& eig,
                           const GradedKernel& K,
                           std::optional<std::pair<double, double>> interval) {
  const RegularGraph& g = s.graph();
  Eigen::MatrixXcd B = bond_matrix(s, K);
  VarianceReport rep;
  rep.interval = interval;
  double acc = 0;
  int count_in = 0;
  for (int j : tempered_indices(eig, g.q)) {
    double lambda = eig.lambdas(j);
    if (interval && (lambda < interval->first || lambda > interval->second))
      continue;
    LiftedPair lp = lift_eigenvector(s.bonds(), eig.psis.col(j), lambda);
    cplx v = lp.f_star.dot(B * lp.f);
    rep.lambdas.push_back(lambda);
    rep.diagonals.push_back(v);
    rep.centerings.push_back(0.0);
    acc += std::norm(v);
    ++count_in;
  }
  if (interval && count_in == 0)
    throw std::invalid_argument("nb_variance: interval contains no eigenvalues");
  rep.count = count_in;
  rep.var = interval ? acc / double(count_in) : acc / double(g.n);
  rep.hsn_sq_centered = hsn_sq(fold_to_graph(s, K), g.n);
  return rep;
}

TransferIdentityReport isotropic_transfer_identities(const PathSpace& s,
                                                     const EigenSystem& eig,
                                                     const Eigen::VectorXd& a,
                                                     const PathKernel& K) {
  const RegularGraph& g = s.graph();
  const BondTable& bonds = s.bonds();
  if (K.k < 1)
    throw std::invalid_argument("transfer identities need K in H_m, m >= 1");
  TransferIdentityReport rep;

  Eigen::MatrixXd A = adjacency_matrix(g);
  Eigen::VectorXd qa = double(g.q + 1) * a - A * a;  // ((q+1)-A) a
  Eigen::MatrixXcd KB = bond_matrix(s, K);
  Eigen::MatrixXcd folded_1mS = fold_to_graph(s, [&] {
    PathKernel t = K;
    t.values -= apply_S(s, K).values;
    return t;
  }());
  Eigen::MatrixXcd folded_gs = fold_to_graph(s, apply_nabla_star(s, K));

  for (int j : tempered_indices(eig, g.q)) {
    double lambda = eig.lambdas(j);
    Eigen::VectorXd psi = eig.psis.col(j);
    LiftedPair lp = lift_eigenvector(bonds, psi, lambda);

    // (i): K'(x,y) = a(x)
    cplx lhs1 = 0;
    for (int e = 0; e < bonds.bond_count(); ++e)
      lhs1 += std::conj(lp.f_star(e)) * a(bonds.origin[e]) * lp.f(e);
    cplx rhs1 = std::conj(lp.eps) *
                (psi.array().square() * qa.array()).sum();
    rep.max_residual_i = std::max(rep.max_residual_i, std::abs(lhs1 - rhs1));

    // (ii)
    cplx lhs2 = lp.f_star.dot(KB * lp.f);
    cplx rhs2 = diag_element(folded_1mS, psi) +
                lp.eps * diag_element(folded_gs, psi);
    rep.max_residual_ii = std::max(rep.max_residual_ii, std::abs(lhs2 - rhs2));
    ++rep.checked;
  }
  return rep;
}

SmoothingReport variance_smoothing_check(const PathSpace& s,
                                         const GeometryProfile& geo,
                                         const EigenSystem& eig,
                                         const PathKernel& K, int n) {
  const RegularGraph& g = s.graph();
  const int q = g.q;
  const int m = K.k;
  if (std::abs(shell_mean(g, K)) > 1e-10)
    throw std::invalid_argument("variance_smoothing_check: K must be mean zero");
  SmoothingReport rep;
  double norm_sq = K.values.squaredNorm() / double(g.n);
  double sup_sq = K.sup_norm() * K.sup_norm();

  auto plain_var = [&](const GradedKernel& kern) {
    return quantum_variance(s, eig, kern, Centering::none).var;
  };

  GradedKernel gsK;
  gsK.add(apply_nabla_star(s, K));
  rep.lhs_varnabla = plain_var(gsK);
  double tb1 = ball_size(q, m + 2 * n + 1);
  rep.rhs_varnabla = 4.0 * (q + 1) / double(n) * norm_sq +
                     8.0 * (q + 1) * std::pow(double(q), n) * tb1 * tb1 *
                         sup_sq * geo.bad_fraction(m + 2 * n + 1);
  rep.varnabla_holds = rep.lhs_varnabla <= rep.rhs_varnabla * (1 + 1e-12);

  GradedKernel kk;
  kk.add(K);
  rep.lhs_final = plain_var(kk);
  double cmb = constant_Ck(m, eig.beta, q);
  double tb2 = ball_size(q, m + 2 * n + 2);
  double tbm = ball_size(q, m);
  rep.rhs_final =
      2.0 * cmb * cmb * (4.0 * q + 5.0) / double(n) * norm_sq +
      2.0 * sup_sq *
          (8.0 * n * (q + 1) * std::pow(double(q), n) * tb2 * tb2 *
               geo.bad_fraction(m + 2 * n + 2) +
           tbm * tbm * geo.bad_fraction(m));
  rep.final_holds = rep.lhs_final <= rep.rhs_final * (1 + 1e-12);
  return rep;
}

GradedKernel make_observable(const PathSpace& s, const EigenSystem& eig,
                             const ObservableSpec& spec) {
  const RegularGraph& g = s.graph();
  GradedKernel out;
  switch (spec.kind) {
    case ObservableKind::identity: {
      out.add(one_kernel(s.index(0)));
      break;
    }
    case ObservableKind::random_diagonal: {
      std::mt19937_64 rng(spec.seed);
      std::uniform_real_distribution<double> u(-1.0, 1.0);
      PathKernel a = zero_kernel(s.index(0));
      for (int x = 0; x < g.n; ++x) a.values(x) = u(rng);
      cplx mean = a.values.sum() / double(g.n);
      a.values.array() -= mean;
      double sup = a.sup_norm();
      if (sup > 0) a.values /= sup;
      out.add(std::move(a));
      break;
    }
    case ObservableKind::psi2: {
      // square of the second eigenvector, recentred: a worst-case-flavoured
      // observable correlated with the spectrum
      PathKernel a = zero_kernel(s.index(0));
      Eigen::VectorXd v = eig.psis.col(eig.n() - 2);
      Eigen::VectorXd sq = v.array().square();
      sq.array() -= sq.mean();
      double sup = sq.cwiseAbs().maxCoeff();
      if (sup > 0) sq /= sup;
      for (int x = 0; x < g.n; ++x) a.values(x) = sq(x);
      out.add(std::move(a));
      break;
    }
    case ObservableKind::shell_kernel: {
      PathKernel k = random_kernel(s.index(spec.k), spec.seed, true);
      out.add(std::move(k));
      break;
    }
  }
  return out;
}

FamilyMember make_family_member(int n, int degree, std::uint64_t seed) {
  FamilyMember fm;
  fm.g = random_regular(n, degree, seed);
  fm.bonds = make_bond_table(fm.g);
  fm.geo = geometry_profile(fm.g);
  fm.eig = adjacency_eigensystem(fm.g);
  fm.seed = seed;
  return fm;
}

FamilyMember make_labelled_family_member(int n, int q, std::uint64_t seed) {
  FamilyMember fm;
  auto [g, b] = random_labelled_regular(n, q, seed);
  fm.g = std::move(g);
  fm.bonds = std::move(b);
  fm.geo = geometry_profile(fm.g);
  fm.eig = adjacency_eigensystem(fm.g);
  fm.seed = seed;
  return fm;
}

DecayTable summarize_decay(std::vector<DecayRow> rows) {
  DecayTable t;
  t.rows = std::move(rows);
  for (const auto& r : t.rows)
    if (t.sizes.empty() || t.sizes.back() != r.n) t.sizes.push_back(r.n);
  for (int n : t.sizes) {
    std::vector<double> vars;
    for (const auto& r : t.rows)
      if (r.n == n) vars.push_back(r.var);
    std::sort(vars.begin(), vars.end());
    double med = vars.size() % 2 ? vars[vars.size() / 2]
                                 : 0.5 * (vars[vars.size() / 2 - 1] +
                                          vars[vars.size() / 2]);
    t.median_var.push_back(med);
  }
  t.strictly_decreasing = true;
  for (std::size_t i = 1; i < t.median_var.size(); ++i)
    if (!(t.median_var[i] < t.median_var[i - 1])) t.strictly_decreasing = false;
  // least-squares slope of log var against log n
  if (t.sizes.size() >= 2) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int m = static_cast<int>(t.sizes.size());
    for (int i = 0; i < m; ++i) {
      double x = std::log(double(t.sizes[i]));
      double y = std::log(std::max(t.median_var[i], 1e-300));
      sx += x;
      sy += y;
      sxx += x * x;
      sxy += x * y;
    }
    t.slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
  }
  return t;
}

DecayTable decay_experiment(const std::vector<FamilyMember>& family,
                            const ObservableSpec& obs, Centering centering) {
  if (family.size() < 3)
    throw std::invalid_argument("decay_experiment: need at least 3 members");
  std::vector<DecayRow> rows;
  for (const auto& fm : family) {
    PathSpace s(fm.g, fm.bonds);
    GradedKernel K = make_observable(s, fm.eig, obs);
    auto rep = quantum_variance(s, fm.eig, K, centering);
    DecayRow row;
    row.n = fm.g.n;
    row.seed = fm.seed;
    row.girth = fm.geo.girth;
    row.beta = fm.eig.beta;
    row.var = rep.var;
    row.hsn_sq = rep.hsn_sq_centered;
    double sup = 0;
    for (const auto& [k, comp] : K.shells) sup = std::max(sup, comp.sup_norm());
    int R = std::max(1, fm.geo.girth / 2);
    double tb = ball_size(fm.g.q, R);
    row.bad_term = tb * tb * sup * sup * fm.geo.bad_fraction(R);
    rows.push_back(row);
  }
  return summarize_decay(std::move(rows));
}

}  // namespace qelab
