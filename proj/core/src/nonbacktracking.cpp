#include "qelab/nonbacktracking.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <queue>
#include <stdexcept>

#include <Eigen/Eigenvalues>

namespace qelab {

NBOperator build_nb(const BondTable& bonds) {
  const int nb = bonds.bond_count();
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<std::size_t>(nb) * bonds.q);
  for (int e = 0; e < nb; ++e)
    for (int f : bonds.successors(e)) trip.emplace_back(e, f, 1.0);
  NBOperator op;
  op.q = bonds.q;
  op.matrix.resize(nb, nb);
  op.matrix.setFromTriplets(trip.begin(), trip.end());
  return op;
}

std::string to_string(NBFamily f) {
  switch (f) {
    case NBFamily::trivial: return "trivial";
    case NBFamily::tempered: return "tempered";
    case NBFamily::untempered: return "untempered";
    case NBFamily::plus_one: return "plus_one";
    case NBFamily::minus_one: return "minus_one";
  }
  return "?";
}

namespace {

bool two_color(const BondTable& b) {
  std::vector<int> color(b.n, -1);
  std::queue<int> bfs;
  color[0] = 0;
  bfs.push(0);
  while (!bfs.empty()) {
    int u = bfs.front();
    bfs.pop();
    for (int e : b.out[u]) {
      int v = b.terminus[e];
      if (color[v] < 0) {
        color[v] = 1 - color[u];
        bfs.push(v);
      } else if (color[v] == color[u]) {
        return false;
      }
    }
  }
  return true;
}

}  // namespace

NBCorrespondenceReport nb_spectrum_correspondence(const BondTable& bonds,
                                                  const EigenSystem& eig) {
  const int q = bonds.q;
  const int n = bonds.n;
  const int nb = bonds.bond_count();
  NBCorrespondenceReport rep;
  rep.bipartite = two_color(bonds);
  rep.betti = nb / 2 - n + 1;

  const double edge = 2.0 * std::sqrt(double(q));
  std::vector<std::pair<cplx, NBFamily>> predicted;
  predicted.reserve(nb);
  predicted.emplace_back(cplx(q, 0), NBFamily::trivial);
  if (rep.bipartite) predicted.emplace_back(cplx(-q, 0), NBFamily::trivial);
  for (int j = 0; j < eig.n(); ++j) {
    double lambda = eig.lambdas(j);
    if (std::abs(std::abs(lambda) - double(q + 1)) < 1e-9) continue;
    cplx disc = std::sqrt(cplx(lambda * lambda - 4.0 * q, 0.0));
    cplx mu1 = 0.5 * (cplx(lambda, 0) + disc);
    cplx mu2 = 0.5 * (cplx(lambda, 0) - disc);
    NBFamily fam = std::abs(lambda) <= edge + 1e-12 ? NBFamily::tempered
                                                    : NBFamily::untempered;
    predicted.emplace_back(mu1, fam);
    predicted.emplace_back(mu2, fam);
  }
  int minus_mult = rep.bipartite ? rep.betti : rep.betti - 1;
  for (int i = 0; i < rep.betti; ++i)
    predicted.emplace_back(cplx(1, 0), NBFamily::plus_one);
  for (int i = 0; i < minus_mult; ++i)
    predicted.emplace_back(cplx(-1, 0), NBFamily::minus_one);
  if (static_cast<int>(predicted.size()) != nb)
    throw std::runtime_error("predicted multiset has wrong cardinality");

  Eigen::ComplexEigenSolver<Eigen::MatrixXcd> solver(
      build_nb(bonds).dense().cast<cplx>());
  if (solver.info() != Eigen::Success)
    throw std::runtime_error("non-symmetric eigensolve failed");
  std::vector<cplx> computed(solver.eigenvalues().data(),
                             solver.eigenvalues().data() + nb);
  rep.trace_defect = std::abs(
      std::accumulate(computed.begin(), computed.end(), cplx(0, 0)));

  // greedy nearest pairing, worst predictions first would also work; we take
  // them in order and always grab the closest unused computed eigenvalue
  std::vector<bool> used(computed.size(), false);
  for (auto& [pv, fam] : predicted) {
    int best = -1;
    double bestd = std::numeric_limits<double>::max();
    for (std::size_t i = 0; i < computed.size(); ++i) {
      if (used[i]) continue;
      double d = std::abs(computed[i] - pv);
      if (d < bestd) {
        bestd = d;
        best = static_cast<int>(i);
      }
    }
    used[best] = true;
    NBPairing pair;
    pair.predicted = pv;
    pair.matched = computed[best];
    pair.abs_error = bestd;
    pair.family = fam;
    rep.pairs.push_back(pair);
    rep.max_error = std::max(rep.max_error, bestd);
  }

  int q_mult = 0;
  for (const auto& mu : computed)
    if (std::abs(mu - cplx(q, 0)) < 1e-6) ++q_mult;
  rep.q_simple = (q_mult == 1);
  return rep;
}

LiftedPair lift_eigenvector(const BondTable& bonds,
                            const Eigen::VectorXd& psi, double lambda,
                            int branch) {
  const int q = bonds.q;
  const double edge = 2.0 * std::sqrt(double(q));
  if (std::abs(std::abs(lambda) - edge) < 1e-8)
    throw std::domain_error(
        "lift_eigenvector: Jordan block at lambda = +-2 sqrt q");
  cplx disc = std::sqrt(cplx(lambda * lambda - 4.0 * q, 0.0));
  // roots of q eps^2 - lambda eps + 1: (lambda -+ disc) / 2q
  cplx e1 = (cplx(lambda, 0) - disc) / (2.0 * q);
  cplx e2 = (cplx(lambda, 0) + disc) / (2.0 * q);
  cplx eps;
  if (std::abs(lambda) <= edge) {
    // tempered: branch -1 is eps = q^{-1/2-is} with Im eps <= 0
    if (branch < 0)
      eps = e1.imag() <= 0 ? e1 : e2;
    else
      eps = e1.imag() >= 0 ? e1 : e2;
  } else {
    // untempered: both roots real; continuing q^{-1/2-is} past the edge
    // gives the larger-modulus root (eps = 1 at lambda = q+1)
    if (branch < 0)
      eps = std::abs(e1) >= std::abs(e2) ? e1 : e2;
    else
      eps = std::abs(e1) < std::abs(e2) ? e1 : e2;
  }
  const int nb = bonds.bond_count();
  LiftedPair lp;
  lp.eps = eps;
  lp.mu = 1.0 / eps;  // = lambda - q eps
  lp.f.resize(nb);
  for (int e = 0; e < nb; ++e)
    lp.f(e) = psi(bonds.terminus[e]) - eps * psi(bonds.origin[e]);
  lp.f_star = iota(bonds, lp.f);
  NBOperator nbop = build_nb(bonds);
  Eigen::VectorXcd r1 = nbop.matrix * lp.f - lp.mu * lp.f;
  Eigen::VectorXcd r2 =
      nbop.matrix.transpose() * lp.f_star - lp.mu * lp.f_star;
  lp.residual_f = r1.norm();
  lp.residual_f_star = r2.norm();
  lp.pairing = lp.f_star.dot(lp.f);
  return lp;
}

double beta_prime(double beta, int q) {
  double ram = 1.0 - 2.0 * std::sqrt(double(q)) / double(q + 1);
  if (beta > ram) {
    // tempered non-backtracking eigenvalues all have modulus sqrt q
    return 1.0 - 1.0 / std::sqrt(double(q));
  }
  double one_m_b = 1.0 - beta;
  double disc = one_m_b * one_m_b - 4.0 * q / double((q + 1) * (q + 1));
  double denom = double(q + 1) * (one_m_b - std::sqrt(disc));
  return 1.0 - 2.0 / denom;
}

Eigen::VectorXcd iota(const BondTable& bonds, const Eigen::VectorXcd& f) {
  Eigen::VectorXcd out(f.size());
  for (int e = 0; e < bonds.bond_count(); ++e) out(e) = f(bonds.rev[e]);
  return out;
}

}  // namespace qelab
