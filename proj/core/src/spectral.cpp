#include "qelab/spectral.hpp"

#include <cmath>
#include <stdexcept>

#include "qelab/quadrature.hpp"
#include "qelab/tree.hpp"

namespace qelab {

double EigenSystem::max_residual(const Eigen::MatrixXd& op) const {
  double worst = 0;
  for (int j = 0; j < n(); ++j)
    worst = std::max(worst,
                     (op * psis.col(j) - lambdas(j) * psis.col(j)).norm());
  return worst;
}

double EigenSystem::gram_defect() const {
  Eigen::MatrixXd gram = psis.transpose() * psis;
  return (gram - Eigen::MatrixXd::Identity(n(), n())).cwiseAbs().maxCoeff();
}

EigenSystem dense_eigensystem(const Eigen::MatrixXd& op, double top) {
  if (op.rows() > 4000)
    throw std::invalid_argument(
        "dense_eigensystem: n > 4000 exceeds the desk-scale cap");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(op);
  if (solver.info() != Eigen::Success)
    throw std::runtime_error("dense_eigensystem: eigensolve failed");
  EigenSystem eig;
  eig.lambdas = solver.eigenvalues();
  eig.psis = solver.eigenvectors();
  eig.top = top;
  const int n = eig.n();
  double worst = 0;
  for (int j = 0; j + 1 < n; ++j) worst = std::max(worst, std::abs(eig.lambdas(j)));
  eig.beta = 1.0 - worst / top;
  return eig;
}

Eigen::MatrixXd adjacency_matrix(const RegularGraph& g) {
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(g.n, g.n);
  for (int u = 0; u < g.n; ++u)
    for (int v : g.adj[u]) a(u, v) = 1.0;
  return a;
}

EigenSystem adjacency_eigensystem(const RegularGraph& g) {
  return dense_eigensystem(adjacency_matrix(g), double(g.q + 1));
}

std::vector<int> tempered_indices(const EigenSystem& eig, int q,
                                  double margin) {
  std::vector<int> idx;
  const double edge = 2.0 * std::sqrt(double(q));
  for (int j = 0; j < eig.n(); ++j)
    if (std::abs(eig.lambdas(j)) < edge - margin) idx.push_back(j);
  return idx;
}

double km_cdf_distance(const EigenSystem& eig, int q) {
  PlancherelDensity m = km_density(q);
  const double edge = m.support();
  const int n = eig.n();
  // F(t) accumulated along the sorted eigenvalues; the empirical CDF jumps
  // by 1/n at each, so the sup distance is attained at the jumps.
  double sup = 0;
  double cdf = 0;
  double prev = -edge;
  for (int j = 0; j < n; ++j) {
    double t = eig.lambdas(j);
    double tc = std::min(std::max(t, -edge), edge);
    if (tc > prev) {
      cdf += integrate([&m](double x) { return m(x); }, prev, tc, 1e-9, 30, 2)
                 .value;
      prev = tc;
    }
    sup = std::max(sup, std::abs(cdf - double(j) / n));
    sup = std::max(sup, std::abs(cdf - double(j + 1) / n));
  }
  return sup;
}

}  // namespace qelab
