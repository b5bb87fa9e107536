#ifndef QELAB_SPECTRAL_HPP
#define QELAB_SPECTRAL_HPP

#include <vector>

#include <Eigen/Dense>

#include "qelab/graph.hpp"

namespace qelab {

/// Orthonormal eigenbasis of a symmetric nearest-neighbour operator,
/// eigenvalues ascending. `top` is the trivial top eigenvalue (q+1 for the
/// adjacency operator, 1 for stochastic weighted walks); beta is the gap
/// 1 - max_{nontrivial} |lambda_j| / top.
struct EigenSystem {
  Eigen::VectorXd lambdas;
  Eigen::MatrixXd psis;
  double top = 0;
  double beta = 0;

  int n() const { return static_cast<int>(lambdas.size()); }
  double max_residual(const Eigen::MatrixXd& op) const;
  double gram_defect() const;
};

/// Dense symmetric eigensolve (tridiagonalization + implicit QL via Eigen's
/// SelfAdjointEigenSolver). Hard cap n <= 4000: this library is desk scale.
EigenSystem dense_eigensystem(const Eigen::MatrixXd& op, double top);

EigenSystem adjacency_eigensystem(const RegularGraph& g);
Eigen::MatrixXd adjacency_matrix(const RegularGraph& g);

/// Indices with |lambda_j| < 2 sqrt(q) - margin (the tempered window),
/// ascending.
std::vector<int> tempered_indices(const EigenSystem& eig, int q,
                                  double margin = 1e-9);

/// sup_t |F_emp(t) - F(t)| between the empirical eigenvalue CDF and the
/// integrated Kesten-McKay density.
double km_cdf_distance(const EigenSystem& eig, int q);

}  // namespace qelab

#endif
