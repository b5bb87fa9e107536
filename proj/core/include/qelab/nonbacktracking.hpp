#ifndef QELAB_NONBACKTRACKING_HPP
#define QELAB_NONBACKTRACKING_HPP

#include <complex>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "qelab/graph.hpp"
#include "qelab/spectral.hpp"

namespace qelab {

using cplx = std::complex<double>;

/// Edge-space non-backtracking operator: A#(e,e') = 1 iff o(e') = t(e) and
/// e' != rev(e). Every row sums to q; A#/q is bistochastic.
struct NBOperator {
  Eigen::SparseMatrix<double> matrix;  // 2|E| x 2|E|
  int q = 0;

  Eigen::MatrixXd dense() const { return Eigen::MatrixXd(matrix); }
};

NBOperator build_nb(const BondTable& bonds);

enum class NBFamily { trivial, tempered, untempered, plus_one, minus_one };

std::string to_string(NBFamily f);

struct NBPairing {
  cplx predicted;
  cplx matched;
  double abs_error = 0;
  NBFamily family = NBFamily::trivial;
};

struct NBCorrespondenceReport {
  std::vector<NBPairing> pairs;
  double max_error = 0;
  double trace_defect = 0;   // |sum of computed eigenvalues|
  int betti = 0;             // b = |E| - |V| + 1
  bool bipartite = false;
  bool q_simple = false;     // eigenvalue q has multiplicity 1
};

/// Predicted A# multiset from the adjacency spectrum:
/// {q} (+ {-q} iff bipartite) + both roots of mu^2 - lambda mu + q = 0 per
/// nontrivial lambda + {1 x b} + {-1 x (b-1 or b)}, matched greedily against
/// the dense A# eigenvalues.
NBCorrespondenceReport nb_spectrum_correspondence(const BondTable& bonds,
                                                  const EigenSystem& eig);

/// Lift of an adjacency eigenvector to the bond space:
/// f(e) = psi(t(e)) - eps psi(o(e)) with q eps^2 - lambda eps + 1 = 0,
/// eps = q^{-1/2-is} (Im eps <= 0 branch); f* = iota f. Then
/// A# f = mu f and A#* f* = mu f* with mu = 1/eps = lambda - q eps.
struct LiftedPair {
  Eigen::VectorXcd f;
  Eigen::VectorXcd f_star;
  cplx eps;
  cplx mu;
  double residual_f = 0;       // ||A# f - mu f||
  double residual_f_star = 0;  // ||A#* f* - mu f*||
  cplx pairing;                // <f*, f>, zero for tempered lambda
};

LiftedPair lift_eigenvector(const BondTable& bonds,
                            const Eigen::VectorXd& psi, double lambda,
                            int branch = -1);

/// Spectral-gap map beta -> beta' of the non-backtracking spectrum:
/// 1 - beta' = 2 / ((q+1)(1 - beta - sqrt((1-beta)^2 - 4q/(q+1)^2))).
/// Inside the Ramanujan window the square root turns imaginary and the
/// tempered modulus convention 1 - beta' = q^{-1/2} applies.
double beta_prime(double beta, int q);

/// iota-conjugation: apply bond reversal to a bond vector.
Eigen::VectorXcd iota(const BondTable& bonds, const Eigen::VectorXcd& f);

}  // namespace qelab

#endif
