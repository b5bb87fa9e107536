#ifndef QELAB_OPERATORS_HPP
#define QELAB_OPERATORS_HPP

#include <functional>
#include <map>

#include <Eigen/Dense>

#include "qelab/paths.hpp"

namespace qelab {

/// Shared context for the operator calculus on H = (+) H_k: the graph, its
/// bond table, and cached path indices per shell.
class PathSpace {
 public:
  PathSpace(const RegularGraph& g, const BondTable& bonds)
      : g_(&g), bonds_(&bonds) {}
  PathSpace(const RegularGraph&, BondTable&&) = delete;  // keeps no copy
  PathSpace(RegularGraph&&, const BondTable&) = delete;

  const RegularGraph& graph() const { return *g_; }
  const BondTable& bonds() const { return *bonds_; }
  const PathIndex& index(int k) const;

 private:
  const RegularGraph* g_;
  const BondTable* bonds_;
  mutable std::map<int, PathIndex> cache_;
};

// --- shell operators -------------------------------------------------------
// M  : H_k -> H_{k-2}   MK(w) = (1/q) sum_{mil(w')=w} K(w'),  0 on H_0, H_1
// M* : H_k -> H_{k+2}   M*K(w) = (1/q) K(mil(w))
// grad (nabla) : H_k -> H_{k+1}  (drop-first minus drop-last)
// grad* = -M grad : H_k -> H_{k-1}, equivalently prepend-sum minus append-sum
// S  : H_k -> H_k       predecessor average, k >= 1
// S* : H_k -> H_k       successor average
// sigma/rho : H_k -> H_{k+1}  left/right shift

PathKernel apply_M(const PathSpace& s, const PathKernel& K);
PathKernel apply_Mstar(const PathSpace& s, const PathKernel& K);
PathKernel apply_nabla(const PathSpace& s, const PathKernel& K);
PathKernel apply_nabla_star(const PathSpace& s, const PathKernel& K);
PathKernel apply_S(const PathSpace& s, const PathKernel& K);
PathKernel apply_S_star(const PathSpace& s, const PathKernel& K);
PathKernel shift_left(const PathSpace& s, const PathKernel& K);
PathKernel shift_right(const PathSpace& s, const PathKernel& K);

/// L = grad + grad* applied shell by shell. Equals (I - M) grad.
GradedKernel apply_L(const PathSpace& s, const GradedKernel& K);
GradedKernel apply_L(const PathSpace& s, const PathKernel& K);

/// Sigma^n = (1/n)(I + M* + ... + M*^(n-1)); components land in the
/// distinct shells k, k+2, ..., k+2(n-1).
GradedKernel sigma_n_average(const PathSpace& s, const PathKernel& K, int n);

// --- realizations ----------------------------------------------------------

/// Folded operator on l^2(V): entry (x,y) sums K over all non-backtracking
/// paths x -> y, over every shell of K.
Eigen::MatrixXcd fold_to_graph(const PathSpace& s, const GradedKernel& K);
Eigen::MatrixXcd fold_to_graph(const PathSpace& s, const PathKernel& K);

/// Bond realization on l^2(B) (defined for shells k >= 1): entry (b1,b2)
/// sums K over non-backtracking k-bond paths starting with b1, ending with b2.
Eigen::MatrixXcd bond_matrix(const PathSpace& s, const PathKernel& K);
Eigen::MatrixXcd bond_matrix(const PathSpace& s, const GradedKernel& K);

/// Normalized Hilbert-Schmidt norm squared: (1/n) sum |entries|^2.
double hsn_sq(const Eigen::MatrixXcd& folded, int n);

struct HsnComparison {
  double hsn_sq = 0;
  double h_norm_sq = 0;
  double discrepancy = 0;   // |hsn_sq - h_norm_sq|
  double bound = 0;         // tau~(k)^2 sup|K|^2 badcount(k)/n
};

/// Prop-style comparison of the folded HSN norm with the H norm; exact when
/// max_shell < min injectivity radius.
HsnComparison compare_hsn(const PathSpace& s, const GeometryProfile& geo,
                          const GradedKernel& K);

// --- operator norms and inverse bounds --------------------------------------

/// Largest singular value by power iteration on T^H T (200 iterations or
/// relative change < 1e-10).
double power_iteration_norm(const Eigen::MatrixXcd& T, int max_iter = 200,
                            double tol = 1e-10, std::uint64_t seed = 12345);

/// Dense matrix of a linear map H_{k_in} -> H_{k_out} assembled column by
/// column (basis vectors are paths).
Eigen::MatrixXcd operator_matrix(
    const PathSpace& s, int k_in,
    const std::function<PathKernel(const PathKernel&)>& apply);

/// C(k, beta) = k + 1/beta'^2 with beta' from the non-backtracking spectrum
/// map; inside the Ramanujan window 1 - beta' = q^{-1/2}.
double constant_Ck(int k, double beta, int q);

struct InverseBoundReport {
  double measured_norm = 0;  // ||(I-S)^{-1}|| on the mean-zero subspace
  double bound = 0;          // C(k, beta)
  bool holds = false;
};

InverseBoundReport verify_inverse_bound(const PathSpace& s, int k, double beta);

// --- flow average ------------------------------------------------------------

struct FlowAverageResult {
  GradedKernel value;        // (1/T) Int_0^T Taylor_M(e^{itL}) K dt
  double norm = 0;           // H norm of value
  int taylor_M = 0;
  int required_M = 0;        // 5 ||L|| T rounded up
  double l_norm_bound = 0;   // 4 sqrt(q)
  double tail_bound = 0;     // sup_t ||e^{itL}-Taylor_M|| * ||K||, may be huge
  /// Certified upper bound on the exact flow average: the unitary-average
  /// bound ||K|| always applies; the Taylor value tightens it only when the
  /// tail is under control.
  double certified_norm_bound = 0;
};

/// Exact term-by-term time integration of the Taylor polynomial:
/// sum_{j<=M} (iT)^j / (j+1)! L^j K. Throws if a power of L would overflow
/// shell_cap.
FlowAverageResult flow_average(const PathSpace& s, const GradedKernel& K,
                               double T, int M_taylor, int shell_cap);

}  // namespace qelab

#endif
