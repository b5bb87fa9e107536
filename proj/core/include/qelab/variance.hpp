#ifndef QELAB_VARIANCE_HPP
#define QELAB_VARIANCE_HPP

#include <cstdint>
#include <optional>
#include <vector>

#include "qelab/operators.hpp"
#include "qelab/spectral.hpp"

namespace qelab {

enum class Centering { none, spherical };

struct VarianceReport {
  std::vector<double> lambdas;
  std::vector<cplx> diagonals;   // <psi_j, K_G psi_j>
  std::vector<cplx> centerings;  // <K>_{lambda_j} (0 when uncentered)
  double var = 0;
  double hsn_sq_centered = 0;    // HSN^2 bound of eq-estHS form
  int count = 0;                 // how many j entered the average
  std::optional<std::pair<double, double>> interval;
};

/// Quantum variance of the folded kernel over the full eigenbasis.
/// Spherical centering subtracts sum_k <K_k> h_k(lambda_j), i.e. the
/// diagonal matrix element of the shell means folded through Phi.
VarianceReport quantum_variance(const PathSpace& s, const EigenSystem& eig,
                                const GradedKernel& K, Centering centering);

/// Non-backtracking quantum variance over tempered eigenvalues:
/// (1/n) sum |<f_j*, K_B f_j>|^2, or the interval-local version normalized
/// by N(I). Kernels must live in shells k >= 1.
VarianceReport nb_variance(const PathSpace& s, const EigenSystem& eig,
                           const GradedKernel& K,
                           std::optional<std::pair<double, double>> interval = {});

struct TransferIdentityReport {
  double max_residual_i = 0;   // multiplication-kernel identity
  double max_residual_ii = 0;  // (1-S) + eps grad* identity
  int checked = 0;
};

/// Per-eigenvalue identities linking the bond and vertex pairings:
/// (i)  <f*, K'_B f> = conj(eps) <psi, ((q+1)-A)a psi> for K'(x,y) = a(x)
/// (ii) <f*, K_B f> = <psi, ((1-S)K)_G psi> + eps <psi, (grad* K)_G psi>
/// over all tempered eigenvalues.
TransferIdentityReport isotropic_transfer_identities(const PathSpace& s,
                                                     const EigenSystem& eig,
                                                     const Eigen::VectorXd& a,
                                                     const PathKernel& K);

struct SmoothingReport {
  // Var(grad* K) <= 4(q+1)/n ||K||^2 + 8(q+1) q^n tau~(m+2n+1)^2 sup^2 bad
  double lhs_varnabla = 0;
  double rhs_varnabla = 0;
  bool varnabla_holds = false;
  // Var(K) <= 2 C(m,b)^2 (4q+5)/n ||K||^2 + 2 sup^2 (8n(q+1)q^n tau~(m+2n+2)^2 bad
  //           + tau~(m)^2 bad(m))
  double lhs_final = 0;
  double rhs_final = 0;
  bool final_holds = false;
};

/// Printed-constant inequality check; K must be mean zero on its shell.
SmoothingReport variance_smoothing_check(const PathSpace& s,
                                         const GeometryProfile& geo,
                                         const EigenSystem& eig,
                                         const PathKernel& K, int n);

enum class ObservableKind { random_diagonal, shell_kernel, identity, psi2 };

struct ObservableSpec {
  ObservableKind kind = ObservableKind::random_diagonal;
  int k = 0;  // shell for shell_kernel
  std::uint64_t seed = 0;
};

/// Build the observable on a concrete graph: mean-zero sup<=1 for diagonal
/// kinds, random unit-box shell kernel otherwise.
GradedKernel make_observable(const PathSpace& s, const EigenSystem& eig,
                             const ObservableSpec& spec);

struct DecayRow {
  int n = 0;
  std::uint64_t seed = 0;
  int girth = 0;
  double beta = 0;
  double var = 0;
  double hsn_sq = 0;
  double bad_term = 0;
};

struct DecayTable {
  std::vector<DecayRow> rows;
  std::vector<int> sizes;
  std::vector<double> median_var;  // per size, over seeds
  double slope = 0;                // log-log fit of median var vs n
  bool strictly_decreasing = false;
};

struct FamilyMember {
  RegularGraph g;
  BondTable bonds;
  GeometryProfile geo;
  EigenSystem eig;
  std::uint64_t seed = 0;
};

FamilyMember make_family_member(int n, int degree, std::uint64_t seed);
FamilyMember make_labelled_family_member(int n, int q, std::uint64_t seed);

/// Variance decay across a graph family with a common seeded observable.
DecayTable decay_experiment(const std::vector<FamilyMember>& family,
                            const ObservableSpec& obs, Centering centering);

DecayTable summarize_decay(std::vector<DecayRow> rows);

}  // namespace qelab

#endif
