#ifndef QELAB_ANISOTROPIC_HPP
#define QELAB_ANISOTROPIC_HPP

#include <complex>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "qelab/operators.hpp"
#include "qelab/spectral.hpp"
#include "qelab/variance.hpp"

namespace qelab {

/// Positive probability weights p_1..p_{q+1} over edge labels.
struct TransitionWeights {
  std::vector<double> p;

  int q() const { return static_cast<int>(p.size()) - 1; }
  bool isotropic(double tol = 1e-14) const;
  void validate() const;  // positive, sums to 1
};

/// Algebraic data of the anisotropic tree resolvent at gamma:
/// (gamma - A_p)^{-1}(o,o) = 1/2w and along a reduced word the product
/// formula zeta(i_1)...zeta(i_M) / 2w, where
///   (a) gamma = sum_j p_j zeta_j + 2w
///   (b) p_j (1/zeta_j - zeta_j) = 2w
///   (c) sign(Im zeta_j) = -sign(Im gamma).
struct GreenState {
  cplx gamma;
  std::vector<cplx> zeta;
  cplx w;
  double residual = 0;          // worst of (a) and all (b)
  bool branch_ok = false;       // certificate (c)
  bool on_axis = false;         // lambda + i0 limit by extrapolation
  double extrapolation_error = 0;
  bool extrapolation_converged = true;

  int q() const { return static_cast<int>(zeta.size()) - 1; }
  double density() const;       // -(1/pi) Im (1/2w), on-axis reading
};

/// Newton-polished homotopy from large Im gamma down to the target;
/// per-label closed form zeta_j(w) = (-w + sqrt(w^2+p_j^2))/p_j with the
/// branch tracked by continuity and certified by (c).
GreenState solve_green(const TransitionWeights& p, cplx gamma);

/// Boundary value at lambda + i0 via Richardson extrapolation over the
/// epsilon ladder (1e-4, 1e-5, 1e-6 by default).
GreenState solve_green_on_axis(const TransitionWeights& p, double lambda,
                               const std::vector<double>& epsilons = {1e-4, 1e-5,
                                                                      1e-6});

/// Resolvent along a reduced label word (no immediate repetition):
/// zeta(i_1)...zeta(i_M) / 2w. Throws on non-reduced words.
cplx anis_green_kernel(const GreenState& state, const std::vector<int>& word);

struct DensityPoint {
  double lambda = 0;
  double density = 0;
  bool converged = true;
};

struct DensityTable {
  std::vector<DensityPoint> points;
  double integral = 0;   // over the detected support
  double deficit = 0;    // 1 - integral
  std::vector<std::pair<double, double>> support;  // density > threshold
};

DensityTable anis_density(const TransitionWeights& p,
                          const std::vector<double>& lambda_grid,
                          double support_threshold = 1e-8);

/// Harmonic cylinder measure at a density-positive energy:
/// nu([i_1..i_M]) = |zeta(i_1)|^2 ... |zeta(i_{M-1})|^2
///                  |zeta(i_M)|^2 / (1+|zeta(i_M)|^2).
struct CylinderMeasure {
  double lambda = 0;
  int depth = 0;
  std::vector<std::vector<int>> words;  // all reduced words, lengths 1..depth
  std::vector<double> weights;
  double depth1_sum = 0;                // should be 1 (Kolmogorov relation)
  double max_consistency_defect = 0;    // parent weight vs children sum
};

CylinderMeasure harmonic_cylinders(const GreenState& state, int depth);

/// Label-weighted adjacency A_p f(x) = sum_y p(c(x,y)) f(y): symmetric,
/// stochastic, spectrum in [-1,1].
Eigen::MatrixXd build_Ap(const BondTable& bonds, const TransitionWeights& p);
EigenSystem ap_eigensystem(const BondTable& bonds, const TransitionWeights& p);

struct AnisLift {
  Eigen::VectorXcd f;      // psi(t(e)) - zeta(c(e)) psi(o(e))
  Eigen::VectorXcd g;      // (p/zeta) f
  double residual = 0;     // ||B_p f - (p/zeta) f||
};

AnisLift lift_anis(const BondTable& bonds, const TransitionWeights& tw,
                   const Eigen::VectorXd& psi, const GreenState& state);

struct CenteringValue {
  cplx value = 0;
  double bad_fraction = 0;  // vertices with rho < max shell
};

/// <K>_{lambda,p} = (1/n) sum over non-backtracking paths of
/// K(path) Im G(word) / Im G(o,o).
CenteringValue k_lambda_p(const PathSpace& s, const GeometryProfile& geo,
                          const GradedKernel& K, const GreenState& state);

/// Transfer operator S_{E0} on H_m with the kolmo weights, its u-twist
/// (u = zeta/conj(zeta)), and the diagonal path weight of the tilde space
/// norm ||K||^2 = (1/n) sum W(path) |K(path)|^2.
struct WeightedTransfer {
  int m = 0;
  Eigen::MatrixXcd S;
  Eigen::MatrixXcd Su;
  Eigen::VectorXd weight;
  bool u_constant = false;

  double weighted_norm(const Eigen::MatrixXcd& op) const;
  Eigen::MatrixXcd weighted_adjoint(const Eigen::MatrixXcd& op) const;
};

WeightedTransfer weighted_transfer(const PathSpace& s, const GreenState& state,
                                   int m);

struct TransferDecayRow {
  double e0 = 0;
  int m = 0;
  double norm_S = 0;        // should be 1
  double norm_Su_power = 0; // ||(S^u)^{m+1}||, < 1 for non-constant u
  double delta = 0;         // 1 - norm_Su_power
  bool u_constant = false;
};

TransferDecayRow transfer_decay_point(const PathSpace& s,
                                      const TransitionWeights& p, double e0,
                                      int m);

struct M0IdentityReport {
  double max_residual = 0;
  double w_independence_defect = 0;
  int checked = 0;
};

/// Two-branch pairing identity for diagonal observables:
/// <iota g_j, K_B g_j> - <iota g~_j, K_B g~_j>
///   = 2i sum_x |psi_j(x)|^2 [(A'_lambda - W'_lambda) a](x)
/// with K_lambda(x,y) = a(x)|zeta|^2/p, A' weighted by p Im zeta and
/// W' = sum_j p_j Im zeta_j (x-independent).
M0IdentityReport m0_identity_check(const PathSpace& s, const EigenSystem& eig,
                                   const TransitionWeights& p,
                                   const Eigen::VectorXd& a);

struct OrthogonalityReport {
  double identity_residual = 0;   // |sum_k sum_omega Ktilde_k Im G(word)|
  double shell_m_defect = 0;      // extracted vs multiplier formula
  double scale = 0;               // sum of |Ktilde| Im-G magnitudes
  GradedKernel conjugated;        // shells m, m-1, m-2
};

/// Builds (iota U~)* K_B U~ on per-vertex labelled tree balls, reads off the
/// three shells (the lower two are the images under the conjugation maps),
/// and evaluates the Green pairing that must vanish.
OrthogonalityReport green_orthogonality_check(const PathSpace& s,
                                              const TransitionWeights& p,
                                              const PathKernel& K,
                                              const GreenState& state,
                                              int tree_depth);

enum class AnisObservable { diagonal, shell1, identity };

/// Quantum variance of the A_p eigenbasis with <K>_{lambda,p} centering,
/// across a labelled family. Only eigenvalues with positive spectral density
/// receive the Green centering; the remainder enters uncentered when
/// use_centering is off.
DecayTable anis_variance_experiment(const std::vector<FamilyMember>& family,
                                    const TransitionWeights& p,
                                    AnisObservable kind, std::uint64_t obs_seed,
                                    bool use_centering);

}  // namespace qelab

#endif
