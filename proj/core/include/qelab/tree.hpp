#ifndef QELAB_TREE_HPP
#define QELAB_TREE_HPP

#include <complex>
#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "qelab/quadrature.hpp"

namespace qelab {

using cplx = std::complex<double>;

/// lambda = q^{1/2+is} + q^{1/2-is} = 2 sqrt(q) cos(s ln q).
/// Branch: sin(s ln q) >= 0 for real s (tempered window |lambda| <= 2 sqrt q),
/// and Re alpha >= 1/2 with alpha = 1/2 + i s otherwise.
struct SpectralParameter {
  int q = 0;
  double lambda = 0;
  cplx s;
  cplx alpha;
  bool tempered = false;
};

SpectralParameter spectral_param(int q, double lambda);

/// Spherical function Phi_lambda(d) by the three-term recurrence
/// lambda Phi(d) = q Phi(d+1) + Phi(d-1), Phi(0)=1, Phi(1)=lambda/(q+1).
double spherical_phi(int q, double lambda, int d);

/// Closed form with the sin quotient; kept as a cross-check, undefined at
/// lambda = +-2 sqrt q.
double spherical_phi_closed(int q, double lambda, int d);

/// h_k(lambda) = tau(k) Phi_lambda(k): the eigenvalue of the folded shell
/// indicator (number of non-backtracking k-paths weighted by an adjacency
/// eigenvalue). Satisfies h_0=1, h_1=lambda, h_2=lambda^2-(q+1),
/// h_{k+1} = lambda h_k - q h_{k-1}.
double shell_indicator_eigenvalue(int q, double lambda, int k);

/// Green function of the (q+1)-regular tree at distance d:
/// g_gamma(d) = z^{-d} / (z - 1/z) with z^2 - gamma z + q = 0, |z| > sqrt q.
cplx green_tree(int q, cplx gamma, int d);

/// Boundary value g_{lambda + i 0} (sign=+1) or g_{lambda - i 0} (sign=-1),
/// taken on the analytic branch. Throws within `edge_tol` of the band edge
/// +-2 sqrt q where the two roots collide.
cplx green_tree_limit(int q, double lambda, int sign, int d,
                      double edge_tol = 1e-9);

struct ExtrapolationReport {
  cplx value;
  double error_estimate = 0;
  bool converged = false;
};

/// Richardson extrapolation of eps -> f(lambda + i eps) to eps = 0 using a
/// decreasing epsilon ladder (default 1e-4, 1e-5, 1e-6).
ExtrapolationReport extrapolate_to_axis(
    const std::function<cplx(double)>& f_at_eps,
    const std::vector<double>& epsilons = {1e-4, 1e-5, 1e-6});

/// Same extrapolation from precomputed ladder values.
ExtrapolationReport extrapolate_values(const std::vector<double>& epsilons,
                                       const std::vector<cplx>& values);

/// Kesten-McKay / Plancherel density m(lambda) = -(1/pi) Im g_{lambda+i0}(o),
/// supported on [-2 sqrt q, 2 sqrt q].
struct PlancherelDensity {
  int q = 0;
  double support() const;
  double operator()(double lambda) const;
  /// integral of lambda^k m(lambda) dlambda
  double moment(int k, double tol = 1e-10) const;
};

PlancherelDensity km_density(int q);

/// Rooted truncated (q+1)-regular tree of given depth; vertex 0 is the root.
struct TreeBall {
  int q = 0;
  int depth = 0;
  std::vector<int> parent;             // -1 at the root
  std::vector<int> depth_of;
  std::vector<std::vector<int>> children;
  std::vector<int> boundary;           // vertices at full depth

  int size() const { return static_cast<int>(parent.size()); }
  std::vector<int> root_path(int v) const;  // root..v inclusive
};

TreeBall make_tree_ball(int q, int depth);

/// Adjacency matrix of the truncated tree (interior degrees q+1).
Eigen::MatrixXd tree_ball_adjacency(const TreeBall& ball);

struct TraceCheckReport {
  double trace_direct = 0;
  double trace_spectral = 0;
  double abs_error = 0;
  double imag_leak = 0;    // spurious imaginary part of the spectral side
  int evaluations = 0;
  bool quadrature_converged = false;
};

/// Compares sum_x K(x,x) with the boundary-integral trace evaluated through
/// depth-D cylinder decomposition of the boundary and Plancherel quadrature.
/// K must be supported on pairs inside the ball.
TraceCheckReport tree_trace_check(const TreeBall& ball,
                                  const Eigen::MatrixXcd& K,
                                  double quad_tol = 1e-9);

}  // namespace qelab

#endif
