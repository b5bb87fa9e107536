#include "qelab/tree.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace qelab {

namespace {

// root of z^2 - gamma z + q = 0 with |z| > sqrt(q); for real tempered gamma
// the roots share modulus sqrt(q) and the sign argument picks Im z >= 0
// (the lambda + i0 side).
cplx principal_root(int q, cplx gamma, int onaxis_sign = +1) {
  cplx disc = std::sqrt(gamma * gamma - 4.0 * double(q));
  cplx z1 = 0.5 * (gamma + disc), z2 = 0.5 * (gamma - disc);
  double m1 = std::abs(z1), m2 = std::abs(z2);
  if (std::abs(m1 - m2) > 1e-13 * (m1 + m2)) return m1 > m2 ? z1 : z2;
  if (onaxis_sign >= 0) return z1.imag() >= z2.imag() ? z1 : z2;
  return z1.imag() <= z2.imag() ? z1 : z2;
}

}  // namespace

SpectralParameter spectral_param(int q, double lambda) {
  SpectralParameter sp;
  sp.q = q;
  sp.lambda = lambda;
  const double lnq = std::log(double(q));
  const double edge = 2.0 * std::sqrt(double(q));
  cplx s = std::acos(cplx(lambda / edge, 0.0)) / lnq;
  // lambda(s) is even in s; normalize so that Re alpha >= 1/2
  if (s.imag() > 0) s = -s;
  sp.s = s;
  sp.alpha = cplx(0.5, 0.0) + cplx(0.0, 1.0) * s;
  sp.tempered = std::abs(lambda) <= edge;
  return sp;
}

double spherical_phi(int q, double lambda, int d) {
  if (d < 0) throw std::invalid_argument("spherical_phi: d >= 0");
  if (d == 0) return 1.0;
  double prev = 1.0;
  double cur = lambda / double(q + 1);
  for (int k = 1; k < d; ++k) {
    double next = (lambda * cur - prev) / double(q);
    prev = cur;
    cur = next;
  }
  return cur;
}

double spherical_phi_closed(int q, double lambda, int d) {
  SpectralParameter sp = spectral_param(q, lambda);
  const double lnq = std::log(double(q));
  cplx t = sp.s * lnq;
  cplx value = std::pow(double(q), -0.5 * d) *
               (2.0 / double(q + 1) * std::cos(double(d) * t) +
                double(q - 1) / double(q + 1) *
                    std::sin(double(d + 1) * t) / std::sin(t));
  return value.real();
}

double shell_indicator_eigenvalue(int q, double lambda, int k) {
  if (k == 0) return 1.0;
  if (k == 1) return lambda;
  double prev = lambda;                              // h_1
  double cur = lambda * lambda - double(q + 1);      // h_2
  for (int j = 2; j < k; ++j) {
    double next = lambda * cur - double(q) * prev;
    prev = cur;
    cur = next;
  }
  return cur;
}

cplx green_tree(int q, cplx gamma, int d) {
  if (gamma.imag() == 0.0 &&
      std::abs(gamma.real()) <= double(q + 1) + 1e-12)
    throw std::invalid_argument(
        "green_tree: real gamma inside the spectrum; use green_tree_limit");
  cplx z = principal_root(q, gamma);
  return std::pow(z, -d) / (z - 1.0 / z);
}

cplx green_tree_limit(int q, double lambda, int sign, int d, double edge_tol) {
  const double edge = 2.0 * std::sqrt(double(q));
  if (std::abs(std::abs(lambda) - edge) < edge_tol)
    throw std::domain_error(
        "green_tree_limit: branch point at lambda = +-2 sqrt q");
  cplx z = principal_root(q, cplx(lambda, 0.0), sign);
  return std::pow(z, -d) / (z - 1.0 / z);
}

ExtrapolationReport extrapolate_to_axis(
    const std::function<cplx(double)>& f_at_eps,
    const std::vector<double>& epsilons) {
  std::vector<cplx> v;
  for (double e : epsilons) v.push_back(f_at_eps(e));
  return extrapolate_values(epsilons, v);
}

ExtrapolationReport extrapolate_values(const std::vector<double>& epsilons,
                                       const std::vector<cplx>& v) {
  if (epsilons.size() < 2 || v.size() != epsilons.size())
    throw std::invalid_argument("need at least two epsilons with values");
  auto linear = [&](std::size_t i, std::size_t j) {
    double ei = epsilons[i], ej = epsilons[j];
    return v[j] + (v[j] - v[i]) * (ej / (ei - ej));
  };
  std::size_t m = epsilons.size();
  cplx last = linear(m - 2, m - 1);
  ExtrapolationReport rep;
  rep.value = last;
  if (m >= 3) {
    cplx prev = linear(m - 3, m - 2);
    rep.error_estimate = std::abs(last - prev);
    double d1 = std::abs(v[m - 2] - v[m - 3]);
    double d2 = std::abs(v[m - 1] - v[m - 2]);
    double ratio_expected = epsilons[m - 1] / epsilons[m - 2];
    // in the linear regime successive differences shrink like epsilon
    rep.converged =
        d1 == 0.0 || (d2 / d1 > 0.2 * ratio_expected && d2 / d1 < 5.0 * ratio_expected);
  } else {
    rep.error_estimate = std::abs(v[1] - v[0]);
    rep.converged = true;
  }
  return rep;
}

double PlancherelDensity::support() const { return 2.0 * std::sqrt(double(q)); }

double PlancherelDensity::operator()(double lambda) const {
  // vanishes like a square root at the band edge; the guard keeps deep
  // quadrature bisection off the branch point
  if (std::abs(lambda) >= support() - 1e-12) return 0.0;
  cplx g = green_tree_limit(q, lambda, +1, 0, 1e-13);
  return -g.imag() / std::numbers::pi;
}

double PlancherelDensity::moment(int k, double tol) const {
  auto f = [this, k](double lambda) {
    return std::pow(lambda, k) * (*this)(lambda);
  };
  auto r = integrate(f, -support(), support(), tol, 40, 8);
  return r.value;
}

PlancherelDensity km_density(int q) { return PlancherelDensity{q}; }

std::vector<int> TreeBall::root_path(int v) const {
  std::vector<int> path;
  for (int u = v; u >= 0; u = parent[u]) path.push_back(u);
  std::reverse(path.begin(), path.end());
  return path;
}

TreeBall make_tree_ball(int q, int depth) {
  TreeBall b;
  b.q = q;
  b.depth = depth;
  b.parent.push_back(-1);
  b.depth_of.push_back(0);
  b.children.emplace_back();
  std::vector<int> frontier{0};
  for (int d = 1; d <= depth; ++d) {
    std::vector<int> next;
    for (int u : frontier) {
      int kids = (u == 0) ? q + 1 : q;
      for (int c = 0; c < kids; ++c) {
        int v = b.size();
        b.parent.push_back(u);
        b.depth_of.push_back(d);
        b.children.emplace_back();
        b.children[u].push_back(v);
        next.push_back(v);
      }
    }
    frontier = std::move(next);
  }
  b.boundary = frontier;
  return b;
}

Eigen::MatrixXd tree_ball_adjacency(const TreeBall& ball) {
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(ball.size(), ball.size());
  for (int v = 1; v < ball.size(); ++v) {
    a(v, ball.parent[v]) = 1.0;
    a(ball.parent[v], v) = 1.0;
  }
  return a;
}

TraceCheckReport tree_trace_check(const TreeBall& ball,
                                  const Eigen::MatrixXcd& K, double quad_tol) {
  const int q = ball.q;
  const int n = ball.size();
  if (K.rows() != n || K.cols() != n)
    throw std::invalid_argument("kernel size must match ball size");
  TraceCheckReport rep;
  rep.trace_direct = K.trace().real();

  // Busemann offsets h_omega(x) depend on omega only through the depth-D
  // cylinder: h = depth(x) - 2 * (common prefix depth of x and the cylinder).
  const auto& cylinders = ball.boundary;
  const int ncyl = static_cast<int>(cylinders.size());
  std::vector<std::vector<int>> paths(n);
  for (int v = 0; v < n; ++v) paths[v] = ball.root_path(v);
  Eigen::MatrixXi h(n, ncyl);
  for (int c = 0; c < ncyl; ++c) {
    const auto& cp = paths[cylinders[c]];
    for (int v = 0; v < n; ++v) {
      const auto& vp = paths[v];
      std::size_t m = 0;
      while (m < vp.size() && m < cp.size() && vp[m] == cp[m]) ++m;
      int meet_depth = static_cast<int>(m) - 1;
      h(v, c) = ball.depth_of[v] - 2 * meet_depth;
    }
  }

  const double lnq = std::log(double(q));
  const double edge = 2.0 * std::sqrt(double(q));
  PlancherelDensity dens = km_density(q);

  // each depth-D cylinder has harmonic measure 1/tau(D) = 1/#boundary
  double imag_leak = 0.0;
  auto integrand = [&](double lambda) {
    SpectralParameter sp = spectral_param(q, lambda);
    cplx expo = -(cplx(0.5, 0.0) + cplx(0.0, 1.0) * sp.s) * lnq;
    cplx total = 0.0;
    Eigen::VectorXcd P(n);
    for (int c = 0; c < ncyl; ++c) {
      for (int v = 0; v < n; ++v) P(v) = std::exp(expo * double(h(v, c)));
      total += P.dot(K * P) / double(ncyl);
    }
    imag_leak = std::max(imag_leak, std::abs(total.imag()));
    return total.real() * dens(lambda);
  };
  auto r = integrate(integrand, -edge, edge, quad_tol, 36, 8);
  rep.trace_spectral = r.value;
  rep.abs_error = std::abs(rep.trace_spectral - rep.trace_direct);
  rep.imag_leak = imag_leak;
  rep.evaluations = r.evaluations;
  rep.quadrature_converged = r.converged;
  return rep;
}

}  // namespace qelab
