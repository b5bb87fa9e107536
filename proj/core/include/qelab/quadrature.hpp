#ifndef QELAB_QUADRATURE_HPP
#define QELAB_QUADRATURE_HPP

#include <functional>

namespace qelab {

struct QuadratureResult {
  double value = 0;
  double error_estimate = 0;
  int evaluations = 0;
  bool converged = false;
};

/// Adaptive Gauss-Legendre (15 point panels, bisection on disagreement).
/// Spectral integrands vanish like a square root at the interval ends, so
/// callers should pass edge_split > 0 to pre-subdivide geometrically
/// towards both endpoints before adapting.
QuadratureResult integrate(const std::function<double(double)>& f, double a,
                           double b, double tol = 1e-10, int max_depth = 30,
                           int edge_split = 0);

}  // namespace qelab

#endif
