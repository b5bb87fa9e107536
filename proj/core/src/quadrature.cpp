#include "qelab/quadrature.hpp"

#include <cmath>
#include <vector>

namespace qelab {

namespace {

// 15-point Gauss-Legendre nodes/weights on [-1,1]
constexpr double kNodes[15] = {
    -0.9879925180204854, -0.9372733924007060, -0.8482065834104272,
    -0.7244177313601701, -0.5709721726085388, -0.3941513470775634,
    -0.2011940939974345, 0.0,                 0.2011940939974345,
    0.3941513470775634,  0.5709721726085388,  0.7244177313601701,
    0.8482065834104272,  0.9372733924007060,  0.9879925180204854};
constexpr double kWeights[15] = {
    0.0307532419961173, 0.0703660474881081, 0.1071592204671719,
    0.1395706779261543, 0.1662692058169939, 0.1861610000155622,
    0.1984314853271116, 0.2025782419255613, 0.1984314853271116,
    0.1861610000155622, 0.1662692058169939, 0.1395706779261543,
    0.1071592204671719, 0.0703660474881081, 0.0307532419961173};

double panel(const std::function<double(double)>& f, double a, double b,
             int* evals) {
  double mid = 0.5 * (a + b), half = 0.5 * (b - a);
  double s = 0;
  for (int i = 0; i < 15; ++i) s += kWeights[i] * f(mid + half * kNodes[i]);
  *evals += 15;
  return s * half;
}

void adapt(const std::function<double(double)>& f, double a, double b,
           double whole, double tol, int depth, QuadratureResult* out) {
  double mid = 0.5 * (a + b);
  double left = panel(f, a, mid, &out->evaluations);
  double right = panel(f, mid, b, &out->evaluations);
  double diff = std::abs(left + right - whole);
  if (diff < tol || depth <= 0) {
    out->value += left + right;
    out->error_estimate += diff;
    if (depth <= 0 && diff >= tol) out->converged = false;
    return;
  }
  adapt(f, a, mid, left, tol * 0.5, depth - 1, out);
  adapt(f, mid, b, right, tol * 0.5, depth - 1, out);
}

}  // namespace

QuadratureResult integrate(const std::function<double(double)>& f, double a,
                           double b, double tol, int max_depth,
                           int edge_split) {
  QuadratureResult out;
  out.converged = true;
  std::vector<double> cuts{a};
  if (edge_split > 0) {
    // geometric refinement towards both endpoints
    double len = b - a;
    for (int i = edge_split; i >= 1; --i) cuts.push_back(a + len * std::pow(0.5, i + 1));
    for (int i = 1; i <= edge_split; ++i) cuts.push_back(b - len * std::pow(0.5, i + 1));
  }
  cuts.push_back(b);
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
    double whole = panel(f, cuts[i], cuts[i + 1], &out.evaluations);
    adapt(f, cuts[i], cuts[i + 1], whole, tol / double(cuts.size()), max_depth,
          &out);
  }
  return out;
}

}  // namespace qelab
