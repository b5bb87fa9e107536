#include "qelab/operators.hpp"

#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

#include <Eigen/SVD>

#include "qelab/nonbacktracking.hpp"

namespace qelab {

const PathIndex& PathSpace::index(int k) const {
  auto it = cache_.find(k);
  if (it == cache_.end())
    it = cache_.emplace(k, PathIndex(*bonds_, k)).first;
  return it->second;
}

namespace {

// id of the path with first and last bond removed (k >= 2 source)
long mil_id(const PathIndex& from, const PathIndex& to,
            const std::vector<int>& seq) {
  if (to.k() == 0) return from.bonds().terminus[seq.front()];
  std::vector<int> mid(seq.begin() + 1, seq.end() - 1);
  return to.encode(mid);
}

}  // namespace

PathKernel apply_M(const PathSpace& s, const PathKernel& K) {
  if (K.k < 2)
    throw std::invalid_argument("apply_M: k >= 2 required (M = 0 below)");
  const PathIndex& from = s.index(K.k);
  const PathIndex& to = s.index(K.k - 2);
  PathKernel out = zero_kernel(to);
  const double invq = 1.0 / double(s.graph().q);
  for (long id = 0; id < from.size(); ++id) {
    auto seq = from.decode(id);
    out.values(mil_id(from, to, seq)) += invq * K.values(id);
  }
  return out;
}

PathKernel apply_Mstar(const PathSpace& s, const PathKernel& K) {
  const PathIndex& from = s.index(K.k);
  const PathIndex& to = s.index(K.k + 2);
  PathKernel out = zero_kernel(to);
  const double invq = 1.0 / double(s.graph().q);
  for (long id = 0; id < to.size(); ++id) {
    auto seq = to.decode(id);
    out.values(id) = invq * K.values(mil_id(to, from, seq));
  }
  return out;
}

PathKernel apply_nabla(const PathSpace& s, const PathKernel& K) {
  const PathIndex& from = s.index(K.k);
  const PathIndex& to = s.index(K.k + 1);
  const auto& bonds = s.bonds();
  PathKernel out = zero_kernel(to);
  for (long id = 0; id < to.size(); ++id) {
    auto seq = to.decode(id);
    long drop_first, drop_last;
    if (K.k == 0) {
      drop_first = bonds.terminus[seq[0]];
      drop_last = bonds.origin[seq[0]];
    } else {
      drop_first = from.encode({seq.begin() + 1, seq.end()});
      drop_last = from.encode({seq.begin(), seq.end() - 1});
    }
    out.values(id) = K.values(drop_first) - K.values(drop_last);
  }
  return out;
}

PathKernel apply_nabla_star(const PathSpace& s, const PathKernel& K) {
  // grad* = -M grad: prepend-sum minus append-sum
  const auto& bonds = s.bonds();
  if (K.k == 0) return zero_kernel(s.index(0));
  const PathIndex& from = s.index(K.k);
  const PathIndex& to = s.index(K.k - 1);
  PathKernel out = zero_kernel(to);
  if (K.k == 1) {
    for (int x = 0; x < bonds.n; ++x) {
      std::complex<double> acc = 0;
      for (int e : bonds.out[x]) acc += K.values(bonds.rev[e]) - K.values(e);
      out.values(x) = acc;
    }
    return out;
  }
  for (long id = 0; id < to.size(); ++id) {
    auto seq = to.decode(id);
    std::complex<double> acc = 0;
    for (int b : bonds.predecessors(seq.front())) {
      std::vector<int> ext{b};
      ext.insert(ext.end(), seq.begin(), seq.end());
      acc += K.values(from.encode(ext));
    }
    for (int c : from.continuations()[seq.back()]) {
      std::vector<int> ext(seq);
      ext.push_back(c);
      acc -= K.values(from.encode(ext));
    }
    out.values(id) = acc;
  }
  return out;
}

PathKernel apply_S(const PathSpace& s, const PathKernel& K) {
  if (K.k < 1) throw std::invalid_argument("apply_S: k >= 1 required");
  const PathIndex& idx = s.index(K.k);
  const auto& bonds = s.bonds();
  PathKernel out = zero_kernel(idx);
  const double invq = 1.0 / double(s.graph().q);
  for (long id = 0; id < idx.size(); ++id) {
    auto seq = idx.decode(id);
    std::complex<double> acc = 0;
    // predecessors: prepend a bond, drop the last one
    for (int b : bonds.predecessors(seq.front())) {
      std::vector<int> src{b};
      src.insert(src.end(), seq.begin(), seq.end() - 1);
      acc += K.values(idx.encode(src));
    }
    out.values(id) = invq * acc;
  }
  return out;
}

PathKernel apply_S_star(const PathSpace& s, const PathKernel& K) {
  if (K.k < 1) throw std::invalid_argument("apply_S_star: k >= 1 required");
  const PathIndex& idx = s.index(K.k);
  PathKernel out = zero_kernel(idx);
  const double invq = 1.0 / double(s.graph().q);
  for (long id = 0; id < idx.size(); ++id) {
    auto seq = idx.decode(id);
    std::complex<double> acc = 0;
    for (int c : idx.continuations()[seq.back()]) {
      std::vector<int> dst(seq.begin() + 1, seq.end());
      dst.push_back(c);
      acc += K.values(idx.encode(dst));
    }
    out.values(id) = invq * acc;
  }
  return out;
}

PathKernel shift_left(const PathSpace& s, const PathKernel& K) {
  const PathIndex& from = s.index(K.k);
  const PathIndex& to = s.index(K.k + 1);
  const auto& bonds = s.bonds();
  PathKernel out = zero_kernel(to);
  for (long id = 0; id < to.size(); ++id) {
    auto seq = to.decode(id);
    out.values(id) = (K.k == 0)
                         ? K.values(bonds.terminus[seq[0]])
                         : K.values(from.encode({seq.begin() + 1, seq.end()}));
  }
  return out;
}

PathKernel shift_right(const PathSpace& s, const PathKernel& K) {
  const PathIndex& from = s.index(K.k);
  const PathIndex& to = s.index(K.k + 1);
  const auto& bonds = s.bonds();
  PathKernel out = zero_kernel(to);
  for (long id = 0; id < to.size(); ++id) {
    auto seq = to.decode(id);
    out.values(id) = (K.k == 0)
                         ? K.values(bonds.origin[seq[0]])
                         : K.values(from.encode({seq.begin(), seq.end() - 1}));
  }
  return out;
}

GradedKernel apply_L(const PathSpace& s, const GradedKernel& K) {
  GradedKernel out;
  for (const auto& [k, comp] : K.shells) {
    out.add(apply_nabla(s, comp));
    if (k >= 1) out.add(apply_nabla_star(s, comp));
  }
  return out;
}

GradedKernel apply_L(const PathSpace& s, const PathKernel& K) {
  GradedKernel g;
  g.add(K);
  return apply_L(s, g);
}

GradedKernel sigma_n_average(const PathSpace& s, const PathKernel& K, int n) {
  if (n < 1) throw std::invalid_argument("sigma_n_average: n >= 1");
  GradedKernel out;
  PathKernel cur = K;
  for (int j = 0; j < n; ++j) {
    PathKernel scaled = cur;
    scaled.values /= double(n);
    out.add(std::move(scaled));
    if (j + 1 < n) cur = apply_Mstar(s, cur);
  }
  return out;
}

Eigen::MatrixXcd fold_to_graph(const PathSpace& s, const GradedKernel& K) {
  const int n = s.graph().n;
  Eigen::MatrixXcd m = Eigen::MatrixXcd::Zero(n, n);
  for (const auto& [k, comp] : K.shells) {
    const PathIndex& idx = s.index(k);
    for (long id = 0; id < idx.size(); ++id)
      m(idx.start(id), idx.end(id)) += comp.values(id);
  }
  return m;
}

Eigen::MatrixXcd fold_to_graph(const PathSpace& s, const PathKernel& K) {
  GradedKernel g;
  g.add(K);
  return fold_to_graph(s, g);
}

Eigen::MatrixXcd bond_matrix(const PathSpace& s, const PathKernel& K) {
  if (K.k < 1)
    throw std::invalid_argument("bond_matrix: defined on shells k >= 1");
  const PathIndex& idx = s.index(K.k);
  const int nb = s.bonds().bond_count();
  Eigen::MatrixXcd m = Eigen::MatrixXcd::Zero(nb, nb);
  for (long id = 0; id < idx.size(); ++id) {
    auto seq = idx.decode(id);
    m(seq.front(), seq.back()) += K.values(id);
  }
  return m;
}

Eigen::MatrixXcd bond_matrix(const PathSpace& s, const GradedKernel& K) {
  const int nb = s.bonds().bond_count();
  Eigen::MatrixXcd m = Eigen::MatrixXcd::Zero(nb, nb);
  for (const auto& [k, comp] : K.shells) {
    if (k == 0) throw std::invalid_argument("bond_matrix: H_0 has no bond realization");
    m += bond_matrix(s, comp);
  }
  return m;
}

double hsn_sq(const Eigen::MatrixXcd& folded, int n) {
  return folded.squaredNorm() / double(n);
}

HsnComparison compare_hsn(const PathSpace& s, const GeometryProfile& geo,
                          const GradedKernel& K) {
  HsnComparison c;
  const int n = s.graph().n;
  c.hsn_sq = hsn_sq(fold_to_graph(s, K), n);
  double h2 = 0, sup = 0;
  int kmax = 0;
  for (const auto& [k, comp] : K.shells) {
    h2 += comp.values.squaredNorm() / double(n);
    sup = std::max(sup, comp.sup_norm());
    kmax = std::max(kmax, k);
  }
  c.h_norm_sq = h2;
  c.discrepancy = std::abs(c.hsn_sq - c.h_norm_sq);
  double tb = ball_size(s.graph().q, kmax);
  c.bound = tb * tb * sup * sup * geo.bad_fraction(kmax);
  return c;
}

double power_iteration_norm(const Eigen::MatrixXcd& T, int max_iter,
                            double tol, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Eigen::VectorXcd v(T.cols());
  for (Eigen::Index i = 0; i < v.size(); ++i)
    v(i) = std::complex<double>(u(rng), u(rng));
  v.normalize();
  double value = 0;
  for (int it = 0; it < max_iter; ++it) {
    Eigen::VectorXcd w = T.adjoint() * (T * v);
    double nw = w.norm();
    if (nw == 0) return 0;
    w /= nw;
    double next = std::sqrt(nw);
    if (it > 0 && std::abs(next - value) <= tol * std::max(1.0, value)) {
      value = next;
      break;
    }
    value = next;
    v = std::move(w);
  }
  return value;
}

Eigen::MatrixXcd operator_matrix(
    const PathSpace& s, int k_in,
    const std::function<PathKernel(const PathKernel&)>& apply) {
  const PathIndex& idx = s.index(k_in);
  PathKernel basis = zero_kernel(idx);
  basis.values(0) = 1.0;
  PathKernel first = apply(basis);
  basis.values(0) = 0.0;
  Eigen::MatrixXcd m(first.values.size(), idx.size());
  m.col(0) = first.values;
  for (long j = 1; j < idx.size(); ++j) {
    basis.values(j) = 1.0;
    m.col(j) = apply(basis).values;
    basis.values(j) = 0.0;
  }
  return m;
}

double constant_Ck(int k, double beta, int q) {
  double bp = beta_prime(beta, q);
  if (bp <= 0) return std::numeric_limits<double>::infinity();
  return double(k) + 1.0 / (bp * bp);
}

InverseBoundReport verify_inverse_bound(const PathSpace& s, int k,
                                        double beta) {
  const PathIndex& idx = s.index(k);
  Eigen::MatrixXcd S =
      operator_matrix(s, k, [&](const PathKernel& v) { return apply_S(s, v); });
  const long p = idx.size();
  // orthonormal basis of the mean-zero subspace via Householder on 1
  Eigen::MatrixXcd Q = Eigen::MatrixXcd::Identity(p, p);
  Eigen::VectorXcd ones = Eigen::VectorXcd::Ones(p) / std::sqrt(double(p));
  Eigen::VectorXcd e0 = Eigen::VectorXcd::Zero(p);
  e0(0) = 1.0;
  Eigen::VectorXcd w = ones - e0;
  if (w.norm() > 1e-14) {
    w.normalize();
    Q -= 2.0 * w * w.adjoint();
  }
  Eigen::MatrixXcd B = Q.rightCols(p - 1);  // columns orthonormal, all _|_ 1
  Eigen::MatrixXcd R =
      B.adjoint() * (Eigen::MatrixXcd::Identity(p, p) - S) * B;
  // smallest singular value through the normal matrix (complex JacobiSVD
  // is not trustworthy here)
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(R.adjoint() * R);
  double smin = std::sqrt(std::max(0.0, es.eigenvalues().minCoeff()));
  InverseBoundReport rep;
  rep.measured_norm = 1.0 / smin;
  rep.bound = constant_Ck(k, beta, s.graph().q);
  rep.holds = rep.measured_norm <= rep.bound * (1 + 1e-12);
  return rep;
}

FlowAverageResult flow_average(const PathSpace& s, const GradedKernel& K,
                               double T, int M_taylor, int shell_cap) {
  int m = K.max_shell();
  if (shell_cap < m + M_taylor)
    throw std::invalid_argument(
        "flow_average: shell_cap too small, support would overflow");
  FlowAverageResult res;
  const double l_norm = 4.0 * std::sqrt(double(s.graph().q));
  res.l_norm_bound = l_norm;
  res.taylor_M = M_taylor;
  res.required_M = static_cast<int>(std::ceil(5.0 * l_norm * T));

  const double norm_k = K.norm_h(s.graph());
  GradedKernel power = K;  // L^j K
  GradedKernel acc;
  std::complex<double> coeff(1.0, 0.0);  // (iT)^j / (j+1)!
  for (int j = 0; j <= M_taylor; ++j) {
    if (j > 0) {
      power = apply_L(s, power);
      if (power.max_shell() > shell_cap)
        throw std::invalid_argument("flow_average: shell_cap overflow");
      coeff *= std::complex<double>(0.0, T) / double(j + 1);
    }
    for (const auto& [k, comp] : power.shells) {
      PathKernel scaled = comp;
      scaled.values *= coeff;
      acc.add(std::move(scaled));
    }
  }
  res.norm = acc.norm_h(s.graph());
  res.value = std::move(acc);

  // remainder of sum_j (T L)^j / (j+1)! past M_taylor
  double tail = 0, term = 1;
  for (int j = 1; j <= M_taylor + 1; ++j) term *= T * l_norm / double(j + 1);
  for (int j = M_taylor + 1; j < 100000; ++j) {
    tail += term;
    term *= T * l_norm / double(j + 2);
    if (term < 1e-300 || (term < 1e-16 * tail && j > res.required_M)) break;
  }
  res.tail_bound = tail * norm_k;
  res.certified_norm_bound = std::min(norm_k, res.norm + res.tail_bound);
  return res;
}

}  // namespace qelab
