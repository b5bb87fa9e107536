#include "qelab/anisotropic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

#include <Eigen/SVD>

#include "qelab/quadrature.hpp"
#include "qelab/tree.hpp"

namespace qelab {

bool TransitionWeights::isotropic(double tol) const {
  for (double v : p)
    if (std::abs(v - p[0]) > tol) return false;
  return true;
}

void TransitionWeights::validate() const {
  if (p.size() < 2) throw std::invalid_argument("p needs q+1 >= 2 entries");
  double sum = 0;
  for (double v : p) {
    if (!(v > 0)) throw std::invalid_argument("p entries must be positive");
    sum += v;
  }
  if (std::abs(sum - 1.0) > 1e-12)
    throw std::invalid_argument("p must sum to 1");
}

double GreenState::density() const {
  return -std::imag(1.0 / (2.0 * w)) / std::numbers::pi;
}

namespace {

cplx zeta_root(cplx w, double p, const cplx* anchor) {
  cplx r = std::sqrt(w * w + p * p);
  cplx z1 = (-w + r) / p, z2 = (-w - r) / p;
  if (!anchor) return std::abs(z1) <= std::abs(z2) ? z1 : z2;
  return std::abs(z1 - *anchor) <= std::abs(z2 - *anchor) ? z1 : z2;
}

// derivative of the selected root with respect to w
cplx zeta_root_dw(cplx w, double p, cplx chosen) {
  cplx r = std::sqrt(w * w + p * p);
  double sign = std::abs((-w + r) / p - chosen) <= std::abs((-w - r) / p - chosen)
                    ? 1.0
                    : -1.0;
  return (cplx(-1.0, 0) + sign * w / r) / p;
}

struct NewtonState {
  cplx w;
  std::vector<cplx> zeta;
};

// Newton solve of F(w) = sum_j p_j zeta_j(w) + 2w - gamma at fixed gamma,
// branches anchored at the previous zeta values.
bool newton_at(const TransitionWeights& tw, cplx gamma, NewtonState* st) {
  const int labels = static_cast<int>(tw.p.size());
  for (int it = 0; it < 200; ++it) {
    cplx F = 2.0 * st->w - gamma;
    cplx dF = 2.0;
    std::vector<cplx> zs(labels);
    for (int j = 0; j < labels; ++j) {
      zs[j] = zeta_root(st->w, tw.p[j], &st->zeta[j]);
      F += tw.p[j] * zs[j];
      dF += tw.p[j] * zeta_root_dw(st->w, tw.p[j], zs[j]);
    }
    double scale = std::max(1.0, std::abs(gamma));
    if (std::abs(F) < 1e-14 * scale) {
      st->zeta = std::move(zs);
      return true;
    }
    if (dF == cplx(0.0)) return false;
    st->w -= F / dF;
  }
  return false;
}

// Fixed-point form on cut resolvents: R_j = 1/(gamma - sum_{k!=j} p_k^2 R_k),
// zeta_j = p_j R_j. No square roots, hence no branch choice; used when the
// Newton path runs into the sqrt collision at w = +-i p_j.
bool ladder_at(const TransitionWeights& tw, cplx gamma, NewtonState* st) {
  const int labels = static_cast<int>(tw.p.size());
  // fresh start from the depth-one truncated tree: the ladder iterates are
  // the growing-tree cut resolvents, which converge to the genuine branch
  // (the algebraic system has spurious solutions that even satisfy the
  // Im-sign certificate when one weight dominates, so anchored restarts
  // are not safe here)
  std::vector<cplx> R(labels, 1.0 / gamma);
  double scale = std::max(1.0, std::abs(gamma));
  for (long it = 0; it < 400000; ++it) {
    std::vector<cplx> next(labels);
    for (int j = 0; j < labels; ++j) {
      cplx acc = gamma;
      for (int k = 0; k < labels; ++k)
        if (k != j) acc -= tw.p[k] * tw.p[k] * R[k];
      next[j] = 1.0 / acc;
    }
    double delta = 0;
    for (int j = 0; j < labels; ++j) delta = std::max(delta, std::abs(next[j] - R[j]));
    R = std::move(next);
    if (delta < 1e-15 * scale) break;
  }
  cplx sum = 0;
  for (int j = 0; j < labels; ++j) {
    st->zeta[j] = tw.p[j] * R[j];
    sum += tw.p[j] * st->zeta[j];
  }
  st->w = 0.5 * (gamma - sum);
  // confirm with the scalar equation before accepting
  cplx F = 2.0 * st->w - gamma + sum;
  (void)F;  // zero by construction; the per-label relations are the check
  for (int j = 0; j < labels; ++j) {
    cplx rel = tw.p[j] * (1.0 / st->zeta[j] - st->zeta[j]) - 2.0 * st->w;
    if (std::abs(rel) > 1e-10 * scale) return false;
  }
  return true;
}

double system_residual(const TransitionWeights& tw, const GreenState& g) {
  cplx acc = 2.0 * g.w - g.gamma;
  double worst = 0;
  for (std::size_t j = 0; j < tw.p.size(); ++j) {
    acc += tw.p[j] * g.zeta[j];
    worst = std::max(worst,
                     std::abs(tw.p[j] * (1.0 / g.zeta[j] - g.zeta[j]) -
                              2.0 * g.w));
  }
  return std::max(worst, std::abs(acc));
}

bool branch_certificate(const GreenState& g) {
  if (g.gamma.imag() == 0) {
    // axis reading: the limit from above keeps Im zeta <= 0
    for (const auto& z : g.zeta)
      if (z.imag() > 1e-9) return false;
    return true;
  }
  double sgn = g.gamma.imag() > 0 ? -1.0 : 1.0;
  for (const auto& z : g.zeta)
    if (sgn * z.imag() < 0) return false;
  return true;
}

}  // namespace

GreenState solve_green(const TransitionWeights& tw, cplx gamma) {
  tw.validate();
  if (gamma.imag() == 0)
    throw std::invalid_argument("solve_green: Im gamma must be nonzero");
  const double target_im = gamma.imag();
  const double side = target_im > 0 ? 1.0 : -1.0;
  const double start_im = side * std::max(8.0, 4.0 * std::abs(gamma));

  NewtonState st;
  st.w = cplx(gamma.real(), start_im) / 2.0;
  st.zeta.assign(tw.p.size(), cplx(0, 0));
  for (std::size_t j = 0; j < tw.p.size(); ++j)
    st.zeta[j] = zeta_root(st.w, tw.p[j], nullptr);

  // geometric descent of the imaginary part onto the target
  const int steps = 80;
  const double ratio =
      std::pow(std::abs(target_im) / std::abs(start_im), 1.0 / steps);
  double im = start_im;
  for (int k = 1; k <= steps; ++k) {
    im = (k == steps) ? target_im : im * ratio;
    cplx g(gamma.real(), im);
    NewtonState prev = st;
    bool ok = newton_at(tw, g, &st);
    // a large jump of some zeta signals a silent branch hop near the sqrt
    // collision w = +-i p_j; re-derive the step from the truncated-tree
    // ladder, which cannot leave the resolvent branch
    double move = 0;
    if (ok)
      for (std::size_t j = 0; j < st.zeta.size(); ++j)
        move = std::max(move, std::abs(st.zeta[j] - prev.zeta[j]));
    if (!ok || move > 0.5) {
      NewtonState fresh = prev;
      if (ladder_at(tw, g, &fresh))
        st = fresh;
      else if (!ok)
        throw std::runtime_error("solve_green: homotopy diverged");
    }
  }
  GreenState out;
  out.gamma = gamma;
  out.w = st.w;
  out.zeta = st.zeta;
  out.residual = system_residual(tw, out);
  out.branch_ok = branch_certificate(out);
  if (!out.branch_ok)
    throw std::runtime_error("solve_green: branch certificate failed");
  return out;
}

GreenState solve_green_on_axis(const TransitionWeights& tw, double lambda,
                               const std::vector<double>& epsilons) {
  tw.validate();
  std::vector<GreenState> ladder;
  for (double e : epsilons) ladder.push_back(solve_green(tw, cplx(lambda, e)));

  GreenState out;
  out.gamma = cplx(lambda, 0.0);
  out.on_axis = true;
  out.zeta.resize(tw.p.size());
  double worst_err = 0;
  bool conv = true;
  for (std::size_t j = 0; j < tw.p.size(); ++j) {
    std::vector<cplx> vals;
    for (auto& g : ladder) vals.push_back(g.zeta[j]);
    auto r = extrapolate_values(epsilons, vals);
    out.zeta[j] = r.value;
    worst_err = std::max(worst_err, r.error_estimate);
    conv = conv && r.converged;
  }
  {
    std::vector<cplx> vals;
    for (auto& g : ladder) vals.push_back(g.w);
    auto r = extrapolate_values(epsilons, vals);
    out.w = r.value;
    worst_err = std::max(worst_err, r.error_estimate);
    conv = conv && r.converged;
  }

  // Newton polish on the axis, anchored at the extrapolated branch
  NewtonState st{out.w, out.zeta};
  if (newton_at(tw, out.gamma, &st)) {
    out.extrapolation_error =
        std::max(worst_err, std::abs(st.w - out.w));
    out.w = st.w;
    out.zeta = st.zeta;
  } else {
    out.extrapolation_error = worst_err;
  }
  out.extrapolation_converged = conv;
  out.residual = system_residual(tw, out);
  out.branch_ok = branch_certificate(out);
  return out;
}

cplx anis_green_kernel(const GreenState& state, const std::vector<int>& word) {
  const int labels = state.q() + 1;
  cplx acc = 1.0;
  for (std::size_t i = 0; i < word.size(); ++i) {
    if (word[i] < 0 || word[i] >= labels)
      throw std::invalid_argument("anis_green_kernel: label out of range");
    if (i > 0 && word[i] == word[i - 1])
      throw std::invalid_argument("anis_green_kernel: word is not reduced");
    acc *= state.zeta[word[i]];
  }
  return acc / (2.0 * state.w);
}

DensityTable anis_density(const TransitionWeights& tw,
                          const std::vector<double>& lambda_grid,
                          double support_threshold) {
  DensityTable t;
  for (double lambda : lambda_grid) {
    GreenState st = solve_green_on_axis(tw, lambda);
    DensityPoint pt;
    pt.lambda = lambda;
    pt.density = std::max(st.density(), 0.0);
    pt.converged = st.extrapolation_converged && st.branch_ok;
    t.points.push_back(pt);
  }
  // contiguous support intervals above the threshold
  std::size_t i = 0;
  while (i < t.points.size()) {
    if (t.points[i].density > support_threshold) {
      std::size_t j = i;
      while (j + 1 < t.points.size() &&
             t.points[j + 1].density > support_threshold)
        ++j;
      t.support.emplace_back(t.points[i].lambda, t.points[j].lambda);
      i = j + 1;
    } else {
      ++i;
    }
  }
  for (auto& [lo, hi] : t.support) {
    if (hi <= lo) continue;
    auto f = [&tw](double x) {
      GreenState st = solve_green_on_axis(tw, x);
      return std::max(st.density(), 0.0);
    };
    t.integral += integrate(f, lo, hi, 1e-8, 24, 4).value;
  }
  t.deficit = 1.0 - t.integral;
  return t;
}

CylinderMeasure harmonic_cylinders(const GreenState& state, int depth) {
  if (state.density() <= 0)
    throw std::invalid_argument("harmonic_cylinders: spectral density vanishes");
  const int labels = state.q() + 1;
  CylinderMeasure cm;
  cm.lambda = state.gamma.real();
  cm.depth = depth;
  std::vector<double> zsq(labels), frac(labels);
  for (int j = 0; j < labels; ++j) {
    zsq[j] = std::norm(state.zeta[j]);
    frac[j] = zsq[j] / (1.0 + zsq[j]);
  }
  // breadth-first over reduced words
  std::vector<std::vector<int>> frontier;
  for (int j = 0; j < labels; ++j) frontier.push_back({j});
  for (int d = 1; d <= depth; ++d) {
    std::vector<std::vector<int>> next;
    for (auto& word : frontier) {
      double wgt = 1.0;
      for (std::size_t i = 0; i + 1 < word.size(); ++i) wgt *= zsq[word[i]];
      wgt *= frac[word.back()];
      cm.words.push_back(word);
      cm.weights.push_back(wgt);
      if (static_cast<int>(word.size()) == 1) cm.depth1_sum += wgt;
      if (d < depth)
        for (int j = 0; j < labels; ++j)
          if (j != word.back()) {
            auto w2 = word;
            w2.push_back(j);
            next.push_back(std::move(w2));
          }
    }
    frontier = std::move(next);
  }
  // Kolmogorov consistency: parent weight equals the sum over children
  for (std::size_t i = 0; i < cm.words.size(); ++i) {
    if (static_cast<int>(cm.words[i].size()) >= depth) continue;
    double child_sum = 0;
    for (std::size_t jdx = 0; jdx < cm.words.size(); ++jdx) {
      if (cm.words[jdx].size() != cm.words[i].size() + 1) continue;
      if (std::equal(cm.words[i].begin(), cm.words[i].end(),
                     cm.words[jdx].begin()))
        child_sum += cm.weights[jdx];
    }
    cm.max_consistency_defect =
        std::max(cm.max_consistency_defect, std::abs(child_sum - cm.weights[i]));
  }
  return cm;
}

Eigen::MatrixXd build_Ap(const BondTable& bonds, const TransitionWeights& tw) {
  tw.validate();
  if (!bonds.labelled())
    throw std::invalid_argument("build_Ap: graph must be labelled");
  if (static_cast<int>(tw.p.size()) != bonds.q + 1)
    throw std::invalid_argument("build_Ap: p size must be q+1");
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(bonds.n, bonds.n);
  for (int e = 0; e < bonds.bond_count(); ++e)
    a(bonds.origin[e], bonds.terminus[e]) = tw.p[bonds.label[e]];
  return a;
}

EigenSystem ap_eigensystem(const BondTable& bonds, const TransitionWeights& tw) {
  return dense_eigensystem(build_Ap(bonds, tw), 1.0);
}

AnisLift lift_anis(const BondTable& bonds, const TransitionWeights& tw,
                   const Eigen::VectorXd& psi, const GreenState& state) {
  const int nb = bonds.bond_count();
  AnisLift lift;
  lift.f.resize(nb);
  lift.g.resize(nb);
  auto beta = [&](int e) {
    int c = bonds.label[e];
    return tw.p[c] / state.zeta[c];
  };
  for (int e = 0; e < nb; ++e) {
    cplx z = state.zeta[bonds.label[e]];
    if (std::abs(z) < 1e-14)
      throw std::runtime_error("lift_anis: vanishing zeta");
    lift.f(e) = psi(bonds.terminus[e]) - z * psi(bonds.origin[e]);
    lift.g(e) = beta(e) * lift.f(e);
  }
  // residual of B_p f = (p/zeta) f
  double worst = 0;
  for (int e = 0; e < nb; ++e) {
    cplx acc = 0;
    for (int f2 : bonds.successors(e))
      acc += tw.p[bonds.label[f2]] * lift.f(f2);
    worst = std::max(worst, std::abs(acc - beta(e) * lift.f(e)));
  }
  lift.residual = worst;
  return lift;
}

CenteringValue k_lambda_p(const PathSpace& s, const GeometryProfile& geo,
                          const GradedKernel& K, const GreenState& state) {
  const BondTable& bonds = s.bonds();
  if (!bonds.labelled())
    throw std::invalid_argument("k_lambda_p: graph must be labelled");
  double imdiag = std::imag(1.0 / (2.0 * state.w));
  if (std::abs(imdiag) < 1e-13)
    throw std::invalid_argument("k_lambda_p: spectral density vanishes");
  CenteringValue out;
  int maxk = 0;
  cplx acc = 0;
  for (const auto& [k, comp] : K.shells) {
    maxk = std::max(maxk, k);
    const PathIndex& idx = s.index(k);
    if (k == 0) {
      acc += comp.values.sum();  // ratio is 1 on the diagonal
      continue;
    }
    for (long id = 0; id < idx.size(); ++id) {
      auto seq = idx.decode(id);
      cplx zprod = 1.0;
      for (int e : seq) zprod *= state.zeta[bonds.label[e]];
      double ratio = std::imag(zprod / (2.0 * state.w)) / imdiag;
      acc += comp.values(id) * ratio;
    }
  }
  out.value = acc / double(s.graph().n);
  out.bad_fraction = maxk >= 1 ? geo.bad_fraction(maxk - 1) : 0.0;
  return out;
}

double WeightedTransfer::weighted_norm(const Eigen::MatrixXcd& op) const {
  Eigen::VectorXcd half = weight.array().sqrt().matrix().cast<cplx>();
  Eigen::VectorXcd halfinv = half.cwiseInverse();
  Eigen::MatrixXcd scaled = half.asDiagonal() * op * halfinv.asDiagonal();
  if (scaled.rows() <= 1200) {
    // largest eigenvalue of the normal matrix; complex JacobiSVD proved
    // unreliable at the 1e-4 level on these stochastic conjugates
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(scaled.adjoint() *
                                                       scaled);
    return std::sqrt(std::max(0.0, es.eigenvalues().maxCoeff()));
  }
  return power_iteration_norm(scaled);
}

Eigen::MatrixXcd WeightedTransfer::weighted_adjoint(
    const Eigen::MatrixXcd& op) const {
  Eigen::MatrixXcd d = weight.cast<cplx>().asDiagonal();
  Eigen::MatrixXcd dinv = weight.cwiseInverse().cast<cplx>().asDiagonal();
  return dinv * op.adjoint() * d;
}

WeightedTransfer weighted_transfer(const PathSpace& s, const GreenState& state,
                                   int m) {
  if (m < 1) throw std::invalid_argument("weighted_transfer: m >= 1");
  const BondTable& bonds = s.bonds();
  if (!bonds.labelled())
    throw std::invalid_argument("weighted_transfer: graph must be labelled");
  const PathIndex& idx = s.index(m);
  const long P = idx.size();
  const int labels = state.q() + 1;
  std::vector<double> zsq(labels);
  std::vector<cplx> u(labels);
  for (int j = 0; j < labels; ++j) {
    zsq[j] = std::norm(state.zeta[j]);
    u[j] = state.zeta[j] / std::conj(state.zeta[j]);
  }
  WeightedTransfer wt;
  wt.m = m;
  wt.S = Eigen::MatrixXcd::Zero(P, P);
  wt.Su = Eigen::MatrixXcd::Zero(P, P);
  wt.weight.resize(P);
  wt.u_constant = true;
  for (int j = 1; j < labels; ++j)
    if (std::abs(u[j] - u[0]) > 1e-12) wt.u_constant = false;

  for (long id = 0; id < P; ++id) {
    auto seq = idx.decode(id);
    int first_label = bonds.label[seq.front()];
    int last_label = bonds.label[seq.back()];
    double w = 1.0;
    for (int e : seq) w *= zsq[bonds.label[e]];
    wt.weight(id) =
        w / ((1.0 + zsq[first_label]) * (1.0 + zsq[last_label]));
    // predecessors: prepend a bond, drop the last one
    for (int b : bonds.predecessors(seq.front())) {
      std::vector<int> src{b};
      src.insert(src.end(), seq.begin(), seq.end() - 1);
      long sid = idx.encode(src);
      int bl = bonds.label[b];
      double coef = (1.0 + zsq[first_label]) / (1.0 + zsq[bl]) * zsq[bl];
      wt.S(id, sid) += coef;
      wt.Su(id, sid) += coef * u[bl];
    }
  }
  return wt;
}

TransferDecayRow transfer_decay_point(const PathSpace& s,
                                      const TransitionWeights& p, double e0,
                                      int m) {
  GreenState st = solve_green_on_axis(p, e0);
  WeightedTransfer wt = weighted_transfer(s, st, m);
  TransferDecayRow row;
  row.e0 = e0;
  row.m = m;
  row.u_constant = wt.u_constant;
  row.norm_S = wt.weighted_norm(wt.S);
  Eigen::MatrixXcd power = Eigen::MatrixXcd::Identity(wt.Su.rows(), wt.Su.cols());
  for (int i = 0; i <= m; ++i) power = wt.Su * power;
  row.norm_Su_power = wt.weighted_norm(power);
  row.delta = 1.0 - row.norm_Su_power;
  return row;
}

M0IdentityReport m0_identity_check(const PathSpace& s, const EigenSystem& eig,
                                   const TransitionWeights& tw,
                                   const Eigen::VectorXd& a) {
  const BondTable& bonds = s.bonds();
  if (!bonds.labelled())
    throw std::invalid_argument("m0_identity_check: graph must be labelled");
  M0IdentityReport rep;
  for (int j = 0; j < eig.n(); ++j) {
    double lambda = eig.lambdas(j);
    GreenState st = solve_green_on_axis(tw, lambda);
    if (st.density() < 1e-4 || !st.extrapolation_converged)
      continue;  // outside (or on the edge of) the a.c. support
    Eigen::VectorXd psi = eig.psis.col(j);

    const int nb = bonds.bond_count();
    Eigen::VectorXcd gvec(nb), gtil(nb), kdiag(nb);
    for (int e = 0; e < nb; ++e) {
      int c = bonds.label[e];
      cplx z = st.zeta[c], zb = std::conj(z);
      double pe = tw.p[c];
      cplx f = psi(bonds.terminus[e]) - z * psi(bonds.origin[e]);
      cplx ft = psi(bonds.terminus[e]) - zb * psi(bonds.origin[e]);
      gvec(e) = pe / z * f;
      gtil(e) = pe / zb * ft;
      kdiag(e) = a(bonds.origin[e]) * std::norm(z) / pe;
    }
    cplx lhs = 0;
    for (int e = 0; e < nb; ++e) {
      lhs += std::conj(gvec(bonds.rev[e])) * kdiag(e) * gvec(e);
      lhs -= std::conj(gtil(bonds.rev[e])) * kdiag(e) * gtil(e);
    }
    // 2i sum_x psi^2 [(A' - W') a](x), A' weighted by p Im zeta
    double wprime = 0;
    for (std::size_t c = 0; c < tw.p.size(); ++c)
      wprime += tw.p[c] * st.zeta[c].imag();
    cplx rhs = 0;
    for (int x = 0; x < bonds.n; ++x) {
      double apx = 0;
      for (int e : bonds.out[x]) {
        int c = bonds.label[e];
        apx += tw.p[c] * st.zeta[c].imag() * a(bonds.terminus[e]);
      }
      rhs += psi(x) * psi(x) * (apx - wprime * a(x));
    }
    rhs *= cplx(0.0, 2.0);
    rep.max_residual = std::max(rep.max_residual, std::abs(lhs - rhs));

    // the plain Im-zeta row sum is label-complete, hence x-independent
    double w0 = -1;
    for (int x = 0; x < bonds.n; ++x) {
      double wx = 0;
      for (int e : bonds.out[x]) wx += st.zeta[bonds.label[e]].imag();
      if (w0 < 0) w0 = wx;
      rep.w_independence_defect =
          std::max(rep.w_independence_defect, std::abs(wx - w0));
    }
    ++rep.checked;
  }
  return rep;
}

namespace {

// Rooted labelled tree ball: the universal cover of the labelled graph,
// truncated at `depth`, rooted over graph vertex x.
struct LabelledBall {
  std::vector<int> gv;          // projection to graph vertices
  std::vector<int> parent;      // node index, -1 at root
  std::vector<int> entry;       // label of the edge to the parent, -1 at root
  std::vector<int> depth_of;
  std::vector<std::vector<int>> children;
};

LabelledBall make_labelled_ball(const BondTable& bonds, int x, int depth) {
  LabelledBall b;
  b.gv.push_back(x);
  b.parent.push_back(-1);
  b.entry.push_back(-1);
  b.depth_of.push_back(0);
  b.children.emplace_back();
  std::vector<int> frontier{0};
  for (int d = 1; d <= depth; ++d) {
    std::vector<int> next;
    for (int u : frontier) {
      for (int e : bonds.out[b.gv[u]]) {
        int c = bonds.label[e];
        if (c == b.entry[u]) continue;  // no backtracking in the cover
        int v = static_cast<int>(b.gv.size());
        b.gv.push_back(bonds.terminus[e]);
        b.parent.push_back(u);
        b.entry.push_back(c);
        b.depth_of.push_back(d);
        b.children.emplace_back();
        b.children[u].push_back(v);
        next.push_back(v);
      }
    }
    frontier = std::move(next);
  }
  return b;
}

}  // namespace

OrthogonalityReport green_orthogonality_check(const PathSpace& s,
                                              const TransitionWeights& tw,
                                              const PathKernel& K,
                                              const GreenState& state,
                                              int tree_depth) {
  const BondTable& bonds = s.bonds();
  const int m = K.k;
  if (m < 1) throw std::invalid_argument("green_orthogonality_check: m >= 1");
  if (tree_depth < m + 1)
    throw std::invalid_argument(
        "green_orthogonality_check: truncation too shallow for shell m");
  if (!bonds.labelled())
    throw std::invalid_argument("green_orthogonality_check: labels required");
  const PathIndex& idx_m = s.index(m);

  OrthogonalityReport rep;
  std::vector<PathKernel> shells;
  for (int k = std::max(0, m - 2); k <= m; ++k)
    shells.push_back(zero_kernel(s.index(k)));
  auto shell_of = [&](int k) -> PathKernel& {
    return shells[k - std::max(0, m - 2)];
  };

  auto zeta_of = [&](int label) { return state.zeta[label]; };

  for (int x = 0; x < bonds.n; ++x) {
    LabelledBall ball = make_labelled_ball(bonds, x, tree_depth);
    // tree bonds: (node u, node v) with v child of u, or the reverse
    // enumerate non-backtracking bond paths of length m whose first bond
    // touches the root
    struct TB {
      int from, to, label;
    };
    std::vector<TB> first_bonds;
    for (int c : ball.children[0]) {
      first_bonds.push_back({0, c, ball.entry[c]});   // leaves the root
      first_bonds.push_back({c, 0, ball.entry[c]});   // enters the root
    }
    for (auto& fb : first_bonds) {
      cplx coefA;  // conj applied later
      if (fb.from == 0)
        coefA = tw.p[fb.label] / zeta_of(fb.label);
      else
        coefA = -tw.p[fb.label];
      // DFS over continuations
      std::vector<TB> path{fb};
      std::function<void(const TB&, int)> extend = [&](const TB& last,
                                                       int step) {
        if (step == m) {
          // K value on the projected path
          std::vector<int> proj;
          proj.reserve(m);
          int gvert = ball.gv[path.front().from];
          for (auto& tb : path) {
            int ebond = -1;
            for (int e : bonds.out[gvert])
              if (bonds.label[e] == tb.label) {
                ebond = e;
                break;
              }
            proj.push_back(ebond);
            gvert = bonds.terminus[ebond];
          }
          cplx kval = K.values(idx_m.encode(proj));
          // endpoint contributions: y = t(e_m) and y = o(e_m)
          for (int side = 0; side < 2; ++side) {
            int ynode = side == 0 ? last.to : last.from;
            cplx coefB = side == 0 ? tw.p[last.label] / zeta_of(last.label)
                                   : cplx(-tw.p[last.label], 0.0);
            int shell = ball.depth_of[ynode];
            // project the root path of ynode
            std::vector<int> down;
            for (int u = ynode; u > 0; u = ball.parent[u]) down.push_back(u);
            std::reverse(down.begin(), down.end());
            std::vector<int> qpath;
            int gv2 = x;
            for (int u : down) {
              int eb = -1;
              for (int e : bonds.out[gv2])
                if (bonds.label[e] == ball.entry[u]) {
                  eb = e;
                  break;
                }
              qpath.push_back(eb);
              gv2 = bonds.terminus[eb];
            }
            cplx contrib = std::conj(coefA) * kval * coefB;
            if (shell == 0)
              shell_of(0).values(x) += contrib;
            else
              shell_of(shell).values(s.index(shell).encode(qpath)) += contrib;
          }
          return;
        }
        // continue the bond path: successors of `last` in the tree
        int at = last.to;
        // children of `at`
        for (int c : ball.children[at]) {
          TB nb{at, c, ball.entry[c]};
          if (last.from == c) continue;  // reversal
          path.push_back(nb);
          extend(nb, step + 1);
          path.pop_back();
        }
        // the parent bond (going up), unless it reverses `last`
        if (ball.parent[at] >= 0 && ball.parent[at] != last.from) {
          TB nb{at, ball.parent[at], ball.entry[at]};
          path.push_back(nb);
          extend(nb, step + 1);
          path.pop_back();
        }
      };
      extend(fb, 1);
    }
  }

  // multiplier-formula check on the top shell; for m = 1 the conjugation
  // also picks up the reversal term p^2 K(rev e)
  const auto& top = shell_of(m);
  double defect = 0;
  for (long id = 0; id < idx_m.size(); ++id) {
    auto seq = idx_m.decode(id);
    int lf = bonds.label[seq.front()], ll = bonds.label[seq.back()];
    cplx expected = tw.p[lf] / std::conj(state.zeta[lf]) * K.values(id) *
                    tw.p[ll] / state.zeta[ll];
    if (m == 1)
      expected += tw.p[lf] * tw.p[lf] * K.values(bonds.rev[seq.front()]);
    defect = std::max(defect, std::abs(top.values(id) - expected));
  }
  rep.shell_m_defect = defect;

  // Green pairing: sum over shells of Ktilde_k against Im G along the word
  cplx pairing = 0;
  double scale = 0;
  for (auto& shell : shells) {
    const PathIndex& idx = s.index(shell.k);
    for (long id = 0; id < idx.size(); ++id) {
      cplx zprod = 1.0;
      if (shell.k > 0)
        for (int e : idx.decode(id)) zprod *= state.zeta[bonds.label[e]];
      double img = std::imag(zprod / (2.0 * state.w));
      pairing += shell.values(id) * img;
      scale += std::abs(shell.values(id)) * std::abs(img);
    }
  }
  rep.identity_residual = std::abs(pairing);
  rep.scale = scale;
  for (auto& shell : shells) rep.conjugated.add(std::move(shell));
  return rep;
}

DecayTable anis_variance_experiment(const std::vector<FamilyMember>& family,
                                    const TransitionWeights& tw,
                                    AnisObservable kind, std::uint64_t obs_seed,
                                    bool use_centering) {
  if (family.size() < 3)
    throw std::invalid_argument("anis_variance_experiment: need >= 3 members");
  std::vector<DecayRow> rows;
  for (const auto& fm : family) {
    PathSpace s(fm.g, fm.bonds);
    EigenSystem eig = ap_eigensystem(fm.bonds, tw);
    GradedKernel K;
    switch (kind) {
      case AnisObservable::identity:
        K.add(one_kernel(s.index(0)));
        break;
      case AnisObservable::diagonal: {
        ObservableSpec spec{ObservableKind::random_diagonal, 0, obs_seed};
        K = make_observable(s, eig, spec);
        break;
      }
      case AnisObservable::shell1:
        K.add(random_kernel(s.index(1), obs_seed, true));
        break;
    }
    Eigen::MatrixXcd F = fold_to_graph(s, K);
    double acc = 0;
    for (int j = 0; j < eig.n(); ++j) {
      Eigen::VectorXcd psi = eig.psis.col(j).cast<cplx>();
      cplx diag = psi.dot(F * psi);
      cplx center = 0;
      if (use_centering) {
        if (kind == AnisObservable::diagonal || kind == AnisObservable::identity) {
          // D = 0 centering is the plain mean, no Green data needed
          center = K.shells.at(0).values.sum() / double(fm.g.n);
        } else {
          GreenState st = solve_green_on_axis(tw, eig.lambdas(j));
          if (st.density() < 1e-8) continue;
          center = k_lambda_p(s, fm.geo, K, st).value;
        }
      }
      acc += std::norm(diag - center);
    }
    DecayRow row;
    row.n = fm.g.n;
    row.seed = fm.seed;
    row.girth = fm.geo.girth;
    row.beta = eig.beta;
    row.var = acc / double(fm.g.n);
    row.hsn_sq = hsn_sq(F, fm.g.n);
    row.bad_term = fm.geo.bad_fraction(std::max(1, fm.geo.girth / 2));
    rows.push_back(row);
  }
  return summarize_decay(std::move(rows));
}

}  // namespace qelab
