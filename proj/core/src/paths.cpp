#include "qelab/paths.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace qelab {

PathIndex::PathIndex(const BondTable& bonds, int k) : bonds_(&bonds), k_(k) {
  if (k < 0) throw std::invalid_argument("PathIndex: k >= 0");
  const int nb = bonds.bond_count();
  cont_.resize(nb);
  choice_.resize(nb);
  for (int e = 0; e < nb; ++e) {
    cont_[e] = bonds.successors(e);
    choice_[e].assign(bonds.q, -1);
  }
  if (k == 0) {
    size_ = bonds.n;
  } else {
    size_ = nb;
    for (int i = 1; i < k; ++i) size_ *= bonds.q;
    // memory guard: one complex value per path
    if (size_ > (1L << 28))
      throw std::length_error("PathIndex: B_k too large to enumerate");
  }
}

int PathIndex::choice_of(int e, int f) const {
  const auto& c = cont_[e];
  for (std::size_t i = 0; i < c.size(); ++i)
    if (c[i] == f) return static_cast<int>(i);
  return -1;
}

std::vector<int> PathIndex::decode(long id) const {
  std::vector<int> seq;
  if (k_ == 0) return seq;
  seq.resize(k_);
  long rest = id;
  long radix = 1;
  for (int i = 1; i < k_; ++i) radix *= bonds_->q;
  int e = static_cast<int>(rest / radix);
  rest %= radix;
  seq[0] = e;
  for (int i = 1; i < k_; ++i) {
    radix /= bonds_->q;
    int c = static_cast<int>(rest / radix);
    rest %= radix;
    e = cont_[e][c];
    seq[i] = e;
  }
  return seq;
}

long PathIndex::encode(const std::vector<int>& bond_seq) const {
  if (static_cast<int>(bond_seq.size()) != k_)
    throw std::invalid_argument("encode: wrong path length");
  if (k_ == 0) throw std::invalid_argument("encode: vertex paths have no bonds");
  long id = bond_seq[0];
  for (int i = 1; i < k_; ++i) {
    int c = choice_of(bond_seq[i - 1], bond_seq[i]);
    if (c < 0) throw std::invalid_argument("encode: not a non-backtracking path");
    id = id * bonds_->q + c;
  }
  return id;
}

int PathIndex::start(long id) const {
  if (k_ == 0) return static_cast<int>(id);
  long radix = 1;
  for (int i = 1; i < k_; ++i) radix *= bonds_->q;
  return bonds_->origin[static_cast<int>(id / radix)];
}

int PathIndex::end(long id) const {
  if (k_ == 0) return static_cast<int>(id);
  auto seq = decode(id);
  return bonds_->terminus[seq.back()];
}

double PathKernel::norm_h() const {
  // caller-facing norm goes through inner_h; this is the unnormalized l2
  return values.norm();
}

double PathKernel::sup_norm() const {
  return values.size() ? values.cwiseAbs().maxCoeff() : 0.0;
}

PathKernel zero_kernel(const PathIndex& idx) {
  return PathKernel{idx.k(), Eigen::VectorXcd::Zero(idx.size())};
}

PathKernel one_kernel(const PathIndex& idx) {
  return PathKernel{idx.k(), Eigen::VectorXcd::Ones(idx.size())};
}

std::complex<double> inner_h(const RegularGraph& g, const PathKernel& a,
                             const PathKernel& b) {
  if (a.k != b.k) return 0.0;  // distinct shells are orthogonal
  return a.values.dot(b.values) / double(g.n);
}

std::complex<double> shell_mean(const RegularGraph& g, const PathKernel& K) {
  double tau = sphere_size(g.q, K.k);
  return K.values.sum() / (double(g.n) * tau);
}

PathKernel center_shell(const RegularGraph& g, const PathIndex& idx,
                        const PathKernel& K) {
  auto m = shell_mean(g, K);
  PathKernel out = K;
  out.values.array() -= m;
  (void)idx;
  return out;
}

double GradedKernel::norm_h(const RegularGraph& g) const {
  double s = 0;
  for (const auto& [k, comp] : shells)
    s += comp.values.squaredNorm() / double(g.n);
  return std::sqrt(s);
}

int GradedKernel::max_shell() const {
  return shells.empty() ? -1 : shells.rbegin()->first;
}

GradedKernel& GradedKernel::add(PathKernel kern) {
  auto it = shells.find(kern.k);
  if (it == shells.end())
    shells.emplace(kern.k, std::move(kern));
  else
    it->second.values += kern.values;
  return *this;
}

PathKernel random_kernel(const PathIndex& idx, std::uint64_t seed,
                         bool real_only) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  PathKernel k = zero_kernel(idx);
  for (long i = 0; i < idx.size(); ++i) {
    double re = u(rng);
    double im = real_only ? 0.0 : u(rng);
    k.values(i) = std::complex<double>(re, im);
  }
  return k;
}

}  // namespace qelab
