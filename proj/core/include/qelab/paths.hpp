#ifndef QELAB_PATHS_HPP
#define QELAB_PATHS_HPP

#include <complex>
#include <cstdint>
#include <map>
#include <vector>

#include <Eigen/Dense>

#include "qelab/graph.hpp"

namespace qelab {

using cplx = std::complex<double>;

/// Bijective index of B_k, the non-backtracking k-paths of a graph.
/// k = 0 indexes vertices. For k >= 1 a path is encoded as
/// (first bond) * q^{k-1} + sum_i choice_i q^{k-1-i}, where choice_i picks
/// among the q continuations of the previous bond in successor order.
class PathIndex {
 public:
  PathIndex(const BondTable& bonds, int k);

  int k() const { return k_; }
  long size() const { return size_; }
  const BondTable& bonds() const { return *bonds_; }

  /// bond ids along the path, empty for k = 0
  std::vector<int> decode(long id) const;
  long encode(const std::vector<int>& bond_seq) const;

  /// start vertex / end vertex of a path id (vertex itself for k = 0)
  int start(long id) const;
  int end(long id) const;

  /// successor table: cont(e)[c] is the c-th non-backtracking continuation
  const std::vector<std::vector<int>>& continuations() const { return cont_; }
  /// position of bond f within cont(e), -1 if not a continuation
  int choice_of(int e, int f) const;

 private:
  const BondTable* bonds_;
  int k_;
  long size_;
  std::vector<std::vector<int>> cont_;
  std::vector<std::vector<int>> choice_;  // indexed like a bond-pair lookup
};

/// Element of H_k: a complex function on B_k with the 1/n-normalized
/// inner product <K,K'> = (1/n) sum conj(K) K'.
struct PathKernel {
  int k = 0;
  Eigen::VectorXcd values;

  double norm_h() const;
  double sup_norm() const;
};

PathKernel zero_kernel(const PathIndex& idx);
/// indicator 1_k (value 1 on every path)
PathKernel one_kernel(const PathIndex& idx);

std::complex<double> inner_h(const RegularGraph& g, const PathKernel& a,
                             const PathKernel& b);

/// mean <K> = (1/(n tau(k))) sum_omega K(omega)
std::complex<double> shell_mean(const RegularGraph& g, const PathKernel& K);

/// K - <K> 1_k
PathKernel center_shell(const RegularGraph& g, const PathIndex& idx,
                        const PathKernel& K);

/// Graded element of H_{<=D}: one component per shell.
struct GradedKernel {
  std::map<int, PathKernel> shells;

  double norm_h(const RegularGraph& g) const;
  int max_shell() const;
  GradedKernel& add(PathKernel k);
};

/// Deterministic pseudo-random kernel with entries in the complex unit box
/// (or real box when real_only), for tests and experiments.
PathKernel random_kernel(const PathIndex& idx, std::uint64_t seed,
                         bool real_only = false);

}  // namespace qelab

#endif
