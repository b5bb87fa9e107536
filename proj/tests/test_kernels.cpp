#include <doctest.h>

#include <cmath>
#include <set>

#include <Eigen/SVD>

#include "qelab/nonbacktracking.hpp"
#include "qelab/operators.hpp"
#include "qelab/spectral.hpp"
#include "qelab/tree.hpp"
#include "support/oracles.hpp"

using namespace qelab;

namespace {

struct Fixture {
  RegularGraph g;
  BondTable bonds;
  PathSpace space;
  explicit Fixture(RegularGraph gr)
      : g(std::move(gr)), bonds(make_bond_table(g)), space(g, bonds) {}
};

double hdist(const RegularGraph& g, const PathKernel& a, const PathKernel& b) {
  return (a.values - b.values).norm() / std::sqrt(double(g.n));
}

}  // namespace

TEST_CASE("path enumeration is bijective and counts match brute force") {
  Fixture fx(build_petersen());
  for (int k : {0, 1, 2, 3}) {
    const PathIndex& idx = fx.space.index(k);
    auto brute = oracles::nb_paths_brute(fx.g, k);
    CHECK(idx.size() == long(brute.size()));
    if (k == 0) continue;
    // every decode is a valid non-backtracking path and encode inverts it
    std::set<std::vector<int>> seen;
    for (long id = 0; id < idx.size(); ++id) {
      auto seq = idx.decode(id);
      CHECK(long(seq.size()) == k);
      CHECK(idx.encode(seq) == id);
      std::vector<int> verts{fx.bonds.origin[seq[0]]};
      for (int e : seq) verts.push_back(fx.bonds.terminus[e]);
      seen.insert(verts);
    }
    std::set<std::vector<int>> expect(brute.begin(), brute.end());
    CHECK(seen == expect);
  }
  CHECK(fx.space.index(1).size() == 30);
  CHECK(fx.space.index(2).size() == 60);
}

TEST_CASE("M M* identities") {
  for (auto name : {"petersen", "heawood"}) {
    Fixture fx(build_named(name));
    const int q = fx.g.q;
    for (int k : {1, 2, 3}) {
      PathKernel K = random_kernel(fx.space.index(k), 11 + k);
      PathKernel back = apply_M(fx.space, apply_Mstar(fx.space, K));
      CHECK(hdist(fx.g, back, K) < 1e-12);
    }
    PathKernel K0 = random_kernel(fx.space.index(0), 5);
    PathKernel back0 = apply_M(fx.space, apply_Mstar(fx.space, K0));
    PathKernel scaled = K0;
    scaled.values *= double(q + 1) / double(q);
    CHECK(hdist(fx.g, back0, scaled) < 1e-12);
  }
}

TEST_CASE("adjoint consistency of M, nabla, S on random pairs") {
  Fixture fx(build_petersen());
  for (int k : {1, 2}) {
    PathKernel a = random_kernel(fx.space.index(k), 21 + k);
    PathKernel b = random_kernel(fx.space.index(k + 2), 40 + k);
    cplx lhs = inner_h(fx.g, apply_Mstar(fx.space, a), b);
    cplx rhs = inner_h(fx.g, a, apply_M(fx.space, b));
    CHECK(std::abs(lhs - rhs) < 1e-12);
  }
  for (int k : {0, 1, 2}) {
    PathKernel a = random_kernel(fx.space.index(k), 61 + k);
    PathKernel b = random_kernel(fx.space.index(k + 1), 80 + k);
    cplx lhs = inner_h(fx.g, apply_nabla(fx.space, a), b);
    cplx rhs = inner_h(fx.g, a, apply_nabla_star(fx.space, b));
    CHECK(std::abs(lhs - rhs) < 1e-12);
    // grad* = -M grad explicitly
    if (b.k >= 1) {
      PathKernel viaM = apply_M(fx.space, apply_nabla(fx.space, b));
      viaM.values = -viaM.values;
      CHECK(hdist(fx.g, viaM, apply_nabla_star(fx.space, b)) < 1e-13);
    }
  }
  for (int k : {1, 2}) {
    PathKernel a = random_kernel(fx.space.index(k), 101 + k);
    PathKernel b = random_kernel(fx.space.index(k), 120 + k);
    cplx lhs = inner_h(fx.g, apply_S(fx.space, a), b);
    cplx rhs = inner_h(fx.g, a, apply_S_star(fx.space, b));
    CHECK(std::abs(lhs - rhs) < 1e-12);
  }
}

TEST_CASE("L factorizations and the commutator realization") {
  for (auto name : {"petersen", "heawood"}) {
    Fixture fx(build_named(name));
    Eigen::MatrixXd A = adjacency_matrix(fx.g);
    for (int k : {0, 1, 2}) {
      PathKernel K = random_kernel(fx.space.index(k), 31 + k);
      GradedKernel gk;
      gk.add(K);
      GradedKernel LK = apply_L(fx.space, gk);
      // L = (I - M) grad
      PathKernel up = apply_nabla(fx.space, K);
      GradedKernel alt;
      alt.add(up);
      if (up.k >= 2) {
        PathKernel down = apply_M(fx.space, up);
        down.values = -down.values;
        alt.add(down);
      }
      double diff = 0;
      for (auto& [kk, comp] : LK.shells) {
        auto it = alt.shells.find(kk);
        REQUIRE(it != alt.shells.end());
        diff += (comp.values - it->second.values).squaredNorm();
      }
      CHECK(std::sqrt(diff / fx.g.n) < 1e-12);

      // fold(LK) = [A, fold(K)]
      Eigen::MatrixXcd lhs = fold_to_graph(fx.space, LK);
      Eigen::MatrixXcd F = fold_to_graph(fx.space, gk);
      Eigen::MatrixXcd rhs = A.cast<cplx>() * F - F * A.cast<cplx>();
      CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-12);
    }
    // self-adjointness: <L a, b> = <a, L b> across neighbouring shells
    PathKernel a = random_kernel(fx.space.index(2), 7);
    PathKernel b = random_kernel(fx.space.index(3), 8);
    GradedKernel La = apply_L(fx.space, a), Lb = apply_L(fx.space, b);
    cplx l = inner_h(fx.g, La.shells.at(3), b);
    cplx r = inner_h(fx.g, a, Lb.shells.at(2));
    CHECK(std::abs(l - r) < 1e-12);
  }
}

TEST_CASE("radial kernels span the null space of L") {
  Fixture fx(build_heawood());
  // arbitrary shell constants: L kills them exactly
  GradedKernel radial;
  for (int k = 0; k <= 3; ++k) {
    PathKernel c = one_kernel(fx.space.index(k));
    c.values *= cplx(0.3 * k - 0.7, 0.1 * k);
    radial.add(std::move(c));
  }
  GradedKernel out = apply_L(fx.space, radial);
  double norm = out.norm_h(fx.g);
  CHECK(norm < 1e-20);
}

TEST_CASE("null space dimension of L on H_{<=k} via SVD rank") {
  // L restricted to H_{<=k} has null dimension k+1 when girth > 2k+2
  auto null_dim = [](const RegularGraph& graph, int kmax) {
    BondTable bonds = make_bond_table(graph);
    PathSpace space(graph, bonds);
    long cols = 0, rows = 0;
    std::vector<long> offs_in, offs_out;
    for (int k = 0; k <= kmax; ++k) {
      offs_in.push_back(cols);
      cols += space.index(k).size();
    }
    for (int k = 0; k <= kmax + 1; ++k) {
      offs_out.push_back(rows);
      rows += space.index(k).size();
    }
    Eigen::MatrixXcd M = Eigen::MatrixXcd::Zero(rows, cols);
    long col = 0;
    for (int k = 0; k <= kmax; ++k) {
      const PathIndex& idx = space.index(k);
      for (long j = 0; j < idx.size(); ++j, ++col) {
        PathKernel basis = zero_kernel(idx);
        basis.values(j) = 1.0;
        GradedKernel out = apply_L(space, basis);
        for (auto& [kk, comp] : out.shells)
          M.block(offs_out[kk], col, comp.values.size(), 1) = comp.values;
      }
    }
    Eigen::JacobiSVD<Eigen::MatrixXcd> svd(M);
    auto sv = svd.singularValues();
    long rank = 0;
    for (Eigen::Index i = 0; i < sv.size(); ++i)
      if (sv(i) > 1e-10 * sv(0)) ++rank;
    return cols - rank;
  };
  CHECK(null_dim(build_heawood(), 1) == 2);      // girth 6 > 4
  CHECK(null_dim(oracles::mcgee(), 2) == 3);     // girth 7 > 6
}

TEST_CASE("transfer operator and shift ranges") {
  Fixture fx(build_petersen());
  // S^{k-1} lands in the image of H_1: value depends on the first bond only
  for (int k : {2, 3}) {
    PathKernel K = random_kernel(fx.space.index(k), 300 + k);
    PathKernel out = K;
    for (int l = 0; l < k - 1; ++l) out = apply_S(fx.space, out);
    const PathIndex& idx = fx.space.index(k);
    std::vector<cplx> by_first(fx.bonds.bond_count(),
                               cplx(std::nan(""), 0));
    double maxdev = 0;
    for (long id = 0; id < idx.size(); ++id) {
      int first = idx.decode(id).front();
      if (std::isnan(by_first[first].real()))
        by_first[first] = out.values(id);
      else
        maxdev = std::max(maxdev, std::abs(by_first[first] - out.values(id)));
    }
    CHECK(maxdev < 1e-12);
  }

  // operator norms: ||S|| <= 1 and ||M*|| = 1 on k >= 1; M landing in a
  // k >= 1 shell also has norm 1, while M: H_2 -> H_0 picks up the
  // sqrt((q+1)/q) anomaly of the bottom shell
  for (int k : {1, 2}) {
    auto Smat = operator_matrix(
        fx.space, k, [&](const PathKernel& v) { return apply_S(fx.space, v); });
    double ns = power_iteration_norm(Smat);
    CHECK(ns <= 1.0 + 1e-8);
    auto Mstar = operator_matrix(fx.space, k, [&](const PathKernel& v) {
      return apply_Mstar(fx.space, v);
    });
    double nm = power_iteration_norm(Mstar);
    CHECK(std::abs(nm - 1.0) < 1e-8);
  }
  auto M31 = operator_matrix(
      fx.space, 3, [&](const PathKernel& v) { return apply_M(fx.space, v); });
  CHECK(std::abs(power_iteration_norm(M31) - 1.0) < 1e-8);
  auto M20 = operator_matrix(
      fx.space, 2, [&](const PathKernel& v) { return apply_M(fx.space, v); });
  CHECK(std::abs(power_iteration_norm(M20) - std::sqrt(1.5)) < 1e-8);
}

TEST_CASE("sigma_n averages: norm bounds and pythagoras") {
  Fixture fx(build_petersen());
  const int q = fx.g.q;
  PathKernel K = random_kernel(fx.space.index(1), 77);
  double base = std::sqrt(inner_h(fx.g, K, K).real());
  CHECK(sigma_n_average(fx.space, K, 1).shells.size() == 1);
  for (int n : {2, 4, 8}) {
    GradedKernel avg = sigma_n_average(fx.space, K, n);
    CHECK(int(avg.shells.size()) == n);  // distinct shells k, k+2, ...
    double norm = avg.norm_h(fx.g);
    CHECK(norm <= std::sqrt(double(q + 1) / q) * base * (1 + 1e-12));
    // pythagoras: || (1/n) sum M*^j K || <= n^{-1/2} max ||M*^j K||
    double maxcomp = 0;
    PathKernel cur = K;
    for (int j = 0; j < n; ++j) {
      maxcomp = std::max(maxcomp, std::sqrt(inner_h(fx.g, cur, cur).real()));
      if (j + 1 < n) cur = apply_Mstar(fx.space, cur);
    }
    CHECK(norm <= maxcomp / std::sqrt(double(n)) + 1e-12);
    // sup-norm growth envelope
    double sup = 0;
    for (auto& [kk, comp] : avg.shells) sup = std::max(sup, comp.sup_norm());
    CHECK(sup <= std::pow(double(q), n) * K.sup_norm() + 1e-12);
  }
}

TEST_CASE("folding: indicators, adjacency, row sums") {
  Fixture fx(build_petersen());
  Eigen::MatrixXcd I0 = fold_to_graph(fx.space, one_kernel(fx.space.index(0)));
  CHECK((I0 - Eigen::MatrixXcd::Identity(10, 10)).cwiseAbs().maxCoeff() == 0);
  Eigen::MatrixXcd A1 = fold_to_graph(fx.space, one_kernel(fx.space.index(1)));
  CHECK((A1 - adjacency_matrix(fx.g).cast<cplx>()).cwiseAbs().maxCoeff() == 0);
  Eigen::MatrixXcd A2 = fold_to_graph(fx.space, one_kernel(fx.space.index(2)));
  for (int x = 0; x < 10; ++x)
    CHECK(std::abs(A2.row(x).sum() - cplx(6.0, 0)) < 1e-14);
}

TEST_CASE("normalized Hilbert-Schmidt norm against the H norm") {
  Fixture hw(build_heawood());
  GeometryProfile geo = geometry_profile(hw.g);
  GradedKernel K;
  K.add(random_kernel(hw.space.index(1), 500));
  auto cmp = compare_hsn(hw.space, geo, K);
  CHECK(cmp.discrepancy < 1e-12);

  Fixture k4(build_complete(4));
  GeometryProfile geo4 = geometry_profile(k4.g);
  GradedKernel K4;
  K4.add(one_kernel(k4.space.index(1)));
  auto cmp4 = compare_hsn(k4.space, geo4, K4);
  CHECK(cmp4.discrepancy <= cmp4.bound + 1e-12);
  CHECK(cmp4.bound == doctest::Approx(16.0));

  GradedKernel Z;
  Z.add(zero_kernel(k4.space.index(1)));
  auto cmpz = compare_hsn(k4.space, geo4, Z);
  CHECK(cmpz.hsn_sq == 0.0);
  CHECK(cmpz.h_norm_sq == 0.0);

  // shells above the injectivity radius can genuinely disagree
  Fixture pet(build_petersen());
  GeometryProfile geop = geometry_profile(pet.g);
  GradedKernel K5;
  K5.add(one_kernel(pet.space.index(5)));  // girth-length paths fold together
  auto cmp5 = compare_hsn(pet.space, geop, K5);
  CHECK(cmp5.discrepancy > 1e-6);
  CHECK(cmp5.discrepancy <= cmp5.bound + 1e-12);
}

TEST_CASE("pythagoras for distinct shells") {
  Fixture fx(build_petersen());
  std::vector<PathKernel> ks;
  double maxnorm = 0;
  GradedKernel sum;
  const int n = 3;
  for (int k : {0, 1, 2}) {
    PathKernel K = random_kernel(fx.space.index(k), 600 + k);
    K.values /= double(n);
    sum.add(K);
    K.values *= double(n);
    maxnorm = std::max(maxnorm, std::sqrt(inner_h(fx.g, K, K).real()));
  }
  CHECK(sum.norm_h(fx.g) <= maxnorm / std::sqrt(double(n)) + 1e-12);
}
