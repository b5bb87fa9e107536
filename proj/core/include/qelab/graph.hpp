#ifndef QELAB_GRAPH_HPP
#define QELAB_GRAPH_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace qelab {

/// Finite connected (q+1)-regular simple graph. Vertices are 0..n-1,
/// neighbor lists are sorted.
struct RegularGraph {
  int n = 0;
  int q = 0;  // degree is q+1
  std::vector<std::vector<int>> adj;

  int degree() const { return q + 1; }
  long edge_count() const { return static_cast<long>(n) * (q + 1) / 2; }
  bool has_edge(int u, int v) const;
};

/// Directed-bond table of a regular graph: 2|E| bonds, reversal involution,
/// per-vertex outgoing bond lists, and an optional edge labelling
/// c : bonds -> {0..q} with c(rev e) = c(e) and, at every vertex, exactly one
/// outgoing bond per label.
struct BondTable {
  int n = 0;
  int q = 0;
  std::vector<int> origin;
  std::vector<int> terminus;
  std::vector<int> rev;
  std::vector<std::vector<int>> out;  // out[x]: outgoing bonds, sorted by terminus
  std::vector<int> label;             // empty when unlabelled

  int bond_count() const { return static_cast<int>(origin.size()); }
  bool labelled() const { return !label.empty(); }
  /// Bond x->y; the graph is simple so it is unique. Returns -1 if absent.
  int bond_between(int x, int y) const;
  /// Successor bonds of e: origin at t(e), reversal excluded. Size q.
  std::vector<int> successors(int e) const;
  /// Predecessor bonds of e: terminus at o(e), reversal excluded. Size q.
  std::vector<int> predecessors(int e) const;
};

BondTable make_bond_table(const RegularGraph& g,
                          const std::vector<int>& edge_labels = {});

/// Girth, per-vertex injectivity radius, and the bad-vertex counting
/// function R -> #{x : rho(x) <= R}.
struct GeometryProfile {
  int girth = 0;
  std::vector<int> rho;
  int bad_count(int R) const;
  int min_rho() const;
  double bad_fraction(int R) const { return double(bad_count(R)) / double(rho.size()); }
};

/// rho(x) = largest r such that the subgraph induced on B(x,r) is acyclic;
/// girth by BFS from every vertex.
GeometryProfile geometry_profile(const RegularGraph& g);

RegularGraph build_petersen();
RegularGraph build_heawood();
RegularGraph build_complete(int k);  // k >= 3 vertices
RegularGraph build_cycle(int n);     // n >= 3 vertices
/// Parse "petersen", "heawood", "complete(k)", "cycle(n)".
RegularGraph build_named(const std::string& name);

struct RejectionStats {
  int pair_attempts = 0;        // stub pairings discarded for loops/multi-edges
  int connectivity_retries = 0; // whole samples discarded as disconnected
};

/// Configuration model with full rejection of loops and multi-edges
/// (retry cap 10000), then rejection of disconnected samples.
/// Deterministic for a fixed seed. Requires n*degree even, n > degree.
RegularGraph random_regular(int n, int degree, std::uint64_t seed,
                            RejectionStats* stats = nullptr);

/// Union of q+1 independent random perfect matchings, matching j carrying
/// label j; duplicate edges and disconnected unions are rejected.
/// Requires n even.
std::pair<RegularGraph, BondTable> random_labelled_regular(
    int n, int q, std::uint64_t seed, RejectionStats* stats = nullptr);

/// tau(r) = (q+1)q^{r-1} for r>=1, tau(0)=1 (sphere cardinality in the tree).
double sphere_size(int q, int r);
/// tau~(r) = 1 + (q+1) sum_{1<=k<=r} q^{k-1} (ball cardinality).
double ball_size(int q, int r);

/// JSON round trip: {n, q, edges:[[u,v],...], labels:[...] optional}.
std::string graph_to_json(const RegularGraph& g, const BondTable* bonds = nullptr);
std::pair<RegularGraph, BondTable> graph_from_json(const std::string& text);

void validate_graph(const RegularGraph& g);  // throws on invariant violation

}  // namespace qelab

#endif
