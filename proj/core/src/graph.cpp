#include "qelab/graph.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <queue>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace qelab {

bool RegularGraph::has_edge(int u, int v) const {
  const auto& a = adj[u];
  return std::binary_search(a.begin(), a.end(), v);
}

int BondTable::bond_between(int x, int y) const {
  for (int e : out[x])
    if (terminus[e] == y) return e;
  return -1;
}

std::vector<int> BondTable::successors(int e) const {
  std::vector<int> s;
  s.reserve(q);
  for (int c : out[terminus[e]])
    if (c != rev[e]) s.push_back(c);
  return s;
}

std::vector<int> BondTable::predecessors(int e) const {
  std::vector<int> s;
  s.reserve(q);
  for (int c : out[origin[e]])
    if (c != e) s.push_back(rev[c]);
  return s;
}

BondTable make_bond_table(const RegularGraph& g,
                          const std::vector<int>& edge_labels) {
  BondTable b;
  b.n = g.n;
  b.q = g.q;
  b.out.resize(g.n);
  // one bond per ordered adjacent pair, grouped by origin
  for (int x = 0; x < g.n; ++x)
    for (int y : g.adj[x]) {
      int e = static_cast<int>(b.origin.size());
      b.origin.push_back(x);
      b.terminus.push_back(y);
      b.out[x].push_back(e);
    }
  b.rev.assign(b.origin.size(), -1);
  for (int e = 0; e < b.bond_count(); ++e) {
    if (b.rev[e] >= 0) continue;
    int r = b.bond_between(b.terminus[e], b.origin[e]);
    b.rev[e] = r;
    b.rev[r] = e;
  }
  if (!edge_labels.empty()) {
    if (static_cast<int>(edge_labels.size()) != b.bond_count())
      throw std::invalid_argument("label table size must equal bond count");
    b.label = edge_labels;
    for (int e = 0; e < b.bond_count(); ++e)
      if (b.label[e] != b.label[b.rev[e]])
        throw std::invalid_argument("labels must be orientation independent");
    for (int x = 0; x < g.n; ++x) {
      std::vector<bool> seen(g.q + 1, false);
      for (int e : b.out[x]) {
        int c = b.label[e];
        if (c < 0 || c > g.q || seen[c])
          throw std::invalid_argument("each vertex needs one bond per label");
        seen[c] = true;
      }
    }
  }
  return b;
}

namespace {

// Ball of radius r around x together with the number of induced edges;
// the induced ball is connected, so it is acyclic iff edges == vertices-1.
int injectivity_radius(const RegularGraph& g, int x) {
  std::vector<int> dist(g.n, -1);
  std::vector<int> ball{x};
  dist[x] = 0;
  std::size_t head = 0;
  int rho = 0;
  for (int r = 1; r <= g.n; ++r) {
    std::size_t layer_end = ball.size();
    for (; head < layer_end; ++head)
      for (int v : g.adj[ball[head]])
        if (dist[v] < 0) {
          dist[v] = r;
          ball.push_back(v);
        }
    long edges = 0;
    for (int u : ball)
      for (int v : g.adj[u])
        if (dist[v] >= 0 && v > u) ++edges;
    if (edges != static_cast<long>(ball.size()) - 1) break;
    rho = r;
  }
  return rho;
}

// Shortest cycle detected by BFS from the root; the minimum over all roots
// is the girth.
int shortest_cycle_through(const RegularGraph& g, int root) {
  std::vector<int> dist(g.n, -1), parent(g.n, -1);
  std::queue<int> bfs;
  dist[root] = 0;
  bfs.push(root);
  int best = std::numeric_limits<int>::max();
  while (!bfs.empty()) {
    int u = bfs.front();
    bfs.pop();
    for (int v : g.adj[u]) {
      if (dist[v] < 0) {
        dist[v] = dist[u] + 1;
        parent[v] = u;
        bfs.push(v);
      } else if (parent[u] != v) {
        best = std::min(best, dist[u] + dist[v] + 1);
      }
    }
  }
  return best;
}

}  // namespace

int GeometryProfile::bad_count(int R) const {
  int c = 0;
  for (int r : rho)
    if (r <= R) ++c;
  return c;
}

int GeometryProfile::min_rho() const {
  return *std::min_element(rho.begin(), rho.end());
}

GeometryProfile geometry_profile(const RegularGraph& g) {
  GeometryProfile p;
  p.rho.resize(g.n);
  for (int x = 0; x < g.n; ++x) p.rho[x] = injectivity_radius(g, x);
  int girth = std::numeric_limits<int>::max();
  for (int x = 0; x < g.n; ++x)
    girth = std::min(girth, shortest_cycle_through(g, x));
  p.girth = girth;
  return p;
}

namespace {

RegularGraph from_edges(int n, const std::vector<std::pair<int, int>>& edges) {
  RegularGraph g;
  g.n = n;
  g.adj.resize(n);
  for (auto [u, v] : edges) {
    g.adj[u].push_back(v);
    g.adj[v].push_back(u);
  }
  for (auto& a : g.adj) std::sort(a.begin(), a.end());
  g.q = static_cast<int>(g.adj[0].size()) - 1;
  validate_graph(g);
  return g;
}

bool is_connected(const std::vector<std::vector<int>>& adj) {
  int n = static_cast<int>(adj.size());
  std::vector<char> seen(n, 0);
  std::queue<int> bfs;
  bfs.push(0);
  seen[0] = 1;
  int count = 1;
  while (!bfs.empty()) {
    int u = bfs.front();
    bfs.pop();
    for (int v : adj[u])
      if (!seen[v]) {
        seen[v] = 1;
        ++count;
        bfs.push(v);
      }
  }
  return count == n;
}

}  // namespace

void validate_graph(const RegularGraph& g) {
  if (g.n <= 0) throw std::invalid_argument("empty graph");
  for (int x = 0; x < g.n; ++x) {
    if (static_cast<int>(g.adj[x].size()) != g.q + 1)
      throw std::invalid_argument("graph is not regular of degree q+1");
    for (std::size_t i = 0; i < g.adj[x].size(); ++i) {
      int y = g.adj[x][i];
      if (y == x) throw std::invalid_argument("self-loop");
      if (i > 0 && g.adj[x][i - 1] == y)
        throw std::invalid_argument("multi-edge");
    }
  }
  if (!is_connected(g.adj)) throw std::invalid_argument("graph is disconnected");
}

RegularGraph build_petersen() {
  std::vector<std::pair<int, int>> e;
  for (int i = 0; i < 5; ++i) {
    e.emplace_back(i, (i + 1) % 5);        // outer 5-cycle
    e.emplace_back(5 + i, 5 + (i + 2) % 5);  // inner pentagram
    e.emplace_back(i, 5 + i);              // spokes
  }
  return from_edges(10, e);
}

RegularGraph build_heawood() {
  // incidence graph of the Fano plane, LCF [5,-5]^7 on a 14-cycle
  std::vector<std::pair<int, int>> e;
  for (int i = 0; i < 14; ++i) e.emplace_back(i, (i + 1) % 14);
  for (int i = 0; i < 14; i += 2) e.emplace_back(i, (i + 5) % 14);
  return from_edges(14, e);
}

RegularGraph build_complete(int k) {
  if (k < 3) throw std::invalid_argument("complete(k) needs k >= 3");
  std::vector<std::pair<int, int>> e;
  for (int u = 0; u < k; ++u)
    for (int v = u + 1; v < k; ++v) e.emplace_back(u, v);
  return from_edges(k, e);
}

RegularGraph build_cycle(int n) {
  if (n < 3) throw std::invalid_argument("cycle(n) needs n >= 3");
  std::vector<std::pair<int, int>> e;
  for (int i = 0; i < n; ++i) e.emplace_back(i, (i + 1) % n);
  return from_edges(n, e);
}

RegularGraph build_named(const std::string& name) {
  if (name == "petersen") return build_petersen();
  if (name == "heawood") return build_heawood();
  auto paren = name.find('(');
  if (paren != std::string::npos && name.back() == ')') {
    std::string kind = name.substr(0, paren);
    int arg = std::stoi(name.substr(paren + 1, name.size() - paren - 2));
    if (kind == "complete") return build_complete(arg);
    if (kind == "cycle") return build_cycle(arg);
  }
  throw std::invalid_argument("unknown named graph: " + name);
}

RegularGraph random_regular(int n, int degree, std::uint64_t seed,
                            RejectionStats* stats) {
  if (static_cast<long>(n) * degree % 2 != 0)
    throw std::invalid_argument("n*degree must be even");
  if (n <= degree) throw std::invalid_argument("need n > degree");
  std::mt19937_64 rng(seed);
  RejectionStats local;
  const int cap = 10000;
  for (int attempt = 0; attempt < cap; ++attempt) {
    std::vector<int> stubs(static_cast<std::size_t>(n) * degree);
    for (std::size_t i = 0; i < stubs.size(); ++i)
      stubs[i] = static_cast<int>(i) / degree;
    std::shuffle(stubs.begin(), stubs.end(), rng);
    std::vector<std::vector<int>> adj(n);
    bool ok = true;
    std::set<std::pair<int, int>> used;
    for (std::size_t i = 0; i + 1 < stubs.size() && ok; i += 2) {
      int u = stubs[i], v = stubs[i + 1];
      if (u == v) ok = false;
      else {
        auto key = std::minmax(u, v);
        if (!used.insert({key.first, key.second}).second) ok = false;
      }
      if (ok) {
        adj[u].push_back(v);
        adj[v].push_back(u);
      }
    }
    if (!ok) {
      ++local.pair_attempts;
      continue;
    }
    if (!is_connected(adj)) {
      ++local.connectivity_retries;
      continue;
    }
    RegularGraph g;
    g.n = n;
    g.q = degree - 1;
    g.adj = std::move(adj);
    for (auto& a : g.adj) std::sort(a.begin(), a.end());
    validate_graph(g);
    if (stats) *stats = local;
    return g;
  }
  throw std::runtime_error(
      "random_regular: rejection budget exhausted after " +
      std::to_string(local.pair_attempts) + " pairing and " +
      std::to_string(local.connectivity_retries) + " connectivity rejections");
}

std::pair<RegularGraph, BondTable> random_labelled_regular(
    int n, int q, std::uint64_t seed, RejectionStats* stats) {
  if (n % 2 != 0) throw std::invalid_argument("n must be even");
  if (n < q + 2) throw std::invalid_argument("n too small for degree q+1");
  std::mt19937_64 rng(seed);
  RejectionStats local;
  const int cap = 10000;
  for (int attempt = 0; attempt < cap; ++attempt) {
    std::set<std::pair<int, int>> used;
    // matching j pairs up a shuffled vertex list; label j rides along
    std::vector<std::vector<std::pair<int, int>>> matchings;
    bool ok = true;
    for (int j = 0; j <= q && ok; ++j) {
      std::vector<int> order(n);
      std::iota(order.begin(), order.end(), 0);
      std::shuffle(order.begin(), order.end(), rng);
      std::vector<std::pair<int, int>> m;
      for (int i = 0; i < n; i += 2) {
        auto key = std::minmax(order[i], order[i + 1]);
        if (!used.insert({key.first, key.second}).second) {
          ok = false;
          break;
        }
        m.emplace_back(order[i], order[i + 1]);
      }
      matchings.push_back(std::move(m));
    }
    if (!ok) {
      ++local.pair_attempts;
      continue;
    }
    std::vector<std::vector<int>> adj(n);
    for (auto& m : matchings)
      for (auto [u, v] : m) {
        adj[u].push_back(v);
        adj[v].push_back(u);
      }
    if (!is_connected(adj)) {
      ++local.connectivity_retries;
      continue;
    }
    RegularGraph g;
    g.n = n;
    g.q = q;
    g.adj = std::move(adj);
    for (auto& a : g.adj) std::sort(a.begin(), a.end());
    validate_graph(g);
    // assign labels bond by bond
    BondTable b = make_bond_table(g);
    std::vector<int> labels(b.bond_count(), -1);
    for (int j = 0; j <= q; ++j)
      for (auto [u, v] : matchings[j]) {
        int e = b.bond_between(u, v);
        labels[e] = j;
        labels[b.rev[e]] = j;
      }
    b = make_bond_table(g, labels);
    if (stats) *stats = local;
    return {std::move(g), std::move(b)};
  }
  throw std::runtime_error(
      "random_labelled_regular: rejection budget exhausted after " +
      std::to_string(local.pair_attempts) + " matching and " +
      std::to_string(local.connectivity_retries) + " connectivity rejections");
}

double sphere_size(int q, int r) {
  if (r == 0) return 1.0;
  return double(q + 1) * std::pow(double(q), r - 1);
}

double ball_size(int q, int r) {
  double s = 1.0;
  for (int k = 1; k <= r; ++k) s += double(q + 1) * std::pow(double(q), k - 1);
  return s;
}

std::string graph_to_json(const RegularGraph& g, const BondTable* bonds) {
  nlohmann::json j;
  j["n"] = g.n;
  j["q"] = g.q;
  auto edges = nlohmann::json::array();
  auto labels = nlohmann::json::array();
  for (int u = 0; u < g.n; ++u)
    for (int v : g.adj[u])
      if (u < v) {
        edges.push_back({u, v});
        if (bonds && bonds->labelled())
          labels.push_back(bonds->label[bonds->bond_between(u, v)]);
      }
  j["edges"] = edges;
  if (bonds && bonds->labelled()) j["labels"] = labels;
  return j.dump();
}

std::pair<RegularGraph, BondTable> graph_from_json(const std::string& text) {
  auto j = nlohmann::json::parse(text);
  RegularGraph g;
  g.n = j.at("n").get<int>();
  g.q = j.at("q").get<int>();
  g.adj.resize(g.n);
  std::vector<std::pair<int, int>> edges;
  for (const auto& e : j.at("edges")) {
    int u = e[0].get<int>(), v = e[1].get<int>();
    edges.emplace_back(u, v);
    g.adj[u].push_back(v);
    g.adj[v].push_back(u);
  }
  for (auto& a : g.adj) std::sort(a.begin(), a.end());
  validate_graph(g);
  BondTable b;
  if (j.contains("labels")) {
    b = make_bond_table(g);
    std::vector<int> labels(b.bond_count(), -1);
    std::size_t i = 0;
    for (auto [u, v] : edges) {
      int c = j["labels"][i++].get<int>();
      int e = b.bond_between(u, v);
      labels[e] = c;
      labels[b.rev[e]] = c;
    }
    b = make_bond_table(g, labels);
  } else {
    b = make_bond_table(g);
  }
  return {std::move(g), std::move(b)};
}

}  // namespace qelab
