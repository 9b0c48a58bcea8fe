#pragma once

#include <algorithm>
#include <map>
#include <numeric>
#include <utility>
#include <vector>

namespace moler {

/// Vertex- and edge-labelled graph used for canonical labelling, independent
/// of MolGraph so the SMILES parser can label graphs with aromatic bonds.
struct LabeledGraph {
  std::vector<std::vector<int>> atom_keys;              // per vertex invariant
  std::vector<std::vector<std::pair<int, int>>> adj;    // (neighbour, label)

  int size() const { return static_cast<int>(atom_keys.size()); }
  void add_edge(int a, int b, int label) {
    adj[a].push_back({b, label});
    adj[b].push_back({a, label});
  }
};

namespace detail {

template <class Key>
std::vector<int> dense_ranks(const std::vector<Key>& keys) {
  int n = static_cast<int>(keys.size());
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](int a, int b) { return keys[a] < keys[b]; });
  std::vector<int> cls(n, 0);
  int c = 0;
  for (int k = 0; k < n; ++k) {
    if (k > 0 && keys[idx[k]] != keys[idx[k - 1]]) ++c;
    cls[idx[k]] = c;
  }
  return cls;
}

inline int count_classes(const std::vector<int>& cls) {
  return cls.empty() ? 0 : *std::max_element(cls.begin(), cls.end()) + 1;
}

/// Equitable refinement: splits classes by the multiset of (edge label,
/// neighbour class) until stable. Class order is preserved, so the result is
/// isomorphism-invariant given an invariant seed.
inline std::vector<int> refine(const LabeledGraph& g, std::vector<int> cls) {
  int n = g.size();
  int k = count_classes(cls);
  std::vector<std::vector<long long>> keys(n);
  while (true) {
    for (int v = 0; v < n; ++v) {
      auto& key = keys[v];
      key.clear();
      key.push_back(cls[v]);
      for (auto [u, label] : g.adj[v])
        key.push_back(static_cast<long long>(label) * (n + 1) + cls[u]);
      std::sort(key.begin() + 1, key.end());
    }
    auto next = dense_ranks(keys);
    int nk = count_classes(next);
    cls = std::move(next);
    if (nk == k) return cls;
    k = nk;
  }
}

struct UnionFind {
  std::vector<int> p;
  explicit UnionFind(int n) : p(n) { std::iota(p.begin(), p.end(), 0); }
  int find(int x) { return p[x] == x ? x : p[x] = find(p[x]); }
  void unite(int a, int b) { p[find(a)] = find(b); }
};

// Individualization-refinement search for the discrete partition with the
// smallest certificate. Automorphisms discovered from equal certificates
// prune orbit-equivalent branches.
class LabelingSearch {
 public:
  static constexpr int kLeafCap = 20000;

  explicit LabelingSearch(const LabeledGraph& g) : g_(g) {}

  std::vector<int> run() {
    int n = g_.size();
    if (n == 0) return {};
    auto cls = refine(g_, dense_ranks(g_.atom_keys));
    std::vector<int> prefix;
    search(cls, prefix);
    return best_labels_;
  }

 private:
  using Cert = std::vector<long long>;

  Cert certificate(const std::vector<int>& lab) const {
    int n = g_.size();
    std::vector<int> inv(n);
    for (int v = 0; v < n; ++v) inv[lab[v]] = v;
    Cert c;
    for (int r = 0; r < n; ++r) {
      int v = inv[r];
      c.push_back(-1);
      c.push_back(seed_[v]);
      std::vector<long long> row;
      for (auto [u, label] : g_.adj[v])
        row.push_back(static_cast<long long>(lab[u]) * 16 + label);
      std::sort(row.begin(), row.end());
      c.insert(c.end(), row.begin(), row.end());
    }
    return c;
  }

  void search(const std::vector<int>& cls, std::vector<int>& prefix) {
    if (leaves_ >= kLeafCap) return;
    int n = g_.size();
    if (seed_.empty()) seed_ = dense_ranks(g_.atom_keys);
    int k = count_classes(cls);
    if (k == n) {
      ++leaves_;
      auto cert = certificate(cls);
      auto [it, inserted] = seen_.try_emplace(cert, cls);
      if (!inserted) {
        // Same certificate: vertex with label r here maps to label r there.
        std::vector<int> inv(n), perm(n);
        for (int v = 0; v < n; ++v) inv[cls[v]] = v;
        for (int v = 0; v < n; ++v) perm[v] = inv[it->second[v]];
        autos_.push_back(std::move(perm));
      }
      if (best_labels_.empty() || cert < best_cert_) {
        best_cert_ = std::move(cert);
        best_labels_ = cls;
      }
      return;
    }
    std::vector<int> size(k, 0);
    for (int c : cls) ++size[c];
    int target = 0;
    while (size[target] == 1) ++target;
    std::vector<int> cell;
    for (int v = 0; v < n; ++v)
      if (cls[v] == target) cell.push_back(v);
    std::vector<int> explored;
    for (int x : cell) {
      if (leaves_ >= kLeafCap) return;
      UnionFind uf(n);
      for (const auto& g : autos_) {
        bool fixes = std::all_of(prefix.begin(), prefix.end(),
                                 [&](int p) { return g[p] == p; });
        if (!fixes) continue;
        for (int v = 0; v < n; ++v) uf.unite(v, g[v]);
      }
      bool redundant = std::any_of(explored.begin(), explored.end(),
                                   [&](int y) { return uf.find(x) == uf.find(y); });
      if (redundant) continue;
      explored.push_back(x);
      std::vector<int> split(cls);
      for (int v = 0; v < n; ++v)
        if (split[v] > target || (split[v] == target && v != x)) ++split[v];
      prefix.push_back(x);
      search(refine(g_, std::move(split)), prefix);
      prefix.pop_back();
    }
  }

  const LabeledGraph& g_;
  std::vector<int> seed_;
  Cert best_cert_;
  std::vector<int> best_labels_;
  std::map<Cert, std::vector<int>> seen_;
  std::vector<std::vector<int>> autos_;
  int leaves_ = 0;
};

}  // namespace detail

/// Perfect matching of the vertices flagged in `need` using edges `nbrs`
/// (most-constrained vertex first, ties and neighbour trials in `visit`
/// order). Neighbour lists should already be sorted in `visit` order.
/// `mate` receives the partner of every matched vertex.
inline bool perfect_matching(std::vector<int>& mate,
                             const std::vector<std::vector<int>>& nbrs,
                             const std::vector<char>& need,
                             const std::vector<int>& visit) {
  int best = -1;
  int best_options = 1 << 30;
  for (int v : visit) {
    if (!need[v] || mate[v] >= 0) continue;
    int options = 0;
    for (int u : nbrs[v])
      if (mate[u] < 0) ++options;
    if (options < best_options) {
      best_options = options;
      best = v;
    }
  }
  if (best < 0) return true;
  if (best_options == 0) return false;
  for (int u : nbrs[best]) {
    if (mate[u] >= 0) continue;
    mate[best] = u;
    mate[u] = best;
    if (perfect_matching(mate, nbrs, need, visit)) return true;
    mate[best] = mate[u] = -1;
  }
  return false;
}

/// Canonical labelling: a permutation lab (vertex -> 0..n-1) such that
/// isomorphic labelled graphs receive identical relabelled graphs.
inline std::vector<int> canonical_labeling(const LabeledGraph& g) {
  return detail::LabelingSearch(g).run();
}

/// Refinement classes before any individualization.
inline std::vector<int> refinement_classes(const LabeledGraph& g) {
  return detail::refine(g, detail::dense_ranks(g.atom_keys));
}

}  // namespace moler
