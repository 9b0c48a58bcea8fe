#pragma once

#include <algorithm>
#include <queue>
#include <vector>

#include "moler/chem/molgraph.hpp"

namespace moler {

struct RingInfo {
  std::vector<char> ring_bond;  // per bond: lies on a cycle
  std::vector<char> ring_atom;  // per atom: has a ring bond
  /// Per atom, ascending sizes (3..8) of the minimum-cycle-basis rings it lies on.
  std::vector<std::vector<int>> ring_sizes;
  /// Minimum cycle basis, each cycle as an atom sequence.
  std::vector<std::vector<int>> cycles;

  bool in_ring(int atom) const { return ring_atom[atom] != 0; }
  int num_rings() const { return static_cast<int>(cycles.size()); }
};

inline constexpr int kMinRingSize = 3;
inline constexpr int kMaxRingSize = 8;

namespace detail {

// Bridges via iterative lowlink DFS; a bond is a ring bond iff it is not a
// bridge.
inline std::vector<char> non_bridge_bonds(const MolGraph& mol) {
  int n = mol.num_atoms();
  std::vector<int> disc(n, -1), low(n, 0);
  std::vector<char> ring(mol.num_bonds(), 1);
  int timer = 0;
  struct Frame {
    int v, parent_bond;
    std::size_t next;
  };
  for (int s = 0; s < n; ++s) {
    if (disc[s] >= 0) continue;
    std::vector<Frame> stack{{s, -1, 0}};
    disc[s] = low[s] = timer++;
    while (!stack.empty()) {
      auto& f = stack.back();
      auto inc = mol.incident(f.v);
      if (f.next < inc.size()) {
        int id = inc[f.next++];
        if (id == f.parent_bond) continue;
        int u = mol.bond(id).other(f.v);
        if (disc[u] < 0) {
          disc[u] = low[u] = timer++;
          stack.push_back({u, id, 0});
        } else {
          low[f.v] = std::min(low[f.v], disc[u]);
        }
      } else {
        Frame done = f;
        stack.pop_back();
        if (!stack.empty()) {
          int p = stack.back().v;
          low[p] = std::min(low[p], low[done.v]);
          if (low[done.v] > disc[p]) ring[done.parent_bond] = 0;
        }
      }
    }
  }
  return ring;
}

using BitRow = std::vector<unsigned long long>;

}  // namespace detail

/// Ring bonds, ring atoms and a minimum cycle basis (Horton candidates,
/// GF(2) elimination). Deterministic for a given atom/bond numbering.
inline RingInfo perceive_rings(const MolGraph& mol) {
  RingInfo info;
  int n = mol.num_atoms();
  int m = mol.num_bonds();
  info.ring_bond = detail::non_bridge_bonds(mol);
  info.ring_atom.assign(n, 0);
  info.ring_sizes.assign(n, {});
  for (int b = 0; b < m; ++b)
    if (info.ring_bond[b]) {
      info.ring_atom[mol.bond(b).a] = 1;
      info.ring_atom[mol.bond(b).b] = 1;
    }
  int ring_edges = 0;
  for (char c : info.ring_bond) ring_edges += c;
  if (ring_edges == 0) return info;

  // Cycle rank of the ring subgraph.
  int ring_atoms = 0;
  for (char c : info.ring_atom) ring_atoms += c;
  int components = 0;
  {
    std::vector<char> seen(n, 0);
    for (int s = 0; s < n; ++s) {
      if (!info.ring_atom[s] || seen[s]) continue;
      ++components;
      std::vector<int> st{s};
      seen[s] = 1;
      while (!st.empty()) {
        int v = st.back();
        st.pop_back();
        for (int id : mol.incident(v)) {
          if (!info.ring_bond[id]) continue;
          int u = mol.bond(id).other(v);
          if (!seen[u]) {
            seen[u] = 1;
            st.push_back(u);
          }
        }
      }
    }
  }
  int rank = ring_edges - ring_atoms + components;

  struct Candidate {
    std::vector<int> bonds;  // sorted bond ids
    std::vector<int> atoms;  // cycle order
  };
  std::vector<Candidate> candidates;
  for (int x = 0; x < n; ++x) {
    if (!info.ring_atom[x]) continue;
    std::vector<int> dist(n, -1), parent_bond(n, -1);
    std::queue<int> q;
    dist[x] = 0;
    q.push(x);
    while (!q.empty()) {
      int v = q.front();
      q.pop();
      for (int id : mol.incident(v)) {
        if (!info.ring_bond[id]) continue;
        int u = mol.bond(id).other(v);
        if (dist[u] < 0) {
          dist[u] = dist[v] + 1;
          parent_bond[u] = id;
          q.push(u);
        }
      }
    }
    auto path = [&](int v) {
      std::vector<int> atoms{v};
      std::vector<int> bonds;
      while (v != x) {
        int id = parent_bond[v];
        bonds.push_back(id);
        v = mol.bond(id).other(v);
        atoms.push_back(v);
      }
      return std::pair{atoms, bonds};
    };
    for (int id = 0; id < m; ++id) {
      if (!info.ring_bond[id]) continue;
      int u = mol.bond(id).a, v = mol.bond(id).b;
      if (dist[u] < 0 || dist[v] < 0) continue;
      if (parent_bond[u] == id || parent_bond[v] == id) continue;
      auto [pu, bu] = path(u);
      auto [pv, bv] = path(v);
      // Paths must share only x.
      std::vector<int> su(pu.begin(), pu.end() - 1), sv(pv.begin(), pv.end() - 1);
      std::sort(su.begin(), su.end());
      std::sort(sv.begin(), sv.end());
      std::vector<int> common;
      std::set_intersection(su.begin(), su.end(), sv.begin(), sv.end(),
                            std::back_inserter(common));
      if (!common.empty()) continue;
      Candidate c;
      c.bonds = bu;
      c.bonds.insert(c.bonds.end(), bv.begin(), bv.end());
      c.bonds.push_back(id);
      std::sort(c.bonds.begin(), c.bonds.end());
      // atoms: x ... u, v ... (back to x)
      c.atoms.assign(pu.rbegin(), pu.rend());
      c.atoms.insert(c.atoms.end(), pv.begin(), pv.end() - 1);
      candidates.push_back(std::move(c));
    }
  }
  std::sort(candidates.begin(), candidates.end(),
            [](const Candidate& a, const Candidate& b) {
              if (a.bonds.size() != b.bonds.size())
                return a.bonds.size() < b.bonds.size();
              return a.bonds < b.bonds;
            });
  candidates.erase(std::unique(candidates.begin(), candidates.end(),
                               [](const Candidate& a, const Candidate& b) {
                                 return a.bonds == b.bonds;
                               }),
                   candidates.end());

  int words = (m + 63) / 64;
  std::vector<detail::BitRow> basis;  // reduced rows
  std::vector<int> pivots;
  for (const auto& c : candidates) {
    if (static_cast<int>(info.cycles.size()) == rank) break;
    detail::BitRow row(words, 0);
    for (int b : c.bonds) row[b / 64] |= 1ULL << (b % 64);
    for (std::size_t k = 0; k < basis.size(); ++k)
      if (row[pivots[k] / 64] >> (pivots[k] % 64) & 1ULL)
        for (int w = 0; w < words; ++w) row[w] ^= basis[k][w];
    int pivot = -1;
    for (int w = 0; w < words && pivot < 0; ++w)
      if (row[w]) pivot = w * 64 + __builtin_ctzll(row[w]);
    if (pivot < 0) continue;
    basis.push_back(row);
    pivots.push_back(pivot);
    info.cycles.push_back(c.atoms);
  }
  for (const auto& cyc : info.cycles) {
    int size = static_cast<int>(cyc.size());
    if (size < kMinRingSize || size > kMaxRingSize) continue;
    for (int a : cyc) info.ring_sizes[a].push_back(size);
  }
  for (auto& s : info.ring_sizes) {
    std::sort(s.begin(), s.end());
    s.erase(std::unique(s.begin(), s.end()), s.end());
  }
  return info;
}

}  // namespace moler
