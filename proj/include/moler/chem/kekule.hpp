#pragma once

#include <functional>
#include <string>
#include <vector>

#include "moler/chem/canon.hpp"
#include "moler/chem/labeling.hpp"
#include "moler/chem/match.hpp"
#include "moler/chem/molgraph.hpp"
#include "moler/chem/rings.hpp"

namespace moler {

/// The part of a graph whose bond orders may be permuted between Kekule
/// structures: atoms with exactly one ring double bond whose partner
/// satisfies the same, and the non-triple ring bonds joining them. Any two
/// Kekule structures of one molecule share this subsystem and differ only by
/// which of its bonds are double.
struct ConjugatedSystem {
  std::vector<char> atom;
  std::vector<char> bond;
};

inline constexpr int kConjugatedLabel = 4;

inline ConjugatedSystem conjugated_system(const MolGraph& mol, const RingInfo& rings) {
  int n = mol.num_atoms();
  std::vector<int> ring_doubles(n, 0), partner(n, -1);
  std::vector<char> ring_triple(n, 0);
  for (int id = 0; id < mol.num_bonds(); ++id) {
    if (!rings.ring_bond[id]) continue;
    const auto& b = mol.bond(id);
    if (b.order == BondOrder::Double) {
      ++ring_doubles[b.a];
      ++ring_doubles[b.b];
      partner[b.a] = b.b;
      partner[b.b] = b.a;
    } else if (b.order == BondOrder::Triple) {
      ring_triple[b.a] = ring_triple[b.b] = 1;
    }
  }
  auto candidate = [&](int v) { return ring_doubles[v] == 1 && !ring_triple[v]; };
  ConjugatedSystem cs;
  cs.atom.assign(n, 0);
  cs.bond.assign(mol.num_bonds(), 0);
  for (int v = 0; v < n; ++v) cs.atom[v] = candidate(v) && candidate(partner[v]);
  for (int id = 0; id < mol.num_bonds(); ++id) {
    const auto& b = mol.bond(id);
    cs.bond[id] = rings.ring_bond[id] && b.order != BondOrder::Triple &&
                  cs.atom[b.a] && cs.atom[b.b];
  }
  return cs;
}

/// Per-bond labels that ignore the Kekule assignment: conjugated bonds get
/// kConjugatedLabel, others their order.
inline std::vector<int> kekule_agnostic_labels(const MolGraph& mol) {
  auto cs = conjugated_system(mol, perceive_rings(mol));
  std::vector<int> labels(mol.num_bonds());
  for (int id = 0; id < mol.num_bonds(); ++id)
    labels[id] = cs.bond[id] ? kConjugatedLabel : order_value(mol.bond(id).order);
  return labels;
}

/// Re-kekulizes the conjugated subsystem canonically, so every Kekule
/// structure of a molecule maps to isomorphic graphs. Atom indices are kept.
inline MolGraph normalize_kekule(const MolGraph& mol) {
  auto rings = perceive_rings(mol);
  auto cs = conjugated_system(mol, rings);
  bool any = false;
  for (char c : cs.atom) any |= c != 0;
  if (!any) return mol;
  int n = mol.num_atoms();
  LabeledGraph g;
  g.atom_keys.resize(n);
  g.adj.resize(n);
  for (int v = 0; v < n; ++v) {
    const auto& a = mol.atom(v);
    g.atom_keys[v] = {a.element, a.formal_charge, a.isotope.value_or(-1), mol.degree(v),
                      cs.atom[v]};
  }
  for (int id = 0; id < mol.num_bonds(); ++id) {
    const auto& b = mol.bond(id);
    g.add_edge(b.a, b.b, cs.bond[id] ? kConjugatedLabel : order_value(b.order));
  }
  auto lab = canonical_labeling(g);
  std::vector<int> visit(n);
  for (int v = 0; v < n; ++v) visit[lab[v]] = v;
  std::vector<std::vector<int>> nbrs(n);
  for (int id = 0; id < mol.num_bonds(); ++id)
    if (cs.bond[id]) {
      nbrs[mol.bond(id).a].push_back(mol.bond(id).b);
      nbrs[mol.bond(id).b].push_back(mol.bond(id).a);
    }
  for (auto& list : nbrs)
    std::sort(list.begin(), list.end(), [&](int x, int y) { return lab[x] < lab[y]; });
  std::vector<int> mate(n, -1);
  if (!perfect_matching(mate, nbrs, cs.atom, visit))
    throw GraphError("conjugated system has no Kekule structure");
  MolGraph out(mol.table_ptr());
  for (const auto& a : mol.atoms()) out.add_atom(a);
  for (int id = 0; id < mol.num_bonds(); ++id) {
    const auto& b = mol.bond(id);
    BondOrder o = b.order;
    if (cs.bond[id]) o = mate[b.a] == b.b ? BondOrder::Double : BondOrder::Single;
    out.add_bond(b.a, b.b, o);
  }
  return out;
}

/// Identity of a molecule up to atom order and Kekule structure.
inline std::string molecule_key(const MolGraph& mol) {
  return write_smiles(normalize_kekule(mol));
}

/// Containment that also accepts the needle in another Kekule structure:
/// conjugated bonds of either graph match each other regardless of order.
inline bool contains_kekule_agnostic(const MolGraph& haystack, const MolGraph& needle) {
  if (needle.empty()) return true;
  if (contains_subgraph(haystack, needle)) return true;
  auto hl = kekule_agnostic_labels(haystack);
  auto nl = kekule_agnostic_labels(needle);
  return find_embedding(haystack, needle, {}, MatchOptions{&hl, &nl}).has_value();
}

inline bool same_molecule(const MolGraph& a, const MolGraph& b) {
  return a.num_atoms() == b.num_atoms() && a.num_bonds() == b.num_bonds() &&
         molecule_key(a) == molecule_key(b);
}

/// Atoms on a six-membered conjugated ring that alternates in at least one
/// Kekule structure (the rest of the conjugated system admitting a perfect
/// matching). This is the library's stand-in for aromaticity.
inline std::vector<char> aromatic_atoms(const MolGraph& mol, const RingInfo& rings) {
  int n = mol.num_atoms();
  auto cs = conjugated_system(mol, rings);
  std::vector<char> flag(n, 0);
  std::vector<std::vector<int>> nbrs(n);
  for (int id = 0; id < mol.num_bonds(); ++id)
    if (cs.bond[id]) {
      nbrs[mol.bond(id).a].push_back(mol.bond(id).b);
      nbrs[mol.bond(id).b].push_back(mol.bond(id).a);
    }
  std::vector<int> visit(n);
  for (int v = 0; v < n; ++v) visit[v] = v;
  std::vector<int> path;
  std::vector<char> on(n, 0);
  auto rest_matchable = [&]() {
    std::vector<int> mate(n, -1);
    std::vector<char> need(cs.atom);
    for (int v : path) need[v] = 0;
    std::vector<std::vector<int>> sub(n);
    for (int v = 0; v < n; ++v)
      if (need[v])
        for (int u : nbrs[v])
          if (need[u]) sub[v].push_back(u);
    return perfect_matching(mate, sub, need, visit);
  };
  std::function<void(int, int)> dfs = [&](int start, int v) {
    for (int u : nbrs[v]) {
      if (u == start && path.size() == 6) {
        bool fresh = false;
        for (int a : path) fresh |= !flag[a];
        if (fresh && rest_matchable())
          for (int a : path) flag[a] = 1;
        continue;
      }
      if (u <= start || on[u] || path.size() >= 6) continue;
      on[u] = 1;
      path.push_back(u);
      dfs(start, u);
      path.pop_back();
      on[u] = 0;
    }
  };
  for (int s = 0; s < n; ++s) {
    if (!cs.atom[s]) continue;
    path = {s};
    on[s] = 1;
    dfs(s, s);
    on[s] = 0;
  }
  return flag;
}

inline std::vector<char> aromatic_atoms(const MolGraph& mol) {
  return aromatic_atoms(mol, perceive_rings(mol));
}

}  // namespace moler
