#pragma once

#include <algorithm>
#include <numeric>
#include <string>
#include <vector>

#include "moler/chem/labeling.hpp"
#include "moler/chem/molgraph.hpp"
#include "moler/chem/rings.hpp"

namespace moler {

/// Result of canonicalization. `order[k]` is the k-th atom written in
/// `smiles`; `rank` is its inverse. Parsing `smiles` yields a graph whose atom
/// k corresponds to `order[k]`.
struct Canonical {
  std::string smiles;
  std::vector<int> rank;
  std::vector<int> order;
};

namespace detail {

inline LabeledGraph labeled_view(const MolGraph& mol) {
  auto rings = perceive_rings(mol);
  LabeledGraph g;
  g.atom_keys.resize(mol.num_atoms());
  g.adj.resize(mol.num_atoms());
  for (int v = 0; v < mol.num_atoms(); ++v) {
    const auto& a = mol.atom(v);
    g.atom_keys[v] = {a.element, a.formal_charge, mol.degree(v), rings.ring_atom[v],
                      a.isotope.value_or(-1)};
  }
  for (const auto& b : mol.bonds()) g.add_edge(b.a, b.b, order_value(b.order));
  return g;
}

inline bool organic_subset(const std::string& s) {
  static const char* const kOrganic[] = {"B", "C", "N", "O", "P",
                                         "S", "F", "Cl", "Br", "I"};
  for (const char* o : kOrganic)
    if (s == o) return true;
  return false;
}

inline void append_atom(const MolGraph& mol, int v, std::string& out) {
  const auto& a = mol.atom(v);
  const auto& sym = mol.symbol(v);
  if (a.formal_charge == 0 && !a.isotope && organic_subset(sym)) {
    out += sym;
    return;
  }
  out += '[';
  if (a.isotope) out += std::to_string(*a.isotope);
  out += sym;
  int h = implicit_hydrogens(mol, v);
  if (h > 0) {
    out += 'H';
    if (h > 1) out += std::to_string(h);
  }
  if (a.formal_charge != 0) {
    out += a.formal_charge > 0 ? '+' : '-';
    int mag = std::abs(a.formal_charge);
    if (mag > 1) out += std::to_string(mag);
  }
  out += ']';
}

inline void append_bond(BondOrder o, std::string& out) {
  if (o == BondOrder::Double) out += '=';
  if (o == BondOrder::Triple) out += '#';
}

inline void append_ring_digit(int d, std::string& out) {
  if (d < 10) {
    out += static_cast<char>('0' + d);
  } else {
    out += '%';
    out += std::to_string(d);
  }
}

/// Writes the connected component containing `start`, visiting neighbours in
/// ascending `priority`. Appends visited atoms to `visit`.
inline std::string write_component(const MolGraph& mol, int start,
                                   const std::vector<int>& priority,
                                   std::vector<int>& visit) {
  int n = mol.num_atoms();
  std::vector<int> pos(n, -1);
  std::vector<int> parent_bond(n, -1);
  std::vector<std::vector<int>> nbrs(n);  // bond ids sorted by neighbour priority
  auto sorted_incident = [&](int v) {
    auto inc = mol.incident(v);
    std::vector<int> ids(inc.begin(), inc.end());
    std::sort(ids.begin(), ids.end(), [&](int x, int y) {
      return priority[mol.bond(x).other(v)] < priority[mol.bond(y).other(v)];
    });
    return ids;
  };
  std::size_t first = visit.size();
  // Pass 1: DFS tree.
  {
    struct Frame {
      int v;
      std::size_t next;
    };
    std::vector<Frame> st{{start, 0}};
    pos[start] = 0;
    visit.push_back(start);
    nbrs[start] = sorted_incident(start);
    while (!st.empty()) {
      auto& f = st.back();
      if (f.next == nbrs[f.v].size()) {
        st.pop_back();
        continue;
      }
      int id = nbrs[f.v][f.next++];
      int u = mol.bond(id).other(f.v);
      if (pos[u] >= 0) continue;
      pos[u] = static_cast<int>(visit.size() - first);
      visit.push_back(u);
      parent_bond[u] = id;
      nbrs[u] = sorted_incident(u);
      st.push_back({u, 0});
    }
  }
  // Ring-closure bonds: every non-tree bond, opened at its earlier endpoint.
  std::vector<std::vector<int>> opens(n), closes(n);
  for (int id = 0; id < mol.num_bonds(); ++id) {
    const auto& b = mol.bond(id);
    if (pos[b.a] < 0 || parent_bond[b.a] == id || parent_bond[b.b] == id) continue;
    int early = pos[b.a] < pos[b.b] ? b.a : b.b;
    opens[early].push_back(id);
    closes[b.other(early)].push_back(id);
  }
  std::vector<int> digit_of(mol.num_bonds(), -1);
  std::vector<char> used(100, 0);

  std::string out;
  auto children = [&](int v) {
    std::vector<int> c;
    for (int id : nbrs[v]) {
      int u = mol.bond(id).other(v);
      if (parent_bond[u] == id) c.push_back(u);
    }
    return c;
  };
  auto emit = [&](int v) {
    append_atom(mol, v, out);
    auto& cl = closes[v];
    std::sort(cl.begin(), cl.end(), [&](int x, int y) {
      return pos[mol.bond(x).other(v)] < pos[mol.bond(y).other(v)];
    });
    std::vector<int> freed;
    for (int id : cl) {
      append_ring_digit(digit_of[id], out);
      freed.push_back(digit_of[id]);
    }
    auto& op = opens[v];
    std::sort(op.begin(), op.end(), [&](int x, int y) {
      return pos[mol.bond(x).other(v)] < pos[mol.bond(y).other(v)];
    });
    for (int id : op) {
      int d = 1;
      while (used[d]) ++d;
      used[d] = 1;
      digit_of[id] = d;
      append_bond(mol.bond(id).order, out);
      append_ring_digit(d, out);
    }
    for (int d : freed) used[d] = 0;
  };
  // Pass 2: write. Explicit stack of (atom, child cursor).
  struct Frame {
    int v;
    std::vector<int> kids;
    std::size_t next;
  };
  emit(start);
  std::vector<Frame> st{{start, children(start), 0}};
  while (!st.empty()) {
    auto& f = st.back();
    if (f.next == f.kids.size()) {
      bool branched = st.size() > 1 && st[st.size() - 2].next < st[st.size() - 2].kids.size();
      st.pop_back();
      if (branched) out += ')';
      continue;
    }
    int u = f.kids[f.next++];
    bool last = f.next == f.kids.size();
    if (!last) out += '(';
    append_bond(mol.bond(parent_bond[u]).order, out);
    emit(u);
    st.push_back({u, children(u), 0});
  }
  return out;
}

}  // namespace detail

/// Morgan-style refinement classes seeded by (element, charge, degree, ring
/// membership, isotope), before any tie-breaking. Dense, isomorphism-invariant.
inline std::vector<int> refine_classes(const MolGraph& mol) {
  return refinement_classes(detail::labeled_view(mol));
}

/// Canonical SMILES plus the canonical atom order. Components are written in
/// order of their lowest canonical label.
inline Canonical canonicalize(const MolGraph& mol) {
  Canonical out;
  if (mol.empty()) return out;
  auto lab = canonical_labeling(detail::labeled_view(mol));
  std::vector<int> starts;
  for (auto& comp : connected_components(mol))
    starts.push_back(*std::min_element(comp.begin(), comp.end(),
                                       [&](int a, int b) { return lab[a] < lab[b]; }));
  std::sort(starts.begin(), starts.end(), [&](int a, int b) { return lab[a] < lab[b]; });
  for (int s : starts) {
    if (!out.smiles.empty()) out.smiles += '.';
    out.smiles += detail::write_component(mol, s, lab, out.order);
  }
  out.rank.assign(mol.num_atoms(), 0);
  for (int k = 0; k < mol.num_atoms(); ++k) out.rank[out.order[k]] = k;
  return out;
}

inline std::vector<int> canonical_ranks(const MolGraph& mol) {
  return canonicalize(mol).rank;
}

inline std::string write_smiles(const MolGraph& mol) {
  return canonicalize(mol).smiles;
}

/// Non-canonical SMILES: traversal follows `priority` (lower first), starting
/// each component at its lowest-priority atom.
inline std::string write_smiles_ordered(const MolGraph& mol,
                                        const std::vector<int>& priority) {
  std::string out;
  std::vector<int> visit;
  std::vector<char> done(mol.num_atoms(), 0);
  for (auto& comp : connected_components(mol)) {
    int start = *std::min_element(comp.begin(), comp.end(), [&](int a, int b) {
      return priority[a] < priority[b];
    });
    if (!out.empty()) out += '.';
    out += detail::write_component(mol, start, priority, visit);
  }
  return out;
}

}  // namespace moler
