#pragma once

#include <functional>
#include <optional>
#include <utility>
#include <vector>

#include "moler/chem/canon.hpp"
#include "moler/chem/molgraph.hpp"

namespace moler {

namespace detail {

// Backtracking monomorphism search (VF2-style candidate generation from
// mapped neighbours). Atoms must agree on element and formal charge; every
// needle bond must map onto a haystack bond with the same label (the bond
// order unless label arrays are supplied).
struct MatchOptions {
  const std::vector<int>* hay_labels = nullptr;
  const std::vector<int>* needle_labels = nullptr;
  bool isotopes = false;
  // Optional per-atom labels that must agree between matched atoms.
  const std::vector<int>* hay_atom_labels = nullptr;
  const std::vector<int>* needle_atom_labels = nullptr;
};

class Matcher {
 public:
  Matcher(const MolGraph& hay, const MolGraph& needle, MatchOptions opt = {})
      : hay_(hay), needle_(needle), hay_labels_(opt.hay_labels),
        needle_labels_(opt.needle_labels), isotopes_(opt.isotopes),
        hay_atom_labels_(opt.hay_atom_labels), needle_atom_labels_(opt.needle_atom_labels),
        map_(needle.num_atoms(), -1), used_(hay.num_atoms(), 0) {
    plan();
  }

  bool fix(int needle_atom, int hay_atom) {
    if (!compatible(needle_atom, hay_atom) || used_[hay_atom]) return false;
    map_[needle_atom] = hay_atom;
    used_[hay_atom] = 1;
    return bonds_consistent(needle_atom, hay_atom);
  }

  /// Calls `visit` for every embedding until it returns false.
  void run(const std::function<bool(const std::vector<int>&)>& visit) {
    stop_ = false;
    extend(0, visit);
  }

 private:
  void plan() {
    int n = needle_.num_atoms();
    std::vector<char> placed(n, 0);
    parent_.assign(n, -1);
    // BFS order over each component, starting from the highest-degree atom.
    for (int round = 0; round < n; ++round) {
      int seed = -1;
      for (int v = 0; v < n; ++v)
        if (!placed[v] && (seed < 0 || needle_.degree(v) > needle_.degree(seed)))
          seed = v;
      if (seed < 0) break;
      std::vector<int> queue{seed};
      placed[seed] = 1;
      anchor_.push_back(-1);
      for (std::size_t q = 0; q < queue.size(); ++q) {
        int v = queue[q];
        order_.push_back(v);
        if (q > 0) anchor_.push_back(parent_[v]);
        for (int id : needle_.incident(v)) {
          int u = needle_.bond(id).other(v);
          if (placed[u]) continue;
          placed[u] = 1;
          parent_[u] = v;
          queue.push_back(u);
        }
      }
    }
  }

  static int label(const MolGraph& g, const std::vector<int>* labels, int bond) {
    return labels ? (*labels)[bond] : order_value(g.bond(bond).order);
  }

  bool compatible(int nv, int hv) const {
    const auto& a = needle_.atom(nv);
    const auto& b = hay_.atom(hv);
    return a.element == b.element && a.formal_charge == b.formal_charge &&
           (!isotopes_ || a.isotope == b.isotope) && hay_.degree(hv) >= needle_.degree(nv) &&
           (!hay_atom_labels_ || !needle_atom_labels_ ||
            (*hay_atom_labels_)[hv] == (*needle_atom_labels_)[nv]);
  }

  bool bonds_consistent(int nv, int hv) const {
    for (int id : needle_.incident(nv)) {
      const auto& b = needle_.bond(id);
      int nu = b.other(nv);
      int hu = map_[nu];
      if (hu < 0) continue;
      auto hb = hay_.find_bond(hv, hu);
      if (!hb || label(hay_, hay_labels_, *hb) != label(needle_, needle_labels_, id))
        return false;
    }
    return true;
  }

  void extend(std::size_t depth,
              const std::function<bool(const std::vector<int>&)>& visit) {
    if (stop_) return;
    if (depth == order_.size()) {
      if (!visit(map_)) stop_ = true;
      return;
    }
    int nv = order_[depth];
    if (map_[nv] >= 0) {  // pre-fixed
      if (bonds_consistent(nv, map_[nv])) extend(depth + 1, visit);
      return;
    }
    auto try_candidate = [&](int hv) {
      if (used_[hv] || !compatible(nv, hv)) return;
      map_[nv] = hv;
      if (bonds_consistent(nv, hv)) {
        used_[hv] = 1;
        extend(depth + 1, visit);
        used_[hv] = 0;
      }
      map_[nv] = -1;
    };
    int anchor = anchor_[depth];
    if (anchor >= 0 && map_[anchor] >= 0) {
      for (int id : hay_.incident(map_[anchor])) {
        try_candidate(hay_.bond(id).other(map_[anchor]));
        if (stop_) return;
      }
    } else {
      for (int hv = 0; hv < hay_.num_atoms() && !stop_; ++hv) try_candidate(hv);
    }
  }

  const MolGraph& hay_;
  const MolGraph& needle_;
  const std::vector<int>* hay_labels_;
  const std::vector<int>* needle_labels_;
  bool isotopes_;
  const std::vector<int>* hay_atom_labels_;
  const std::vector<int>* needle_atom_labels_;
  std::vector<int> map_;
  std::vector<char> used_;
  std::vector<int> order_, anchor_, parent_;
  bool stop_ = false;
};

}  // namespace detail

using detail::MatchOptions;

/// One embedding of `needle` into `haystack` (needle atom i -> result[i]).
inline std::optional<std::vector<int>> find_embedding(
    const MolGraph& haystack, const MolGraph& needle,
    const std::vector<std::pair<int, int>>& fixed = {}, MatchOptions opt = {}) {
  if (needle.num_atoms() > haystack.num_atoms() ||
      needle.num_bonds() > haystack.num_bonds())
    return std::nullopt;
  detail::Matcher m(haystack, needle, opt);
  for (auto [n, h] : fixed)
    if (!m.fix(n, h)) return std::nullopt;
  std::optional<std::vector<int>> found;
  m.run([&](const std::vector<int>& map) {
    found = map;
    return false;
  });
  return found;
}

/// Edge-preserving subgraph containment; extra haystack bonds between mapped
/// atoms are allowed.
inline bool contains_subgraph(const MolGraph& haystack, const MolGraph& needle) {
  if (needle.empty()) return true;
  return find_embedding(haystack, needle).has_value();
}

/// Calls `visit` on every embedding until it returns false.
inline void for_each_embedding(
    const MolGraph& haystack, const MolGraph& needle,
    const std::function<bool(const std::vector<int>&)>& visit, MatchOptions opt = {}) {
  if (needle.num_atoms() > haystack.num_atoms()) return;
  detail::Matcher m(haystack, needle, opt);
  m.run(visit);
}

/// An isomorphism a -> b honouring the fixed pairs, if one exists.
/// `opt` labels refer to `b` as haystack and `a` as needle.
inline std::optional<std::vector<int>> find_isomorphism(
    const MolGraph& a, const MolGraph& b,
    const std::vector<std::pair<int, int>>& fixed = {}, MatchOptions opt = {}) {
  if (a.num_atoms() != b.num_atoms() || a.num_bonds() != b.num_bonds())
    return std::nullopt;
  return find_embedding(b, a, fixed, opt);
}

inline bool are_isomorphic(const MolGraph& a, const MolGraph& b) {
  if (a.num_atoms() != b.num_atoms() || a.num_bonds() != b.num_bonds())
    return false;
  return write_smiles(a) == write_smiles(b);
}

}  // namespace moler
