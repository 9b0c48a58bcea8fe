#pragma once

#include <algorithm>
#include <cstdint>
#include <memory>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "moler/chem/element.hpp"

namespace moler {

enum class BondOrder : std::uint8_t { Single = 1, Double = 2, Triple = 3 };

inline int order_value(BondOrder o) { return static_cast<int>(o); }
inline BondOrder bond_order_from(int v) {
  if (v < 1 || v > 3) throw std::out_of_range("bond order must be 1..3");
  return static_cast<BondOrder>(v);
}

struct Atom {
  int element = 0;  // index into the owning graph's ElementTable
  int formal_charge = 0;
  std::optional<int> isotope;

  friend bool operator==(const Atom&, const Atom&) = default;
};

struct Bond {
  int a = 0;
  int b = 0;
  BondOrder order = BondOrder::Single;

  int other(int atom) const { return atom == a ? b : a; }
};

class GraphError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class ValenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Simple undirected molecular graph with implicit hydrogens.
///
/// Atoms and bonds are addressed by their insertion index. Adjacency is kept
/// as per-atom lists of incident bond ids.
class MolGraph {
 public:
  MolGraph() : table_(ElementTable::builtin()) {}
  explicit MolGraph(std::shared_ptr<const ElementTable> table)
      : table_(std::move(table)) {}

  int add_atom(Atom atom) {
    if (atom.element < 0 || atom.element >= table_->size())
      throw GraphError("atom element outside the element table");
    atoms_.push_back(atom);
    adjacency_.emplace_back();
    return num_atoms() - 1;
  }

  int add_bond(int a, int b, BondOrder order) {
    if (a == b) throw GraphError("self bond");
    check_atom(a);
    check_atom(b);
    if (find_bond(a, b)) throw GraphError("duplicate bond");
    bonds_.push_back(Bond{a, b, order});
    int id = num_bonds() - 1;
    adjacency_[a].push_back(id);
    adjacency_[b].push_back(id);
    return id;
  }

  int num_atoms() const { return static_cast<int>(atoms_.size()); }
  int num_bonds() const { return static_cast<int>(bonds_.size()); }
  bool empty() const { return atoms_.empty(); }

  const Atom& atom(int i) const { return atoms_.at(i); }
  const Bond& bond(int i) const { return bonds_.at(i); }
  const std::vector<Atom>& atoms() const { return atoms_; }
  const std::vector<Bond>& bonds() const { return bonds_; }

  std::span<const int> incident(int atom) const { return adjacency_.at(atom); }
  int degree(int atom) const {
    return static_cast<int>(adjacency_.at(atom).size());
  }

  std::optional<int> find_bond(int a, int b) const {
    for (int id : adjacency_.at(a))
      if (bonds_[id].other(a) == b) return id;
    return std::nullopt;
  }

  int bond_order_sum(int atom) const {
    int s = 0;
    for (int id : adjacency_.at(atom)) s += order_value(bonds_[id].order);
    return s;
  }

  const ElementTable& table() const { return *table_; }
  const std::shared_ptr<const ElementTable>& table_ptr() const {
    return table_;
  }
  const Element& element_of(int atom) const {
    return (*table_)[atoms_.at(atom).element];
  }
  const std::string& symbol(int atom) const { return element_of(atom).symbol; }

  /// Same atoms in the same order and the same set of bonds; bond insertion
  /// order is irrelevant.
  friend bool operator==(const MolGraph& x, const MolGraph& y) {
    if (x.atoms_ != y.atoms_ || x.bonds_.size() != y.bonds_.size())
      return false;
    for (const auto& b : x.bonds_) {
      auto other = y.find_bond(b.a, b.b);
      if (!other || y.bonds_[*other].order != b.order) return false;
    }
    return true;
  }

 private:
  void check_atom(int a) const {
    if (a < 0 || a >= num_atoms()) throw GraphError("atom index out of range");
  }

  std::shared_ptr<const ElementTable> table_;
  std::vector<Atom> atoms_;
  std::vector<Bond> bonds_;
  std::vector<std::vector<int>> adjacency_;
};

inline int max_valence(const MolGraph& mol, int atom) {
  const auto& a = mol.atom(atom);
  int v = mol.element_of(atom).max_valence(a.formal_charge);
  if (v < 0)
    throw ValenceError("no valence rule for " + mol.symbol(atom) +
                       " with charge " + std::to_string(a.formal_charge));
  return v;
}

/// Max allowed valence minus the incident bond-order sum.
inline int free_valence(const MolGraph& mol, int atom) {
  int fv = max_valence(mol, atom) - mol.bond_order_sum(atom);
  if (fv < 0)
    throw ValenceError("valence exceeded on atom " + std::to_string(atom) +
                       " (" + mol.symbol(atom) + ")");
  return fv;
}

/// Hydrogen count implied by the smallest allowed valence that accommodates
/// the explicit bonds (SMILES organic-subset semantics).
inline int implicit_hydrogens(const MolGraph& mol, int atom) {
  const auto* vals =
      mol.element_of(atom).valences_for(mol.atom(atom).formal_charge);
  if (!vals) return 0;
  int sum = mol.bond_order_sum(atom);
  for (int v : *vals)
    if (v >= sum) return v - sum;
  return 0;
}

inline std::vector<std::vector<int>> connected_components(const MolGraph& mol) {
  std::vector<int> comp(mol.num_atoms(), -1);
  std::vector<std::vector<int>> out;
  for (int s = 0; s < mol.num_atoms(); ++s) {
    if (comp[s] >= 0) continue;
    out.emplace_back();
    std::vector<int> stack{s};
    comp[s] = static_cast<int>(out.size()) - 1;
    while (!stack.empty()) {
      int v = stack.back();
      stack.pop_back();
      out.back().push_back(v);
      for (int id : mol.incident(v)) {
        int u = mol.bond(id).other(v);
        if (comp[u] < 0) {
          comp[u] = comp[s];
          stack.push_back(u);
        }
      }
    }
    std::sort(out.back().begin(), out.back().end());
  }
  return out;
}

inline bool is_connected(const MolGraph& mol) {
  return mol.num_atoms() <= 1 || connected_components(mol).size() == 1;
}

/// Every atom has a valence rule for its charge and its bond-order sum does
/// not exceed the maximum.
inline bool is_valence_valid(const MolGraph& mol) {
  for (int i = 0; i < mol.num_atoms(); ++i) {
    int v = mol.element_of(i).max_valence(mol.atom(i).formal_charge);
    if (v < 0 || mol.bond_order_sum(i) > v) return false;
  }
  return true;
}

/// A terminal molecule: non-empty, connected and valence-valid.
inline bool is_valid_molecule(const MolGraph& mol) {
  return !mol.empty() && is_connected(mol) && is_valence_valid(mol);
}

/// Subgraph induced by `atoms` (in that order). `mapping`, when given, receives
/// the new index of every old atom (or -1).
inline MolGraph induced_subgraph(const MolGraph& mol, std::span<const int> atoms,
                                 std::vector<int>* mapping = nullptr) {
  std::vector<int> map(mol.num_atoms(), -1);
  MolGraph out(mol.table_ptr());
  for (int a : atoms) map[a] = out.add_atom(mol.atom(a));
  for (const auto& b : mol.bonds())
    if (map[b.a] >= 0 && map[b.b] >= 0) out.add_bond(map[b.a], map[b.b], b.order);
  if (mapping) *mapping = std::move(map);
  return out;
}

/// Relabels atoms: atom i of the input becomes atom perm[i] of the output.
inline MolGraph permute_atoms(const MolGraph& mol, std::span<const int> perm) {
  std::vector<int> inverse(mol.num_atoms());
  for (int i = 0; i < mol.num_atoms(); ++i) inverse[perm[i]] = i;
  MolGraph out(mol.table_ptr());
  for (int j = 0; j < mol.num_atoms(); ++j) out.add_atom(mol.atom(inverse[j]));
  for (const auto& b : mol.bonds()) out.add_bond(perm[b.a], perm[b.b], b.order);
  return out;
}

inline double molecular_weight(const MolGraph& mol) {
  double h = mol.table()[mol.table().hydrogen()].atomic_mass;
  double w = 0.0;
  for (int i = 0; i < mol.num_atoms(); ++i)
    w += mol.element_of(i).atomic_mass + h * implicit_hydrogens(mol, i);
  return w;
}

inline int heavy_atom_count(const MolGraph& mol) {
  auto h = mol.table().find("H");
  int n = 0;
  for (const auto& a : mol.atoms())
    if (!h || a.element != *h) ++n;
  return n;
}

/// Cycle rank |E| - |V| + #components.
inline int ring_count(const MolGraph& mol) {
  if (mol.empty()) return 0;
  return mol.num_bonds() - mol.num_atoms() +
         static_cast<int>(connected_components(mol).size());
}

}  // namespace moler
