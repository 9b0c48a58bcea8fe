#pragma once

#include <algorithm>
#include <memory>
#include <optional>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "moler/chem/molgraph.hpp"
#include "moler/motifs/motifs.hpp"
#include "moler/util/hash.hpp"

namespace moler {

struct AtomClass {
  int element = 0;
  int charge = 0;

  friend auto operator<=>(const AtomClass&, const AtomClass&) = default;
};

/// Next-node output classes: atom classes [0, A), motifs [A, A + M), then the
/// end class A + M.
class Alphabet {
 public:
  Alphabet() : vocab_(std::make_shared<MotifVocabulary>()) {}
  Alphabet(std::vector<AtomClass> atoms, std::shared_ptr<const MotifVocabulary> vocab)
      : atoms_(std::move(atoms)), vocab_(std::move(vocab)) {
    std::sort(atoms_.begin(), atoms_.end());
    atoms_.erase(std::unique(atoms_.begin(), atoms_.end()), atoms_.end());
  }

  /// Atom classes seen in `corpus`.
  static Alphabet from_corpus(const std::vector<MolGraph>& corpus,
                              std::shared_ptr<const MotifVocabulary> vocab) {
    std::set<AtomClass> seen;
    for (const auto& m : corpus)
      for (const auto& a : m.atoms()) seen.insert({a.element, a.formal_charge});
    return Alphabet({seen.begin(), seen.end()}, std::move(vocab));
  }

  /// Neutral C, N, O, S, P and the halogens.
  static Alphabet standard(std::shared_ptr<const MotifVocabulary> vocab) {
    const auto& t = *ElementTable::builtin();
    std::vector<AtomClass> atoms;
    for (const char* s : {"C", "N", "O", "S", "P", "F", "Cl", "Br", "I"})
      atoms.push_back({*t.find(s), 0});
    return Alphabet(std::move(atoms), std::move(vocab));
  }

  int num_atom_classes() const { return static_cast<int>(atoms_.size()); }
  int num_motifs() const { return vocab_->size(); }
  int end_class() const { return num_atom_classes() + num_motifs(); }
  int num_classes() const { return end_class() + 1; }
  int motif_class(int vocab_index) const { return num_atom_classes() + vocab_index; }

  const std::vector<AtomClass>& atom_classes() const { return atoms_; }
  const AtomClass& atom_class(int c) const { return atoms_.at(c); }
  const MotifVocabulary& vocab() const { return *vocab_; }
  const std::shared_ptr<const MotifVocabulary>& vocab_ptr() const { return vocab_; }

  std::optional<int> find_atom_class(const Atom& a) const {
    AtomClass key{a.element, a.formal_charge};
    auto it = std::lower_bound(atoms_.begin(), atoms_.end(), key);
    if (it == atoms_.end() || *it != key) return std::nullopt;
    return static_cast<int>(it - atoms_.begin());
  }

 private:
  std::vector<AtomClass> atoms_;
  std::shared_ptr<const MotifVocabulary> vocab_;
};

enum class ActionKind { AddAtom, AddMotif, EndGeneration, SelectAttachment, AddBond, StopBonds };

/// `index` is the atom class, vocabulary index, motif position or bond
/// partner depending on `kind`.
struct Action {
  ActionKind kind = ActionKind::EndGeneration;
  int index = -1;
  BondOrder order = BondOrder::Single;

  static Action add_atom(int c) { return {ActionKind::AddAtom, c}; }
  static Action add_motif(int m) { return {ActionKind::AddMotif, m}; }
  static Action end() { return {ActionKind::EndGeneration, -1}; }
  static Action attach(int pos) { return {ActionKind::SelectAttachment, pos}; }
  static Action bond(int partner, BondOrder o) { return {ActionKind::AddBond, partner, o}; }
  static Action stop() { return {ActionKind::StopBonds, -1}; }

  /// Next-node class for node actions, -1 otherwise.
  int node_class(const Alphabet& alpha) const {
    switch (kind) {
      case ActionKind::AddAtom: return index;
      case ActionKind::AddMotif: return alpha.motif_class(index);
      case ActionKind::EndGeneration: return alpha.end_class();
      default: return -1;
    }
  }

  static Action from_node_class(int c, const Alphabet& alpha) {
    if (c < alpha.num_atom_classes()) return add_atom(c);
    if (c < alpha.end_class()) return add_motif(c - alpha.num_atom_classes());
    return end();
  }

  friend bool operator==(const Action& a, const Action& b) {
    if (a.kind != b.kind || a.index != b.index) return false;
    return a.kind != ActionKind::AddBond || a.order == b.order;
  }
};

inline std::string to_string(const Action& a);

class StateError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

enum class Phase { NextNode, Attachment, Bonds, Terminal };

/// Decoder state (g_i, v_i). Atoms of the insertion still waiting for their
/// first bond are `pending`; they are already part of `partial`.
struct GenState {
  MolGraph partial;
  int focus = -1;
  std::vector<int> pending;
  std::vector<int> occurrence;  // per atom: lowest atom index of its motif occurrence, or -1
  std::vector<int> motif_of;    // per atom: vocabulary index or -1
  int bonds_added = 0;
  bool terminal = false;

  Phase phase() const {
    if (terminal) return Phase::Terminal;
    if (focus >= 0) return Phase::Bonds;
    if (!pending.empty()) return Phase::Attachment;
    return Phase::NextNode;
  }

  friend bool operator==(const GenState& a, const GenState& b) {
    return a.partial == b.partial && a.focus == b.focus && a.pending == b.pending &&
           a.occurrence == b.occurrence && a.motif_of == b.motif_of &&
           a.bonds_added == b.bonds_added && a.terminal == b.terminal;
  }

  /// Hash of the full state; bond insertion order does not matter.
  std::string fingerprint() const {
    std::string s;
    for (int v = 0; v < partial.num_atoms(); ++v) {
      const auto& a = partial.atom(v);
      s += std::to_string(a.element) + ":" + std::to_string(a.formal_charge) + ":" +
           std::to_string(a.isotope.value_or(-1)) + ":" + std::to_string(occurrence[v]) +
           ":" + std::to_string(motif_of[v]) + ";";
    }
    std::vector<std::tuple<int, int, int>> bonds;
    for (const auto& b : partial.bonds())
      bonds.emplace_back(std::min(b.a, b.b), std::max(b.a, b.b), order_value(b.order));
    std::sort(bonds.begin(), bonds.end());
    for (auto [a, b, o] : bonds) s += std::to_string(a) + "-" + std::to_string(b) + "=" + std::to_string(o) + ";";
    s += "|" + std::to_string(focus) + "|";
    for (int p : pending) s += std::to_string(p) + ",";
    s += "|" + std::to_string(bonds_added) + (terminal ? "T" : "");
    return hex64(fnv1a(s));
  }
};

struct BondCandidate {
  int partner = -1;
  BondOrder order = BondOrder::Single;

  friend bool operator==(const BondCandidate&, const BondCandidate&) = default;
};

struct ActionMask {
  Phase phase = Phase::NextNode;
  std::vector<char> next_node;        // per next-node class
  std::vector<int> attachments;       // legal motif positions (class representatives)
  std::vector<BondCandidate> bonds;   // by partner, then order
  bool stop = false;

  friend bool operator==(const ActionMask&, const ActionMask&) = default;

  bool any() const {
    return stop || !bonds.empty() || !attachments.empty() ||
           std::any_of(next_node.begin(), next_node.end(), [](char c) { return c != 0; });
  }
};

inline GenState init_empty() { return {}; }

/// Starts decoding from `scaffold`; motif membership follows annotate().
inline GenState init_from_scaffold(const MolGraph& scaffold, const Alphabet& alpha) {
  if (scaffold.empty() || !is_connected(scaffold))
    throw StateError("scaffold must be non-empty and connected");
  if (!is_valence_valid(scaffold)) throw StateError("scaffold violates valences");
  GenState s;
  s.partial = scaffold;
  int n = scaffold.num_atoms();
  s.occurrence.assign(n, -1);
  s.motif_of.assign(n, -1);
  auto ann = annotate(scaffold, alpha.vocab());
  for (const auto& occ : ann.occurrences) {
    int id = *std::min_element(occ.atoms.begin(), occ.atoms.end());
    for (int v : occ.atoms) {
      s.occurrence[v] = id;
      s.motif_of[v] = occ.vocab_index;
    }
  }
  return s;
}

namespace detail {

inline bool any_free_valence(const MolGraph& g) {
  for (int v = 0; v < g.num_atoms(); ++v)
    if (free_valence(g, v) > 0) return true;
  return false;
}

inline bool atom_class_can_bond(const Alphabet& alpha, int c) {
  const auto& ac = alpha.atom_class(c);
  return (*ElementTable::builtin())[ac.element].max_valence(ac.charge) >= 1;
}

}  // namespace detail

/// Legal moves. Next-node classes that could not receive any bond are masked
/// up front, so a bond phase always has at least one legal move.
inline ActionMask legal_actions(const GenState& s, const Alphabet& alpha) {
  ActionMask m;
  m.phase = s.phase();
  switch (m.phase) {
    case Phase::Terminal:
      throw StateError("no actions in a terminal state");
    case Phase::NextNode: {
      m.next_node.assign(alpha.num_classes(), 0);
      bool empty = s.partial.empty();
      bool room = !empty && detail::any_free_valence(s.partial);
      for (int c = 0; c < alpha.num_atom_classes(); ++c)
        m.next_node[c] = empty || (room && detail::atom_class_can_bond(alpha, c));
      for (int i = 0; i < alpha.num_motifs(); ++i)
        m.next_node[alpha.motif_class(i)] =
            empty || (room && detail::any_free_valence(alpha.vocab()[i].graph));
      m.next_node[alpha.end_class()] = !empty;
      break;
    }
    case Phase::Attachment: {
      int vi = s.motif_of[s.pending.front()];
      const auto& motif = alpha.vocab()[vi];
      for (int r : motif.symmetry.representative)
        if (free_valence(s.partial, s.pending[r]) > 0) m.attachments.push_back(r);
      break;
    }
    case Phase::Bonds: {
      int v = s.focus;
      int fv = free_valence(s.partial, v);
      std::vector<char> excluded(s.partial.num_atoms(), 0);
      for (int p : s.pending) excluded[p] = 1;
      excluded[v] = 1;
      for (int u = 0; u < s.partial.num_atoms() && fv > 0; ++u) {
        if (excluded[u]) continue;
        if (s.occurrence[v] >= 0 && s.occurrence[u] == s.occurrence[v]) continue;
        if (s.partial.find_bond(v, u)) continue;
        int limit = std::min(fv, free_valence(s.partial, u));
        for (int o = 1; o <= std::min(limit, 3); ++o) m.bonds.push_back({u, bond_order_from(o)});
      }
      m.stop = s.bonds_added >= 1;
      break;
    }
  }
  return m;
}

inline bool is_legal(const ActionMask& m, const Action& a, const Alphabet& alpha) {
  switch (a.kind) {
    case ActionKind::AddAtom:
    case ActionKind::AddMotif:
    case ActionKind::EndGeneration: {
      if (m.phase != Phase::NextNode) return false;
      int c = a.node_class(alpha);
      if (a.kind == ActionKind::AddAtom && (a.index < 0 || a.index >= alpha.num_atom_classes()))
        return false;
      if (a.kind == ActionKind::AddMotif && (a.index < 0 || a.index >= alpha.num_motifs()))
        return false;
      return m.next_node[c] != 0;
    }
    case ActionKind::SelectAttachment:
      return std::find(m.attachments.begin(), m.attachments.end(), a.index) != m.attachments.end();
    case ActionKind::AddBond:
      return std::find(m.bonds.begin(), m.bonds.end(), BondCandidate{a.index, a.order}) !=
             m.bonds.end();
    case ActionKind::StopBonds:
      return m.stop;
  }
  return false;
}

/// Transition. The input state is not modified; illegal actions throw.
inline GenState apply(const GenState& s, const Action& a, const Alphabet& alpha) {
  if (s.terminal) throw StateError("apply on a terminal state");
  if (!is_legal(legal_actions(s, alpha), a, alpha))
    throw StateError("illegal action " + to_string(a));
  GenState t = s;
  bool was_empty = s.partial.empty();
  auto insert = [&](const MolGraph& piece, int vocab_index) {
    int base = t.partial.num_atoms();
    for (const auto& atom : piece.atoms()) {
      t.partial.add_atom(atom);
      t.occurrence.push_back(vocab_index >= 0 ? base : -1);
      t.motif_of.push_back(vocab_index);
    }
    for (const auto& b : piece.bonds()) t.partial.add_bond(base + b.a, base + b.b, b.order);
    if (was_empty) return;  // the first insertion needs no connecting bond
    for (int i = 0; i < piece.num_atoms(); ++i) t.pending.push_back(base + i);
    if (piece.num_atoms() == 1) t.focus = base;
    t.bonds_added = 0;
  };
  switch (a.kind) {
    case ActionKind::AddAtom: {
      MolGraph one;
      const auto& ac = alpha.atom_class(a.index);
      one.add_atom(Atom{ac.element, ac.charge, std::nullopt});
      insert(one, -1);
      break;
    }
    case ActionKind::AddMotif:
      insert(alpha.vocab()[a.index].graph, a.index);
      break;
    case ActionKind::EndGeneration:
      t.terminal = true;
      break;
    case ActionKind::SelectAttachment:
      t.focus = t.pending[a.index];
      break;
    case ActionKind::AddBond:
      t.partial.add_bond(t.focus, a.index, a.order);
      ++t.bonds_added;
      t.pending.clear();
      break;
    case ActionKind::StopBonds:
      t.focus = -1;
      t.bonds_added = 0;
      break;
  }
  return t;
}

inline bool is_terminal(const GenState& s) { return s.terminal; }

/// Every legal action of `s`, in mask order.
inline std::vector<Action> legal_action_list(const GenState& s, const Alphabet& alpha) {
  auto m = legal_actions(s, alpha);
  std::vector<Action> out;
  for (int c = 0; c < static_cast<int>(m.next_node.size()); ++c)
    if (m.next_node[c]) out.push_back(Action::from_node_class(c, alpha));
  for (int p : m.attachments) out.push_back(Action::attach(p));
  for (const auto& b : m.bonds) out.push_back(Action::bond(b.partner, b.order));
  if (m.stop) out.push_back(Action::stop());
  return out;
}

inline std::string to_string(const Action& a) {
  switch (a.kind) {
    case ActionKind::AddAtom: return "add-atom " + std::to_string(a.index);
    case ActionKind::AddMotif: return "add-motif " + std::to_string(a.index);
    case ActionKind::EndGeneration: return "end";
    case ActionKind::SelectAttachment: return "attach " + std::to_string(a.index);
    case ActionKind::AddBond:
      return "add-bond " + std::to_string(a.index) + " " + std::to_string(order_value(a.order));
    case ActionKind::StopBonds: return "stop-bonds";
  }
  return "?";
}

}  // namespace moler
