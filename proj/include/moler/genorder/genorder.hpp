#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <ostream>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "moler/chem/canon.hpp"
#include "moler/chem/kekule.hpp"
#include "moler/chem/molgraph.hpp"
#include "moler/decoder/statemachine.hpp"
#include "moler/motifs/motifs.hpp"

namespace moler {

enum class OrderKind { Random, Canonical, BfsRandomStart, BfsCanonicalStart };

struct OrderStrategy {
  OrderKind kind = OrderKind::Random;
  std::uint64_t seed = 0;
};

inline const char* order_name(OrderKind k) {
  switch (k) {
    case OrderKind::Random: return "random";
    case OrderKind::Canonical: return "canonical";
    case OrderKind::BfsRandomStart: return "bfs-random";
    case OrderKind::BfsCanonicalStart: return "bfs-canonical";
  }
  return "?";
}

inline OrderKind parse_order_kind(const std::string& s) {
  for (auto k : {OrderKind::Random, OrderKind::Canonical, OrderKind::BfsRandomStart,
                 OrderKind::BfsCanonicalStart})
    if (s == order_name(k)) return k;
  throw std::invalid_argument("unknown order '" + s + "'");
}

class OrderError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Per-molecule data the order strategies need.
struct OrderContext {
  const MolGraph& mol;
  std::vector<int> rank;  // canonical rank, Kekule-invariant

  explicit OrderContext(const MolGraph& m)
      : mol(m), rank(canonical_ranks(normalize_kekule(m))) {}

  int min_rank(const std::vector<int>& atoms) const {
    return *std::min_element(atoms.begin(), atoms.end(),
                             [&](int a, int b) { return rank[a] < rank[b]; });
  }

  std::vector<int> bfs_depth(int start) const {
    std::vector<int> d(mol.num_atoms(), -1);
    std::vector<int> q{start};
    d[start] = 0;
    for (std::size_t i = 0; i < q.size(); ++i)
      for (int id : mol.incident(q[i])) {
        int u = mol.bond(id).other(q[i]);
        if (d[u] < 0) {
          d[u] = d[q[i]] + 1;
          q.push_back(u);
        }
      }
    return d;
  }
};

inline std::vector<int> valid_first_atoms(const OrderContext& ctx, OrderKind kind) {
  int n = ctx.mol.num_atoms();
  if (n == 0) throw OrderError("empty molecule has no generation order");
  std::vector<int> all(n);
  std::iota(all.begin(), all.end(), 0);
  if (kind == OrderKind::Random || kind == OrderKind::BfsRandomStart) return all;
  return {ctx.min_rank(all)};
}

/// Frontier-based choice set. `depth` is the BFS depth from the start atom and
/// is only read by the BFS kinds.
inline std::vector<int> valid_next_atoms(const OrderContext& ctx,
                                         const std::vector<char>& in_partial, OrderKind kind,
                                         const std::vector<int>& depth = {}) {
  const auto& mol = ctx.mol;
  std::vector<int> frontier;
  std::vector<char> seen(mol.num_atoms(), 0);
  int inside = 0;
  for (int v = 0; v < mol.num_atoms(); ++v) {
    if (!in_partial[v]) continue;
    ++inside;
    for (int id : mol.incident(v)) {
      int u = mol.bond(id).other(v);
      if (!in_partial[u] && !seen[u]) {
        seen[u] = 1;
        frontier.push_back(u);
      }
    }
  }
  if (inside == 0 || inside == mol.num_atoms())
    throw OrderError("partial graph must be a proper non-empty subset");
  if (frontier.empty()) throw OrderError("partial graph is disconnected from the rest");
  std::sort(frontier.begin(), frontier.end());
  switch (kind) {
    case OrderKind::Random:
      return frontier;
    case OrderKind::Canonical:
      return {ctx.min_rank(frontier)};
    case OrderKind::BfsRandomStart:
    case OrderKind::BfsCanonicalStart: {
      if (depth.empty()) throw OrderError("BFS orders need start-atom depths");
      int best = depth[frontier.front()];
      for (int u : frontier) best = std::min(best, depth[u]);
      std::vector<int> out;
      for (int u : frontier)
        if (depth[u] == best) out.push_back(u);
      return out;
    }
  }
  return frontier;
}

struct OrderStep {
  std::vector<int> choices;  // nextChoices
  int chosen = -1;
  std::vector<int> added;    // the chosen atom, or its whole motif occurrence
};

inline std::vector<OrderStep> compute_order(const MolGraph& mol, const MotifAnnotation& ann,
                                            const OrderStrategy& strategy,
                                            std::mt19937_64& rng) {
  OrderContext ctx(mol);
  int n = mol.num_atoms();
  std::vector<char> in(n, 0);
  std::vector<int> depth;
  std::vector<OrderStep> out;
  int placed = 0;
  while (placed < n) {
    OrderStep step;
    step.choices = placed == 0 ? valid_first_atoms(ctx, strategy.kind)
                               : valid_next_atoms(ctx, in, strategy.kind, depth);
    std::uniform_int_distribution<std::size_t> pick(0, step.choices.size() - 1);
    step.chosen = step.choices.size() == 1 ? step.choices[0] : step.choices[pick(rng)];
    if (placed == 0) depth = ctx.bfs_depth(step.chosen);
    int occ = ann.occurrence.empty() ? -1 : ann.occurrence[step.chosen];
    if (occ >= 0) {
      step.added = ann.occurrences[occ].atoms;
    } else {
      step.added = {step.chosen};
    }
    for (int v : step.added) {
      if (in[v]) throw OrderError("annotation overlaps the partial graph");
      in[v] = 1;
    }
    placed += static_cast<int>(step.added.size());
    out.push_back(std::move(step));
  }
  return out;
}

struct TraceStep {
  GenState state;  // teacher-forced state before `action`
  Action action;
  std::vector<Action> valid_targets;

  std::string state_fingerprint() const { return state.fingerprint(); }
};

struct GenerationTrace {
  std::vector<TraceStep> steps;
  std::string source;  // molecule key of the source
  OrderStrategy strategy;
  std::vector<int> atom_map;  // source atom -> index in the final graph
};

namespace detail {

inline int node_class_of(const MolGraph& mol, const MotifAnnotation& ann, const Alphabet& alpha,
                         int atom) {
  if (!ann.motif_of.empty() && ann.motif_of[atom] >= 0) return alpha.motif_class(ann.motif_of[atom]);
  auto c = alpha.find_atom_class(mol.atom(atom));
  if (!c) throw OrderError("atom class of '" + mol.symbol(atom) + "' is not in the alphabet");
  return *c;
}

/// Among the motif automorphisms sending `linked` to its class
/// representative (any automorphism when `linked` < 0), the one whose placed
/// atoms have the lexicographically smallest molecule ranks. Makes traces
/// independent of how symmetric motif atoms were numbered in the input.
inline std::vector<int> canonical_placement(const Motif& motif, const std::vector<int>& atoms,
                                            const std::vector<int>& rank, int linked) {
  constexpr int kMaxAutomorphisms = 4096;
  int k = static_cast<int>(atoms.size());
  std::vector<int> best = linked < 0 ? std::vector<int>(k) : motif.symmetry.to_rep[linked];
  if (linked < 0) std::iota(best.begin(), best.end(), 0);
  if (k == 1) return best;
  auto key_of = [&](const std::vector<int>& sigma) {
    std::vector<int> key(k);
    for (int p = 0; p < k; ++p) key[sigma[p]] = rank[atoms[p]];
    return key;
  };
  auto best_key = key_of(best);
  auto labels = kekule_agnostic_labels(motif.graph);
  int target = linked < 0 ? -1 : motif.symmetry.rep_of(linked);
  int seen = 0;
  for_each_embedding(
      motif.graph, motif.graph,
      [&](const std::vector<int>& sigma) {
        if (target < 0 || sigma[linked] == target) {
          auto key = key_of(sigma);
          if (key < best_key) {
            best_key = std::move(key);
            best = sigma;
          }
        }
        return ++seen < kMaxAutomorphisms;
      },
      MatchOptions{&labels, &labels, true});
  return best;
}

/// Orbit representative of every atom of the partial graph under the
/// automorphisms that fix the focus and preserve motif labels and the
/// grouping into occurrences. The decoder scores atoms of one orbit
/// identically, and bonding to any of them builds the same molecule.
inline std::vector<int> state_orbits(const GenState& s) {
  constexpr int kMaxAutomorphisms = 4096;
  const MolGraph& g = s.partial;
  int n = g.num_atoms();
  std::vector<int> color(n);
  {
    std::map<std::vector<int>, int> ids;
    for (int v = 0; v < n; ++v) {
      std::vector<int> key{g.atom(v).element, g.atom(v).formal_charge,
                           s.motif_of.empty() ? -1 : s.motif_of[v], v == s.focus};
      color[v] = ids.emplace(std::move(key), static_cast<int>(ids.size())).first->second;
    }
    std::size_t classes = ids.size();
    while (true) {
      std::map<std::vector<int>, int> next_ids;
      std::vector<int> next(n);
      for (int v = 0; v < n; ++v) {
        std::vector<int> key{color[v]};
        std::vector<std::pair<int, int>> nb;
        for (int id : g.incident(v))
          nb.push_back({order_value(g.bond(id).order), color[g.bond(id).other(v)]});
        std::sort(nb.begin(), nb.end());
        for (auto [o, c] : nb) {
          key.push_back(o);
          key.push_back(c);
        }
        next[v] = next_ids.emplace(std::move(key), static_cast<int>(next_ids.size())).first->second;
      }
      color = std::move(next);
      if (next_ids.size() == classes) break;
      classes = next_ids.size();
    }
  }
  std::vector<int> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  auto root = [&](int v) {
    while (parent[v] != v) v = parent[v] = parent[parent[v]];
    return v;
  };
  int seen = 0;
  MatchOptions opt;
  opt.hay_atom_labels = &color;
  opt.needle_atom_labels = &color;
  for_each_embedding(
      g, g,
      [&](const std::vector<int>& sigma) {
        std::map<int, int> occ_map;
        bool ok = true;
        for (int v = 0; v < n && ok && !s.occurrence.empty(); ++v) {
          int a = s.occurrence[v], b = s.occurrence[sigma[v]];
          if ((a < 0) != (b < 0)) ok = false;
          else if (a >= 0) ok = occ_map.emplace(a, b).first->second == b;
        }
        if (ok)
          for (int v = 0; v < n; ++v) parent[root(v)] = root(sigma[v]);
        return ++seen < kMaxAutomorphisms;
      },
      opt);
  std::vector<int> rep(n);
  for (int v = 0; v < n; ++v) rep[v] = root(v);
  return rep;
}

}  // namespace detail

/// Expands an atom order into decoder actions by driving the state machine;
/// every emitted action was legal in its state. With `bond_rng` the bonds of
/// each focus phase are emitted in a random order instead of by index.
inline GenerationTrace expand_trace(const std::vector<OrderStep>& order, const MolGraph& mol,
                                    const MotifAnnotation& ann, const Alphabet& alpha,
                                    const OrderStrategy& strategy = {},
                                    std::mt19937_64* bond_rng = nullptr) {
  GenerationTrace trace;
  trace.strategy = strategy;
  trace.source = molecule_key(mol);
  int n = mol.num_atoms();
  std::vector<int> where(n, -1);
  auto rank = canonical_ranks(normalize_kekule(mol));
  GenState s = init_empty();
  auto emit = [&](const Action& a, std::vector<Action> targets) {
    trace.steps.push_back({s, a, std::move(targets)});
    s = apply(s, a, alpha);
  };
  for (const auto& step : order) {
    std::vector<int> classes;
    for (int v : step.choices) classes.push_back(detail::node_class_of(mol, ann, alpha, v));
    std::sort(classes.begin(), classes.end());
    classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
    std::vector<Action> node_targets;
    for (int c : classes) node_targets.push_back(Action::from_node_class(c, alpha));
    int cls = detail::node_class_of(mol, ann, alpha, step.chosen);
    bool first = s.partial.empty();
    int base = s.partial.num_atoms();
    emit(Action::from_node_class(cls, alpha), node_targets);

    int occ = ann.occurrence.empty() ? -1 : ann.occurrence[step.chosen];
    int focus_src = -1;
    if (occ < 0) {
      if (step.added.size() != 1) throw OrderError("order step inconsistent with annotation");
      where[step.chosen] = base;
      focus_src = step.chosen;
    } else {
      const auto& atoms = ann.occurrences[occ].atoms;
      const auto& motif = alpha.vocab()[ann.occurrences[occ].vocab_index];
      // Motif atoms bonded to what is already placed.
      std::vector<int> linked;
      for (std::size_t p = 0; p < atoms.size(); ++p)
        for (int id : mol.incident(atoms[p]))
          if (where[mol.bond(id).other(atoms[p])] >= 0) {
            linked.push_back(static_cast<int>(p));
            break;
          }
      if (first != linked.empty()) throw OrderError("motif occurrence is not attachable");
      if (linked.size() > 1) throw OrderError("motif occurrence joins the partial graph twice");
      auto sigma = detail::canonical_placement(motif, atoms, rank, first ? -1 : linked[0]);
      for (std::size_t p = 0; p < atoms.size(); ++p) where[atoms[p]] = base + sigma[p];
      if (!first && atoms.size() > 1) {
        int rep = motif.symmetry.rep_of(linked[0]);
        emit(Action::attach(rep), {Action::attach(rep)});
      }
      if (!first) focus_src = atoms[linked[0]];
    }
    if (first) continue;
    // Bonds from the focus to the placed graph, nearest insertion index first.
    std::vector<std::pair<int, BondOrder>> todo;
    for (int id : mol.incident(focus_src)) {
      int u = mol.bond(id).other(focus_src);
      bool placed_before = where[u] >= 0 && where[u] < base;
      if (placed_before) todo.push_back({where[u], mol.bond(id).order});
    }
    std::sort(todo.begin(), todo.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    if (bond_rng) std::shuffle(todo.begin(), todo.end(), *bond_rng);
    for (std::size_t k = 0; k < todo.size(); ++k) {
      // Any remaining partner, or an atom symmetric to one, is a valid target.
      auto orbit = detail::state_orbits(s);
      std::vector<std::pair<int, BondOrder>> wanted;
      for (std::size_t j = k; j < todo.size(); ++j) wanted.push_back({orbit[todo[j].first], todo[j].second});
      auto legal = legal_actions(s, alpha);
      std::vector<Action> targets;
      std::sort(wanted.begin(), wanted.end());
      wanted.erase(std::unique(wanted.begin(), wanted.end()), wanted.end());
      for (int u = 0; u < base; ++u)
        for (const auto& [rep, order] : wanted)
          if (orbit[u] == rep && is_legal(legal, Action::bond(u, order), alpha))
            targets.push_back(Action::bond(u, order));
      emit(Action::bond(todo[k].first, todo[k].second), std::move(targets));
    }
    emit(Action::stop(), {Action::stop()});
  }
  emit(Action::end(), {Action::end()});
  trace.atom_map = std::move(where);
  return trace;
}

inline GenerationTrace make_trace(const MolGraph& mol, const MotifAnnotation& ann,
                                  const Alphabet& alpha, const OrderStrategy& strategy) {
  std::mt19937_64 rng(strategy.seed);
  return expand_trace(compute_order(mol, ann, strategy, rng), mol, ann, alpha, strategy);
}

/// Applies every trace action from the empty state.
inline GenState replay(const GenerationTrace& trace, const Alphabet& alpha) {
  GenState s = init_empty();
  for (const auto& step : trace.steps) s = apply(s, step.action, alpha);
  return s;
}

/// Uniform sample without replacement of ceil(fraction * k) step indices,
/// returned in ascending order.
inline std::vector<int> subsample_steps(int num_steps, double fraction, std::mt19937_64& rng) {
  if (!(fraction > 0.0 && fraction <= 1.0))
    throw std::invalid_argument("subsample fraction must lie in (0, 1]");
  int keep = static_cast<int>(std::ceil(fraction * num_steps - 1e-9));
  keep = std::clamp(keep, 0, num_steps);
  std::vector<int> idx(num_steps);
  std::iota(idx.begin(), idx.end(), 0);
  for (int i = 0; i < keep; ++i) {
    std::uniform_int_distribution<int> d(i, num_steps - 1);
    std::swap(idx[i], idx[d(rng)]);
  }
  idx.resize(keep);
  std::sort(idx.begin(), idx.end());
  return idx;
}

inline const char* action_kind_name(ActionKind k) {
  switch (k) {
    case ActionKind::AddAtom: return "add-atom";
    case ActionKind::AddMotif: return "add-motif";
    case ActionKind::EndGeneration: return "end";
    case ActionKind::SelectAttachment: return "attach";
    case ActionKind::AddBond: return "add-bond";
    case ActionKind::StopBonds: return "stop-bonds";
  }
  return "?";
}

inline std::string action_target(const Action& a) {
  if (a.kind == ActionKind::AddBond)
    return std::to_string(a.index) + "/" + std::to_string(order_value(a.order));
  if (a.kind == ActionKind::EndGeneration || a.kind == ActionKind::StopBonds) return "-";
  return std::to_string(a.index);
}

/// One line per step: kind, target, comma-separated valid targets.
inline void dump_trace(const GenerationTrace& trace, std::ostream& out) {
  for (const auto& st : trace.steps) {
    out << action_kind_name(st.action.kind) << '\t' << action_target(st.action) << '\t';
    for (std::size_t i = 0; i < st.valid_targets.size(); ++i) {
      if (i) out << ',';
      const auto& t = st.valid_targets[i];
      out << (t.kind == ActionKind::AddMotif ? "m" : "") << action_target(t);
    }
    out << '\n';
  }
}

}  // namespace moler
