#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "moler/chem/kekule.hpp"
#include "moler/chem/match.hpp"
#include "moler/chem/smiles.hpp"
#include "moler/decoder/statemachine.hpp"
#include "moler/genorder/genorder.hpp"
#include "moler/motifs/motifs.hpp"
#include "test_util.hpp"

using namespace moler;
namespace mt = moler::testing;

namespace {

std::shared_ptr<const MotifVocabulary> vocab_of(std::vector<std::string> smiles, int n) {
  return std::make_shared<MotifVocabulary>(mine_vocabulary_smiles(smiles, n));
}

int atom_class(const Alphabet& alpha, const std::string& sym) {
  Atom a{*ElementTable::builtin()->find(sym), 0, std::nullopt};
  return *alpha.find_atom_class(a);
}

struct CorpusFixture {
  std::vector<MolGraph> mols;
  std::shared_ptr<const MotifVocabulary> vocab;
  Alphabet alpha;
};

const CorpusFixture& corpus_fixture() {
  static const CorpusFixture f = [] {
    CorpusFixture c;
    c.mols = mt::read_corpus("corpus.smi", 1000);
    c.vocab = std::make_shared<MotifVocabulary>(mine_vocabulary(c.mols, 64));
    c.alpha = Alphabet::from_corpus(c.mols, c.vocab);
    return c;
  }();
  return f;
}

// Random-order prefixes reachable by the order walk, as atom bitmasks.
void enumerate_prefixes(const OrderContext& ctx, const MotifAnnotation& ann, std::uint32_t in,
                        std::set<std::uint32_t>& seen) {
  if (!seen.insert(in).second) return;
  int n = ctx.mol.num_atoms();
  if (in == (1u << n) - 1) return;
  std::vector<int> choices;
  if (in == 0) {
    choices = valid_first_atoms(ctx, OrderKind::Random);
  } else {
    std::vector<char> flag(n);
    for (int v = 0; v < n; ++v) flag[v] = (in >> v) & 1u;
    choices = valid_next_atoms(ctx, flag, OrderKind::Random);
  }
  for (int c : choices) {
    std::uint32_t next = in;
    if (ann.occurrence[c] >= 0) {
      for (int v : ann.occurrences[ann.occurrence[c]].atoms) next |= 1u << v;
    } else {
      next |= 1u << c;
    }
    enumerate_prefixes(ctx, ann, next, seen);
  }
}

bool connected_subset(const MolGraph& mol, std::uint32_t s) {
  int start = __builtin_ctz(s);
  std::uint32_t reach = 1u << start;
  std::vector<int> q{start};
  for (std::size_t i = 0; i < q.size(); ++i)
    for (int id : mol.incident(q[i])) {
      int u = mol.bond(id).other(q[i]);
      if ((s >> u & 1u) && !(reach >> u & 1u)) {
        reach |= 1u << u;
        q.push_back(u);
      }
    }
  return reach == s;
}

}  // namespace

TEST(StateMachine, EmptyState) {
  auto alpha = Alphabet::standard(vocab_of({"c1ccccc1"}, 1));
  auto s = init_empty();
  EXPECT_EQ(s.partial.num_atoms(), 0);
  EXPECT_FALSE(is_terminal(s));
  auto m = legal_actions(s, alpha);
  EXPECT_EQ(m.phase, Phase::NextNode);
  for (int c = 0; c < alpha.end_class(); ++c) EXPECT_TRUE(m.next_node[c]);
  EXPECT_FALSE(m.next_node[alpha.end_class()]);
  EXPECT_THROW(apply(s, Action::end(), alpha), StateError);
}

TEST(StateMachine, SingleAtomMolecule) {
  auto alpha = Alphabet::standard(vocab_of({}, 0));
  auto s = apply(init_empty(), Action::add_atom(atom_class(alpha, "C")), alpha);
  // The first insertion has nothing to bond to and is committed at once.
  EXPECT_EQ(s.phase(), Phase::NextNode);
  EXPECT_THROW(apply(s, Action::stop(), alpha), StateError);
  auto t = apply(s, Action::end(), alpha);
  EXPECT_TRUE(is_terminal(t));
  EXPECT_EQ(write_smiles(t.partial), "C");
  EXPECT_TRUE(is_valid_molecule(t.partial));
  EXPECT_THROW(legal_actions(t, alpha), StateError);
}

TEST(StateMachine, ScaffoldInit) {
  auto vocab = vocab_of({"c1ccccc1"}, 1);
  auto alpha = Alphabet::standard(vocab);
  auto s = init_from_scaffold(parse_smiles("c1ccccc1"), alpha);
  EXPECT_EQ(s.partial.num_atoms(), 6);
  EXPECT_EQ(s.focus, -1);
  for (int v = 0; v < 6; ++v) {
    EXPECT_EQ(s.motif_of[v], 0);
    EXPECT_EQ(s.occurrence[v], 0);
  }
  auto sat = init_from_scaffold(parse_smiles("FC(F)(F)F"), alpha);
  auto m = legal_actions(sat, alpha);
  for (int c = 0; c < alpha.end_class(); ++c) EXPECT_FALSE(m.next_node[c]);
  EXPECT_TRUE(m.next_node[alpha.end_class()]);
  EXPECT_THROW(init_from_scaffold(parse_smiles("C.C"), alpha), StateError);
}

TEST(StateMachine, BondMasks) {
  auto vocab = vocab_of({"c1ccccc1"}, 1);
  auto alpha = Alphabet::standard(vocab);
  int C = atom_class(alpha, "C"), O = atom_class(alpha, "O");

  // Focus C (free valence 4) against a bare O (free valence 2).
  auto s = apply(init_empty(), Action::add_atom(O), alpha);
  s = apply(s, Action::add_atom(C), alpha);
  ASSERT_EQ(s.phase(), Phase::Bonds);
  auto m = legal_actions(s, alpha);
  EXPECT_EQ(m.bonds, (std::vector<BondCandidate>{{0, BondOrder::Single}, {0, BondOrder::Double}}));
  EXPECT_FALSE(m.stop);
  int fv0 = free_valence(s.partial, 0), fv1 = free_valence(s.partial, 1);
  auto t = apply(s, Action::bond(0, BondOrder::Double), alpha);
  EXPECT_EQ(free_valence(t.partial, 0), fv0 - 2);
  EXPECT_EQ(free_valence(t.partial, 1), fv1 - 2);
  EXPECT_EQ(s.partial.num_bonds(), 0);  // input untouched
  auto mt2 = legal_actions(t, alpha);
  EXPECT_TRUE(mt2.bonds.empty());
  EXPECT_TRUE(mt2.stop);

  // Focus with no free valence left: only stop.
  int F = atom_class(alpha, "F");
  auto f = apply(init_empty(), Action::add_atom(C), alpha);
  f = apply(f, Action::add_atom(F), alpha);
  f = apply(f, Action::bond(0, BondOrder::Single), alpha);
  auto fm = legal_actions(f, alpha);
  EXPECT_TRUE(fm.bonds.empty());
  EXPECT_TRUE(fm.stop);

  // Chord mask: attachment atom of a new benzene cannot bond into its own ring.
  auto b = apply(init_empty(), Action::add_atom(C), alpha);
  b = apply(b, Action::add_motif(0), alpha);
  ASSERT_EQ(b.phase(), Phase::Attachment);
  auto am = legal_actions(b, alpha);
  EXPECT_EQ(am.attachments, (std::vector<int>{0}));
  EXPECT_THROW(apply(b, Action::stop(), alpha), StateError);
  b = apply(b, Action::attach(0), alpha);
  auto bm = legal_actions(b, alpha);
  for (const auto& c : bm.bonds) EXPECT_EQ(c.partner, 0);
  EXPECT_FALSE(bm.stop);
  b = apply(b, Action::bond(0, BondOrder::Single), alpha);
  b = apply(b, Action::stop(), alpha);
  // Later single atoms may still bond to ring atoms, but ring atoms never
  // bond to each other.
  b = apply(b, Action::add_atom(C), alpha);
  auto later = legal_actions(b, alpha);
  EXPECT_TRUE(std::any_of(later.bonds.begin(), later.bonds.end(),
                          [](const BondCandidate& c) { return c.partner >= 1; }));
  b = apply(apply(b, Action::bond(0, BondOrder::Single), alpha), Action::stop(), alpha);
  b = apply(b, Action::end(), alpha);
  EXPECT_TRUE(same_molecule(b.partial, parse_smiles("CCc1ccccc1")));
}

TEST(StateMachine, RandomPolicyValidity) {
  const auto& fx = corpus_fixture();
  std::mt19937_64 rng(7);
  int rollouts = 2000;
  for (int r = 0; r < rollouts; ++r) {
    auto s = init_empty();
    while (!is_terminal(s)) {
      auto acts = legal_action_list(s, fx.alpha);
      ASSERT_FALSE(acts.empty());
      Action a = acts[std::uniform_int_distribution<std::size_t>(0, acts.size() - 1)(rng)];
      if (s.partial.num_atoms() > 40 && legal_actions(s, fx.alpha).next_node.size() &&
          legal_actions(s, fx.alpha).next_node[fx.alpha.end_class()])
        a = Action::end();
      s = apply(s, a, fx.alpha);
    }
    ASSERT_TRUE(is_valid_molecule(s.partial)) << write_smiles(s.partial);
  }
}

TEST(StateMachine, HistoryFreedom) {
  auto alpha = Alphabet::standard(vocab_of({}, 0));
  int C = atom_class(alpha, "C");
  // Cyclopropane closed in two bond orders.
  auto base = apply(init_empty(), Action::add_atom(C), alpha);
  base = apply(base, Action::add_atom(C), alpha);
  base = apply(base, Action::bond(0, BondOrder::Single), alpha);
  base = apply(base, Action::stop(), alpha);
  base = apply(base, Action::add_atom(C), alpha);
  auto x = apply(apply(base, Action::bond(0, BondOrder::Single), alpha),
                 Action::bond(1, BondOrder::Single), alpha);
  auto y = apply(apply(base, Action::bond(1, BondOrder::Single), alpha),
                 Action::bond(0, BondOrder::Single), alpha);
  EXPECT_EQ(x, y);
  EXPECT_EQ(x.fingerprint(), y.fingerprint());
  EXPECT_EQ(legal_actions(x, alpha), legal_actions(y, alpha));
}

TEST(StateMachine, ScaffoldPreserved) {
  const auto& fx = corpus_fixture();
  std::mt19937_64 rng(3);
  for (const char* smi : {"c1ccccc1", "C1CCNCC1", "O=C1CCCN1", "c1ccc2ccccc2c1", "CC(=O)N"}) {
    auto scaffold = parse_smiles(smi);
    for (int r = 0; r < 100; ++r) {
      auto s = init_from_scaffold(scaffold, fx.alpha);
      while (!is_terminal(s)) {
        auto acts = legal_action_list(s, fx.alpha);
        Action a = acts[std::uniform_int_distribution<std::size_t>(0, acts.size() - 1)(rng)];
        if (s.partial.num_atoms() > 35) {
          auto m = legal_actions(s, fx.alpha);
          if (m.phase == Phase::NextNode) a = Action::end();
        }
        s = apply(s, a, fx.alpha);
      }
      ASSERT_TRUE(is_valid_molecule(s.partial));
      ASSERT_TRUE(contains_subgraph(s.partial, scaffold)) << write_smiles(s.partial);
    }
  }
}

TEST(GenOrder, ChoiceSets) {
  auto cco = parse_smiles("CCO");
  OrderContext ctx(cco);
  EXPECT_EQ(valid_first_atoms(ctx, OrderKind::Random), (std::vector<int>{0, 1, 2}));
  EXPECT_EQ(valid_first_atoms(ctx, OrderKind::Canonical).size(), 1u);
  EXPECT_EQ(valid_first_atoms(ctx, OrderKind::BfsCanonicalStart),
            valid_first_atoms(ctx, OrderKind::Canonical));
  auto one = parse_smiles("N");
  OrderContext c1(one);
  for (auto k : {OrderKind::Random, OrderKind::Canonical, OrderKind::BfsRandomStart,
                 OrderKind::BfsCanonicalStart})
    EXPECT_EQ(valid_first_atoms(c1, k), (std::vector<int>{0}));
  EXPECT_THROW(valid_first_atoms(OrderContext(MolGraph()), OrderKind::Random), OrderError);

  auto path = parse_smiles("CNO");  // A-B-C
  OrderContext cp(path);
  EXPECT_EQ(valid_next_atoms(cp, {0, 1, 0}, OrderKind::Random), (std::vector<int>{0, 2}));
  EXPECT_EQ(valid_next_atoms(cp, {1, 0, 0}, OrderKind::Random), (std::vector<int>{1}));
  EXPECT_EQ(valid_next_atoms(cp, {1, 0, 0}, OrderKind::Canonical), (std::vector<int>{1}));
  EXPECT_THROW(valid_next_atoms(cp, {1, 1, 1}, OrderKind::Random), OrderError);
  EXPECT_THROW(valid_next_atoms(cp, {0, 0, 0}, OrderKind::Random), OrderError);

  auto star = parse_smiles("CC(C)C");
  OrderContext cs(star);
  auto depth = cs.bfs_depth(1);
  EXPECT_EQ(valid_next_atoms(cs, {0, 1, 0, 0}, OrderKind::BfsRandomStart, depth),
            (std::vector<int>{0, 2, 3}));
  auto chain = parse_smiles("CCCCC");
  OrderContext cc(chain);
  auto d2 = cc.bfs_depth(2);
  // Partial {1,2,3}: atoms 0 and 4 are both at depth 2.
  EXPECT_EQ(valid_next_atoms(cc, {0, 1, 1, 1, 0}, OrderKind::BfsRandomStart, d2),
            (std::vector<int>{0, 4}));
  auto d0 = cc.bfs_depth(0);
  EXPECT_EQ(valid_next_atoms(cc, {1, 1, 0, 0, 0}, OrderKind::BfsRandomStart, d0),
            (std::vector<int>{2}));
}

TEST(GenOrder, ComputeOrderExamples) {
  auto hexv = *vocab_of({"C1CCCCC1"}, 1);
  auto hex = parse_smiles("C1CCCCC1");
  std::mt19937_64 rng(1);
  auto o = compute_order(hex, annotate(hex, hexv), {OrderKind::Random, 0}, rng);
  ASSERT_EQ(o.size(), 1u);
  EXPECT_EQ(o[0].added.size(), 6u);

  auto c = parse_smiles("C");
  auto oc = compute_order(c, annotate(c, MotifVocabulary()), {OrderKind::Random, 0}, rng);
  ASSERT_EQ(oc.size(), 1u);
  EXPECT_EQ(oc[0].choices, (std::vector<int>{0}));

  auto benz = *vocab_of({"c1ccccc1"}, 1);
  auto tol = parse_smiles("Cc1ccccc1");
  auto ann = annotate(tol, benz);
  for (int seed = 0; seed < 20; ++seed) {
    std::mt19937_64 r(seed);
    auto ot = compute_order(tol, ann, {OrderKind::Random, 0}, r);
    if (ot[0].chosen == 0) {
      ASSERT_EQ(ot.size(), 2u);
      EXPECT_EQ(ot[1].added.size(), 6u);
    } else {
      ASSERT_EQ(ot.size(), 2u);
      EXPECT_EQ(ot[0].added.size(), 6u);
      EXPECT_EQ(ot[1].added, (std::vector<int>{0}));
    }
  }
}

TEST(GenOrder, TraceExamples) {
  auto alpha = Alphabet::standard(vocab_of({"c1ccccc1"}, 1));
  int C = atom_class(alpha, "C");
  auto cc = parse_smiles("CC");
  std::mt19937_64 rng(5);
  auto tr = expand_trace(compute_order(cc, annotate(cc, MotifVocabulary()), {}, rng), cc,
                         annotate(cc, MotifVocabulary()), alpha);
  std::vector<Action> expect{Action::add_atom(C), Action::add_atom(C),
                             Action::bond(0, BondOrder::Single), Action::stop(), Action::end()};
  ASSERT_EQ(tr.steps.size(), expect.size());
  for (std::size_t i = 0; i < expect.size(); ++i) EXPECT_EQ(tr.steps[i].action, expect[i]);

  auto tol = parse_smiles("Cc1ccccc1");
  auto ann = annotate(tol, alpha.vocab());
  std::vector<OrderStep> methyl_first{{{0, 1, 2, 3, 4, 5, 6}, 0, {0}},
                                      {{1}, 1, ann.occurrences[0].atoms}};
  auto t2 = expand_trace(methyl_first, tol, ann, alpha);
  ASSERT_EQ(t2.steps.size(), 6u);
  EXPECT_EQ(t2.steps[0].action, Action::add_atom(C));
  EXPECT_EQ(t2.steps[0].valid_targets.size(), 2u);  // C and the benzene motif
  EXPECT_EQ(t2.steps[1].action, Action::add_motif(0));
  EXPECT_EQ(t2.steps[2].action.kind, ActionKind::SelectAttachment);
  EXPECT_EQ(t2.steps[2].valid_targets.size(), 1u);
  EXPECT_EQ(t2.steps[3].action, Action::bond(0, BondOrder::Single));
  EXPECT_EQ(t2.steps[4].action, Action::stop());
  EXPECT_EQ(t2.steps[5].action, Action::end());
  EXPECT_TRUE(same_molecule(replay(t2, alpha).partial, tol));

  std::ostringstream dump;
  dump_trace(t2, dump);
  auto text = dump.str();
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 6);
  EXPECT_EQ(text.substr(0, 9), "add-atom\t");
}

TEST(GenOrder, SymmetricBondTargets) {
  auto alpha = Alphabet::standard(vocab_of({"c1ccccc1"}, 1));
  auto tol = parse_smiles("Cc1ccccc1");
  auto ann = annotate(tol, alpha.vocab());
  std::vector<OrderStep> ring_first{{{0, 1, 2, 3, 4, 5, 6}, 1, ann.occurrences[0].atoms},
                                    {{0}, 0, {0}}};
  auto tr = expand_trace(ring_first, tol, ann, alpha);
  std::vector<Action> bonds;
  for (const auto& st : tr.steps)
    if (st.action.kind == ActionKind::AddBond) bonds = st.valid_targets;
  // The lone ring is fully symmetric.
  ASSERT_EQ(bonds.size(), 6u);
  for (int u = 0; u < 6; ++u)
    EXPECT_NE(std::find(bonds.begin(), bonds.end(), Action::bond(u, BondOrder::Single)), bonds.end());

  // Para-substituted ordering fixes all but the mirror pair.
  auto xyl = parse_smiles("Cc1ccc(N)cc1");
  auto ann2 = annotate(xyl, alpha.vocab());
  auto t2 = make_trace(xyl, ann2, alpha, {OrderKind::Canonical, 0});
  for (const auto& st : t2.steps)
    if (st.action.kind == ActionKind::AddBond) {
      EXPECT_LE(st.valid_targets.size(), 2u);
    }
}

TEST(GenOrder, SymmetricTargetsReachSameGraph) {
  const auto& fx = corpus_fixture();
  int expanded = 0;
  for (std::size_t i = 0; i < 200; ++i) {
    auto ann = annotate(fx.mols[i], *fx.vocab);
    for (auto kind : {OrderKind::Canonical, OrderKind::Random}) {
      auto tr = make_trace(fx.mols[i], ann, fx.alpha, {kind, i});
      for (std::size_t k = 0; k < tr.steps.size(); ++k) {
        const auto& st = tr.steps[k];
        if (st.action.kind != ActionKind::AddBond) continue;
        // Graphs reachable with the bonds the trace itself still adds.
        std::set<std::string> allowed;
        for (std::size_t j = k; j < tr.steps.size() && tr.steps[j].action.kind == ActionKind::AddBond; ++j)
          allowed.insert(molecule_key(apply(st.state, tr.steps[j].action, fx.alpha).partial));
        auto mask = legal_actions(st.state, fx.alpha);
        std::set<std::pair<int, int>> unique;
        for (const auto& a : st.valid_targets) unique.insert({a.index, static_cast<int>(a.order)});
        EXPECT_EQ(unique.size(), st.valid_targets.size());
        for (const auto& a : st.valid_targets) {
          EXPECT_TRUE(is_legal(mask, a, fx.alpha));
          EXPECT_TRUE(allowed.count(molecule_key(apply(st.state, a, fx.alpha).partial)))
              << write_smiles(fx.mols[i]) << " step " << k;
        }
        expanded += st.valid_targets.size() > allowed.size();
      }
    }
  }
  EXPECT_GT(expanded, 0);
}

TEST(GenOrder, ReplayAllStrategies) {
  const auto& fx = corpus_fixture();
  for (auto kind : {OrderKind::Random, OrderKind::Canonical, OrderKind::BfsRandomStart,
                    OrderKind::BfsCanonicalStart}) {
    for (std::size_t i = 0; i < fx.mols.size(); i += 3) {
      const auto& mol = fx.mols[i];
      auto ann = annotate(mol, *fx.vocab);
      OrderStrategy st{kind, 1000 + i};
      std::mt19937_64 rng(st.seed);
      auto order = compute_order(mol, ann, st, rng);
      // Prefix connectivity and permutation.
      std::vector<int> seen;
      std::uint64_t count = 0;
      std::vector<char> in(mol.num_atoms(), 0);
      for (const auto& step : order) {
        EXPECT_NE(std::find(step.choices.begin(), step.choices.end(), step.chosen),
                  step.choices.end());
        for (int v : step.added) {
          EXPECT_FALSE(in[v]);
          in[v] = 1;
          ++count;
        }
        auto sub = induced_subgraph(
            mol, [&] {
              std::vector<int> a;
              for (int v = 0; v < mol.num_atoms(); ++v)
                if (in[v]) a.push_back(v);
              return a;
            }());
        EXPECT_TRUE(is_connected(sub));
      }
      EXPECT_EQ(count, static_cast<std::uint64_t>(mol.num_atoms()));
      auto tr = expand_trace(order, mol, ann, fx.alpha, st);
      for (const auto& step : tr.steps) {
        EXPECT_FALSE(step.valid_targets.empty());
        EXPECT_NE(std::find(step.valid_targets.begin(), step.valid_targets.end(), step.action),
                  step.valid_targets.end());
      }
      EXPECT_EQ(tr.steps.front().state.partial.num_atoms(), 0);
      EXPECT_NE(tr.steps[1].action.kind, ActionKind::AddBond);
      auto out = replay(tr, fx.alpha);
      ASSERT_TRUE(is_terminal(out));
      EXPECT_TRUE(same_molecule(out.partial, mol)) << order_name(kind) << " " << write_smiles(mol);
    }
  }
}

TEST(GenOrder, Determinism) {
  const auto& fx = corpus_fixture();
  for (std::size_t i = 0; i < 50; ++i) {
    const auto& mol = fx.mols[i];
    auto ann = annotate(mol, *fx.vocab);
    std::ostringstream a, b, c, d;
    dump_trace(make_trace(mol, ann, fx.alpha, {OrderKind::Canonical, 1}), a);
    dump_trace(make_trace(mol, ann, fx.alpha, {OrderKind::Canonical, 99}), b);
    EXPECT_EQ(a.str(), b.str());
    dump_trace(make_trace(mol, ann, fx.alpha, {OrderKind::Random, 42}), c);
    dump_trace(make_trace(mol, ann, fx.alpha, {OrderKind::Random, 42}), d);
    EXPECT_EQ(c.str(), d.str());
  }
  // Canonical traces do not depend on the input atom order.
  std::mt19937_64 rng(8);
  for (std::size_t i = 0; i < 50; ++i) {
    const auto& mol = fx.mols[i];
    auto perm = mt::random_permutation(rng, mol.num_atoms());
    auto shuffled = permute_atoms(mol, perm);
    std::ostringstream a, b;
    dump_trace(make_trace(mol, annotate(mol, *fx.vocab), fx.alpha, {OrderKind::Canonical, 0}), a);
    dump_trace(make_trace(shuffled, annotate(shuffled, *fx.vocab), fx.alpha,
                          {OrderKind::Canonical, 0}),
               b);
    EXPECT_EQ(a.str(), b.str()) << write_smiles(mol);
  }
}

TEST(GenOrder, ScaffoldReachability) {
  const auto& fx = corpus_fixture();
  int molecules = 0, subsets = 0;
  std::vector<MolGraph> small;
  for (const char* s : {"Cc1ccccc1", "CCO", "C1CC1CN", "OC1CCC1", "CC(C)(C)O", "c1ccncc1",
                        "C1CCCCC1", "NCC(=O)O"})
    small.push_back(parse_smiles(s));
  for (const auto& m : fx.mols)
    if (m.num_atoms() <= 7) small.push_back(m);
  auto rings = vocab_of({"c1ccccc1", "C1CCCCC1"}, 2);
  for (const auto& mol : small) {
    for (const auto* vocab : {&*fx.vocab, &*rings}) {
      auto ann = annotate(mol, *vocab);
      OrderContext ctx(mol);
      std::set<std::uint32_t> prefixes;
      enumerate_prefixes(ctx, ann, 0, prefixes);
      int n = mol.num_atoms();
      for (std::uint32_t s = 1; s < (1u << n); ++s) {
        if (!connected_subset(mol, s)) continue;
        bool closed = true;
        for (const auto& occ : ann.occurrences) {
          int inside = 0;
          for (int v : occ.atoms) inside += (s >> v) & 1u;
          closed &= inside == 0 || inside == static_cast<int>(occ.atoms.size());
        }
        if (!closed) continue;
        ++subsets;
        EXPECT_TRUE(prefixes.count(s)) << write_smiles(mol) << " subset " << s;
      }
    }
    ++molecules;
  }
  EXPECT_GT(molecules, 8);
  EXPECT_GT(subsets, 50);
}

TEST(GenOrder, Subsampling) {
  std::mt19937_64 rng(11);
  EXPECT_EQ(subsample_steps(10, 1.0, rng).size(), 10u);
  EXPECT_EQ(subsample_steps(10, 0.5, rng).size(), 5u);
  EXPECT_EQ(subsample_steps(7, 0.5, rng).size(), 4u);
  EXPECT_THROW(subsample_steps(7, 0.0, rng), std::invalid_argument);
  const int draws = 10000, k = 10;
  std::vector<int> hits(k, 0);
  for (int d = 0; d < draws; ++d)
    for (int i : subsample_steps(k, 0.5, rng)) ++hits[i];
  double p = 0.5, sigma = std::sqrt(p * (1 - p) / draws);
  for (int h : hits) EXPECT_NEAR(static_cast<double>(h) / draws, p, 3 * sigma + 1e-12);
}
