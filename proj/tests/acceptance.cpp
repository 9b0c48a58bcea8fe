// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits non-zero if any fails. The overfit model trained for criterion 9 is
// reused by the sampling, history, swarm and grid checks.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <memory>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "moler/chem/match.hpp"
#include "moler/chem/smiles.hpp"
#include "moler/genorder/genorder.hpp"
#include "moler/latent/explore.hpp"
#include "moler/latent/metrics.hpp"
#include "moler/latent/swarm.hpp"
#include "moler/motifs/motifs.hpp"
#include "moler/nn/gradcheck.hpp"
#include "moler/vae/train.hpp"
#include "test_util.hpp"

using namespace moler;
namespace mt = moler::testing;

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

int failures = 0;

void report(int id, const std::string& name, bool pass, const std::string& detail, double seconds) {
  if (!pass) ++failures;
  std::printf("[%s] %2d %-22s %s (%.1fs)\n", pass ? "PASS" : "FAIL", id, name.c_str(),
              detail.c_str(), seconds);
  std::fflush(stdout);
}

template <class... A>
std::string fmt(const char* f, A... a) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, a...);
  return buf;
}

bool valid_output(const MolGraph& m) {
  return !m.empty() && is_valid_molecule(m) && is_connected(m);
}

// ---- shared state ------------------------------------------------------------

struct Overfit {
  std::vector<MolGraph> mols;
  std::shared_ptr<const MotifVocabulary> vocab;
  TrainConfig cfg;
  TrainResult result;
};

TrainConfig overfit_config() {
  TrainConfig cfg;
  cfg.order = {OrderKind::Canonical, 0};
  cfg.loss.beta_target = 0.001;
  cfg.loss.warmup_steps = 0;
  cfg.adam.lr = 1e-3;
  cfg.adam.decay_steps = 6000;
  cfg.adam.lr_final = 1e-5;
  cfg.max_steps = 6000;
  cfg.valid_every = 1000000;
  cfg.seed = 0;
  return cfg;
}

DecodeOptions lenient(DecodeMode mode = DecodeMode::Greedy) {
  DecodeOptions o;
  o.mode = mode;
  o.empty_on_cap = true;
  return o;
}

/// Uniform over legal actions; END is forced once END is legal and the graph
/// has `soft_cap` atoms, to bound rollout length.
GenState random_rollout(const Alphabet& alpha, std::mt19937_64& rng, int soft_cap,
                        const std::function<void(const GenState&)>& visit = {}) {
  auto s = init_empty();
  while (!is_terminal(s)) {
    if (visit) visit(s);
    auto acts = legal_action_list(s, alpha);
    if (acts.empty()) throw StateError("no legal action");
    Action a = acts[std::uniform_int_distribution<std::size_t>(0, acts.size() - 1)(rng)];
    if (s.partial.num_atoms() >= soft_cap &&
        std::find(acts.begin(), acts.end(), Action::end()) != acts.end())
      a = Action::end();
    s = apply(s, a, alpha);
  }
  return s;
}

nn::ModelConfig tiny_config() {
  nn::ModelConfig c;
  c.layers = 2;
  c.hidden = 8;
  c.latent = 4;
  c.encoder_heads = 2;
  c.decoder_heads = 2;
  c.head_dim = 4;
  c.motif_dim = 4;
  c.mlp_hidden = 8;
  return c;
}

// ---- criteria ----------------------------------------------------------------

void validity(const Overfit& of) {
  auto t0 = Clock::now();
  const auto& model = *of.result.best;
  std::mt19937_64 rng(101);
  const int count = 10000;
  int ok_model = 0, ok_random = 0;
  for (int done = 0; done < count; done += 200) {
    std::vector<Latent> zs;
    for (int k = 0; k < 200; ++k) zs.push_back(standard_normal(rng, model.config().latent));
    for (const auto& m : decode_many(model, zs, nullptr, lenient(DecodeMode::Stochastic), &rng))
      ok_model += valid_output(m);
  }
  for (int r = 0; r < count; ++r) ok_random += valid_output(random_rollout(model.alphabet(), rng, 60).partial);
  double secs = since(t0);
  report(1, "validity", ok_model == count && ok_random == count && secs < 300,
         fmt("model %d/%d, random policy %d/%d", ok_model, count, ok_random, count), secs);
}

void scaffold_guarantee(const Overfit& of) {
  auto t0 = Clock::now();
  const auto& model = *of.result.best;
  std::mt19937_64 rng(102);
  int ok = 0, total = 0;
  for (const char* s : {"c1ccccc1", "C1CCNCC1", "O=C(N)c1ccccc1", "c1ccncc1", "C1CCCCC1"}) {
    auto scaffold = parse_smiles(s);
    std::vector<Latent> zs;
    for (int k = 0; k < 200; ++k) zs.push_back(standard_normal(rng, model.config().latent));
    for (const auto& m : decode_many(model, zs, &scaffold, lenient(DecodeMode::Stochastic), &rng)) {
      ++total;
      ok += valid_output(m) && contains_subgraph(m, scaffold);
    }
  }
  double secs = since(t0);
  report(2, "scaffold guarantee", ok == total && secs < 300, fmt("%d/%d contain their scaffold", ok, total),
         secs);
}

void round_trip(const std::vector<MolGraph>& corpus) {
  auto t0 = Clock::now();
  int ok = 0;
  for (const auto& m : corpus) ok += are_isomorphic(reassemble(fragment_molecule(m), m), m);
  double secs = since(t0);
  int n = static_cast<int>(corpus.size());
  report(3, "fragment round trip", ok == n && secs < 60, fmt("%d/%d isomorphic", ok, n), secs);
}

void trace_replay(const std::vector<MolGraph>& corpus) {
  auto t0 = Clock::now();
  auto vocab = std::make_shared<MotifVocabulary>(mine_vocabulary(corpus, 64));
  auto alpha = Alphabet::from_corpus(corpus, vocab);
  int ok = 0, total = 0;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    auto ann = annotate(corpus[i], *vocab);
    for (auto kind : {OrderKind::Random, OrderKind::Canonical, OrderKind::BfsRandomStart,
                      OrderKind::BfsCanonicalStart}) {
      ++total;
      auto tr = make_trace(corpus[i], ann, alpha, {kind, i});
      ok += same_molecule(replay(tr, alpha).partial, corpus[i]);
    }
  }
  report(4, "trace replay", ok == total, fmt("%d/%d replays rebuild the source", ok, total), since(t0));
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

void prefixes(const OrderContext& ctx, const MotifAnnotation& ann, std::uint32_t in,
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
    prefixes(ctx, ann, next, seen);
  }
}

void reachability(const std::vector<MolGraph>& corpus) {
  auto t0 = Clock::now();
  auto vocab = mine_vocabulary(corpus, 64);
  auto rings = mine_vocabulary_smiles({"c1ccccc1", "C1CCCCC1"}, 2);
  std::vector<MolGraph> small;
  for (const char* s : {"Cc1ccccc1", "CCO", "C1CC1CN", "OC1CCC1", "CC(C)(C)O", "c1ccncc1",
                        "C1CCCCC1", "NCC(=O)O", "O=C1CCCN1", "CC1=CC=CO1"})
    small.push_back(parse_smiles(s));
  for (const auto& m : corpus)
    if (m.num_atoms() <= 7) small.push_back(m);
  long subsets = 0, found = 0;
  for (const auto& mol : small)
    for (const auto* v : {&vocab, &rings}) {
      auto ann = annotate(mol, *v);
      OrderContext ctx(mol);
      std::set<std::uint32_t> seen;
      prefixes(ctx, ann, 0, seen);
      for (std::uint32_t s = 1; s < (1u << mol.num_atoms()); ++s) {
        if (!connected_subset(mol, s)) continue;
        bool closed = true;
        for (const auto& occ : ann.occurrences) {
          int inside = 0;
          for (int a : occ.atoms) inside += (s >> a) & 1u;
          closed &= inside == 0 || inside == static_cast<int>(occ.atoms.size());
        }
        if (!closed) continue;
        ++subsets;
        found += seen.count(s);
      }
    }
  report(5, "scaffold reachability", found == subsets && subsets > 0,
         fmt("%ld/%ld subgraphs of %zu molecules are prefixes", found, subsets, small.size()),
         since(t0));
}

void history_freedom(const Overfit& of) {
  auto t0 = Clock::now();
  const auto& model = *of.result.best;
  const auto& alpha = model.alphabet();
  std::mt19937_64 rng(106);
  int pairs = 0, identical = 0, attempts = 0;
  while (pairs < 100 && attempts < 100000) {
    ++attempts;
    std::vector<GenState> forks;
    random_rollout(alpha, rng, 40, [&](const GenState& s) {
      if (s.phase() == Phase::Bonds && s.bonds_added > 0 && legal_actions(s, alpha).bonds.size() >= 2)
        forks.push_back(s);
    });
    if (forks.empty()) continue;
    const auto& s = forks[std::uniform_int_distribution<std::size_t>(0, forks.size() - 1)(rng)];
    auto bonds = legal_actions(s, alpha).bonds;
    // Two different partners, each still legal after the other is bonded.
    bool made = false;
    for (std::size_t i = 0; i < bonds.size() && !made; ++i)
      for (std::size_t j = 0; j < bonds.size() && !made; ++j) {
        if (bonds[i].partner == bonds[j].partner) continue;
        auto ai = Action::bond(bonds[i].partner, bonds[i].order);
        auto aj = Action::bond(bonds[j].partner, bonds[j].order);
        auto si = apply(s, ai, alpha), sj = apply(s, aj, alpha);
        if (!is_legal(legal_actions(si, alpha), aj, alpha) || !is_legal(legal_actions(sj, alpha), ai, alpha))
          continue;
        auto x = apply(si, aj, alpha), y = apply(sj, ai, alpha);
        made = true;
        ++pairs;
        auto mx = legal_actions(x, alpha), my = legal_actions(y, alpha);
        auto z = standard_normal(rng, model.config().latent);
        auto [ax, sx] = action_scores(model, x, mx, z);
        auto [ay, sy] = action_scores(model, y, my, z);
        identical += x == y && ax == ay && sx == sy;
      }
  }
  report(6, "history freedom", pairs == 100 && identical == pairs,
         fmt("%d/%d paired states score bit-identically", identical, pairs), since(t0));
}

void gradient_check(const std::vector<MolGraph>& mols) {
  auto t0 = Clock::now();
  std::vector<MolGraph> set(mols.begin(), mols.begin() + 30);
  auto vocab = std::make_shared<MotifVocabulary>(mine_vocabulary(set, 16));
  auto alpha = Alphabet::from_corpus(set, vocab);
  auto props = PropertySpec::fit(set);
  auto ex = make_examples(set, *vocab, props);
  double worst = 0;
  int checked = 0;
  for (std::uint64_t b = 0; b < 10; ++b) {
    nn::Model<double> m(tiny_config(), alpha, 200 + b);
    std::mt19937_64 rng(300 + b);
    std::vector<BatchItem> items;
    auto kind = static_cast<OrderKind>(b % 4);
    for (int k = 0; k < 3; ++k) {
      int i = std::uniform_int_distribution<int>(0, static_cast<int>(ex.size()) - 1)(rng);
      items.push_back(make_batch_item(ex[i], alpha, {kind, rng()}, 0.5, rng));
    }
    std::normal_distribution<double> n;
    nn::Mat<double> noise(3, m.config().latent);
    for (Eigen::Index i = 0; i < noise.size(); ++i) noise.data()[i] = n(rng);
    auto r = nn::gradcheck(
        m.params, [&](nn::Tape<double>& t) { return batch_loss<double>(t, m, items, 0.05, 0.1, &noise).total; },
        200, rng, 1e-4);
    worst = std::max(worst, r.max_rel_error);
    checked += r.checked;
  }
  report(7, "gradient check", worst < 1e-4 && checked > 1000,
         fmt("max relative error %.2e over %d entries, 10 batches", worst, checked), since(t0));
}

void subsampling(const std::vector<MolGraph>& mols) {
  auto t0 = Clock::now();
  std::vector<MolGraph> set(mols.begin(), mols.begin() + 20);
  auto vocab = std::make_shared<MotifVocabulary>(mine_vocabulary(set, 16));
  auto alpha = Alphabet::from_corpus(set, vocab);
  auto ex = make_examples(set, *vocab, PropertySpec::fit(set));
  nn::Model<double> m(tiny_config(), alpha, 8);
  std::mt19937_64 rng(108);
  // Per-step teacher-forced losses at z = mu; a subsampled loss is the mean
  // of its steps, checked through batch_loss on a few draws.
  std::vector<BatchItem> items;
  std::vector<std::vector<double>> table;
  double full = 0;
  double path_error = 0;
  for (std::size_t i = 0; i < ex.size(); ++i) {
    items.push_back(make_batch_item(ex[i], alpha, {OrderKind::BfsRandomStart, i}, 1.0, rng));
    const auto& it = items.back();
    std::vector<double> steps;
    for (std::size_t s = 0; s < it.trace.steps.size(); ++s) {
      BatchItem one = it;
      one.steps = {static_cast<int>(s)};
      one.masks = {legal_actions(it.trace.steps[s].state, alpha)};
      nn::Tape<double> t(&m.params, false);
      LossValues v;
      batch_loss<double>(t, m, {one}, 0.0, 0.0, nullptr, &v);
      steps.push_back(v.rec);
    }
    double mean = 0;
    for (double l : steps) mean += l / steps.size();
    full += mean / ex.size();
    table.push_back(std::move(steps));
  }
  for (int k = 0; k < 5; ++k) {
    std::vector<BatchItem> half = items;
    double expect = 0;
    for (std::size_t i = 0; i < half.size(); ++i) {
      half[i].steps = subsample_steps(static_cast<int>(table[i].size()), 0.5, rng);
      half[i].masks.clear();
      double mi = 0;
      for (int s : half[i].steps) {
        half[i].masks.push_back(legal_actions(half[i].trace.steps[s].state, alpha));
        mi += table[i][s] / half[i].steps.size();
      }
      expect += mi / half.size();
    }
    nn::Tape<double> t(&m.params, false);
    LossValues v;
    batch_loss<double>(t, m, half, 0.0, 0.0, nullptr, &v);
    path_error = std::max(path_error, std::abs(v.rec - expect));
  }
  const int draws = 10000;
  double acc = 0, acc2 = 0;
  for (int d = 0; d < draws; ++d) {
    double x = 0;
    for (const auto& steps : table) {
      auto idx = subsample_steps(static_cast<int>(steps.size()), 0.5, rng);
      double mi = 0;
      for (int s : idx) mi += steps[s] / idx.size();
      x += mi / table.size();
    }
    acc += x;
    acc2 += x * x;
  }
  double mc = acc / draws;
  double se = std::sqrt(std::max(acc2 / draws - mc * mc, 0.0) / draws);
  double zscore = se > 0 ? std::abs(mc - full) / se : 0.0;
  report(8, "subsampling unbiased", zscore <= 3.0 && path_error < 1e-12,
         fmt("MC %.6f vs full %.6f, |z| = %.2f, loss-path error %.1e", mc, full, zscore, path_error),
         since(t0));
}

void overfit(Overfit& of) {
  auto t0 = Clock::now();
  of.cfg = overfit_config();
  of.result = train(of.mols, {}, of.vocab, of.cfg);
  double train_secs = since(t0);
  const auto& model = *of.result.best;
  auto ex = make_examples(of.mols, *of.vocab, of.result.properties);
  auto v = evaluate(model, ex, of.cfg.order, of.cfg.loss.beta_target, of.cfg.loss.property_weight,
                    of.cfg.loss.batch_node_cap);
  auto dec = decode_many(model, encode_means(model, of.mols), nullptr, lenient());
  int recon = 0;
  for (std::size_t i = 0; i < of.mols.size(); ++i) recon += molecule_key(dec[i]) == molecule_key(of.mols[i]);
  int n = static_cast<int>(of.mols.size());
  double secs = since(t0);
  report(9, "overfit", v.accuracy() >= 0.95 && recon >= 0.9 * n && of.result.steps <= 10000 && secs < 1800,
         fmt("step accuracy %.4f, reconstructed %d/%d, %ld steps, training %.0fs", v.accuracy(), recon, n,
             of.result.steps, train_secs),
         secs);
}

void beta_machinery() {
  auto t0 = Clock::now();
  bool ok = true;
  for (double target : {0.01, 0.015, 0.02}) {
    LossConfig c;
    c.beta_target = target;
    c.warmup_steps = 5000;
    ok &= beta_schedule(5000, c) == target;
  }
  ok &= beta_for_vocab(32) == 0.01 && beta_for_vocab(64) == 0.015 && beta_for_vocab(128) == 0.02;
  report(10, "beta machinery", ok,
         fmt("beta_for_vocab 32/64/128 = %.17g/%.17g/%.17g", beta_for_vocab(32), beta_for_vocab(64),
             beta_for_vocab(128)),
         since(t0));
}

void kl_closed_form() {
  auto t0 = Clock::now();
  double ref = 0.5 * (4.0 - 1.0 - std::log(4.0));
  double scalar = kl_divergence({0.0}, {2.0});
  nn::Tape<double> t(nullptr, false);
  nn::Mat<double> mu = nn::Mat<double>::Zero(1, 1), ls = nn::Mat<double>::Constant(1, 1, std::log(2.0));
  double tape = t.scalar(nn::gaussian_kl(t, t.constant(mu), t.constant(ls), 1.0));
  double err = std::max(std::abs(scalar - ref), std::abs(tape - ref));
  report(11, "KL closed form", err <= 1e-12, fmt("kl(0, 2) = %.17g, error %.1e", scalar, err), since(t0));
}

void constrained_ordering(const Overfit& of) {
  auto t0 = Clock::now();
  const auto& model = *of.result.best;
  auto scaffold = parse_smiles("c1ccccc1");
  Objective obj{&scaffold, true, {}};
  SwarmConfig cfg;
  cfg.particles = 20;
  cfg.iterations = 10;
  std::vector<MolGraph> pool;
  for (const auto& m : of.mols)
    if (heavy_atom_count(m) < 25) pool.push_back(m);
  int dominated = 0;
  for (int run = 0; run < 10; ++run) {
    std::mt19937_64 rng(400 + run);
    std::vector<MolGraph> seeds;
    for (int k = 0; k < 3; ++k)
      seeds.push_back(pool[std::uniform_int_distribution<std::size_t>(0, pool.size() - 1)(rng)]);
    auto score = [&](const MolGraph& m) { return obj(m); };
    auto con = swarm_optimize(model, score, seeds, cfg, 500 + run, &scaffold, lenient());
    auto unc = swarm_optimize(model, score, seeds, cfg, 500 + run, nullptr, lenient());
    bool weak = con.curve.size() == unc.curve.size();
    for (std::size_t i = 0; weak && i < con.curve.size(); ++i)
      weak = con.curve[i].mean_top >= unc.curve[i].mean_top;
    dominated += weak;
  }
  report(12, "constrained ordering", dominated >= 9,
         fmt("constrained curve weakly dominates in %d/10 runs", dominated), since(t0));
}

void grid_protocol(const Overfit& of) {
  auto t0 = Clock::now();
  const auto& model = *of.result.best;
  int success = 0, exact = 0, witness = 0;
  for (int run = 0; run < 10; ++run) {
    std::mt19937_64 rng(600 + run);
    const auto& mol = of.mols[run * 7 % of.mols.size()];
    auto g = neighborhood_grid(model, mol, rng, nullptr);
    if (!g.success) continue;
    ++success;
    std::set<std::string> keys;
    for (const auto& c : g.cells) keys.insert(c.key);
    exact += g.cells.size() == 25 && keys.size() == 25 && !keys.count("");
    auto half = decode_grid(model, encode_mean(model, mol), g.directions, g.step / 2, 5, nullptr);
    witness += half.distinct < 25;
  }
  report(13, "grid protocol", exact == success && witness >= 8,
         fmt("%d/10 found, %d with 25 distinct, halving breaks %d/10", success, exact, witness), since(t0));
}

}  // namespace

int main() {
  auto t0 = Clock::now();
  auto corpus = mt::read_corpus("corpus.smi", 1000);
  Overfit of;
  of.mols = mt::read_corpus("overfit100.smi");
  of.vocab = std::make_shared<MotifVocabulary>(mine_vocabulary(of.mols, 32));

  beta_machinery();
  kl_closed_form();
  round_trip(corpus);
  trace_replay(corpus);
  reachability(corpus);
  gradient_check(of.mols);
  subsampling(of.mols);
  overfit(of);
  validity(of);
  scaffold_guarantee(of);
  history_freedom(of);
  constrained_ordering(of);
  grid_protocol(of);
  std::printf("%d criteria failed, %.0fs total\n", failures, since(t0));
  return failures ? 1 : 0;
}
