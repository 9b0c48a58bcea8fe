#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>
#include <vector>

#include "moler/decoder/statemachine.hpp"
#include "moler/genorder/genorder.hpp"
#include "moler/motifs/motifs.hpp"
#include "moler/nn/model.hpp"
#include "moler/vae/properties.hpp"

namespace moler {

struct LossConfig {
  double beta_target = 0.01;
  int warmup_steps = 5000;
  double property_weight = 0.1;
  double subsample_fraction = 0.5;
  int batch_node_cap = 2500;

  void validate() const {
    if (!(beta_target > 0)) throw std::invalid_argument("beta_target must be positive");
    if (warmup_steps < 0) throw std::invalid_argument("warmup_steps must be non-negative");
    if (!(subsample_fraction > 0 && subsample_fraction <= 1))
      throw std::invalid_argument("subsample_fraction must lie in (0, 1]");
    if (batch_node_cap < 1) throw std::invalid_argument("batch_node_cap must be positive");
  }
};

inline double beta_schedule(long step, const LossConfig& cfg) {
  if (step < 0) throw std::invalid_argument("negative step");
  if (cfg.warmup_steps == 0 || step >= cfg.warmup_steps) return cfg.beta_target;
  return cfg.beta_target * static_cast<double>(step) / cfg.warmup_steps;
}

inline double beta_for_vocab(long n) {
  if (n < 0) throw std::invalid_argument("negative vocabulary size");
  if (n <= 32) return 0.01;
  // (2 + doublings) / 200 keeps powers of two exact: 0.015, 0.02, ...
  return (2.0 + std::log2(static_cast<double>(n) / 32.0)) / 200.0;
}

/// 0.5 * sum (mu^2 + sigma^2 - 1 - ln sigma^2).
inline double kl_divergence(const std::vector<double>& mu, const std::vector<double>& sigma) {
  if (mu.size() != sigma.size()) throw std::invalid_argument("kl: size mismatch");
  double s = 0;
  for (std::size_t i = 0; i < mu.size(); ++i) {
    if (!(sigma[i] > 0)) throw std::invalid_argument("kl: sigma must be positive");
    s += mu[i] * mu[i] + sigma[i] * sigma[i] - 1.0 - std::log(sigma[i] * sigma[i]);
  }
  return 0.5 * s;
}

/// Cross-entropy between softmax(logits) and the uniform distribution over
/// `targets`. Entries with -inf logits are masked out.
inline double uniform_target_cross_entropy(const std::vector<double>& logits,
                                           const std::vector<int>& targets) {
  if (targets.empty()) throw std::invalid_argument("empty target set");
  double mx = -std::numeric_limits<double>::infinity();
  for (double l : logits) mx = std::max(mx, l);
  double z = 0;
  for (double l : logits)
    if (l != -std::numeric_limits<double>::infinity()) z += std::exp(l - mx);
  double lse = mx + std::log(z);
  double loss = 0;
  for (int t : targets) loss -= (logits.at(t) - lse) / targets.size();
  return loss;
}

/// A training molecule with what the loss needs precomputed.
struct Example {
  MolGraph mol;
  MotifAnnotation ann;
  std::vector<double> properties;  // normalized
};

inline Example make_example(MolGraph mol, const MotifVocabulary& vocab, const PropertySpec& spec) {
  Example e;
  e.ann = annotate(mol, vocab);
  e.properties = spec.normalized(mol);
  e.mol = std::move(mol);
  return e;
}

/// One molecule of a batch: its trace and the teacher-forced steps used.
struct BatchItem {
  const Example* example = nullptr;
  GenerationTrace trace;
  std::vector<int> steps;
  std::vector<ActionMask> masks;  // per used step
};

inline BatchItem make_batch_item(const Example& ex, const Alphabet& alpha,
                                 const OrderStrategy& order, double fraction,
                                 std::mt19937_64& rng) {
  BatchItem item;
  item.example = &ex;
  std::mt19937_64 order_rng(rng());
  // Any remaining bond is a valid target, so train on every order of them;
  // otherwise greedy decoding can pick one that leads to an unseen state.
  item.trace = expand_trace(compute_order(ex.mol, ex.ann, order, order_rng), ex.mol, ex.ann,
                            alpha, order, &order_rng);
  int n = static_cast<int>(item.trace.steps.size());
  if (fraction >= 1.0) {
    item.steps.resize(n);
    std::iota(item.steps.begin(), item.steps.end(), 0);
  } else {
    item.steps = subsample_steps(n, fraction, rng);
  }
  for (int s : item.steps) item.masks.push_back(legal_actions(item.trace.steps[s].state, alpha));
  return item;
}

inline int batch_item_nodes(const BatchItem& item) {
  int n = item.example->mol.num_atoms();
  for (int s : item.steps) n += item.trace.steps[s].state.partial.num_atoms();
  return n;
}

template <class T>
struct LossTerms {
  nn::Var rec, kl, prop, total;
};

struct LossValues {
  double rec = 0, kl = 0, prop = 0, total = 0, beta = 0;
  int steps = 0;
  int correct = 0;  // argmax inside the valid target set

  double accuracy() const { return steps ? static_cast<double>(correct) / steps : 0.0; }
};

/// total = rec + beta * kl + property_weight * prop. Reconstruction is the
/// mean step loss per molecule, averaged over molecules; KL and property
/// terms are per-molecule averages. `noise` (molecules x latent) may be null
/// to decode from the means.
template <class T>
LossTerms<T> batch_loss(nn::Tape<T>& t, const nn::Model<T>& model,
                        const std::vector<BatchItem>& items, double beta,
                        double property_weight, const nn::Mat<T>* noise,
                        LossValues* values = nullptr) {
  if (items.empty()) throw std::invalid_argument("empty batch");
  int B = static_cast<int>(items.size());
  std::vector<const MolGraph*> mols;
  std::vector<const std::vector<int>*> motif_of;
  for (const auto& it : items) {
    mols.push_back(&it.example->mol);
    motif_of.push_back(&it.example->ann.motif_of);
  }
  auto enc = model.encode(t, model.molecule_batch(mols, motif_of), noise);

  std::vector<const GenState*> states;
  std::vector<const ActionMask*> masks;
  std::vector<const TraceStep*> steps;
  std::vector<int> latent_row;
  std::vector<T> group_weight;
  for (int b = 0; b < B; ++b) {
    const auto& it = items[b];
    if (it.steps.empty()) throw std::invalid_argument("batch item without steps");
    for (std::size_t k = 0; k < it.steps.size(); ++k) {
      const auto& st = it.trace.steps[it.steps[k]];
      steps.push_back(&st);
      states.push_back(&st.state);
      masks.push_back(&it.masks[k]);
      latent_row.push_back(b);
      group_weight.push_back(static_cast<T>(1.0 / (B * static_cast<double>(it.steps.size()))));
    }
  }
  auto scored = model.score(t, states, masks, nn::gather_rows(t, enc.z, latent_row));
  const auto& cand = scored.candidates;
  std::vector<int> hits(states.size(), 0);
  std::vector<char> is_target(cand.actions.size(), 0);
  for (std::size_t i = 0; i < cand.actions.size(); ++i) {
    const auto& vt = steps[cand.group[i]]->valid_targets;
    if (std::find(vt.begin(), vt.end(), cand.actions[i]) != vt.end()) {
      is_target[i] = 1;
      ++hits[cand.group[i]];
    }
  }
  std::vector<T> target(cand.actions.size(), T(0));
  for (std::size_t i = 0; i < cand.actions.size(); ++i)
    if (is_target[i]) target[i] = T(1) / static_cast<T>(hits[cand.group[i]]);
  for (std::size_t s = 0; s < states.size(); ++s)
    if (hits[s] != static_cast<int>(steps[s]->valid_targets.size()))
      throw StateError("a valid target is not a legal action");

  LossTerms<T> out;
  out.rec = nn::grouped_cross_entropy(t, scored.scores, cand.group, target, group_weight);
  out.kl = nn::gaussian_kl(t, enc.mu, enc.log_sigma, static_cast<T>(1.0 / B));
  int P = model.config().num_properties;
  nn::Mat<T> props(B, P);
  for (int b = 0; b < B; ++b)
    for (int p = 0; p < P; ++p) props(b, p) = static_cast<T>(items[b].example->properties.at(p));
  out.prop = nn::squared_error(t, model.predict_properties(t, enc.z), std::move(props),
                               static_cast<T>(1.0 / (B * std::max(P, 1))));
  out.total = nn::add(t, out.rec,
                      nn::add(t, nn::scale(t, out.kl, static_cast<T>(beta)),
                              nn::scale(t, out.prop, static_cast<T>(property_weight))));
  if (values) {
    values->rec = t.scalar(out.rec);
    values->kl = t.scalar(out.kl);
    values->prop = t.scalar(out.prop);
    values->total = t.scalar(out.total);
    values->beta = beta;
    values->steps = static_cast<int>(states.size());
    const auto& sc = t.value(scored.scores);
    std::vector<int> best(states.size(), -1);
    for (std::size_t i = 0; i < cand.actions.size(); ++i) {
      int g = cand.group[i];
      if (best[g] < 0 || sc(i, 0) > sc(best[g], 0)) best[g] = static_cast<int>(i);
    }
    values->correct = 0;
    for (int b : best) values->correct += is_target[b];
  }
  return out;
}

}  // namespace moler
