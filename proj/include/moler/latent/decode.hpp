#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "moler/decoder/statemachine.hpp"
#include "moler/motifs/motifs.hpp"
#include "moler/nn/model.hpp"

namespace moler {

class DecodeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class DecodeMode { Greedy, Stochastic };

struct DecodeOptions {
  DecodeMode mode = DecodeMode::Greedy;
  double temperature = 1.0;
  int max_actions = 500;
  bool empty_on_cap = false;  // decode_many: yield an empty graph instead of throwing
};

using Latent = std::vector<float>;

/// Posterior means of `mols`, one row each.
inline std::vector<Latent> encode_means(const nn::Model<float>& model,
                                        const std::vector<MolGraph>& mols, int chunk = 64) {
  std::vector<Latent> out;
  const auto& vocab = model.alphabet().vocab();
  for (std::size_t i = 0; i < mols.size(); i += chunk) {
    std::size_t end = std::min(mols.size(), i + chunk);
    std::vector<MotifAnnotation> anns;
    for (std::size_t k = i; k < end; ++k) anns.push_back(annotate(mols[k], vocab));
    std::vector<const MolGraph*> ptrs;
    std::vector<const std::vector<int>*> motif_of;
    for (std::size_t k = i; k < end; ++k) {
      ptrs.push_back(&mols[k]);
      motif_of.push_back(&anns[k - i].motif_of);
    }
    nn::Tape<float> t(const_cast<nn::ParamSet<float>*>(&model.params), false);
    auto enc = model.encode(t, model.molecule_batch(ptrs, motif_of), nullptr);
    const auto& mu = t.value(enc.mu);
    for (Eigen::Index r = 0; r < mu.rows(); ++r) out.emplace_back(mu.row(r).data(), mu.row(r).data() + mu.cols());
  }
  return out;
}

inline Latent encode_mean(const nn::Model<float>& model, const MolGraph& mol) {
  return encode_means(model, {mol}).front();
}

/// Scores of the legal actions in `state` under latent `z`.
inline std::pair<std::vector<Action>, std::vector<float>> action_scores(
    const nn::Model<float>& model, const GenState& state, const ActionMask& mask, const Latent& z) {
  if (static_cast<int>(z.size()) != model.config().latent)
    throw std::invalid_argument("latent width mismatch");
  nn::Tape<float> t(const_cast<nn::ParamSet<float>*>(&model.params), false);
  nn::Mat<float> zr(1, z.size());
  std::copy(z.begin(), z.end(), zr.data());
  auto scored = model.score(t, {&state}, {&mask}, t.constant(std::move(zr)));
  const auto& s = t.value(scored.scores);
  return {scored.candidates.actions, std::vector<float>(s.data(), s.data() + s.size())};
}

/// Rolls the state machine to a terminal state from the empty graph or from
/// `scaffold`.
inline MolGraph decode(const nn::Model<float>& model, const Latent& z,
                       const MolGraph* scaffold = nullptr, const DecodeOptions& opt = {},
                       std::mt19937_64* rng = nullptr) {
  const auto& alpha = model.alphabet();
  if (opt.mode == DecodeMode::Stochastic && !rng)
    throw std::invalid_argument("stochastic decoding needs a random generator");
  GenState s = scaffold ? init_from_scaffold(*scaffold, alpha) : init_empty();
  for (int n = 0; !s.terminal; ++n) {
    if (n >= opt.max_actions)
      throw DecodeError("decoding exceeded " + std::to_string(opt.max_actions) + " actions");
    auto mask = legal_actions(s, alpha);
    auto [actions, scores] = action_scores(model, s, mask, z);
    std::size_t pick = 0;
    if (opt.mode == DecodeMode::Greedy) {
      pick = static_cast<std::size_t>(std::max_element(scores.begin(), scores.end()) - scores.begin());
    } else {
      double mx = *std::max_element(scores.begin(), scores.end());
      std::vector<double> w;
      for (float v : scores) w.push_back(std::exp((v - mx) / opt.temperature));
      std::discrete_distribution<std::size_t> d(w.begin(), w.end());
      pick = d(*rng);
    }
    s = apply(s, actions[pick], alpha);
  }
  return s.partial;
}

/// Decodes several latents in lockstep, scoring all live states of a round
/// in one batch. Stochastic picks draw from `rng` in latent order.
inline std::vector<MolGraph> decode_many(const nn::Model<float>& model,
                                         const std::vector<Latent>& zs,
                                         const MolGraph* scaffold = nullptr,
                                         const DecodeOptions& opt = {},
                                         std::mt19937_64* rng = nullptr) {
  const auto& alpha = model.alphabet();
  int L = model.config().latent;
  if (opt.mode == DecodeMode::Stochastic && !rng)
    throw std::invalid_argument("stochastic decoding needs a random generator");
  for (const auto& z : zs)
    if (static_cast<int>(z.size()) != L) throw std::invalid_argument("latent width mismatch");
  GenState start = scaffold ? init_from_scaffold(*scaffold, alpha) : init_empty();
  std::vector<GenState> states(zs.size(), start);
  std::vector<int> live;
  for (std::size_t i = 0; i < zs.size(); ++i)
    if (!states[i].terminal) live.push_back(static_cast<int>(i));
  for (int n = 0; !live.empty(); ++n) {
    if (n >= opt.max_actions && opt.empty_on_cap) {
      for (int i : live) states[i].partial = MolGraph{};
      break;
    }
    if (n >= opt.max_actions)
      throw DecodeError("decoding exceeded " + std::to_string(opt.max_actions) + " actions");
    std::vector<ActionMask> masks;
    masks.reserve(live.size());
    std::vector<const GenState*> sp;
    std::vector<const ActionMask*> mp;
    nn::Mat<float> zr(static_cast<Eigen::Index>(live.size()), L);
    for (std::size_t k = 0; k < live.size(); ++k) {
      masks.push_back(legal_actions(states[live[k]], alpha));
      std::copy(zs[live[k]].begin(), zs[live[k]].end(), zr.row(k).data());
    }
    for (std::size_t k = 0; k < live.size(); ++k) {
      sp.push_back(&states[live[k]]);
      mp.push_back(&masks[k]);
    }
    nn::Tape<float> t(const_cast<nn::ParamSet<float>*>(&model.params), false);
    auto scored = model.score(t, sp, mp, t.constant(std::move(zr)));
    const auto& sc = t.value(scored.scores);
    const auto& cand = scored.candidates;
    std::vector<std::vector<int>> of(live.size());
    for (std::size_t i = 0; i < cand.group.size(); ++i) of[cand.group[i]].push_back(static_cast<int>(i));
    std::vector<int> next;
    for (std::size_t k = 0; k < live.size(); ++k) {
      const auto& idx = of[k];
      int pick = idx[0];
      if (opt.mode == DecodeMode::Greedy) {
        for (int i : idx)
          if (sc(i, 0) > sc(pick, 0)) pick = i;
      } else {
        double mx = sc(idx[0], 0);
        for (int i : idx) mx = std::max(mx, static_cast<double>(sc(i, 0)));
        std::vector<double> w;
        for (int i : idx) w.push_back(std::exp((sc(i, 0) - mx) / opt.temperature));
        std::discrete_distribution<std::size_t> d(w.begin(), w.end());
        pick = idx[d(*rng)];
      }
      auto& st = states[live[k]];
      st = apply(st, cand.actions[pick], alpha);
      if (!st.terminal) next.push_back(live[k]);
    }
    live = std::move(next);
  }
  std::vector<MolGraph> out;
  out.reserve(states.size());
  for (auto& s : states) out.push_back(std::move(s.partial));
  return out;
}

inline std::vector<float> standard_normal(std::mt19937_64& rng, int n) {
  std::normal_distribution<float> d(0.0f, 1.0f);
  std::vector<float> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

/// Decodes `count` latents drawn from the standard normal prior.
inline std::vector<MolGraph> sample_prior(const nn::Model<float>& model, int count,
                                          std::mt19937_64& rng, const MolGraph* scaffold = nullptr,
                                          const DecodeOptions& opt = {}, int chunk = 64) {
  std::vector<MolGraph> out;
  out.reserve(count);
  for (int i = 0; i < count; i += chunk) {
    std::vector<Latent> zs;
    for (int k = i; k < std::min(count, i + chunk); ++k)
      zs.push_back(standard_normal(rng, model.config().latent));
    for (auto& m : decode_many(model, zs, scaffold, opt, &rng)) out.push_back(std::move(m));
  }
  return out;
}

}  // namespace moler
