#pragma once

#include <algorithm>
#include <functional>
#include <map>
#include <ostream>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "moler/chem/kekule.hpp"
#include "moler/latent/decode.hpp"

namespace moler {

struct SwarmConfig {
  int particles = 50;
  int iterations = 20;
  double inertia = 0.72;
  double cognitive = 1.49;
  double social = 1.49;
  double clip = 3.0;     // per coordinate, in prior standard deviations
  double init_noise = 0.5;  // spread of particles around their seed encoding
  int top_k = 10;

  void validate() const {
    if (particles < 1 || iterations < 1 || top_k < 1)
      throw std::invalid_argument("swarm sizes must be positive");
    if (inertia <= 0 || cognitive <= 0 || social <= 0 || clip <= 0 || init_noise < 0)
      throw std::invalid_argument("swarm coefficients must be positive");
  }
};

struct ScoredMolecule {
  std::string key;
  MolGraph mol;
  double score = 0;
};

struct SwarmPoint {
  int iteration = 0;
  double mean_top = 0;  // mean score of the best `top_k` distinct molecules so far
  double best = 0;
};

struct SwarmResult {
  std::vector<ScoredMolecule> top;  // descending score
  std::vector<SwarmPoint> curve;    // one entry per iteration, 0 = initial swarm
};

/// Particle swarm in latent space. Iteration 0 scores the initial particles;
/// every later iteration applies one velocity/position update.
inline SwarmResult swarm_optimize(const nn::Model<float>& model,
                                  const std::function<double(const MolGraph&)>& score,
                                  const std::vector<MolGraph>& seeds, const SwarmConfig& cfg,
                                  std::uint64_t rng_seed, const MolGraph* scaffold = nullptr,
                                  const DecodeOptions& opt = {}) {
  cfg.validate();
  if (seeds.empty()) throw std::invalid_argument("swarm needs at least one seed molecule");
  std::mt19937_64 rng(rng_seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto anchors = encode_means(model, seeds);
  int D = model.config().latent;
  int P = cfg.particles;

  using Vec = std::vector<double>;
  std::vector<Vec> x(P, Vec(D)), v(P, Vec(D, 0.0)), pbest(P);
  std::vector<double> pscore(P, -1.0);
  Vec gbest;
  double gscore = -1.0;
  for (int p = 0; p < P; ++p) {
    const auto& a = anchors[p % anchors.size()];
    bool exact = p < static_cast<int>(anchors.size());
    for (int d = 0; d < D; ++d)
      x[p][d] = std::clamp(a[d] + (exact ? 0.0 : cfg.init_noise * normal(rng)), -cfg.clip, cfg.clip);
  }

  std::map<std::string, ScoredMolecule> found;
  SwarmResult res;
  auto evaluate_all = [&](int iteration) {
    std::vector<Latent> zs;
    for (const auto& xp : x) zs.emplace_back(xp.begin(), xp.end());
    auto mols = decode_many(model, zs, scaffold, opt);
    for (int p = 0; p < P; ++p) {
      auto& mol = mols[p];
      auto key = molecule_key(mol);
      auto it = found.find(key);
      double s;
      if (it != found.end()) {
        s = it->second.score;
      } else {
        s = score(mol);
        found.emplace(key, ScoredMolecule{key, std::move(mol), s});
      }
      if (s > pscore[p]) {
        pscore[p] = s;
        pbest[p] = x[p];
      }
      if (s > gscore) {
        gscore = s;
        gbest = x[p];
      }
    }
    std::vector<double> scores;
    for (const auto& [k, m] : found) scores.push_back(m.score);
    std::sort(scores.rbegin(), scores.rend());
    int n = std::min<int>(cfg.top_k, static_cast<int>(scores.size()));
    double sum = 0;
    for (int i = 0; i < n; ++i) sum += scores[i];
    res.curve.push_back({iteration, sum / n, gscore});
  };

  evaluate_all(0);
  for (int it = 1; it <= cfg.iterations; ++it) {
    for (int p = 0; p < P; ++p)
      for (int d = 0; d < D; ++d) {
        v[p][d] = cfg.inertia * v[p][d] + cfg.cognitive * unit(rng) * (pbest[p][d] - x[p][d]) +
                  cfg.social * unit(rng) * (gbest[d] - x[p][d]);
        x[p][d] = std::clamp(x[p][d] + v[p][d], -cfg.clip, cfg.clip);
      }
    evaluate_all(it);
  }

  for (auto& [k, m] : found) res.top.push_back(std::move(m));
  std::stable_sort(res.top.begin(), res.top.end(),
                   [](const ScoredMolecule& a, const ScoredMolecule& b) { return a.score > b.score; });
  if (static_cast<int>(res.top.size()) > cfg.top_k) res.top.resize(cfg.top_k);
  return res;
}

inline void write_swarm_curve(std::ostream& out, const std::vector<SwarmPoint>& curve) {
  out << "iteration,mean_top10,best\n";
  for (const auto& p : curve) out << p.iteration << ',' << p.mean_top << ',' << p.best << '\n';
}

}  // namespace moler
