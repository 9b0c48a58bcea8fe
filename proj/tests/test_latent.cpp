#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <set>
#include <sstream>

#include "moler/chem/match.hpp"
#include "moler/chem/smiles.hpp"
#include "moler/latent/explore.hpp"
#include "moler/latent/gmm.hpp"
#include "moler/latent/metrics.hpp"
#include "moler/latent/swarm.hpp"
#include "moler/vae/train.hpp"
#include "test_util.hpp"

using namespace moler;
namespace mt = moler::testing;

namespace {

struct Fixture {
  std::vector<MolGraph> mols;
  std::shared_ptr<const MotifVocabulary> vocab;
  std::unique_ptr<nn::Model<float>> model;
};

const Fixture& fixture() {
  static const Fixture f = [] {
    Fixture x;
    x.mols = mt::read_corpus("overfit100.smi", 40);
    x.vocab = std::make_shared<MotifVocabulary>(mine_vocabulary(x.mols, 16));
    TrainConfig cfg;
    cfg.model.layers = 2;
    cfg.model.hidden = 16;
    cfg.model.latent = 8;
    cfg.model.encoder_heads = 4;
    cfg.model.decoder_heads = 2;
    cfg.model.head_dim = 4;
    cfg.model.motif_dim = 8;
    cfg.model.mlp_hidden = 16;
    cfg.seed = 17;
    cfg.order = {OrderKind::Canonical, 0};
    cfg.loss.beta_target = 0.001;
    cfg.loss.warmup_steps = 0;
    cfg.adam.lr = 3e-3;
    cfg.max_steps = 300;
    cfg.valid_every = 1000;
    // An untrained decoder rarely chooses to stop, so give it a short fit.
    x.model = train(x.mols, {}, x.vocab, cfg).best;
    return x;
  }();
  return f;
}

DecodeOptions roomy() { return {}; }

bool valid_output(const MolGraph& m) { return !m.empty() && is_valid_molecule(m) && is_connected(m); }

}  // namespace

// ---- mixture model -------------------------------------------------------

TEST(Gmm, SinglePoint) {
  std::mt19937_64 rng(1);
  auto g = fit_gmm({{1.5, -2.0, 0.25}}, 1, 5, rng);
  EXPECT_EQ(g.mean[0], (std::vector<double>{1.5, -2.0, 0.25}));
  for (double v : g.variance[0]) EXPECT_EQ(v, kGmmVarianceFloor);
  EXPECT_EQ(g.weight[0], 1.0);
}

TEST(Gmm, TwoClusters) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n(0.0, 0.3);
  std::vector<std::vector<double>> x;
  double sum[2][2] = {{0, 0}, {0, 0}};
  for (int i = 0; i < 400; ++i) {
    double c = i % 2 ? 5.0 : -5.0;
    x.push_back({c + n(rng), -c + n(rng)});
    sum[i % 2][0] += x.back()[0];
    sum[i % 2][1] += x.back()[1];
  }
  // Clusters this far apart give responsibilities of 0 or 1, so EM lands on
  // the per-cluster sample means.
  auto g = fit_gmm(x, 2, 50, rng);
  int hi = g.mean[0][0] > g.mean[1][0] ? 0 : 1;
  EXPECT_NEAR(g.mean[hi][0], sum[1][0] / 200, 1e-9);
  EXPECT_NEAR(g.mean[hi][1], sum[1][1] / 200, 1e-9);
  EXPECT_NEAR(g.mean[1 - hi][0], sum[0][0] / 200, 1e-9);
  EXPECT_NEAR(g.mean[1 - hi][1], sum[0][1] / 200, 1e-9);
  EXPECT_NEAR(g.weight[hi], 0.5, 1e-9);
  EXPECT_NEAR(g.weight[0] + g.weight[1], 1.0, 1e-12);
  for (std::size_t i = 1; i < g.log_likelihood.size(); ++i)
    EXPECT_GE(g.log_likelihood[i], g.log_likelihood[i - 1] - 1e-9);
}

TEST(Gmm, MonotoneOnOverlappingData) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<std::vector<double>> x(300, std::vector<double>(4));
  for (auto& p : x)
    for (auto& v : p) v = n(rng) * (1 + std::abs(n(rng)));
  auto g = fit_gmm(x, 6, 80, rng);
  for (std::size_t i = 1; i < g.log_likelihood.size(); ++i)
    EXPECT_GE(g.log_likelihood[i], g.log_likelihood[i - 1] - 1e-9);
  for (const auto& v : g.variance)
    for (double s : v) EXPECT_GE(s, kGmmVarianceFloor);
}

TEST(Gmm, TooFewPoints) {
  std::mt19937_64 rng(4);
  EXPECT_THROW(fit_gmm({{0.0}, {1.0}}, 3, 5, rng), GmmError);
}

// ---- scores and metrics --------------------------------------------------

TEST(Score, HeavyAtomRamp) {
  EXPECT_EQ(hac_score(27), 1.0);
  EXPECT_EQ(hac_score(25), 1.0);
  EXPECT_EQ(hac_score(30), 1.0);
  EXPECT_EQ(hac_score(20), 0.5);
  EXPECT_EQ(hac_score(35), 0.5);
  EXPECT_EQ(hac_score(15), 0.0);
  EXPECT_EQ(hac_score(40), 0.0);
  EXPECT_EQ(hac_score(3), 0.0);
}

TEST(Score, Components) {
  auto scaffold = parse_smiles("c1ccccc1");
  Objective obj{&scaffold, true, {}};
  auto self = obj.evaluate(scaffold);
  EXPECT_EQ(self.scaffold_match, 1.0);
  EXPECT_EQ(self.hac, 0.0);
  EXPECT_EQ(self.combined, 0.5);
  auto other = obj.evaluate(parse_smiles("C1CCCCC1"));
  EXPECT_EQ(other.scaffold_match, 0.0);
  // Either Kekule assignment of the ring matches.
  EXPECT_EQ(obj.evaluate(parse_smiles("C1=CC=CC=C1CC")).scaffold_match, 1.0);
  EXPECT_EQ(obj.evaluate(parse_smiles("C=1C=CC=CC=1CC")).scaffold_match, 1.0);
  Objective hac_only{nullptr, true, {}};
  EXPECT_EQ(hac_only(parse_smiles("CCCCCCCCCCCCCCCCCCCC")), 0.5);
}

TEST(Metrics, Examples) {
  auto a = parse_smiles("CCO"), b = parse_smiles("OCC"), c = parse_smiles("c1ccccc1");
  auto m = eval_metrics({a, b, c}, {parse_smiles("CCN")});
  EXPECT_NEAR(m.uniqueness, 2.0 / 3.0, 1e-15);
  EXPECT_EQ(m.validity, 1.0);
  EXPECT_EQ(m.novelty, 1.0);
  auto sub = eval_metrics({a, c}, {a, b, c, parse_smiles("CC")});
  EXPECT_EQ(sub.novelty, 0.0);
  std::vector<MolGraph> set{a, c, parse_smiles("CCCC(=O)N"), parse_smiles("C1CC1Cl")};
  EXPECT_NEAR(descriptor_distance(set, set), 0.0, 1e-9);
  EXPECT_GT(descriptor_distance(set, {c, c, parse_smiles("c1ccccc1Br")}), 0.1);
  EXPECT_THROW(eval_metrics({}, set), std::invalid_argument);
  for (double v : {m.validity, m.uniqueness, m.novelty}) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(MotifSimilarity, RankedPairs) {
  const auto& fx = fixture();
  for (auto side : {EmbeddingSide::Encoder, EmbeddingSide::Decoder}) {
    auto vecs = motif_vectors(*fx.model, side);
    ASSERT_EQ(static_cast<int>(vecs.size()), fx.vocab->size());
    EXPECT_NEAR(cosine_similarity(vecs[0], vecs[0]), 1.0, 1e-12);
    auto pairs = motif_embedding_similarity(*fx.model, side, 10);
    ASSERT_EQ(pairs.size(), 10u);
    std::set<std::pair<int, int>> seen;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      EXPECT_LT(pairs[i].a, pairs[i].b);
      EXPECT_TRUE(seen.insert({pairs[i].a, pairs[i].b}).second);
      if (i) {
        EXPECT_GE(pairs[i - 1].cosine, pairs[i].cosine);
      }
    }
    std::ostringstream out;
    write_motif_pairs(out, pairs);
    std::istringstream in(out.str());
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "rank\tcosine\tmotif_a\tmotif_b");
    int rows = 0;
    while (std::getline(in, line)) {
      ++rows;
      EXPECT_EQ(std::count(line.begin(), line.end(), '\t'), 3);
      EXPECT_EQ(line.substr(0, line.find('\t')), std::to_string(rows));
    }
    EXPECT_EQ(rows, 10);
  }
  auto one = std::make_shared<MotifVocabulary>(mine_vocabulary_smiles({"c1ccccc1"}, 4));
  ASSERT_EQ(one->size(), 1);
  nn::Model<float> small(fx.model->config(), Alphabet::standard(one), 1);
  EXPECT_THROW(motif_embedding_similarity(small, EmbeddingSide::Encoder, 5), std::invalid_argument);
}

// ---- decoding ------------------------------------------------------------

TEST(Decode, PriorSamplesAreValid) {
  const auto& fx = fixture();
  std::mt19937_64 rng(5);
  auto greedy = sample_prior(*fx.model, 60, rng, nullptr, roomy());
  for (const auto& m : greedy) EXPECT_TRUE(valid_output(m)) << write_smiles(m);
  auto opt = roomy();
  opt.mode = DecodeMode::Stochastic;
  auto stochastic = sample_prior(*fx.model, 60, rng, nullptr, opt);
  for (const auto& m : stochastic) EXPECT_TRUE(valid_output(m)) << write_smiles(m);
}

TEST(Decode, GreedyIsDeterministicAndBatchInvariant) {
  const auto& fx = fixture();
  std::mt19937_64 rng(6);
  std::vector<Latent> zs;
  for (int i = 0; i < 8; ++i) zs.push_back(standard_normal(rng, fx.model->config().latent));
  auto batch = decode_many(*fx.model, zs, nullptr, roomy());
  for (int i = 0; i < 8; ++i) {
    auto a = decode(*fx.model, zs[i], nullptr, roomy());
    auto b = decode(*fx.model, zs[i], nullptr, roomy());
    EXPECT_EQ(molecule_key(a), molecule_key(b));
    EXPECT_EQ(molecule_key(a), molecule_key(batch[i]));
  }
}

TEST(Decode, ScaffoldContained) {
  const auto& fx = fixture();
  std::mt19937_64 rng(7);
  auto opt = roomy();
  opt.mode = DecodeMode::Stochastic;
  for (const char* s : {"c1ccccc1", "C1CCNCC1", "O=C(N)c1ccccc1"}) {
    auto scaffold = parse_smiles(s);
    auto out = sample_prior(*fx.model, 30, rng, &scaffold, opt);
    for (const auto& m : out) {
      EXPECT_TRUE(valid_output(m));
      EXPECT_TRUE(contains_subgraph(m, scaffold)) << s << " -> " << write_smiles(m);
    }
  }
}

TEST(Decode, StepCap) {
  const auto& fx = fixture();
  DecodeOptions opt;
  opt.max_actions = 1;
  Latent z(fx.model->config().latent, 0.0f);
  EXPECT_THROW(decode(*fx.model, z, nullptr, opt), DecodeError);
}

// ---- latent exploration --------------------------------------------------

TEST(Explore, Interpolation) {
  const auto& fx = fixture();
  auto path = interpolate(*fx.model, fx.mols[0], fx.mols[1], 11, nullptr, roomy());
  ASSERT_FALSE(path.empty());
  auto z = encode_means(*fx.model, {fx.mols[0], fx.mols[1]});
  EXPECT_EQ(path.front().t, 0.0);
  EXPECT_EQ(path.front().key, molecule_key(decode(*fx.model, z[0], nullptr, roomy())));
  for (std::size_t i = 1; i < path.size(); ++i) {
    EXPECT_NE(path[i].key, path[i - 1].key);
    EXPECT_GT(path[i].t, path[i - 1].t);
  }
  auto scaffold = parse_smiles("c1ccccc1");
  for (const auto& p : interpolate(*fx.model, fx.mols[0], fx.mols[1], 6, &scaffold, roomy()))
    EXPECT_TRUE(contains_subgraph(p.mol, scaffold));
}

TEST(Explore, RandomPlaneIsOrthonormal) {
  std::mt19937_64 rng(8);
  auto d = random_plane(16, rng);
  double n0 = 0, n1 = 0, dot = 0;
  for (int i = 0; i < 16; ++i) {
    n0 += d[0][i] * d[0][i];
    n1 += d[1][i] * d[1][i];
    dot += d[0][i] * d[1][i];
  }
  EXPECT_NEAR(n0, 1.0, 1e-6);
  EXPECT_NEAR(n1, 1.0, 1e-6);
  EXPECT_NEAR(dot, 0.0, 1e-6);
}

TEST(Explore, GridStructure) {
  const auto& fx = fixture();
  std::mt19937_64 rng(9);
  GridSearch search;
  search.iterations = 8;
  auto g = neighborhood_grid(*fx.model, fx.mols[2], rng, nullptr, search);
  ASSERT_EQ(g.cells.size(), 25u);
  std::set<std::string> keys;
  for (const auto& c : g.cells) keys.insert(c.key);
  EXPECT_EQ(static_cast<int>(keys.size()), g.distinct);
  EXPECT_EQ(g.success, g.distinct == 25);
  const auto& center = g.cells[12];
  EXPECT_EQ(center.row, 2);
  EXPECT_EQ(center.col, 2);
  EXPECT_EQ(center.key, molecule_key(decode(*fx.model, encode_mean(*fx.model, fx.mols[2]))));
  EXPECT_GE(g.step, search.low);
  EXPECT_LE(g.step, search.high);
}

TEST(Swarm, ConstantScore) {
  const auto& fx = fixture();
  SwarmConfig cfg;
  cfg.particles = 6;
  cfg.iterations = 3;
  auto r = swarm_optimize(*fx.model, [](const MolGraph&) { return 1.0; }, {fx.mols[0]}, cfg, 1,
                          nullptr, roomy());
  ASSERT_EQ(r.curve.size(), 4u);
  for (const auto& p : r.curve) {
    EXPECT_EQ(p.mean_top, 1.0);
    EXPECT_EQ(p.best, 1.0);
  }
}

TEST(Swarm, ConstrainedRunAlwaysMatches) {
  const auto& fx = fixture();
  auto scaffold = parse_smiles("c1ccccc1");
  Objective obj{&scaffold, true, {}};
  SwarmConfig cfg;
  cfg.particles = 10;
  cfg.iterations = 4;
  auto r = swarm_optimize(
      *fx.model, [&](const MolGraph& m) {
        EXPECT_EQ(obj.evaluate(m).scaffold_match, 1.0);
        return obj(m);
      },
      {fx.mols[0], fx.mols[3]}, cfg, 2, &scaffold, roomy());
  for (std::size_t i = 1; i < r.curve.size(); ++i) {
    EXPECT_GE(r.curve[i].best, r.curve[i - 1].best);
    EXPECT_GE(r.curve[i].mean_top, r.curve[i - 1].mean_top);
  }
  for (std::size_t i = 1; i < r.top.size(); ++i) EXPECT_GE(r.top[i - 1].score, r.top[i].score);
  std::ostringstream out;
  write_swarm_curve(out, r.curve);
  EXPECT_EQ(out.str().substr(0, out.str().find('\n')), "iteration,mean_top10,best");
}

TEST(Posterior, ScaffoldSamples) {
  const auto& fx = fixture();
  auto scaffold = parse_smiles("c1ccccc1");
  std::mt19937_64 rng(10);
  auto opt = roomy();
  opt.mode = DecodeMode::Stochastic;
  auto out = scaffold_posterior_sample(*fx.model, fx.mols, scaffold, 20, rng, opt);
  ASSERT_EQ(out.size(), 20u);
  for (const auto& m : out) {
    EXPECT_TRUE(valid_output(m));
    EXPECT_TRUE(contains_subgraph(m, scaffold));
  }
  // Fewer matches than the default component count.
  std::vector<MolGraph> few{fx.mols.begin(), fx.mols.begin() + 3};
  few.push_back(parse_smiles("c1ccccc1C"));
  EXPECT_NO_THROW(scaffold_posterior_sample(*fx.model, few, scaffold, 2, rng, opt));
  auto absent = parse_smiles("C1CCCCCCCCCC1");
  EXPECT_THROW(scaffold_posterior_sample(*fx.model, fx.mols, absent, 2, rng), ConstraintError);
}
