#pragma once

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <numeric>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "moler/nn/adam.hpp"
#include "moler/nn/checkpoint.hpp"
#include "moler/nn/model.hpp"
#include "moler/vae/loss.hpp"

namespace moler {

class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  nn::ModelConfig model;
  LossConfig loss;
  nn::AdamConfig adam;
  OrderStrategy order{OrderKind::BfsRandomStart, 0};
  long max_steps = 10000;
  int valid_every = 500;
  int patience = 5;
  int max_batch_molecules = 0;  // 0 = node cap only
  std::uint64_t seed = 0;
  std::string out_dir;  // checkpoints and log; empty = keep in memory only
};

struct LogRow {
  long step = 0;
  LossValues train;
  std::optional<LossValues> valid;
};

struct TrainResult {
  std::unique_ptr<nn::Model<float>> best;
  PropertySpec properties;
  long steps = 0;
  long best_step = 0;
  double best_valid = std::numeric_limits<double>::infinity();
  bool early_stopped = false;
  std::vector<LogRow> log;
  double seconds = 0;
};

inline std::vector<Example> make_examples(const std::vector<MolGraph>& mols,
                                          const MotifVocabulary& vocab, const PropertySpec& spec) {
  std::vector<Example> out;
  out.reserve(mols.size());
  for (const auto& m : mols) out.push_back(make_example(m, vocab, spec));
  return out;
}

/// Deterministic full-step loss at the posterior means: molecule i uses
/// order seed `seed + i`. Values are averaged over molecules.
inline LossValues evaluate(const nn::Model<float>& model, const std::vector<Example>& data,
                           OrderStrategy order, double beta, double property_weight,
                           int node_cap, std::uint64_t seed = 0) {
  LossValues acc;
  acc.beta = beta;
  std::size_t i = 0;
  while (i < data.size()) {
    std::vector<BatchItem> items;
    int nodes = 0;
    while (i < data.size()) {
      std::mt19937_64 rng(seed + i);
      order.seed = seed + i;
      auto item = make_batch_item(data[i], model.alphabet(), order, 1.0, rng);
      int n = batch_item_nodes(item);
      if (!items.empty() && nodes + n > node_cap) break;
      nodes += n;
      items.push_back(std::move(item));
      ++i;
    }
    nn::Tape<float> t(const_cast<nn::ParamSet<float>*>(&model.params), false);
    LossValues v;
    batch_loss<float>(t, model, items, beta, property_weight, nullptr, &v);
    double w = static_cast<double>(items.size()) / data.size();
    acc.rec += w * v.rec;
    acc.kl += w * v.kl;
    acc.prop += w * v.prop;
    acc.total += w * v.total;
    acc.steps += v.steps;
    acc.correct += v.correct;
  }
  return acc;
}

inline nlohmann::json training_metadata(const TrainConfig& cfg, const PropertySpec& props,
                                        long step) {
  return {{"properties", props.to_json()},
          {"order", order_name(cfg.order.kind)},
          {"beta_target", cfg.loss.beta_target},
          {"property_weight", cfg.loss.property_weight},
          {"step", step}};
}

inline void write_log_header(std::ostream& out) {
  out << "step,rec,kl,beta,prop,total,val_total,accuracy\n";
}

inline void write_log_row(std::ostream& out, const LogRow& r) {
  out << r.step << ',' << r.train.rec << ',' << r.train.kl << ',' << r.train.beta << ','
      << r.train.prop << ',' << r.train.total << ',';
  if (r.valid) out << r.valid->total;
  out << ',' << r.train.accuracy() << '\n';
}

/// Trains from scratch. `on_log` sees every logged row as it is produced.
inline TrainResult train(const std::vector<MolGraph>& corpus, const std::vector<MolGraph>& valid,
                         std::shared_ptr<const MotifVocabulary> vocab, const TrainConfig& cfg,
                         const std::function<void(const LogRow&)>& on_log = {}) {
  if (corpus.empty()) throw std::invalid_argument("empty training corpus");
  cfg.loss.validate();
  auto t0 = std::chrono::steady_clock::now();
  std::vector<MolGraph> everything = corpus;
  everything.insert(everything.end(), valid.begin(), valid.end());
  Alphabet alpha = Alphabet::from_corpus(everything, vocab);
  TrainResult res;
  res.properties = PropertySpec::fit(corpus);
  auto train_set = make_examples(corpus, *vocab, res.properties);
  auto valid_set = make_examples(valid, *vocab, res.properties);

  nn::ModelConfig mc = cfg.model;
  mc.num_properties = res.properties.size();
  nn::Model<float> model(mc, alpha, cfg.seed);
  nn::Adam<float> opt(cfg.adam);
  std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  std::normal_distribution<float> normal(0.0f, 1.0f);

  std::unique_ptr<std::ofstream> log;
  if (!cfg.out_dir.empty()) {
    std::filesystem::create_directories(cfg.out_dir);
    log = std::make_unique<std::ofstream>(cfg.out_dir + "/train_log.csv");
    write_log_header(*log);
  }
  auto save = [&](const std::string& name, long step) {
    if (!cfg.out_dir.empty())
      nn::save_checkpoint(model, cfg.out_dir + "/" + name,
                          training_metadata(cfg, res.properties, step));
  };

  std::vector<int> perm(train_set.size());
  std::iota(perm.begin(), perm.end(), 0);
  std::size_t cursor = perm.size();
  int evals_without_improvement = 0;
  bool best_is_warm = false;
  for (long step = 0; step < cfg.max_steps; ++step) {
    std::vector<BatchItem> items;
    int nodes = 0;
    while (true) {
      if (cursor == perm.size()) {
        std::shuffle(perm.begin(), perm.end(), rng);
        cursor = 0;
      }
      OrderStrategy order = cfg.order;
      order.seed = rng();
      auto item = make_batch_item(train_set[perm[cursor]], alpha, order,
                                  cfg.loss.subsample_fraction, rng);
      int n = batch_item_nodes(item);
      if (!items.empty() && nodes + n > cfg.loss.batch_node_cap) break;
      ++cursor;
      nodes += n;
      items.push_back(std::move(item));
      if (cfg.max_batch_molecules > 0 && static_cast<int>(items.size()) >= cfg.max_batch_molecules)
        break;
      if (items.size() >= train_set.size()) break;
    }
    nn::Mat<float> noise(static_cast<Eigen::Index>(items.size()), mc.latent);
    for (Eigen::Index k = 0; k < noise.size(); ++k) noise.data()[k] = normal(rng);

    double beta = beta_schedule(step, cfg.loss);
    model.params.zero_grad();
    nn::Tape<float> t(&model.params);
    LogRow row;
    row.step = step;
    auto terms = batch_loss(t, model, items, beta, cfg.loss.property_weight, &noise, &row.train);
    if (!std::isfinite(row.train.total))
      throw TrainingDiverged("non-finite loss at step " + std::to_string(step));
    t.backward(terms.total);
    double gnorm = opt.step(model.params);
    if (!std::isfinite(gnorm))
      throw TrainingDiverged("non-finite gradient at step " + std::to_string(step));

    bool last = step + 1 == cfg.max_steps;
    if (!valid_set.empty() && ((step + 1) % cfg.valid_every == 0 || last)) {
      row.valid = evaluate(model, valid_set, cfg.order, beta_schedule(step + 1, cfg.loss),
                           cfg.loss.property_weight, cfg.loss.batch_node_cap, cfg.seed);
      if (!std::isfinite(row.valid->total))
        throw TrainingDiverged("non-finite validation loss at step " + std::to_string(step));
      // Before beta reaches its target every evaluation replaces the best
      // checkpoint; afterwards only strict improvements do.
      bool warm = step + 1 >= cfg.loss.warmup_steps;
      if (!res.best || !best_is_warm || row.valid->total < res.best_valid) {
        res.best_valid = row.valid->total;
        res.best_step = step + 1;
        res.best = std::make_unique<nn::Model<float>>(model);
        best_is_warm = warm;
        save("best.json", step + 1);
        evals_without_improvement = 0;
      } else {
        ++evals_without_improvement;
      }
    }
    res.log.push_back(row);
    if (log) write_log_row(*log, row);
    if (on_log) on_log(row);
    res.steps = step + 1;
    if (evals_without_improvement >= cfg.patience) {
      res.early_stopped = true;
      break;
    }
  }
  if (!res.best) {
    res.best = std::make_unique<nn::Model<float>>(model);
    res.best_step = res.steps;
    save("best.json", res.steps);
  }
  save("last.json", res.steps);
  res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return res;
}

}  // namespace moler
