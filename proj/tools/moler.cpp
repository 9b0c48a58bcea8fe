#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "config.hpp"
#include "moler/chem/smiles.hpp"
#include "moler/latent/explore.hpp"
#include "moler/latent/metrics.hpp"
#include "moler/latent/swarm.hpp"
#include "moler/motifs/motifs.hpp"
#include "moler/nn/checkpoint.hpp"
#include "moler/util/hash.hpp"
#include "moler/util/smiles_file.hpp"
#include "moler/vae/loss.hpp"
#include "moler/vae/train.hpp"

namespace fs = std::filesystem;
using namespace moler;
using cli::KeyValueConfig;

namespace {

enum Exit { kOk = 0, kInput = 2, kDiverged = 3, kConstraint = 4, kInternal = 5 };

struct Global {
  std::optional<std::uint64_t> seed;
  std::string config_path;
  std::string manifest_path;
  int threads = 1;
  std::vector<std::string> argv;

  std::uint64_t resolved_seed() const {
    if (seed) return *seed;
    if (const char* env = std::getenv("MOLER_SEED")) {
      try {
        std::size_t pos = 0;
        auto v = std::stoull(env, &pos);
        if (pos == std::string(env).size()) return v;
      } catch (const std::exception&) {
      }
      throw InputError(std::string("MOLER_SEED is not an unsigned integer: ") + env);
    }
    return 0;
  }

  KeyValueConfig config() const {
    return config_path.empty() ? KeyValueConfig{} : KeyValueConfig::load(config_path);
  }
};

struct Manifest {
  std::string command;
  nlohmann::json config = nlohmann::json::object();
  nlohmann::json params = nlohmann::json::object();
  std::uint64_t seed = 0;
  std::vector<std::string> inputs, outputs;
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  nlohmann::json extra = nlohmann::json::object();

  void write(const Global& g, const std::string& fallback) const {
    std::string path = g.manifest_path.empty() ? fallback : g.manifest_path;
    nlohmann::ordered_json j;
    j["command"] = command;
    j["argv"] = g.argv;
    j["seed"] = seed;
    j["threads"] = g.threads;
    j["params"] = params;
    j["config"] = config;
    if (!g.config_path.empty()) j["config_file"] = {{"path", g.config_path}, {"fnv1a", file_hash(g.config_path)}};
    auto in = nlohmann::ordered_json::array();
    for (const auto& p : inputs) in.push_back({{"path", p}, {"fnv1a", file_hash(p)}});
    j["inputs"] = in;
    j["outputs"] = outputs;
    j["wall_seconds"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    j["extra"] = extra;
    std::ofstream out(path);
    if (!out) throw InputError("cannot write manifest " + path);
    out << j.dump(2) << "\n";
  }
};

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path);
  return out;
}

/// Unparsable lines are counted and skipped.
std::vector<MolGraph> read_lenient(const std::string& path, long& skipped) {
  std::vector<MolGraph> mols;
  for (const auto& r : read_smiles_lines(path)) {
    try {
      mols.push_back(parse_smiles(r.smiles));
    } catch (const SmilesError& e) {
      ++skipped;
      std::cerr << path << ":" << r.line << ": skipped: " << e.what() << "\n";
    }
  }
  return mols;
}

MolGraph parse_scaffold(const std::string& s) {
  try {
    return parse_smiles(s);
  } catch (const SmilesError& e) {
    throw ConstraintError("unparsable scaffold '" + s + "': " + e.what());
  }
}

MolGraph parse_molecule(const std::string& s) {
  try {
    return parse_smiles(s);
  } catch (const SmilesError& e) {
    throw InputError("unparsable molecule '" + s + "': " + e.what());
  }
}

std::vector<MolGraph> read_strict(const std::string& path) { return read_smiles_file(path); }

nn::Checkpoint load_model(const std::string& path) { return nn::load_checkpoint(path); }

DecodeOptions decode_options(const std::string& mode, double temperature, int max_actions) {
  DecodeOptions o;
  if (mode == "greedy") {
    o.mode = DecodeMode::Greedy;
  } else if (mode == "stochastic") {
    o.mode = DecodeMode::Stochastic;
  } else {
    throw InputError("unknown decode mode " + mode);
  }
  if (!(temperature > 0)) throw InputError("temperature must be positive");
  o.temperature = temperature;
  o.max_actions = max_actions;
  return o;
}

// ---- mine-motifs -----------------------------------------------------------

struct MineArgs {
  std::string input, out, report;
  int n = 128;
};

int run_mine(const Global& g, const MineArgs& a) {
  Manifest m;
  m.command = "mine-motifs";
  m.seed = g.resolved_seed();
  auto cfg = g.config();
  cfg.reject_unused();
  m.config = cfg.to_json();
  m.params = {{"n", a.n}};
  m.inputs = {a.input};
  if (a.n < 0) throw InputError("--n must be non-negative");
  MotifCounter counter;
  for (const auto& r : read_smiles_lines(a.input))
    if (!counter.add_smiles(r.smiles)) std::cerr << a.input << ":" << r.line << ": skipped\n";
  auto vocab = counter.top(a.n);
  open_out(a.out) << vocab.dump();
  m.outputs = {a.out};
  std::string report = a.report.empty() ? a.out + ".freq.tsv" : a.report;
  {
    auto out = open_out(report);
    out << "rank\tcount\tsmiles\n";
    int rank = 0;
    for (const auto& [key, count] : counter.ranked()) out << rank++ << '\t' << count << '\t' << key << '\n';
  }
  m.outputs.push_back(report);
  m.extra = {{"molecules", counter.molecules()},
             {"skipped", counter.skipped()},
             {"distinct_fragments", counter.counts().size()},
             {"vocab_hash", vocab.hash()}};
  std::cerr << "motifs: " << vocab.size() << " of " << counter.counts().size()
            << " distinct fragments from " << counter.molecules() << " molecules ("
            << counter.skipped() << " skipped)\n";
  m.write(g, a.out + ".manifest.json");
  return kOk;
}

// ---- train -----------------------------------------------------------------

struct TrainArgs {
  std::string input, valid, vocab, order = "bfs-random", beta = "auto", out;
  double subsample = 0.5;
  long steps = -1;
};

void apply_train_config(KeyValueConfig& c, TrainConfig& t) {
  c.get("model.layers", t.model.layers);
  c.get("model.hidden", t.model.hidden);
  c.get("model.latent", t.model.latent);
  c.get("model.encoder_heads", t.model.encoder_heads);
  c.get("model.decoder_heads", t.model.decoder_heads);
  c.get("model.head_dim", t.model.head_dim);
  c.get("model.motif_dim", t.model.motif_dim);
  c.get("model.mlp_hidden", t.model.mlp_hidden);
  c.get("model.mlp_layers", t.model.mlp_layers);
  c.get("loss.warmup_steps", t.loss.warmup_steps);
  c.get("loss.property_weight", t.loss.property_weight);
  c.get("loss.batch_node_cap", t.loss.batch_node_cap);
  c.get("adam.lr", t.adam.lr);
  c.get("adam.lr_final", t.adam.lr_final);
  c.get("adam.decay_steps", t.adam.decay_steps);
  c.get("adam.clip_norm", t.adam.clip_norm);
  c.get("train.max_steps", t.max_steps);
  c.get("train.valid_every", t.valid_every);
  c.get("train.patience", t.patience);
  c.get("train.max_batch_molecules", t.max_batch_molecules);
}

int run_train(const Global& g, const TrainArgs& a) {
  Manifest m;
  m.command = "train";
  m.seed = g.resolved_seed();
  TrainConfig cfg;
  cfg.seed = m.seed;
  auto kv = g.config();
  apply_train_config(kv, cfg);
  kv.reject_unused();
  m.config = kv.to_json();
  if (a.steps >= 0) cfg.max_steps = a.steps;
  try {
    cfg.order.kind = parse_order_kind(a.order);
  } catch (const std::invalid_argument& e) {
    throw InputError(e.what());
  }
  cfg.loss.subsample_fraction = a.subsample;

  std::ifstream vin(a.vocab);
  if (!vin) throw InputError("cannot open vocabulary " + a.vocab);
  nlohmann::json vj;
  try {
    vin >> vj;
  } catch (const nlohmann::json::exception& e) {
    throw InputError("malformed vocabulary " + a.vocab + ": " + e.what());
  }
  auto vocab = std::make_shared<MotifVocabulary>(MotifVocabulary::from_json(vj));
  if (a.beta == "auto") {
    cfg.loss.beta_target = beta_for_vocab(vocab->requested_size());
  } else {
    try {
      std::size_t pos = 0;
      cfg.loss.beta_target = std::stod(a.beta, &pos);
      if (pos != a.beta.size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw InputError("--beta must be 'auto' or a number");
    }
  }
  try {
    cfg.loss.validate();
    cfg.model.validate();
  } catch (const std::invalid_argument& e) {
    throw InputError(e.what());
  }

  long skipped = 0;
  auto corpus = read_lenient(a.input, skipped);
  std::vector<MolGraph> valid;
  m.inputs = {a.input, a.vocab};
  if (!a.valid.empty()) {
    valid = read_lenient(a.valid, skipped);
    m.inputs.push_back(a.valid);
  }
  if (corpus.empty()) throw InputError("no parsable molecules in " + a.input);

  m.params = {{"order", a.order},
              {"beta_target", cfg.loss.beta_target},
              {"subsample", cfg.loss.subsample_fraction},
              {"max_steps", cfg.max_steps},
              {"model", cfg.model.to_json()}};
  fs::create_directories(a.out);
  cfg.out_dir = a.out;
  std::cerr << "train: " << corpus.size() << " molecules, " << valid.size() << " validation, beta "
            << cfg.loss.beta_target << ", order " << a.order << "\n";
  auto res = train(corpus, valid, vocab, cfg, [&](const LogRow& r) {
    if (r.valid)
      std::cerr << "step " << r.step + 1 << " train " << r.train.total << " valid " << r.valid->total
                << " acc " << r.valid->accuracy() << "\n";
  });
  m.outputs = {a.out + "/best.json", a.out + "/last.json", a.out + "/train_log.csv"};
  m.extra = {{"steps", res.steps},
             {"best_step", res.best_step},
             {"early_stopped", res.early_stopped},
             {"train_seconds", res.seconds},
             {"skipped_lines", skipped}};
  if (std::isfinite(res.best_valid)) m.extra["best_valid"] = res.best_valid;
  m.write(g, a.out + "/manifest.json");
  return kOk;
}

// ---- sample ----------------------------------------------------------------

struct SampleArgs {
  std::string checkpoint, scaffold, posterior, reference, mode = "greedy", out, metrics;
  int count = 100;
  double temperature = 1.0;
  int max_actions = 500;
};

int run_sample(const Global& g, const SampleArgs& a) {
  Manifest m;
  m.command = "sample";
  m.seed = g.resolved_seed();
  auto kv = g.config();
  int gmm_components = 50, em_iterations = 100;
  kv.get("gmm.components", gmm_components);
  kv.get("gmm.iterations", em_iterations);
  kv.reject_unused();
  m.config = kv.to_json();
  m.params = {{"count", a.count}, {"mode", a.mode}, {"temperature", a.temperature},
              {"scaffold", a.scaffold}, {"max_actions", a.max_actions}};
  m.inputs = {a.checkpoint};
  if (a.count < 1) throw InputError("--count must be positive");
  auto opt = decode_options(a.mode, a.temperature, a.max_actions);
  auto ck = load_model(a.checkpoint);
  std::mt19937_64 rng(m.seed);

  std::optional<MolGraph> scaffold;
  if (!a.scaffold.empty()) scaffold = parse_scaffold(a.scaffold);
  std::vector<MolGraph> posterior;
  if (!a.posterior.empty()) {
    posterior = read_strict(a.posterior);
    m.inputs.push_back(a.posterior);
  }
  std::vector<MolGraph> samples;
  if (scaffold && !a.posterior.empty()) {
    samples = scaffold_posterior_sample(*ck.model, posterior, *scaffold, a.count, rng, opt,
                                        gmm_components, em_iterations);
  } else {
    samples = sample_prior(*ck.model, a.count, rng, scaffold ? &*scaffold : nullptr, opt);
  }
  {
    auto out = open_out(a.out);
    for (const auto& s : samples) out << write_smiles(s) << "\n";
  }
  std::vector<MolGraph> reference;
  if (!a.reference.empty()) {
    reference = read_strict(a.reference);
    m.inputs.push_back(a.reference);
  } else {
    reference = posterior;
  }
  auto metrics = eval_metrics(samples, reference);
  std::string mpath = a.metrics.empty() ? a.out + ".metrics.tsv" : a.metrics;
  {
    auto out = open_out(mpath);
    write_metrics(out, metrics);
    if (scaffold) {
      int contained = 0;
      for (const auto& s : samples) contained += scaffold_match(s, *scaffold);
      out << "scaffold_containment\t" << static_cast<double>(contained) / samples.size() << "\n";
    }
  }
  write_metrics(std::cerr, metrics);
  m.outputs = {a.out, mpath};
  m.write(g, a.out + ".manifest.json");
  return kOk;
}

// ---- interpolate / grid ----------------------------------------------------

struct InterpArgs {
  std::string checkpoint, from, to, scaffold, out;
  int steps = 11;
  int max_actions = 500;
};

int run_interpolate(const Global& g, const InterpArgs& a) {
  Manifest m;
  m.command = "interpolate";
  m.seed = g.resolved_seed();
  auto kv = g.config();
  kv.reject_unused();
  m.config = kv.to_json();
  m.params = {{"from", a.from}, {"to", a.to}, {"steps", a.steps}, {"scaffold", a.scaffold}};
  m.inputs = {a.checkpoint};
  auto ck = load_model(a.checkpoint);
  auto m1 = parse_molecule(a.from), m2 = parse_molecule(a.to);
  std::optional<MolGraph> scaffold;
  if (!a.scaffold.empty()) scaffold = parse_scaffold(a.scaffold);
  if (a.steps < 2) throw InputError("--steps must be at least 2");
  DecodeOptions opt;
  opt.max_actions = a.max_actions;
  auto path = interpolate(*ck.model, m1, m2, a.steps, scaffold ? &*scaffold : nullptr, opt);
  auto out = open_out(a.out);
  out << "t\tsmiles\n";
  for (const auto& p : path) out << p.t << '\t' << write_smiles(p.mol) << '\n';
  m.outputs = {a.out};
  m.write(g, a.out + ".manifest.json");
  return kOk;
}

struct GridArgs {
  std::string checkpoint, smiles, scaffold, out;
  int max_actions = 500;
};

int run_grid(const Global& g, const GridArgs& a) {
  Manifest m;
  m.command = "grid";
  m.seed = g.resolved_seed();
  auto kv = g.config();
  GridSearch search;
  kv.get("grid.low", search.low);
  kv.get("grid.high", search.high);
  kv.get("grid.iterations", search.iterations);
  kv.get("grid.size", search.size);
  kv.reject_unused();
  if (!(search.low > 0 && search.high > search.low) || search.iterations < 1 || search.size < 1)
    throw InputError("invalid grid search settings");
  m.config = kv.to_json();
  m.params = {{"smiles", a.smiles}, {"scaffold", a.scaffold}};
  m.inputs = {a.checkpoint};
  auto ck = load_model(a.checkpoint);
  auto mol = parse_molecule(a.smiles);
  std::optional<MolGraph> scaffold;
  if (!a.scaffold.empty()) scaffold = parse_scaffold(a.scaffold);
  std::mt19937_64 rng(m.seed);
  DecodeOptions opt;
  opt.max_actions = a.max_actions;
  auto grid = neighborhood_grid(*ck.model, mol, rng, scaffold ? &*scaffold : nullptr, search, opt);
  auto out = open_out(a.out);
  out << "row,col,smiles\n";
  for (const auto& c : grid.cells) out << c.row << ',' << c.col << ',' << write_smiles(c.mol) << '\n';
  m.extra = {{"step", grid.step}, {"distinct", grid.distinct}, {"success", grid.success}};
  std::cerr << "grid: step " << grid.step << ", " << grid.distinct << " distinct"
            << (grid.success ? "" : " (no step gave all distinct; best grid written)") << "\n";
  m.outputs = {a.out};
  m.write(g, a.out + ".manifest.json");
  return kOk;
}

// ---- optimize --------------------------------------------------------------

struct OptimizeArgs {
  std::string checkpoint, seeds, scaffold, out, top_out;
  std::vector<std::string> starts;
  bool constrain = false, no_hac = false;
  int particles = -1, iterations = -1;
  int max_actions = 500;
};

int run_optimize(const Global& g, const OptimizeArgs& a) {
  Manifest m;
  m.command = "optimize";
  m.seed = g.resolved_seed();
  auto kv = g.config();
  SwarmConfig sc;
  kv.get("swarm.particles", sc.particles);
  kv.get("swarm.iterations", sc.iterations);
  kv.get("swarm.inertia", sc.inertia);
  kv.get("swarm.cognitive", sc.cognitive);
  kv.get("swarm.social", sc.social);
  kv.get("swarm.clip", sc.clip);
  kv.get("swarm.init_noise", sc.init_noise);
  kv.get("swarm.top_k", sc.top_k);
  HacRamp ramp;
  kv.get("hac.low", ramp.low);
  kv.get("hac.plateau_low", ramp.plateau_low);
  kv.get("hac.plateau_high", ramp.plateau_high);
  kv.get("hac.high", ramp.high);
  kv.reject_unused();
  if (a.particles > 0) sc.particles = a.particles;
  if (a.iterations > 0) sc.iterations = a.iterations;
  try {
    sc.validate();
  } catch (const std::invalid_argument& e) {
    throw InputError(e.what());
  }
  m.config = kv.to_json();
  m.params = {{"scaffold", a.scaffold},
              {"constrain_scaffold", a.constrain},
              {"hac", !a.no_hac},
              {"particles", sc.particles},
              {"iterations", sc.iterations}};
  m.inputs = {a.checkpoint};
  auto ck = load_model(a.checkpoint);

  std::vector<MolGraph> seeds;
  if (!a.seeds.empty()) {
    seeds = read_strict(a.seeds);
    m.inputs.push_back(a.seeds);
  }
  for (const auto& s : a.starts) seeds.push_back(parse_molecule(s));
  if (seeds.empty()) throw InputError("optimize needs --seeds or --start");
  std::optional<MolGraph> scaffold;
  if (!a.scaffold.empty()) scaffold = parse_scaffold(a.scaffold);
  if (a.constrain && !scaffold) throw InputError("--constrain-scaffold needs --scaffold");
  Objective obj{scaffold ? &*scaffold : nullptr, !a.no_hac, ramp};
  if (!obj.scaffold && !obj.use_hac) throw InputError("objective has no components");
  DecodeOptions opt;
  opt.max_actions = a.max_actions;
  auto res = swarm_optimize(*ck.model, [&](const MolGraph& mol) { return obj(mol); }, seeds, sc,
                            m.seed, a.constrain ? &*scaffold : nullptr, opt);
  {
    auto out = open_out(a.out);
    write_swarm_curve(out, res.curve);
  }
  m.outputs = {a.out};
  if (!a.top_out.empty()) {
    auto out = open_out(a.top_out);
    out << "rank\tscore\tsmiles\n";
    for (std::size_t i = 0; i < res.top.size(); ++i)
      out << i << '\t' << res.top[i].score << '\t' << res.top[i].key << '\n';
    m.outputs.push_back(a.top_out);
  }
  if (!res.curve.empty())
    std::cerr << "optimize: final mean top-" << sc.top_k << " " << res.curve.back().mean_top
              << ", best " << res.curve.back().best << "\n";
  m.write(g, a.out + ".manifest.json");
  return kOk;
}

// ---- motif-sim -------------------------------------------------------------

struct MotifSimArgs {
  std::string checkpoint, side = "decoder", out;
  int top = 6;
};

int run_motif_sim(const Global& g, const MotifSimArgs& a) {
  Manifest m;
  m.command = "motif-sim";
  m.seed = g.resolved_seed();
  auto kv = g.config();
  kv.reject_unused();
  m.config = kv.to_json();
  m.params = {{"top", a.top}, {"side", a.side}};
  m.inputs = {a.checkpoint};
  if (a.top < 0) throw InputError("--top must be non-negative");
  EmbeddingSide side;
  if (a.side == "decoder") {
    side = EmbeddingSide::Decoder;
  } else if (a.side == "encoder") {
    side = EmbeddingSide::Encoder;
  } else {
    throw InputError("--side must be encoder or decoder");
  }
  auto ck = load_model(a.checkpoint);
  std::vector<MotifPair> pairs;
  try {
    pairs = motif_embedding_similarity(*ck.model, side, a.top);
  } catch (const std::invalid_argument& e) {
    throw InputError(e.what());
  }
  auto out = open_out(a.out);
  write_motif_pairs(out, pairs);
  m.outputs = {a.out};
  m.write(g, a.out + ".manifest.json");
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Motif-based molecular graph generation"};
  app.require_subcommand(1);
  app.fallthrough();
  Global g;
  g.argv.assign(argv, argv + argc);
  std::uint64_t seed = 0;
  auto* seed_opt = app.add_option("--seed", seed, "Random seed (falls back to MOLER_SEED, then 0)");
  app.add_option("--config", g.config_path, "key = value config file")->check(CLI::ExistingFile);
  app.add_option("--threads", g.threads, "Worker cap (computation is single-threaded)")
      ->check(CLI::PositiveNumber);
  app.add_option("--manifest", g.manifest_path, "Manifest path (default next to the output)");

  MineArgs mine;
  auto* sub_mine = app.add_subcommand("mine-motifs", "Mine a motif vocabulary from a SMILES file");
  sub_mine->add_option("--input", mine.input)->required();
  sub_mine->add_option("--n", mine.n, "Vocabulary size");
  sub_mine->add_option("--out", mine.out, "Vocabulary JSON")->required();
  sub_mine->add_option("--report", mine.report, "Fragment frequency TSV (default <out>.freq.tsv)");

  TrainArgs tr;
  auto* sub_train = app.add_subcommand("train", "Train the autoencoder");
  sub_train->add_option("--input", tr.input)->required();
  sub_train->add_option("--valid", tr.valid);
  sub_train->add_option("--vocab", tr.vocab)->required();
  sub_train->add_option("--order", tr.order)
      ->check(CLI::IsMember({"random", "canonical", "bfs-random", "bfs-canonical"}));
  sub_train->add_option("--beta", tr.beta, "'auto' or a value");
  sub_train->add_option("--subsample", tr.subsample, "Fraction of generation steps per molecule");
  sub_train->add_option("--steps", tr.steps, "Overrides train.max_steps");
  sub_train->add_option("--out", tr.out, "Checkpoint directory")->required();

  SampleArgs sa;
  auto* sub_sample = app.add_subcommand("sample", "Sample molecules");
  sub_sample->add_option("--checkpoint", sa.checkpoint)->required();
  sub_sample->add_option("--count", sa.count);
  sub_sample->add_option("--scaffold", sa.scaffold, "Scaffold SMILES");
  sub_sample->add_option("--posterior-corpus", sa.posterior, "Fit a GMM to scaffold matches here");
  sub_sample->add_option("--reference", sa.reference, "Training corpus for novelty and descriptors");
  sub_sample->add_option("--mode", sa.mode)->check(CLI::IsMember({"greedy", "stochastic"}));
  sub_sample->add_option("--temperature", sa.temperature);
  sub_sample->add_option("--max-actions", sa.max_actions);
  sub_sample->add_option("--out", sa.out, "SMILES output")->required();
  sub_sample->add_option("--metrics", sa.metrics, "Metrics TSV (default <out>.metrics.tsv)");

  InterpArgs ia;
  auto* sub_interp = app.add_subcommand("interpolate", "Decode along a latent line");
  sub_interp->add_option("--checkpoint", ia.checkpoint)->required();
  sub_interp->add_option("--from", ia.from)->required();
  sub_interp->add_option("--to", ia.to)->required();
  sub_interp->add_option("--steps", ia.steps, "Points on the line, endpoints included");
  sub_interp->add_option("--scaffold", ia.scaffold);
  sub_interp->add_option("--max-actions", ia.max_actions);
  sub_interp->add_option("--out", ia.out)->required();

  GridArgs ga;
  auto* sub_grid = app.add_subcommand("grid", "Decode a latent neighbourhood grid");
  sub_grid->add_option("--checkpoint", ga.checkpoint)->required();
  sub_grid->add_option("--smiles", ga.smiles, "Centre molecule")->required();
  sub_grid->add_option("--scaffold", ga.scaffold);
  sub_grid->add_option("--max-actions", ga.max_actions);
  sub_grid->add_option("--out", ga.out)->required();

  OptimizeArgs oa;
  auto* sub_opt = app.add_subcommand("optimize", "Swarm optimisation in latent space");
  sub_opt->add_option("--checkpoint", oa.checkpoint)->required();
  sub_opt->add_option("--seeds", oa.seeds, "SMILES file of starting molecules");
  sub_opt->add_option("--start", oa.starts, "Starting molecule (repeatable)");
  sub_opt->add_option("--scaffold", oa.scaffold, "Adds the scaffold-match score");
  sub_opt->add_flag("--constrain-scaffold", oa.constrain, "Decode every particle from the scaffold");
  sub_opt->add_flag("--no-hac", oa.no_hac, "Drop the heavy-atom-count score");
  sub_opt->add_option("--particles", oa.particles);
  sub_opt->add_option("--iterations", oa.iterations);
  sub_opt->add_option("--max-actions", oa.max_actions);
  sub_opt->add_option("--out", oa.out, "Per-iteration curve CSV")->required();
  sub_opt->add_option("--top-out", oa.top_out, "Best molecules TSV");

  MotifSimArgs ma;
  auto* sub_sim = app.add_subcommand("motif-sim", "Most similar motif pairs by embedding");
  sub_sim->add_option("--checkpoint", ma.checkpoint)->required();
  sub_sim->add_option("--top", ma.top);
  sub_sim->add_option("--side", ma.side)->check(CLI::IsMember({"encoder", "decoder"}));
  sub_sim->add_option("--out", ma.out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? kOk : kInput;
  }
  if (seed_opt->count()) g.seed = seed;

  try {
    if (*sub_mine) return run_mine(g, mine);
    if (*sub_train) return run_train(g, tr);
    if (*sub_sample) return run_sample(g, sa);
    if (*sub_interp) return run_interpolate(g, ia);
    if (*sub_grid) return run_grid(g, ga);
    if (*sub_opt) return run_optimize(g, oa);
    if (*sub_sim) return run_motif_sim(g, ma);
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInput;
  } catch (const SmilesError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInput;
  } catch (const nn::CheckpointError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInput;
  } catch (const VocabularyError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInput;
  } catch (const TrainingDiverged& e) {
    std::cerr << "error: training diverged: " << e.what() << "\n";
    return kDiverged;
  } catch (const ConstraintError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kConstraint;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kInternal;
  }
  return kInternal;
}
