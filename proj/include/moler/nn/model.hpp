#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "moler/decoder/statemachine.hpp"
#include "moler/nn/features.hpp"
#include "moler/nn/tape.hpp"

namespace moler::nn {

struct ModelConfig {
  int layers = 4;
  int hidden = 32;
  int latent = 16;
  int encoder_heads = 8;
  int decoder_heads = 4;
  int head_dim = 8;
  int motif_dim = 16;
  int mlp_hidden = 64;
  int mlp_layers = 2;
  int num_properties = 3;

  int encoder_node_width() const { return hidden * (layers + 1); }
  int encoder_graph_width() const { return encoder_heads * head_dim; }
  int decoder_graph_width() const { return decoder_heads * head_dim; }

  void validate() const {
    if (layers < 1) throw std::invalid_argument("layers must be >= 1");
    if (hidden < 1 || latent < 1 || head_dim < 1 || motif_dim < 1 || mlp_hidden < 1 ||
        mlp_layers < 0 || num_properties < 0)
      throw std::invalid_argument("model widths must be positive");
    if (encoder_heads < 2 || encoder_heads % 2 || decoder_heads < 2 || decoder_heads % 2)
      throw std::invalid_argument("head counts must be even and >= 2");
  }

  nlohmann::ordered_json to_json() const {
    return {{"layers", layers},           {"hidden", hidden},
            {"latent", latent},           {"encoder_heads", encoder_heads},
            {"decoder_heads", decoder_heads}, {"head_dim", head_dim},
            {"motif_dim", motif_dim},     {"mlp_hidden", mlp_hidden},
            {"mlp_layers", mlp_layers},   {"num_properties", num_properties}};
  }

  static ModelConfig from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.layers = j.at("layers");
    c.hidden = j.at("hidden");
    c.latent = j.at("latent");
    c.encoder_heads = j.at("encoder_heads");
    c.decoder_heads = j.at("decoder_heads");
    c.head_dim = j.at("head_dim");
    c.motif_dim = j.at("motif_dim");
    c.mlp_hidden = j.at("mlp_hidden");
    c.mlp_layers = j.at("mlp_layers");
    c.num_properties = j.at("num_properties");
    c.validate();
    return c;
  }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct LinearIds {
  int w = -1, b = -1;
};

struct MlpIds {
  std::vector<LinearIds> layers;
};

struct GnnLayerIds {
  int ws, wr, mb;        // typed messages
  int a, c, ub;          // update: H a + Agg c + ub
  int gain, shift;       // LayerNorm
};

struct GnnIds {
  int embedding = -1;  // (motifs + 1) x motif_dim, last row = no motif
  LinearIds input;
  std::vector<GnnLayerIds> layers;
};

/// Per-head scorer s_i and transform t_i, each a one-hidden-layer MLP. All
/// heads run as one dense product whose second layer is block-diagonal.
struct AggregationIds {
  int heads = 0;
  LinearIds s1, s2, t1, t2;
};

/// Columns of scored candidates for a batch of decoder states.
struct Candidates {
  std::vector<int> group;       // state position
  std::vector<Action> actions;
};

template <class T>
struct Encoding {
  Var mu, log_sigma, z;
};

template <class T>
struct Scored {
  Var scores;  // candidates x 1
  Candidates candidates;
};

template <class T>
class Model {
 public:
  Model(ModelConfig cfg, Alphabet alpha, std::uint64_t seed)
      : cfg_(cfg), alpha_(std::move(alpha)), spec_(FeatureSpec::from_alphabet(alpha_)) {
    cfg_.validate();
    std::mt19937_64 rng(seed);
    build(rng);
  }

  template <class U>
  Model<U> cast() const {
    Model<U> m(cfg_, alpha_, 0);
    for (int i = 0; i < params.size(); ++i) m.params.value(i) = params.value(i).template cast<U>();
    return m;
  }

  ParamSet<T> params;

  const ModelConfig& config() const { return cfg_; }
  const Alphabet& alphabet() const { return alpha_; }
  const FeatureSpec& features() const { return spec_; }
  int num_motifs() const { return alpha_.num_motifs(); }

  const GnnIds& encoder_gnn() const { return enc_; }
  const GnnIds& decoder_gnn() const { return dec_; }
  const AggregationIds& encoder_aggregation() const { return enc_agg_; }
  const AggregationIds& decoder_aggregation() const { return dec_agg_; }
  int next_node_output_weight() const { return next_.layers.back().w; }

  GraphBatch molecule_batch(const std::vector<const MolGraph*>& mols,
                            const std::vector<const std::vector<int>*>& motif_of) const {
    GraphBatch b;
    b.num_features = spec_.width();
    for (std::size_t i = 0; i < mols.size(); ++i)
      append_graph(b, *mols[i], *motif_of[i], spec_, num_motifs());
    return b;
  }

  // ---- building blocks ------------------------------------------------

  Var linear(Tape<T>& t, const LinearIds& l, Var x) const {
    return add_row(t, matmul(t, x, t.param(l.w)), t.param(l.b));
  }

  Var mlp(Tape<T>& t, const MlpIds& m, Var x) const {
    for (std::size_t i = 0; i + 1 < m.layers.size(); ++i) x = leaky_relu(t, linear(t, m.layers[i], x));
    return linear(t, m.layers.back(), x);
  }

  /// Node representations. With `skip`, h^0..h^L are concatenated.
  Var gnn(Tape<T>& t, const GnnIds& g, const GraphBatch& b, bool skip) const {
    int d = cfg_.hidden;
    Var x = t.constant(b.template feature_matrix<T>());
    Var emb = gather_rows(t, t.param(g.embedding), b.motif_row);
    Var h = linear(t, g.input, concat_cols(t, {x, emb}));
    std::vector<Var> all{h};
    for (const auto& l : g.layers) {
      Var hs = matmul(t, h, t.param(l.ws));
      Var hr = matmul(t, h, t.param(l.wr));
      Var msg = leaky_relu(t, edge_preactivations(t, hs, hr, t.param(l.mb), b.edges, d));
      Var agg = scatter_rows(t, msg, b.edges.dst, b.num_nodes);
      Var u = add_row(t, add(t, matmul(t, h, t.param(l.a)), matmul(t, agg, t.param(l.c))),
                      t.param(l.ub));
      h = layer_norm(t, leaky_relu(t, u), t.param(l.gain), t.param(l.shift));
      all.push_back(h);
    }
    return skip ? concat_cols(t, all) : h;
  }

  /// Graph vectors: per head, softmax (first half) or sigmoid (second half)
  /// weights over each graph's nodes, applied to the transformed nodes.
  Var aggregate(Tape<T>& t, const AggregationIds& a, Var nodes, const GraphBatch& b) const {
    int hd = cfg_.head_dim, half = a.heads / 2;
    Var s = block_mlp(t, a.s1, a.s2, nodes, a.heads, hd, 1);
    Var tr = block_mlp(t, a.t1, a.t2, nodes, a.heads, hd, hd);
    Var soft = segment_softmax(t, slice_cols(t, s, 0, half), b.graph_of, b.num_graphs);
    Var sig = sigmoid(t, slice_cols(t, s, half, a.heads - half));
    Var w = repeat_cols(t, concat_cols(t, {soft, sig}), hd);
    return scatter_rows(t, hadamard(t, w, tr), b.graph_of, b.num_graphs);
  }

  Encoding<T> encode(Tape<T>& t, const GraphBatch& mols, const Mat<T>* noise) const {
    Var nodes = gnn(t, enc_, mols, true);
    Var g = aggregate(t, enc_agg_, nodes, mols);
    Encoding<T> e;
    e.mu = linear(t, mu_, g);
    e.log_sigma = linear(t, log_sigma_, g);
    if (noise) {
      if (noise->rows() != mols.num_graphs || noise->cols() != cfg_.latent)
        throw std::invalid_argument("noise shape");
      e.z = add(t, e.mu, hadamard(t, exp(t, e.log_sigma), t.constant(*noise)));
    } else {
      e.z = e.mu;
    }
    return e;
  }

  Var predict_properties(Tape<T>& t, Var z) const { return mlp(t, prop_, z); }

  /// Scores every legal action of each state. `z` has one row per state;
  /// candidates follow the mask order within each head.
  Scored<T> score(Tape<T>& t, const std::vector<const GenState*>& states,
                  const std::vector<const ActionMask*>& masks, Var z) const {
    int S = static_cast<int>(states.size());
    if (static_cast<int>(masks.size()) != S || t.value(z).rows() != S)
      throw std::invalid_argument("score: states, masks and latents differ in count");
    GraphBatch b;
    b.num_features = spec_.width();
    Mat<T> empty = Mat<T>::Zero(S, 1);
    for (int s = 0; s < S; ++s) {
      append_graph(b, states[s]->partial, states[s]->motif_of, spec_, num_motifs());
      if (states[s]->partial.empty()) empty(s, 0) = 1;
    }
    Var h = gnn(t, dec_, b, false);
    Var f = add(t, aggregate(t, dec_agg_, h, b),
                matmul(t, t.constant(std::move(empty)), t.param(empty_graph_)));
    Var ctx = concat_cols(t, {f, z});

    Scored<T> out;
    auto& cand = out.candidates;
    std::vector<Var> pieces;
    auto node = [&](int s, int v) { return b.node_offset[s] + v; };

    std::vector<int> nn_rows;
    std::vector<std::pair<int, int>> nn_at;
    std::vector<int> att_state, att_node;
    std::vector<int> bond_state, bond_focus, bond_partner;
    std::vector<std::pair<int, int>> bond_at;
    std::vector<int> stop_state, stop_focus;
    std::vector<std::pair<int, Action>> nn_c, att_c, bond_c, stop_c;
    for (int s = 0; s < S; ++s) {
      const auto& st = *states[s];
      const auto& m = *masks[s];
      switch (m.phase) {
        case Phase::NextNode: {
          int k = static_cast<int>(nn_rows.size());
          nn_rows.push_back(s);
          for (int c = 0; c < static_cast<int>(m.next_node.size()); ++c)
            if (m.next_node[c]) {
              nn_at.push_back({k, c});
              nn_c.push_back({s, Action::from_node_class(c, alpha_)});
            }
          break;
        }
        case Phase::Attachment:
          for (int p : m.attachments) {
            att_state.push_back(s);
            att_node.push_back(node(s, st.pending[p]));
            att_c.push_back({s, Action::attach(p)});
          }
          break;
        case Phase::Bonds: {
          int last = -1;
          for (const auto& bc : m.bonds) {
            if (bc.partner != last) {
              bond_state.push_back(s);
              bond_focus.push_back(node(s, st.focus));
              bond_partner.push_back(node(s, bc.partner));
              last = bc.partner;
            }
            bond_at.push_back({static_cast<int>(bond_state.size()) - 1, order_value(bc.order) - 1});
            bond_c.push_back({s, Action::bond(bc.partner, bc.order)});
          }
          if (m.stop) {
            stop_state.push_back(s);
            stop_focus.push_back(node(s, st.focus));
            stop_c.push_back({s, Action::stop()});
          }
          break;
        }
        case Phase::Terminal:
          throw StateError("scoring a terminal state");
      }
    }
    if (!nn_at.empty()) {
      Var logits = mlp(t, next_, gather_rows(t, ctx, nn_rows));
      pieces.push_back(gather_elements(t, logits, nn_at));
    }
    if (!att_state.empty()) {
      Var x = concat_cols(t, {gather_rows(t, ctx, att_state), gather_rows(t, h, att_node)});
      pieces.push_back(mlp(t, attach_, x));
    }
    if (!bond_at.empty()) {
      Var x = concat_cols(t, {gather_rows(t, ctx, bond_state), gather_rows(t, h, bond_focus),
                              gather_rows(t, h, bond_partner)});
      pieces.push_back(gather_elements(t, mlp(t, edge_, x), bond_at));
    }
    if (!stop_state.empty()) {
      Var x = concat_cols(t, {gather_rows(t, ctx, stop_state), gather_rows(t, h, stop_focus)});
      pieces.push_back(mlp(t, stop_, x));
    }
    for (auto* list : {&nn_c, &att_c, &bond_c, &stop_c})
      for (auto& [s, a] : *list) {
        cand.group.push_back(s);
        cand.actions.push_back(a);
      }
    if (pieces.empty()) throw StateError("no legal action to score");
    out.scores = pieces.size() == 1 ? pieces[0] : concat_rows(t, pieces);
    return out;
  }

 private:
  Var slice_cols(Tape<T>& t, Var a, int start, int count) const {
    Mat<T> sel = Mat<T>::Zero(t.value(a).cols(), count);
    for (int j = 0; j < count; ++j) sel(start + j, j) = 1;
    return matmul(t, a, t.constant(std::move(sel)));
  }

  Var block_mlp(Tape<T>& t, const LinearIds& l1, const LinearIds& l2, Var x, int heads, int hidden,
                int out) const {
    Var hid = leaky_relu(t, linear(t, l1, x));
    Mat<T> mask = Mat<T>::Zero(heads * hidden, heads * out);
    for (int k = 0; k < heads; ++k) mask.block(k * hidden, k * out, hidden, out).setOnes();
    Var w = hadamard(t, t.param(l2.w), t.constant(std::move(mask)));
    return add_row(t, matmul(t, hid, w), t.param(l2.b));
  }

  Mat<T> glorot(std::mt19937_64& rng, int rows, int cols) {
    double lim = std::sqrt(6.0 / (rows + cols));
    std::uniform_real_distribution<double> u(-lim, lim);
    Mat<T> m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<T>(u(rng));
    return m;
  }

  LinearIds add_linear(std::mt19937_64& rng, const std::string& name, int in, int out) {
    LinearIds l;
    l.w = params.add(name + ".w", glorot(rng, in, out));
    l.b = params.add(name + ".b", Mat<T>::Zero(1, out));
    return l;
  }

  MlpIds add_mlp(std::mt19937_64& rng, const std::string& name, int in, int out) {
    MlpIds m;
    int w = in;
    for (int i = 0; i < cfg_.mlp_layers; ++i) {
      m.layers.push_back(add_linear(rng, name + "." + std::to_string(i), w, cfg_.mlp_hidden));
      w = cfg_.mlp_hidden;
    }
    m.layers.push_back(add_linear(rng, name + ".out", w, out));
    return m;
  }

  GnnIds add_gnn(std::mt19937_64& rng, const std::string& name) {
    GnnIds g;
    int d = cfg_.hidden, r = GraphBatch::kEdgeTypes;
    std::normal_distribution<double> nd(0.0, 1.0 / std::sqrt(cfg_.motif_dim));
    Mat<T> emb(num_motifs() + 1, cfg_.motif_dim);
    for (Eigen::Index i = 0; i < emb.size(); ++i) emb.data()[i] = static_cast<T>(nd(rng));
    g.embedding = params.add(name + ".embedding", std::move(emb));
    g.input = add_linear(rng, name + ".input", spec_.width() + cfg_.motif_dim, d);
    for (int k = 0; k < cfg_.layers; ++k) {
      std::string p = name + ".layer" + std::to_string(k);
      GnnLayerIds l;
      l.ws = params.add(p + ".msg_send", glorot(rng, d, r * d));
      l.wr = params.add(p + ".msg_recv", glorot(rng, d, r * d));
      l.mb = params.add(p + ".msg_bias", Mat<T>::Zero(1, r * d));
      l.a = params.add(p + ".self", glorot(rng, d, d));
      l.c = params.add(p + ".agg", glorot(rng, d, d));
      l.ub = params.add(p + ".bias", Mat<T>::Zero(1, d));
      l.gain = params.add(p + ".ln_gain", Mat<T>::Ones(1, d));
      l.shift = params.add(p + ".ln_shift", Mat<T>::Zero(1, d));
      g.layers.push_back(l);
    }
    return g;
  }

  AggregationIds add_aggregation(std::mt19937_64& rng, const std::string& name, int in, int heads) {
    AggregationIds a;
    int hd = cfg_.head_dim;
    a.heads = heads;
    a.s1 = add_linear(rng, name + ".score1", in, heads * hd);
    a.s2 = add_linear(rng, name + ".score2", heads * hd, heads);
    a.t1 = add_linear(rng, name + ".transform1", in, heads * hd);
    a.t2 = add_linear(rng, name + ".transform2", heads * hd, heads * hd);
    // Glorot limits of the per-head blocks.
    for (auto [id, out] : {std::pair{a.s2.w, 1}, std::pair{a.t2.w, hd}}) {
      auto& w = params.value(id);
      for (int k = 0; k < heads; ++k) w.block(k * hd, k * out, hd, out) = glorot(rng, hd, out);
    }
    return a;
  }

  void build(std::mt19937_64& rng) {
    int lat = cfg_.latent;
    enc_ = add_gnn(rng, "encoder");
    enc_agg_ = add_aggregation(rng, "encoder.pool", cfg_.encoder_node_width(), cfg_.encoder_heads);
    mu_ = add_linear(rng, "latent.mu", cfg_.encoder_graph_width(), lat);
    log_sigma_ = add_linear(rng, "latent.log_sigma", cfg_.encoder_graph_width(), lat);
    params.value(log_sigma_.w) *= T(0.01);  // start near sigma = 1
    dec_ = add_gnn(rng, "decoder");
    dec_agg_ = add_aggregation(rng, "decoder.pool", cfg_.hidden, cfg_.decoder_heads);
    int dg = cfg_.decoder_graph_width();
    empty_graph_ = params.add("decoder.empty_graph", glorot(rng, 1, dg));
    next_ = add_mlp(rng, "head.next_node", dg + lat, alpha_.num_classes());
    attach_ = add_mlp(rng, "head.attachment", dg + lat + cfg_.hidden, 1);
    edge_ = add_mlp(rng, "head.edge", dg + lat + 2 * cfg_.hidden, 3);
    stop_ = add_mlp(rng, "head.stop", dg + lat + cfg_.hidden, 1);
    prop_ = add_mlp(rng, "head.properties", lat, cfg_.num_properties);
  }

  ModelConfig cfg_;
  Alphabet alpha_;
  FeatureSpec spec_;
  GnnIds enc_, dec_;
  AggregationIds enc_agg_, dec_agg_;
  LinearIds mu_, log_sigma_;
  int empty_graph_ = -1;
  MlpIds next_, attach_, edge_, stop_, prop_;
};

}  // namespace moler::nn
