#pragma once

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <set>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include <Eigen/Dense>

#include "moler/chem/kekule.hpp"
#include "moler/chem/match.hpp"
#include "moler/chem/molgraph.hpp"
#include "moler/nn/model.hpp"

namespace moler {

// ---- scoring ---------------------------------------------------------------

struct HacRamp {
  double low = 15, plateau_low = 25, plateau_high = 30, high = 40;
};

/// Piecewise linear: 0 up to `low`, 1 on the plateau, 0 from `high` on.
inline double hac_score(int heavy_atoms, const HacRamp& r = {}) {
  double h = heavy_atoms;
  if (h <= r.low || h >= r.high) return 0.0;
  if (h < r.plateau_low) return (h - r.low) / (r.plateau_low - r.low);
  if (h <= r.plateau_high) return 1.0;
  return (r.high - h) / (r.high - r.plateau_high);
}

/// Containment allowing either Kekule assignment of conjugated rings.
inline bool scaffold_match(const MolGraph& mol, const MolGraph& scaffold) {
  return contains_kekule_agnostic(mol, scaffold);
}

struct ScoreComponents {
  double scaffold_match = 0;
  double hac = 0;
  double combined = 0;
};

/// Simple average of the enabled components.
struct Objective {
  const MolGraph* scaffold = nullptr;
  bool use_hac = true;
  HacRamp ramp;

  ScoreComponents evaluate(const MolGraph& mol) const {
    ScoreComponents c;
    int n = 0;
    double s = 0;
    if (scaffold) {
      c.scaffold_match = scaffold_match(mol, *scaffold) ? 1.0 : 0.0;
      s += c.scaffold_match;
      ++n;
    }
    if (use_hac) {
      c.hac = hac_score(heavy_atom_count(mol), ramp);
      s += c.hac;
      ++n;
    }
    c.combined = n ? s / n : 0.0;
    return c;
  }

  double operator()(const MolGraph& mol) const { return evaluate(mol).combined; }
};

// ---- distribution metrics --------------------------------------------------

/// Element counts (C N O S P F Cl Br I), ring count, weight, degree
/// histogram 1..4.
inline std::vector<double> descriptor_vector(const MolGraph& mol) {
  static const char* kElements[] = {"C", "N", "O", "S", "P", "F", "Cl", "Br", "I"};
  std::vector<double> d;
  for (const char* e : kElements) {
    int n = 0;
    for (int v = 0; v < mol.num_atoms(); ++v) n += mol.symbol(v) == e;
    d.push_back(n);
  }
  d.push_back(ring_count(mol));
  d.push_back(molecular_weight(mol) / 100.0);
  for (int deg = 1; deg <= 4; ++deg) {
    int n = 0;
    for (int v = 0; v < mol.num_atoms(); ++v) n += mol.degree(v) == deg;
    d.push_back(n);
  }
  return d;
}

/// Frechet distance between Gaussians fitted to the descriptor vectors of
/// the two sets.
inline double descriptor_distance(const std::vector<MolGraph>& a, const std::vector<MolGraph>& b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("descriptor distance of an empty set");
  auto stats = [](const std::vector<MolGraph>& s, Eigen::VectorXd& mu, Eigen::MatrixXd& cov) {
    std::vector<std::vector<double>> rows;
    for (const auto& m : s) rows.push_back(descriptor_vector(m));
    int d = static_cast<int>(rows[0].size());
    Eigen::MatrixXd x(rows.size(), d);
    for (std::size_t i = 0; i < rows.size(); ++i)
      for (int j = 0; j < d; ++j) x(i, j) = rows[i][j];
    mu = x.colwise().mean();
    Eigen::MatrixXd c = x.rowwise() - mu.transpose();
    cov = (c.transpose() * c) / static_cast<double>(rows.size());
  };
  Eigen::VectorXd m1, m2;
  Eigen::MatrixXd c1, c2;
  stats(a, m1, c1);
  stats(b, m2, c2);
  auto sqrtm = [](const Eigen::MatrixXd& m) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (m + m.transpose()));
    Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return Eigen::MatrixXd(es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose());
  };
  Eigen::MatrixXd s1 = sqrtm(c1);
  Eigen::MatrixXd cross = sqrtm(s1 * c2 * s1);
  double d = (m1 - m2).squaredNorm() + c1.trace() + c2.trace() - 2.0 * cross.trace();
  return std::max(d, 0.0);
}

struct SampleMetrics {
  int count = 0;
  double validity = 0;
  double uniqueness = 0;
  double novelty = 0;  // over distinct valid samples
  double descriptor_distance = 0;
};

inline SampleMetrics eval_metrics(const std::vector<MolGraph>& samples,
                                  const std::vector<MolGraph>& training) {
  if (samples.empty()) throw std::invalid_argument("no samples to evaluate");
  SampleMetrics m;
  m.count = static_cast<int>(samples.size());
  std::unordered_set<std::string> train_keys;
  for (const auto& t : training) train_keys.insert(molecule_key(t));
  std::set<std::string> distinct;
  std::vector<MolGraph> valid;
  for (const auto& s : samples) {
    if (!is_valid_molecule(s) || !is_connected(s) || s.empty()) continue;
    valid.push_back(s);
    distinct.insert(molecule_key(s));
  }
  m.validity = static_cast<double>(valid.size()) / samples.size();
  m.uniqueness = static_cast<double>(distinct.size()) / samples.size();
  int novel = 0;
  for (const auto& k : distinct) novel += train_keys.count(k) == 0;
  m.novelty = distinct.empty() ? 0.0 : static_cast<double>(novel) / distinct.size();
  m.descriptor_distance = valid.empty() || training.empty() ? 0.0 : descriptor_distance(valid, training);
  return m;
}

inline void write_metrics(std::ostream& out, const SampleMetrics& m) {
  out << std::setprecision(6) << "count\t" << m.count << "\nvalidity\t" << m.validity
      << "\nuniqueness\t" << m.uniqueness << "\nnovelty\t" << m.novelty
      << "\ndescriptor_distance\t" << m.descriptor_distance << "\n";
}

// ---- motif embeddings ------------------------------------------------------

enum class EmbeddingSide { Encoder, Decoder };

struct MotifPair {
  int a = -1, b = -1;  // vocabulary indices, a < b
  double cosine = 0;
  std::string smiles_a, smiles_b;
};

/// One vector per motif: the encoder's embedding rows, or the next-node
/// head's output weights of the motif classes.
inline std::vector<Eigen::VectorXd> motif_vectors(const nn::Model<float>& model, EmbeddingSide side) {
  int M = model.num_motifs();
  std::vector<Eigen::VectorXd> out;
  if (side == EmbeddingSide::Encoder) {
    const auto& e = model.params.value(model.encoder_gnn().embedding);
    for (int i = 0; i < M; ++i) out.push_back(e.row(i).transpose().cast<double>());
  } else {
    const auto& w = model.params.value(model.next_node_output_weight());
    for (int i = 0; i < M; ++i)
      out.push_back(w.col(model.alphabet().motif_class(i)).cast<double>());
  }
  return out;
}

inline double cosine_similarity(const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
  double n = x.norm() * y.norm();
  return n > 0 ? x.dot(y) / n : 0.0;
}

inline std::vector<MotifPair> motif_embedding_similarity(const nn::Model<float>& model,
                                                         EmbeddingSide side, int top_k) {
  const auto& vocab = model.alphabet().vocab();
  if (vocab.size() < 2) throw std::invalid_argument("motif similarity needs at least two motifs");
  auto vecs = motif_vectors(model, side);
  std::vector<MotifPair> pairs;
  for (int i = 0; i < vocab.size(); ++i)
    for (int j = i + 1; j < vocab.size(); ++j)
      pairs.push_back({i, j, cosine_similarity(vecs[i], vecs[j]), vocab[i].key, vocab[j].key});
  std::stable_sort(pairs.begin(), pairs.end(),
                   [](const MotifPair& x, const MotifPair& y) { return x.cosine > y.cosine; });
  if (top_k >= 0 && static_cast<int>(pairs.size()) > top_k) pairs.resize(top_k);
  return pairs;
}

/// Tab-separated: rank, cosine, motif a, motif b.
inline void write_motif_pairs(std::ostream& out, const std::vector<MotifPair>& pairs) {
  out << "rank\tcosine\tmotif_a\tmotif_b\n";
  for (std::size_t i = 0; i < pairs.size(); ++i)
    out << i + 1 << '\t' << std::fixed << std::setprecision(4) << pairs[i].cosine << '\t'
        << pairs[i].smiles_a << '\t' << pairs[i].smiles_b << '\n';
  out.unsetf(std::ios::fixed);
}

}  // namespace moler
