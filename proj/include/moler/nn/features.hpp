#pragma once

#include <algorithm>
#include <array>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "moler/chem/kekule.hpp"
#include "moler/chem/molgraph.hpp"
#include "moler/chem/rings.hpp"
#include "moler/decoder/statemachine.hpp"
#include "moler/nn/tape.hpp"

namespace moler::nn {

class FeatureError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Element one-hot layout of the base atom features.
struct FeatureSpec {
  std::vector<std::string> elements;  // sorted symbols

  /// Elements of every atom class and every motif atom.
  static FeatureSpec from_alphabet(const Alphabet& alpha) {
    const auto& table = *ElementTable::builtin();
    std::set<std::string> seen;
    for (const auto& c : alpha.atom_classes()) seen.insert(table[c.element].symbol);
    for (const auto& m : alpha.vocab().motifs())
      for (int v = 0; v < m.graph.num_atoms(); ++v) seen.insert(m.graph.symbol(v));
    return {{seen.begin(), seen.end()}};
  }

  int num_elements() const { return static_cast<int>(elements.size()); }
  // one-hot | charge | mass | max valence | isotope | aromatic | ring sizes 3..8
  int width() const { return num_elements() + 5 + (kMaxRingSize - kMinRingSize + 1); }

  int element_index(const std::string& symbol) const {
    auto it = std::lower_bound(elements.begin(), elements.end(), symbol);
    if (it == elements.end() || *it != symbol)
      throw FeatureError("element " + symbol + " outside the configured classes");
    return static_cast<int>(it - elements.begin());
  }
};

/// Disjoint union of graphs laid out for message passing. Directed edges are
/// sorted by (destination, source) so aggregation order never depends on
/// bond insertion order.
struct GraphBatch {
  int num_features = 0;
  int num_nodes = 0;
  int num_graphs = 0;
  std::vector<double> features;  // row-major num_nodes x num_features
  std::vector<int> motif_row;    // embedding row per node
  std::vector<int> graph_of;     // per node
  std::vector<int> node_offset;  // per graph
  std::vector<int> graph_size;   // per graph
  EdgeList edges;                // type = bond order - 1

  static constexpr int kEdgeTypes = 3;

  template <class T>
  Mat<T> feature_matrix() const {
    Mat<T> x(num_nodes, num_features);
    for (int i = 0; i < num_nodes; ++i)
      for (int j = 0; j < num_features; ++j)
        x(i, j) = static_cast<T>(features[static_cast<std::size_t>(i) * num_features + j]);
    return x;
  }
};

/// Appends `mol` as a new graph. `motif_of` holds vocabulary indices (-1 for
/// none); unannotated atoms use the row after the last motif.
inline int append_graph(GraphBatch& batch, const MolGraph& mol, const std::vector<int>& motif_of,
                        const FeatureSpec& spec, int num_motifs) {
  if (batch.num_graphs == 0 && batch.num_nodes == 0) batch.num_features = spec.width();
  int n = mol.num_atoms();
  int base = batch.num_nodes;
  int g = batch.num_graphs++;
  batch.node_offset.push_back(base);
  batch.graph_size.push_back(n);
  if (n == 0) return g;
  auto rings = perceive_rings(mol);
  auto aromatic = aromatic_atoms(mol, rings);
  int ne = spec.num_elements();
  for (int v = 0; v < n; ++v) {
    std::vector<double> f(spec.width(), 0.0);
    const auto& a = mol.atom(v);
    const auto& el = mol.element_of(v);
    f[spec.element_index(el.symbol)] = 1.0;
    f[ne] = a.formal_charge;
    f[ne + 1] = el.atomic_mass / 100.0;
    f[ne + 2] = max_valence(mol, v) / 4.0;
    f[ne + 3] = a.isotope ? 1.0 : 0.0;
    f[ne + 4] = aromatic[v] ? 1.0 : 0.0;
    for (int s : rings.ring_sizes[v]) f[ne + 5 + s - kMinRingSize] = 1.0;
    batch.features.insert(batch.features.end(), f.begin(), f.end());
    int m = v < static_cast<int>(motif_of.size()) ? motif_of[v] : -1;
    if (m >= num_motifs) throw FeatureError("motif index outside the vocabulary");
    batch.motif_row.push_back(m < 0 ? num_motifs : m);
    batch.graph_of.push_back(g);
  }
  std::vector<std::array<int, 3>> directed;
  for (const auto& b : mol.bonds()) {
    int type = order_value(b.order) - 1;
    directed.push_back({b.b, b.a, type});
    directed.push_back({b.a, b.b, type});
  }
  std::sort(directed.begin(), directed.end());  // (dst, src)
  for (const auto& [dst, src, type] : directed) {
    batch.edges.dst.push_back(base + dst);
    batch.edges.src.push_back(base + src);
    batch.edges.type.push_back(type);
  }
  batch.num_nodes += n;
  return g;
}

}  // namespace moler::nn
