#pragma once

#include <algorithm>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "moler/chem/canon.hpp"
#include "moler/chem/kekule.hpp"
#include "moler/chem/labeling.hpp"
#include "moler/chem/match.hpp"
#include "moler/chem/molgraph.hpp"
#include "moler/chem/rings.hpp"
#include "moler/chem/smiles.hpp"
#include "moler/util/hash.hpp"

namespace moler {

/// A connected piece of a molecule. `atoms[i]` is the source index of
/// fragment atom i (ascending).
struct Fragment {
  MolGraph graph;
  std::vector<int> atoms;
};

struct Fragmentation {
  std::vector<Fragment> fragments;  // ordered by lowest source atom
  std::vector<int> broken_bonds;    // source bond ids
  std::vector<int> fragment_of;     // per source atom
};

/// Breaks every acyclic bond with at least one endpoint on a cycle.
inline Fragmentation fragment_molecule(const MolGraph& mol) {
  auto rings = perceive_rings(mol);
  int n = mol.num_atoms();
  Fragmentation out;
  std::vector<char> broken(mol.num_bonds(), 0);
  for (int id = 0; id < mol.num_bonds(); ++id) {
    const auto& b = mol.bond(id);
    if (!rings.ring_bond[id] && (rings.in_ring(b.a) || rings.in_ring(b.b))) {
      broken[id] = 1;
      out.broken_bonds.push_back(id);
    }
  }
  out.fragment_of.assign(n, -1);
  for (int s = 0; s < n; ++s) {
    if (out.fragment_of[s] >= 0) continue;
    int f = static_cast<int>(out.fragments.size());
    std::vector<int> members{s};
    out.fragment_of[s] = f;
    for (std::size_t q = 0; q < members.size(); ++q)
      for (int id : mol.incident(members[q])) {
        if (broken[id]) continue;
        int u = mol.bond(id).other(members[q]);
        if (out.fragment_of[u] < 0) {
          out.fragment_of[u] = f;
          members.push_back(u);
        }
      }
    std::sort(members.begin(), members.end());
    Fragment frag;
    frag.graph = induced_subgraph(mol, members);
    frag.atoms = std::move(members);
    out.fragments.push_back(std::move(frag));
  }
  return out;
}

/// Joins the fragments back through the broken bonds of `mol`. Only the
/// endpoints and orders of the broken bonds are read from `mol`.
inline MolGraph reassemble(const Fragmentation& fr, const MolGraph& mol) {
  MolGraph whole;
  std::vector<int> where(mol.num_atoms(), -1);
  for (const auto& frag : fr.fragments) {
    int base = whole.num_atoms();
    for (std::size_t i = 0; i < frag.atoms.size(); ++i) {
      whole.add_atom(frag.graph.atom(static_cast<int>(i)));
      where[frag.atoms[i]] = base + static_cast<int>(i);
    }
    for (const auto& b : frag.graph.bonds()) whole.add_bond(base + b.a, base + b.b, b.order);
  }
  for (int id : fr.broken_bonds) {
    const auto& b = mol.bond(id);
    whole.add_bond(where[b.a], where[b.b], b.order);
  }
  return whole;
}

inline std::vector<MolGraph> fragment(const MolGraph& mol) {
  std::vector<MolGraph> out;
  for (auto& f : fragment_molecule(mol).fragments) out.push_back(std::move(f.graph));
  return out;
}

/// Automorphism classes of a motif's atoms. Bond labels ignore the Kekule
/// assignment, so attaching at any atom of a class yields the same molecule.
struct MotifSymmetry {
  std::vector<int> class_of;                // per atom
  std::vector<int> representative;          // per class: lowest atom index
  std::vector<std::vector<int>> to_rep;     // per atom: automorphism with a -> rep

  int num_classes() const { return static_cast<int>(representative.size()); }
  int rep_of(int atom) const { return representative[class_of[atom]]; }
  bool is_representative(int atom) const { return rep_of(atom) == atom; }
};

inline MotifSymmetry symmetry_classes(const MolGraph& motif) {
  int n = motif.num_atoms();
  auto labels = kekule_agnostic_labels(motif);
  LabeledGraph g;
  g.atom_keys.resize(n);
  g.adj.resize(n);
  for (int v = 0; v < n; ++v) {
    const auto& a = motif.atom(v);
    g.atom_keys[v] = {a.element, a.formal_charge, a.isotope.value_or(-1)};
  }
  for (int id = 0; id < motif.num_bonds(); ++id)
    g.add_edge(motif.bond(id).a, motif.bond(id).b, labels[id]);
  auto signature = refinement_classes(g);

  MotifSymmetry sym;
  sym.class_of.assign(n, -1);
  sym.to_rep.assign(n, {});
  MatchOptions opt{&labels, &labels, true};
  std::vector<int> identity(n);
  std::iota(identity.begin(), identity.end(), 0);
  for (int r = 0; r < n; ++r) {
    if (sym.class_of[r] >= 0) continue;
    int c = sym.num_classes();
    sym.representative.push_back(r);
    sym.class_of[r] = c;
    sym.to_rep[r] = identity;
    for (int a = r + 1; a < n; ++a) {
      if (sym.class_of[a] >= 0 || signature[a] != signature[r]) continue;
      auto iso = find_isomorphism(motif, motif, {{a, r}}, opt);
      if (!iso) continue;
      sym.class_of[a] = c;
      sym.to_rep[a] = std::move(*iso);
    }
  }
  return sym;
}

struct Motif {
  MolGraph graph;  // atom k is canonical position k
  std::string key;
  long count = 0;
  std::optional<int> vocab_index;
  MotifSymmetry symmetry;
};

inline Motif make_motif(const std::string& key, long count) {
  Motif m;
  m.graph = parse_smiles(key);
  m.key = key;
  m.count = count;
  m.symmetry = symmetry_classes(m.graph);
  return m;
}

class VocabularyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class MotifVocabulary {
 public:
  static constexpr int kFormatVersion = 1;

  MotifVocabulary() = default;

  /// Takes (key, count) pairs already in vocabulary order.
  MotifVocabulary(int n, const std::vector<std::pair<std::string, long>>& entries)
      : n_(n) {
    for (const auto& [key, count] : entries) {
      auto m = make_motif(key, count);
      m.vocab_index = size();
      if (!index_.emplace(key, size()).second)
        throw VocabularyError("duplicate motif key " + key);
      motifs_.push_back(std::move(m));
    }
  }

  int size() const { return static_cast<int>(motifs_.size()); }
  bool empty() const { return motifs_.empty(); }
  int requested_size() const { return n_; }
  const Motif& operator[](int i) const { return motifs_.at(i); }
  const std::vector<Motif>& motifs() const { return motifs_; }

  std::optional<int> find(const std::string& key) const {
    auto it = index_.find(key);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["version"] = kFormatVersion;
    j["n"] = n_;
    j["motifs"] = nlohmann::ordered_json::array();
    for (const auto& m : motifs_)
      j["motifs"].push_back({{"smiles", m.key}, {"count", m.count}, {"index", *m.vocab_index}});
    return j;
  }

  std::string dump() const { return to_json().dump(2) + "\n"; }

  static MotifVocabulary from_json(const nlohmann::json& j) {
    try {
      if (j.at("version").get<int>() != kFormatVersion)
        throw VocabularyError("unsupported vocabulary version");
      std::vector<std::pair<std::string, long>> entries;
      for (const auto& e : j.at("motifs")) {
        if (e.at("index").get<int>() != static_cast<int>(entries.size()))
          throw VocabularyError("motif index out of sequence");
        entries.emplace_back(e.at("smiles").get<std::string>(), e.at("count").get<long>());
      }
      return MotifVocabulary(j.at("n").get<int>(), entries);
    } catch (const nlohmann::json::exception& e) {
      throw VocabularyError(std::string("malformed vocabulary: ") + e.what());
    } catch (const SmilesError& e) {
      throw VocabularyError(std::string("bad motif SMILES: ") + e.what());
    }
  }

  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw VocabularyError("cannot write " + path);
    out << dump();
  }

  static MotifVocabulary load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw VocabularyError("cannot read " + path);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw VocabularyError(std::string("malformed vocabulary: ") + e.what());
    }
    return from_json(j);
  }

  std::string hash() const { return hex64(fnv1a(dump())); }

  friend bool operator==(const MotifVocabulary& a, const MotifVocabulary& b) {
    if (a.n_ != b.n_ || a.size() != b.size()) return false;
    for (int i = 0; i < a.size(); ++i)
      if (a.motifs_[i].key != b.motifs_[i].key || a.motifs_[i].count != b.motifs_[i].count)
        return false;
    return true;
  }

 private:
  int n_ = 0;
  std::vector<Motif> motifs_;
  std::unordered_map<std::string, int> index_;
};

/// Fragment-key frequency table. Merging is associative and commutative.
class MotifCounter {
 public:
  void add(const MolGraph& mol) {
    for (const auto& f : fragment_molecule(mol).fragments) ++counts_[molecule_key(f.graph)];
    ++molecules_;
  }

  /// Parses and adds; unparsable entries only bump the skip counter.
  bool add_smiles(const std::string& smiles) {
    try {
      add(parse_smiles(smiles));
      return true;
    } catch (const std::exception&) {
      ++skipped_;
      return false;
    }
  }

  void merge(const MotifCounter& other) {
    for (const auto& [k, c] : other.counts_) counts_[k] += c;
    molecules_ += other.molecules_;
    skipped_ += other.skipped_;
  }

  const std::map<std::string, long>& counts() const { return counts_; }
  long molecules() const { return molecules_; }
  long skipped() const { return skipped_; }

  /// Entries ordered by count descending, then key ascending.
  std::vector<std::pair<std::string, long>> ranked() const {
    std::vector<std::pair<std::string, long>> out(counts_.begin(), counts_.end());
    std::stable_sort(out.begin(), out.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    return out;
  }

  MotifVocabulary top(int n) const {
    if (n < 0) throw std::invalid_argument("vocabulary size must be non-negative");
    auto r = ranked();
    if (static_cast<int>(r.size()) > n) r.resize(n);
    return MotifVocabulary(n, r);
  }

 private:
  std::map<std::string, long> counts_;
  long molecules_ = 0;
  long skipped_ = 0;
};

inline MotifVocabulary mine_vocabulary(const std::vector<MolGraph>& corpus, int n) {
  MotifCounter c;
  for (const auto& m : corpus) c.add(m);
  return c.top(n);
}

inline MotifVocabulary mine_vocabulary_smiles(const std::vector<std::string>& corpus, int n,
                                              long* skipped = nullptr) {
  MotifCounter c;
  for (const auto& s : corpus) c.add_smiles(s);
  if (skipped) *skipped = c.skipped();
  return c.top(n);
}

struct MotifOccurrence {
  int vocab_index = -1;
  std::vector<int> atoms;  // atoms[p] = molecule atom at motif position p
};

struct MotifAnnotation {
  std::vector<int> motif_of;     // vocab index or -1
  std::vector<int> position;     // position within the motif or -1
  std::vector<int> occurrence;   // occurrence id or -1
  std::vector<MotifOccurrence> occurrences;

  bool annotated(int atom) const { return occurrence[atom] >= 0; }
};

inline MotifAnnotation annotate(const MolGraph& mol, const MotifVocabulary& vocab) {
  int n = mol.num_atoms();
  MotifAnnotation ann;
  ann.motif_of.assign(n, -1);
  ann.position.assign(n, -1);
  ann.occurrence.assign(n, -1);
  if (vocab.empty()) return ann;
  for (const auto& f : fragment_molecule(mol).fragments) {
    auto canon = canonicalize(normalize_kekule(f.graph));
    auto idx = vocab.find(canon.smiles);
    if (!idx) continue;
    MotifOccurrence occ;
    occ.vocab_index = *idx;
    occ.atoms.resize(f.atoms.size());
    int id = static_cast<int>(ann.occurrences.size());
    for (std::size_t i = 0; i < f.atoms.size(); ++i) {
      int v = f.atoms[i];
      int p = canon.rank[i];
      occ.atoms[p] = v;
      ann.motif_of[v] = *idx;
      ann.position[v] = p;
      ann.occurrence[v] = id;
    }
    ann.occurrences.push_back(std::move(occ));
  }
  return ann;
}

}  // namespace moler
