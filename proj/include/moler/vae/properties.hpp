#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "moler/chem/molgraph.hpp"

namespace moler {

/// Regression targets: molecular weight, heavy-atom count and ring count,
/// standardized with statistics fitted on the training corpus.
struct PropertySpec {
  std::vector<std::string> names{"molecular_weight", "heavy_atoms", "rings"};
  std::vector<double> mean{0, 0, 0};
  std::vector<double> stddev{1, 1, 1};

  int size() const { return static_cast<int>(names.size()); }

  static std::vector<double> compute(const MolGraph& mol) {
    return {molecular_weight(mol), static_cast<double>(heavy_atom_count(mol)),
            static_cast<double>(ring_count(mol))};
  }

  static PropertySpec fit(const std::vector<MolGraph>& corpus) {
    if (corpus.empty()) throw std::invalid_argument("cannot fit properties on an empty corpus");
    PropertySpec s;
    std::vector<double> sum(s.size(), 0), sq(s.size(), 0);
    for (const auto& m : corpus) {
      auto p = compute(m);
      for (int i = 0; i < s.size(); ++i) {
        sum[i] += p[i];
        sq[i] += p[i] * p[i];
      }
    }
    double n = static_cast<double>(corpus.size());
    for (int i = 0; i < s.size(); ++i) {
      s.mean[i] = sum[i] / n;
      double var = std::max(sq[i] / n - s.mean[i] * s.mean[i], 0.0);
      s.stddev[i] = var > 1e-12 ? std::sqrt(var) : 1.0;
    }
    return s;
  }

  std::vector<double> normalized(const MolGraph& mol) const {
    auto p = compute(mol);
    for (int i = 0; i < size(); ++i) p[i] = (p[i] - mean[i]) / stddev[i];
    return p;
  }

  nlohmann::json to_json() const { return {{"names", names}, {"mean", mean}, {"std", stddev}}; }

  static PropertySpec from_json(const nlohmann::json& j) {
    PropertySpec s;
    s.names = j.at("names").get<std::vector<std::string>>();
    s.mean = j.at("mean").get<std::vector<double>>();
    s.stddev = j.at("std").get<std::vector<double>>();
    if (s.names.size() != s.mean.size() || s.names.size() != s.stddev.size())
      throw std::invalid_argument("property statistics have inconsistent sizes");
    return s;
  }
};

}  // namespace moler
