#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "moler/chem/kekule.hpp"
#include "moler/latent/decode.hpp"
#include "moler/latent/gmm.hpp"
#include "moler/latent/metrics.hpp"

namespace moler {

class ConstraintError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct InterpolationPoint {
  double t = 0;
  MolGraph mol;
  std::string key;
};

inline Latent lerp(const Latent& a, const Latent& b, double t) {
  Latent z(a.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    z[i] = static_cast<float>((1.0 - t) * a[i] + t * b[i]);
  return z;
}

/// Decodes a uniform t-grid between the two encodings and keeps the points
/// where the decoded molecule changes.
inline std::vector<InterpolationPoint> interpolate(const nn::Model<float>& model, const MolGraph& m1,
                                                   const MolGraph& m2, int steps,
                                                   const MolGraph* scaffold = nullptr,
                                                   const DecodeOptions& opt = {}) {
  if (steps < 2) throw std::invalid_argument("interpolation needs at least two points");
  auto z = encode_means(model, {m1, m2});
  std::vector<InterpolationPoint> out;
  for (int i = 0; i < steps; ++i) {
    double t = static_cast<double>(i) / (steps - 1);
    auto mol = decode(model, lerp(z[0], z[1], t), scaffold, opt);
    auto key = molecule_key(mol);
    if (!out.empty() && out.back().key == key) continue;
    out.push_back({t, std::move(mol), std::move(key)});
  }
  return out;
}

struct GridCell {
  int row = 0, col = 0;
  MolGraph mol;
  std::string key;
};

struct GridResult {
  double step = 0;
  int distinct = 0;
  bool success = false;
  std::vector<GridCell> cells;  // row-major
  std::vector<Latent> directions;
};

/// Two orthonormal random directions.
inline std::vector<Latent> random_plane(int dim, std::mt19937_64& rng) {
  if (dim < 2) throw std::invalid_argument("a plane needs at least two latent dimensions");
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<std::vector<double>> d(2, std::vector<double>(dim));
  for (auto& v : d)
    for (auto& x : v) x = n(rng);
  auto dot = [&](const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0;
    for (int i = 0; i < dim; ++i) s += a[i] * b[i];
    return s;
  };
  double n0 = std::sqrt(dot(d[0], d[0]));
  for (auto& x : d[0]) x /= n0;
  double p = dot(d[0], d[1]);
  for (int i = 0; i < dim; ++i) d[1][i] -= p * d[0][i];
  double n1 = std::sqrt(dot(d[1], d[1]));
  for (auto& x : d[1]) x /= n1;
  std::vector<Latent> out(2, Latent(dim));
  for (int k = 0; k < 2; ++k)
    for (int i = 0; i < dim; ++i) out[k][i] = static_cast<float>(d[k][i]);
  return out;
}

inline GridResult decode_grid(const nn::Model<float>& model, const Latent& center,
                              const std::vector<Latent>& dirs, double step, int size,
                              const MolGraph* scaffold, DecodeOptions opt = {}) {
  GridResult g;
  g.step = step;
  g.directions = dirs;
  int r = size / 2;
  std::vector<Latent> zs;
  for (int i = -r; i < size - r; ++i)
    for (int j = -r; j < size - r; ++j) {
      Latent z = center;
      if (i != 0 || j != 0)
        for (std::size_t k = 0; k < z.size(); ++k)
          z[k] = static_cast<float>(center[k] + step * (i * dirs[0][k] + j * dirs[1][k]));
      zs.push_back(std::move(z));
    }
  // Far from the data the decoder may never stop; such cells stay empty and
  // do not count as distinct.
  opt.empty_on_cap = true;
  auto mols = decode_many(model, zs, scaffold, opt);
  std::set<std::string> keys;
  for (int c = 0; c < size * size; ++c) {
    GridCell cell{c / size, c % size, std::move(mols[c]), ""};
    if (!cell.mol.empty()) {
      cell.key = molecule_key(cell.mol);
      keys.insert(cell.key);
    }
    g.cells.push_back(std::move(cell));
  }
  g.distinct = static_cast<int>(keys.size());
  g.success = g.distinct == size * size;
  return g;
}

struct GridSearch {
  double low = 1e-3, high = 1e2;
  int iterations = 30;
  int size = 5;
};

/// Smallest step (bisection on a log scale) at which all cells decode to
/// distinct molecules. Without success anywhere in the bracket, the grid
/// with the most distinct molecules seen is returned.
inline GridResult neighborhood_grid(const nn::Model<float>& model, const MolGraph& mol,
                                    std::mt19937_64& rng, const MolGraph* scaffold = nullptr,
                                    const GridSearch& search = {},
                                    const DecodeOptions& opt = {}) {
  auto center = encode_mean(model, mol);
  auto dirs = random_plane(model.config().latent, rng);
  GridResult best_seen = decode_grid(model, center, dirs, search.high, search.size, scaffold, opt);
  if (!best_seen.success) {
    for (int i = 0; i < search.iterations; ++i) {
      double s = search.low * std::pow(search.high / search.low, static_cast<double>(i + 1) / search.iterations);
      auto g = decode_grid(model, center, dirs, s, search.size, scaffold, opt);
      if (g.success) {
        best_seen = std::move(g);
        break;
      }
      if (g.distinct > best_seen.distinct) best_seen = std::move(g);
    }
    if (!best_seen.success) return best_seen;
  }
  double lo = search.low, hi = best_seen.step;
  GridResult found = std::move(best_seen);
  for (int i = 0; i < search.iterations; ++i) {
    double mid = std::sqrt(lo * hi);
    auto g = decode_grid(model, center, dirs, mid, search.size, scaffold, opt);
    if (g.success) {
      hi = mid;
      found = std::move(g);
    } else {
      lo = mid;
    }
  }
  return found;
}

/// Latents of scaffold-containing corpus molecules, fitted with a GMM and
/// decoded under the scaffold constraint.
inline std::vector<MolGraph> scaffold_posterior_sample(const nn::Model<float>& model,
                                                       const std::vector<MolGraph>& corpus,
                                                       const MolGraph& scaffold, int count,
                                                       std::mt19937_64& rng,
                                                       const DecodeOptions& opt = {},
                                                       int max_components = 50,
                                                       int em_iterations = 100) {
  std::vector<MolGraph> matches;
  for (const auto& m : corpus)
    if (scaffold_match(m, scaffold)) matches.push_back(m);
  if (matches.empty()) throw ConstraintError("scaffold does not occur in the corpus");
  auto lat = encode_means(model, matches);
  std::vector<std::vector<double>> pts;
  for (const auto& z : lat) pts.emplace_back(z.begin(), z.end());
  int K = std::min(max_components, static_cast<int>(matches.size()));
  auto gmm = fit_gmm(pts, K, em_iterations, rng);
  std::vector<MolGraph> out;
  for (int i = 0; i < count; ++i) {
    auto x = gmm.sample(rng);
    Latent z(x.begin(), x.end());
    out.push_back(decode(model, z, &scaffold, opt, &rng));
  }
  return out;
}

}  // namespace moler
