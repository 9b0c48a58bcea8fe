#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <stdexcept>
#include <vector>

namespace moler {

class GmmError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Diagonal-covariance Gaussian mixture.
struct Gmm {
  std::vector<double> weight;
  std::vector<std::vector<double>> mean;
  std::vector<std::vector<double>> variance;
  std::vector<double> log_likelihood;  // mean per-point value after each EM iteration

  int components() const { return static_cast<int>(weight.size()); }
  int dim() const { return mean.empty() ? 0 : static_cast<int>(mean[0].size()); }

  double component_log_density(int k, const std::vector<double>& x) const {
    double s = std::log(weight[k]);
    for (int d = 0; d < dim(); ++d) {
      double diff = x[d] - mean[k][d];
      s -= 0.5 * (std::log(2 * std::numbers::pi * variance[k][d]) + diff * diff / variance[k][d]);
    }
    return s;
  }

  double log_density(const std::vector<double>& x) const {
    double mx = -std::numeric_limits<double>::infinity();
    std::vector<double> l(components());
    for (int k = 0; k < components(); ++k) mx = std::max(mx, l[k] = component_log_density(k, x));
    double z = 0;
    for (double v : l) z += std::exp(v - mx);
    return mx + std::log(z);
  }

  std::vector<double> sample(std::mt19937_64& rng) const {
    std::discrete_distribution<int> pick(weight.begin(), weight.end());
    int k = pick(rng);
    std::normal_distribution<double> n(0.0, 1.0);
    std::vector<double> x(dim());
    for (int d = 0; d < dim(); ++d) x[d] = mean[k][d] + std::sqrt(variance[k][d]) * n(rng);
    return x;
  }
};

inline constexpr double kGmmVarianceFloor = 1e-6;

/// EM with k-means++ seeding. Variances are clamped from below, which keeps
/// each M-step a constrained maximizer, so the likelihood does not decrease.
inline Gmm fit_gmm(const std::vector<std::vector<double>>& x, int K, int iterations,
                   std::mt19937_64& rng, double floor = kGmmVarianceFloor) {
  int n = static_cast<int>(x.size());
  if (K < 1) throw GmmError("need at least one component");
  if (n < K) throw GmmError("fewer points than mixture components");
  int D = static_cast<int>(x[0].size());
  for (const auto& p : x)
    if (static_cast<int>(p.size()) != D) throw GmmError("points differ in dimension");

  auto sq = [&](const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0;
    for (int d = 0; d < D; ++d) s += (a[d] - b[d]) * (a[d] - b[d]);
    return s;
  };
  Gmm g;
  std::uniform_int_distribution<int> first(0, n - 1);
  g.mean.push_back(x[first(rng)]);
  std::vector<double> best(n);
  for (int i = 0; i < n; ++i) best[i] = sq(x[i], g.mean[0]);
  while (static_cast<int>(g.mean.size()) < K) {
    double total = 0;
    for (double b : best) total += b;
    int pick;
    if (total <= 0) {
      pick = first(rng);
    } else {
      std::discrete_distribution<int> d(best.begin(), best.end());
      pick = d(rng);
    }
    g.mean.push_back(x[pick]);
    for (int i = 0; i < n; ++i) best[i] = std::min(best[i], sq(x[i], g.mean.back()));
  }
  // Initial variances: global per-dimension variance.
  std::vector<double> mu(D, 0), var(D, 0);
  for (const auto& p : x)
    for (int d = 0; d < D; ++d) mu[d] += p[d] / n;
  for (const auto& p : x)
    for (int d = 0; d < D; ++d) var[d] += (p[d] - mu[d]) * (p[d] - mu[d]) / n;
  for (auto& v : var) v = std::max(v, floor);
  g.variance.assign(K, var);
  g.weight.assign(K, 1.0 / K);

  std::vector<std::vector<double>> resp(n, std::vector<double>(K));
  auto e_step = [&]() {
    double ll = 0;
    for (int i = 0; i < n; ++i) {
      double mx = -std::numeric_limits<double>::infinity();
      for (int k = 0; k < K; ++k) mx = std::max(mx, resp[i][k] = g.component_log_density(k, x[i]));
      double z = 0;
      for (int k = 0; k < K; ++k) z += std::exp(resp[i][k] - mx);
      double lse = mx + std::log(z);
      for (int k = 0; k < K; ++k) resp[i][k] = std::exp(resp[i][k] - lse);
      ll += lse;
    }
    return ll / n;
  };
  e_step();
  for (int it = 0; it < iterations; ++it) {
    for (int k = 0; k < K; ++k) {
      double nk = 0;
      for (int i = 0; i < n; ++i) nk += resp[i][k];
      if (nk < 1e-12) {
        g.weight[k] = 1e-12;
        continue;
      }
      g.weight[k] = nk / n;
      for (int d = 0; d < D; ++d) {
        double m = 0;
        for (int i = 0; i < n; ++i) m += resp[i][k] * x[i][d];
        g.mean[k][d] = m / nk;
      }
      for (int d = 0; d < D; ++d) {
        double v = 0;
        for (int i = 0; i < n; ++i) v += resp[i][k] * (x[i][d] - g.mean[k][d]) * (x[i][d] - g.mean[k][d]);
        g.variance[k][d] = std::max(v / nk, floor);
      }
    }
    double wsum = 0;
    for (double w : g.weight) wsum += w;
    for (double& w : g.weight) w /= wsum;
    g.log_likelihood.push_back(e_step());
  }
  return g;
}

}  // namespace moler
