#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "moler/nn/tape.hpp"

namespace moler::nn {

struct GradcheckResult {
  double max_rel_error = 0.0;
  int checked = 0;
  int skipped_kinks = 0;  // entries whose difference interval crossed a LeakyReLU kink
};

/// Compares reverse-mode gradients with central differences over `samples`
/// random parameter entries. `loss` builds the scalar on the given tape.
/// An entry is skipped when +-step flips the sign of any LeakyReLU input,
/// since the loss is not differentiable on that interval.
inline GradcheckResult gradcheck(ParamSet<double>& params,
                                 const std::function<Var(Tape<double>&)>& loss, int samples,
                                 std::mt19937_64& rng, double step = 1e-4,
                                 double denom_floor = 1e-6) {
  params.zero_grad();
  std::vector<char> base_signs;
  {
    Tape<double> t(&params);
    t.track_kinks = true;
    Var l = loss(t);
    t.backward(l);
    base_signs = std::move(t.kink_signs);
  }
  std::vector<Mat<double>> analytic;
  for (int i = 0; i < params.size(); ++i) analytic.push_back(params.grad(i));
  auto eval = [&](std::vector<char>& signs) {
    Tape<double> t(&params, false);
    t.track_kinks = true;
    double v = t.scalar(loss(t));
    signs = std::move(t.kink_signs);
    return v;
  };
  std::vector<std::pair<int, Eigen::Index>> entries;
  for (int i = 0; i < params.size(); ++i)
    for (Eigen::Index k = 0; k < params.value(i).size(); ++k) entries.push_back({i, k});
  std::shuffle(entries.begin(), entries.end(), rng);
  GradcheckResult r;
  for (const auto& [i, k] : entries) {
    if (r.checked >= samples) break;
    double& x = params.value(i).data()[k];
    double x0 = x;
    std::vector<char> sp, sm;
    x = x0 + step;
    double fp = eval(sp);
    x = x0 - step;
    double fm = eval(sm);
    x = x0;
    if (sp != base_signs || sm != base_signs) {
      ++r.skipped_kinks;
      continue;
    }
    double numeric = (fp - fm) / (2 * step);
    double a = analytic[i].data()[k];
    double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), denom_floor});
    r.max_rel_error = std::max(r.max_rel_error, rel);
    ++r.checked;
  }
  return r;
}

}  // namespace moler::nn
