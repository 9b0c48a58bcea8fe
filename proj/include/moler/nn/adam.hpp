#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "moler/nn/tape.hpp"

namespace moler::nn {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double clip_norm = 1.0;  // <= 0 disables clipping
  long decay_steps = 0;    // cosine decay from lr to lr_final; 0 keeps lr constant
  double lr_final = 0.0;

  /// Learning rate of update number `t` (1-based).
  double rate(long t) const {
    if (decay_steps <= 0) return lr;
    double f = std::min(1.0, static_cast<double>(t - 1) / decay_steps);
    return lr_final + (lr - lr_final) * 0.5 * (1.0 + std::cos(std::numbers::pi * f));
  }
};

template <class T>
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  /// Global gradient norm before clipping.
  double step(ParamSet<T>& p) {
    if (m_.empty())
      for (int i = 0; i < p.size(); ++i) {
        m_.push_back(Mat<T>::Zero(p.value(i).rows(), p.value(i).cols()));
        v_.push_back(m_.back());
      }
    double sq = 0;
    for (int i = 0; i < p.size(); ++i) sq += static_cast<double>(p.grad(i).squaredNorm());
    double norm = std::sqrt(sq);
    T clip = T(1);
    if (cfg_.clip_norm > 0 && norm > cfg_.clip_norm) clip = static_cast<T>(cfg_.clip_norm / norm);
    ++t_;
    T b1 = static_cast<T>(cfg_.beta1), b2 = static_cast<T>(cfg_.beta2);
    T c1 = static_cast<T>(1.0 - std::pow(cfg_.beta1, t_));
    T c2 = static_cast<T>(1.0 - std::pow(cfg_.beta2, t_));
    T lr = static_cast<T>(cfg_.rate(t_)), eps = static_cast<T>(cfg_.eps);
    for (int i = 0; i < p.size(); ++i) {
      auto g = (p.grad(i) * clip).array();
      m_[i].array() = b1 * m_[i].array() + (T(1) - b1) * g;
      v_[i].array() = b2 * v_[i].array() + (T(1) - b2) * g.square();
      p.value(i).array() -= lr * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + eps);
    }
    return norm;
  }

  long steps() const { return t_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  AdamConfig cfg_;
  long t_ = 0;
  std::vector<Mat<T>> m_, v_;
};

}  // namespace moler::nn
