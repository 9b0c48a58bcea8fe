#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace moler::nn {

template <class T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Named parameter matrices with matching gradient buffers.
template <class T>
class ParamSet {
 public:
  int add(const std::string& name, Mat<T> init) {
    if (index_.count(name)) throw std::invalid_argument("duplicate parameter " + name);
    int id = size();
    index_.emplace(name, id);
    names_.push_back(name);
    grads_.push_back(Mat<T>::Zero(init.rows(), init.cols()));
    values_.push_back(std::move(init));
    return id;
  }

  int size() const { return static_cast<int>(values_.size()); }
  const std::string& name(int i) const { return names_.at(i); }
  Mat<T>& value(int i) { return values_.at(i); }
  const Mat<T>& value(int i) const { return values_.at(i); }
  Mat<T>& grad(int i) { return grads_.at(i); }
  const Mat<T>& grad(int i) const { return grads_.at(i); }

  std::optional<int> find(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  void zero_grad() {
    for (auto& g : grads_) g.setZero();
  }

  long num_scalars() const {
    long n = 0;
    for (const auto& v : values_) n += v.size();
    return n;
  }

  template <class U>
  ParamSet<U> cast() const {
    ParamSet<U> out;
    for (int i = 0; i < size(); ++i) out.add(names_[i], values_[i].template cast<U>());
    return out;
  }

 private:
  std::vector<std::string> names_;
  std::vector<Mat<T>> values_;
  std::vector<Mat<T>> grads_;
  std::unordered_map<std::string, int> index_;
};

struct Var {
  int id = -1;
};

/// Reverse-mode tape over dense matrices. With `record = false` no backward
/// closures are kept, which is the inference mode.
template <class T>
class Tape {
 public:
  explicit Tape(ParamSet<T>* params = nullptr, bool record = true)
      : params_(params), record_(record) {}

  bool recording() const { return record_; }

  Var constant(Mat<T> value) { return push(std::move(value), false, nullptr); }

  Var param(int pid) {
    if (!params_) throw std::logic_error("tape has no parameter set");
    if (auto it = param_vars_.find(pid); it != param_vars_.end()) return it->second;
    Var v = push(params_->value(pid), record_, nullptr);
    nodes_[v.id].param = pid;
    param_vars_.emplace(pid, v);
    return v;
  }

  const Mat<T>& value(Var v) const { return nodes_.at(v.id).value; }
  T scalar(Var v) const { return nodes_.at(v.id).value(0, 0); }
  bool needs_grad(Var v) const { return nodes_[v.id].needs_grad; }
  int size() const { return static_cast<int>(nodes_.size()); }

  /// Gradient buffer of `v`, allocated as zeros on first use.
  Mat<T>& grad(Var v) {
    auto& n = nodes_[v.id];
    if (n.grad.size() == 0) n.grad = Mat<T>::Zero(n.value.rows(), n.value.cols());
    return n.grad;
  }

  /// Pushes a node. `back` runs during backward with the output gradient
  /// available through grad(output).
  Var push(Mat<T> value, bool needs_grad, std::function<void(Var)> back) {
    Node n;
    n.value = std::move(value);
    n.needs_grad = needs_grad && record_;
    if (n.needs_grad) n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return Var{size() - 1};
  }

  /// Backpropagates from a 1x1 output and adds parameter gradients into the
  /// parameter set.
  void backward(Var loss, T seed = T(1)) {
    if (!record_) throw std::logic_error("backward on a non-recording tape");
    if (value(loss).size() != 1) throw std::invalid_argument("backward needs a scalar");
    grad(loss)(0, 0) += seed;
    for (int i = loss.id; i >= 0; --i) {
      auto& n = nodes_[i];
      if (!n.needs_grad || n.grad.size() == 0) continue;
      if (n.back) n.back(Var{i});
      if (n.param >= 0) params_->grad(n.param) += n.grad;
    }
  }

  /// Sign pattern of every LeakyReLU input, for detecting kinks in finite
  /// differences.
  bool track_kinks = false;
  std::vector<char> kink_signs;

 private:
  struct Node {
    Mat<T> value;
    Mat<T> grad;
    std::function<void(Var)> back;
    bool needs_grad = false;
    int param = -1;
  };

  ParamSet<T>* params_;
  bool record_;
  std::vector<Node> nodes_;
  std::unordered_map<int, Var> param_vars_;
};

// ---- operations ------------------------------------------------------------

template <class T>
Var matmul(Tape<T>& t, Var a, Var b) {
  if (t.value(a).cols() != t.value(b).rows()) throw std::invalid_argument("matmul shape");
  Mat<T> out = t.value(a) * t.value(b);
  return t.push(std::move(out), t.needs_grad(a) || t.needs_grad(b), [&t, a, b](Var o) {
    const auto& g = t.grad(o);
    if (t.needs_grad(a)) t.grad(a).noalias() += g * t.value(b).transpose();
    if (t.needs_grad(b)) t.grad(b).noalias() += t.value(a).transpose() * g;
  });
}

template <class T>
Var add(Tape<T>& t, Var a, Var b) {
  if (t.value(a).rows() != t.value(b).rows() || t.value(a).cols() != t.value(b).cols())
    throw std::invalid_argument("add shape");
  Mat<T> out = t.value(a) + t.value(b);
  return t.push(std::move(out), t.needs_grad(a) || t.needs_grad(b), [&t, a, b](Var o) {
    if (t.needs_grad(a)) t.grad(a) += t.grad(o);
    if (t.needs_grad(b)) t.grad(b) += t.grad(o);
  });
}

template <class T>
Var sub(Tape<T>& t, Var a, Var b) {
  Mat<T> out = t.value(a) - t.value(b);
  return t.push(std::move(out), t.needs_grad(a) || t.needs_grad(b), [&t, a, b](Var o) {
    if (t.needs_grad(a)) t.grad(a) += t.grad(o);
    if (t.needs_grad(b)) t.grad(b) -= t.grad(o);
  });
}

/// a + 1 * row, broadcasting a 1xC row over every row of a.
template <class T>
Var add_row(Tape<T>& t, Var a, Var row) {
  if (t.value(row).rows() != 1 || t.value(row).cols() != t.value(a).cols())
    throw std::invalid_argument("add_row shape");
  Mat<T> out = t.value(a).rowwise() + t.value(row).row(0);
  return t.push(std::move(out), t.needs_grad(a) || t.needs_grad(row), [&t, a, row](Var o) {
    if (t.needs_grad(a)) t.grad(a) += t.grad(o);
    if (t.needs_grad(row)) t.grad(row) += t.grad(o).colwise().sum();
  });
}

template <class T>
Var hadamard(Tape<T>& t, Var a, Var b) {
  Mat<T> out = t.value(a).cwiseProduct(t.value(b));
  return t.push(std::move(out), t.needs_grad(a) || t.needs_grad(b), [&t, a, b](Var o) {
    if (t.needs_grad(a)) t.grad(a) += t.grad(o).cwiseProduct(t.value(b));
    if (t.needs_grad(b)) t.grad(b) += t.grad(o).cwiseProduct(t.value(a));
  });
}

template <class T>
Var scale(Tape<T>& t, Var a, T c) {
  Mat<T> out = t.value(a) * c;
  return t.push(std::move(out), t.needs_grad(a),
                [&t, a, c](Var o) { t.grad(a) += t.grad(o) * c; });
}

template <class T>
Var leaky_relu(Tape<T>& t, Var a, T slope = T(0.01)) {
  const auto& x = t.value(a);
  if (t.track_kinks)
    for (Eigen::Index i = 0; i < x.size(); ++i) t.kink_signs.push_back(x.data()[i] > 0);
  Mat<T> out = x.unaryExpr([slope](T v) { return v > 0 ? v : slope * v; });
  return t.push(std::move(out), t.needs_grad(a), [&t, a, slope](Var o) {
    const auto& x = t.value(a);
    t.grad(a) += t.grad(o).binaryExpr(x, [slope](T g, T v) { return v > 0 ? g : slope * g; });
  });
}

template <class T>
Var exp(Tape<T>& t, Var a) {
  Mat<T> out = t.value(a).array().exp().matrix();
  return t.push(std::move(out), t.needs_grad(a),
                [&t, a](Var o) { t.grad(a) += t.grad(o).cwiseProduct(t.value(o)); });
}

template <class T>
Var sigmoid(Tape<T>& t, Var a) {
  Mat<T> out = t.value(a).unaryExpr([](T v) { return T(1) / (T(1) + std::exp(-v)); });
  return t.push(std::move(out), t.needs_grad(a), [&t, a](Var o) {
    const auto& y = t.value(o);
    t.grad(a) += t.grad(o).cwiseProduct(y.cwiseProduct((T(1) - y.array()).matrix()));
  });
}

/// Row-wise LayerNorm with a 1xC gain and bias.
template <class T>
Var layer_norm(Tape<T>& t, Var a, Var gain, Var bias, T eps = T(1e-5)) {
  const auto& x = t.value(a);
  Eigen::Index n = x.rows(), c = x.cols();
  Mat<T> xhat(n, c);
  Eigen::Matrix<T, Eigen::Dynamic, 1> inv_std(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    T mean = x.row(i).mean();
    auto centered = (x.row(i).array() - mean).matrix();
    T var = centered.squaredNorm() / T(c);
    inv_std(i) = T(1) / std::sqrt(var + eps);
    xhat.row(i) = centered * inv_std(i);
  }
  Mat<T> out = (xhat.array().rowwise() * t.value(gain).row(0).array()).matrix();
  out.rowwise() += t.value(bias).row(0);
  bool ng = t.needs_grad(a) || t.needs_grad(gain) || t.needs_grad(bias);
  return t.push(std::move(out), ng, [&t, a, gain, bias, xhat, inv_std](Var o) {
    const auto& g = t.grad(o);
    if (t.needs_grad(gain)) t.grad(gain) += g.cwiseProduct(xhat).colwise().sum();
    if (t.needs_grad(bias)) t.grad(bias) += g.colwise().sum();
    if (!t.needs_grad(a)) return;
    Eigen::Index c = xhat.cols();
    Mat<T> gx = (g.array().rowwise() * t.value(gain).row(0).array()).matrix();
    auto& ga = t.grad(a);
    for (Eigen::Index i = 0; i < xhat.rows(); ++i) {
      T m1 = gx.row(i).mean();
      T m2 = gx.row(i).dot(xhat.row(i)) / T(c);
      ga.row(i) += (inv_std(i) * (gx.row(i).array() - m1 - xhat.row(i).array() * m2)).matrix();
    }
  });
}

template <class T>
Var concat_cols(Tape<T>& t, const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat of nothing");
  Eigen::Index rows = t.value(parts[0]).rows(), cols = 0;
  bool ng = false;
  for (Var p : parts) {
    if (t.value(p).rows() != rows) throw std::invalid_argument("concat_cols shape");
    cols += t.value(p).cols();
    ng = ng || t.needs_grad(p);
  }
  Mat<T> out(rows, cols);
  Eigen::Index c = 0;
  for (Var p : parts) {
    out.middleCols(c, t.value(p).cols()) = t.value(p);
    c += t.value(p).cols();
  }
  return t.push(std::move(out), ng, [&t, parts](Var o) {
    Eigen::Index c = 0;
    for (Var p : parts) {
      Eigen::Index w = t.value(p).cols();
      if (t.needs_grad(p)) t.grad(p) += t.grad(o).middleCols(c, w);
      c += w;
    }
  });
}

template <class T>
Var concat_rows(Tape<T>& t, const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat of nothing");
  Eigen::Index cols = t.value(parts[0]).cols(), rows = 0;
  bool ng = false;
  for (Var p : parts) {
    if (t.value(p).cols() != cols) throw std::invalid_argument("concat_rows shape");
    rows += t.value(p).rows();
    ng = ng || t.needs_grad(p);
  }
  Mat<T> out(rows, cols);
  Eigen::Index r = 0;
  for (Var p : parts) {
    out.middleRows(r, t.value(p).rows()) = t.value(p);
    r += t.value(p).rows();
  }
  return t.push(std::move(out), ng, [&t, parts](Var o) {
    Eigen::Index r = 0;
    for (Var p : parts) {
      Eigen::Index h = t.value(p).rows();
      if (t.needs_grad(p)) t.grad(p) += t.grad(o).middleRows(r, h);
      r += h;
    }
  });
}

/// out[i] = a[idx[i]].
template <class T>
Var gather_rows(Tape<T>& t, Var a, std::vector<int> idx) {
  const auto& x = t.value(a);
  Mat<T> out(static_cast<Eigen::Index>(idx.size()), x.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || idx[i] >= x.rows()) throw std::out_of_range("gather_rows index");
    out.row(i) = x.row(idx[i]);
  }
  return t.push(std::move(out), t.needs_grad(a), [&t, a, idx = std::move(idx)](Var o) {
    auto& ga = t.grad(a);
    const auto& g = t.grad(o);
    for (std::size_t i = 0; i < idx.size(); ++i) ga.row(idx[i]) += g.row(i);
  });
}

/// out[idx[i]] += a[i] over `rows` output rows, summed in index order.
template <class T>
Var scatter_rows(Tape<T>& t, Var a, std::vector<int> idx, int rows) {
  const auto& x = t.value(a);
  if (static_cast<Eigen::Index>(idx.size()) != x.rows())
    throw std::invalid_argument("scatter_rows index count");
  Mat<T> out = Mat<T>::Zero(rows, x.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) out.row(idx[i]) += x.row(i);
  return t.push(std::move(out), t.needs_grad(a), [&t, a, idx = std::move(idx)](Var o) {
    auto& ga = t.grad(a);
    const auto& g = t.grad(o);
    for (std::size_t i = 0; i < idx.size(); ++i) ga.row(i) += g.row(idx[i]);
  });
}

/// Softmax of every column within each row segment (`seg[i]` = segment of
/// row i).
template <class T>
Var segment_softmax(Tape<T>& t, Var a, std::vector<int> seg, int num_segments) {
  const auto& x = t.value(a);
  Eigen::Index n = x.rows(), c = x.cols();
  Mat<T> mx = Mat<T>::Constant(num_segments, c, -std::numeric_limits<T>::infinity());
  for (Eigen::Index i = 0; i < n; ++i) mx.row(seg[i]) = mx.row(seg[i]).cwiseMax(x.row(i));
  Mat<T> out(n, c);
  Mat<T> denom = Mat<T>::Zero(num_segments, c);
  for (Eigen::Index i = 0; i < n; ++i) {
    out.row(i) = (x.row(i) - mx.row(seg[i])).array().exp().matrix();
    denom.row(seg[i]) += out.row(i);
  }
  for (Eigen::Index i = 0; i < n; ++i) out.row(i).array() /= denom.row(seg[i]).array();
  return t.push(std::move(out), t.needs_grad(a),
                [&t, a, seg = std::move(seg), num_segments](Var o) {
                  const auto& y = t.value(o);
                  const auto& g = t.grad(o);
                  Mat<T> dot = Mat<T>::Zero(num_segments, y.cols());
                  for (Eigen::Index i = 0; i < y.rows(); ++i)
                    dot.row(seg[i]) += g.row(i).cwiseProduct(y.row(i));
                  auto& ga = t.grad(a);
                  for (Eigen::Index i = 0; i < y.rows(); ++i)
                    ga.row(i) += y.row(i).cwiseProduct(g.row(i) - dot.row(seg[i]));
                });
}

/// Repeats every column k times: (N x h) -> (N x h*k), block j = column j.
template <class T>
Var repeat_cols(Tape<T>& t, Var a, int k) {
  const auto& x = t.value(a);
  Mat<T> out(x.rows(), x.cols() * k);
  for (Eigen::Index j = 0; j < x.cols(); ++j)
    out.middleCols(j * k, k) = x.col(j).replicate(1, k);
  return t.push(std::move(out), t.needs_grad(a), [&t, a, k](Var o) {
    const auto& g = t.grad(o);
    auto& ga = t.grad(a);
    for (Eigen::Index j = 0; j < ga.cols(); ++j) ga.col(j) += g.middleCols(j * k, k).rowwise().sum();
  });
}

/// Column vector of selected entries a(r, c).
template <class T>
Var gather_elements(Tape<T>& t, Var a, std::vector<std::pair<int, int>> at) {
  const auto& x = t.value(a);
  Mat<T> out(static_cast<Eigen::Index>(at.size()), 1);
  for (std::size_t i = 0; i < at.size(); ++i) out(i, 0) = x(at[i].first, at[i].second);
  return t.push(std::move(out), t.needs_grad(a), [&t, a, at = std::move(at)](Var o) {
    auto& ga = t.grad(a);
    const auto& g = t.grad(o);
    for (std::size_t i = 0; i < at.size(); ++i) ga(at[i].first, at[i].second) += g(i, 0);
  });
}

template <class T>
Var sum(Tape<T>& t, Var a) {
  Mat<T> out(1, 1);
  out(0, 0) = t.value(a).sum();
  return t.push(std::move(out), t.needs_grad(a),
                [&t, a](Var o) { t.grad(a).array() += t.grad(o)(0, 0); });
}

/// Per-edge pre-activations of typed messages. `hs` and `hr` hold the
/// sender and receiver projections for all R edge types side by side
/// (N x R*d); edge e reads block type[e] of row src[e] and dst[e].
struct EdgeList {
  std::vector<int> src, dst, type;
  std::size_t size() const { return src.size(); }
};

template <class T>
Var edge_preactivations(Tape<T>& t, Var hs, Var hr, Var bias, const EdgeList& edges, int d) {
  const auto& s = t.value(hs);
  const auto& r = t.value(hr);
  const auto& b = t.value(bias);
  Eigen::Index e = static_cast<Eigen::Index>(edges.size());
  Mat<T> out(e, d);
  for (Eigen::Index i = 0; i < e; ++i) {
    int off = edges.type[i] * d;
    out.row(i) = s.row(edges.src[i]).segment(off, d) + r.row(edges.dst[i]).segment(off, d) +
                 b.row(0).segment(off, d);
  }
  bool ng = t.needs_grad(hs) || t.needs_grad(hr) || t.needs_grad(bias);
  return t.push(std::move(out), ng, [&t, hs, hr, bias, edges, d](Var o) {
    const auto& g = t.grad(o);
    for (std::size_t i = 0; i < edges.size(); ++i) {
      int off = edges.type[i] * d;
      if (t.needs_grad(hs)) t.grad(hs).row(edges.src[i]).segment(off, d) += g.row(i);
      if (t.needs_grad(hr)) t.grad(hr).row(edges.dst[i]).segment(off, d) += g.row(i);
      if (t.needs_grad(bias)) t.grad(bias).row(0).segment(off, d) += g.row(i);
    }
  });
}

/// Weighted cross-entropy over candidate groups. `scores` is a column of
/// candidate logits; candidate i belongs to group[i] and carries target
/// probability target[i] (summing to 1 within a group). Returns
/// sum_g weight[g] * (-sum_{i in g} target[i] * log softmax_g(scores)_i).
template <class T>
Var grouped_cross_entropy(Tape<T>& t, Var scores, std::vector<int> group,
                          std::vector<T> target, std::vector<T> weight) {
  const auto& s = t.value(scores);
  std::size_t m = group.size();
  if (static_cast<std::size_t>(s.rows()) != m || s.cols() != 1 || target.size() != m)
    throw std::invalid_argument("grouped_cross_entropy shape");
  std::size_t ng = weight.size();
  std::vector<T> mx(ng, -std::numeric_limits<T>::infinity()), lse(ng, T(0));
  for (std::size_t i = 0; i < m; ++i) mx[group[i]] = std::max(mx[group[i]], s(i, 0));
  for (std::size_t i = 0; i < m; ++i) lse[group[i]] += std::exp(s(i, 0) - mx[group[i]]);
  for (std::size_t g = 0; g < ng; ++g) lse[g] = mx[g] + std::log(lse[g]);
  T loss = 0;
  for (std::size_t i = 0; i < m; ++i)
    if (target[i] != T(0)) loss -= weight[group[i]] * target[i] * (s(i, 0) - lse[group[i]]);
  Mat<T> out(1, 1);
  out(0, 0) = loss;
  return t.push(std::move(out), t.needs_grad(scores),
                [&t, scores, group = std::move(group), target = std::move(target),
                 weight = std::move(weight), lse = std::move(lse)](Var o) {
                  T go = t.grad(o)(0, 0);
                  const auto& s = t.value(scores);
                  auto& gs = t.grad(scores);
                  for (std::size_t i = 0; i < group.size(); ++i) {
                    T p = std::exp(s(i, 0) - lse[group[i]]);
                    gs(i, 0) += go * weight[group[i]] * (p - target[i]);
                  }
                });
}

/// scale * sum (a - target)^2.
template <class T>
Var squared_error(Tape<T>& t, Var a, Mat<T> target, T scale) {
  Mat<T> diff = t.value(a) - target;
  Mat<T> out(1, 1);
  out(0, 0) = scale * diff.squaredNorm();
  return t.push(std::move(out), t.needs_grad(a), [&t, a, diff = std::move(diff), scale](Var o) {
    t.grad(a) += (T(2) * scale * t.grad(o)(0, 0)) * diff;
  });
}

/// scale * sum over entries of 0.5 (mu^2 + sigma^2 - 1 - 2 log sigma), with
/// sigma = exp(log_sigma).
template <class T>
Var gaussian_kl(Tape<T>& t, Var mu, Var log_sigma, T scale) {
  const auto& m = t.value(mu);
  const auto& ls = t.value(log_sigma);
  auto var = (T(2) * ls.array()).exp();
  Mat<T> out(1, 1);
  out(0, 0) = scale * T(0.5) * (m.array().square() + var - T(1) - T(2) * ls.array()).sum();
  return t.push(std::move(out), t.needs_grad(mu) || t.needs_grad(log_sigma),
                [&t, mu, log_sigma, scale](Var o) {
                  T go = t.grad(o)(0, 0) * scale;
                  if (t.needs_grad(mu)) t.grad(mu) += go * t.value(mu);
                  if (t.needs_grad(log_sigma)) {
                    auto var = (T(2) * t.value(log_sigma).array()).exp();
                    t.grad(log_sigma) += (go * (var - T(1))).matrix();
                  }
                });
}

}  // namespace moler::nn
