#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "sgg/error.hpp"

namespace sgg::ad {

template <class T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using RowVector = Eigen::Matrix<T, 1, Eigen::Dynamic, Eigen::RowMajor>;

/// Dense rows x cols array with an optional same-shape gradient buffer.
template <class T>
struct TensorValue {
  Matrix<T> data;
  Matrix<T> grad;  // size 0 until a gradient is accumulated

  TensorValue() = default;
  explicit TensorValue(Matrix<T> d) : data(std::move(d)) {}

  std::array<Eigen::Index, 2> shape() const { return {data.rows(), data.cols()}; }
  bool has_grad() const { return grad.size() != 0; }
  Matrix<T>& ensure_grad() {
    if (!has_grad()) grad = Matrix<T>::Zero(data.rows(), data.cols());
    return grad;
  }
  void zero_grad() { grad.resize(0, 0); }
};

/// Trainable tensor with Adam moment buffers.
template <class T>
struct Parameter {
  std::string name;
  TensorValue<T> value;
  Matrix<T> m;
  Matrix<T> v;
};

/// Reverse-mode tape. Every op appends a node holding its value and a
/// closure that pushes the node's gradient to its inputs; backward() replays
/// the closures in reverse order.
template <class T>
class Tape {
 public:
  using Mat = Matrix<T>;

  struct Var {
    std::size_t id = 0;
  };

  Var constant(Mat value) { return push(std::move(value), nullptr); }

  /// Leaf bound to a parameter; its gradient is added to the parameter's.
  Var param(Parameter<T>& p) {
    const Var v = push(p.value.data, nullptr);
    nodes_[v.id].back = [this, v, &p] {
      if (has_grad(v)) {
        auto& g = p.value.ensure_grad();
        g += grad(v);
      }
    };
    return v;
  }

  const Mat& value(Var v) const { return nodes_[v.id].t.data; }
  bool has_grad(Var v) const { return nodes_[v.id].t.has_grad(); }
  Mat& grad(Var v) { return nodes_[v.id].t.ensure_grad(); }
  std::size_t size() const { return nodes_.size(); }

  /// Seed d(loss)/d(loss) = 1 and propagate. `loss` must be 1 x 1.
  void backward(Var loss) {
    if (value(loss).rows() != 1 || value(loss).cols() != 1) throw ShapeMismatch("backward needs a scalar loss");
    grad(loss)(0, 0) = T(1);
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      if (nodes_[i].back && nodes_[i].t.has_grad()) nodes_[i].back();
    }
  }

  Var matmul(Var a, Var b) {
    check_inner(a, b, "matmul");
    Var out = push(value(a) * value(b), nullptr);
    set_back(out, [this, a, b, out] {
      const Mat& g = grad(out);
      grad(a).noalias() += g * value(b).transpose();
      grad(b).noalias() += value(a).transpose() * g;
    });
    return out;
  }

  /// x W + b with b a 1 x k row broadcast over rows.
  Var linear(Var x, Var w, Var b) {
    check_inner(x, w, "linear");
    if (value(b).rows() != 1 || value(b).cols() != value(w).cols()) throw ShapeMismatch("linear: bias must be 1 x out");
    Mat y = value(x) * value(w);
    y.rowwise() += value(b).row(0);
    Var out = push(std::move(y), nullptr);
    set_back(out, [this, x, w, b, out] {
      const Mat& g = grad(out);
      grad(x).noalias() += g * value(w).transpose();
      grad(w).noalias() += value(x).transpose() * g;
      grad(b) += g.colwise().sum();
    });
    return out;
  }

  Var relu(Var a) {
    Var out = push(value(a).cwiseMax(T(0)), nullptr);
    set_back(out, [this, a, out] { grad(a).array() += grad(out).array() * (value(a).array() > T(0)).template cast<T>(); });
    return out;
  }

  Var add(Var a, Var b) {
    check_same(a, b, "add");
    Var out = push(value(a) + value(b), nullptr);
    set_back(out, [this, a, b, out] {
      grad(a) += grad(out);
      grad(b) += grad(out);
    });
    return out;
  }

  Var scale(Var a, T s) {
    Var out = push(value(a) * s, nullptr);
    set_back(out, [this, a, s, out] { grad(a) += grad(out) * s; });
    return out;
  }

  /// Rows of `a` picked by `idx` (repeats allowed).
  Var gather_rows(Var a, std::vector<std::size_t> idx) {
    const Mat& va = value(a);
    Mat y(static_cast<Eigen::Index>(idx.size()), va.cols());
    for (std::size_t r = 0; r < idx.size(); ++r) {
      if (idx[r] >= static_cast<std::size_t>(va.rows())) throw ShapeMismatch("gather_rows: index out of range");
      y.row(static_cast<Eigen::Index>(r)) = va.row(static_cast<Eigen::Index>(idx[r]));
    }
    Var out = push(std::move(y), nullptr);
    set_back(out, [this, a, idx = std::move(idx), out] {
      Mat& ga = grad(a);
      const Mat& g = grad(out);
      for (std::size_t r = 0; r < idx.size(); ++r) ga.row(static_cast<Eigen::Index>(idx[r])) += g.row(static_cast<Eigen::Index>(r));
    });
    return out;
  }

  Var concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) throw ShapeMismatch("concat_cols of nothing");
    const Eigen::Index rows = value(parts[0]).rows();
    Eigen::Index cols = 0;
    for (Var p : parts) {
      if (value(p).rows() != rows) throw ShapeMismatch("concat_cols: row counts differ");
      cols += value(p).cols();
    }
    Mat y(rows, cols);
    Eigen::Index c = 0;
    for (Var p : parts) {
      y.middleCols(c, value(p).cols()) = value(p);
      c += value(p).cols();
    }
    Var out = push(std::move(y), nullptr);
    set_back(out, [this, parts, out] {
      Eigen::Index c0 = 0;
      for (Var p : parts) {
        const Eigen::Index w = value(p).cols();
        grad(p) += grad(out).middleCols(c0, w);
        c0 += w;
      }
    });
    return out;
  }

  Var slice_cols(Var a, Eigen::Index start, Eigen::Index width) {
    if (start < 0 || width < 0 || start + width > value(a).cols()) throw ShapeMismatch("slice_cols out of range");
    Var out = push(value(a).middleCols(start, width), nullptr);
    set_back(out, [this, a, start, width, out] { grad(a).middleCols(start, width) += grad(out); });
    return out;
  }

  /// Column-wise max over consecutive row blocks of `block` rows: row k of
  /// the result is the max over rows [k*block, (k+1)*block). Ties route the
  /// gradient to the first maximal row.
  Var segment_max(Var a, Eigen::Index block) {
    const Mat& va = value(a);
    if (block <= 0 || va.rows() % block != 0) throw ShapeMismatch("segment_max: rows not a multiple of block size");
    const Eigen::Index segments = va.rows() / block;
    Mat y(segments, va.cols());
    std::vector<Eigen::Index> arg(static_cast<std::size_t>(segments * va.cols()));
    for (Eigen::Index s = 0; s < segments; ++s) {
      y.row(s) = va.row(s * block);
      Eigen::Index* am = &arg[static_cast<std::size_t>(s * va.cols())];
      std::fill(am, am + va.cols(), s * block);
      for (Eigen::Index r = s * block + 1; r < (s + 1) * block; ++r) {
        const auto row = va.row(r);
        for (Eigen::Index c = 0; c < va.cols(); ++c) {
          if (row(c) > y(s, c)) {
            y(s, c) = row(c);
            am[c] = r;
          }
        }
      }
    }
    Var out = push(std::move(y), nullptr);
    set_back(out, [this, a, arg = std::move(arg), out] {
      Mat& ga = grad(a);
      const Mat& g = grad(out);
      for (Eigen::Index s = 0; s < g.rows(); ++s)
        for (Eigen::Index c = 0; c < g.cols(); ++c) ga(arg[static_cast<std::size_t>(s * g.cols() + c)], c) += g(s, c);
    });
    return out;
  }

  /// Node aggregation over triplets: row i of the result is the mean of
  /// psi_s[e] over edges with subject i and psi_o[e] over edges with object i;
  /// nodes without incident edges get the zero vector.
  Var mean_aggregate(Var psi_s, Var psi_o, std::vector<std::size_t> subj, std::vector<std::size_t> obj, std::size_t nodes) {
    check_same(psi_s, psi_o, "mean_aggregate");
    const Mat& vs = value(psi_s);
    const Mat& vo = value(psi_o);
    if (subj.size() != static_cast<std::size_t>(vs.rows()) || obj.size() != subj.size())
      throw ShapeMismatch("mean_aggregate: one subject/object index per edge row");
    std::vector<T> count(nodes, T(0));
    Mat y = Mat::Zero(static_cast<Eigen::Index>(nodes), vs.cols());
    for (std::size_t e = 0; e < subj.size(); ++e) {
      if (subj[e] >= nodes || obj[e] >= nodes) throw ShapeMismatch("mean_aggregate: node index out of range");
      y.row(static_cast<Eigen::Index>(subj[e])) += vs.row(static_cast<Eigen::Index>(e));
      y.row(static_cast<Eigen::Index>(obj[e])) += vo.row(static_cast<Eigen::Index>(e));
      count[subj[e]] += T(1);
      count[obj[e]] += T(1);
    }
    for (std::size_t i = 0; i < nodes; ++i)
      if (count[i] > T(0)) y.row(static_cast<Eigen::Index>(i)) /= count[i];
    Var out = push(std::move(y), nullptr);
    set_back(out, [this, psi_s, psi_o, subj = std::move(subj), obj = std::move(obj), count = std::move(count), out] {
      const Mat& g = grad(out);
      Mat& gs = grad(psi_s);
      Mat& go = grad(psi_o);
      for (std::size_t e = 0; e < subj.size(); ++e) {
        gs.row(static_cast<Eigen::Index>(e)) += g.row(static_cast<Eigen::Index>(subj[e])) / count[subj[e]];
        go.row(static_cast<Eigen::Index>(e)) += g.row(static_cast<Eigen::Index>(obj[e])) / count[obj[e]];
      }
    });
    return out;
  }

  /// Per-row normalization to zero mean and unit variance followed by an
  /// elementwise affine map (gain, bias: 1 x cols).
  Var layer_norm(Var a, Var gain, Var bias, T eps = T(1e-5)) {
    const Mat& x = value(a);
    const Eigen::Index n = x.cols();
    if (value(gain).cols() != n || value(bias).cols() != n) throw ShapeMismatch("layer_norm: gain/bias width");
    Mat xhat(x.rows(), n);
    std::vector<T> inv_std(static_cast<std::size_t>(x.rows()));
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      const T mean = x.row(r).mean();
      const T var = (x.row(r).array() - mean).square().mean();
      const T is = T(1) / std::sqrt(var + eps);
      inv_std[static_cast<std::size_t>(r)] = is;
      xhat.row(r) = (x.row(r).array() - mean) * is;
    }
    Mat y = xhat;
    y.array().rowwise() *= value(gain).row(0).array();
    y.rowwise() += value(bias).row(0);
    Var out = push(std::move(y), nullptr);
    set_back(out, [this, a, gain, bias, xhat = std::move(xhat), inv_std = std::move(inv_std), out] {
      const Mat& g = grad(out);
      grad(bias) += g.colwise().sum();
      grad(gain) += (g.array() * xhat.array()).matrix().colwise().sum();
      Mat& ga = grad(a);
      for (Eigen::Index r = 0; r < g.rows(); ++r) {
        const auto gh = (g.row(r).array() * value(gain).row(0).array()).eval();
        const T mean_gh = gh.mean();
        const T mean_ghx = (gh * xhat.row(r).array()).mean();
        ga.row(r).array() += inv_std[static_cast<std::size_t>(r)] * (gh - mean_gh - xhat.row(r).array() * mean_ghx);
      }
    });
    return out;
  }

  /// Mean over rows of the multiclass focal loss -a_y (1 - p_y)^gamma log p_y
  /// with p = softmax(logits row) and y the row's label.
  Var softmax_focal(Var logits, std::vector<std::size_t> labels, std::vector<T> alpha, T gamma) {
    const Mat& z = value(logits);
    if (labels.size() != static_cast<std::size_t>(z.rows())) throw ShapeMismatch("softmax_focal: one label per row");
    if (alpha.size() != static_cast<std::size_t>(z.cols())) throw ShapeMismatch("softmax_focal: one alpha per class");
    Mat dz(z.rows(), z.cols());
    T total = T(0);
    for (Eigen::Index r = 0; r < z.rows(); ++r) {
      const std::size_t y = labels[static_cast<std::size_t>(r)];
      if (y >= static_cast<std::size_t>(z.cols())) throw ShapeMismatch("softmax_focal: label out of range");
      const T m = z.row(r).maxCoeff();
      const auto ez = (z.row(r).array() - m).exp().eval();
      const T sum = ez.sum();
      const auto p = (ez / sum).eval();
      const T log_pt = z(r, static_cast<Eigen::Index>(y)) - m - std::log(sum);
      const T pt = p(static_cast<Eigen::Index>(y));
      const T a = alpha[y];
      const T q = T(1) - pt;
      total += -a * std::pow(q, gamma) * log_pt;
      // dL/dpt * pt, written without dividing by pt
      const T pow_gm1 = gamma == T(0) || q <= T(0) ? T(0) : std::pow(q, gamma - T(1));
      const T dpt = a * (gamma * pow_gm1 * pt * log_pt - std::pow(q, gamma));
      dz.row(r) = -dpt * p.matrix();
      dz(r, static_cast<Eigen::Index>(y)) += dpt;
    }
    const T rows = static_cast<T>(std::max<Eigen::Index>(z.rows(), 1));
    Mat y(1, 1);
    y(0, 0) = total / rows;
    dz /= rows;
    Var out = push(std::move(y), nullptr);
    set_back(out, [this, logits, dz = std::move(dz), out] { grad(logits) += dz * grad(out)(0, 0); });
    return out;
  }

  /// Per-element binary focal loss on sigmoid(logits) against 0/1 targets,
  /// alpha for positives and 1 - alpha for negatives; summed over columns and
  /// averaged over rows.
  Var sigmoid_focal(Var logits, const Mat& targets, T alpha, T gamma) {
    const Mat& z = value(logits);
    if (targets.rows() != z.rows() || targets.cols() != z.cols()) throw ShapeMismatch("sigmoid_focal: target shape");
    Mat dz(z.rows(), z.cols());
    T total = T(0);
    for (Eigen::Index r = 0; r < z.rows(); ++r)
      for (Eigen::Index c = 0; c < z.cols(); ++c) {
        const bool pos = targets(r, c) > T(0.5);
        const T u = pos ? z(r, c) : -z(r, c);
        const T a = pos ? alpha : T(1) - alpha;
        const T pt = sigmoid(u);
        const T q = sigmoid(-u);
        const T log_pt = -softplus(-u);
        total += -a * std::pow(q, gamma) * log_pt;
        const T du = a * (gamma * std::pow(q, gamma) * pt * log_pt - std::pow(q, gamma + T(1)));
        dz(r, c) = pos ? du : -du;
      }
    const T rows = static_cast<T>(std::max<Eigen::Index>(z.rows(), 1));
    Mat y(1, 1);
    y(0, 0) = total / rows;
    dz /= rows;
    Var out = push(std::move(y), nullptr);
    set_back(out, [this, logits, dz = std::move(dz), out] { grad(logits) += dz * grad(out)(0, 0); });
    return out;
  }

  static T sigmoid(T x) { return x >= T(0) ? T(1) / (T(1) + std::exp(-x)) : std::exp(x) / (T(1) + std::exp(x)); }
  static T softplus(T x) { return x > T(0) ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

 private:
  struct Node {
    TensorValue<T> t;
    std::function<void()> back;
  };

  Var push(Mat value, std::function<void()> back) {
    nodes_.push_back({TensorValue<T>(std::move(value)), std::move(back)});
    return Var{nodes_.size() - 1};
  }
  void set_back(Var v, std::function<void()> back) { nodes_[v.id].back = std::move(back); }

  void check_inner(Var a, Var b, const char* op) const {
    if (value(a).cols() != value(b).rows())
      throw ShapeMismatch(std::string(op) + ": inner dimensions " + std::to_string(value(a).cols()) + " and " + std::to_string(value(b).rows()));
  }
  void check_same(Var a, Var b, const char* op) const {
    if (value(a).rows() != value(b).rows() || value(a).cols() != value(b).cols()) throw ShapeMismatch(std::string(op) + ": shapes differ");
  }

  std::vector<Node> nodes_;
};

/// Adam with the usual moment defaults.
struct AdamConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <class T>
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  /// One update of every parameter from its accumulated gradient; gradients
  /// are cleared afterwards. Parameters without a gradient are left alone.
  void step(const std::vector<Parameter<T>*>& params) {
    ++t_;
    const T b1 = static_cast<T>(cfg_.beta1), b2 = static_cast<T>(cfg_.beta2);
    const T c1 = T(1) - static_cast<T>(std::pow(cfg_.beta1, static_cast<double>(t_)));
    const T c2 = T(1) - static_cast<T>(std::pow(cfg_.beta2, static_cast<double>(t_)));
    const T lr = static_cast<T>(cfg_.learning_rate), eps = static_cast<T>(cfg_.eps);
    for (Parameter<T>* p : params) {
      if (!p->value.has_grad()) continue;
      const auto& g = p->value.grad;
      if (p->m.size() == 0) {
        p->m = Matrix<T>::Zero(g.rows(), g.cols());
        p->v = Matrix<T>::Zero(g.rows(), g.cols());
      }
      p->m = b1 * p->m + (T(1) - b1) * g;
      p->v = b2 * p->v + (T(1) - b2) * g.cwiseProduct(g);
      p->value.data.array() -= lr * (p->m.array() / c1) / ((p->v.array() / c2).sqrt() + eps);
      p->value.zero_grad();
    }
  }

  std::size_t steps() const { return t_; }

 private:
  AdamConfig cfg_;
  std::size_t t_ = 0;
};

}  // namespace sgg::ad
