#pragma once

#include "fedcomp/core.hpp"
#include "fedcomp/data.hpp"

#include <algorithm>
#include <cmath>
#include <concepts>
#include <string>
#include <string_view>

namespace fedcomp {

using ConstRef = Eigen::Ref<const Vector>;

inline double sigmoid(double s) {
  if (s >= 0) return 1.0 / (1.0 + std::exp(-s));
  const double e = std::exp(s);
  return e / (1.0 + e);
}

/// log(1 + exp(s)) without overflow.
inline double softplus(double s) { return std::max(s, 0.0) + std::log1p(std::exp(-std::abs(s))); }

/// A binary scorer h(w; a) with first-order oracles and a cross-entropy
/// Hessian-vector product.
template <class C>
concept Classifier = requires(const C& c, const Vector& w, const Vector& a, const Minibatch& batch,
                              const RowMatrix& x, double coeff, Vector& out) {
  { c.param_dim() } -> std::convertible_to<std::size_t>;
  { c.feature_dim() } -> std::convertible_to<std::size_t>;
  { c.score(w, a) } -> std::convertible_to<double>;
  { c.score_grad(w, a) } -> std::convertible_to<Vector>;
  { c.add_score_grad(w, a, coeff, out) };
  { c.scores(w, x) } -> std::convertible_to<Vector>;
  { c.ce_hvp(w, batch, w) } -> std::convertible_to<Vector>;
};

namespace detail {

inline void check_dim(std::size_t got, std::size_t want, const char* what) {
  if (got != want)
    throw DimensionError(std::string(what) + ": expected dimension " + std::to_string(want) +
                         ", got " + std::to_string(got));
}

}  // namespace detail

template <Classifier C>
void check_param(const C& c, const ConstRef& w) {
  detail::check_dim(static_cast<std::size_t>(w.size()), c.param_dim(), "classifier weights");
}

template <Classifier C>
void check_batch(const C& c, const Minibatch& batch) {
  if (batch.empty()) throw DataError("empty minibatch");
  detail::check_dim(static_cast<std::size_t>(batch.features.cols()), c.feature_dim(), "minibatch features");
}

/// h(w; a) = w^T a.
class LogisticLinear {
 public:
  static constexpr std::string_view kind = "logistic-linear";

  explicit LogisticLinear(std::size_t d_feat) : d_feat_(d_feat) {
    if (d_feat == 0) throw DimensionError("LogisticLinear: feature dimension must be >= 1");
  }

  std::size_t param_dim() const { return d_feat_; }
  std::size_t feature_dim() const { return d_feat_; }

  double score(const ConstRef& w, const ConstRef& a) const {
    check_param(*this, w);
    detail::check_dim(static_cast<std::size_t>(a.size()), d_feat_, "features");
    return w.dot(a);
  }

  Vector score_grad(const ConstRef& w, const ConstRef& a) const {
    check_param(*this, w);
    detail::check_dim(static_cast<std::size_t>(a.size()), d_feat_, "features");
    return a;
  }

  void add_score_grad(const ConstRef& /*w*/, const ConstRef& a, double coeff, Vector& out) const {
    out += coeff * a;
  }

  Vector scores(const ConstRef& w, const RowMatrix& x) const {
    check_param(*this, w);
    detail::check_dim(static_cast<std::size_t>(x.cols()), d_feat_, "features");
    return x * w;
  }

  /// mean_i sigma'(h_i) (a_i^T v) a_i
  Vector ce_hvp(const ConstRef& w, const Minibatch& batch, const ConstRef& v) const {
    check_param(*this, w);
    check_param(*this, v);
    check_batch(*this, batch);
    const Vector h = batch.features * w;
    const Vector proj = batch.features * v;
    Vector coeff(h.size());
    for (Eigen::Index i = 0; i < h.size(); ++i) {
      const double s = sigmoid(h[i]);
      coeff[i] = s * (1.0 - s) * proj[i];
    }
    return batch.features.transpose() * coeff / static_cast<double>(batch.size());
  }

 private:
  std::size_t d_feat_;
};

/// One hidden tanh layer: h(w; a) = w2^T tanh(W1 a + b1) + b2.
/// Parameter layout: [W1 row-major (width x d_feat) | b1 | w2 | b2].
class TanhMlp {
 public:
  static constexpr std::string_view kind = "mlp-1hidden";

  TanhMlp(std::size_t d_feat, std::size_t width = 16) : d_feat_(d_feat), width_(width) {
    if (d_feat == 0 || width == 0) throw DimensionError("TanhMlp: dimensions must be >= 1");
  }

  std::size_t param_dim() const { return width_ * d_feat_ + 2 * width_ + 1; }
  std::size_t feature_dim() const { return d_feat_; }
  std::size_t width() const { return width_; }

  double score(const ConstRef& w, const ConstRef& a) const {
    check_param(*this, w);
    detail::check_dim(static_cast<std::size_t>(a.size()), d_feat_, "features");
    const Vector hidden = activations(w, a);
    return out_weights(w).dot(hidden) + w[static_cast<Eigen::Index>(param_dim() - 1)];
  }

  Vector score_grad(const ConstRef& w, const ConstRef& a) const {
    Vector g = Vector::Zero(static_cast<Eigen::Index>(param_dim()));
    check_param(*this, w);
    detail::check_dim(static_cast<std::size_t>(a.size()), d_feat_, "features");
    add_score_grad(w, a, 1.0, g);
    return g;
  }

  void add_score_grad(const ConstRef& w, const ConstRef& a, double coeff, Vector& out) const {
    const auto width = static_cast<Eigen::Index>(width_);
    const auto d = static_cast<Eigen::Index>(d_feat_);
    const Vector hidden = activations(w, a);
    const auto w2 = out_weights(w);
    for (Eigen::Index j = 0; j < width; ++j) {
      const double back = coeff * w2[j] * (1.0 - hidden[j] * hidden[j]);
      out.segment(j * d, d) += back * a;
      out[width * d + j] += back;
      out[width * d + width + j] += coeff * hidden[j];
    }
    out[2 * width + width * d] += coeff;
  }

  Vector scores(const ConstRef& w, const RowMatrix& x) const {
    check_param(*this, w);
    detail::check_dim(static_cast<std::size_t>(x.cols()), d_feat_, "features");
    Vector s(x.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      const Vector hidden = activations(w, x.row(i).transpose());
      s[i] = out_weights(w).dot(hidden) + w[static_cast<Eigen::Index>(param_dim() - 1)];
    }
    return s;
  }

  Vector ce_hvp(const ConstRef& w, const Minibatch& batch, const ConstRef& v) const;

 private:
  Vector activations(const ConstRef& w, const ConstRef& a) const {
    const auto width = static_cast<Eigen::Index>(width_);
    const auto d = static_cast<Eigen::Index>(d_feat_);
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> w1(
        w.data(), width, d);
    Vector pre = w1 * a + w.segment(width * d, width);
    return pre.array().tanh().matrix();
  }

  Eigen::Ref<const Vector>::ConstSegmentReturnType out_weights(const ConstRef& w) const {
    const auto width = static_cast<Eigen::Index>(width_);
    return w.segment(width * static_cast<Eigen::Index>(d_feat_) + width, width);
  }

  std::size_t d_feat_;
  std::size_t width_;
};

/// Mean of log(1 + exp(-b h(w; a))) over the batch.
template <Classifier C>
double ce_loss(const C& c, const ConstRef& w, const Minibatch& batch) {
  check_param(c, w);
  check_batch(c, batch);
  const Vector h = c.scores(w, batch.features);
  double total = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i)
    total += softplus(-batch.labels[i] * h[static_cast<Eigen::Index>(i)]);
  return total / static_cast<double>(batch.size());
}

template <Classifier C>
Vector ce_grad(const C& c, const ConstRef& w, const Minibatch& batch) {
  check_param(c, w);
  check_batch(c, batch);
  const Vector h = c.scores(w, batch.features);
  Vector g = Vector::Zero(static_cast<Eigen::Index>(c.param_dim()));
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const double b = batch.labels[i];
    const double coeff = -b * sigmoid(-b * h[static_cast<Eigen::Index>(i)]) * inv_n;
    c.add_score_grad(w, batch.row(i), coeff, g);
  }
  return g;
}

/// Central difference of ce_grad along v / |v|, rescaled by |v|.
inline Vector TanhMlp::ce_hvp(const ConstRef& w, const Minibatch& batch, const ConstRef& v) const {
  check_param(*this, w);
  check_param(*this, v);
  check_batch(*this, batch);
  const double norm = v.norm();
  if (norm == 0.0) return Vector::Zero(v.size());
  const double step = 1e-5 * (1.0 + w.lpNorm<Eigen::Infinity>());
  const Vector dir = v / norm;
  const Vector plus = w + step * dir;
  const Vector minus = w - step * dir;
  return (ce_grad(*this, plus, batch) - ce_grad(*this, minus, batch)) * (norm / (2.0 * step));
}

}  // namespace fedcomp
