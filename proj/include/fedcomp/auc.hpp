#pragma once

#include "fedcomp/core.hpp"
#include "fedcomp/data.hpp"
#include "fedcomp/model.hpp"

#include <algorithm>
#include <optional>

namespace fedcomp {

/// Positive-class prior, strictly inside (0, 1).
class Prior {
 public:
  explicit Prior(double p_hat) : p_(p_hat) {
    if (!(p_hat > 0.0 && p_hat < 1.0)) throw DataError("Prior: p_hat must lie in (0, 1)");
  }
  double value() const { return p_; }

 private:
  double p_;
};

inline Prior prior_estimate(const LabeledDataset& ds) {
  const std::size_t pos = ds.positives();
  if (pos == 0 || pos == ds.size())
    throw DataError("prior_estimate: dataset '" + ds.name + "' contains a single class");
  return Prior(static_cast<double>(pos) / static_cast<double>(ds.size()));
}

/// mu = 2 p (1 - p); the loss is exactly quadratic in the dual scalar.
inline double strong_concavity_modulus(const Prior& prior) {
  const double p = prior.value();
  return 2.0 * p * (1.0 - p);
}

struct AUCLossEval {
  double value = 0.0;
  Vector grad_z;
  double grad_y = 0.0;
};

/// Optional box for the dual scalar; unconstrained when absent.
struct DualBox {
  double lo = 0.0;
  double hi = 0.0;
};

inline double clamp_dual(double y, const std::optional<DualBox>& box) {
  return box ? std::clamp(y, box->lo, box->hi) : y;
}

/// Minimax square-loss AUC surrogate, batch-mean reduced:
///   (1-p)(h - w1)^2 [b=1] + p(h - w2)^2 [b=-1]
///   + 2(1+y)(p h [b=-1] - (1-p) h [b=1]) - p(1-p) y^2
/// with h = h(z.w; a), w1 = z[d], w2 = z[d+1].
template <Classifier C>
AUCLossEval auc_loss(const C& c, const ParamVector& z, DualScalar y, const Minibatch& batch,
                     const Prior& prior) {
  detail::check_dim(z.d(), c.param_dim(), "auc_loss: z weight block");
  check_batch(c, batch);
  const double p = prior.value();
  const double q = 1.0 - p;
  const double w1 = z.w1();
  const double w2 = z.w2();
  const double dual = y.y;
  const Vector w = z.w();
  const Vector h = c.scores(w, batch.features);
  const double inv_n = 1.0 / static_cast<double>(batch.size());

  AUCLossEval out;
  out.grad_z = Vector::Zero(static_cast<Eigen::Index>(z.size()));
  Vector grad_w = Vector::Zero(static_cast<Eigen::Index>(z.d()));
  double value = 0.0, g1 = 0.0, g2 = 0.0, gy = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const double hi = h[static_cast<Eigen::Index>(i)];
    double coeff = 0.0;
    if (batch.labels[i] == 1) {
      const double r = hi - w1;
      value += q * r * r - 2.0 * (1.0 + dual) * q * hi;
      coeff = 2.0 * q * r - 2.0 * (1.0 + dual) * q;
      g1 -= 2.0 * q * r;
      gy -= 2.0 * q * hi;
    } else {
      const double r = hi - w2;
      value += p * r * r + 2.0 * (1.0 + dual) * p * hi;
      coeff = 2.0 * p * r + 2.0 * (1.0 + dual) * p;
      g2 -= 2.0 * p * r;
      gy += 2.0 * p * hi;
    }
    if (coeff != 0.0) c.add_score_grad(w, batch.row(i), coeff * inv_n, grad_w);
  }
  out.value = value * inv_n - p * q * dual * dual;
  out.grad_z.head(static_cast<Eigen::Index>(z.d())) = grad_w;
  out.grad_z[static_cast<Eigen::Index>(z.d())] = g1 * inv_n;
  out.grad_z[static_cast<Eigen::Index>(z.d() + 1)] = g2 * inv_n;
  out.grad_y = gy * inv_n - 2.0 * p * q * dual;
  return out;
}

}  // namespace fedcomp
