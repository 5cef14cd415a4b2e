#pragma once

#include "fedcomp/auc.hpp"
#include "fedcomp/core.hpp"
#include "fedcomp/model.hpp"

#include <concepts>

namespace fedcomp {

struct InnerConfig {
  double rho = 0.1;

  InnerConfig() = default;
  explicit InnerConfig(double r) : rho(r) {
    if (!(r > 0.0)) throw ConfigError("InnerConfig: rho must be > 0");
  }
};

/// z = x - rho * [ce_grad(x.w) | 0 | 0]
template <Classifier C>
ParamVector inner_g(const C& c, const ParamVector& x, const Minibatch& batch, const InnerConfig& cfg) {
  detail::check_dim(x.d(), c.param_dim(), "inner_g: x weight block");
  ParamVector z = x;
  z.w() -= cfg.rho * ce_grad(c, x.w(), batch);
  return z;
}

/// J(x)^T v with J = I - rho * blockdiag(H_ce, 0, 0). J is symmetric, so this
/// is also J v.
template <Classifier C>
Vector inner_jtvp(const C& c, const ParamVector& x, const Minibatch& batch, const InnerConfig& cfg,
                  const ConstRef& v) {
  detail::check_dim(x.d(), c.param_dim(), "inner_jtvp: x weight block");
  detail::check_dim(static_cast<std::size_t>(v.size()), x.size(), "inner_jtvp: v");
  const auto d = static_cast<Eigen::Index>(x.d());
  Vector out = v;
  out.head(d) -= cfg.rho * c.ce_hvp(x.w(), batch, v.head(d));
  return out;
}

/// Stochastic compositional gradient: J(x; batch_g)^T grad_z f(h, y; batch_f).
/// The outer gradient is taken at the tracker h, not at g(x).
template <Classifier C>
Vector comp_grad_x(const C& c, const ParamVector& x, const ParamVector& h, DualScalar y,
                   const Minibatch& batch_g, const Minibatch& batch_f, const InnerConfig& cfg,
                   const Prior& prior) {
  const AUCLossEval outer = auc_loss(c, h, y, batch_f, prior);
  return inner_jtvp(c, x, batch_g, cfg, outer.grad_z);
}

struct OuterGrad {
  Vector grad_z;
  double grad_y = 0.0;
};

/// Oracle surface the device-level optimizers run against: a stochastic inner
/// map g(x; xi), its Jacobian-transpose product, and the outer gradients of
/// f(z, y; zeta). Both the AUC objective and the toy problem model this.
template <class P>
concept CompositionalProblem = requires(const P& p, const Vector& x, const typename P::Batch& batch) {
  { p.dim() } -> std::convertible_to<std::size_t>;
  { p.inner(x, batch) } -> std::convertible_to<Vector>;
  { p.inner_jtvp(x, batch, x) } -> std::convertible_to<Vector>;
  { p.outer_grad(x, 0.0, batch) } -> std::convertible_to<OuterGrad>;
};

/// Compositional AUC objective: f = auc_loss, g = one CE gradient step.
template <Classifier C>
class AucCompositional {
 public:
  using Batch = Minibatch;

  AucCompositional(C classifier, InnerConfig cfg, Prior prior)
      : classifier_(std::move(classifier)), cfg_(cfg), prior_(prior) {}

  std::size_t dim() const { return classifier_.param_dim() + 2; }
  const C& classifier() const { return classifier_; }
  const InnerConfig& inner_config() const { return cfg_; }
  const Prior& prior() const { return prior_; }

  Vector inner(const Vector& x, const Batch& batch) const {
    return inner_g(classifier_, as_param(x), batch, cfg_).flat();
  }

  Vector inner_jtvp(const Vector& x, const Batch& batch, const Vector& v) const {
    return fedcomp::inner_jtvp(classifier_, as_param(x), batch, cfg_, v);
  }

  OuterGrad outer_grad(const Vector& h, double y, const Batch& batch) const {
    AUCLossEval e = auc_loss(classifier_, as_param(h), DualScalar(y), batch, prior_);
    return {std::move(e.grad_z), e.grad_y};
  }

  ParamVector as_param(const Vector& v) const { return ParamVector(classifier_.param_dim(), v); }

 private:
  C classifier_;
  InnerConfig cfg_;
  Prior prior_;
};

}  // namespace fedcomp
