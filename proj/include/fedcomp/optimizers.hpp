#pragma once

#include "fedcomp/auc.hpp"
#include "fedcomp/compositional.hpp"
#include "fedcomp/core.hpp"
#include "fedcomp/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

namespace fedcomp {

/// Step sizes and coefficients of the momentum compositional GDA update.
/// Defaults are the tuned values for every AUC-based method.
struct HyperParams {
  double eta = 0.3;
  double gamma_x = 0.33;
  double gamma_y = 0.33;
  double alpha = 3.0;
  double beta_x = 3.3;
  double beta_y = 3.3;
  std::size_t period = 4;
  double rho = 0.1;
  std::size_t batch_size = 32;
  std::optional<DualBox> dual_box;

  void validate() const {
    auto fail = [](const std::string& msg) { throw ConfigError(msg); };
    auto open_unit = [&](double product, const char* name) {
      if (!(product > 0.0 && product < 1.0)) {
        std::ostringstream os;
        os.precision(6);
        os << "requirement " << name << " in (0, 1) violated: " << name << " = " << product;
        fail(os.str());
      }
    };
    if (!(eta > 0.0 && eta <= 1.0)) fail("requirement eta in (0, 1] violated: eta = " + std::to_string(eta));
    if (!(gamma_x > 0.0)) fail("requirement gamma_x > 0 violated");
    if (!(gamma_y > 0.0)) fail("requirement gamma_y > 0 violated");
    if (!(alpha > 0.0)) fail("requirement alpha > 0 violated");
    if (!(beta_x > 0.0)) fail("requirement beta_x > 0 violated");
    if (!(beta_y > 0.0)) fail("requirement beta_y > 0 violated");
    open_unit(alpha * eta, "alpha*eta");
    open_unit(beta_x * eta, "beta_x*eta");
    open_unit(beta_y * eta, "beta_y*eta");
    if (period < 1) fail("requirement period p >= 1 violated");
    if (!(rho > 0.0)) fail("requirement rho > 0 violated");
    if (batch_size < 1) fail("requirement batch_size >= 1 violated");
    if (dual_box && !(dual_box->lo <= dual_box->hi)) fail("dual clamp requires lo <= hi");
  }
};

/// Per-step check after schedule scaling. The closed endpoint 1 is allowed
/// here: it is the full-replacement limit of each convex combination.
inline void check_step_products(const HyperParams& hp, double eta_t) {
  auto check = [&](double product, const char* name) {
    if (!(product > 0.0 && product <= 1.0)) {
      std::ostringstream os;
      os << "scheduled step violates " << name << " in (0, 1]: " << name << " = " << product;
      throw ConfigError(os.str());
    }
  };
  if (!(eta_t > 0.0)) throw ConfigError("scheduled step size must be > 0");
  check(hp.alpha * eta_t, "alpha*eta_t");
  check(hp.beta_x * eta_t, "beta_x*eta_t");
  check(hp.beta_y * eta_t, "beta_y*eta_t");
}

enum class FieldKind { parameter, momentum, tracker };

/// One device's (x, y, h, u, v) with its sampling stream.
struct DeviceState {
  Vector x;
  double y = 0.0;
  Vector h;
  Vector u;
  double v = 0.0;
  RngStream rng;
  std::int64_t t = 0;

  template <class F>
  void for_each_field(F&& f) {
    f(x, FieldKind::parameter);
    f(y, FieldKind::parameter);
    f(h, FieldKind::tracker);
    f(u, FieldKind::momentum);
    f(v, FieldKind::momentum);
  }
  template <class F>
  void for_each_field(F&& f) const {
    const_cast<DeviceState*>(this)->for_each_field(
        [&](auto& field, FieldKind kind) { f(std::as_const(field), kind); });
  }

  friend bool operator==(const DeviceState& a, const DeviceState& b) {
    return a.x == b.x && a.y == b.y && a.h == b.h && a.u == b.u && a.v == b.v && a.rng == b.rng && a.t == b.t;
  }
};

/// Baseline state: parameters plus heavy-ball buffers. m_x is empty for
/// momentum-free methods.
struct MomentumState {
  Vector x;
  double y = 0.0;
  Vector m_x;
  double m_y = 0.0;
  RngStream rng;
  std::int64_t t = 0;

  template <class F>
  void for_each_field(F&& f) {
    f(x, FieldKind::parameter);
    f(y, FieldKind::parameter);
    if (m_x.size() > 0) {
      f(m_x, FieldKind::momentum);
      f(m_y, FieldKind::momentum);
    }
  }
  template <class F>
  void for_each_field(F&& f) const {
    const_cast<MomentumState*>(this)->for_each_field(
        [&](auto& field, FieldKind kind) { f(std::as_const(field), kind); });
  }

  friend bool operator==(const MomentumState& a, const MomentumState& b) {
    return a.x == b.x && a.y == b.y && a.m_x == b.m_x && a.m_y == b.m_y && a.rng == b.rng && a.t == b.t;
  }
};

template <class S>
concept FieldState = requires(S& s) { s.for_each_field([](auto&, FieldKind) {}); };

namespace detail {

template <FieldState S>
std::vector<std::size_t> field_sizes(const S& s) {
  std::vector<std::size_t> sizes;
  s.for_each_field([&](const auto& field, FieldKind) {
    if constexpr (std::is_same_v<std::decay_t<decltype(field)>, double>)
      sizes.push_back(0);
    else
      sizes.push_back(static_cast<std::size_t>(field.size()));
  });
  return sizes;
}

template <FieldState S>
void check_layouts(std::span<const S> states) {
  if (states.empty()) throw Error("device state list is empty");
  const auto ref = field_sizes(states.front());
  for (const S& s : states)
    if (field_sizes(s) != ref) throw DimensionError("device states have mismatched layouts");
}

struct FieldRef {
  Vector* vec = nullptr;
  double* scalar = nullptr;
  FieldKind kind = FieldKind::parameter;
};

template <FieldState S>
std::vector<FieldRef> field_refs(S& s) {
  std::vector<FieldRef> refs;
  s.for_each_field([&](auto& field, FieldKind kind) {
    if constexpr (std::is_same_v<std::decay_t<decltype(field)>, double>)
      refs.push_back({nullptr, &field, kind});
    else
      refs.push_back({&field, nullptr, kind});
  });
  return refs;
}

}  // namespace detail

/// Replaces every device's fields by the cross-device mean, summed in
/// ascending device order. With `include_momentum` false the momentum
/// buffers stay local.
template <FieldState S>
void average_states(std::span<S> states, bool include_momentum = true) {
  detail::check_layouts(std::span<const S>(states));
  std::vector<std::vector<detail::FieldRef>> refs;
  refs.reserve(states.size());
  for (S& s : states) refs.push_back(detail::field_refs(s));
  const double k = static_cast<double>(states.size());
  for (std::size_t f = 0; f < refs.front().size(); ++f) {
    const detail::FieldRef& first = refs.front()[f];
    if (first.kind == FieldKind::momentum && !include_momentum) continue;
    // Already in consensus: keep the exact value rather than re-rounding a mean.
    const bool agree = std::all_of(refs.begin(), refs.end(), [&](const auto& r) {
      return first.scalar ? *r[f].scalar == *first.scalar : *r[f].vec == *first.vec;
    });
    if (agree) continue;
    if (first.scalar) {
      double sum = 0.0;
      for (const auto& r : refs) sum += *r[f].scalar;
      const double mean = sum / k;
      for (auto& r : refs) *r[f].scalar = mean;
    } else {
      Vector sum = *first.vec;
      for (std::size_t i = 1; i < refs.size(); ++i) sum += *refs[i][f].vec;
      sum /= k;
      for (auto& r : refs) *r[f].vec = sum;
    }
  }
}

template <FieldState S>
std::vector<S> averaged(std::vector<S> states, bool include_momentum = true) {
  average_states(std::span<S>(states), include_momentum);
  return states;
}

/// Step decay: base for t < T/2, base/10 for T/2 <= t < 3T/4, base/100 after.
inline double lr_schedule(std::int64_t t, std::int64_t total, double base) {
  if (2 * t < total) return base;
  if (4 * t < 3 * total) return base / 10.0;
  return base / 100.0;
}

// ---------------------------------------------------------------------------
// LocalSCGDAM device updates

/// h0 = g(x0; xi0), u0 = J(x0; xi0)^T grad_z f(h0, y0; zeta0), v0 = grad_y f(h0, y0; zeta0).
template <CompositionalProblem P>
DeviceState scgdam_init(const P& problem, const Vector& x0, double y0, const typename P::Batch& batch_g,
                        const typename P::Batch& batch_f, const HyperParams& hp, RngStream rng) {
  hp.validate();
  detail::check_dim(static_cast<std::size_t>(x0.size()), problem.dim(), "scgdam_init: x0");
  DeviceState s;
  s.x = x0;
  s.y = y0;
  s.h = problem.inner(x0, batch_g);
  OuterGrad outer = problem.outer_grad(s.h, y0, batch_f);
  s.u = problem.inner_jtvp(x0, batch_g, outer.grad_z);
  s.v = outer.grad_y;
  s.rng = rng;
  s.t = 0;
  return s;
}

template <CompositionalProblem P>
DeviceState scgdam_init(const P& problem, const Vector& x0, double y0, const typename P::Batch& batch,
                        const HyperParams& hp, RngStream rng = {}) {
  return scgdam_init(problem, x0, y0, batch, batch, hp, rng);
}

/// One local iteration. Order matters: x/y move with the old momenta, the
/// tracker sees the new x, and the momenta see the new (x, y, h).
template <CompositionalProblem P>
void scgdam_step_inplace(const P& problem, DeviceState& s, const HyperParams& hp,
                         const typename P::Batch& batch_g, const typename P::Batch& batch_f, double eta_t) {
  check_step_products(hp, eta_t);
  s.x -= (hp.gamma_x * eta_t) * s.u;
  s.y = clamp_dual(s.y + (hp.gamma_y * eta_t) * s.v, hp.dual_box);

  const double a = hp.alpha * eta_t;
  s.h = (1.0 - a) * s.h + a * problem.inner(s.x, batch_g);

  OuterGrad outer = problem.outer_grad(s.h, s.y, batch_f);
  const Vector fresh_u = problem.inner_jtvp(s.x, batch_g, outer.grad_z);
  const double bx = hp.beta_x * eta_t;
  const double by = hp.beta_y * eta_t;
  s.u = (1.0 - bx) * s.u + bx * fresh_u;
  s.v = (1.0 - by) * s.v + by * outer.grad_y;
  ++s.t;
}

template <CompositionalProblem P>
DeviceState scgdam_step(const P& problem, DeviceState s, const HyperParams& hp,
                        const typename P::Batch& batch_g, const typename P::Batch& batch_f, double eta_t) {
  scgdam_step_inplace(problem, s, hp, batch_g, batch_f, eta_t);
  return s;
}

template <CompositionalProblem P>
DeviceState scgdam_step(const P& problem, DeviceState s, const HyperParams& hp,
                        const typename P::Batch& batch_next, double eta_t) {
  scgdam_step_inplace(problem, s, hp, batch_next, batch_next, eta_t);
  return s;
}

// ---------------------------------------------------------------------------
// Baselines

/// Heavy-ball SGD on cross-entropy: m' = mu m + grad, w' = w - lr m'.
/// Only the classifier block of x moves.
template <Classifier C>
MomentumState sgdm_step(const C& c, MomentumState s, double lr, double momentum_coef, const Minibatch& batch) {
  const auto d = static_cast<Eigen::Index>(c.param_dim());
  if (s.m_x.size() != d) s.m_x = Vector::Zero(d);
  s.m_x = momentum_coef * s.m_x + ce_grad(c, s.x.head(d), batch);
  s.x.head(d) -= lr * s.m_x;
  ++s.t;
  return s;
}

/// Momentum GDA on the non-compositional objective f(x, y): grad at z = x.
template <CompositionalProblem P>
MomentumState sgdam_init(const P& problem, const Vector& x0, double y0, const typename P::Batch& batch,
                         const HyperParams& hp, RngStream rng = {}) {
  hp.validate();
  detail::check_dim(static_cast<std::size_t>(x0.size()), problem.dim(), "sgdam_init: x0");
  MomentumState s;
  s.x = x0;
  s.y = y0;
  OuterGrad g = problem.outer_grad(x0, y0, batch);
  s.m_x = std::move(g.grad_z);
  s.m_y = g.grad_y;
  s.rng = rng;
  return s;
}

template <CompositionalProblem P>
MomentumState sgdam_step(const P& problem, MomentumState s, const HyperParams& hp,
                         const typename P::Batch& batch, double eta_t) {
  if (!(eta_t > 0.0)) throw ConfigError("scheduled step size must be > 0");
  const double bx = hp.beta_x * eta_t;
  const double by = hp.beta_y * eta_t;
  if (!(bx > 0.0 && bx <= 1.0) || !(by > 0.0 && by <= 1.0))
    throw ConfigError("scheduled step violates beta*eta_t in (0, 1]");
  s.x -= (hp.gamma_x * eta_t) * s.m_x;
  s.y = clamp_dual(s.y + (hp.gamma_y * eta_t) * s.m_y, hp.dual_box);
  OuterGrad g = problem.outer_grad(s.x, s.y, batch);
  s.m_x = (1.0 - bx) * s.m_x + bx * g.grad_z;
  s.m_y = (1.0 - by) * s.m_y + by * g.grad_y;
  ++s.t;
  return s;
}

/// Plain SGDA on f(x, y); no momentum buffers.
template <CompositionalProblem P>
MomentumState coda_step(const P& problem, MomentumState s, double lr, const typename P::Batch& batch,
                        const std::optional<DualBox>& box = std::nullopt) {
  if (!(lr > 0.0)) throw ConfigError("coda learning rate must be > 0");
  OuterGrad g = problem.outer_grad(s.x, s.y, batch);
  s.x -= lr * g.grad_z;
  s.y = clamp_dual(s.y + lr * g.grad_y, box);
  ++s.t;
  return s;
}

// ---------------------------------------------------------------------------
// Algorithm adapters for the federation loop. Each owns its per-device rule,
// applies the decay schedule to its own base rate, and draws batches from a
// sampler through the device's own stream.

template <class S, class B>
concept BatchSampler = requires(const S& s, RngStream& rng) {
  { s.sample(rng) } -> std::convertible_to<B>;
};

template <CompositionalProblem P>
struct LocalScgdam {
  using State = DeviceState;
  P problem;
  HyperParams hp;
  bool independent_batches = false;

  static constexpr const char* name = "localscgdam";

  template <class Sampler>
  State init(const Vector& x0, double y0, const Sampler& sampler, RngStream rng) const {
    typename P::Batch bg = sampler.sample(rng);
    if (independent_batches) {
      typename P::Batch bf = sampler.sample(rng);
      return scgdam_init(problem, x0, y0, bg, bf, hp, rng);
    }
    return scgdam_init(problem, x0, y0, bg, bg, hp, rng);
  }

  double rate(std::int64_t t, std::int64_t total) const { return lr_schedule(t, total, hp.eta); }

  template <class Sampler>
  void step(State& s, const Sampler& sampler, double eta_t) const {
    typename P::Batch bg = sampler.sample(s.rng);
    if (independent_batches) {
      typename P::Batch bf = sampler.sample(s.rng);
      scgdam_step_inplace(problem, s, hp, bg, bf, eta_t);
    } else {
      scgdam_step_inplace(problem, s, hp, bg, bg, eta_t);
    }
  }

  void average(std::span<State> states) const { average_states(states, true); }
  static const Vector& primal(const State& s) { return s.x; }
  static double dual(const State& s) { return s.y; }
};

template <Classifier C>
struct LocalSgdm {
  using State = MomentumState;
  C classifier;
  double lr = 0.1;
  double momentum = 0.1;
  bool average_momentum = true;

  static constexpr const char* name = "localsgdm";

  template <class Sampler>
  State init(const Vector& x0, double y0, const Sampler&, RngStream rng) const {
    State s;
    s.x = x0;
    s.y = y0;
    s.m_x = Vector::Zero(static_cast<Eigen::Index>(classifier.param_dim()));
    s.rng = rng;
    return s;
  }

  double rate(std::int64_t t, std::int64_t total) const { return lr_schedule(t, total, lr); }

  template <class Sampler>
  void step(State& s, const Sampler& sampler, double lr_t) const {
    Minibatch b = sampler.sample(s.rng);
    s = sgdm_step(classifier, std::move(s), lr_t, momentum, b);
  }

  void average(std::span<State> states) const { average_states(states, average_momentum); }
  static const Vector& primal(const State& s) { return s.x; }
  static double dual(const State& s) { return s.y; }
};

template <CompositionalProblem P>
struct LocalSgdam {
  using State = MomentumState;
  P problem;
  HyperParams hp;
  bool average_momentum = true;

  static constexpr const char* name = "localsgdam";

  template <class Sampler>
  State init(const Vector& x0, double y0, const Sampler& sampler, RngStream rng) const {
    typename P::Batch b = sampler.sample(rng);
    return sgdam_init(problem, x0, y0, b, hp, rng);
  }

  double rate(std::int64_t t, std::int64_t total) const { return lr_schedule(t, total, hp.eta); }

  template <class Sampler>
  void step(State& s, const Sampler& sampler, double eta_t) const {
    typename P::Batch b = sampler.sample(s.rng);
    s = sgdam_step(problem, std::move(s), hp, b, eta_t);
  }

  void average(std::span<State> states) const { average_states(states, average_momentum); }
  static const Vector& primal(const State& s) { return s.x; }
  static double dual(const State& s) { return s.y; }
};

template <CompositionalProblem P>
struct Coda {
  using State = MomentumState;
  P problem;
  double lr = 0.1;
  std::optional<DualBox> dual_box;

  static constexpr const char* name = "coda";

  template <class Sampler>
  State init(const Vector& x0, double y0, const Sampler&, RngStream rng) const {
    State s;
    s.x = x0;
    s.y = y0;
    s.rng = rng;
    return s;
  }

  double rate(std::int64_t t, std::int64_t total) const { return lr_schedule(t, total, lr); }

  template <class Sampler>
  void step(State& s, const Sampler& sampler, double lr_t) const {
    typename P::Batch b = sampler.sample(s.rng);
    s = coda_step(problem, std::move(s), lr_t, b, dual_box);
  }

  void average(std::span<State> states) const { average_states(states, false); }
  static const Vector& primal(const State& s) { return s.x; }
  static double dual(const State& s) { return s.y; }
};

}  // namespace fedcomp
