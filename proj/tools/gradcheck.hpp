#pragma once

// Finite-difference consistency checks behind `fedcomp-auc gradcheck`.

#include "fedcomp/fedcomp.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

namespace fedcomp::tools {

struct CheckResult {
  std::string name;
  double max_rel_err = 0.0;
  double tolerance = 0.0;
  bool passed() const { return max_rel_err <= tolerance; }
};

inline double rel_err(const Vector& got, const Vector& want) {
  return (got - want).norm() / std::max(1e-12, want.norm());
}

inline Vector central_diff(const std::function<double(const Vector&)>& f, const Vector& x, double step) {
  Vector g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Vector xp = x, xm = x;
    xp[i] += step;
    xm[i] -= step;
    g[i] = (f(xp) - f(xm)) / (2.0 * step);
  }
  return g;
}

inline Minibatch random_batch(std::size_t n, std::size_t d, RngStream& rng) {
  RowMatrix f(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  std::vector<int> b(n);
  for (std::size_t i = 0; i < n; ++i) {
    b[i] = (i % 3 == 0) ? 1 : -1;
    for (std::size_t j = 0; j < d; ++j) f(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rng.normal();
  }
  return {std::move(f), std::move(b)};
}

inline Vector random_vector(std::size_t n, RngStream& rng, double scale = 1.0) {
  Vector v(static_cast<Eigen::Index>(n));
  for (auto& x : v) x = scale * rng.normal();
  return v;
}

inline std::vector<CheckResult> run_gradchecks(std::uint64_t seed, int instances) {
  RngStream rng(seed, 99);
  const std::size_t d = 5;
  const LogisticLinear lin(d);
  const TanhMlp mlp(d, 6);
  CheckResult score{"mlp score_grad vs central difference", 0.0, 1e-5};
  CheckResult ce{"ce_grad vs central difference", 0.0, 1e-5};
  CheckResult hvp{"ce_hvp vs difference of ce_grad", 0.0, 1e-4};
  CheckResult auc_z{"auc grad_z vs central difference", 0.0, 1e-6};
  CheckResult auc_y{"auc grad_y vs central difference", 0.0, 1e-6};
  CheckResult comp{"comp_grad_x vs end-to-end difference", 0.0, 1e-4};

  for (int it = 0; it < instances; ++it) {
    const Minibatch batch = random_batch(12, d, rng);
    const Prior prior(0.1 + 0.8 * rng.uniform());

    const Vector wm = random_vector(mlp.param_dim(), rng, 0.5);
    const Vector a = random_vector(d, rng);
    score.max_rel_err = std::max(
        score.max_rel_err,
        rel_err(mlp.score_grad(wm, a), central_diff([&](const Vector& w) { return mlp.score(w, a); }, wm, 1e-6)));

    const Vector w = random_vector(d, rng, 0.5);
    ce.max_rel_err = std::max(ce.max_rel_err, rel_err(ce_grad(lin, w, batch),
                                                      central_diff([&](const Vector& x) { return ce_loss(lin, x, batch); }, w, 1e-6)));

    const Vector v = random_vector(d, rng);
    const double step = 1e-5;
    const Vector fd_hvp = (ce_grad(lin, w + step * v, batch) - ce_grad(lin, w - step * v, batch)) / (2.0 * step);
    hvp.max_rel_err = std::max(hvp.max_rel_err, rel_err(lin.ce_hvp(w, batch, v), fd_hvp));

    const ParamVector z(d, random_vector(d + 2, rng, 0.5));
    const double y = rng.normal();
    const AUCLossEval e = auc_loss(lin, z, DualScalar(y), batch, prior);
    auto value_z = [&](const Vector& flat) { return auc_loss(lin, ParamVector(d, flat), DualScalar(y), batch, prior).value; };
    auc_z.max_rel_err = std::max(auc_z.max_rel_err, rel_err(e.grad_z, central_diff(value_z, z.flat(), 1e-5)));
    auto value_y = [&](const Vector& yy) { return auc_loss(lin, z, DualScalar(yy[0]), batch, prior).value; };
    Vector y_vec(1);
    y_vec[0] = y;
    Vector gy(1);
    gy[0] = e.grad_y;
    auc_y.max_rel_err = std::max(auc_y.max_rel_err, rel_err(gy, central_diff(value_y, y_vec, 1e-5)));

    const InnerConfig cfg(0.1 + 0.4 * rng.uniform());
    const ParamVector x(d, random_vector(d + 2, rng, 0.5));
    const ParamVector h = inner_g(lin, x, batch, cfg);
    const Vector analytic = comp_grad_x(lin, x, h, DualScalar(y), batch, batch, cfg, prior);
    auto composed = [&](const Vector& flat) {
      return auc_loss(lin, inner_g(lin, ParamVector(d, flat), batch, cfg), DualScalar(y), batch, prior).value;
    };
    comp.max_rel_err = std::max(comp.max_rel_err, rel_err(analytic, central_diff(composed, x.flat(), 1e-5)));
  }
  return {score, ce, hvp, auc_z, auc_y, comp};
}

}  // namespace fedcomp::tools
