#pragma once

#include "fedcomp/compositional.hpp"
#include "fedcomp/core.hpp"
#include "fedcomp/fedsim.hpp"
#include "fedcomp/metrics.hpp"
#include "fedcomp/optimizers.hpp"

#include <Eigen/QR>

#include <functional>
#include <span>
#include <vector>

namespace fedcomp {

/// Linear-quadratic compositional minimax problem with closed-form y*(x)
/// and grad Phi(x):
///   g(x) = A x,   f(z, y) = |z|^2 / 2 + y c^T z - (mu/2) y^2
///   y*(x) = c^T A x / mu
///   Phi(x) = |A x|^2 / 2 + (c^T A x)^2 / (2 mu)
///   grad Phi(x) = A (A x + c y*(x))
/// Device k's local objective adds a linear term b_k^T z with sum_k b_k = 0,
/// so the federated average is the problem above.
struct ToyProblem {
  std::size_t n = 0;
  Eigen::MatrixXd a;
  Vector c;
  double mu = 1.0;
  Vector x_start;

  double y_star(const Vector& x) const { return c.dot(a * x) / mu; }

  double f(const Vector& z, double y) const { return 0.5 * z.squaredNorm() + y * c.dot(z) - 0.5 * mu * y * y; }

  double phi(const Vector& x) const { return f(a * x, y_star(x)); }

  Vector phi_grad(const Vector& x) const {
    const Vector z = a * x;
    return a.transpose() * (z + c * (c.dot(z) / mu));
  }
};

/// Spectrum of A spread over [0.5, 1.5]; |c| = 1; mu = 1.
inline ToyProblem make_toy_problem(std::size_t n, std::uint64_t seed) {
  if (n < 1) throw DimensionError("make_toy_problem: n must be >= 1");
  RngStream rng(seed, 0);
  const auto dim = static_cast<Eigen::Index>(n);
  Eigen::MatrixXd gauss(dim, dim);
  for (Eigen::Index j = 0; j < dim; ++j)
    for (Eigen::Index i = 0; i < dim; ++i) gauss(i, j) = rng.normal();
  const Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(gauss).householderQ();
  Vector spectrum(dim);
  for (Eigen::Index i = 0; i < dim; ++i)
    spectrum[i] = n == 1 ? 1.0 : 0.5 + static_cast<double>(i) / static_cast<double>(n - 1);
  ToyProblem p;
  p.n = n;
  p.a = q * spectrum.asDiagonal() * q.transpose();
  p.a = (0.5 * (p.a + p.a.transpose())).eval();
  p.c = Vector(dim);
  for (Eigen::Index i = 0; i < dim; ++i) p.c[i] = rng.normal();
  p.c.normalize();
  p.mu = 1.0;
  p.x_start = Vector(dim);
  for (Eigen::Index i = 0; i < dim; ++i) p.x_start[i] = rng.normal();
  p.x_start.normalize();
  return p;
}

inline double phi_grad_norm(const ToyProblem& p, const Vector& x) { return p.phi_grad(x).squaredNorm(); }

/// One draw from a device's local distribution: its fixed offset plus
/// additive noise on g, grad_z f, and grad_y f.
struct ToyBatch {
  Vector offset;
  Vector eps_g;
  Vector eps_f;
  double eps_y = 0.0;
};

/// Oracle adapter for the optimizers.
class ToyCompositional {
 public:
  using Batch = ToyBatch;

  explicit ToyCompositional(const ToyProblem& p) : p_(&p) {}

  std::size_t dim() const { return p_->n; }

  Vector inner(const Vector& x, const Batch& b) const {
    Vector z = p_->a * x;
    if (b.eps_g.size()) z += b.eps_g;
    return z;
  }

  Vector inner_jtvp(const Vector&, const Batch&, const Vector& v) const { return p_->a.transpose() * v; }

  OuterGrad outer_grad(const Vector& h, double y, const Batch& b) const {
    OuterGrad g;
    g.grad_z = h + p_->c * y;
    if (b.offset.size()) g.grad_z += b.offset;
    if (b.eps_f.size()) g.grad_z += b.eps_f;
    g.grad_y = p_->c.dot(h) - p_->mu * y + b.eps_y;
    return g;
  }

 private:
  const ToyProblem* p_;
};

class ToySampler {
 public:
  ToySampler(Vector offset, std::size_t n, double sigma) : offset_(std::move(offset)), n_(n), sigma_(sigma) {}

  ToyBatch sample(RngStream& rng) const {
    ToyBatch b;
    b.offset = offset_;
    if (sigma_ > 0.0) {
      const auto dim = static_cast<Eigen::Index>(n_);
      b.eps_g.resize(dim);
      b.eps_f.resize(dim);
      for (Eigen::Index i = 0; i < dim; ++i) b.eps_g[i] = sigma_ * rng.normal();
      for (Eigen::Index i = 0; i < dim; ++i) b.eps_f[i] = sigma_ * rng.normal();
      b.eps_y = sigma_ * rng.normal();
    }
    return b;
  }

 private:
  Vector offset_;
  std::size_t n_;
  double sigma_;
};

/// Zero-sum device offsets: pairs (b, -b), a zero vector for odd K's last
/// device, so the offsets sum to exactly zero in ascending order.
inline std::vector<Vector> toy_offsets(std::size_t k, std::size_t n, double scale, std::uint64_t seed) {
  RngStream rng(seed, kReservedStreamBase + 3);
  std::vector<Vector> out(k, Vector::Zero(static_cast<Eigen::Index>(n)));
  for (std::size_t i = 0; i + 1 < k; i += 2) {
    for (Eigen::Index j = 0; j < static_cast<Eigen::Index>(n); ++j) out[i][j] = scale * rng.normal();
    out[i + 1] = -out[i];
  }
  return out;
}

struct ToyRunConfig {
  std::size_t devices = 4;
  std::size_t period = 4;
  std::int64_t iterations = 1000;
  std::int64_t eval_every = 1;
  std::uint64_t master_seed = 0;
  HyperParams hp;
  /// Additive noise scale; 0 gives deterministic full-batch oracles.
  double sigma = 0.0;
  double offset_scale = 0.5;
  bool decay = false;
  std::size_t threads = 1;
};

/// LocalSCGDAM on the toy problem. Records carry grad_norm_sq at the
/// device-averaged iterate. `observer` sees every iteration's states.
inline std::vector<MetricsRecord> run_toy(
    const ToyProblem& problem, const ToyRunConfig& cfg,
    const std::function<void(std::int64_t, std::span<const DeviceState>)>& observer = {}) {
  HyperParams hp = cfg.hp;
  hp.period = cfg.period;
  hp.validate();
  const auto offsets = toy_offsets(cfg.devices, problem.n, cfg.offset_scale, cfg.master_seed);
  std::vector<ToySampler> samplers;
  for (std::size_t k = 0; k < cfg.devices; ++k) samplers.emplace_back(offsets[k], problem.n, cfg.sigma);

  struct ToyAlgo : LocalScgdam<ToyCompositional> {
    bool decay = false;
    double rate(std::int64_t t, std::int64_t total) const {
      return decay ? lr_schedule(t, total, hp.eta) : hp.eta;
    }
  };
  ToyAlgo algo{{ToyCompositional(problem), hp, false}, cfg.decay};

  SimulationConfig sim;
  sim.period = cfg.period;
  sim.iterations = cfg.iterations;
  sim.eval_every = cfg.eval_every;
  sim.master_seed = cfg.master_seed;
  sim.threads = resolve_threads(cfg.threads, cfg.devices);
  sim.observe_every_iteration = static_cast<bool>(observer);

  std::vector<MetricsRecord> trace;
  auto on_iteration = [&](std::int64_t i, std::span<const DeviceState> states) {
    if (observer) observer(i, states);
  };
  auto on_eval = [&](std::int64_t i, std::int64_t round, double eta_t, std::span<const DeviceState> states) {
    MetricsRecord r;
    r.iteration = i;
    r.round = round;
    r.algo = "localscgdam";
    r.seed = cfg.master_seed;
    r.grad_norm_sq = phi_grad_norm(problem, detail::mean_primal(states));
    r.consensus_gap = consensus_gap(states);
    r.eta_t = eta_t;
    trace.push_back(std::move(r));
  };
  simulate(algo, std::span<const ToySampler>(samplers), problem.x_start, 0.0, sim, on_iteration, on_eval);
  return trace;
}

}  // namespace fedcomp
