#pragma once

#include "fedcomp/auc.hpp"
#include "fedcomp/compositional.hpp"
#include "fedcomp/core.hpp"
#include "fedcomp/data.hpp"
#include "fedcomp/metrics.hpp"
#include "fedcomp/model.hpp"
#include "fedcomp/optimizers.hpp"

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <functional>
#include <mutex>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace fedcomp {

enum class Algo { localscgdam, localsgdm, localsgdam, coda };

inline std::string_view algo_name(Algo a) {
  switch (a) {
    case Algo::localscgdam: return "localscgdam";
    case Algo::localsgdm: return "localsgdm";
    case Algo::localsgdam: return "localsgdam";
    case Algo::coda: return "coda";
  }
  return "unknown";
}

inline Algo parse_algo(std::string_view name) {
  for (Algo a : {Algo::localscgdam, Algo::localsgdm, Algo::localsgdam, Algo::coda})
    if (algo_name(a) == name) return a;
  throw ConfigError("unknown algorithm '" + std::string(name) +
                    "' (expected localscgdam, localsgdm, localsgdam or coda)");
}

/// Tuned rates of the cross-entropy and momentum-free baselines.
struct BaselineParams {
  double sgdm_lr = 0.1;
  double sgdm_momentum = 0.1;
  double coda_lr = 0.1;
  bool average_momentum = true;
};

struct FederationConfig {
  std::size_t devices = 4;
  Algo algo = Algo::localscgdam;
  std::int64_t iterations = 2000;
  std::int64_t eval_every = 100;
  std::uint64_t master_seed = 0;
  HyperParams hp;
  BaselineParams baselines;
  double init_scale = 0.01;
  bool independent_batches = false;
  bool epoch_shuffle = false;
  /// 0: take FEDCOMP_THREADS, else hardware concurrency.
  std::size_t threads = 0;
  bool wall_clock = false;
  /// Called after every iteration (after any averaging) with the consensus gap.
  std::function<void(std::int64_t iteration, double gap)> on_iteration;

  void validate() const {
    if (devices < 1) throw ConfigError("devices K must be >= 1");
    if (iterations < 1) throw ConfigError("iterations T must be >= 1");
    if (eval_every < 1) throw ConfigError("eval_every must be >= 1");
    if (!(init_scale >= 0.0)) throw ConfigError("init_scale must be >= 0");
    hp.validate();
    if (!(baselines.sgdm_lr > 0.0) || !(baselines.coda_lr > 0.0))
      throw ConfigError("baseline learning rates must be > 0");
    if (!(baselines.sgdm_momentum >= 0.0 && baselines.sgdm_momentum < 1.0))
      throw ConfigError("sgdm momentum must lie in [0, 1)");
  }
};

inline std::size_t resolve_threads(std::size_t requested, std::size_t work_items) {
  std::size_t n = requested;
  if (n == 0) {
    if (const char* env = std::getenv("FEDCOMP_THREADS"); env && *env) {
      try {
        n = static_cast<std::size_t>(std::stoul(env));
      } catch (const std::exception&) {
        throw ConfigError(std::string("FEDCOMP_THREADS is not a positive integer: '") + env + "'");
      }
    }
    if (n == 0) n = std::max(1u, std::thread::hardware_concurrency());
  }
  return std::max<std::size_t>(1, std::min(n, work_items));
}

/// Runs f(i) for i in [0, n) on up to `threads` workers; device i is always
/// handled by worker i % threads. Rethrows the first failure after joining.
template <class F>
void parallel_for(std::size_t n, std::size_t threads, F&& f) {
  if (threads <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) f(i);
    return;
  }
  std::exception_ptr failure;
  std::mutex mu;
  {
    std::vector<std::jthread> workers;
    workers.reserve(threads);
    for (std::size_t w = 0; w < threads; ++w) {
      workers.emplace_back([&, w] {
        try {
          for (std::size_t i = w; i < n; i += threads) f(i);
        } catch (...) {
          std::lock_guard lock(mu);
          if (!failure) failure = std::current_exception();
        }
      });
    }
  }
  if (failure) std::rethrow_exception(failure);
}

/// Random permutation, then contiguous near-equal shards (sizes differ by <= 1).
inline std::vector<LabeledDataset> partition(const LabeledDataset& ds, std::size_t k, std::uint64_t seed) {
  if (k < 1) throw ConfigError("partition: K must be >= 1");
  if (ds.size() < k)
    throw DataError("partition: " + std::to_string(ds.size()) + " samples cannot fill " + std::to_string(k) +
                    " shards");
  std::vector<std::size_t> perm(ds.size());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  RngStream rng(seed, kPartitionStream);
  shuffle(perm, rng);
  std::vector<LabeledDataset> shards;
  const std::size_t base = ds.size() / k;
  const std::size_t extra = ds.size() % k;
  std::size_t offset = 0;
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t len = base + (i < extra ? 1 : 0);
    std::span<const std::size_t> idx(perm.data() + offset, len);
    shards.push_back(subset(ds, idx, ds.name + "-shard" + std::to_string(i)));
    offset += len;
  }
  return shards;
}

/// Draws minibatches from one device's shard: uniform with replacement, or
/// without replacement through reshuffled epochs.
class ShardSampler {
 public:
  ShardSampler(LabeledDataset shard, std::size_t batch_size, bool epoch_shuffle = false)
      : shard_(std::move(shard)), batch_size_(batch_size), epoch_shuffle_(epoch_shuffle) {
    if (shard_.size() == 0) throw DataError("ShardSampler: empty shard");
    if (batch_size_ == 0) throw ConfigError("ShardSampler: batch_size must be >= 1");
  }

  Minibatch sample(RngStream& rng) const {
    std::vector<std::size_t> idx(batch_size_);
    if (!epoch_shuffle_) {
      for (auto& i : idx) i = static_cast<std::size_t>(rng.uniform_index(shard_.size()));
    } else {
      for (auto& i : idx) {
        if (cursor_ == order_.size()) {
          order_.resize(shard_.size());
          std::iota(order_.begin(), order_.end(), std::size_t{0});
          shuffle(order_, rng);
          cursor_ = 0;
        }
        i = order_[cursor_++];
      }
    }
    return gather(shard_, idx);
  }

  const LabeledDataset& shard() const { return shard_; }

 private:
  LabeledDataset shard_;
  std::size_t batch_size_;
  bool epoch_shuffle_;
  // Epoch cursor; each sampler belongs to exactly one device worker.
  mutable std::vector<std::size_t> order_;
  mutable std::size_t cursor_ = 0;
};

struct SimulationConfig {
  std::size_t period = 1;
  std::int64_t iterations = 1;
  std::int64_t eval_every = 1;
  std::uint64_t master_seed = 0;
  std::size_t threads = 1;
  bool observe_every_iteration = false;
};

/// Synchronous K-device loop. Devices run independently between barriers;
/// at iteration i (1-based) they are averaged when i % period == 0 and
/// `on_eval` fires when i % eval_every == 0 or i == iterations. Device k
/// samples with stream (master_seed, k) regardless of thread count.
template <class Algorithm, class Sampler, class OnIteration, class OnEval>
std::vector<typename Algorithm::State> simulate(const Algorithm& algo, std::span<const Sampler> samplers,
                                                const Vector& x0, double y0, const SimulationConfig& cfg,
                                                OnIteration&& on_iteration, OnEval&& on_eval) {
  using State = typename Algorithm::State;
  const std::size_t k = samplers.size();
  if (k == 0) throw ConfigError("simulate: no devices");
  if (cfg.period < 1 || cfg.iterations < 1 || cfg.eval_every < 1)
    throw ConfigError("simulate: period, iterations and eval_every must be >= 1");

  std::vector<State> states(k);
  parallel_for(k, cfg.threads, [&](std::size_t i) {
    states[i] = algo.init(x0, y0, samplers[i], derive_stream(cfg.master_seed, i));
  });

  const auto period = static_cast<std::int64_t>(cfg.period);
  std::int64_t t = 0;
  while (t < cfg.iterations) {
    std::int64_t end = std::min({cfg.iterations, (t / period + 1) * period, (t / cfg.eval_every + 1) * cfg.eval_every});
    if (cfg.observe_every_iteration) end = t + 1;
    const std::int64_t begin = t;
    parallel_for(k, cfg.threads, [&](std::size_t i) {
      for (std::int64_t s = begin; s < end; ++s) algo.step(states[i], samplers[i], algo.rate(s, cfg.iterations));
    });
    t = end;
    if (t % period == 0) algo.average(std::span<State>(states));
    on_iteration(t, std::span<const State>(states));
    if (t % cfg.eval_every == 0 || t == cfg.iterations)
      on_eval(t, t / period, algo.rate(t - 1, cfg.iterations), std::span<const State>(states));
  }
  return states;
}

namespace detail {

template <class State>
Vector mean_primal(std::span<const State> states) {
  Vector sum = states.front().x;
  for (std::size_t i = 1; i < states.size(); ++i) sum += states[i].x;
  return sum / static_cast<double>(states.size());
}

template <class State>
double mean_dual(std::span<const State> states) {
  double sum = 0.0;
  for (const State& s : states) sum += s.y;
  return sum / static_cast<double>(states.size());
}

}  // namespace detail

/// Trains `classifier` on `train` with the configured algorithm across
/// simulated devices and scores the test set at every evaluation point.
/// Test AUC is reported both for the device-averaged model and as the mean
/// over per-device models.
template <Classifier C>
std::vector<MetricsRecord> run_federation(const C& classifier, const LabeledDataset& train,
                                          const LabeledDataset& test, const FederationConfig& cfg) {
  cfg.validate();
  train.validate();
  test.validate();
  if (train.positives() == 0 || train.negatives() == 0)
    throw DataError("run_federation: training set needs both classes");
  if (test.positives() == 0 || test.negatives() == 0)
    throw DataError("run_federation: test set needs both classes");
  if (train.feature_dim() != classifier.feature_dim() || test.feature_dim() != classifier.feature_dim())
    throw DimensionError("run_federation: dataset feature dimension does not match the classifier");

  const Prior prior = prior_estimate(train);
  const auto shards = partition(train, cfg.devices, cfg.master_seed);
  std::vector<ShardSampler> samplers;
  samplers.reserve(shards.size());
  for (const auto& shard : shards) samplers.emplace_back(shard, cfg.hp.batch_size, cfg.epoch_shuffle);

  RngStream init_rng(cfg.master_seed, kInitStream);
  const ParamVector x0 = make_param(classifier.param_dim(), cfg.init_scale, init_rng);
  const Minibatch train_batch = as_batch(train);
  const std::vector<int>& test_labels = test.labels;
  const auto d = static_cast<Eigen::Index>(classifier.param_dim());

  SimulationConfig sim;
  sim.period = cfg.hp.period;
  sim.iterations = cfg.iterations;
  sim.eval_every = cfg.eval_every;
  sim.master_seed = cfg.master_seed;
  sim.threads = resolve_threads(cfg.threads, cfg.devices);
  sim.observe_every_iteration = static_cast<bool>(cfg.on_iteration);

  const auto start = std::chrono::steady_clock::now();
  std::vector<MetricsRecord> trace;

  auto test_auc = [&](const Vector& x) {
    const Vector s = classifier.scores(x.head(d), test.features);
    return auc_score(std::span<const double>(s.data(), static_cast<std::size_t>(s.size())), test_labels);
  };

  auto run = [&](const auto& algorithm) {
    using State = typename std::decay_t<decltype(algorithm)>::State;
    auto on_iteration = [&](std::int64_t i, std::span<const State> states) {
      if (cfg.on_iteration) cfg.on_iteration(i, consensus_gap(states));
    };
    auto on_eval = [&](std::int64_t i, std::int64_t round, double eta_t, std::span<const State> states) {
      MetricsRecord r;
      r.iteration = i;
      r.round = round;
      r.algo = std::string(algo_name(cfg.algo));
      r.seed = cfg.master_seed;
      const ParamVector xbar(classifier.param_dim(), detail::mean_primal(states));
      const double ybar = detail::mean_dual(states);
      r.train_ce = ce_loss(classifier, xbar.w(), train_batch);
      r.train_auc_loss = auc_loss(classifier, xbar, DualScalar(ybar), train_batch, prior).value;
      r.test_auc = test_auc(xbar.flat());
      double device_sum = 0.0;
      for (const State& s : states) device_sum += test_auc(s.x);
      r.test_auc_mean_devices = device_sum / static_cast<double>(states.size());
      r.consensus_gap = consensus_gap(states);
      r.eta_t = eta_t;
      if (cfg.wall_clock)
        r.wall_ms = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start)
                        .count();
      trace.push_back(std::move(r));
    };
    simulate(algorithm, std::span<const ShardSampler>(samplers), x0.flat(), 0.0, sim, on_iteration, on_eval);
  };

  using Problem = AucCompositional<C>;
  const Problem problem(classifier, InnerConfig(cfg.hp.rho), prior);
  switch (cfg.algo) {
    case Algo::localscgdam:
      run(LocalScgdam<Problem>{problem, cfg.hp, cfg.independent_batches});
      break;
    case Algo::localsgdm:
      run(LocalSgdm<C>{classifier, cfg.baselines.sgdm_lr, cfg.baselines.sgdm_momentum,
                       cfg.baselines.average_momentum});
      break;
    case Algo::localsgdam:
      run(LocalSgdam<Problem>{problem, cfg.hp, cfg.baselines.average_momentum});
      break;
    case Algo::coda:
      run(Coda<Problem>{problem, cfg.baselines.coda_lr, cfg.hp.dual_box});
      break;
  }
  return trace;
}

}  // namespace fedcomp
