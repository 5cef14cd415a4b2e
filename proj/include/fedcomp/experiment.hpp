#pragma once

#include "fedcomp/core.hpp"
#include "fedcomp/data.hpp"
#include "fedcomp/fedsim.hpp"
#include "fedcomp/metrics.hpp"
#include "fedcomp/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace fedcomp {

enum class ModelKind { linear, mlp };

/// Everything a run needs. The text-format keys are the ones `apply_key`
/// accepts; `echo_config` writes them all.
struct ExperimentConfig {
  FederationConfig fed;
  std::vector<Algo> algos{Algo::localscgdam};
  std::uint64_t seed = 0;
  std::size_t repeats = 1;

  ModelKind model = ModelKind::linear;
  std::size_t mlp_width = 16;

  std::string dataset = "gaussian";
  std::size_t n_samples = 10000;
  std::size_t d_feat = 20;
  double separation = 2.0;
  std::uint64_t data_seed = 1234;
  std::string train_csv;
  std::string test_csv;
  bool csv_header = false;
  double test_fraction = 0.2;
  std::optional<double> imbalance_ratio = 0.1;

  std::string out = "results";

  void validate() const {
    fed.validate();
    if (algos.empty()) throw ConfigError("algo list is empty");
    if (repeats < 1) throw ConfigError("repeats must be >= 1");
    if (dataset != "gaussian" && dataset != "csv") throw ConfigError("dataset must be 'gaussian' or 'csv'");
    if (dataset == "csv" && train_csv.empty()) throw ConfigError("dataset=csv requires train_csv");
    if (dataset == "gaussian" && (n_samples < 2 || d_feat < 1))
      throw ConfigError("gaussian dataset needs n_samples >= 2 and d_feat >= 1");
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw ConfigError("test_fraction must lie in (0, 1)");
    if (imbalance_ratio && !(*imbalance_ratio > 0.0 && *imbalance_ratio < 1.0))
      throw ConfigError("imbalance_ratio must lie in (0, 1)");
    if (model == ModelKind::mlp && mlp_width < 1) throw ConfigError("mlp_width must be >= 1");
  }
};

namespace detail {

inline std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

inline double to_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': not a number: '" + v + "'");
  }
  if (used != v.size()) throw ConfigError("config key '" + key + "': not a number: '" + v + "'");
  return out;
}

inline std::uint64_t to_uint(const std::string& key, const std::string& v) {
  if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos)
    throw ConfigError("config key '" + key + "': not a nonnegative integer: '" + v + "'");
  try {
    return std::stoull(v);
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': integer out of range: '" + v + "'");
  }
}

inline bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("config key '" + key + "': not a boolean: '" + v + "'");
}

inline std::string fmt_real(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace detail

using KeyValues = std::vector<std::pair<std::string, std::string>>;

inline const std::map<std::string, std::string>& config_aliases() {
  static const std::map<std::string, std::string> aliases{
      {"K", "devices"}, {"p", "period"}, {"T", "iterations"}, {"master_seed", "seed"}};
  return aliases;
}

/// Applies one key = value assignment.
inline void apply_key(ExperimentConfig& cfg, std::string key, const std::string& value) {
  if (auto it = config_aliases().find(key); it != config_aliases().end()) key = it->second;
  using namespace detail;
  static const std::map<std::string, std::function<void(ExperimentConfig&, const std::string&, const std::string&)>>
      setters{
          {"devices", [](auto& c, auto& k, auto& v) { c.fed.devices = to_uint(k, v); }},
          {"period", [](auto& c, auto& k, auto& v) { c.fed.hp.period = to_uint(k, v); }},
          {"iterations", [](auto& c, auto& k, auto& v) { c.fed.iterations = static_cast<std::int64_t>(to_uint(k, v)); }},
          {"eval_every", [](auto& c, auto& k, auto& v) { c.fed.eval_every = static_cast<std::int64_t>(to_uint(k, v)); }},
          {"seed", [](auto& c, auto& k, auto& v) { c.seed = to_uint(k, v); }},
          {"repeats", [](auto& c, auto& k, auto& v) { c.repeats = to_uint(k, v); }},
          {"algo",
           [](auto& c, auto&, auto& v) {
             c.algos.clear();
             std::stringstream ss(v);
             std::string item;
             while (std::getline(ss, item, ',')) c.algos.push_back(parse_algo(trim(item)));
           }},
          {"eta", [](auto& c, auto& k, auto& v) { c.fed.hp.eta = to_double(k, v); }},
          {"gamma_x", [](auto& c, auto& k, auto& v) { c.fed.hp.gamma_x = to_double(k, v); }},
          {"gamma_y", [](auto& c, auto& k, auto& v) { c.fed.hp.gamma_y = to_double(k, v); }},
          {"alpha", [](auto& c, auto& k, auto& v) { c.fed.hp.alpha = to_double(k, v); }},
          {"beta_x", [](auto& c, auto& k, auto& v) { c.fed.hp.beta_x = to_double(k, v); }},
          {"beta_y", [](auto& c, auto& k, auto& v) { c.fed.hp.beta_y = to_double(k, v); }},
          {"rho", [](auto& c, auto& k, auto& v) { c.fed.hp.rho = to_double(k, v); }},
          {"batch_size", [](auto& c, auto& k, auto& v) { c.fed.hp.batch_size = to_uint(k, v); }},
          {"dual_clamp",
           [](auto& c, auto& k, auto& v) {
             if (v == "off" || v == "none") {
               c.fed.hp.dual_box.reset();
               return;
             }
             const auto comma = v.find(',');
             if (comma == std::string::npos) throw ConfigError("dual_clamp expects 'lo,hi' or 'off'");
             c.fed.hp.dual_box = DualBox{to_double(k, trim(v.substr(0, comma))), to_double(k, trim(v.substr(comma + 1)))};
           }},
          {"sgdm_lr", [](auto& c, auto& k, auto& v) { c.fed.baselines.sgdm_lr = to_double(k, v); }},
          {"sgdm_momentum", [](auto& c, auto& k, auto& v) { c.fed.baselines.sgdm_momentum = to_double(k, v); }},
          {"coda_lr", [](auto& c, auto& k, auto& v) { c.fed.baselines.coda_lr = to_double(k, v); }},
          {"average_momentum", [](auto& c, auto& k, auto& v) { c.fed.baselines.average_momentum = to_bool(k, v); }},
          {"init_scale", [](auto& c, auto& k, auto& v) { c.fed.init_scale = to_double(k, v); }},
          {"independent_batches", [](auto& c, auto& k, auto& v) { c.fed.independent_batches = to_bool(k, v); }},
          {"epoch_shuffle", [](auto& c, auto& k, auto& v) { c.fed.epoch_shuffle = to_bool(k, v); }},
          {"wall_clock", [](auto& c, auto& k, auto& v) { c.fed.wall_clock = to_bool(k, v); }},
          {"model",
           [](auto& c, auto&, auto& v) {
             if (v == "linear" || v == "logistic-linear")
               c.model = ModelKind::linear;
             else if (v == "mlp" || v == "mlp-1hidden")
               c.model = ModelKind::mlp;
             else
               throw ConfigError("model must be 'linear' or 'mlp', got '" + v + "'");
           }},
          {"mlp_width", [](auto& c, auto& k, auto& v) { c.mlp_width = to_uint(k, v); }},
          {"dataset", [](auto& c, auto&, auto& v) { c.dataset = v; }},
          {"n_samples", [](auto& c, auto& k, auto& v) { c.n_samples = to_uint(k, v); }},
          {"d_feat", [](auto& c, auto& k, auto& v) { c.d_feat = to_uint(k, v); }},
          {"separation", [](auto& c, auto& k, auto& v) { c.separation = to_double(k, v); }},
          {"data_seed", [](auto& c, auto& k, auto& v) { c.data_seed = to_uint(k, v); }},
          {"train_csv", [](auto& c, auto&, auto& v) { c.train_csv = v; }},
          {"test_csv", [](auto& c, auto&, auto& v) { c.test_csv = v; }},
          {"csv_header", [](auto& c, auto& k, auto& v) { c.csv_header = to_bool(k, v); }},
          {"test_fraction", [](auto& c, auto& k, auto& v) { c.test_fraction = to_double(k, v); }},
          {"imbalance_ratio",
           [](auto& c, auto& k, auto& v) {
             if (v == "none" || v == "off")
               c.imbalance_ratio.reset();
             else
               c.imbalance_ratio = to_double(k, v);
           }},
          {"out", [](auto& c, auto&, auto& v) { c.out = v; }},
      };
  auto it = setters.find(key);
  if (it == setters.end()) throw ConfigError("unknown config key '" + key + "'");
  it->second(cfg, key, trim(value));
}

/// Parses `key = value` lines ('#' starts a comment).
inline KeyValues read_key_values(std::istream& in, const std::string& origin) {
  KeyValues kv;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": expected 'key = value'");
    kv.emplace_back(detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
  }
  return kv;
}

/// Defaults, then the file (if any), then `overrides` in order; validated.
inline ExperimentConfig parse_config(const std::optional<std::string>& path, const KeyValues& overrides = {}) {
  ExperimentConfig cfg;
  if (path) {
    std::ifstream in(*path);
    if (!in) throw ConfigError("cannot open config file '" + *path + "'");
    for (const auto& [k, v] : read_key_values(in, *path)) apply_key(cfg, k, v);
  }
  for (const auto& [k, v] : overrides) apply_key(cfg, k, v);
  cfg.validate();
  return cfg;
}

/// Resolved configuration in the same key = value format `parse_config` reads.
inline std::string echo_config(const ExperimentConfig& c) {
  using detail::fmt_real;
  std::ostringstream os;
  const auto& hp = c.fed.hp;
  std::string algos;
  for (Algo a : c.algos) algos += (algos.empty() ? "" : ",") + std::string(algo_name(a));
  os << "algo = " << algos << "\n"
     << "devices = " << c.fed.devices << "\n"
     << "period = " << hp.period << "\n"
     << "iterations = " << c.fed.iterations << "\n"
     << "eval_every = " << c.fed.eval_every << "\n"
     << "seed = " << c.seed << "\n"
     << "repeats = " << c.repeats << "\n"
     << "eta = " << fmt_real(hp.eta) << "\n"
     << "gamma_x = " << fmt_real(hp.gamma_x) << "\n"
     << "gamma_y = " << fmt_real(hp.gamma_y) << "\n"
     << "alpha = " << fmt_real(hp.alpha) << "\n"
     << "beta_x = " << fmt_real(hp.beta_x) << "\n"
     << "beta_y = " << fmt_real(hp.beta_y) << "\n"
     << "rho = " << fmt_real(hp.rho) << "\n"
     << "batch_size = " << hp.batch_size << "\n"
     << "dual_clamp = "
     << (hp.dual_box ? fmt_real(hp.dual_box->lo) + "," + fmt_real(hp.dual_box->hi) : std::string("off")) << "\n"
     << "sgdm_lr = " << fmt_real(c.fed.baselines.sgdm_lr) << "\n"
     << "sgdm_momentum = " << fmt_real(c.fed.baselines.sgdm_momentum) << "\n"
     << "coda_lr = " << fmt_real(c.fed.baselines.coda_lr) << "\n"
     << "average_momentum = " << (c.fed.baselines.average_momentum ? "true" : "false") << "\n"
     << "init_scale = " << fmt_real(c.fed.init_scale) << "\n"
     << "independent_batches = " << (c.fed.independent_batches ? "true" : "false") << "\n"
     << "epoch_shuffle = " << (c.fed.epoch_shuffle ? "true" : "false") << "\n"
     << "wall_clock = " << (c.fed.wall_clock ? "true" : "false") << "\n"
     << "model = " << (c.model == ModelKind::linear ? "linear" : "mlp") << "\n"
     << "mlp_width = " << c.mlp_width << "\n"
     << "dataset = " << c.dataset << "\n"
     << "n_samples = " << c.n_samples << "\n"
     << "d_feat = " << c.d_feat << "\n"
     << "separation = " << fmt_real(c.separation) << "\n"
     << "data_seed = " << c.data_seed << "\n"
     << "train_csv = " << c.train_csv << "\n"
     << "test_csv = " << c.test_csv << "\n"
     << "csv_header = " << (c.csv_header ? "true" : "false") << "\n"
     << "test_fraction = " << fmt_real(c.test_fraction) << "\n"
     << "imbalance_ratio = " << (c.imbalance_ratio ? fmt_real(*c.imbalance_ratio) : std::string("none")) << "\n"
     << "out = " << c.out << "\n";
  return os.str();
}

inline constexpr const char* kTraceHeader =
    "iteration,round,algo,seed,train_ce,train_auc_loss,test_auc_avg_model,test_auc_mean_devices,"
    "consensus_gap,grad_norm_sq,eta_t,wall_ms";

inline void write_trace(std::ostream& os, const std::vector<MetricsRecord>& trace) {
  using detail::fmt_real;
  os << kTraceHeader << "\n";
  for (const auto& r : trace) {
    os << r.iteration << ',' << r.round << ',' << r.algo << ',' << r.seed << ',' << fmt_real(r.train_ce) << ','
       << fmt_real(r.train_auc_loss) << ',' << fmt_real(r.test_auc) << ',' << fmt_real(r.test_auc_mean_devices)
       << ',' << fmt_real(r.consensus_gap) << ',' << (r.grad_norm_sq ? fmt_real(*r.grad_norm_sq) : "") << ','
       << fmt_real(r.eta_t) << ',' << r.wall_ms << "\n";
  }
}

/// Train and test sets per the configured pipeline: split first (stratified,
/// so the test set keeps the source balance), then subsample positives in
/// the training part only.
inline std::pair<LabeledDataset, LabeledDataset> load_datasets(const ExperimentConfig& cfg) {
  LabeledDataset train, test;
  if (cfg.dataset == "gaussian") {
    auto full = gen_gaussian_mixture(cfg.n_samples, cfg.d_feat, cfg.separation, cfg.data_seed);
    std::tie(train, test) = train_test_split(full, cfg.test_fraction, cfg.data_seed);
  } else {
    auto full = load_csv(cfg.train_csv, cfg.csv_header);
    if (cfg.test_csv.empty()) {
      std::tie(train, test) = train_test_split(full, cfg.test_fraction, cfg.data_seed);
    } else {
      train = std::move(full);
      test = load_csv(cfg.test_csv, cfg.csv_header);
    }
  }
  if (cfg.imbalance_ratio) train = imbalance_subsample(train, *cfg.imbalance_ratio, cfg.data_seed);
  return {std::move(train), std::move(test)};
}

/// Dispatches on the configured model kind.
template <class F>
decltype(auto) with_classifier(const ExperimentConfig& cfg, std::size_t d_feat, F&& f) {
  if (cfg.model == ModelKind::mlp) return f(TanhMlp(d_feat, cfg.mlp_width));
  return f(LogisticLinear(d_feat));
}

struct SummaryRow {
  std::string algo;
  std::size_t seeds = 0;
  double mean = 0.0;
  double stddev = 0.0;
};

inline SummaryRow summarize(std::string algo, const std::vector<double>& final_auc) {
  SummaryRow row{std::move(algo), final_auc.size(), 0.0, 0.0};
  for (double v : final_auc) row.mean += v;
  row.mean /= static_cast<double>(final_auc.size());
  if (final_auc.size() > 1) {
    double ss = 0.0;
    for (double v : final_auc) ss += (v - row.mean) * (v - row.mean);
    row.stddev = std::sqrt(ss / static_cast<double>(final_auc.size() - 1));
  }
  return row;
}

/// Runs every (algo, seed) pair and writes per-seed traces, summary.csv and
/// the resolved config into cfg.out. Returns 0 on success.
inline int run_experiment(const ExperimentConfig& cfg, std::ostream& log) {
  namespace fs = std::filesystem;
  try {
    cfg.validate();
    const auto [train, test] = load_datasets(cfg);
    fs::create_directories(cfg.out);
    {
      std::ofstream echo(fs::path(cfg.out) / "config.resolved.txt");
      echo << echo_config(cfg);
      if (!echo) throw Error("failed to write config echo");
    }
    std::vector<SummaryRow> summary;
    for (Algo algo : cfg.algos) {
      std::vector<double> finals;
      for (std::size_t r = 0; r < cfg.repeats; ++r) {
        FederationConfig fed = cfg.fed;
        fed.algo = algo;
        fed.master_seed = cfg.seed + r;
        const auto trace = with_classifier(cfg, train.feature_dim(),
                                           [&](const auto& c) { return run_federation(c, train, test, fed); });
        const fs::path file =
            fs::path(cfg.out) / (std::string(algo_name(algo)) + "_seed" + std::to_string(fed.master_seed) + ".csv");
        std::ofstream os(file);
        write_trace(os, trace);
        if (!os) throw Error("failed to write " + file.string());
        finals.push_back(trace.back().test_auc);
        log << algo_name(algo) << " seed " << fed.master_seed << ": final test AUC "
            << detail::fmt_real(trace.back().test_auc) << "\n";
      }
      summary.push_back(summarize(std::string(algo_name(algo)), finals));
    }
    std::ofstream os(fs::path(cfg.out) / "summary.csv");
    os << "algo,seeds,mean_test_auc,std_test_auc\n";
    for (const auto& row : summary)
      os << row.algo << ',' << row.seeds << ',' << detail::fmt_real(row.mean) << ',' << detail::fmt_real(row.stddev)
         << "\n";
    if (!os) throw Error("failed to write summary.csv");
    return 0;
  } catch (const std::exception& e) {
    log << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace fedcomp
