// fedcomp-auc: experiment runner for federated compositional AUC maximization.
//
//   fedcomp-auc run --config exp.cfg [--algo localscgdam,localsgdm] [--devices 4]
//                   [--period 4] [--seed 0 --repeats 5] [--out results]
//   fedcomp-auc gradcheck
//   fedcomp-auc toy [--devices 4] [--period 4] [--iterations 1000] [--sigma 0]

#include "fedcomp/fedcomp.hpp"
#include "gradcheck.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace {

int run_command(const std::optional<std::string>& config_path, const fedcomp::KeyValues& overrides) {
  fedcomp::ExperimentConfig cfg;
  try {
    cfg = fedcomp::parse_config(config_path, overrides);
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  }
  return fedcomp::run_experiment(cfg, std::cerr);
}

int gradcheck_command(std::uint64_t seed, int instances) {
  bool ok = true;
  for (const auto& r : fedcomp::tools::run_gradchecks(seed, instances)) {
    std::printf("%-42s max rel err %.3e (tol %.0e) %s\n", r.name.c_str(), r.max_rel_err, r.tolerance,
                r.passed() ? "ok" : "FAIL");
    ok = ok && r.passed();
  }
  return ok ? 0 : 1;
}

struct ToyOptions {
  std::size_t dim = 10;
  std::uint64_t problem_seed = 7;
  std::string out;
};

int toy_command(const fedcomp::ToyRunConfig& cfg, const ToyOptions& opt) {
  try {
    const auto problem = fedcomp::make_toy_problem(opt.dim, opt.problem_seed);
    const auto trace = fedcomp::run_toy(problem, cfg);
    if (opt.out.empty()) {
      fedcomp::write_trace(std::cout, trace);
    } else {
      std::ofstream os(opt.out);
      fedcomp::write_trace(os, trace);
      if (!os) throw fedcomp::Error("failed to write " + opt.out);
    }
    std::fprintf(stderr, "final grad_norm_sq %.6e\n", trace.back().grad_norm_sq.value_or(0.0));
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated compositional AUC maximization simulator"};
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "run an experiment and write trace CSVs");
  std::optional<std::string> config_path;
  std::optional<std::string> algo, out;
  std::optional<std::size_t> devices, period, repeats;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> sets;
  run->add_option("--config", config_path, "key = value config file");
  run->add_option("--algo", algo, "comma-separated: localscgdam, localsgdm, localsgdam, coda");
  run->add_option("--devices", devices, "number of devices K");
  run->add_option("--period", period, "communication period p");
  run->add_option("--seed", seed, "first master seed");
  run->add_option("--repeats", repeats, "number of consecutive seeds");
  run->add_option("--out", out, "output directory");
  run->add_option("--set", sets, "extra key=value override (repeatable)");

  auto* grad = app.add_subcommand("gradcheck", "finite-difference checks of every gradient oracle");
  std::uint64_t grad_seed = 1;
  int instances = 30;
  grad->add_option("--seed", grad_seed);
  grad->add_option("--instances", instances)->check(CLI::PositiveNumber);

  auto* toy = app.add_subcommand("toy", "LocalSCGDAM on the closed-form toy problem");
  fedcomp::ToyRunConfig toy_cfg;
  ToyOptions toy_opt;
  toy->add_option("--devices", toy_cfg.devices)->check(CLI::PositiveNumber);
  toy->add_option("--period", toy_cfg.period)->check(CLI::PositiveNumber);
  toy->add_option("--iterations", toy_cfg.iterations)->check(CLI::PositiveNumber);
  toy->add_option("--eval-every", toy_cfg.eval_every)->check(CLI::PositiveNumber);
  toy->add_option("--sigma", toy_cfg.sigma, "additive oracle noise (0 = full batch)");
  toy->add_option("--offset-scale", toy_cfg.offset_scale, "device heterogeneity scale");
  toy->add_option("--seed", toy_cfg.master_seed);
  toy->add_option("--dim", toy_opt.dim)->check(CLI::PositiveNumber);
  toy->add_option("--problem-seed", toy_opt.problem_seed);
  toy->add_flag("--decay", toy_cfg.decay, "apply the step-decay schedule");
  toy->add_option("--out", toy_opt.out, "trace CSV path (default stdout)");

  CLI11_PARSE(app, argc, argv);

  if (*run) {
    fedcomp::KeyValues overrides;
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) {
        std::cerr << "--set expects key=value, got '" << s << "'\n";
        return 2;
      }
      overrides.emplace_back(s.substr(0, eq), s.substr(eq + 1));
    }
    if (algo) overrides.emplace_back("algo", *algo);
    if (devices) overrides.emplace_back("devices", std::to_string(*devices));
    if (period) overrides.emplace_back("period", std::to_string(*period));
    if (seed) overrides.emplace_back("seed", std::to_string(*seed));
    if (repeats) overrides.emplace_back("repeats", std::to_string(*repeats));
    if (out) overrides.emplace_back("out", *out);
    return run_command(config_path, overrides);
  }
  if (*grad) return gradcheck_command(grad_seed, instances);
  if (*toy) return toy_command(toy_cfg, toy_opt);
  return 0;
}
