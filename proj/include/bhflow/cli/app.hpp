#pragma once

// Argument handling and the exit-code contract:
//   0 success, 1 config/input, 2 solver/domain, 3 I/O, 4 verify failure.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "bhflow/cli/commands.hpp"

namespace bhflow::cli {

struct Invocation {
  std::string command;
  std::string config;
  std::string out;
  std::string beta;
  std::optional<int> threads;
  std::optional<std::uint64_t> seed;
};

inline int dispatch(const Invocation& inv, std::ostream& log, std::ostream& err) {
  ExperimentConfig cfg = load_config(inv.config);
  if (inv.seed) cfg.inverse.seed = cfg.verify.seed = *inv.seed;
  if (inv.threads) cfg.threads = *inv.threads;
  set_threads(cfg.threads);
  const fs::path out = inv.out.empty() ? cfg.resolve(cfg.output) : fs::path(inv.out);
  const Experiment ex = build_experiment(cfg);

  int code = kOk;
  if (inv.command == "forward") {
    code = cmd_forward(ex, out);
  } else if (inv.command == "flow-match") {
    fs::path beta = inv.beta;
    if (beta.empty() && !cfg.flow_match_beta.empty()) beta = cfg.resolve(cfg.flow_match_beta);
    code = cmd_flow_match(ex, beta, out);
  } else if (inv.command == "invert") {
    code = cmd_invert(ex, out);
  } else if (inv.command == "sweep-lambda") {
    code = cmd_sweep_lambda(ex, out);
  } else if (inv.command == "noise-study") {
    code = cmd_noise_study(ex, out);
  } else if (inv.command == "verify") {
    code = cmd_verify(ex, out, &log);
    if (code != kOk) {
      const Json card = read_json(out / "scorecard.json");
      err << "verify: failed checks:";
      for (const auto& n : card["failed"]) err << ' ' << n.get<std::string>();
      err << '\n';
    }
  }
  log << inv.command << ": wrote " << out.string() << '\n';
  return code;
}

/// Parses argv and runs one subcommand; every error is reported on `err`
/// and mapped to its exit code.
inline int run(int argc, const char* const* argv, std::ostream& log = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Transport-geometry experiments on densities: forward, flow-match, invert, verify"};
  app.require_subcommand(1);
  Invocation inv;
  auto add = [&](const char* name, const char* help) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", inv.config, "experiment config (YAML)")->required();
    sub->add_option("--out", inv.out, "output directory (default: the config's output key)");
    sub->add_option("--threads", inv.threads, "worker threads")->check(CLI::PositiveNumber);
    sub->add_option("--seed", inv.seed, "overrides inverse.seed and verify.seed");
    sub->callback([&inv, name] { inv.command = name; });
    return sub;
  };
  add("forward", "densities, velocities, energies and continuity residuals along the path");
  add("flow-match", "flow-matching loss of a candidate coefficient rate")
      ->add_option("--beta", inv.beta, "candidate CSV: t, beta_1..beta_m");
  add("invert", "recover a coefficient path from observed feature means");
  add("verify", "run the property battery and write a scorecard");
  add("sweep-lambda", "solve the inverse problem for each inverse.lambdas value");
  add("noise-study", "error against data residual over inverse.sigmas x inverse.seeds");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, log, err);
    return code == 0 ? kOk : kConfig;
  }

  try {
    return dispatch(inv, log, err);
  } catch (const IoError& e) {
    err << "error: " << e.what() << '\n';
    return kIo;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kConfig;
  } catch (const InputError& e) {
    err << "error: " << e.what() << '\n';
    return kConfig;
  } catch (const ShapeError& e) {
    err << "error: " << e.what() << '\n';
    return kConfig;
  } catch (const ConvergenceError& e) {
    err << "error: " << e.what() << " (residual " << e.residual() << " after " << e.iterations() << " iterations)\n";
    return kSolver;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kSolver;
  }
}

}  // namespace bhflow::cli
