#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "drcox/data.hpp"
#include "drcox/sim.hpp"
#include "drcox/study.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kValidation = 2;
constexpr int kNonConvergence = 3;

struct FitArgs {
  std::string input;
  std::string output;
  std::string estimators = "mple,ipcw-cox,aipcw-cox-cox";
  std::size_t folds = 5;
  std::uint64_t seed = 1;
  double trim = 0.01;
  double tau = 0.0;
  int trees = 250;
};

struct SimulateArgs {
  std::string config;
  std::string output = "report.csv";
  std::string estimators;
  std::size_t folds = 5;
  std::uint64_t seed = 1;
  double trim = 0.01;
  std::size_t threads = 1;
};

struct GenerateArgs {
  std::string scenario = "one";
  std::size_t n = 1000;
  std::uint64_t seed = 1;
  double tau = 1.0;
  double beta = -1.0;
  std::string output;
};

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw drcox::ValidationError(fmt::format("cannot write '{}'", path));
  out << text;
}

std::string table_path(const std::string& csv_path) {
  const auto dot = csv_path.rfind('.');
  const auto slash = csv_path.find_last_of('/');
  if (dot != std::string::npos && (slash == std::string::npos || dot > slash)) {
    return csv_path.substr(0, dot) + ".txt";
  }
  return csv_path + ".txt";
}

int run_fit(const FitArgs& args) {
  const auto data = drcox::read_csv(args.input, args.tau);
  const auto specs = drcox::parse_estimator_list(args.estimators);
  drcox::FitOptions options;
  options.folds = args.folds;
  options.trim = args.trim;
  options.seed = args.seed;
  options.forest.n_trees = args.trees;
  options.forest.validate();

  fmt::print("n = {}, p = {}, tau = {}, failures = {}, seed = {}\n", data.size(), data.dim(),
             data.tau(), data.event_count(drcox::Target::failure), args.seed);
  fmt::print("{:<16} {:>10} {:>9} {:>10} {:>10} {:>9} {:>6} {:>8}\n", "estimator", "beta",
             "se", "ci_lower", "ci_upper", "hr", "iter", "min_Sc");
  std::string csv = "estimator,beta,se,ci_lower,ci_upper,hr,converged,iterations,min_sc,trimmed\n";
  bool failed = false;
  for (const auto& spec : specs) {
    const auto r = drcox::run_estimator(spec, data, nullptr, options);
    const double lo = r.beta - 1.96 * r.se;
    const double hi = r.beta + 1.96 * r.se;
    if (r.converged) {
      fmt::print("{:<16} {:>10.6f} {:>9.6f} {:>10.6f} {:>10.6f} {:>9.6f} {:>6} {:>8.4f}\n",
                 r.estimator, r.beta, r.se, lo, hi, std::exp(r.beta), r.iterations,
                 r.min_censoring_survival);
    } else {
      failed = true;
      fmt::print("{:<16} did not converge: {}\n", r.estimator, r.message);
    }
    csv += fmt::format("{},{:.10g},{:.10g},{:.10g},{:.10g},{:.10g},{},{},{:.10g},{:.10g}\n",
                       r.estimator, r.beta, r.se, lo, hi, std::exp(r.beta),
                       r.converged ? 1 : 0, r.iterations, r.min_censoring_survival,
                       r.trimmed_share);
  }
  if (!args.output.empty()) write_file(args.output, csv);
  return failed ? kNonConvergence : kOk;
}

int run_simulate(const SimulateArgs& args, const CLI::App& cmd) {
  auto config = drcox::StudyConfig::load(args.config);
  if (cmd.count("--folds")) config.folds = args.folds;
  if (cmd.count("--seed")) config.scenario.seed = args.seed;
  if (cmd.count("--trim")) config.trim = args.trim;
  if (cmd.count("--threads")) config.threads = args.threads;
  if (cmd.count("--estimators")) {
    config.estimators.clear();
    for (const auto& s : drcox::parse_estimator_list(args.estimators)) {
      config.estimators.push_back(s.name);
    }
  }
  config.validate();
  fmt::print("config hash: {:016x}\nseed: {}\n", drcox::config_hash(config),
             config.scenario.seed);
  const auto report = drcox::run_study(config);
  write_file(args.output, report.to_csv());
  write_file(table_path(args.output), report.to_table());
  fmt::print("{}", report.to_table());
  fmt::print("runtime: {:.1f} s\n", report.runtime_seconds);
  return kOk;
}

int run_generate(const GenerateArgs& args) {
  drcox::ScenarioSpec spec;
  spec.scenario = drcox::parse_scenario(args.scenario);
  spec.n = args.n;
  spec.seed = args.seed;
  spec.tau = args.tau;
  spec.beta_true = args.beta;
  const auto data = drcox::generate(spec).observed;
  if (args.output.empty()) {
    std::cout << drcox::to_csv(data);
  } else {
    drcox::write_csv(data, args.output);
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Doubly robust marginal hazard ratio estimation under informative censoring"};
  app.require_subcommand(1);

  FitArgs fit;
  auto* fit_cmd = app.add_subcommand("fit", "Fit estimators on a CSV dataset");
  fit_cmd->add_option("--input", fit.input, "CSV with columns time,delta,group,z1..zp")
      ->required();
  fit_cmd->add_option("--output", fit.output, "Write per-estimator results as CSV");
  fit_cmd->add_option("--estimators", fit.estimators, "Comma-separated estimator names")
      ->capture_default_str();
  fit_cmd->add_option("--folds", fit.folds, "Cross-fitting folds")->capture_default_str();
  fit_cmd->add_option("--seed", fit.seed, "Seed for folds and forests")->capture_default_str();
  fit_cmd->add_option("--trim", fit.trim, "Floor for predicted survival")->capture_default_str();
  fit_cmd->add_option("--tau", fit.tau, "Maximum follow-up (default: largest time)");
  fit_cmd->add_option("--trees", fit.trees, "Trees per survival forest")->capture_default_str();

  SimulateArgs sim;
  auto* sim_cmd = app.add_subcommand("simulate", "Run a configured simulation study");
  sim_cmd->add_option("--config", sim.config, "Study config (JSON)")->required();
  sim_cmd->add_option("--output", sim.output, "Report CSV; the table goes next to it as .txt")
      ->capture_default_str();
  sim_cmd->add_option("--estimators", sim.estimators, "Override the estimator list");
  sim_cmd->add_option("--folds", sim.folds, "Override cross-fitting folds");
  sim_cmd->add_option("--seed", sim.seed, "Override the base seed");
  sim_cmd->add_option("--trim", sim.trim, "Override the trim floor");
  sim_cmd->add_option("--threads", sim.threads, "Worker threads");

  GenerateArgs gen;
  auto* gen_cmd = app.add_subcommand("generate", "Write one simulated dataset as CSV");
  gen_cmd->add_option("--scenario", gen.scenario, "one, two or custom-independent")
      ->capture_default_str();
  gen_cmd->add_option("--n", gen.n, "Sample size")->capture_default_str();
  gen_cmd->add_option("--seed", gen.seed, "Seed")->capture_default_str();
  gen_cmd->add_option("--tau", gen.tau, "Maximum follow-up")->capture_default_str();
  gen_cmd->add_option("--beta", gen.beta, "True log hazard ratio")->capture_default_str();
  gen_cmd->add_option("--output", gen.output, "Output CSV (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kValidation;
  }

  try {
    if (*fit_cmd) return run_fit(fit);
    if (*sim_cmd) return run_simulate(sim, *sim_cmd);
    if (*gen_cmd) return run_generate(gen);
  } catch (const drcox::ValidationError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kValidation;
  } catch (const drcox::ConvergenceError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kNonConvergence;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kValidation;
  }
  return kOk;
}
