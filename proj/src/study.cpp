#include "drcox/study.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include <fmt/format.h>
#include <json.hpp>

#include "drcox/ipcw.hpp"
#include "drcox/rng.hpp"
#include "drcox/survival.hpp"

namespace drcox {

namespace {

std::uint64_t fnv1a(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::optional<NuisanceChoice> parse_choice(const std::string& token) {
  if (token == "cox") return NuisanceChoice::cox;
  if (token == "rsf") return NuisanceChoice::rsf;
  if (token == "km") return NuisanceChoice::km;
  if (token == "km-a") return NuisanceChoice::km_a;
  if (token == "oracle") return NuisanceChoice::oracle;
  if (token == "exp") return NuisanceChoice::exp;
  if (token == "unit") return NuisanceChoice::unit;
  return std::nullopt;
}

}  // namespace

EstimatorSpec parse_estimator(const std::string& name) {
  EstimatorSpec spec;
  spec.name = name;
  if (name == "mple") {
    spec.kind = EstimatorKind::mple;
    return spec;
  }
  if (name == "full") {
    spec.kind = EstimatorKind::full;
    return spec;
  }
  if (name.rfind("ipcw-", 0) == 0) {
    spec.kind = EstimatorKind::ipcw;
    const std::string rest = name.substr(5);
    if (rest == "1") {
      spec.censoring = NuisanceChoice::km;
      return spec;
    }
    if (rest == "a") {
      spec.censoring = NuisanceChoice::km_a;
      return spec;
    }
    if (auto c = parse_choice(rest)) {
      spec.censoring = *c;
      return spec;
    }
  }
  if (name.rfind("aipcw-", 0) == 0) {
    spec.kind = EstimatorKind::aipcw;
    const std::string rest = name.substr(6);
    for (std::size_t cut = rest.find('-'); cut != std::string::npos;
         cut = rest.find('-', cut + 1)) {
      auto f = parse_choice(rest.substr(0, cut));
      auto c = parse_choice(rest.substr(cut + 1));
      if (f && c) {
        spec.failure = *f;
        spec.censoring = *c;
        return spec;
      }
    }
  }
  throw ValidationError(fmt::format(
      "unknown estimator '{}' (expected mple, full, ipcw-<1|a|cox|rsf|...> or "
      "aipcw-<S>-<Sc> with S, Sc in cox, rsf, km, km-a, oracle, exp, unit)",
      name));
}

std::vector<EstimatorSpec> parse_estimator_list(const std::string& comma_list) {
  std::vector<EstimatorSpec> out;
  std::stringstream ss(comma_list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    if (!item.empty()) out.push_back(parse_estimator(item));
  }
  if (out.empty()) throw ValidationError("estimator list is empty");
  return out;
}

NuisanceSpec resolve_nuisance(NuisanceChoice choice, Target target, const FitOptions& options) {
  switch (choice) {
    case NuisanceChoice::cox: return NuisanceSpec::cox(options.trim);
    case NuisanceChoice::rsf: return NuisanceSpec::random_forest(options.forest, options.trim);
    case NuisanceChoice::km: return NuisanceSpec::product_limit(false, options.trim);
    case NuisanceChoice::km_a: return NuisanceSpec::product_limit(true, options.trim);
    case NuisanceChoice::exp: {
      OracleParams p;
      p.curve = OracleCurve::exponential;
      p.rate = 1.0;
      return NuisanceSpec::oracle_curve(p, options.trim);
    }
    case NuisanceChoice::unit: return NuisanceSpec::oracle_curve(OracleParams{}, options.trim);
    case NuisanceChoice::oracle: {
      if (!options.scenario) {
        throw ValidationError("oracle nuisances are only available in simulation studies");
      }
      OracleParams p;
      p.beta = options.beta_true;
      if (target == Target::failure) {
        p.curve = *options.scenario == Scenario::custom_independent ? OracleCurve::exponential_ph
                                                                    : OracleCurve::latent_failure;
      } else {
        p.curve = *options.scenario == Scenario::two ? OracleCurve::scenario2_censoring
                                                      : OracleCurve::scenario1_censoring;
      }
      return NuisanceSpec::oracle_curve(p, options.trim);
    }
  }
  throw ValidationError("unknown nuisance choice");
}

EstimateResult run_estimator(const EstimatorSpec& spec, const Dataset& observed,
                             const Dataset* full, const FitOptions& options) {
  EstimateResult out;
  out.estimator = spec.name;
  if (spec.kind == EstimatorKind::full && full == nullptr) {
    throw ValidationError("the full-data benchmark needs simulated data");
  }
  NuisanceSpec failure_spec;
  NuisanceSpec censoring_spec;
  if (spec.kind == EstimatorKind::aipcw) {
    failure_spec = resolve_nuisance(spec.failure, Target::failure, options);
  }
  if (spec.kind == EstimatorKind::aipcw || spec.kind == EstimatorKind::ipcw) {
    censoring_spec = resolve_nuisance(spec.censoring, Target::censoring, options);
  }
  const std::uint64_t seed = derive_seed(options.seed, {fnv1a(spec.name)});

  try {
    switch (spec.kind) {
      case EstimatorKind::mple:
      case EstimatorKind::full: {
        const Dataset& data = spec.kind == EstimatorKind::full ? *full : observed;
        const auto fit = cox_mple(data, CoxDesign::group_only());
        out.beta = fit.beta[0];
        out.iterations = fit.iterations;
        out.converged = fit.converged;
        if (fit.converged) out.se = fit.model_se()[0];
        break;
      }
      case EstimatorKind::ipcw: {
        censoring_spec.forest.seed = seed;
        const auto model = fit_conditional(censoring_spec, observed, Target::censoring);
        const auto fit = solve_ipcw(observed, *model);
        out.beta = fit.beta_hat;
        out.se = fit.se;
        out.iterations = fit.iterations;
        out.converged = fit.converged;
        out.min_censoring_survival = fit.min_censoring_survival;
        break;
      }
      case EstimatorKind::aipcw: {
        AipcwSettings settings;
        settings.failure = failure_spec;
        settings.censoring = censoring_spec;
        settings.folds = options.folds;
        const auto fit = estimate_aipcw(observed, settings, seed);
        out.beta = fit.beta_hat;
        out.se = fit.se;
        out.iterations = fit.iterations;
        out.converged = fit.converged;
        out.min_censoring_survival = fit.diagnostics.min_censoring_survival;
        out.trimmed_share = fit.diagnostics.trimmed_share;
        break;
      }
    }
  } catch (const ValidationError& e) {
    out.converged = false;
    out.message = e.what();
  } catch (const ConvergenceError& e) {
    out.converged = false;
    out.message = e.what();
  }
  if (out.converged && !(std::isfinite(out.beta) && std::isfinite(out.se) && out.se > 0.0)) {
    out.converged = false;
    if (out.message.empty()) out.message = "non-finite estimate or standard error";
  }
  if (!out.converged && out.message.empty()) out.message = "solver did not converge";
  return out;
}

// ---------------------------------------------------------------------------

void StudyConfig::validate() const {
  scenario.validate();
  if (replications < 1) throw ValidationError("replications must be at least 1");
  if (folds < 1) throw ValidationError("folds must be at least 1");
  if (!(trim > 0.0 && trim < 1.0)) {
    throw ValidationError(fmt::format("trim must lie in (0, 1), got {}", trim));
  }
  if (threads < 1) throw ValidationError("threads must be at least 1");
  forest.validate();
  if (estimators.empty()) throw ValidationError("estimators: list is empty");
  for (const auto& e : estimators) parse_estimator(e);
}

std::string StudyConfig::to_json() const {
  nlohmann::ordered_json j;
  j["scenario"] = scenario_name(scenario.scenario);
  j["n"] = scenario.n;
  j["tau"] = scenario.tau;
  j["beta_true"] = scenario.beta_true;
  j["seed"] = scenario.seed;
  j["replications"] = replications;
  j["folds"] = folds;
  j["trim"] = trim;
  j["forest"] = {{"n_trees", forest.n_trees},
                 {"mtry", forest.mtry},
                 {"min_node_size", forest.min_node_size},
                 {"bootstrap", forest.bootstrap}};
  j["estimators"] = estimators;
  return j.dump();
}

namespace {

template <typename T>
T field(const nlohmann::json& j, const char* name, const char* expected) {
  try {
    return j.at(name).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ValidationError(fmt::format("config field '{}': expected {}", name, expected));
  }
}

std::size_t count_field(const nlohmann::json& j, const char* name) {
  const auto& v = j.at(name);
  if (!v.is_number_integer() || v.get<long long>() < 0) {
    throw ValidationError(
        fmt::format("config field '{}': expected a nonnegative integer", name));
  }
  return v.get<std::size_t>();
}

}  // namespace

StudyConfig StudyConfig::from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(fmt::format("config is not valid JSON: {}", e.what()));
  }
  if (!j.is_object()) throw ValidationError("config must be a JSON object");
  static const std::vector<std::string> known = {
      "scenario", "n",     "tau",    "beta_true",  "seed",   "replications",
      "folds",    "trim",  "forest", "estimators", "threads"};
  for (const auto& [key, value] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw ValidationError(fmt::format("config field '{}': unknown field", key));
    }
  }
  StudyConfig c;
  if (j.contains("scenario")) {
    c.scenario.scenario = parse_scenario(field<std::string>(j, "scenario", "a string"));
  }
  if (j.contains("n")) c.scenario.n = count_field(j, "n");
  if (j.contains("tau")) c.scenario.tau = field<double>(j, "tau", "a number");
  if (j.contains("beta_true")) c.scenario.beta_true = field<double>(j, "beta_true", "a number");
  if (j.contains("seed")) c.scenario.seed = count_field(j, "seed");
  if (j.contains("replications")) c.replications = count_field(j, "replications");
  if (j.contains("folds")) c.folds = count_field(j, "folds");
  if (j.contains("trim")) c.trim = field<double>(j, "trim", "a number");
  if (j.contains("threads")) c.threads = count_field(j, "threads");
  if (j.contains("forest")) {
    const auto& f = j.at("forest");
    if (!f.is_object()) throw ValidationError("config field 'forest': expected an object");
    for (const auto& [key, value] : f.items()) {
      if (key == "n_trees") {
        c.forest.n_trees = static_cast<int>(count_field(f, "n_trees"));
      } else if (key == "mtry") {
        c.forest.mtry = static_cast<int>(count_field(f, "mtry"));
      } else if (key == "min_node_size") {
        c.forest.min_node_size = static_cast<int>(count_field(f, "min_node_size"));
      } else if (key == "bootstrap") {
        c.forest.bootstrap = field<bool>(f, "bootstrap", "a boolean");
      } else {
        throw ValidationError(fmt::format("config field 'forest.{}': unknown field", key));
      }
    }
  }
  if (j.contains("estimators")) {
    const auto& e = j.at("estimators");
    if (e.is_string()) {
      for (const auto& spec : parse_estimator_list(e.get<std::string>())) {
        c.estimators.push_back(spec.name);
      }
    } else {
      c.estimators = field<std::vector<std::string>>(j, "estimators", "a list of names");
    }
  }
  c.validate();
  return c;
}

StudyConfig StudyConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError(fmt::format("cannot read config '{}'", path));
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

std::uint64_t config_hash(const StudyConfig& config) { return fnv1a(config.to_json()); }

// ---------------------------------------------------------------------------

double SimulationReport::cp_margin() const {
  if (replications == 0) return 0.0;
  return 1.96 * std::sqrt(0.95 * 0.05 / static_cast<double>(replications));
}

std::string SimulationReport::to_csv() const {
  std::string out = "estimator,bias,sd,se,cp,n_fail\n";
  for (const auto& r : rows) {
    out += fmt::format("{},{:.6f},{},{:.6f},{:.4f},{}\n", r.estimator, r.bias,
                       r.sd ? fmt::format("{:.6f}", *r.sd) : std::string(), r.se, r.cp,
                       r.n_fail);
  }
  return out;
}

std::string SimulationReport::to_table() const {
  std::size_t width = 9;
  for (const auto& r : rows) width = std::max(width, r.estimator.size());
  std::string out = fmt::format("{:<{}}  {:>8}  {:>8}  {:>8}  {:>6}  {:>6}\n", "estimator",
                                width, "bias", "sd", "se", "cp", "n_fail");
  for (const auto& r : rows) {
    out += fmt::format("{:<{}}  {:>8.4f}  {:>8}  {:>8.4f}  {:>6.3f}  {:>6}\n", r.estimator,
                       width, r.bias, r.sd ? fmt::format("{:.4f}", *r.sd) : std::string("-"),
                       r.se, r.cp, r.n_fail);
  }
  out += fmt::format("replications: {}, beta: {}, CP margin of error: +/-{:.4f}\n",
                     replications, beta_true, cp_margin());
  return out;
}

const ReportRow& SimulationReport::row(const std::string& estimator) const {
  for (const auto& r : rows) {
    if (r.estimator == estimator) return r;
  }
  throw ValidationError(fmt::format("report has no row '{}'", estimator));
}

SimulationReport parse_report_csv(const std::string& text) {
  std::stringstream ss(text);
  std::string line;
  if (!std::getline(ss, line) || line != "estimator,bias,sd,se,cp,n_fail") {
    throw ValidationError("report CSV: unexpected header");
  }
  SimulationReport report;
  std::size_t line_no = 1;
  while (std::getline(ss, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (line.back() == ',') cells.emplace_back();
    if (cells.size() != 6) {
      throw ValidationError(fmt::format("report CSV line {}: expected 6 fields", line_no));
    }
    try {
      ReportRow r;
      r.estimator = cells[0];
      r.bias = std::stod(cells[1]);
      if (!cells[2].empty()) r.sd = std::stod(cells[2]);
      r.se = std::stod(cells[3]);
      r.cp = std::stod(cells[4]);
      r.n_fail = std::stoul(cells[5]);
      report.rows.push_back(r);
    } catch (const std::logic_error&) {
      throw ValidationError(fmt::format("report CSV line {}: malformed number", line_no));
    }
  }
  return report;
}

ReplicationResults run_replications(const StudyConfig& config, std::size_t threads) {
  config.validate();
  std::vector<EstimatorSpec> specs;
  for (const auto& e : config.estimators) specs.push_back(parse_estimator(e));

  ReplicationResults results(config.replications);
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;

  auto worker = [&] {
    for (;;) {
      const std::size_t r = next.fetch_add(1);
      if (r >= config.replications) return;
      try {
        ScenarioSpec s = config.scenario;
        s.seed = config.scenario.seed + r;
        const auto data = generate(s);
        FitOptions options;
        options.folds = config.folds;
        options.trim = config.trim;
        options.forest = config.forest;
        options.seed = derive_seed(s.seed, {1});
        options.scenario = s.scenario;
        options.beta_true = s.beta_true;
        auto& row = results[r];
        for (const auto& spec : specs) {
          row.push_back(run_estimator(spec, data.observed, &data.full, options));
        }
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
        next.store(config.replications);
        return;
      }
    }
  };

  const std::size_t workers = std::max<std::size_t>(1, std::min(threads, config.replications));
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < workers; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (error) std::rethrow_exception(error);
  return results;
}

SimulationReport summarize(const StudyConfig& config, const ReplicationResults& results) {
  SimulationReport report;
  report.replications = results.size();
  report.beta_true = config.scenario.beta_true;
  const double beta = config.scenario.beta_true;
  for (std::size_t j = 0; j < config.estimators.size(); ++j) {
    ReportRow row;
    row.estimator = config.estimators[j];
    std::vector<double> est;
    double se_sum = 0.0;
    std::size_t covered = 0;
    for (const auto& rep : results) {
      const auto& e = rep.at(j);
      if (!e.converged) {
        ++row.n_fail;
        continue;
      }
      est.push_back(e.beta);
      se_sum += e.se;
      if (std::abs(e.beta - beta) <= 1.96 * e.se) ++covered;
    }
    if (est.empty()) {
      throw ConvergenceError(fmt::format("estimator '{}' failed in all {} replications",
                                         row.estimator, results.size()));
    }
    row.n_ok = est.size();
    const double m = static_cast<double>(est.size());
    double mean = 0.0;
    for (double x : est) mean += x;
    mean /= m;
    row.bias = mean - beta;
    if (est.size() >= 2) {
      double ss = 0.0;
      for (double x : est) ss += (x - mean) * (x - mean);
      row.sd = std::sqrt(ss / (m - 1.0));
    }
    row.se = se_sum / m;
    row.cp = static_cast<double>(covered) / m;
    report.rows.push_back(row);
  }
  return report;
}

SimulationReport run_study(const StudyConfig& config) {
  const auto start = std::chrono::steady_clock::now();
  auto report = summarize(config, run_replications(config, config.threads));
  report.runtime_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

}  // namespace drcox
