#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "drcox/aipcw.hpp"
#include "drcox/data.hpp"
#include "drcox/forest.hpp"
#include "drcox/nuisance.hpp"
#include "drcox/sim.hpp"

namespace drcox {

enum class EstimatorKind { mple, full, ipcw, aipcw };

/// Nuisance token of an estimator name: cox, rsf, km, km-a, oracle, exp, unit.
enum class NuisanceChoice { cox, rsf, km, km_a, oracle, exp, unit };

/// Parsed estimator name, e.g. "mple", "ipcw-a", "aipcw-rsf-cox".
struct EstimatorSpec {
  EstimatorKind kind = EstimatorKind::mple;
  NuisanceChoice failure = NuisanceChoice::cox;
  NuisanceChoice censoring = NuisanceChoice::cox;
  std::string name;
};

EstimatorSpec parse_estimator(const std::string& name);
std::vector<EstimatorSpec> parse_estimator_list(const std::string& comma_list);

/// Settings shared by every estimator of a run.
struct FitOptions {
  std::size_t folds = 5;
  double trim = 0.01;
  ForestParams forest;
  std::uint64_t seed = 1;
  /// Needed to resolve oracle nuisances; absent for user data.
  std::optional<Scenario> scenario;
  double beta_true = -1.0;
};

NuisanceSpec resolve_nuisance(NuisanceChoice choice, Target target, const FitOptions& options);

struct EstimateResult {
  std::string estimator;
  double beta = 0.0;
  double se = 0.0;
  bool converged = false;
  int iterations = 0;
  std::string message;
  // Weight diagnostics; 1 and 0 when no weights are involved.
  double min_censoring_survival = 1.0;
  double trimmed_share = 0.0;
};

/// Runs one estimator. `full` is the uncensored shadow and is required by
/// the full-data benchmark only. Estimation failures are returned with
/// converged = false; invalid requests throw ValidationError.
EstimateResult run_estimator(const EstimatorSpec& spec, const Dataset& observed,
                             const Dataset* full, const FitOptions& options);

struct StudyConfig {
  ScenarioSpec scenario;  // seed field is the base seed
  std::size_t replications = 100;
  std::size_t folds = 5;
  double trim = 0.01;
  ForestParams forest;
  std::vector<std::string> estimators;
  std::size_t threads = 1;

  void validate() const;
  /// Canonical JSON (threads omitted, so it does not affect the hash).
  std::string to_json() const;
  static StudyConfig from_json(const std::string& text);
  static StudyConfig load(const std::string& path);
};

/// FNV-1a over the canonical JSON.
std::uint64_t config_hash(const StudyConfig& config);

struct ReportRow {
  std::string estimator;
  double bias = 0.0;
  std::optional<double> sd;
  double se = 0.0;
  double cp = 0.0;
  std::size_t n_fail = 0;
  std::size_t n_ok = 0;
};

struct SimulationReport {
  std::vector<ReportRow> rows;
  std::size_t replications = 0;
  double beta_true = -1.0;
  double runtime_seconds = 0.0;

  /// Half-width of a 95% interval for a CP estimated at 0.95.
  double cp_margin() const;
  std::string to_csv() const;
  std::string to_table() const;
  const ReportRow& row(const std::string& estimator) const;
};

SimulationReport parse_report_csv(const std::string& text);

/// Per-replication estimates, [replication][estimator].
using ReplicationResults = std::vector<std::vector<EstimateResult>>;

/// Replication r uses seed base + r; results do not depend on `threads`.
ReplicationResults run_replications(const StudyConfig& config, std::size_t threads);
SimulationReport summarize(const StudyConfig& config, const ReplicationResults& results);
SimulationReport run_study(const StudyConfig& config);

}  // namespace drcox
