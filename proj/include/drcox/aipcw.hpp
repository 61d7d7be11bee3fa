#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "drcox/data.hpp"
#include "drcox/nuisance.hpp"
#include "drcox/solver.hpp"
#include "drcox/step_curve.hpp"

namespace drcox {

/// Observed times, nuisance jump times and tau, sorted and distinct.
struct TimeGrid {
  std::vector<double> points;
  std::size_t size() const { return points.size(); }
};

TimeGrid build_grid(const Dataset& data, const CrossFitBundle& bundle);

/// Every per-grid-point quantity of one subject. Continuous nuisance curves
/// are read as right-continuous steps on the grid: the value left of g_k is
/// the value right of g_{k-1}, and 1 before the first grid point.
struct SubjectDetail {
  std::vector<double> dn;          // failure jump
  std::vector<double> dnc;         // censoring jump (includes X = tau, delta = 0)
  std::vector<double> at_risk;     // I(X >= t)
  std::vector<double> censor_risk; // I(X > t) + dnc: at risk of being censored at t
  std::vector<double> s_left, s_right;
  std::vector<double> sc_left, sc_right;
  std::vector<double> dlambda_c;   // (sc_left - sc_right) / sc_left
  std::vector<double> dmc;         // dnc - censor_risk * dlambda_c
  std::vector<double> j;           // sum over u < t of dmc / (s_right sc_right)
  std::vector<double> dn_aug;      // dn / sc_left - j (s_right - s_left)
  std::vector<double> weight;      // at_risk / sc_left + j s_left
  std::size_t trimmed = 0;         // predictions raised to the floor
};

SubjectDetail subject_detail(const Dataset& data, std::size_t i,
                             const ConditionalSurvivalModel& failure,
                             const ConditionalSurvivalModel& censoring, const TimeGrid& grid);

/// Dense augmented increments and risk weights for all subjects, with the
/// group sums the estimating equation needs.
class AipcwProcesses {
 public:
  std::size_t size() const { return n_; }
  std::size_t grid_size() const { return grid_.size(); }
  const TimeGrid& grid() const { return grid_; }
  bool group(std::size_t i) const { return group_[i] != 0; }

  std::span<const double> dn_aug(std::size_t i) const {
    return {dn_aug_.data() + i * grid_.size(), grid_.size()};
  }
  std::span<const double> weight(std::size_t i) const {
    return {weight_.data() + i * grid_.size(), grid_.size()};
  }

  // Per grid point sums over subjects.
  const std::vector<double>& weight_sum(int a) const { return weight_sum_[a]; }
  const std::vector<double>& event_sum() const { return event_sum_; }
  const std::vector<double>& event_sum_treated() const { return event_sum_treated_; }

  double min_censoring_survival_at_events() const { return min_sc_events_; }
  double trimmed_share() const { return trimmed_share_; }

 private:
  friend AipcwProcesses build_processes(const Dataset&, const CrossFitBundle&, const TimeGrid&);

  std::size_t n_ = 0;
  TimeGrid grid_;
  std::vector<char> group_;
  std::vector<double> dn_aug_;
  std::vector<double> weight_;
  std::vector<double> weight_sum_[2];
  std::vector<double> event_sum_;
  std::vector<double> event_sum_treated_;
  double min_sc_events_ = 1.0;
  double trimmed_share_ = 0.0;
};

AipcwProcesses build_processes(const Dataset& data, const CrossFitBundle& bundle,
                               const TimeGrid& grid);

struct RiskAggregates {
  std::vector<double> s0, s1, abar, v;
};

RiskAggregates risk_aggregates(double beta, const AipcwProcesses& proc);

double aipcw_score(double beta, const AipcwProcesses& proc);
double aipcw_score_derivative(double beta, const AipcwProcesses& proc);
/// Cumulative baseline hazard at beta; increments may be negative.
StepCurve aipcw_baseline(double beta, const AipcwProcesses& proc);

struct AipcwVariance {
  double nu = 0.0;
  double k = 0.0;
  double se = 0.0;
  std::vector<double> psi;  // per-subject influence terms
};

AipcwVariance aipcw_variance(double beta, const AipcwProcesses& proc);

struct AipcwDiagnostics {
  double min_censoring_survival = 1.0;  // at observed failures
  double trimmed_share = 0.0;
  std::size_t baseline_decreases = 0;
  bool used_bisection = false;
  double score_at_root = 0.0;
};

struct AipcwFit {
  double beta_hat = 0.0;
  double se = 0.0;
  StepCurve baseline;
  int iterations = 0;
  bool converged = false;
  AipcwDiagnostics diagnostics;
};

AipcwFit solve_aipcw(const AipcwProcesses& proc, const RootPolicy& policy = {});
AipcwFit solve_aipcw(const Dataset& data, const CrossFitBundle& bundle,
                     const RootPolicy& policy = {});

struct AipcwSettings {
  NuisanceSpec failure = NuisanceSpec::cox();
  NuisanceSpec censoring = NuisanceSpec::cox();
  std::size_t folds = 5;  // 1 fits the nuisances in-sample
};

/// Fits the nuisances (cross-fitted unless folds == 1) and solves.
AipcwFit estimate_aipcw(const Dataset& data, const AipcwSettings& settings, std::uint64_t seed);

struct BootstrapResult {
  double se = 0.0;
  std::size_t failures = 0;
  std::vector<double> estimates;
};

/// Nonparametric bootstrap over subjects; nuisances and folds are refit on
/// each resample. Throws when more than 10% of resamples fail.
BootstrapResult bootstrap_se(const Dataset& data, const AipcwSettings& settings, std::size_t b,
                             std::uint64_t seed);

}  // namespace drcox
