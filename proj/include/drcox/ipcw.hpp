#pragma once

#include <cstddef>
#include <vector>

#include "drcox/data.hpp"
#include "drcox/nuisance.hpp"
#include "drcox/solver.hpp"

namespace drcox {

struct IpcwFit {
  double beta_hat = 0.0;
  double se = 0.0;
  int iterations = 0;
  bool converged = false;
  double min_censoring_survival = 1.0;  // over observed failures
  double max_censoring_survival = 1.0;
};

/// Inverse-censoring weights of the IPCW partial likelihood, evaluated once:
/// w_j(t) = 1 / S_c(t | A_j, Z_j) at each distinct failure time t <= X_j.
class IpcwTerms {
 public:
  IpcwTerms(const Dataset& data, const ConditionalSurvivalModel& censoring);

  /// (1/n) sum_i int w_i(t) {A_i - S1/S0} dN_i(t).
  double score(double beta) const;
  double score_derivative(double beta) const;
  /// Per-subject weighted score residuals at beta (weights treated as fixed).
  std::vector<double> residuals(double beta) const;

  std::size_t size() const { return n_; }
  double min_event_survival() const { return min_event_sc_; }
  double max_event_survival() const { return max_event_sc_; }

 private:
  std::size_t n_ = 0;
  std::vector<double> event_times_;
  std::vector<double> weighted_events_[2];  // per time, by group
  std::vector<double> risk_weight_[2];      // per time, by group
  std::vector<std::vector<double>> weights_;  // per subject, over times <= X
  std::vector<char> group_;
  std::vector<long> own_event_;  // index of the subject's failure time or -1
  double min_event_sc_ = 1.0;
  double max_event_sc_ = 1.0;
};

double ipcw_score(double beta, const Dataset& data, const ConditionalSurvivalModel& censoring);

IpcwFit solve_ipcw(const Dataset& data, const ConditionalSurvivalModel& censoring,
                   const RootPolicy& policy = {});

/// sqrt(sum_i u_i^2) / I, with I = -d/dbeta of the summed score at beta_hat.
double ipcw_sandwich_se(const IpcwFit& fit, const Dataset& data,
                        const ConditionalSurvivalModel& censoring);

}  // namespace drcox
