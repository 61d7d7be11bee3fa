#include "drcox/ipcw.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

namespace drcox {

IpcwTerms::IpcwTerms(const Dataset& data, const ConditionalSurvivalModel& censoring)
    : n_(data.size()) {
  for (std::size_t i = 0; i < n_; ++i) {
    if (data.delta(i)) event_times_.push_back(data.time(i));
  }
  std::sort(event_times_.begin(), event_times_.end());
  event_times_.erase(std::unique(event_times_.begin(), event_times_.end()), event_times_.end());
  const std::size_t m = event_times_.size();
  for (int g = 0; g < 2; ++g) {
    weighted_events_[g].assign(m, 0.0);
    risk_weight_[g].assign(m, 0.0);
  }
  weights_.resize(n_);
  group_.resize(n_);
  own_event_.assign(n_, -1);

  std::vector<double> left;
  std::vector<double> right;
  bool first = true;
  for (std::size_t i = 0; i < n_; ++i) {
    const int g = data.group(i) ? 1 : 0;
    group_[i] = static_cast<char>(g);
    const auto at_risk = static_cast<std::size_t>(
        std::upper_bound(event_times_.begin(), event_times_.end(), data.time(i)) -
        event_times_.begin());
    std::span<const double> grid(event_times_.data(), at_risk);
    left.resize(at_risk);
    right.resize(at_risk);
    censoring.predict_on_grid(grid, data.group(i), data.z(i), left, right);
    auto& w = weights_[i];
    w.resize(at_risk);
    for (std::size_t k = 0; k < at_risk; ++k) {
      w[k] = 1.0 / left[k];
      risk_weight_[g][k] += w[k];
    }
    if (data.delta(i)) {
      const std::size_t k = at_risk - 1;
      own_event_[i] = static_cast<long>(k);
      weighted_events_[g][k] += w[k];
      if (first) {
        min_event_sc_ = max_event_sc_ = left[k];
        first = false;
      } else {
        min_event_sc_ = std::min(min_event_sc_, left[k]);
        max_event_sc_ = std::max(max_event_sc_, left[k]);
      }
    }
  }
  for (std::size_t k = 0; k < m; ++k) {
    if (!(risk_weight_[0][k] + risk_weight_[1][k] > 0.0)) {
      throw ValidationError(fmt::format("IPCW: empty weighted risk set at t = {}", event_times_[k]));
    }
  }
}

double IpcwTerms::score(double beta) const {
  const double e = std::exp(beta);
  double u = 0.0;
  for (std::size_t k = 0; k < event_times_.size(); ++k) {
    const double s1 = e * risk_weight_[1][k];
    const double mean = s1 / (s1 + risk_weight_[0][k]);
    u += weighted_events_[1][k] - (weighted_events_[0][k] + weighted_events_[1][k]) * mean;
  }
  return u / static_cast<double>(n_);
}

double IpcwTerms::score_derivative(double beta) const {
  const double e = std::exp(beta);
  double d = 0.0;
  for (std::size_t k = 0; k < event_times_.size(); ++k) {
    const double s1 = e * risk_weight_[1][k];
    const double mean = s1 / (s1 + risk_weight_[0][k]);
    d -= (weighted_events_[0][k] + weighted_events_[1][k]) * mean * (1.0 - mean);
  }
  return d / static_cast<double>(n_);
}

std::vector<double> IpcwTerms::residuals(double beta) const {
  const double e = std::exp(beta);
  const std::size_t m = event_times_.size();
  std::vector<double> mean(m);
  std::vector<double> dlambda(m);
  for (std::size_t k = 0; k < m; ++k) {
    const double s1 = e * risk_weight_[1][k];
    const double s0 = s1 + risk_weight_[0][k];
    mean[k] = s1 / s0;
    dlambda[k] = (weighted_events_[0][k] + weighted_events_[1][k]) / s0;
  }
  std::vector<double> out(n_, 0.0);
  for (std::size_t i = 0; i < n_; ++i) {
    const double a = group_[i] ? 1.0 : 0.0;
    const double risk = group_[i] ? e : 1.0;
    const auto& w = weights_[i];
    double r = 0.0;
    if (own_event_[i] >= 0) {
      const auto k = static_cast<std::size_t>(own_event_[i]);
      r += w[k] * (a - mean[k]);
    }
    for (std::size_t k = 0; k < w.size(); ++k) r -= w[k] * risk * (a - mean[k]) * dlambda[k];
    out[i] = r;
  }
  return out;
}

double ipcw_score(double beta, const Dataset& data, const ConditionalSurvivalModel& censoring) {
  return IpcwTerms(data, censoring).score(beta);
}

namespace {

double sandwich(const IpcwTerms& terms, double beta) {
  const double info = -terms.score_derivative(beta) * static_cast<double>(terms.size());
  if (!(info > 0.0)) throw ValidationError("IPCW sandwich: singular information");
  double meat = 0.0;
  for (double r : terms.residuals(beta)) meat += r * r;
  return std::sqrt(meat) / info;
}

}  // namespace

IpcwFit solve_ipcw(const Dataset& data, const ConditionalSurvivalModel& censoring,
                   const RootPolicy& policy) {
  IpcwTerms terms(data, censoring);
  auto root = solve_decreasing_root([&](double b) { return terms.score(b); },
                                    [&](double b) { return terms.score_derivative(b); }, policy);
  IpcwFit fit;
  fit.beta_hat = root.root;
  fit.iterations = root.iterations;
  fit.converged = root.converged;
  fit.min_censoring_survival = terms.min_event_survival();
  fit.max_censoring_survival = terms.max_event_survival();
  if (fit.converged) {
    try {
      fit.se = sandwich(terms, fit.beta_hat);
    } catch (const ValidationError&) {
      fit.converged = false;
    }
  }
  return fit;
}

double ipcw_sandwich_se(const IpcwFit& fit, const Dataset& data,
                        const ConditionalSurvivalModel& censoring) {
  if (!fit.converged) throw ValidationError("IPCW sandwich requires a converged fit");
  return sandwich(IpcwTerms(data, censoring), fit.beta_hat);
}

}  // namespace drcox
