#include "drcox/aipcw.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <fmt/format.h>

#include "drcox/rng.hpp"

namespace drcox {

TimeGrid build_grid(const Dataset& data, const CrossFitBundle& bundle) {
  TimeGrid grid;
  auto times = data.times();
  grid.points.assign(times.begin(), times.end());
  std::set<const ConditionalSurvivalModel*> seen;
  auto add_jumps = [&](const ModelPtr& model) {
    if (!model || !seen.insert(model.get()).second) return;
    for (double t : model->jump_times()) {
      if (t <= data.tau()) grid.points.push_back(t);
    }
  };
  for (const auto& m : bundle.failure) add_jumps(m);
  for (const auto& m : bundle.censoring) add_jumps(m);
  grid.points.push_back(data.tau());
  std::sort(grid.points.begin(), grid.points.end());
  grid.points.erase(std::unique(grid.points.begin(), grid.points.end()), grid.points.end());
  return grid;
}

namespace {

void resize_detail(SubjectDetail& d, std::size_t g) {
  for (auto* v : {&d.dn, &d.dnc, &d.at_risk, &d.censor_risk, &d.s_left, &d.s_right, &d.sc_left,
                  &d.sc_right, &d.dlambda_c, &d.dmc, &d.j, &d.dn_aug, &d.weight}) {
    v->assign(g, 0.0);
  }
  d.trimmed = 0;
}

// Right limits come from the model; left limits are the previous right limit.
std::size_t step_limits(const ConditionalSurvivalModel& model, const TimeGrid& grid, bool a,
                        std::span<const double> z, std::vector<double>& left,
                        std::vector<double>& right) {
  const std::size_t trimmed = model.predict_on_grid(grid.points, a, z, left, right);
  left[0] = 1.0;
  for (std::size_t k = 1; k < grid.size(); ++k) left[k] = right[k - 1];
  return trimmed;
}

void fill_detail(const Dataset& data, std::size_t i, const ConditionalSurvivalModel& failure,
                 const ConditionalSurvivalModel& censoring, const TimeGrid& grid,
                 SubjectDetail& d) {
  const std::size_t g = grid.size();
  if (g == 0) throw ValidationError("empty time grid");
  resize_detail(d, g);
  const double x = data.time(i);
  const auto it = std::lower_bound(grid.points.begin(), grid.points.end(), x);
  if (it == grid.points.end() || *it != x) {
    throw ValidationError(fmt::format("subject {}: time {} is not a grid point", i, x));
  }
  const auto xk = static_cast<std::size_t>(it - grid.points.begin());
  const bool a = data.group(i);
  const auto z = data.z(i);
  d.trimmed = step_limits(failure, grid, a, z, d.s_left, d.s_right) +
              step_limits(censoring, grid, a, z, d.sc_left, d.sc_right);

  if (data.delta(i)) {
    d.dn[xk] = 1.0;
  } else {
    d.dnc[xk] = 1.0;
  }
  double j = 0.0;
  for (std::size_t k = 0; k < g; ++k) {
    d.at_risk[k] = k <= xk ? 1.0 : 0.0;
    d.censor_risk[k] = (k < xk ? 1.0 : 0.0) + d.dnc[k];
    d.dlambda_c[k] = (d.sc_left[k] - d.sc_right[k]) / d.sc_left[k];
    d.dmc[k] = d.dnc[k] - d.censor_risk[k] * d.dlambda_c[k];
    d.j[k] = j;
    d.dn_aug[k] = d.dn[k] / d.sc_left[k] - j * (d.s_right[k] - d.s_left[k]);
    d.weight[k] = d.at_risk[k] / d.sc_left[k] + j * d.s_left[k];
    j += d.dmc[k] / (d.s_right[k] * d.sc_right[k]);
  }
}

}  // namespace

SubjectDetail subject_detail(const Dataset& data, std::size_t i,
                             const ConditionalSurvivalModel& failure,
                             const ConditionalSurvivalModel& censoring, const TimeGrid& grid) {
  if (i >= data.size()) throw ValidationError("subject index out of range");
  SubjectDetail d;
  fill_detail(data, i, failure, censoring, grid, d);
  return d;
}

AipcwProcesses build_processes(const Dataset& data, const CrossFitBundle& bundle,
                               const TimeGrid& grid) {
  const std::size_t n = data.size();
  if (bundle.fold_of.size() != n) {
    throw ValidationError(fmt::format("bundle covers {} subjects, dataset has {}",
                                      bundle.fold_of.size(), n));
  }
  const std::size_t g = grid.size();
  AipcwProcesses p;
  p.n_ = n;
  p.grid_ = grid;
  p.group_.resize(n);
  p.dn_aug_.assign(n * g, 0.0);
  p.weight_.assign(n * g, 0.0);
  p.weight_sum_[0].assign(g, 0.0);
  p.weight_sum_[1].assign(g, 0.0);
  p.event_sum_.assign(g, 0.0);
  p.event_sum_treated_.assign(g, 0.0);

  SubjectDetail d;
  std::size_t trimmed = 0;
  bool any_event = false;
  for (std::size_t i = 0; i < n; ++i) {
    fill_detail(data, i, bundle.failure_model(i), bundle.censoring_model(i), grid, d);
    trimmed += d.trimmed;
    const int a = data.group(i) ? 1 : 0;
    p.group_[i] = static_cast<char>(a);
    double* dn = p.dn_aug_.data() + i * g;
    double* w = p.weight_.data() + i * g;
    for (std::size_t k = 0; k < g; ++k) {
      if (!std::isfinite(d.dn_aug[k]) || !std::isfinite(d.weight[k])) {
        throw ValidationError(fmt::format("subject {}: non-finite process at t = {}", i,
                                          grid.points[k]));
      }
      dn[k] = d.dn_aug[k];
      w[k] = d.weight[k];
      p.weight_sum_[a][k] += w[k];
      p.event_sum_[k] += dn[k];
      if (a) p.event_sum_treated_[k] += dn[k];
      if (d.dn[k] > 0.0) {
        p.min_sc_events_ = any_event ? std::min(p.min_sc_events_, d.sc_left[k]) : d.sc_left[k];
        any_event = true;
      }
    }
  }
  p.trimmed_share_ = static_cast<double>(trimmed) / static_cast<double>(4 * n * g);
  return p;
}

RiskAggregates risk_aggregates(double beta, const AipcwProcesses& proc) {
  const std::size_t g = proc.grid_size();
  const double e = std::exp(beta);
  const double n = static_cast<double>(proc.size());
  RiskAggregates r;
  r.s0.resize(g);
  r.s1.resize(g);
  r.abar.resize(g);
  r.v.resize(g);
  const auto& w0 = proc.weight_sum(0);
  const auto& w1 = proc.weight_sum(1);
  const auto& events = proc.event_sum();
  for (std::size_t k = 0; k < g; ++k) {
    r.s1[k] = e * w1[k] / n;
    r.s0[k] = r.s1[k] + w0[k] / n;
    if (r.s0[k] == 0.0 || !std::isfinite(r.s0[k])) {
      if (events[k] != 0.0) {
        throw ValidationError(
            fmt::format("AIPCW: zero weighted risk set at t = {}", proc.grid().points[k]));
      }
      r.abar[k] = 0.0;
      r.v[k] = 0.0;
      continue;
    }
    r.abar[k] = r.s1[k] / r.s0[k];
    r.v[k] = r.abar[k] - r.abar[k] * r.abar[k];
  }
  return r;
}

double aipcw_score(double beta, const AipcwProcesses& proc) {
  const auto r = risk_aggregates(beta, proc);
  const auto& d = proc.event_sum();
  const auto& d1 = proc.event_sum_treated();
  double u = 0.0;
  for (std::size_t k = 0; k < proc.grid_size(); ++k) u += d1[k] - r.abar[k] * d[k];
  return u / static_cast<double>(proc.size());
}

double aipcw_score_derivative(double beta, const AipcwProcesses& proc) {
  const auto r = risk_aggregates(beta, proc);
  const auto& d = proc.event_sum();
  double out = 0.0;
  for (std::size_t k = 0; k < proc.grid_size(); ++k) out -= d[k] * r.v[k];
  return out / static_cast<double>(proc.size());
}

namespace {

std::vector<double> baseline_increments(const AipcwProcesses& proc, const RiskAggregates& r) {
  const double n = static_cast<double>(proc.size());
  const auto& d = proc.event_sum();
  std::vector<double> inc(proc.grid_size(), 0.0);
  for (std::size_t k = 0; k < inc.size(); ++k) {
    if (d[k] != 0.0) inc[k] = d[k] / (n * r.s0[k]);
  }
  return inc;
}

}  // namespace

StepCurve aipcw_baseline(double beta, const AipcwProcesses& proc) {
  const auto r = risk_aggregates(beta, proc);
  const auto inc = baseline_increments(proc, r);
  const auto& pts = proc.grid().points;
  std::vector<double> jumps;
  std::vector<double> values;
  double at_zero = 0.0;
  double cum = 0.0;
  for (std::size_t k = 0; k < inc.size(); ++k) {
    if (inc[k] == 0.0) continue;
    cum += inc[k];
    if (pts[k] <= 0.0) {
      at_zero = cum;
      continue;
    }
    jumps.push_back(pts[k]);
    values.push_back(cum);
  }
  return StepCurve(std::move(jumps), std::move(values), at_zero);
}

AipcwVariance aipcw_variance(double beta, const AipcwProcesses& proc) {
  const auto r = risk_aggregates(beta, proc);
  const auto inc = baseline_increments(proc, r);
  const std::size_t n = proc.size();
  const std::size_t g = proc.grid_size();
  const auto& d = proc.event_sum();
  AipcwVariance out;
  for (std::size_t k = 0; k < g; ++k) out.nu += r.v[k] * d[k];
  out.nu /= static_cast<double>(n);
  if (!(out.nu > 0.0)) {
    throw ValidationError(fmt::format("AIPCW variance: nu = {} is not positive", out.nu));
  }
  const double e = std::exp(beta);
  out.psi.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double a = proc.group(i) ? 1.0 : 0.0;
    const double risk = proc.group(i) ? e : 1.0;
    const auto dn = proc.dn_aug(i);
    const auto w = proc.weight(i);
    double psi = 0.0;
    for (std::size_t k = 0; k < g; ++k) {
      psi += (a - r.abar[k]) * (dn[k] - risk * w[k] * inc[k]);
    }
    out.psi[i] = psi;
    out.k += psi * psi;
  }
  out.k /= static_cast<double>(n);
  out.se = std::sqrt(out.k / (out.nu * out.nu * static_cast<double>(n)));
  return out;
}

AipcwFit solve_aipcw(const AipcwProcesses& proc, const RootPolicy& policy) {
  const auto root =
      solve_decreasing_root([&](double b) { return aipcw_score(b, proc); },
                            [&](double b) { return aipcw_score_derivative(b, proc); }, policy);
  AipcwFit fit;
  fit.beta_hat = root.root;
  fit.iterations = root.iterations;
  fit.converged = root.converged;
  fit.diagnostics.used_bisection = root.used_bisection;
  fit.diagnostics.score_at_root = root.value;
  fit.diagnostics.min_censoring_survival = proc.min_censoring_survival_at_events();
  fit.diagnostics.trimmed_share = proc.trimmed_share();
  if (!fit.converged) return fit;
  fit.baseline = aipcw_baseline(fit.beta_hat, proc);
  const auto& v = fit.baseline.values_after();
  double prev = fit.baseline.value_at_zero();
  for (double x : v) {
    if (x < prev) ++fit.diagnostics.baseline_decreases;
    prev = x;
  }
  try {
    fit.se = aipcw_variance(fit.beta_hat, proc).se;
  } catch (const ValidationError&) {
    fit.se = std::nan("");
    fit.converged = false;
  }
  return fit;
}

AipcwFit solve_aipcw(const Dataset& data, const CrossFitBundle& bundle,
                     const RootPolicy& policy) {
  const auto grid = build_grid(data, bundle);
  return solve_aipcw(build_processes(data, bundle, grid), policy);
}

AipcwFit estimate_aipcw(const Dataset& data, const AipcwSettings& settings,
                        std::uint64_t seed) {
  if (settings.folds == 0) throw ValidationError("fold count must be positive");
  const auto bundle =
      settings.folds == 1
          ? fit_in_sample(data, settings.failure, settings.censoring, seed)
          : cross_fit(data, settings.folds, settings.failure, settings.censoring, seed);
  return solve_aipcw(data, bundle);
}

BootstrapResult bootstrap_se(const Dataset& data, const AipcwSettings& settings, std::size_t b,
                             std::uint64_t seed) {
  if (b < 50) throw ValidationError(fmt::format("bootstrap needs B >= 50, got {}", b));
  const std::size_t n = data.size();
  BootstrapResult out;
  std::vector<std::size_t> rows(n);
  for (std::size_t r = 0; r < b; ++r) {
    Rng rng(derive_seed(seed, {r, 0}));
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    for (auto& row : rows) row = pick(rng);
    try {
      const auto sample = data.subset(rows);
      const auto fit = estimate_aipcw(sample, settings, derive_seed(seed, {r, 1}));
      if (fit.converged) {
        out.estimates.push_back(fit.beta_hat);
      } else {
        ++out.failures;
      }
    } catch (const std::exception&) {
      ++out.failures;
    }
  }
  if (out.failures * 10 > b) {
    throw ConvergenceError(
        fmt::format("bootstrap: {} of {} resamples failed", out.failures, b));
  }
  double mean = 0.0;
  for (double x : out.estimates) mean += x;
  mean /= static_cast<double>(out.estimates.size());
  double ss = 0.0;
  for (double x : out.estimates) ss += (x - mean) * (x - mean);
  out.se = std::sqrt(ss / static_cast<double>(out.estimates.size() - 1));
  return out;
}

}  // namespace drcox
