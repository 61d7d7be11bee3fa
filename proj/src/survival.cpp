#include "drcox/survival.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <fmt/format.h>

namespace drcox {

namespace {

std::vector<std::size_t> all_rows(const Dataset& data) {
  std::vector<std::size_t> rows(data.size());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  return rows;
}

// Distinct event times with (events, at-risk) counts, ascending.
struct EventTable {
  std::vector<double> times;
  std::vector<double> events;
  std::vector<double> at_risk;
};

EventTable event_table(const Dataset& data, Target target,
                       std::span<const std::size_t> rows) {
  if (rows.empty()) throw ValidationError("cannot estimate a curve from zero subjects");
  std::vector<std::size_t> order(rows.begin(), rows.end());
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return data.time(a) < data.time(b); });
  EventTable table;
  double remaining = static_cast<double>(order.size());
  std::size_t k = 0;
  while (k < order.size()) {
    const double t = data.time(order[k]);
    double d = 0.0;
    double leaving = 0.0;
    while (k < order.size() && data.time(order[k]) == t) {
      d += data.event(order[k], target) ? 1.0 : 0.0;
      leaving += 1.0;
      ++k;
    }
    if (d > 0.0) {
      table.times.push_back(t);
      table.events.push_back(d);
      table.at_risk.push_back(remaining);
    }
    remaining -= leaving;
  }
  return table;
}

}  // namespace

StepCurve product_limit(const Dataset& data, Target target,
                        std::span<const std::size_t> rows) {
  auto table = event_table(data, target, rows);
  std::vector<double> values(table.times.size());
  double s = 1.0;
  for (std::size_t k = 0; k < table.times.size(); ++k) {
    s *= 1.0 - table.events[k] / table.at_risk[k];
    values[k] = s;
  }
  return StepCurve(std::move(table.times), std::move(values), 1.0);
}

StepCurve product_limit(const Dataset& data, Target target) {
  auto rows = all_rows(data);
  return product_limit(data, target, rows);
}

StepCurve nelson_aalen(const Dataset& data, Target target,
                       std::span<const std::size_t> rows) {
  auto table = event_table(data, target, rows);
  std::vector<double> values(table.times.size());
  double h = 0.0;
  for (std::size_t k = 0; k < table.times.size(); ++k) {
    h += table.events[k] / table.at_risk[k];
    values[k] = h;
  }
  return StepCurve(std::move(table.times), std::move(values), 0.0);
}

StepCurve nelson_aalen(const Dataset& data, Target target) {
  auto rows = all_rows(data);
  return nelson_aalen(data, target, rows);
}

CoxDesign CoxDesign::all(std::size_t p) {
  CoxDesign d;
  d.covariates.resize(p);
  std::iota(d.covariates.begin(), d.covariates.end(), std::size_t{0});
  return d;
}

Eigen::VectorXd design_row(const CoxDesign& design, bool a, std::span<const double> z) {
  Eigen::VectorXd w(static_cast<Eigen::Index>(design.width()));
  Eigen::Index c = 0;
  if (design.group) w[c++] = a ? 1.0 : 0.0;
  for (std::size_t j : design.covariates) {
    if (j >= z.size()) throw ValidationError("Cox design selects a missing covariate");
    w[c++] = z[j];
  }
  return w;
}

double CoxFit::linear_predictor(bool a, std::span<const double> z) const {
  return design_row(design, a, z).dot(beta);
}

Eigen::VectorXd CoxFit::model_se() const {
  Eigen::FullPivLU<Eigen::MatrixXd> lu(information);
  if (!lu.isInvertible()) {
    return Eigen::VectorXd::Constant(beta.size(), std::numeric_limits<double>::quiet_NaN());
  }
  return lu.inverse().diagonal().cwiseSqrt();
}

namespace {

Eigen::MatrixXd design_matrix(const Dataset& data, const CoxDesign& design) {
  Eigen::MatrixXd w(static_cast<Eigen::Index>(data.size()),
                    static_cast<Eigen::Index>(design.width()));
  for (std::size_t i = 0; i < data.size(); ++i) {
    w.row(static_cast<Eigen::Index>(i)) = design_row(design, data.group(i), data.z(i));
  }
  return w;
}

std::vector<std::size_t> descending_time_order(const Dataset& data) {
  auto order = all_rows(data);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return data.time(a) > data.time(b);
  });
  return order;
}

CoxPartial partial_impl(const Dataset& data, Target target, const Eigen::MatrixXd& w,
                        const std::vector<std::size_t>& order,
                        const Eigen::VectorXd& beta) {
  const Eigen::Index q = w.cols();
  Eigen::VectorXd lp = w * beta;
  const double shift = lp.size() > 0 ? lp.maxCoeff() : 0.0;

  CoxPartial out;
  out.score = Eigen::VectorXd::Zero(q);
  out.information = Eigen::MatrixXd::Zero(q, q);
  double s0 = 0.0;
  Eigen::VectorXd s1 = Eigen::VectorXd::Zero(q);
  Eigen::MatrixXd s2 = Eigen::MatrixXd::Zero(q, q);

  std::size_t k = 0;
  while (k < order.size()) {
    const double t = data.time(order[k]);
    double d = 0.0;
    Eigen::VectorXd event_sum = Eigen::VectorXd::Zero(q);
    double event_lp = 0.0;
    while (k < order.size() && data.time(order[k]) == t) {
      const auto i = static_cast<Eigen::Index>(order[k]);
      const double e = std::exp(lp[i] - shift);
      s0 += e;
      s1 += e * w.row(i).transpose();
      s2 += e * w.row(i).transpose() * w.row(i);
      if (data.event(order[k], target)) {
        d += 1.0;
        event_sum += w.row(i).transpose();
        event_lp += lp[i];
      }
      ++k;
    }
    if (d > 0.0) {
      out.log_likelihood += event_lp - d * (std::log(s0) + shift);
      const Eigen::VectorXd mean = s1 / s0;
      out.score += event_sum - d * mean;
      out.information += d * (s2 / s0 - mean * mean.transpose());
    }
  }
  return out;
}

}  // namespace

CoxPartial cox_partial(const Dataset& data, Target target, const CoxDesign& design,
                       const Eigen::VectorXd& beta) {
  auto w = design_matrix(data, design);
  auto order = descending_time_order(data);
  return partial_impl(data, target, w, order, beta);
}

StepCurve breslow(const Dataset& data, Target target, const CoxDesign& design,
                  const Eigen::VectorXd& beta) {
  auto w = design_matrix(data, design);
  Eigen::VectorXd lp = w * beta;
  auto order = descending_time_order(data);
  std::vector<double> times;
  std::vector<double> increments;
  double s0 = 0.0;
  std::size_t k = 0;
  while (k < order.size()) {
    const double t = data.time(order[k]);
    double d = 0.0;
    while (k < order.size() && data.time(order[k]) == t) {
      s0 += std::exp(lp[static_cast<Eigen::Index>(order[k])]);
      d += data.event(order[k], target) ? 1.0 : 0.0;
      ++k;
    }
    if (d > 0.0) {
      times.push_back(t);
      increments.push_back(d / s0);
    }
  }
  std::reverse(times.begin(), times.end());
  std::reverse(increments.begin(), increments.end());
  double h = 0.0;
  for (double& v : increments) {
    h += v;
    v = h;
  }
  return StepCurve(std::move(times), std::move(increments), 0.0);
}

CoxFit cox_mple(const Dataset& data, const CoxDesign& design, Target target,
                const NewtonPolicy& policy) {
  if (data.event_count(target) == 0) {
    throw ValidationError("Cox model: no events for the requested target");
  }
  auto w = design_matrix(data, design);
  auto order = descending_time_order(data);
  const Eigen::Index q = w.cols();

  CoxFit fit;
  fit.design = design;
  fit.target = target;
  fit.beta = Eigen::VectorXd::Zero(q);
  auto current = partial_impl(data, target, w, order, fit.beta);

  for (int iter = 0; iter < policy.max_iterations; ++iter) {
    if (current.score.norm() <= policy.tolerance) {
      fit.converged = true;
      break;
    }
    Eigen::LLT<Eigen::MatrixXd> llt(current.information);
    if (llt.info() != Eigen::Success) break;
    Eigen::VectorXd step = llt.solve(current.score);
    if (!step.allFinite()) break;
    ++fit.iterations;
    Eigen::VectorXd candidate = fit.beta + step;
    auto next = partial_impl(data, target, w, order, candidate);
    // Near the optimum the likelihood gain drops below rounding noise.
    const double floor = current.log_likelihood - 1e-12 * (1.0 + std::abs(current.log_likelihood));
    for (int halving = 0; halving < 30 && !(next.log_likelihood >= floor); ++halving) {
      step *= 0.5;
      candidate = fit.beta + step;
      next = partial_impl(data, target, w, order, candidate);
    }
    fit.beta = candidate;
    current = std::move(next);
  }
  if (!fit.converged && current.score.norm() <= policy.tolerance) fit.converged = true;
  if (fit.converged) {
    // One more full step settles the root to rounding level.
    Eigen::LLT<Eigen::MatrixXd> llt(current.information);
    if (llt.info() == Eigen::Success) {
      Eigen::VectorXd candidate = fit.beta + llt.solve(current.score);
      auto next = partial_impl(data, target, w, order, candidate);
      if (candidate.allFinite() && next.score.norm() < current.score.norm()) {
        fit.beta = candidate;
        current = std::move(next);
      }
    }
  }

  fit.information = current.information;
  fit.log_likelihood = current.log_likelihood;
  if (fit.converged) {
    // A zero score with singular information means the data carry no contrast.
    Eigen::LLT<Eigen::MatrixXd> llt(fit.information);
    if (q > 0 && (llt.info() != Eigen::Success ||
                  fit.information.diagonal().minCoeff() <= 1e-12)) {
      fit.converged = false;
    }
  }
  fit.baseline = breslow(data, target, design, fit.beta);
  return fit;
}

Eigen::VectorXd cox_robust_se(const Dataset& data, const CoxFit& fit) {
  auto w = design_matrix(data, fit.design);
  const Eigen::Index q = w.cols();
  Eigen::VectorXd lp = w * fit.beta;
  auto order = descending_time_order(data);

  // Risk-set means and hazard increments at the event times, descending.
  std::vector<double> times;
  std::vector<Eigen::VectorXd> means;
  std::vector<double> dlambda;
  double s0 = 0.0;
  Eigen::VectorXd s1 = Eigen::VectorXd::Zero(q);
  std::size_t k = 0;
  while (k < order.size()) {
    const double t = data.time(order[k]);
    double d = 0.0;
    while (k < order.size() && data.time(order[k]) == t) {
      const auto i = static_cast<Eigen::Index>(order[k]);
      const double e = std::exp(lp[i]);
      s0 += e;
      s1 += e * w.row(i).transpose();
      d += data.event(order[k], fit.target) ? 1.0 : 0.0;
      ++k;
    }
    if (d > 0.0) {
      times.push_back(t);
      means.push_back(s1 / s0);
      dlambda.push_back(d / s0);
    }
  }
  std::reverse(times.begin(), times.end());
  std::reverse(means.begin(), means.end());
  std::reverse(dlambda.begin(), dlambda.end());

  // Cumulative sums of dLambda and mean * dLambda up to each event time.
  std::vector<double> cum0(times.size());
  std::vector<Eigen::VectorXd> cum1(times.size());
  double c0 = 0.0;
  Eigen::VectorXd c1 = Eigen::VectorXd::Zero(q);
  for (std::size_t m = 0; m < times.size(); ++m) {
    c0 += dlambda[m];
    c1 += means[m] * dlambda[m];
    cum0[m] = c0;
    cum1[m] = c1;
  }

  Eigen::MatrixXd meat = Eigen::MatrixXd::Zero(q, q);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    const double x = data.time(i);
    auto it = std::upper_bound(times.begin(), times.end(), x);
    const auto m = static_cast<std::size_t>(it - times.begin());
    Eigen::VectorXd resid = Eigen::VectorXd::Zero(q);
    if (data.event(i, fit.target)) {
      auto pos = std::lower_bound(times.begin(), times.end(), x) - times.begin();
      resid += w.row(ii).transpose() - means[static_cast<std::size_t>(pos)];
    }
    if (m > 0) {
      resid -= std::exp(lp[ii]) * (w.row(ii).transpose() * cum0[m - 1] - cum1[m - 1]);
    }
    meat += resid * resid.transpose();
  }
  Eigen::FullPivLU<Eigen::MatrixXd> lu(fit.information);
  if (!lu.isInvertible()) {
    throw ValidationError("robust variance: singular information matrix");
  }
  Eigen::MatrixXd inv = lu.inverse();
  return (inv * meat * inv).diagonal().cwiseSqrt();
}

}  // namespace drcox
