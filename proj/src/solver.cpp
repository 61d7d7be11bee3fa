#include "drcox/solver.hpp"

#include <cmath>

namespace drcox {

namespace {

RootResult bisect(const std::function<double(double)>& f, const RootPolicy& policy,
                  RootResult result) {
  result.used_bisection = true;
  double lo = -policy.bracket;
  double hi = policy.bracket;
  double f_lo = f(lo);
  double f_hi = f(hi);
  if (!std::isfinite(f_lo) || !std::isfinite(f_hi) || f_lo * f_hi > 0.0) {
    result.converged = false;
    return result;
  }
  for (int iter = 0; iter < 200; ++iter) {
    ++result.iterations;
    const double mid = 0.5 * (lo + hi);
    const double f_mid = f(mid);
    result.root = mid;
    result.value = f_mid;
    if (std::abs(f_mid) <= policy.tolerance || hi - lo < 1e-14) {
      result.converged = std::abs(f_mid) <= policy.tolerance || hi - lo < 1e-14;
      return result;
    }
    if ((f_mid > 0.0) == (f_lo > 0.0)) {
      lo = mid;
      f_lo = f_mid;
    } else {
      hi = mid;
    }
  }
  result.converged = false;
  return result;
}

// One more Newton step once |f| is within tolerance, kept if it helps.
RootResult polish(const std::function<double(double)>& f,
                  const std::function<double(double)>& df, RootResult result) {
  const double slope = df(result.root);
  if (!std::isfinite(slope) || slope >= 0.0) return result;
  const double next = result.root - result.value / slope;
  const double next_value = f(next);
  if (std::isfinite(next_value) && std::abs(next_value) < std::abs(result.value)) {
    result.root = next;
    result.value = next_value;
  }
  return result;
}

}  // namespace

RootResult solve_decreasing_root(const std::function<double(double)>& f,
                                 const std::function<double(double)>& df,
                                 const RootPolicy& policy) {
  RootResult result;
  double beta = 0.0;
  double value = f(beta);
  for (int iter = 0; iter < policy.max_iterations; ++iter) {
    if (!std::isfinite(value)) break;
    if (std::abs(value) <= policy.tolerance) {
      result.root = beta;
      result.value = value;
      result.converged = true;
      return polish(f, df, result);
    }
    const double slope = df(beta);
    if (!std::isfinite(slope) || slope >= 0.0) break;
    double step = -value / slope;
    double next = beta + step;
    double next_value = f(next);
    int halvings = 0;
    while ((!std::isfinite(next_value) || std::abs(next_value) > std::abs(value)) &&
           halvings < 20) {
      step *= 0.5;
      next = beta + step;
      next_value = f(next);
      ++halvings;
    }
    ++result.iterations;
    if (!std::isfinite(next_value) || std::abs(next) > policy.bracket ||
        std::abs(next_value) > std::abs(value)) {
      break;
    }
    beta = next;
    value = next_value;
  }
  if (std::isfinite(value) && std::abs(value) <= policy.tolerance) {
    result.root = beta;
    result.value = value;
    result.converged = true;
    return polish(f, df, result);
  }
  return bisect(f, policy, result);
}

}  // namespace drcox
