#pragma once

#include <functional>

namespace drcox {

struct RootResult {
  double root = 0.0;
  double value = 0.0;  // estimating function at the root
  int iterations = 0;
  bool converged = false;
  bool used_bisection = false;
};

struct RootPolicy {
  double tolerance = 1e-8;  // on |f|
  int max_iterations = 50;
  double bracket = 10.0;    // bisection fallback on [-bracket, bracket]
};

/// Newton-Raphson from 0 for a scalar estimating function, with step
/// halving on |f| and a bisection fallback when the Newton path leaves the
/// bracket, stalls or meets a non-negative slope (f is expected to decrease).
RootResult solve_decreasing_root(const std::function<double(double)>& f,
                                 const std::function<double(double)>& df,
                                 const RootPolicy& policy = {});

}  // namespace drcox
