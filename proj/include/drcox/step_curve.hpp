#pragma once

#include <span>
#include <vector>

namespace drcox {

/// Piecewise-constant function of time with jumps at strictly increasing
/// positive times. `values_after[k]` holds on [jump_times[k], jump_times[k+1]).
///
/// Survival curves are read as P(T >= t): `evaluate_left` ignores a jump
/// located exactly at t, `evaluate_right` includes it.
class StepCurve {
 public:
  StepCurve() = default;
  explicit StepCurve(double value_at_zero) : value_at_zero_(value_at_zero) {}
  StepCurve(std::vector<double> jump_times, std::vector<double> values_after,
            double value_at_zero);

  double evaluate_left(double t) const;
  double evaluate_right(double t) const;

  /// Left limits at every (sorted) point of `grid`, in one merge pass.
  void evaluate_left_on(std::span<const double> grid, std::span<double> out) const;
  void evaluate_right_on(std::span<const double> grid, std::span<double> out) const;

  const std::vector<double>& jump_times() const { return jump_times_; }
  const std::vector<double>& values_after() const { return values_after_; }
  double value_at_zero() const { return value_at_zero_; }
  bool empty() const { return jump_times_.empty(); }
  double final_value() const {
    return values_after_.empty() ? value_at_zero_ : values_after_.back();
  }

  bool is_nonincreasing() const;
  bool is_nondecreasing() const;

 private:
  std::vector<double> jump_times_;
  std::vector<double> values_after_;
  double value_at_zero_ = 0.0;
};

/// Convenience free function matching the left-limit convention.
inline double evaluate_left(const StepCurve& curve, double t) {
  return curve.evaluate_left(t);
}

}  // namespace drcox
