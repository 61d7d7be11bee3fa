#include "drcox/step_curve.hpp"

#include <algorithm>

#include "drcox/data.hpp"

namespace drcox {

StepCurve::StepCurve(std::vector<double> jump_times,
                     std::vector<double> values_after, double value_at_zero)
    : jump_times_(std::move(jump_times)),
      values_after_(std::move(values_after)),
      value_at_zero_(value_at_zero) {
  if (jump_times_.size() != values_after_.size()) {
    throw ValidationError("step curve: jump_times and values_after differ in length");
  }
  for (std::size_t k = 0; k < jump_times_.size(); ++k) {
    if (k > 0 && !(jump_times_[k] > jump_times_[k - 1])) {
      throw ValidationError("step curve: jump times must be strictly increasing");
    }
  }
}

double StepCurve::evaluate_left(double t) const {
  auto it = std::lower_bound(jump_times_.begin(), jump_times_.end(), t);
  auto k = static_cast<std::size_t>(it - jump_times_.begin());
  return k == 0 ? value_at_zero_ : values_after_[k - 1];
}

double StepCurve::evaluate_right(double t) const {
  auto it = std::upper_bound(jump_times_.begin(), jump_times_.end(), t);
  auto k = static_cast<std::size_t>(it - jump_times_.begin());
  return k == 0 ? value_at_zero_ : values_after_[k - 1];
}

void StepCurve::evaluate_left_on(std::span<const double> grid,
                                 std::span<double> out) const {
  std::size_t k = 0;
  for (std::size_t g = 0; g < grid.size(); ++g) {
    while (k < jump_times_.size() && jump_times_[k] < grid[g]) ++k;
    out[g] = k == 0 ? value_at_zero_ : values_after_[k - 1];
  }
}

void StepCurve::evaluate_right_on(std::span<const double> grid,
                                  std::span<double> out) const {
  std::size_t k = 0;
  for (std::size_t g = 0; g < grid.size(); ++g) {
    while (k < jump_times_.size() && jump_times_[k] <= grid[g]) ++k;
    out[g] = k == 0 ? value_at_zero_ : values_after_[k - 1];
  }
}

bool StepCurve::is_nonincreasing() const {
  double prev = value_at_zero_;
  for (double v : values_after_) {
    if (v > prev) return false;
    prev = v;
  }
  return true;
}

bool StepCurve::is_nondecreasing() const {
  double prev = value_at_zero_;
  for (double v : values_after_) {
    if (v < prev) return false;
    prev = v;
  }
  return true;
}

}  // namespace drcox
