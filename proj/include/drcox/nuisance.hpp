#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "drcox/data.hpp"
#include "drcox/forest.hpp"
#include "drcox/survival.hpp"

namespace drcox {

enum class NuisanceKind { cox, product_limit_pooled, product_limit_by_group, forest, oracle };

/// Closed-form curves available to the oracle kind.
enum class OracleCurve {
  unit,                 // S == 1
  exponential,          // exp(-rate t), ignores (a, z)
  exponential_ph,       // exp(-t e^{beta a})
  latent_failure,       // failure survival of the simulation design
  scenario1_censoring,  // exp(-t e^{-1 + 2 z2})
  scenario2_censoring,
};

struct OracleParams {
  OracleCurve curve = OracleCurve::unit;
  double rate = 1.0;
  double beta = -1.0;
};

struct NuisanceSpec {
  NuisanceKind kind = NuisanceKind::cox;
  ForestParams forest;
  OracleParams oracle;
  double trim_floor = 0.01;

  static NuisanceSpec cox(double trim = 0.01);
  static NuisanceSpec product_limit(bool by_group, double trim = 0.01);
  static NuisanceSpec random_forest(const ForestParams& params, double trim = 0.01);
  static NuisanceSpec oracle_curve(const OracleParams& params, double trim = 0.01);

  void validate() const;
  std::string name() const;
};

/// Fitted map (t, a, z) -> P(T >= t | a, z) (or of C for the censoring
/// target). Predictions are floored at `trim_floor` and nonincreasing in t.
class ConditionalSurvivalModel {
 public:
  virtual ~ConditionalSurvivalModel() = default;

  virtual std::string kind() const = 0;
  /// Jump locations of the underlying step curves; empty for continuous curves.
  virtual std::vector<double> jump_times() const = 0;

  double trim_floor() const { return trim_floor_; }
  std::size_t dim() const { return dim_; }

  /// Left-limit prediction P(. >= t), trimmed.
  double predict_survival(double t, bool a, std::span<const double> z) const;
  /// Right-limit prediction P(. > t), trimmed.
  double predict_survival_after(double t, bool a, std::span<const double> z) const;

  /// Left and right limits at every point of a sorted grid, trimmed, with a
  /// running minimum over the interleaved sequence left[0], right[0], left[1], ...
  /// Returns the number of values raised to the floor.
  std::size_t predict_on_grid(std::span<const double> grid, bool a,
                              std::span<const double> z, std::span<double> left,
                              std::span<double> right) const;

 protected:
  ConditionalSurvivalModel(double trim_floor, std::size_t dim)
      : trim_floor_(trim_floor), dim_(dim) {}

  /// Untrimmed limits on a sorted grid.
  virtual void raw_on_grid(std::span<const double> grid, bool a,
                           std::span<const double> z, std::span<double> left,
                           std::span<double> right) const = 0;

 private:
  void check_dim(std::span<const double> z) const;

  double trim_floor_;
  std::size_t dim_;
};

using ModelPtr = std::shared_ptr<const ConditionalSurvivalModel>;

/// Fits the requested model for the failure or censoring target. The oracle
/// kind ignores the data apart from the covariate dimension.
ModelPtr fit_conditional(const NuisanceSpec& spec, const Dataset& data, Target target);

struct CrossFitBundle {
  std::size_t k = 0;
  std::vector<std::size_t> fold_of;             // subject -> fold
  std::vector<std::vector<std::size_t>> train;  // per fold: training rows
  std::vector<ModelPtr> failure;                // per fold: S^(-m)
  std::vector<ModelPtr> censoring;              // per fold: S_c^(-m)

  const ConditionalSurvivalModel& failure_model(std::size_t i) const {
    return *failure[fold_of[i]];
  }
  const ConditionalSurvivalModel& censoring_model(std::size_t i) const {
    return *censoring[fold_of[i]];
  }
};

/// Fold assignment stratified by (A, delta); fold sizes differ by at most one.
std::vector<std::size_t> assign_folds(const Dataset& data, std::size_t k,
                                      std::uint64_t seed);

/// k-fold cross-fitting: fold m's models see only rows outside fold m.
CrossFitBundle cross_fit(const Dataset& data, std::size_t k, const NuisanceSpec& failure_spec,
                         const NuisanceSpec& censoring_spec, std::uint64_t seed);

/// Single "fold" bundle with both models fitted on the full sample.
CrossFitBundle fit_in_sample(const Dataset& data, const NuisanceSpec& failure_spec,
                             const NuisanceSpec& censoring_spec, std::uint64_t seed);

}  // namespace drcox
