#include "drcox/nuisance.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "drcox/rng.hpp"
#include "drcox/truth.hpp"

namespace drcox {

NuisanceSpec NuisanceSpec::cox(double trim) {
  NuisanceSpec s;
  s.kind = NuisanceKind::cox;
  s.trim_floor = trim;
  return s;
}

NuisanceSpec NuisanceSpec::product_limit(bool by_group, double trim) {
  NuisanceSpec s;
  s.kind = by_group ? NuisanceKind::product_limit_by_group : NuisanceKind::product_limit_pooled;
  s.trim_floor = trim;
  return s;
}

NuisanceSpec NuisanceSpec::random_forest(const ForestParams& params, double trim) {
  NuisanceSpec s;
  s.kind = NuisanceKind::forest;
  s.forest = params;
  s.trim_floor = trim;
  return s;
}

NuisanceSpec NuisanceSpec::oracle_curve(const OracleParams& params, double trim) {
  NuisanceSpec s;
  s.kind = NuisanceKind::oracle;
  s.oracle = params;
  s.trim_floor = trim;
  return s;
}

void NuisanceSpec::validate() const {
  if (!(trim_floor > 0.0 && trim_floor < 1.0)) {
    throw ValidationError(fmt::format("trim floor must lie in (0, 1), got {}", trim_floor));
  }
  if (kind == NuisanceKind::forest) forest.validate();
  if (kind == NuisanceKind::oracle && oracle.curve == OracleCurve::exponential &&
      !(oracle.rate > 0.0)) {
    throw ValidationError("oracle exponential rate must be positive");
  }
}

std::string NuisanceSpec::name() const {
  switch (kind) {
    case NuisanceKind::cox: return "cox";
    case NuisanceKind::product_limit_pooled: return "km";
    case NuisanceKind::product_limit_by_group: return "km-a";
    case NuisanceKind::forest: return "rsf";
    case NuisanceKind::oracle: return "oracle";
  }
  return "unknown";
}

// ---------------------------------------------------------------------------

void ConditionalSurvivalModel::check_dim(std::span<const double> z) const {
  if (z.size() != dim_) {
    throw ValidationError(fmt::format("{} model: expected {} covariates, got {}", kind(),
                                      dim_, z.size()));
  }
}

double ConditionalSurvivalModel::predict_survival(double t, bool a,
                                                  std::span<const double> z) const {
  double grid[1] = {t};
  double left[1];
  double right[1];
  predict_on_grid(grid, a, z, left, right);
  return left[0];
}

double ConditionalSurvivalModel::predict_survival_after(double t, bool a,
                                                        std::span<const double> z) const {
  double grid[1] = {t};
  double left[1];
  double right[1];
  predict_on_grid(grid, a, z, left, right);
  return right[0];
}

std::size_t ConditionalSurvivalModel::predict_on_grid(std::span<const double> grid, bool a,
                                                      std::span<const double> z,
                                                      std::span<double> left,
                                                      std::span<double> right) const {
  check_dim(z);
  if (left.size() != grid.size() || right.size() != grid.size()) {
    throw ValidationError("predict_on_grid: output size mismatch");
  }
  raw_on_grid(grid, a, z, left, right);
  std::size_t trimmed = 0;
  double running = 1.0;
  for (std::size_t g = 0; g < grid.size(); ++g) {
    running = std::min(running, left[g]);
    left[g] = running;
    running = std::min(running, right[g]);
    right[g] = running;
    if (left[g] < trim_floor_) {
      left[g] = trim_floor_;
      ++trimmed;
    }
    if (right[g] < trim_floor_) {
      right[g] = trim_floor_;
      ++trimmed;
    }
  }
  return trimmed;
}

namespace {

class CoxModel final : public ConditionalSurvivalModel {
 public:
  CoxModel(CoxFit fit, double trim, std::size_t dim)
      : ConditionalSurvivalModel(trim, dim), fit_(std::move(fit)) {}
  std::string kind() const override { return "cox"; }
  std::vector<double> jump_times() const override { return fit_.baseline.jump_times(); }

 protected:
  void raw_on_grid(std::span<const double> grid, bool a, std::span<const double> z,
                   std::span<double> left, std::span<double> right) const override {
    const double risk = std::exp(fit_.linear_predictor(a, z));
    fit_.baseline.evaluate_left_on(grid, left);
    fit_.baseline.evaluate_right_on(grid, right);
    for (std::size_t g = 0; g < grid.size(); ++g) {
      left[g] = std::exp(-left[g] * risk);
      right[g] = std::exp(-right[g] * risk);
    }
  }

 private:
  CoxFit fit_;
};

class ProductLimitModel final : public ConditionalSurvivalModel {
 public:
  ProductLimitModel(StepCurve pooled, double trim, std::size_t dim)
      : ConditionalSurvivalModel(trim, dim), curves_{pooled, std::move(pooled)},
        by_group_(false) {}
  ProductLimitModel(StepCurve group0, StepCurve group1, double trim, std::size_t dim)
      : ConditionalSurvivalModel(trim, dim), curves_{std::move(group0), std::move(group1)},
        by_group_(true) {}
  std::string kind() const override { return by_group_ ? "km-a" : "km"; }
  std::vector<double> jump_times() const override {
    std::vector<double> out = curves_[0].jump_times();
    out.insert(out.end(), curves_[1].jump_times().begin(), curves_[1].jump_times().end());
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
  }

 protected:
  void raw_on_grid(std::span<const double> grid, bool a, std::span<const double>,
                   std::span<double> left, std::span<double> right) const override {
    const auto& curve = curves_[a ? 1 : 0];
    curve.evaluate_left_on(grid, left);
    curve.evaluate_right_on(grid, right);
  }

 private:
  StepCurve curves_[2];
  bool by_group_;
};

class ForestModel final : public ConditionalSurvivalModel {
 public:
  ForestModel(SurvivalForest forest, double trim, std::size_t dim)
      : ConditionalSurvivalModel(trim, dim), forest_(std::move(forest)),
        jumps_(forest_.jump_times()) {}
  std::string kind() const override { return "rsf"; }
  std::vector<double> jump_times() const override { return jumps_; }

 protected:
  void raw_on_grid(std::span<const double> grid, bool a, std::span<const double> z,
                   std::span<double> left, std::span<double> right) const override {
    StepCurve curve = forest_.survival_curve(a, z);
    curve.evaluate_left_on(grid, left);
    curve.evaluate_right_on(grid, right);
  }

 private:
  SurvivalForest forest_;
  std::vector<double> jumps_;
};

class OracleModel final : public ConditionalSurvivalModel {
 public:
  OracleModel(OracleParams params, double trim, std::size_t dim)
      : ConditionalSurvivalModel(trim, dim), params_(params) {
    const bool needs_two = params.curve == OracleCurve::latent_failure ||
                           params.curve == OracleCurve::scenario1_censoring ||
                           params.curve == OracleCurve::scenario2_censoring;
    if (needs_two && dim < 2) {
      throw ValidationError("oracle curve requires at least two covariates (z1, z2)");
    }
  }
  std::string kind() const override { return "oracle"; }
  std::vector<double> jump_times() const override { return {}; }

 protected:
  void raw_on_grid(std::span<const double> grid, bool a, std::span<const double> z,
                   std::span<double> left, std::span<double> right) const override {
    if (params_.curve == OracleCurve::latent_failure) {
      truth::LatentFailureSurvival s(a, z, params_.beta);
      for (std::size_t g = 0; g < grid.size(); ++g) left[g] = right[g] = s(grid[g]);
      return;
    }
    for (std::size_t g = 0; g < grid.size(); ++g) {
      left[g] = right[g] = value(grid[g], a, z);
    }
  }

 private:
  double value(double t, bool a, std::span<const double> z) const {
    switch (params_.curve) {
      case OracleCurve::unit: return 1.0;
      case OracleCurve::exponential: return std::exp(-params_.rate * t);
      case OracleCurve::exponential_ph: return truth::exponential_ph(t, a, params_.beta);
      case OracleCurve::scenario1_censoring: return truth::scenario1_censoring(t, z);
      case OracleCurve::scenario2_censoring: return truth::scenario2_censoring(t, a, z);
      case OracleCurve::latent_failure: break;
    }
    return 1.0;
  }

  OracleParams params_;
};

}  // namespace

ModelPtr fit_conditional(const NuisanceSpec& spec, const Dataset& data, Target target) {
  spec.validate();
  if (spec.kind == NuisanceKind::oracle) {
    return std::make_shared<OracleModel>(spec.oracle, spec.trim_floor, data.dim());
  }
  if (data.event_count(target) == 0) {
    throw ValidationError(fmt::format("{} model: no {} events in the training data",
                                      spec.name(),
                                      target == Target::failure ? "failure" : "censoring"));
  }
  switch (spec.kind) {
    case NuisanceKind::cox: {
      CoxFit fit = cox_mple(data, CoxDesign::all(data.dim()), target);
      if (!fit.beta.allFinite()) throw ConvergenceError("Cox nuisance model diverged");
      return std::make_shared<CoxModel>(std::move(fit), spec.trim_floor, data.dim());
    }
    case NuisanceKind::product_limit_pooled:
      return std::make_shared<ProductLimitModel>(product_limit(data, target), spec.trim_floor,
                                                 data.dim());
    case NuisanceKind::product_limit_by_group: {
      std::vector<std::size_t> rows[2];
      for (std::size_t i = 0; i < data.size(); ++i) rows[data.group(i) ? 1 : 0].push_back(i);
      if (rows[0].empty() || rows[1].empty()) {
        throw ValidationError("group-wise product-limit model needs subjects in both groups");
      }
      return std::make_shared<ProductLimitModel>(product_limit(data, target, rows[0]),
                                                 product_limit(data, target, rows[1]),
                                                 spec.trim_floor, data.dim());
    }
    case NuisanceKind::forest:
      return std::make_shared<ForestModel>(SurvivalForest::train(data, target, spec.forest),
                                           spec.trim_floor, data.dim());
    case NuisanceKind::oracle: break;
  }
  throw ValidationError("unknown nuisance kind");
}

// ---------------------------------------------------------------------------

std::vector<std::size_t> assign_folds(const Dataset& data, std::size_t k, std::uint64_t seed) {
  const std::size_t n = data.size();
  if (k < 1 || k > n) {
    throw ValidationError(fmt::format("fold count {} must lie in [1, {}]", k, n));
  }
  std::vector<std::size_t> strata[4];
  for (std::size_t i = 0; i < n; ++i) {
    strata[(data.group(i) ? 2 : 0) + (data.delta(i) ? 1 : 0)].push_back(i);
  }
  Rng rng(derive_seed(seed, {0x666f6c64ULL}));
  std::vector<std::size_t> fold_of(n);
  std::size_t counter = 0;
  for (auto& stratum : strata) {
    std::shuffle(stratum.begin(), stratum.end(), rng);
    for (std::size_t i : stratum) fold_of[i] = counter++ % k;
  }
  return fold_of;
}

namespace {

bool needs_events(const NuisanceSpec& spec) { return spec.kind != NuisanceKind::oracle; }

NuisanceSpec with_seed(NuisanceSpec spec, std::uint64_t seed, std::size_t fold, Target target) {
  spec.forest.seed = derive_seed(seed, {static_cast<std::uint64_t>(fold),
                                        target == Target::failure ? 1ULL : 2ULL,
                                        spec.forest.seed});
  return spec;
}

}  // namespace

CrossFitBundle cross_fit(const Dataset& data, std::size_t k, const NuisanceSpec& failure_spec,
                         const NuisanceSpec& censoring_spec, std::uint64_t seed) {
  if (k < 2) throw ValidationError("cross-fitting needs k >= 2 folds");
  failure_spec.validate();
  censoring_spec.validate();
  CrossFitBundle bundle;
  bundle.k = k;
  bundle.fold_of = assign_folds(data, k, seed);
  bundle.train.resize(k);
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (std::size_t m = 0; m < k; ++m) {
      if (bundle.fold_of[i] != m) bundle.train[m].push_back(i);
    }
  }
  for (std::size_t m = 0; m < k; ++m) {
    const auto& rows = bundle.train[m];
    std::size_t groups[2] = {0, 0};
    std::size_t failures = 0;
    std::size_t censorings = 0;
    for (std::size_t i : rows) {
      ++groups[data.group(i) ? 1 : 0];
      failures += data.event(i, Target::failure) ? 1 : 0;
      censorings += data.event(i, Target::censoring) ? 1 : 0;
    }
    const bool missing_events = (needs_events(failure_spec) && failures == 0) ||
                                (needs_events(censoring_spec) && censorings == 0);
    if (rows.empty() || groups[0] == 0 || groups[1] == 0 || missing_events) {
      throw ValidationError(fmt::format(
          "cross-fitting: training set of fold {} lacks a group or target events "
          "({} rows, {} failures, {} censorings); try a smaller k than {}",
          m, rows.size(), failures, censorings, k));
    }
  }
  bundle.failure.resize(k);
  bundle.censoring.resize(k);
  for (std::size_t m = 0; m < k; ++m) {
    Dataset train = data.subset(bundle.train[m]);
    try {
      bundle.failure[m] =
          fit_conditional(with_seed(failure_spec, seed, m, Target::failure), train, Target::failure);
      bundle.censoring[m] = fit_conditional(with_seed(censoring_spec, seed, m, Target::censoring),
                                            train, Target::censoring);
    } catch (const ValidationError& e) {
      throw ValidationError(fmt::format("fold {}: {}", m, e.what()));
    }
  }
  return bundle;
}

CrossFitBundle fit_in_sample(const Dataset& data, const NuisanceSpec& failure_spec,
                             const NuisanceSpec& censoring_spec, std::uint64_t seed) {
  CrossFitBundle bundle;
  bundle.k = 1;
  bundle.fold_of.assign(data.size(), 0);
  bundle.train.resize(1);
  bundle.train[0].resize(data.size());
  std::iota(bundle.train[0].begin(), bundle.train[0].end(), std::size_t{0});
  bundle.failure.push_back(
      fit_conditional(with_seed(failure_spec, seed, 0, Target::failure), data, Target::failure));
  bundle.censoring.push_back(fit_conditional(with_seed(censoring_spec, seed, 0, Target::censoring),
                                             data, Target::censoring));
  return bundle;
}

}  // namespace drcox
