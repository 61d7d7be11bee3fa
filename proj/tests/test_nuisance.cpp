#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "drcox/forest.hpp"
#include "drcox/nuisance.hpp"
#include "drcox/survival.hpp"
#include "drcox/truth.hpp"
#include "support.hpp"

using namespace drcox;

namespace {

// Textbook two-sample log-rank: (O1 - E1) / sqrt(V) over distinct event times.
double brute_logrank(const std::vector<double>& time, const std::vector<char>& event,
                     const std::vector<char>& left) {
  std::set<double> times;
  for (std::size_t i = 0; i < time.size(); ++i) {
    if (event[i]) times.insert(time[i]);
  }
  double o_minus_e = 0.0, var = 0.0;
  for (double t : times) {
    double n = 0, n1 = 0, d = 0, d1 = 0;
    for (std::size_t i = 0; i < time.size(); ++i) {
      if (time[i] < t) continue;
      n += 1;
      n1 += left[i];
      if (time[i] == t && event[i]) {
        d += 1;
        d1 += left[i];
      }
    }
    o_minus_e += d1 - d * n1 / n;
    if (n > 1) var += n1 * (n - n1) * d * (n - d) / (n * n * (n - 1));
  }
  return var > 0 ? std::abs(o_minus_e) / std::sqrt(var) : 0.0;
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

// P(T >= t | a, z) for the latent-U1 design, by Simpson's rule on the
// posterior of U1 ~ U(-1, 1) given z.
double latent_survival_simpson(double t, bool a, double z1, double z2, double beta) {
  auto dens = [&](double u) {
    const double r1 = z1 - 0.5 * u;
    const double r2 = (z2 - u * u) / 0.3;
    return std::exp(-0.5 * (r1 * r1 + r2 * r2));
  };
  auto simpson = [&](double lo, double hi) {
    if (hi <= lo) return 0.0;
    const int m = 20000;
    const double h = (hi - lo) / m;
    double s = dens(lo) + dens(hi);
    for (int k = 1; k < m; ++k) s += (k % 2 ? 4.0 : 2.0) * dens(lo + k * h);
    return s * h / 3.0;
  };
  const double c = 2.0 * std::exp(-t * std::exp(beta * (a ? 1.0 : 0.0))) - 1.0;
  return simpson(-1.0, std::clamp(c, -1.0, 1.0)) / simpson(-1.0, 1.0);
}

Dataset scenario_like(std::uint64_t seed, std::size_t n) {
  return testing::random_data(seed, n, 2, false, 0.5, 3.0);
}

}  // namespace

TEST_CASE("log-rank statistic matches the textbook formula") {
  const std::vector<double> time{1, 2, 3, 4, 5, 6};
  const std::vector<char> event{1, 1, 0, 1, 1, 1};
  const std::vector<char> left{1, 1, 1, 0, 0, 0};
  // Hand value: left group fails at 1, 2 among risk sets of 6 and 5.
  const double num = (1 - 3.0 / 6) + (1 - 2.0 / 5);
  const double var = 3.0 * 3 / 36 + 2.0 * 3 / 25;
  CHECK(logrank_statistic(time, event, left) == doctest::Approx(num / std::sqrt(var)).epsilon(1e-12));
  CHECK(logrank_statistic(time, event, left) ==
        doctest::Approx(brute_logrank(time, event, left)).epsilon(1e-12));
}

TEST_CASE("log-rank statistic: identical children give zero, separated children positive") {
  const std::vector<double> time{1, 1, 2, 2, 3, 3};
  const std::vector<char> event{1, 1, 1, 1, 1, 1};
  const std::vector<char> alt{1, 0, 1, 0, 1, 0};
  CHECK(logrank_statistic(time, event, alt) == doctest::Approx(0.0));
  const std::vector<char> early{1, 1, 0, 0, 0, 0};
  CHECK(logrank_statistic(time, event, early) > 1.0);
}

TEST_CASE("log-rank statistic agrees with brute force on random data with ties") {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> tgrid(1, 6);
  std::bernoulli_distribution coin(0.6);
  for (int rep = 0; rep < 30; ++rep) {
    const std::size_t n = 8 + rep;
    std::vector<double> time(n);
    std::vector<char> event(n), left(n);
    for (std::size_t i = 0; i < n; ++i) {
      time[i] = tgrid(rng);
      event[i] = coin(rng);
      left[i] = i % 3 == 0;
    }
    CHECK(logrank_statistic(time, event, left) ==
          doctest::Approx(brute_logrank(time, event, left)).epsilon(1e-10));
  }
}

TEST_CASE("incremental split scan equals brute force at every cutpoint") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> normal;
  std::uniform_int_distribution<int> tgrid(1, 10);
  std::bernoulli_distribution coin(0.7);
  for (int rep = 0; rep < 10; ++rep) {
    const std::size_t n = 40;
    std::vector<double> time(n), value(n);
    std::vector<char> event(n);
    for (std::size_t i = 0; i < n; ++i) {
      time[i] = tgrid(rng);
      event[i] = coin(rng);
      value[i] = std::round(normal(rng) * 4.0) / 4.0;
    }
    const int min_node = 3;
    const auto scan = detail::logrank_split_scan(time, event, value, min_node);
    REQUIRE(!scan.empty());
    std::set<double> seen;
    for (const auto& [cut, stat] : scan) {
      std::vector<char> left(n);
      std::size_t n_left = 0;
      for (std::size_t i = 0; i < n; ++i) {
        left[i] = value[i] <= cut;
        n_left += left[i];
      }
      CHECK(n_left >= static_cast<std::size_t>(min_node));
      CHECK(n - n_left >= static_cast<std::size_t>(min_node));
      CHECK(std::abs(stat) == doctest::Approx(brute_logrank(time, event, left)).epsilon(1e-9));
      seen.insert(cut);
    }
    // Every admissible observed cutpoint is visited.
    std::vector<double> sorted = value;
    std::sort(sorted.begin(), sorted.end());
    sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
    for (double cut : sorted) {
      const auto n_left = static_cast<std::size_t>(
          std::count_if(value.begin(), value.end(), [&](double v) { return v <= cut; }));
      if (n_left >= 3 && n - n_left >= 3) CHECK(seen.count(cut) == 1);
    }
  }
}

TEST_CASE("rsf_logrank_split rejects an empty child") {
  const Dataset d = scenario_like(3, 30);
  std::vector<std::size_t> rows(d.size());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  CHECK_THROWS_AS(rsf_logrank_split(d, rows, Target::failure, 1, 1e9), ValidationError);
  CHECK_THROWS_AS(rsf_logrank_split(d, rows, Target::failure, 9, 0.0), ValidationError);
  CHECK(rsf_logrank_split(d, rows, Target::failure, 0, 0.5) >= 0.0);
}

TEST_CASE("forest parameters are validated") {
  ForestParams p;
  p.n_trees = 0;
  CHECK_THROWS_AS(p.validate(), ValidationError);
  p = ForestParams{};
  p.min_node_size = 0;
  CHECK_THROWS_AS(p.validate(), ValidationError);
  p = ForestParams{};
  p.mtry = 4;
  CHECK_THROWS_AS(p.resolved_mtry(3), ValidationError);
  CHECK(ForestParams{}.resolved_mtry(3) == 2);
}

TEST_CASE("single unsplit tree without resampling is pooled Nelson-Aalen") {
  for (Target target : {Target::failure, Target::censoring}) {
    const Dataset d = scenario_like(21, 80);
    ForestParams p;
    p.n_trees = 1;
    p.bootstrap = false;
    p.mtry = static_cast<int>(d.dim()) + 1;
    p.min_node_size = static_cast<int>(d.size());
    const SurvivalForest forest = SurvivalForest::train(d, target, p);
    CHECK(forest.leaf_count() == 1);
    const StepCurve na = nelson_aalen(d, target);
    for (int a = 0; a < 2; ++a) {
      const StepCurve s = forest.survival_curve(a == 1, d.z(0));
      for (double t = 0.0; t <= 3.2; t += 0.01) {
        CHECK(s.evaluate_left(t) == doctest::Approx(std::exp(-na.evaluate_left(t))).epsilon(1e-12));
        CHECK(s.evaluate_right(t) == doctest::Approx(std::exp(-na.evaluate_right(t))).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("forest predictions are monotone, bounded and deterministic") {
  const Dataset d = scenario_like(8, 200);
  ForestParams p;
  p.n_trees = 20;
  p.seed = 99;
  const SurvivalForest f1 = SurvivalForest::train(d, Target::failure, p);
  const SurvivalForest f2 = SurvivalForest::train(d, Target::failure, p);
  CHECK(f1.tree_count() == 20);
  for (std::size_t i = 0; i < 10; ++i) {
    const StepCurve c1 = f1.survival_curve(d.group(i), d.z(i));
    const StepCurve c2 = f2.survival_curve(d.group(i), d.z(i));
    CHECK(c1.is_nonincreasing());
    CHECK(c1.value_at_zero() == doctest::Approx(1.0));
    CHECK(c1.final_value() >= 0.0);
    CHECK(c1.values_after() == c2.values_after());
  }
}

TEST_CASE("oracle curves reproduce their closed forms") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> ut(0.0, 2.0), uz(-1.5, 1.5);
  const Dataset d = scenario_like(1, 30);
  const double floor = 1e-12;
  auto model = [&](OracleCurve c, double rate = 1.0, double beta = -1.0) {
    return fit_conditional(NuisanceSpec::oracle_curve({c, rate, beta}, floor), d,
                           Target::censoring);
  };
  const ModelPtr unit = model(OracleCurve::unit);
  const ModelPtr expo = model(OracleCurve::exponential, 0.7);
  const ModelPtr ph = model(OracleCurve::exponential_ph, 1.0, -1.0);
  const ModelPtr s1 = model(OracleCurve::scenario1_censoring);
  const ModelPtr s2 = model(OracleCurve::scenario2_censoring);
  for (int k = 0; k < 100; ++k) {
    const double t = ut(rng);
    const bool a = k % 2 == 1;
    const std::vector<double> z{uz(rng), uz(rng)};
    const double av = a ? 1.0 : 0.0;
    CHECK(unit->predict_survival(t, a, z) == 1.0);
    CHECK(expo->predict_survival(t, a, z) ==
          doctest::Approx(std::max(floor, std::exp(-0.7 * t))).epsilon(1e-12));
    CHECK(ph->predict_survival(t, a, z) ==
          doctest::Approx(std::max(floor, std::exp(-t * std::exp(-av)))).epsilon(1e-12));
    CHECK(s1->predict_survival(t, a, z) ==
          doctest::Approx(std::max(floor, std::exp(-t * std::exp(-1.0 + 2.0 * z[1])))).epsilon(1e-12));
    double want2 = 0.0;
    if (z[0] > 0.0) {
      // C = exp(m + 0.3 U2), U2 lognormal.
      const double m = -0.2 * av - 2.0 * std::sqrt(std::abs(z[1]));
      const double x = (std::log(t) - m) / 0.3;
      want2 = x <= 0.0 ? 1.0 : 1.0 - normal_cdf(std::log(x));
    } else {
      const double m = 2.4 - 0.3 * av + 0.5 * std::sqrt(std::abs(z[0])) +
                       0.5 * std::sqrt(std::abs(z[1]));
      const double y = m - std::log(t);
      want2 = y <= 0.0 ? 0.0 : normal_cdf(std::log(y));
    }
    CHECK(s2->predict_survival(t, a, z) == doctest::Approx(std::max(floor, want2)).epsilon(1e-12));
  }
}

TEST_CASE("latent failure oracle matches independent quadrature") {
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> ut(0.0, 3.0), uz1(-1.5, 1.5), uz2(-0.3, 1.3);
  const Dataset d = scenario_like(1, 30);
  const ModelPtr m = fit_conditional(
      NuisanceSpec::oracle_curve({OracleCurve::latent_failure, 1.0, -1.0}, 1e-12), d,
      Target::failure);
  for (int k = 0; k < 100; ++k) {
    const double t = ut(rng);
    const bool a = k % 2 == 0;
    const std::vector<double> z{uz1(rng), uz2(rng)};
    const double want = latent_survival_simpson(t, a, z[0], z[1], -1.0);
    CHECK(m->predict_survival(t, a, z) == doctest::Approx(std::max(1e-12, want)).epsilon(1e-5));
  }
}

TEST_CASE("scenario 1 censoring oracle: trimming and hand values") {
  const Dataset d = scenario_like(1, 30);
  const ModelPtr m = fit_conditional(
      NuisanceSpec::oracle_curve({OracleCurve::scenario1_censoring, 1.0, -1.0}, 0.01), d,
      Target::censoring);
  const std::vector<double> high{0.0, 2.0};
  const std::vector<double> mid{0.0, 0.5};
  CHECK(m->predict_survival(1.0, false, high) == doctest::Approx(0.01).epsilon(1e-12));
  CHECK(m->predict_survival(0.5, true, mid) == doctest::Approx(std::exp(-0.5)).epsilon(1e-12));
}

TEST_CASE("fitted models are floored, monotone and start at one") {
  const Dataset d = scenario_like(4, 150);
  ForestParams fp;
  fp.n_trees = 10;
  const std::vector<NuisanceSpec> specs{NuisanceSpec::cox(0.05),
                                        NuisanceSpec::product_limit(false, 0.05),
                                        NuisanceSpec::product_limit(true, 0.05),
                                        NuisanceSpec::random_forest(fp, 0.05)};
  std::vector<double> grid;
  for (double t = 0.0; t <= 3.5; t += 0.05) grid.push_back(t);
  for (const auto& spec : specs) {
    for (Target target : {Target::failure, Target::censoring}) {
      const ModelPtr m = fit_conditional(spec, d, target);
      for (std::size_t i = 0; i < 20; ++i) {
        std::vector<double> left(grid.size()), right(grid.size());
        m->predict_on_grid(grid, d.group(i), d.z(i), left, right);
        CHECK(left[0] == doctest::Approx(1.0));
        double prev = 1.0;
        for (std::size_t g = 0; g < grid.size(); ++g) {
          CHECK(left[g] <= prev + 1e-15);
          CHECK(right[g] <= left[g] + 1e-15);
          CHECK(right[g] >= 0.05 - 1e-15);
          CHECK(left[g] <= 1.0);
          prev = right[g];
          CHECK(m->predict_survival(grid[g], d.group(i), d.z(i)) >= 0.05 - 1e-15);
        }
      }
    }
  }
}

TEST_CASE("covariate dimension mismatch is rejected") {
  const Dataset d = scenario_like(4, 60);
  const ModelPtr m = fit_conditional(NuisanceSpec::cox(), d, Target::failure);
  const std::vector<double> z{0.1};
  CHECK_THROWS_AS(m->predict_survival(0.5, true, z), ValidationError);
}

TEST_CASE("pooled product-limit model equals the product-limit curve") {
  const Dataset d = testing::random_data(9, 120, 1, true);
  for (Target target : {Target::failure, Target::censoring}) {
    const ModelPtr m = fit_conditional(NuisanceSpec::product_limit(false, 1e-9), d, target);
    const StepCurve pl = product_limit(d, target);
    for (double t = 0.0; t <= 3.5; t += 0.0625) {
      CHECK(m->predict_survival(t, true, d.z(0)) ==
            doctest::Approx(std::max(1e-9, pl.evaluate_left(t))).epsilon(1e-12));
      CHECK(m->predict_survival_after(t, false, d.z(1)) ==
            doctest::Approx(std::max(1e-9, pl.evaluate_right(t))).epsilon(1e-12));
    }
  }
}

TEST_CASE("Cox model predicts exp(-Lambda0 e^{lp})") {
  const Dataset d = testing::random_data(10, 200, 0);
  const CoxFit fit = cox_mple(d, CoxDesign::group_only());
  const ModelPtr m = fit_conditional(NuisanceSpec::cox(1e-9), d, Target::failure);
  for (double t = 0.05; t <= 3.0; t += 0.1) {
    for (int a = 0; a < 2; ++a) {
      const double lp = fit.beta[0] * a;
      CHECK(m->predict_survival(t, a == 1, {}) ==
            doctest::Approx(std::max(1e-9, std::exp(-fit.baseline.evaluate_left(t) * std::exp(lp))))
                .epsilon(1e-10));
    }
  }
}

TEST_CASE("cross-fitting folds are balanced, honest and reproducible") {
  const Dataset d = scenario_like(12, 10);
  const auto folds = assign_folds(d, 5, 7);
  std::vector<int> sizes(5, 0);
  for (std::size_t f : folds) sizes.at(f)++;
  for (int s : sizes) CHECK(s == 2);

  const Dataset big = scenario_like(13, 103);
  const auto bundle = cross_fit(big, 5, NuisanceSpec::cox(), NuisanceSpec::cox(), 3);
  REQUIRE(bundle.k == 5);
  std::vector<int> bsize(5, 0);
  for (std::size_t f : bundle.fold_of) bsize.at(f)++;
  CHECK(*std::max_element(bsize.begin(), bsize.end()) -
            *std::min_element(bsize.begin(), bsize.end()) <=
        1);
  for (std::size_t m = 0; m < 5; ++m) {
    for (std::size_t r : bundle.train[m]) CHECK(bundle.fold_of[r] != m);
    CHECK(bundle.train[m].size() == big.size() - static_cast<std::size_t>(bsize[m]));
  }

  ForestParams fp;
  fp.n_trees = 5;
  const auto a1 = cross_fit(big, 5, NuisanceSpec::random_forest(fp), NuisanceSpec::cox(), 42);
  const auto a2 = cross_fit(big, 5, NuisanceSpec::random_forest(fp), NuisanceSpec::cox(), 42);
  CHECK(a1.fold_of == a2.fold_of);
  for (std::size_t i = 0; i < big.size(); i += 7) {
    for (double t = 0.1; t < 3.0; t += 0.3) {
      CHECK(a1.failure_model(i).predict_survival(t, big.group(i), big.z(i)) ==
            a2.failure_model(i).predict_survival(t, big.group(i), big.z(i)));
    }
  }
}

TEST_CASE("leave-one-out with product-limit nuisances") {
  const Dataset d = testing::random_data(14, 12, 0);
  const auto bundle = cross_fit(d, d.size(), NuisanceSpec::product_limit(false, 1e-9),
                                NuisanceSpec::product_limit(false, 1e-9), 1);
  for (std::size_t i = 0; i < d.size(); ++i) {
    std::vector<std::size_t> rest;
    for (std::size_t j = 0; j < d.size(); ++j) {
      if (j != i) rest.push_back(j);
    }
    const StepCurve pl = product_limit(d.subset(rest), Target::censoring);
    for (double t = 0.0; t <= 3.0; t += 0.05) {
      CHECK(bundle.censoring_model(i).predict_survival(t, false, {}) ==
            doctest::Approx(std::max(1e-9, pl.evaluate_left(t))).epsilon(1e-12));
    }
  }
}

TEST_CASE("infeasible fold counts are rejected with advice") {
  // One censoring event: the fold holding it leaves no censorings to train on.
  std::vector<std::tuple<double, int, int>> r;
  for (int i = 0; i < 20; ++i) r.emplace_back(0.1 * (i + 1), i == 7 ? 0 : 1, i % 2);
  const Dataset d = testing::rows(r, 3.0);
  try {
    cross_fit(d, 5, NuisanceSpec::cox(), NuisanceSpec::cox(), 1);
    FAIL("expected a ValidationError");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("smaller k") != std::string::npos);
  }
  CHECK_THROWS_AS(cross_fit(d, 21, NuisanceSpec::cox(), NuisanceSpec::cox(), 1), ValidationError);
  CHECK_THROWS_AS(cross_fit(d, 0, NuisanceSpec::cox(), NuisanceSpec::cox(), 1), ValidationError);
}
