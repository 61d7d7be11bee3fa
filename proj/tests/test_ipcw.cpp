#include <doctest.h>

#include <cmath>
#include <vector>

#include "drcox/ipcw.hpp"
#include "drcox/nuisance.hpp"
#include "drcox/survival.hpp"
#include "support.hpp"

using namespace drcox;
using doctest::Approx;

namespace {

ModelPtr unit_model(const Dataset& d) {
  return fit_conditional(NuisanceSpec::oracle_curve({OracleCurve::unit}), d, Target::censoring);
}

Dataset scaled(const Dataset& d, double c) {
  std::vector<Observation> obs;
  for (std::size_t i = 0; i < d.size(); ++i) {
    Observation o = d.observation(i);
    o.time *= c;
    obs.push_back(o);
  }
  return Dataset(obs, d.tau() * c);
}

}  // namespace

TEST_CASE("unit weights give the Cox score") {
  const auto d = testing::rows({{1, 1, 1}, {3, 1, 1}, {2, 1, 0}, {4, 1, 0}}, 4.0);
  const ModelPtr unit = unit_model(d);
  CHECK(ipcw_score(0.0, d, *unit) == Approx(2.0 / 3.0 / 4.0).epsilon(1e-14));
}

TEST_CASE("unit weights reproduce the partial-likelihood estimate") {
  for (bool ties : {false, true}) {
    const Dataset d = testing::random_data(31, 300, 1, ties);
    const ModelPtr unit = unit_model(d);
    const CoxFit cox = cox_mple(d, CoxDesign::group_only());
    const IpcwFit fit = solve_ipcw(d, *unit);
    REQUIRE(fit.converged);
    CHECK(fit.beta_hat == Approx(cox.beta[0]).epsilon(1e-10));
    CHECK(fit.min_censoring_survival == 1.0);
    // With unit weights the sandwich is the Lin-Wei robust SE.
    CHECK(ipcw_sandwich_se(fit, d, *unit) == Approx(cox_robust_se(d, cox)[0]).epsilon(1e-8));
  }
}

TEST_CASE("weighted score matches a direct evaluation") {
  const Dataset d = testing::random_data(32, 150, 1, true);
  const ModelPtr sc =
      fit_conditional(NuisanceSpec::product_limit(true, 0.01), d, Target::censoring);
  const IpcwTerms terms(d, *sc);
  auto w = [&](std::size_t j, double t) {
    return 1.0 / sc->predict_survival(t, d.group(j), d.z(j));
  };
  for (double beta : {-1.0, -0.3, 0.0, 0.8}) {
    const testing::BruteCox b = testing::brute_cox(d, beta, w);
    const double n = static_cast<double>(d.size());
    CHECK(terms.score(beta) == Approx(b.score / n).epsilon(1e-11));
    CHECK(terms.score_derivative(beta) == Approx(-b.info / n).epsilon(1e-11));
    CHECK(ipcw_score(beta, d, *sc) == Approx(b.score / n).epsilon(1e-11));
    double sum = 0.0;
    for (double u : terms.residuals(beta)) sum += u;
    CHECK(sum == Approx(b.score).epsilon(1e-9));
  }
}

TEST_CASE("score derivative is negative and matches finite differences") {
  const Dataset d = testing::random_data(33, 200, 2);
  const ModelPtr sc = fit_conditional(NuisanceSpec::cox(), d, Target::censoring);
  const IpcwTerms terms(d, *sc);
  for (double beta : {-2.0, -0.5, 0.0, 1.0}) {
    const double h = 1e-5;
    const double fd = (terms.score(beta + h) - terms.score(beta - h)) / (2 * h);
    CHECK(terms.score_derivative(beta) < 0.0);
    CHECK(terms.score_derivative(beta) == Approx(fd).epsilon(1e-6));
  }
}

TEST_CASE("duplicating every subject leaves the normalized score unchanged") {
  const Dataset d = testing::random_data(34, 80, 1);
  std::vector<Observation> obs;
  for (int copy = 0; copy < 2; ++copy) {
    for (std::size_t i = 0; i < d.size(); ++i) obs.push_back(d.observation(i));
  }
  const Dataset dd(obs, d.tau());
  const ModelPtr sc = fit_conditional(NuisanceSpec::product_limit(true, 0.01), d, Target::censoring);
  for (double beta : {-0.5, 0.4}) {
    CHECK(ipcw_score(beta, dd, *sc) == Approx(ipcw_score(beta, d, *sc)).epsilon(1e-12));
  }
}

TEST_CASE("no failures gives a zero score") {
  const auto d = testing::rows({{1, 0, 1}, {2, 0, 0}, {3, 0, 1}}, 3.0);
  const ModelPtr unit = unit_model(d);
  CHECK(ipcw_score(0.3, d, *unit) == 0.0);
}

TEST_CASE("estimate is invariant to rescaling time") {
  const Dataset d = testing::random_data(35, 250, 1, false, 0.8);
  const Dataset d2 = scaled(d, 3.5);
  const ModelPtr sc1 = fit_conditional(NuisanceSpec::product_limit(true, 0.01), d, Target::censoring);
  const ModelPtr sc2 = fit_conditional(NuisanceSpec::product_limit(true, 0.01), d2, Target::censoring);
  const IpcwFit f1 = solve_ipcw(d, *sc1);
  const IpcwFit f2 = solve_ipcw(d2, *sc2);
  REQUIRE(f1.converged);
  REQUIRE(f2.converged);
  CHECK(f1.beta_hat == Approx(f2.beta_hat).epsilon(1e-9));
  CHECK(ipcw_sandwich_se(f1, d, *sc1) == Approx(ipcw_sandwich_se(f2, d2, *sc2)).epsilon(1e-9));
}

TEST_CASE("solution is a root of the weighted score") {
  const Dataset d = testing::random_data(36, 400, 2);
  const ModelPtr sc = fit_conditional(NuisanceSpec::cox(), d, Target::censoring);
  const IpcwFit fit = solve_ipcw(d, *sc);
  REQUIRE(fit.converged);
  CHECK(std::abs(ipcw_score(fit.beta_hat, d, *sc)) <= 1e-8);
  CHECK(fit.min_censoring_survival <= fit.max_censoring_survival);
  CHECK(fit.min_censoring_survival >= 0.01);
}
