#pragma once

#include <span>
#include <vector>

namespace drcox::truth {

// Closed-form conditional survival functions P(. >= t | a, z) of the
// simulation designs. They back the oracle nuisance models.

/// Exponential failure time independent of z: exp(-t * rate0 * e^{beta a}).
double exponential_ph(double t, bool a, double beta, double rate0 = 1.0);

/// Scenario 1 censoring: hazard exp(-1 + 2 z2), constant in time.
double scenario1_censoring(double t, std::span<const double> z);

/// Scenario 2 censoring: lognormal mixture switching on the sign of z1.
double scenario2_censoring(double t, bool a, std::span<const double> z);

/// Failure survival of the shared design, T = -log(0.5 U1 + 0.5) e^{-beta A},
/// marginalised over U1 | z (Z1 ~ N(0.5 U1, 1), Z2 ~ N(U1^2, 0.3^2)) by
/// quadrature on a fine U1 grid.
class LatentFailureSurvival {
 public:
  LatentFailureSurvival(bool a, std::span<const double> z, double beta,
                        int nodes = 2001);
  double operator()(double t) const;

 private:
  double cdf(double u) const;

  double rate_;
  std::vector<double> cdf_;
  double step_;
};

}  // namespace drcox::truth
