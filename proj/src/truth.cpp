#include "drcox/truth.hpp"

#include <algorithm>
#include <cmath>

#include "drcox/data.hpp"

namespace drcox::truth {

namespace {

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

}  // namespace

double exponential_ph(double t, bool a, double beta, double rate0) {
  return std::exp(-t * rate0 * std::exp(beta * (a ? 1.0 : 0.0)));
}

double scenario1_censoring(double t, std::span<const double> z) {
  if (z.size() < 2) throw ValidationError("scenario 1 censoring needs z1, z2");
  return std::exp(-t * std::exp(-1.0 + 2.0 * z[1]));
}

double scenario2_censoring(double t, bool a, std::span<const double> z) {
  if (z.size() < 2) throw ValidationError("scenario 2 censoring needs z1, z2");
  if (t <= 0.0) return 1.0;
  const double av = a ? 1.0 : 0.0;
  const double log_t = std::log(t);
  // log U2 ~ N(0, 1), so P(U2 <= u) = Phi(log u) for u > 0.
  auto u2_cdf = [](double u) { return u <= 0.0 ? 0.0 : normal_cdf(std::log(u)); };
  if (z[0] > 0.0) {
    // log C = -0.2 a - 2 sqrt|z2| + 0.3 U2  =>  C >= t  <=>  U2 >= u*
    const double threshold = (log_t + 0.2 * av + 2.0 * std::sqrt(std::abs(z[1]))) / 0.3;
    return 1.0 - u2_cdf(threshold);
  }
  // log C = mu - U2  =>  C >= t  <=>  U2 <= mu - log t
  const double mu = 2.4 - 0.3 * av + 0.5 * std::sqrt(std::abs(z[0])) +
                    0.5 * std::sqrt(std::abs(z[1]));
  return u2_cdf(mu - log_t);
}

LatentFailureSurvival::LatentFailureSurvival(bool a, std::span<const double> z,
                                             double beta, int nodes)
    : rate_(std::exp(beta * (a ? 1.0 : 0.0))) {
  if (z.size() < 2) throw ValidationError("latent failure survival needs z1, z2");
  if (nodes < 3) nodes = 3;
  step_ = 2.0 / (nodes - 1);
  std::vector<double> density(static_cast<std::size_t>(nodes));
  double log_max = -INFINITY;
  std::vector<double> logd(density.size());
  for (std::size_t k = 0; k < density.size(); ++k) {
    const double u = -1.0 + step_ * static_cast<double>(k);
    const double r1 = z[0] - 0.5 * u;
    const double r2 = (z[1] - u * u) / 0.3;
    logd[k] = -0.5 * (r1 * r1 + r2 * r2);
    log_max = std::max(log_max, logd[k]);
  }
  for (std::size_t k = 0; k < density.size(); ++k) density[k] = std::exp(logd[k] - log_max);
  cdf_.assign(density.size(), 0.0);
  for (std::size_t k = 1; k < density.size(); ++k) {
    cdf_[k] = cdf_[k - 1] + 0.5 * (density[k - 1] + density[k]) * step_;
  }
  const double total = cdf_.back();
  for (double& c : cdf_) c /= total;
}

double LatentFailureSurvival::cdf(double u) const {
  if (u <= -1.0) return 0.0;
  if (u >= 1.0) return 1.0;
  const double pos = (u + 1.0) / step_;
  auto k = static_cast<std::size_t>(pos);
  if (k + 1 >= cdf_.size()) return 1.0;
  const double frac = pos - static_cast<double>(k);
  return cdf_[k] + frac * (cdf_[k + 1] - cdf_[k]);
}

double LatentFailureSurvival::operator()(double t) const {
  if (t <= 0.0) return 1.0;
  // T >= t  <=>  U1 <= 2 exp(-t e^{beta a}) - 1
  return cdf(2.0 * std::exp(-t * rate_) - 1.0);
}

}  // namespace drcox::truth
