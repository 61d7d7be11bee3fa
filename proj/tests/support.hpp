#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <tuple>
#include <vector>

#include "drcox/data.hpp"

namespace testing {

// (time, delta, group) rows without covariates.
inline drcox::Dataset rows(const std::vector<std::tuple<double, int, int>>& r, double tau) {
  std::vector<drcox::Observation> obs;
  for (const auto& [t, d, a] : r) obs.push_back({t, d != 0, a != 0, {}});
  return drcox::Dataset(obs, tau);
}

// Random censored two-group data with p covariates. Times are rounded to a
// coarse grid when `ties` is set.
inline drcox::Dataset random_data(std::uint64_t seed, std::size_t n, std::size_t p,
                                  bool ties = false, double censor_rate = 0.5,
                                  double tau = 3.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  std::exponential_distribution<double> expo(1.0);
  std::bernoulli_distribution coin(0.5);
  std::vector<drcox::Observation> obs;
  for (std::size_t i = 0; i < n; ++i) {
    drcox::Observation o;
    o.group = coin(rng);
    for (std::size_t j = 0; j < p; ++j) o.z.push_back(normal(rng));
    double lp = (o.group ? -0.7 : 0.0) + (p > 0 ? 0.4 * o.z[0] : 0.0);
    double t = expo(rng) * std::exp(-lp);
    double c = censor_rate > 0.0 ? expo(rng) / censor_rate : 1e300;
    if (ties) {
      t = std::ceil(t * 8.0) / 8.0;
      c = std::ceil(c * 8.0) / 8.0;
    }
    const double follow = std::min(c, tau);
    o.delta = t <= follow;
    o.time = o.delta ? t : follow;
    obs.push_back(o);
  }
  return drcox::Dataset(obs, tau);
}

// Direct Breslow partial likelihood pieces for the A-only model, with a
// weight w(j, t) on subject j's contributions at event time t.
struct BruteCox {
  double loglik = 0.0;
  double score = 0.0;
  double info = 0.0;
};

template <typename Weight>
BruteCox brute_cox(const drcox::Dataset& d, double beta, Weight weight) {
  BruteCox out;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (!d.delta(i)) continue;
    const double t = d.time(i);
    double s0 = 0.0, s1 = 0.0;
    for (std::size_t j = 0; j < d.size(); ++j) {
      if (d.time(j) < t) continue;
      const double e = weight(j, t) * std::exp(beta * (d.group(j) ? 1.0 : 0.0));
      s0 += e;
      s1 += e * (d.group(j) ? 1.0 : 0.0);
    }
    const double w = weight(i, t);
    const double a = d.group(i) ? 1.0 : 0.0;
    out.loglik += w * (beta * a - std::log(s0));
    out.score += w * (a - s1 / s0);
    out.info += w * (s1 / s0 - (s1 / s0) * (s1 / s0));
  }
  return out;
}

inline BruteCox brute_cox(const drcox::Dataset& d, double beta) {
  return brute_cox(d, beta, [](std::size_t, double) { return 1.0; });
}

}  // namespace testing
