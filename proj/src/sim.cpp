#include "drcox/sim.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <fmt/format.h>

#include "drcox/rng.hpp"

namespace drcox {

std::string scenario_name(Scenario s) {
  switch (s) {
    case Scenario::one: return "one";
    case Scenario::two: return "two";
    case Scenario::custom_independent: return "custom-independent";
  }
  return "unknown";
}

Scenario parse_scenario(const std::string& name) {
  if (name == "one" || name == "1") return Scenario::one;
  if (name == "two" || name == "2") return Scenario::two;
  if (name == "custom-independent") return Scenario::custom_independent;
  throw ValidationError(
      fmt::format("unknown scenario '{}' (expected one, two or custom-independent)", name));
}

void ScenarioSpec::validate() const {
  if (n < 20) throw ValidationError(fmt::format("n must be at least 20, got {}", n));
  if (!(tau > 0.0) || !std::isfinite(tau)) {
    throw ValidationError(fmt::format("tau must be positive, got {}", tau));
  }
  if (!std::isfinite(beta_true)) throw ValidationError("beta_true must be finite");
}

double latent_failure_time(double u1, bool a, double beta) {
  return -std::log(0.5 * u1 + 0.5) * std::exp(-beta * (a ? 1.0 : 0.0));
}

SimulatedData generate(const ScenarioSpec& spec) {
  spec.validate();
  Rng rng(splitmix64(spec.seed));
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  std::bernoulli_distribution coin(0.5);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::exponential_distribution<double> expo(1.0);

  const std::size_t n = spec.n;
  std::vector<double> time(n), full_time(n), cov(2 * n);
  std::vector<char> delta(n), full_delta(n), group(n);
  double full_tau = spec.tau;
  for (std::size_t i = 0; i < n; ++i) {
    const double u1 = unif(rng);
    const bool a = coin(rng);
    const double z1 = 0.5 * u1 + normal(rng);
    const double z2 = u1 * u1 + 0.3 * normal(rng);

    double t = 0.0;
    if (spec.scenario == Scenario::custom_independent) {
      t = expo(rng) * std::exp(-spec.beta_true * (a ? 1.0 : 0.0));
    } else {
      t = latent_failure_time(u1, a, spec.beta_true);
    }

    double c = 0.0;
    if (spec.scenario == Scenario::two) {
      const double u2 = std::exp(normal(rng));
      if (z1 > 0.0) {
        c = std::exp(-0.2 * (a ? 1.0 : 0.0) - 2.0 * std::sqrt(std::abs(z2)) + 0.3 * u2);
      } else {
        c = std::exp(2.4 - 0.3 * (a ? 1.0 : 0.0) + 0.5 * std::sqrt(std::abs(z1)) +
                     0.5 * std::sqrt(std::abs(z2)) - u2);
      }
    } else {
      c = expo(rng) / std::exp(-1.0 + 2.0 * z2);
    }

    group[i] = a ? 1 : 0;
    cov[2 * i] = z1;
    cov[2 * i + 1] = z2;
    const double follow = std::min(c, spec.tau);
    if (t <= follow) {
      time[i] = t;
      delta[i] = 1;
    } else {
      time[i] = follow;
      delta[i] = 0;
    }
    full_time[i] = t;
    full_delta[i] = 1;
    full_tau = std::max(full_tau, t);
  }
  SimulatedData out{Dataset(std::move(time), std::move(delta), group, cov, 2, spec.tau),
                    Dataset(std::move(full_time), std::move(full_delta), std::move(group),
                            std::move(cov), 2, full_tau)};
  return out;
}

}  // namespace drcox
