#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "drcox/data.hpp"

namespace drcox {

enum class Scenario { one, two, custom_independent };

std::string scenario_name(Scenario s);
Scenario parse_scenario(const std::string& name);

struct ScenarioSpec {
  Scenario scenario = Scenario::one;
  std::size_t n = 500;
  double tau = 1.0;
  double beta_true = -1.0;
  std::uint64_t seed = 1;

  void validate() const;
};

/// Observed sample plus the uncensored shadow: every T observed as a failure,
/// same groups and covariates, tau raised to the largest T.
struct SimulatedData {
  Dataset observed;
  Dataset full;
};

/// T = -log(0.5 u1 + 0.5) e^{-beta a}.
double latent_failure_time(double u1, bool a, double beta);

/// Covariates are (z1, z2) for every scenario.
SimulatedData generate(const ScenarioSpec& spec);

}  // namespace drcox
