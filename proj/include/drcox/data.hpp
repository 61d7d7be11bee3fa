#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace drcox {

/// Input is malformed or violates a documented precondition.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// An iterative solver failed to reach its tolerance.
class ConvergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Which counting process a fit or curve refers to.
enum class Target { failure, censoring };

struct Observation {
  double time = 0.0;
  bool delta = false;  // true: failure observed
  bool group = false;
  std::vector<double> z;
};

/// Right-censored two-group sample with a fixed covariate dimension.
///
/// Storage is columnar; covariates are row-major n x p. A subject with
/// delta = 0 and time == tau is administratively censored and counts as
/// censored for both the failure and the censoring target.
class Dataset {
 public:
  Dataset() = default;
  Dataset(std::span<const Observation> observations, double tau);
  Dataset(std::vector<double> time, std::vector<char> delta,
          std::vector<char> group, std::vector<double> covariates,
          std::size_t p, double tau);

  std::size_t size() const { return time_.size(); }
  std::size_t dim() const { return p_; }
  double tau() const { return tau_; }

  double time(std::size_t i) const { return time_[i]; }
  bool delta(std::size_t i) const { return delta_[i] != 0; }
  bool group(std::size_t i) const { return group_[i] != 0; }
  std::span<const double> z(std::size_t i) const {
    return {covariates_.data() + i * p_, p_};
  }

  /// Event indicator of subject i for the requested target.
  bool event(std::size_t i, Target target) const {
    if (target == Target::failure) return delta_[i] != 0;
    return delta_[i] == 0 && time_[i] < tau_;
  }

  std::size_t event_count(Target target) const;
  std::size_t group_count(bool a) const;

  Observation observation(std::size_t i) const;

  /// Rows selected by index, with repetition allowed.
  Dataset subset(std::span<const std::size_t> rows) const;

  std::span<const double> times() const { return time_; }

 private:
  void validate() const;

  std::vector<double> time_;
  std::vector<char> delta_;
  std::vector<char> group_;
  std::vector<double> covariates_;
  std::size_t p_ = 0;
  double tau_ = 0.0;
};

/// Reads `time,delta,group,z1,...,zp`. When tau <= 0 the largest time is used.
Dataset read_csv(const std::string& path, double tau = 0.0);
Dataset parse_csv(const std::string& text, double tau = 0.0);
void write_csv(const Dataset& data, const std::string& path);
std::string to_csv(const Dataset& data);

}  // namespace drcox
