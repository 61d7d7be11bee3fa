#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "drcox/data.hpp"
#include "drcox/step_curve.hpp"

namespace drcox {

struct ForestParams {
  int n_trees = 250;
  int mtry = 0;  // 0: ceil(sqrt(p + 1))
  int min_node_size = 15;
  bool bootstrap = true;
  std::uint64_t seed = 1;

  void validate() const;
  /// Effective mtry for `features` candidate columns (A plus p covariates).
  int resolved_mtry(std::size_t features) const;
};

/// Standardized two-sample log-rank statistic between the subjects flagged in
/// `left` and the rest, with the hypergeometric variance. Zero when the
/// variance vanishes.
double logrank_statistic(std::span<const double> time, std::span<const char> event,
                         std::span<const char> left);

/// Log-rank statistic for splitting `rows` at `feature <= cutpoint`, where
/// feature 0 is the group indicator and feature j >= 1 is z_j.
double rsf_logrank_split(const Dataset& data, std::span<const std::size_t> rows,
                         Target target, std::size_t feature, double cutpoint);

namespace detail {
/// Signed log-rank statistics of every admissible cutpoint `value <= cut`
/// (both children >= min_node_size), computed incrementally as the forest
/// does. Exposed for testing.
std::vector<std::pair<double, double>> logrank_split_scan(std::span<const double> time,
                                                          std::span<const char> event,
                                                          std::span<const double> value,
                                                          int min_node_size);
}  // namespace detail

/// Random survival forest: bootstrap ensemble of log-rank split trees with
/// Nelson-Aalen terminal nodes; predicted survival is the tree average of
/// exp(-cumulative hazard).
class SurvivalForest {
 public:
  static SurvivalForest train(const Dataset& data, Target target,
                              const ForestParams& params);

  StepCurve survival_curve(bool a, std::span<const double> z) const;
  std::vector<double> jump_times() const;
  std::size_t dim() const { return dim_; }
  std::size_t tree_count() const { return trees_.size(); }
  std::size_t leaf_count() const;

  struct Node {
    int feature = -1;  // -1 marks a leaf
    double cutpoint = 0.0;
    int left = -1;
    int right = -1;
    int leaf = -1;
  };
  struct Leaf {
    std::vector<double> times;
    std::vector<double> survival_drops;  // exp(-H_k) - exp(-H_{k-1}), <= 0
  };
  struct Tree {
    std::vector<Node> nodes;
    std::vector<Leaf> leaves;
  };

 private:
  const Leaf& find_leaf(const Tree& tree, bool a, std::span<const double> z) const;

  std::vector<Tree> trees_;
  std::size_t dim_ = 0;
};

}  // namespace drcox
