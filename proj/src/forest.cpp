#include "drcox/forest.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "drcox/rng.hpp"

namespace drcox {

void ForestParams::validate() const {
  if (n_trees < 1) throw ValidationError(fmt::format("forest: n_trees must be >= 1, got {}", n_trees));
  if (mtry < 0) throw ValidationError(fmt::format("forest: mtry must be >= 1, got {}", mtry));
  if (min_node_size < 1) {
    throw ValidationError(fmt::format("forest: min_node_size must be >= 1, got {}", min_node_size));
  }
}

int ForestParams::resolved_mtry(std::size_t features) const {
  if (mtry == 0) {
    return static_cast<int>(std::ceil(std::sqrt(static_cast<double>(features))));
  }
  if (static_cast<std::size_t>(mtry) > features) {
    throw ValidationError(
        fmt::format("forest: mtry {} exceeds the {} available features", mtry, features));
  }
  return mtry;
}

double logrank_statistic(std::span<const double> time, std::span<const char> event,
                         std::span<const char> left) {
  const std::size_t m = time.size();
  if (event.size() != m || left.size() != m) {
    throw ValidationError("logrank_statistic: inconsistent input lengths");
  }
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return time[a] < time[b]; });
  double r = static_cast<double>(m);
  double r_left = 0.0;
  for (char l : left) r_left += l ? 1.0 : 0.0;
  double num = 0.0;
  double var = 0.0;
  std::size_t k = 0;
  while (k < m) {
    const double t = time[order[k]];
    double d = 0.0, d_left = 0.0, leave = 0.0, leave_left = 0.0;
    while (k < m && time[order[k]] == t) {
      const std::size_t i = order[k];
      if (event[i]) {
        d += 1.0;
        if (left[i]) d_left += 1.0;
      }
      leave += 1.0;
      if (left[i]) leave_left += 1.0;
      ++k;
    }
    if (d > 0.0) {
      num += d_left - r_left * d / r;
      if (r > 1.0) var += (r_left / r) * (1.0 - r_left / r) * d * (r - d) / (r - 1.0);
    }
    r -= leave;
    r_left -= leave_left;
  }
  return var > 0.0 ? std::abs(num) / std::sqrt(var) : 0.0;
}

double rsf_logrank_split(const Dataset& data, std::span<const std::size_t> rows,
                         Target target, std::size_t feature, double cutpoint) {
  if (feature > data.dim()) throw ValidationError("rsf_logrank_split: feature out of range");
  std::vector<double> time;
  std::vector<char> event;
  std::vector<char> left;
  std::size_t n_left = 0;
  for (std::size_t r : rows) {
    time.push_back(data.time(r));
    event.push_back(data.event(r, target) ? 1 : 0);
    const double v = feature == 0 ? (data.group(r) ? 1.0 : 0.0) : data.z(r)[feature - 1];
    const bool is_left = v <= cutpoint;
    left.push_back(is_left ? 1 : 0);
    n_left += is_left ? 1 : 0;
  }
  if (n_left == 0 || n_left == rows.size()) {
    throw ValidationError("rsf_logrank_split: both children must be nonempty");
  }
  return logrank_statistic(time, event, left);
}

namespace {

class Fenwick {
 public:
  explicit Fenwick(std::size_t n) : tree_(n + 1, 0.0) {}
  void reset() { std::fill(tree_.begin(), tree_.end(), 0.0); }
  void add(std::size_t i, double v) {
    for (++i; i < tree_.size(); i += i & (~i + 1)) tree_[i] += v;
  }
  // Sum over positions 0..i inclusive.
  double prefix(std::size_t i) const {
    double s = 0.0;
    for (++i; i > 0; i -= i & (~i + 1)) s += tree_[i];
    return s;
  }

 private:
  std::vector<double> tree_;
};

struct TrainingData {
  std::vector<double> time;
  std::vector<char> event;
  std::vector<double> features;  // row-major n x f, column 0 = group
  std::size_t f = 0;
  double feature(std::size_t i, std::size_t j) const { return features[i * f + j]; }
};

// Event structure of one node, shared across candidate features.
struct NodeEvents {
  std::vector<std::size_t> pos;  // per row: number of node event times <= X
  std::vector<double> hazard;    // prefix sums of d/r
  std::vector<double> lin;       // prefix sums of c/r
  std::vector<double> quad;      // prefix sums of c/r^2
  std::size_t event_times = 0;
  double events = 0.0;
};

NodeEvents node_events(const TrainingData& td, std::span<const std::size_t> rows) {
  const std::size_t m = rows.size();
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return td.time[rows[a]] < td.time[rows[b]];
  });
  NodeEvents ne;
  ne.pos.assign(m, 0);
  ne.hazard.assign(1, 0.0);
  ne.lin.assign(1, 0.0);
  ne.quad.assign(1, 0.0);
  double r = static_cast<double>(m);
  std::size_t k = 0;
  while (k < m) {
    const double t = td.time[rows[order[k]]];
    std::size_t start = k;
    double d = 0.0;
    while (k < m && td.time[rows[order[k]]] == t) {
      d += td.event[rows[order[k]]] ? 1.0 : 0.0;
      ++k;
    }
    if (d > 0.0) {
      const double c = r > 1.0 ? d * (r - d) / (r - 1.0) : 0.0;
      ne.hazard.push_back(ne.hazard.back() + d / r);
      ne.lin.push_back(ne.lin.back() + c / r);
      ne.quad.push_back(ne.quad.back() + c / (r * r));
      ++ne.event_times;
      ne.events += d;
    }
    for (std::size_t q = start; q < k; ++q) ne.pos[order[q]] = ne.event_times;
    r -= static_cast<double>(k - start);
  }
  return ne;
}

struct Split {
  int feature = -1;
  double cutpoint = 0.0;
  double statistic = 0.0;
};

// Sweeps all cutpoints of one feature, adding rows to the left child in
// increasing feature order and updating the log-rank numerator and variance.
template <typename Visit>
void sweep_feature(const NodeEvents& ne, std::span<const double> value,
                   std::span<const char> event, int min_node_size, Fenwick& weight,
                   Fenwick& count, Visit&& visit) {
  const std::size_t m = value.size();
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return value[a] < value[b]; });
  weight.reset();
  count.reset();
  double num = 0.0, lin = 0.0, quad = 0.0;
  const auto min_size = static_cast<std::size_t>(min_node_size);
  for (std::size_t i = 0; i + 1 < m; ++i) {
    const std::size_t j = order[i];
    const std::size_t c = ne.pos[j];
    num += (event[j] ? 1.0 : 0.0) - ne.hazard[c];
    lin += ne.lin[c];
    const double b = ne.quad[c];
    const double cross = weight.prefix(c) + b * (static_cast<double>(i) - count.prefix(c));
    quad += 2.0 * cross + b;
    weight.add(c, b);
    count.add(c, 1.0);
    const std::size_t n_left = i + 1;
    if (value[j] < value[order[i + 1]] && n_left >= min_size && m - n_left >= min_size) {
      const double var = lin - quad;
      const double stat = var > 1e-12 ? num / std::sqrt(var) : 0.0;
      visit(value[j], stat);
    }
  }
}

class TreeBuilder {
 public:
  TreeBuilder(const TrainingData& td, const ForestParams& params, int mtry, Rng& rng)
      : td_(td), params_(params), mtry_(mtry), rng_(rng) {}

  SurvivalForest::Tree build(std::vector<std::size_t> root_rows) {
    SurvivalForest::Tree tree;
    struct Pending {
      int node;
      std::vector<std::size_t> rows;
    };
    std::vector<Pending> stack;
    tree.nodes.emplace_back();
    stack.push_back({0, std::move(root_rows)});
    std::vector<std::size_t> features(td_.f);
    while (!stack.empty()) {
      Pending work = std::move(stack.back());
      stack.pop_back();
      Split split = find_split(work.rows, features);
      if (split.feature < 0) {
        tree.nodes[static_cast<std::size_t>(work.node)].leaf =
            static_cast<int>(tree.leaves.size());
        tree.leaves.push_back(make_leaf(work.rows));
        continue;
      }
      std::vector<std::size_t> left_rows;
      std::vector<std::size_t> right_rows;
      for (std::size_t r : work.rows) {
        const auto f = static_cast<std::size_t>(split.feature);
        (td_.feature(r, f) <= split.cutpoint ? left_rows : right_rows).push_back(r);
      }
      const int left = static_cast<int>(tree.nodes.size());
      tree.nodes.emplace_back();
      tree.nodes.emplace_back();
      auto& node = tree.nodes[static_cast<std::size_t>(work.node)];
      node.feature = split.feature;
      node.cutpoint = split.cutpoint;
      node.left = left;
      node.right = left + 1;
      stack.push_back({left + 1, std::move(right_rows)});
      stack.push_back({left, std::move(left_rows)});
    }
    return tree;
  }

 private:
  Split find_split(const std::vector<std::size_t>& rows, std::vector<std::size_t>& features) {
    Split best;
    const std::size_t m = rows.size();
    if (m < 2 * static_cast<std::size_t>(params_.min_node_size)) return best;
    NodeEvents ne = node_events(td_, rows);
    if (ne.event_times == 0) return best;

    std::iota(features.begin(), features.end(), std::size_t{0});
    const auto tries = static_cast<std::size_t>(mtry_);
    for (std::size_t s = 0; s < tries; ++s) {
      std::uniform_int_distribution<std::size_t> pick(s, features.size() - 1);
      std::swap(features[s], features[pick(rng_)]);
    }

    std::vector<double> value(m);
    std::vector<char> event(m);
    for (std::size_t q = 0; q < m; ++q) event[q] = td_.event[rows[q]];
    Fenwick weight(ne.event_times + 1);
    Fenwick count(ne.event_times + 1);
    for (std::size_t s = 0; s < tries; ++s) {
      const std::size_t f = features[s];
      for (std::size_t q = 0; q < m; ++q) value[q] = td_.feature(rows[q], f);
      sweep_feature(ne, value, event, params_.min_node_size, weight, count,
                    [&](double cut, double stat) {
                      if (std::abs(stat) > best.statistic + 1e-12) {
                        best.statistic = std::abs(stat);
                        best.feature = static_cast<int>(f);
                        best.cutpoint = cut;
                      }
                    });
    }
    return best;
  }

  SurvivalForest::Leaf make_leaf(std::vector<std::size_t>& rows) const {
    std::sort(rows.begin(), rows.end(),
              [&](std::size_t a, std::size_t b) { return td_.time[a] < td_.time[b]; });
    SurvivalForest::Leaf leaf;
    double r = static_cast<double>(rows.size());
    double h = 0.0;
    double prev = 1.0;
    std::size_t k = 0;
    while (k < rows.size()) {
      const double t = td_.time[rows[k]];
      double d = 0.0, leave = 0.0;
      while (k < rows.size() && td_.time[rows[k]] == t) {
        d += td_.event[rows[k]] ? 1.0 : 0.0;
        leave += 1.0;
        ++k;
      }
      if (d > 0.0) {
        h += d / r;
        const double s = std::exp(-h);
        leaf.times.push_back(t);
        leaf.survival_drops.push_back(s - prev);
        prev = s;
      }
      r -= leave;
    }
    return leaf;
  }

  const TrainingData& td_;
  const ForestParams& params_;
  int mtry_;
  Rng& rng_;
};

}  // namespace

namespace detail {

std::vector<std::pair<double, double>> logrank_split_scan(std::span<const double> time,
                                                          std::span<const char> event,
                                                          std::span<const double> value,
                                                          int min_node_size) {
  const std::size_t m = time.size();
  TrainingData td;
  td.f = 1;
  td.time.assign(time.begin(), time.end());
  td.event.assign(event.begin(), event.end());
  td.features.assign(value.begin(), value.end());
  std::vector<std::size_t> rows(m);
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  NodeEvents ne = node_events(td, rows);
  Fenwick weight(ne.event_times + 1);
  Fenwick count(ne.event_times + 1);
  std::vector<std::pair<double, double>> out;
  sweep_feature(ne, value, event, min_node_size, weight, count,
                [&](double cut, double stat) { out.emplace_back(cut, stat); });
  return out;
}

}  // namespace detail

SurvivalForest SurvivalForest::train(const Dataset& data, Target target,
                                     const ForestParams& params) {
  params.validate();
  TrainingData td;
  const std::size_t n = data.size();
  td.f = data.dim() + 1;
  td.time.assign(data.times().begin(), data.times().end());
  td.event.resize(n);
  td.features.resize(n * td.f);
  for (std::size_t i = 0; i < n; ++i) {
    td.event[i] = data.event(i, target) ? 1 : 0;
    td.features[i * td.f] = data.group(i) ? 1.0 : 0.0;
    auto zi = data.z(i);
    std::copy(zi.begin(), zi.end(), td.features.begin() + static_cast<std::ptrdiff_t>(i * td.f + 1));
  }
  const int mtry = params.resolved_mtry(td.f);

  SurvivalForest forest;
  forest.dim_ = data.dim();
  forest.trees_.reserve(static_cast<std::size_t>(params.n_trees));
  for (int b = 0; b < params.n_trees; ++b) {
    Rng rng(derive_seed(params.seed, {static_cast<std::uint64_t>(b)}));
    std::vector<std::size_t> rows(n);
    if (params.bootstrap) {
      std::uniform_int_distribution<std::size_t> draw(0, n - 1);
      for (auto& r : rows) r = draw(rng);
    } else {
      std::iota(rows.begin(), rows.end(), std::size_t{0});
    }
    TreeBuilder builder(td, params, mtry, rng);
    forest.trees_.push_back(builder.build(std::move(rows)));
  }
  return forest;
}

const SurvivalForest::Leaf& SurvivalForest::find_leaf(const Tree& tree, bool a,
                                                      std::span<const double> z) const {
  std::size_t k = 0;
  while (tree.nodes[k].feature >= 0) {
    const auto& node = tree.nodes[k];
    const double v = node.feature == 0 ? (a ? 1.0 : 0.0)
                                       : z[static_cast<std::size_t>(node.feature - 1)];
    k = static_cast<std::size_t>(v <= node.cutpoint ? node.left : node.right);
  }
  return tree.leaves[static_cast<std::size_t>(tree.nodes[k].leaf)];
}

StepCurve SurvivalForest::survival_curve(bool a, std::span<const double> z) const {
  if (z.size() != dim_) {
    throw ValidationError(fmt::format("forest: expected {} covariates, got {}", dim_, z.size()));
  }
  std::vector<std::pair<double, double>> drops;
  const double scale = 1.0 / static_cast<double>(trees_.size());
  for (const auto& tree : trees_) {
    const Leaf& leaf = find_leaf(tree, a, z);
    for (std::size_t k = 0; k < leaf.times.size(); ++k) {
      drops.emplace_back(leaf.times[k], leaf.survival_drops[k] * scale);
    }
  }
  std::sort(drops.begin(), drops.end(),
            [](const auto& x, const auto& y) { return x.first < y.first; });
  std::vector<double> times;
  std::vector<double> values;
  double s = 1.0;
  std::size_t k = 0;
  while (k < drops.size()) {
    const double t = drops[k].first;
    while (k < drops.size() && drops[k].first == t) s += drops[k++].second;
    // Running minimum absorbs floating-point drift in the averaged drops.
    const double v = std::max(0.0, std::min(s, values.empty() ? 1.0 : values.back()));
    times.push_back(t);
    values.push_back(v);
  }
  return StepCurve(std::move(times), std::move(values), 1.0);
}

std::vector<double> SurvivalForest::jump_times() const {
  std::vector<double> out;
  for (const auto& tree : trees_) {
    for (const auto& leaf : tree.leaves) out.insert(out.end(), leaf.times.begin(), leaf.times.end());
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::size_t SurvivalForest::leaf_count() const {
  std::size_t count = 0;
  for (const auto& tree : trees_) count += tree.leaves.size();
  return count;
}

}  // namespace drcox
