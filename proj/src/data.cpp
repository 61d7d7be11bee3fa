#include "drcox/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

namespace drcox {

Dataset::Dataset(std::span<const Observation> observations, double tau)
    : tau_(tau) {
  if (observations.empty()) throw ValidationError("dataset is empty");
  p_ = observations.front().z.size();
  const std::size_t n = observations.size();
  time_.reserve(n);
  delta_.reserve(n);
  group_.reserve(n);
  covariates_.reserve(n * p_);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& o = observations[i];
    if (o.z.size() != p_) {
      throw ValidationError(fmt::format(
          "observation {} has {} covariates, expected {}", i, o.z.size(), p_));
    }
    time_.push_back(o.time);
    delta_.push_back(o.delta ? 1 : 0);
    group_.push_back(o.group ? 1 : 0);
    covariates_.insert(covariates_.end(), o.z.begin(), o.z.end());
  }
  validate();
}

Dataset::Dataset(std::vector<double> time, std::vector<char> delta,
                 std::vector<char> group, std::vector<double> covariates,
                 std::size_t p, double tau)
    : time_(std::move(time)),
      delta_(std::move(delta)),
      group_(std::move(group)),
      covariates_(std::move(covariates)),
      p_(p),
      tau_(tau) {
  const std::size_t n = time_.size();
  if (delta_.size() != n || group_.size() != n || covariates_.size() != n * p_) {
    throw ValidationError("dataset columns have inconsistent lengths");
  }
  validate();
}

void Dataset::validate() const {
  if (time_.empty()) throw ValidationError("dataset is empty");
  if (!(tau_ > 0.0) || !std::isfinite(tau_)) {
    throw ValidationError(fmt::format("tau must be positive, got {}", tau_));
  }
  for (std::size_t i = 0; i < time_.size(); ++i) {
    const double x = time_[i];
    if (!std::isfinite(x) || x < 0.0) {
      throw ValidationError(fmt::format("row {}: time must be >= 0, got {}", i, x));
    }
    if (x > tau_) {
      throw ValidationError(
          fmt::format("row {}: time {} exceeds tau {}", i, x, tau_));
    }
    if (delta_[i] > 1 || group_[i] > 1 || delta_[i] < 0 || group_[i] < 0) {
      throw ValidationError(fmt::format("row {}: delta and group must be 0/1", i));
    }
  }
  for (double v : covariates_) {
    if (!std::isfinite(v)) throw ValidationError("covariates must be finite");
  }
}

std::size_t Dataset::event_count(Target target) const {
  std::size_t count = 0;
  for (std::size_t i = 0; i < size(); ++i) count += event(i, target) ? 1 : 0;
  return count;
}

std::size_t Dataset::group_count(bool a) const {
  return static_cast<std::size_t>(
      std::count(group_.begin(), group_.end(), static_cast<char>(a ? 1 : 0)));
}

Observation Dataset::observation(std::size_t i) const {
  auto zi = z(i);
  return {time_[i], delta(i), group(i), std::vector<double>(zi.begin(), zi.end())};
}

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
  std::vector<double> time;
  std::vector<char> delta;
  std::vector<char> group;
  std::vector<double> cov;
  time.reserve(rows.size());
  delta.reserve(rows.size());
  group.reserve(rows.size());
  cov.reserve(rows.size() * p_);
  for (std::size_t r : rows) {
    if (r >= size()) throw ValidationError("subset row index out of range");
    time.push_back(time_[r]);
    delta.push_back(delta_[r]);
    group.push_back(group_[r]);
    auto zr = z(r);
    cov.insert(cov.end(), zr.begin(), zr.end());
  }
  return Dataset(std::move(time), std::move(delta), std::move(group),
                 std::move(cov), p_, tau_);
}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    auto pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      out.push_back(trim(line.substr(start)));
      break;
    }
    out.push_back(trim(line.substr(start, pos - start)));
    start = pos + 1;
  }
  return out;
}

double parse_number(std::string_view field, std::size_t line_no,
                    std::string_view column) {
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (field.empty() || ec != std::errc() || ptr != field.data() + field.size()) {
    throw ValidationError(fmt::format("line {}: column '{}': cannot parse '{}'",
                                      line_no, column, field));
  }
  return value;
}

char parse_binary(std::string_view field, std::size_t line_no,
                  std::string_view column) {
  double v = parse_number(field, line_no, column);
  if (v != 0.0 && v != 1.0) {
    throw ValidationError(fmt::format("line {}: column '{}' must be 0 or 1, got '{}'",
                                      line_no, column, field));
  }
  return v == 1.0 ? 1 : 0;
}

}  // namespace

Dataset parse_csv(const std::string& text, double tau) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string_view> header;
  std::string header_line;
  while (std::getline(in, line)) {
    ++line_no;
    if (!trim(line).empty()) {
      header_line = line;
      break;
    }
  }
  if (header_line.empty()) throw ValidationError("CSV has no header");
  if (header_line.size() >= 3 && header_line.compare(0, 3, "\xEF\xBB\xBF") == 0) {
    header_line.erase(0, 3);
  }
  header = split(header_line);
  const char* required[] = {"time", "delta", "group"};
  for (std::size_t c = 0; c < 3; ++c) {
    if (header.size() <= c || header[c] != required[c]) {
      throw ValidationError(fmt::format(
          "CSV header: missing column '{}' at position {}", required[c], c + 1));
    }
  }
  const std::size_t p = header.size() - 3;
  for (std::size_t c = 0; c < p; ++c) {
    if (header[3 + c] != fmt::format("z{}", c + 1)) {
      throw ValidationError(fmt::format("CSV header: expected column 'z{}', got '{}'",
                                        c + 1, header[3 + c]));
    }
  }
  std::vector<std::string> names(header.begin(), header.end());

  std::vector<double> time;
  std::vector<char> delta;
  std::vector<char> group;
  std::vector<double> cov;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto fields = split(line);
    if (fields.size() != names.size()) {
      throw ValidationError(fmt::format("line {}: expected {} fields, got {}", line_no,
                                        names.size(), fields.size()));
    }
    double x = parse_number(fields[0], line_no, names[0]);
    if (!(x >= 0.0) || !std::isfinite(x)) {
      throw ValidationError(fmt::format("line {}: time must be >= 0", line_no));
    }
    time.push_back(x);
    delta.push_back(parse_binary(fields[1], line_no, names[1]));
    group.push_back(parse_binary(fields[2], line_no, names[2]));
    for (std::size_t c = 0; c < p; ++c) {
      cov.push_back(parse_number(fields[3 + c], line_no, names[3 + c]));
    }
  }
  if (time.empty()) throw ValidationError("CSV has no data rows");
  if (tau <= 0.0) tau = *std::max_element(time.begin(), time.end());
  if (tau <= 0.0) throw ValidationError("all times are zero; tau undefined");
  return Dataset(std::move(time), std::move(delta), std::move(group), std::move(cov),
                 p, tau);
}

Dataset read_csv(const std::string& path, double tau) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError(fmt::format("cannot open '{}'", path));
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_csv(buffer.str(), tau);
}

std::string to_csv(const Dataset& data) {
  std::string out = "time,delta,group";
  for (std::size_t c = 0; c < data.dim(); ++c) out += fmt::format(",z{}", c + 1);
  out += '\n';
  for (std::size_t i = 0; i < data.size(); ++i) {
    out += fmt::format("{:.17g},{},{}", data.time(i), data.delta(i) ? 1 : 0,
                       data.group(i) ? 1 : 0);
    for (double v : data.z(i)) out += fmt::format(",{:.17g}", v);
    out += '\n';
  }
  return out;
}

void write_csv(const Dataset& data, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError(fmt::format("cannot write '{}'", path));
  out << to_csv(data);
}

}  // namespace drcox
