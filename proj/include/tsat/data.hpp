#pragma once

// CSV ingestion, sequential splits, train-split z-normalization, rolling
// windows and a seeded coupled-sinusoid generator.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <istream>
#include <numbers>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "tsat/error.hpp"
#include "tsat/graph.hpp"
#include "tsat/tensor.hpp"

namespace tsat {

/// N series of T observations, stored N x T.
struct TimeSeriesFrame {
  Tensor values;
  std::vector<std::string> series_names;
  std::vector<std::string> timestamps;  // empty when the file had none

  std::size_t series_count() const noexcept { return values.rows(); }
  std::size_t length() const noexcept { return values.cols(); }

  std::span<const double> series(std::size_t i) const {
    return values.values().subspan(i * values.cols(), values.cols());
  }

  friend bool operator==(const TimeSeriesFrame&, const TimeSeriesFrame&) = default;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    out.push_back(trim(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

/// Strict finite decimal parse; the whole cell must be consumed.
inline bool parse_number(std::string_view cell, double& out) {
  if (cell.empty()) return false;
  if (cell.front() == '+') cell.remove_prefix(1);
  const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), out);
  return res.ec == std::errc{} && res.ptr == cell.data() + cell.size() && std::isfinite(out);
}

}  // namespace detail

/// Shortest decimal text that reads back to exactly `v`.
inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

/// Parses a header row of series names followed by numeric rows. A first
/// column whose first data cell is not numeric is taken as timestamps.
/// Errors carry 1-based (data row, file column) positions.
inline TimeSeriesFrame parse_csv(std::istream& in) {
  std::string line;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    if (!detail::trim(line).empty()) break;
  }
  if (detail::trim(line).empty()) throw ParseError("csv: empty input (no header row)");
  for (auto f : detail::split_fields(line)) header.emplace_back(f);

  std::vector<std::vector<double>> columns;
  std::vector<std::string> timestamps;
  bool has_timestamp = false;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (detail::trim(line).empty()) continue;
    ++row;
    const auto fields = detail::split_fields(line);
    if (fields.size() != header.size()) {
      throw ParseError("csv: row " + std::to_string(row) + " has " + std::to_string(fields.size()) +
                           " fields, header has " + std::to_string(header.size()),
                       row, std::min(fields.size(), header.size()) + 1);
    }
    if (row == 1) {
      double probe = 0.0;
      has_timestamp = !detail::parse_number(fields[0], probe);
      const std::size_t n = header.size() - (has_timestamp ? 1 : 0);
      if (n == 0) throw ParseError("csv: no series columns", 1, 1);
      columns.resize(n);
    }
    const std::size_t first = has_timestamp ? 1 : 0;
    if (has_timestamp) timestamps.emplace_back(fields[0]);
    for (std::size_t c = first; c < fields.size(); ++c) {
      double v = 0.0;
      if (!detail::parse_number(fields[c], v)) {
        throw ParseError("csv: non-numeric cell '" + std::string(fields[c]) + "' at row " + std::to_string(row) +
                             ", column " + std::to_string(c + 1),
                         row, c + 1);
      }
      columns[c - first].push_back(v);
    }
  }
  if (row == 0) throw ParseError("csv: no data rows", 1, 0);

  TimeSeriesFrame frame;
  const std::size_t n = columns.size(), t = row;
  frame.values = Tensor::matrix(n, t);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t s = 0; s < t; ++s) frame.values(i, s) = columns[i][s];
  frame.series_names.assign(header.begin() + (has_timestamp ? 1 : 0), header.end());
  frame.timestamps = std::move(timestamps);
  return frame;
}

inline TimeSeriesFrame load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  return parse_csv(in);
}

inline void write_csv(std::ostream& out, const TimeSeriesFrame& frame) {
  const bool ts = !frame.timestamps.empty();
  if (ts) out << "timestamp";
  for (std::size_t i = 0; i < frame.series_count(); ++i) out << (i || ts ? "," : "") << frame.series_names[i];
  out << '\n';
  for (std::size_t t = 0; t < frame.length(); ++t) {
    if (ts) out << frame.timestamps[t];
    for (std::size_t i = 0; i < frame.series_count(); ++i)
      out << (i || ts ? "," : "") << format_double(frame.values(i, t));
    out << '\n';
  }
}

inline void save_csv(const std::string& path, const TimeSeriesFrame& frame) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path + "'");
  write_csv(out, frame);
  if (!out) throw IoError("write failed for '" + path + "'");
}

/// Half-open step range [begin, end).
struct Range {
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t size() const noexcept { return end > begin ? end - begin : 0; }
  friend bool operator==(const Range&, const Range&) = default;
};

struct SplitRanges {
  Range train, val, test;
  friend bool operator==(const SplitRanges&, const SplitRanges&) = default;
};

/// First floor(0.8 T) steps form the training span, whose last 10% is
/// validation; the rest is test.
inline SplitRanges split_sequential(std::size_t steps, std::size_t window) {
  if (steps < window + 10) {
    throw ParameterError("series of length " + std::to_string(steps) + " is too short for windows of " +
                         std::to_string(window) + " steps");
  }
  const std::size_t train_span = steps * 8 / 10;
  const std::size_t val_begin = train_span - train_span / 10;
  return {{0, val_begin}, {val_begin, train_span}, {train_span, steps}};
}

struct NormalizationStats {
  std::vector<double> mean;
  std::vector<double> std;
  friend bool operator==(const NormalizationStats&, const NormalizationStats&) = default;
};

struct NormalizedFrame {
  TimeSeriesFrame frame;
  NormalizationStats stats;
  std::vector<std::string> warnings;
};

constexpr double kMinStd = 1e-12;

/// Per-series z-score with mean and population std taken from `train` only.
inline NormalizedFrame znormalize(const TimeSeriesFrame& frame, Range train) {
  if (train.size() == 0 || train.end > frame.length()) throw ParameterError("znormalize: invalid training range");
  NormalizedFrame out{frame, {}, {}};
  const std::size_t n = frame.series_count();
  out.stats.mean.resize(n);
  out.stats.std.resize(n);
  const double count = static_cast<double>(train.size());
  for (std::size_t i = 0; i < n; ++i) {
    double m = 0.0;
    for (std::size_t t = train.begin; t < train.end; ++t) m += frame.values(i, t);
    m /= count;
    double v = 0.0;
    for (std::size_t t = train.begin; t < train.end; ++t) v += (frame.values(i, t) - m) * (frame.values(i, t) - m);
    const double s = std::sqrt(v / count);
    out.stats.mean[i] = m;
    out.stats.std[i] = s;
    for (std::size_t t = 0; t < frame.length(); ++t)
      out.frame.values(i, t) = s < kMinStd ? 0.0 : (frame.values(i, t) - m) / s;
    if (s < kMinStd) {
      out.warnings.push_back("series '" + (i < frame.series_names.size() ? frame.series_names[i] : std::to_string(i)) +
                             "' is constant on the training range; mapped to zeros");
    }
  }
  return out;
}

/// Applies previously computed statistics (e.g. from a checkpoint).
inline TimeSeriesFrame normalize_with(const TimeSeriesFrame& frame, const NormalizationStats& stats) {
  if (stats.mean.size() != frame.series_count() || stats.std.size() != frame.series_count()) {
    throw ConfigError("normalize_with: statistics cover " + std::to_string(stats.mean.size()) + " series, data has " +
                      std::to_string(frame.series_count()));
  }
  TimeSeriesFrame out = frame;
  for (std::size_t i = 0; i < frame.series_count(); ++i)
    for (std::size_t t = 0; t < frame.length(); ++t)
      out.values(i, t) = stats.std[i] < kMinStd ? 0.0 : (frame.values(i, t) - stats.mean[i]) / stats.std[i];
  return out;
}

/// Inverse of znormalize on an N x T matrix of values.
inline Tensor denormalize(const Tensor& values, const NormalizationStats& stats) {
  if (values.rows() != stats.mean.size()) throw DimensionError("denormalize: series count mismatch");
  Tensor out = values;
  for (std::size_t i = 0; i < values.rows(); ++i) {
    const double s = stats.std[i] < kMinStd ? 0.0 : stats.std[i];
    for (std::size_t t = 0; t < values.cols(); ++t) out(i, t) = values(i, t) * s + stats.mean[i];
  }
  return out;
}

enum class Split { train, val, test };

inline std::string to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "train";
}

struct WindowIndex {
  std::size_t x_start = 0;
  std::size_t y_start = 0;
  Split split = Split::train;
  friend bool operator==(const WindowIndex&, const WindowIndex&) = default;
};

/// floor((|span| - (L_x + L_y)) / stride) + 1 windows, or 0 when the span is
/// shorter than one window.
inline std::size_t window_count(std::size_t span, std::size_t backcast, std::size_t horizon, std::size_t stride) {
  if (stride == 0) throw ParameterError("window stride must be positive");
  if (span < backcast + horizon) return 0;
  return (span - (backcast + horizon)) / stride + 1;
}

/// Window start positions inside `span`; each target begins right after its
/// backcast and never leaves the span.
inline std::vector<WindowIndex> make_windows(Range span, std::size_t backcast, std::size_t horizon,
                                             std::size_t stride = 1, Split split = Split::train) {
  if (backcast == 0 || horizon == 0) throw ParameterError("backcast and horizon must be positive");
  if (span.size() < backcast + horizon) {
    throw ParameterError("span of " + std::to_string(span.size()) + " steps is shorter than one window (" +
                         std::to_string(backcast + horizon) + ")");
  }
  const std::size_t count = window_count(span.size(), backcast, horizon, stride);
  std::vector<WindowIndex> out;
  out.reserve(count);
  for (std::size_t w = 0; w < count; ++w) {
    const std::size_t x = span.begin + w * stride;
    out.push_back({x, x + backcast, split});
  }
  return out;
}

/// Windows of all three splits in time order. Splits too short for a single
/// window contribute none.
inline std::vector<WindowIndex> make_split_windows(const SplitRanges& splits, std::size_t backcast,
                                                   std::size_t horizon, std::size_t stride = 1) {
  std::vector<WindowIndex> out;
  const std::pair<Range, Split> parts[] = {{splits.train, Split::train}, {splits.val, Split::val},
                                           {splits.test, Split::test}};
  for (const auto& [range, tag] : parts) {
    if (range.size() < backcast + horizon) continue;
    const auto w = make_windows(range, backcast, horizon, stride, tag);
    out.insert(out.end(), w.begin(), w.end());
  }
  return out;
}

inline void write_window_manifest(std::ostream& out, const std::vector<WindowIndex>& windows) {
  out << "window_id,x_start,y_start,split\n";
  for (std::size_t w = 0; w < windows.size(); ++w) {
    out << w << ',' << windows[w].x_start << ',' << windows[w].y_start << ',' << to_string(windows[w].split) << '\n';
  }
}

inline NodeMatrix window_nodes(const TimeSeriesFrame& frame, std::size_t start, std::size_t length) {
  if (start + length > frame.length()) throw ParameterError("window exceeds series length");
  NodeMatrix m;
  m.values = Tensor::matrix(frame.series_count(), length);
  for (std::size_t i = 0; i < frame.series_count(); ++i)
    for (std::size_t t = 0; t < length; ++t) m.values(i, t) = frame.values(i, start + t);
  m.series_names = frame.series_names;
  m.window_start = start;
  return m;
}

/// N x L_y block of the frame starting at `start`.
inline Tensor window_target(const TimeSeriesFrame& frame, std::size_t start, std::size_t horizon) {
  return window_nodes(frame, start, horizon).values;
}

struct SynthOptions {
  std::size_t series = 6;
  std::size_t length = 4096;
  std::vector<std::size_t> group_of;  // group id per series; empty means contiguous blocks
  std::size_t groups = 2;
  double noise_std = 0.1;
  double coupling = 0.3;
  std::size_t lag = 3;
  bool random_phases = true;
  std::uint64_t seed = 0;
};

/// Series i in group g: s_g t / T + sin(w_g t + phi_i) + coupling * the
/// lagged oscillation of its group predecessor + noise, with s_g = (-1)^g and
/// period 24 (g + 1).
inline TimeSeriesFrame synth_coupled_sinusoids(const SynthOptions& opt) {
  if (opt.series < 2) throw ParameterError("synth: need at least two series");
  if (opt.length < 256) throw ParameterError("synth: length must be at least 256");
  if (!(opt.noise_std >= 0.0)) throw ParameterError("synth: noise_std must be non-negative");
  std::vector<std::size_t> group = opt.group_of;
  std::size_t groups = opt.groups;
  if (group.empty()) {
    if (groups < 1 || groups > opt.series) throw ParameterError("synth: group count must lie in [1, N]");
    for (std::size_t i = 0; i < opt.series; ++i) group.push_back(i * groups / opt.series);
  } else {
    if (group.size() != opt.series) throw ParameterError("synth: group assignment must cover every series");
    groups = 0;
    for (auto g : group) groups = std::max(groups, g + 1);
    for (std::size_t g = 0; g < groups; ++g) {
      if (std::find(group.begin(), group.end(), g) == group.end()) {
        throw ParameterError("synth: group " + std::to_string(g) + " has no members");
      }
    }
  }

  std::mt19937_64 rng(opt.seed);
  std::uniform_real_distribution<double> phase_dist(0.0, 2.0 * std::numbers::pi);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::vector<double> phase(opt.series, 0.0);
  if (opt.random_phases)
    for (double& p : phase) p = phase_dist(rng);

  // Predecessor within the group, cyclically.
  std::vector<std::size_t> peer(opt.series);
  for (std::size_t i = 0; i < opt.series; ++i) {
    std::vector<std::size_t> members;
    for (std::size_t j = 0; j < opt.series; ++j)
      if (group[j] == group[i]) members.push_back(j);
    const auto pos = static_cast<std::size_t>(std::find(members.begin(), members.end(), i) - members.begin());
    peer[i] = members[(pos + members.size() - 1) % members.size()];
  }

  TimeSeriesFrame frame;
  const std::size_t n = opt.series, len = opt.length;
  frame.values = Tensor::matrix(n, len);
  const double total = static_cast<double>(len);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t g = group[i];
    const double slope = g % 2 == 0 ? 1.0 : -1.0;
    const double omega = 2.0 * std::numbers::pi / (24.0 * static_cast<double>(g + 1));
    for (std::size_t t = 0; t < len; ++t) {
      const double tt = static_cast<double>(t);
      const double lagged = tt - static_cast<double>(opt.lag);
      frame.values(i, t) = slope * tt / total + std::sin(omega * tt + phase[i]) +
                           opt.coupling * std::sin(omega * lagged + phase[peer[i]]);
    }
    frame.series_names.push_back("series_" + std::to_string(i));
  }
  if (opt.noise_std > 0.0) {
    for (std::size_t t = 0; t < len; ++t)
      for (std::size_t i = 0; i < n; ++i) frame.values(i, t) += opt.noise_std * noise(rng);
  }
  return frame;
}

}  // namespace tsat
