#pragma once

// Empirical mode decomposition by envelope sifting.
//
// A series is split into intrinsic mode functions (IMFs) plus a residual
// trend such that the components sum back to the input. Envelopes are natural
// cubic splines through the local extrema, with the two extrema nearest each
// end mirrored across that end.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdlib>

#include <span>
#include <string>
#include <vector>

#include "tsat/error.hpp"

namespace tsat::emd {

struct Extrema {
  std::vector<std::size_t> maxima;
  std::vector<std::size_t> minima;

  std::size_t count() const noexcept { return maxima.size() + minima.size(); }
};

struct Series {
  std::vector<double> values;
  std::string name;
};

struct ImfDecomposition {
  std::vector<std::vector<double>> imfs;
  std::vector<double> residual;
  std::vector<int> sift_iterations;

  std::size_t imf_count() const noexcept { return imfs.size(); }
  std::size_t length() const noexcept { return residual.size(); }

  /// Sum of all IMFs and the residual.
  std::vector<double> reconstruct() const {
    std::vector<double> out = residual;
    for (const auto& imf : imfs)
      for (std::size_t t = 0; t < out.size(); ++t) out[t] += imf[t];
    return out;
  }

  friend bool operator==(const ImfDecomposition&, const ImfDecomposition&) = default;
};

struct SiftOptions {
  double sd_threshold = 0.2;
  int max_iter = 100;
};

struct EmdOptions {
  std::size_t k_max = 4;
  SiftOptions sift;
  /// Extra sifting passes allowed when a candidate still violates the IMF
  /// zero-crossing/extrema condition after the SD criterion fired.
  int max_refine_passes = 100;
};

struct SiftResult {
  std::vector<double> values;
  int iterations = 0;
};

/// Strict interior local maxima and minima. A plateau of equal values counts
/// once, at its midpoint index rounded down. Plateaus touching either end are
/// not extrema.
inline Extrema find_extrema(std::span<const double> x) {
  Extrema out;
  const std::size_t n = x.size();
  if (n < 3) return out;
  // Walk runs of equal values.
  struct Run {
    std::size_t begin, end;
    double value;
  };
  std::vector<Run> runs;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && x[j + 1] == x[i]) ++j;
    runs.push_back({i, j, x[i]});
    i = j + 1;
  }
  for (std::size_t r = 1; r + 1 < runs.size(); ++r) {
    const Run& cur = runs[r];
    const double prev = runs[r - 1].value;
    const double next = runs[r + 1].value;
    const std::size_t mid = (cur.begin + cur.end) / 2;
    if (cur.value > prev && cur.value > next) {
      out.maxima.push_back(mid);
    } else if (cur.value < prev && cur.value < next) {
      out.minima.push_back(mid);
    }
  }
  return out;
}

/// Sign changes between consecutive non-zero samples.
inline std::size_t count_zero_crossings(std::span<const double> x) {
  std::size_t crossings = 0;
  int last_sign = 0;
  for (double v : x) {
    const int s = (v > 0.0) - (v < 0.0);
    if (s == 0) continue;
    if (last_sign != 0 && s != last_sign) ++crossings;
    last_sign = s;
  }
  return crossings;
}

/// |#zero-crossings - #extrema| <= 1.
inline bool satisfies_imf_property(std::span<const double> x) {
  const auto crossings = static_cast<long long>(count_zero_crossings(x));
  const auto extrema = static_cast<long long>(find_extrema(x).count());
  return std::llabs(crossings - extrema) <= 1;
}

inline bool is_all_zero(std::span<const double> x) {
  for (double v : x)
    if (v != 0.0) return false;
  return true;
}

namespace detail {

/// Natural cubic spline through (knots, values), evaluated at 0..length-1.
/// Knots must be strictly increasing.
inline std::vector<double> natural_spline(const std::vector<double>& knots, const std::vector<double>& values,
                                          std::size_t length) {
  const std::size_t n = knots.size();
  std::vector<double> second(n, 0.0);
  if (n > 2) {
    // Thomas algorithm on the interior equations; second[0] = second[n-1] = 0.
    const std::size_t m = n - 2;
    std::vector<double> diag(m), upper(m), rhs(m);
    for (std::size_t k = 0; k < m; ++k) {
      const std::size_t i = k + 1;
      const double h0 = knots[i] - knots[i - 1];
      const double h1 = knots[i + 1] - knots[i];
      diag[k] = 2.0 * (h0 + h1);
      upper[k] = h1;
      rhs[k] = 6.0 * ((values[i + 1] - values[i]) / h1 - (values[i] - values[i - 1]) / h0);
    }
    for (std::size_t k = 1; k < m; ++k) {
      const double lower = knots[k + 1] - knots[k];  // h_{i-1} for i = k + 1
      const double w = lower / diag[k - 1];
      diag[k] -= w * upper[k - 1];
      rhs[k] -= w * rhs[k - 1];
    }
    for (std::size_t k = m; k-- > 0;) {
      const double next = (k + 1 < m) ? second[k + 2] : 0.0;
      second[k + 1] = (rhs[k] - upper[k] * next) / diag[k];
    }
  }
  std::vector<double> out(length);
  std::size_t seg = 0;
  for (std::size_t t = 0; t < length; ++t) {
    const double x = static_cast<double>(t);
    while (seg + 2 < n && x > knots[seg + 1]) ++seg;
    const double h = knots[seg + 1] - knots[seg];
    const double a = (knots[seg + 1] - x) / h;
    const double b = (x - knots[seg]) / h;
    out[t] = a * values[seg] + b * values[seg + 1] +
             ((a * a * a - a) * second[seg] + (b * b * b - b) * second[seg + 1]) * h * h / 6.0;
  }
  return out;
}

}  // namespace detail

/// Envelope through the given extrema. Unless an extremum already sits on an
/// end sample, the two extrema nearest that end are mirrored across it before
/// the spline is fitted. Throws DegenerateSignalError with fewer than two
/// knots.
inline std::vector<double> spline_envelope(std::span<const std::size_t> idx, std::span<const double> values,
                                           std::size_t length) {
  if (idx.size() != values.size()) throw DimensionError("spline_envelope: index/value count mismatch");
  if (idx.empty() || length == 0) throw DegenerateSignalError("spline_envelope: no extrema");
  const double last = static_cast<double>(length - 1);
  std::vector<double> knots;
  std::vector<double> vals;
  const std::size_t n = idx.size();
  if (idx.front() > 0) {
    for (std::size_t k = std::min<std::size_t>(2, n); k-- > 0;) {
      knots.push_back(-static_cast<double>(idx[k]));
      vals.push_back(values[k]);
    }
  }
  for (std::size_t k = 0; k < n; ++k) {
    knots.push_back(static_cast<double>(idx[k]));
    vals.push_back(values[k]);
  }
  if (static_cast<double>(idx.back()) < last) {
    for (std::size_t k = 0; k < std::min<std::size_t>(2, n); ++k) {
      knots.push_back(2.0 * last - static_cast<double>(idx[n - 1 - k]));
      vals.push_back(values[n - 1 - k]);
    }
  }
  // Mirroring a single extremum can produce coincident knots; drop them.
  std::vector<double> uk, uv;
  for (std::size_t i = 0; i < knots.size(); ++i) {
    if (!uk.empty() && knots[i] <= uk.back()) continue;
    uk.push_back(knots[i]);
    uv.push_back(vals[i]);
  }
  if (uk.size() < 2) throw DegenerateSignalError("spline_envelope: fewer than two knots after boundary extension");
  return detail::natural_spline(uk, uv, length);
}

namespace detail {

inline std::vector<double> values_at(std::span<const double> x, const std::vector<std::size_t>& idx) {
  std::vector<double> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(x[i]);
  return out;
}

// Sifting loop shared by sift() and decompose(); needs at least one maximum
// and one minimum on entry.
inline SiftResult sift_loop(std::span<const double> x, const SiftOptions& options) {
  SiftResult result{std::vector<double>(x.begin(), x.end()), 0};
  std::vector<double>& h = result.values;
  const std::size_t n = h.size();
  std::vector<double> next(n);
  while (result.iterations < options.max_iter) {
    const Extrema ext = find_extrema(h);
    if (ext.maxima.empty() || ext.minima.empty()) {
      if (result.iterations == 0) throw DegenerateSignalError("sift: signal has no oscillation");
      break;
    }
    const auto upper = spline_envelope(ext.maxima, values_at(h, ext.maxima), n);
    const auto lower = spline_envelope(ext.minima, values_at(h, ext.minima), n);
    double num = 0.0, den = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
      next[t] = h[t] - 0.5 * (upper[t] + lower[t]);
      const double d = h[t] - next[t];
      num += d * d;
      den += h[t] * h[t];
    }
    h.swap(next);
    ++result.iterations;
    if (den == 0.0 || num / den < options.sd_threshold) break;
  }
  return result;
}

}  // namespace detail

/// One IMF candidate: h <- h - (upper + lower) / 2 until the Cauchy-type
/// criterion sum((h_prev - h)^2) / sum(h_prev^2) < sd_threshold, or
/// max_iter passes. Requires at least two maxima and two minima.
inline SiftResult sift(std::span<const double> x, const SiftOptions& options = {}) {
  if (options.max_iter <= 0) return SiftResult{std::vector<double>(x.begin(), x.end()), 0};
  const Extrema ext = find_extrema(x);
  if (ext.maxima.size() < 2 || ext.minima.size() < 2) {
    throw DegenerateSignalError("sift: need at least two maxima and two minima");
  }
  return detail::sift_loop(x, options);
}

/// Repeatedly sifts the running residual until it has fewer than three
/// extrema or k_max IMFs were extracted.
inline ImfDecomposition decompose(std::span<const double> x, const EmdOptions& options = {}) {
  if (options.k_max < 1) throw ParameterError("decompose: k_max must be at least 1");
  ImfDecomposition out;
  out.residual.assign(x.begin(), x.end());
  const std::size_t n = x.size();
  while (out.imfs.size() < options.k_max) {
    const Extrema ext = find_extrema(out.residual);
    if (ext.count() < 3 || ext.maxima.empty() || ext.minima.empty()) break;
    SiftResult s = detail::sift_loop(out.residual, options.sift);
    for (int pass = 0; pass < options.max_refine_passes && !satisfies_imf_property(s.values); ++pass) {
      const Extrema e = find_extrema(s.values);
      if (e.maxima.empty() || e.minima.empty()) break;
      SiftResult more = detail::sift_loop(s.values, options.sift);
      s.values = std::move(more.values);
      s.iterations += more.iterations;
    }
    for (std::size_t t = 0; t < n; ++t) out.residual[t] -= s.values[t];
    out.imfs.push_back(std::move(s.values));
    out.sift_iterations.push_back(s.iterations);
  }
  return out;
}

inline ImfDecomposition decompose(const Series& series, const EmdOptions& options = {}) {
  if (series.values.size() < 8) {
    throw ParameterError("decompose: series '" + series.name + "' needs at least 8 samples");
  }
  for (double v : series.values) {
    if (!std::isfinite(v)) throw ParameterError("decompose: series '" + series.name + "' has non-finite values");
  }
  return decompose(std::span<const double>(series.values), options);
}

/// Exactly k IMF slots: missing slots become zero vectors, surplus IMFs are
/// summed into the residual.
inline ImfDecomposition pad_to_k(ImfDecomposition d, int k) {
  if (k <= 0) throw ParameterError("pad_to_k: K must be positive");
  const auto target = static_cast<std::size_t>(k);
  const std::size_t n = d.residual.size();
  if (d.imfs.size() > target) {
    for (std::size_t i = target; i < d.imfs.size(); ++i)
      for (std::size_t t = 0; t < n; ++t) d.residual[t] += d.imfs[i][t];
    d.imfs.resize(target);
    d.sift_iterations.resize(target);
  }
  while (d.imfs.size() < target) {
    d.imfs.emplace_back(n, 0.0);
    d.sift_iterations.push_back(0);
  }
  return d;
}

}  // namespace tsat::emd
