#pragma once

// Edge-enhanced dynamic graph of one rolling window: node matrix X, per-IMF
// cosine-similarity edge tensor E, and a thresholded residual-correlation
// adjacency A.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tsat/emd.hpp"
#include "tsat/error.hpp"
#include "tsat/tensor.hpp"

namespace tsat {

/// Row i holds the backcast window of series i.
struct NodeMatrix {
  Tensor values;  // N x L_x
  std::vector<std::string> series_names;
  std::size_t window_start = 0;

  std::size_t series_count() const noexcept { return values.rows(); }
  std::size_t length() const noexcept { return values.cols(); }

  std::span<const double> row(std::size_t i) const {
    return values.values().subspan(i * values.cols(), values.cols());
  }

  friend bool operator==(const NodeMatrix&, const NodeMatrix&) = default;
};

/// N x N x K tensor stored as [i][j][k].
struct EdgeTensor {
  std::size_t nodes = 0;
  std::size_t imfs = 0;
  std::vector<double> values;

  EdgeTensor() = default;
  EdgeTensor(std::size_t n, std::size_t k) : nodes(n), imfs(k), values(n * n * k, 0.0) {}

  double& operator()(std::size_t i, std::size_t j, std::size_t k) { return values[(i * nodes + j) * imfs + k]; }
  double operator()(std::size_t i, std::size_t j, std::size_t k) const { return values[(i * nodes + j) * imfs + k]; }

  /// N x N similarity matrix of the k-th IMF across series.
  Tensor slice(std::size_t k) const {
    Tensor out = Tensor::matrix(nodes, nodes);
    for (std::size_t i = 0; i < nodes; ++i)
      for (std::size_t j = 0; j < nodes; ++j) out(i, j) = (*this)(i, j, k);
    return out;
  }

  friend bool operator==(const EdgeTensor&, const EdgeTensor&) = default;
};

struct Adjacency {
  std::size_t nodes = 0;
  std::vector<std::uint8_t> values;
  double threshold = 0.5;

  int operator()(std::size_t i, std::size_t j) const { return values[i * nodes + j]; }

  std::size_t degree(std::size_t i) const {
    std::size_t d = 0;
    for (std::size_t j = 0; j < nodes; ++j) d += values[i * nodes + j];
    return d;
  }

  Tensor as_tensor() const {
    Tensor out = Tensor::matrix(nodes, nodes);
    for (std::size_t i = 0; i < values.size(); ++i) out[i] = values[i];
    return out;
  }

  friend bool operator==(const Adjacency&, const Adjacency&) = default;
};

struct DynamicGraph {
  NodeMatrix nodes;
  EdgeTensor edges;
  Adjacency adjacency;
  Tensor residual_correlations;  // N x N
  std::vector<emd::ImfDecomposition> decompositions;

  std::size_t series_count() const noexcept { return nodes.series_count(); }
  std::size_t length() const noexcept { return nodes.length(); }
  std::size_t imf_count() const noexcept { return edges.imfs; }

  /// D_imf_k: slice k of the edge tensor.
  Tensor imf_similarity_matrix(std::size_t k) const { return edges.slice(k); }

  friend bool operator==(const DynamicGraph&, const DynamicGraph&) = default;
};

struct GraphOptions {
  std::size_t imf_count = 4;  // K
  double threshold = 0.5;     // c
  emd::SiftOptions sift;
};

namespace detail {

constexpr double kZeroNorm = 1e-12;

inline double cosine(std::span<const double> a, std::span<const double> b, const char* what) {
  if (a.size() != b.size()) {
    throw DimensionError(std::string(what) + ": length mismatch " + std::to_string(a.size()) + " vs " +
                         std::to_string(b.size()));
  }
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t t = 0; t < a.size(); ++t) {
    dot += a[t] * b[t];
    na += a[t] * a[t];
    nb += b[t] * b[t];
  }
  na = std::sqrt(na);
  nb = std::sqrt(nb);
  if (na < kZeroNorm || nb < kZeroNorm) return 0.0;
  return dot / (na * nb);
}

inline bool has_norm(std::span<const double> a) {
  double s = 0.0;
  for (double v : a) s += v * v;
  return std::sqrt(s) >= kZeroNorm;
}

}  // namespace detail

/// f_i . f_j / (|f_i| |f_j|); zero when either norm is below 1e-12.
inline double imf_similarity(std::span<const double> fi, std::span<const double> fj) {
  return detail::cosine(fi, fj, "imf_similarity");
}

/// Uncentered correlation of residual trends, same form as imf_similarity.
inline double residual_correlation(std::span<const double> ri, std::span<const double> rj) {
  return detail::cosine(ri, rj, "residual_correlation");
}

/// a_ij = 1 iff |rho_ij| > c, with the diagonal fixed to 1.
inline Adjacency build_adjacency(const Tensor& rho, double c) {
  if (!(c >= 0.0 && c <= 1.0)) throw ParameterError("build_adjacency: threshold must lie in [0, 1]");
  if (rho.rank() != 2 || rho.rows() != rho.cols()) throw DimensionError("build_adjacency: rho must be square");
  const std::size_t n = rho.rows();
  Adjacency a{n, std::vector<std::uint8_t>(n * n, 0), c};
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      a.values[i * n + j] = (i == j || std::fabs(rho(i, j)) > c) ? 1 : 0;
    }
  }
  return a;
}

/// Decomposes every node row, pads to K IMFs and fills E, rho and A.
inline DynamicGraph build_graph(const NodeMatrix& window, const GraphOptions& options) {
  const std::size_t n = window.series_count();
  const std::size_t len = window.length();
  if (n < 2) throw ParameterError("build_graph: need at least two series");
  if (len < 8) throw ParameterError("build_graph: window length must be at least 8");
  if (!window.values.all_finite()) throw ParameterError("build_graph: window has non-finite values");
  if (options.imf_count < 1) throw ParameterError("build_graph: K must be positive");

  DynamicGraph g;
  g.nodes = window;
  emd::EmdOptions emd_options;
  emd_options.k_max = options.imf_count;
  emd_options.sift = options.sift;
  g.decompositions.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    g.decompositions.push_back(
        emd::pad_to_k(emd::decompose(window.row(i), emd_options), static_cast<int>(options.imf_count)));
  }

  const std::size_t k_count = options.imf_count;
  g.edges = EdgeTensor(n, k_count);
  for (std::size_t k = 0; k < k_count; ++k) {
    for (std::size_t i = 0; i < n; ++i) {
      const auto& fi = g.decompositions[i].imfs[k];
      g.edges(i, i, k) = detail::has_norm(fi) ? 1.0 : 0.0;
      for (std::size_t j = i + 1; j < n; ++j) {
        const double s = imf_similarity(fi, g.decompositions[j].imfs[k]);
        g.edges(i, j, k) = s;
        g.edges(j, i, k) = s;
      }
    }
  }

  g.residual_correlations = Tensor::matrix(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& ri = g.decompositions[i].residual;
    g.residual_correlations(i, i) = detail::has_norm(ri) ? 1.0 : 0.0;
    for (std::size_t j = i + 1; j < n; ++j) {
      const double r = residual_correlation(ri, g.decompositions[j].residual);
      g.residual_correlations(i, j) = r;
      g.residual_correlations(j, i) = r;
    }
  }
  g.adjacency = build_adjacency(g.residual_correlations, options.threshold);
  return g;
}

}  // namespace tsat
