#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "tsat/graph.hpp"

using tsat::Tensor;

namespace {

// Independent long-double evaluation of the uncentered correlation.
double brute_cosine(std::span<const double> a, std::span<const double> b) {
  long double dot = 0, na = 0, nb = 0;
  for (std::size_t t = 0; t < a.size(); ++t) {
    dot += static_cast<long double>(a[t]) * b[t];
    na += static_cast<long double>(a[t]) * a[t];
    nb += static_cast<long double>(b[t]) * b[t];
  }
  if (std::sqrt(na) < 1e-12L || std::sqrt(nb) < 1e-12L) return 0.0;
  return static_cast<double>(dot / (std::sqrt(na) * std::sqrt(nb)));
}

tsat::NodeMatrix random_window(std::mt19937_64& rng, std::size_t n, std::size_t len) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 0.2);
  tsat::NodeMatrix w;
  w.values = Tensor::matrix(n, len);
  for (std::size_t i = 0; i < n; ++i) {
    const double slope = 4.0 * (u(rng) - 0.5);
    const double cycles = 1.5 + 6.0 * u(rng);
    const double phase = 2.0 * std::numbers::pi * u(rng);
    for (std::size_t t = 0; t < len; ++t) {
      const double tt = static_cast<double>(t) / static_cast<double>(len);
      w.values(i, t) = slope * tt + std::sin(2.0 * std::numbers::pi * cycles * tt + phase) + noise(rng);
    }
    w.series_names.push_back("s" + std::to_string(i));
  }
  return w;
}

tsat::NodeMatrix permute(const tsat::NodeMatrix& w, const std::vector<std::size_t>& perm) {
  tsat::NodeMatrix out = w;
  for (std::size_t i = 0; i < perm.size(); ++i) {
    for (std::size_t t = 0; t < w.length(); ++t) out.values(i, t) = w.values(perm[i], t);
    out.series_names[i] = w.series_names[perm[i]];
  }
  return out;
}

}  // namespace

TEST(ImfSimilarity, Examples) {
  const std::vector<double> f = {0.3, -1.2, 2.0, 0.7};
  EXPECT_NEAR(tsat::imf_similarity(f, f), 1.0, 1e-15);
  EXPECT_DOUBLE_EQ(tsat::imf_similarity(std::vector<double>{1, 0, 1, 0}, std::vector<double>{1, 1, 0, 0}), 0.5);
  EXPECT_EQ(tsat::imf_similarity(f, std::vector<double>(4, 0.0)), 0.0);
  EXPECT_THROW(tsat::imf_similarity(f, std::vector<double>{1, 2}), tsat::DimensionError);
}

TEST(ResidualCorrelation, Examples) {
  const std::vector<double> r = {2.0, -1.0, 5.0};
  EXPECT_NEAR(tsat::residual_correlation(r, r), 1.0, 1e-15);
  EXPECT_NEAR(tsat::residual_correlation(std::vector<double>{1, 2, 3}, std::vector<double>{3, 2, 1}), 10.0 / 14.0,
              1e-15);
  EXPECT_EQ(tsat::residual_correlation(std::vector<double>{1, -1}, std::vector<double>{1, 1}), 0.0);
  EXPECT_THROW(tsat::residual_correlation(r, std::vector<double>{1}), tsat::DimensionError);
}

TEST(BuildAdjacency, ThresholdRule) {
  const Tensor rho = Tensor::from_rows({{1, 0.8}, {0.8, 1}});
  const auto a = tsat::build_adjacency(rho, 0.5);
  EXPECT_EQ(a.as_tensor(), Tensor::from_rows({{1, 1}, {1, 1}}));
  const auto b = tsat::build_adjacency(rho, 0.9);
  EXPECT_EQ(b.as_tensor(), Tensor::identity(2));
  const auto c = tsat::build_adjacency(rho, 1.0);
  EXPECT_EQ(c.as_tensor(), Tensor::identity(2));
}

TEST(BuildAdjacency, ZeroThresholdGivesCompleteGraph) {
  const Tensor rho = Tensor::from_rows({{1, -0.1, 0.2}, {-0.1, 1, 0.05}, {0.2, 0.05, 1}});
  const auto a = tsat::build_adjacency(rho, 0.0);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(a.degree(i), 3u);
}

TEST(BuildAdjacency, RejectsBadThreshold) {
  const Tensor rho = Tensor::identity(2);
  EXPECT_THROW(tsat::build_adjacency(rho, -0.1), tsat::ParameterError);
  EXPECT_THROW(tsat::build_adjacency(rho, 1.5), tsat::ParameterError);
  EXPECT_THROW(tsat::build_adjacency(Tensor::matrix(2, 3), 0.5), tsat::DimensionError);
}

TEST(BuildAdjacency, MonotoneInThreshold) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor rho = Tensor::identity(6);
    for (std::size_t i = 0; i < 6; ++i)
      for (std::size_t j = i + 1; j < 6; ++j) rho(i, j) = rho(j, i) = u(rng);
    for (int step = 0; step < 10; ++step) {
      const auto a = tsat::build_adjacency(rho, 0.1 * step);
      const auto b = tsat::build_adjacency(rho, 0.1 * (step + 1));
      for (std::size_t k = 0; k < a.values.size(); ++k) EXPECT_LE(b.values[k], a.values[k]);
    }
  }
}

TEST(BuildGraph, IdenticalSeriesGiveUnitEdgesAndCompleteAdjacency) {
  tsat::NodeMatrix w;
  w.values = Tensor::matrix(3, 96);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t t = 0; t < 96; ++t)
      w.values(i, t) = std::sin(0.5 * static_cast<double>(t)) + 0.02 * static_cast<double>(t);
  const auto g = tsat::build_graph(w, {});
  for (std::size_t k = 0; k < g.imf_count(); ++k) {
    const bool nonzero = !tsat::emd::is_all_zero(g.decompositions[0].imfs[k]);
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(g.edges(i, j, k), nonzero ? 1.0 : 0.0, 1e-12);
  }
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(g.adjacency.degree(i), 3u);
}

TEST(BuildGraph, OrthogonalResidualsAreNotConnected) {
  // Monotone rows have no IMFs, so each row is its own residual.
  tsat::NodeMatrix w;
  w.values = Tensor::matrix(2, 8);
  const std::vector<double> a = {1, 2, 3, 4, 5, 6, 7, 8};
  for (std::size_t t = 0; t < 8; ++t) w.values(0, t) = a[t];
  // b = a - shift stays increasing and satisfies a.b = 0.
  const double sum_a = 36.0, sum_a2 = 204.0;
  const double shift = sum_a2 / sum_a;
  for (std::size_t t = 0; t < 8; ++t) w.values(1, t) = a[t] - shift;
  tsat::GraphOptions opt;
  opt.threshold = 0.1;
  const auto g = tsat::build_graph(w, opt);
  EXPECT_NEAR(g.residual_correlations(0, 1), 0.0, 1e-15);
  EXPECT_EQ(g.adjacency(0, 1), 0);
  EXPECT_EQ(g.adjacency(1, 0), 0);
}

TEST(BuildGraph, InvertedTrendConnectsThroughAbsoluteValue) {
  tsat::NodeMatrix w;
  const std::size_t len = 128;
  w.values = Tensor::matrix(3, len);
  for (std::size_t t = 0; t < len; ++t) {
    const double tt = static_cast<double>(t) / static_cast<double>(len);
    const double osc = 0.3 * std::sin(2.0 * std::numbers::pi * 6.0 * tt);
    w.values(0, t) = 2.0 * tt + osc;
    w.values(1, t) = 2.0 * tt + 0.5 * osc;
    w.values(2, t) = -2.0 * tt + osc;
  }
  const auto g = tsat::build_graph(w, {});
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 3; ++j) {
      const double oracle = i == j ? 1.0 : brute_cosine(g.decompositions[i].residual, g.decompositions[j].residual);
      EXPECT_NEAR(g.residual_correlations(i, j), oracle, 1e-12);
    }
  }
  EXPECT_EQ(g.adjacency(0, 1), 1);
  EXPECT_LT(g.residual_correlations(0, 2), -0.5);
  EXPECT_EQ(g.adjacency(0, 2), 1);
  EXPECT_EQ(g.adjacency(1, 2), 1);
}

TEST(BuildGraph, RejectsInvalidWindows) {
  tsat::NodeMatrix one;
  one.values = Tensor::matrix(1, 16);
  EXPECT_THROW(tsat::build_graph(one, {}), tsat::ParameterError);
  tsat::NodeMatrix shortw;
  shortw.values = Tensor::matrix(2, 7);
  EXPECT_THROW(tsat::build_graph(shortw, {}), tsat::ParameterError);
  tsat::NodeMatrix nan;
  nan.values = Tensor::matrix(2, 16);
  nan.values(1, 3) = std::nan("");
  EXPECT_THROW(tsat::build_graph(nan, {}), tsat::ParameterError);
}

TEST(GraphProperties, EdgeAndAdjacencyContracts) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    const auto g = tsat::build_graph(random_window(rng, 5, 96), {});
    const std::size_t n = g.series_count();
    for (std::size_t k = 0; k < g.imf_count(); ++k) {
      const Tensor d = g.imf_similarity_matrix(k);
      for (std::size_t i = 0; i < n; ++i) {
        EXPECT_TRUE(d(i, i) == 0.0 || d(i, i) == 1.0);
        for (std::size_t j = 0; j < n; ++j) {
          EXPECT_EQ(d(i, j), d(j, i));
          EXPECT_LE(std::fabs(d(i, j)), 1.0 + 1e-12);
          if (i != j) {
            EXPECT_NEAR(d(i, j), brute_cosine(g.decompositions[i].imfs[k], g.decompositions[j].imfs[k]), 1e-12);
          }
        }
      }
    }
    for (std::size_t i = 0; i < n; ++i) {
      EXPECT_EQ(g.adjacency(i, i), 1);
      for (std::size_t j = 0; j < n; ++j) {
        EXPECT_EQ(g.adjacency(i, j), g.adjacency(j, i));
        EXPECT_TRUE(g.adjacency(i, j) == 0 || g.adjacency(i, j) == 1);
      }
    }
  }
}

TEST(GraphProperties, PermutationConsistency) {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 5; ++trial) {
    const auto w = random_window(rng, 5, 80);
    std::vector<std::size_t> perm = {0, 1, 2, 3, 4};
    std::shuffle(perm.begin(), perm.end(), rng);
    const auto g = tsat::build_graph(w, {});
    const auto gp = tsat::build_graph(permute(w, perm), {});
    for (std::size_t i = 0; i < 5; ++i) {
      for (std::size_t j = 0; j < 5; ++j) {
        EXPECT_EQ(gp.adjacency(i, j), g.adjacency(perm[i], perm[j]));
        for (std::size_t k = 0; k < g.imf_count(); ++k) EXPECT_EQ(gp.edges(i, j, k), g.edges(perm[i], perm[j], k));
      }
    }
  }
}

TEST(GraphProperties, DependsOnlyOnWindowContents) {
  std::mt19937_64 rng(31);
  auto w = random_window(rng, 4, 64);
  const auto g = tsat::build_graph(w, {});
  w.window_start = 5000;
  const auto shifted = tsat::build_graph(w, {});
  EXPECT_EQ(g.edges, shifted.edges);
  EXPECT_EQ(g.adjacency, shifted.adjacency);
  EXPECT_EQ(g.residual_correlations, shifted.residual_correlations);
  EXPECT_EQ(g.decompositions, shifted.decompositions);
}
