#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <random>
#include <sstream>

#include "model_test_util.hpp"
#include "tsat/serialization.hpp"

using tsat::Tensor;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("tsat_test_" + std::to_string(::getpid()) + "_" + name)).string();
}

tsat::TsatConfig small_config() {
  tsat::TsatConfig cfg;
  cfg.series = 3;
  cfg.backcast = 16;
  cfg.horizon = 4;
  cfg.imf_count = 3;
  cfg.model_dim = 6;
  cfg.key_dim = 3;
  cfg.value_dim = 3;
  cfg.heads = 2;
  cfg.blocks = 2;
  cfg.seed = 9;
  return cfg;
}

}  // namespace

TEST(GraphJson, RoundTripIsExact) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 10; ++trial) {
    auto g = testing_util::random_graph(rng, 4, 40, 4, 0.3);
    g.nodes.window_start = 123 + trial;
    const auto back = tsat::graph_from_string(tsat::graph_to_string(g));
    EXPECT_EQ(back, g);
  }
}

TEST(GraphJson, ZeroPaddedImfsSurvive) {
  // A pure ramp has no IMFs, so all four slots are padding.
  tsat::NodeMatrix w;
  w.values = Tensor::matrix(2, 32);
  for (std::size_t t = 0; t < 32; ++t) {
    w.values(0, t) = 0.1 * static_cast<double>(t);
    w.values(1, t) = -0.3 * static_cast<double>(t) + 1.0;
  }
  w.series_names = {"up", "down"};
  const auto g = tsat::build_graph(w, {});
  ASSERT_EQ(g.imf_count(), 4u);
  EXPECT_TRUE(tsat::emd::is_all_zero(g.decompositions[0].imfs[3]));
  const auto back = tsat::graph_from_string(tsat::graph_to_string(g));
  EXPECT_EQ(back, g);
  EXPECT_EQ(back.edges(0, 0, 2), 0.0);
}

TEST(GraphJson, FileRoundTrip) {
  std::mt19937_64 rng(2);
  const auto g = testing_util::random_graph(rng, 3, 24, 3);
  const std::string path = temp_path("graph.json");
  tsat::export_graph(g, path);
  EXPECT_EQ(tsat::import_graph(path), g);
  std::remove(path.c_str());
  EXPECT_THROW(tsat::import_graph(path), tsat::IoError);
}

TEST(GraphJson, TruncationIsIntegrityError) {
  std::mt19937_64 rng(3);
  const std::string text = tsat::graph_to_string(testing_util::random_graph(rng, 3, 24, 3));
  for (std::size_t cut : {text.size() / 4, text.size() / 2, text.size() - 3}) {
    EXPECT_THROW(tsat::graph_from_string(text.substr(0, cut)), tsat::IntegrityError) << cut;
  }
}

TEST(GraphJson, HeaderPayloadMismatchIsIntegrityError) {
  std::mt19937_64 rng(4);
  auto j = tsat::graph_to_json(testing_util::random_graph(rng, 3, 24, 3));
  auto wrong_n = j;
  wrong_n["N"] = 4;
  EXPECT_THROW(tsat::graph_from_json(wrong_n), tsat::IntegrityError);
  auto asym = j;
  asym["edges"][1] = 0.123456;
  EXPECT_THROW(tsat::graph_from_json(asym), tsat::IntegrityError);
  auto bad_adj = j;
  bad_adj["c"] = 0.0;
  bad_adj["rho"][1] = 0.9;
  bad_adj["rho"][3] = 0.9;
  bad_adj["adjacency"][1] = 0;
  bad_adj["adjacency"][3] = 0;
  EXPECT_THROW(tsat::graph_from_json(bad_adj), tsat::IntegrityError);
  auto missing = j;
  missing.erase("rho");
  EXPECT_THROW(tsat::graph_from_json(missing), tsat::IntegrityError);
}

TEST(GraphJson, MalformedTextIsLocatedParseError) {
  try {
    tsat::graph_from_string("{\"format\": \"tsat-graph\",\n \"N\": 3x}");
    FAIL() << "expected a parse error";
  } catch (const tsat::ParseError& e) {
    EXPECT_EQ(e.row(), 2u);
    EXPECT_GT(e.column(), 1u);
  }
}

TEST(GraphArchive, RoundTripAndTruncation) {
  std::mt19937_64 rng(5);
  std::vector<tsat::DynamicGraph> graphs;
  for (int i = 0; i < 4; ++i) graphs.push_back(testing_util::random_graph(rng, 3, 20, 3));
  std::ostringstream out;
  tsat::write_graph_archive(out, graphs);
  const std::string text = out.str();
  {
    std::istringstream in(text);
    EXPECT_EQ(tsat::read_graph_archive(in), graphs);
  }
  {
    // Drop the last line entirely: the count no longer matches.
    const std::string cut = text.substr(0, text.rfind('\n', text.size() - 2) + 1);
    std::istringstream in(cut);
    EXPECT_THROW(tsat::read_graph_archive(in), tsat::IntegrityError);
  }
  {
    std::istringstream in(text.substr(0, text.size() - 40));
    EXPECT_THROW(tsat::read_graph_archive(in), tsat::IntegrityError);
  }
}

TEST(Checkpoint, RoundTripIsExact) {
  const auto cfg = small_config();
  tsat::Checkpoint c{cfg, tsat::parameter_init(cfg, 77), {{0.1, -2.5, 1e-300}, {1.0, 3.3, 0.7}}};
  c.params.alpha = Tensor::vector({0.1, 1.0 / 3.0, -0.2, 0.4, 5e-17});
  const std::string path = temp_path("ckpt.json");
  tsat::save_checkpoint(path, c);
  EXPECT_EQ(tsat::load_checkpoint(path), c);
  EXPECT_EQ(tsat::load_checkpoint(path, cfg), c);
  auto other = cfg;
  other.heads = 3;
  EXPECT_THROW(tsat::load_checkpoint(path, other), tsat::ConfigError);
  std::remove(path.c_str());
}

TEST(Checkpoint, RejectsTamperedParameters) {
  const auto cfg = small_config();
  const tsat::Checkpoint c{cfg, tsat::parameter_init(cfg, 1), {}};
  auto j = tsat::checkpoint_to_json(c);
  auto wrong_shape = j;
  wrong_shape["parameters"][0]["shape"] = {2, 6};
  EXPECT_THROW(tsat::checkpoint_from_json(wrong_shape), tsat::IntegrityError);
  auto short_values = j;
  short_values["parameters"][1]["values"].erase(0);
  EXPECT_THROW(tsat::checkpoint_from_json(short_values), tsat::IntegrityError);
  auto extra = j;
  extra["parameters"].push_back(extra["parameters"][0]);
  EXPECT_THROW(tsat::checkpoint_from_json(extra), tsat::IntegrityError);
  auto bad_act = j;
  bad_act["config"]["imf_activation"] = "gelu";
  EXPECT_THROW(tsat::checkpoint_from_json(bad_act), tsat::ConfigError);
}

TEST(ConfigJson, RoundTrip) {
  auto cfg = small_config();
  cfg.imf_activation = tsat::ImfActivation::exp;
  cfg.use_adjacency = false;
  cfg.dropout = 0.2;
  cfg.seed = 18446744073709551615ull;
  EXPECT_EQ(tsat::config_from_json(tsat::config_to_json(cfg)), cfg);
}

TEST(Embeddings, CsvLayout) {
  std::ostringstream out;
  tsat::write_embedding_header(out, {"window_id", "series"}, 3);
  const std::vector<double> v = {0.1, -2.0, 1.0 / 3.0};
  tsat::write_embedding_row(out, {"0", "a"}, v);
  EXPECT_EQ(out.str(), "window_id,series,dim_0,dim_1,dim_2\n0,a,0.1,-2,0.3333333333333333\n");
}
