#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "tsat/train.hpp"

using tsat::Tensor;

namespace {

tsat::TsatConfig tiny_config() {
  tsat::TsatConfig cfg;
  cfg.series = 3;
  cfg.backcast = 16;
  cfg.horizon = 4;
  cfg.imf_count = 3;
  cfg.model_dim = 8;
  cfg.key_dim = 4;
  cfg.value_dim = 4;
  cfg.heads = 2;
  cfg.blocks = 1;
  cfg.ffn_width = 16;
  cfg.dropout = 0.1;
  return cfg;
}

struct Fixture {
  tsat::AblationData data;
};

const Fixture& fixture() {
  static const Fixture f = [] {
    tsat::SynthOptions opt;
    opt.series = 3;
    opt.length = 400;
    opt.groups = 2;
    opt.seed = 4;
    const auto frame = tsat::synth_coupled_sinusoids(opt);
    const auto splits = tsat::split_sequential(frame.length(), 20);
    const auto norm = tsat::znormalize(frame, splits.train);
    tsat::GraphOptions g;
    g.imf_count = 3;
    Fixture out;
    out.data.train = tsat::make_samples(norm.frame, tsat::make_windows(splits.train, 16, 4, 4), 16, 4, g);
    out.data.val = tsat::make_samples(norm.frame, tsat::make_windows(splits.val, 16, 4, 4), 16, 4, g);
    out.data.test = tsat::make_samples(norm.frame, tsat::make_windows(splits.test, 16, 4, 4), 16, 4, g);
    return out;
  }();
  return f;
}

std::vector<Tensor> flatten(const tsat::TsatParams& p) {
  std::vector<Tensor> out;
  tsat::for_each_parameter(p, [&](const std::string&, const Tensor& t) { out.push_back(t); });
  return out;
}

}  // namespace

TEST(Metrics, MseExamples) {
  const Tensor y = Tensor::from_rows({{0.5, -1}, {2, 3}});
  EXPECT_EQ(tsat::mse_loss(y, y), 0.0);
  Tensor shifted = y;
  for (double& v : shifted.values()) v += 1.0;
  EXPECT_EQ(tsat::mse_loss(shifted, y), 1.0);
  EXPECT_EQ(tsat::mse_loss(Tensor::from_rows({{0, 2}}), Tensor::from_rows({{1, 0}})), 2.5);
  EXPECT_THROW(tsat::mse_loss(y, Tensor::matrix(1, 4)), tsat::DimensionError);
}

TEST(Metrics, RmseMaeExamples) {
  const Tensor z = Tensor::matrix(2, 3);
  EXPECT_EQ(tsat::rmse(z, z), 0.0);
  EXPECT_EQ(tsat::mae(z, z), 0.0);
  EXPECT_EQ(tsat::rmse(Tensor::matrix(2, 3, 1.0), z), 1.0);
  EXPECT_EQ(tsat::mae(Tensor::matrix(2, 3, 1.0), z), 1.0);
  EXPECT_NEAR(tsat::rmse(Tensor::vector({1, 3}), Tensor::vector({0, 0})), std::sqrt(5.0), 1e-15);
  EXPECT_EQ(tsat::mae(Tensor::vector({1, 3}), Tensor::vector({0, 0})), 2.0);
  EXPECT_THROW(tsat::mae(z, Tensor::matrix(3, 2)), tsat::DimensionError);
  EXPECT_THROW(tsat::rmse(z, Tensor::matrix(3, 2)), tsat::DimensionError);
}

TEST(Metrics, RmseDominatesMae) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> d(0.0, 3.0);
  for (int trial = 0; trial < 200; ++trial) {
    Tensor a = Tensor::matrix(3, 5), b = Tensor::matrix(3, 5);
    for (double& v : a.values()) v = d(rng);
    for (double& v : b.values()) v = d(rng);
    EXPECT_GE(tsat::rmse(a, b), tsat::mae(a, b) - 1e-15);
  }
}

TEST(Persistence, RepeatsLastValue) {
  const Tensor x = Tensor::from_rows({{1, 2, 5}, {0, 3, -1}});
  EXPECT_EQ(tsat::persistence_baseline(x, 3), Tensor::from_rows({{5, 5, 5}, {-1, -1, -1}}));
}

TEST(Persistence, ConstantSeriesHasZeroError) {
  tsat::Sample s;
  s.graph.nodes.values = Tensor::matrix(2, 8, 3.5);
  s.target = Tensor::matrix(2, 4, 3.5);
  const auto r = tsat::evaluate_persistence({s});
  EXPECT_EQ(r.rmse, 0.0);
  EXPECT_EQ(r.mae, 0.0);
}

TEST(Persistence, RampErrorGrowsLinearlyWithHorizon) {
  const double slope = 0.25;
  tsat::Sample s;
  s.graph.nodes.values = Tensor::matrix(1, 8);
  s.target = Tensor::matrix(1, 5);
  for (std::size_t t = 0; t < 8; ++t) s.graph.nodes.values(0, t) = slope * static_cast<double>(t);
  for (std::size_t h = 0; h < 5; ++h) s.target(0, h) = slope * static_cast<double>(8 + h);
  const auto r = tsat::evaluate_persistence({s});
  for (std::size_t h = 0; h < 5; ++h) EXPECT_NEAR(r.horizon_rmse[h], slope * static_cast<double>(h + 1), 1e-15);
}

TEST(Score, PerHorizonAndAggregate) {
  tsat::Sample a, b;
  a.target = Tensor::from_rows({{0, 0}, {0, 0}});
  b.target = Tensor::from_rows({{1, 1}, {1, 1}});
  const std::vector<Tensor> preds = {Tensor::from_rows({{1, 2}, {-1, 0}}), Tensor::from_rows({{1, 3}, {1, 1}})};
  const auto r = tsat::score(preds, {a, b});
  // Horizon 1 errors: 1, -1, 0, 0; horizon 2 errors: 2, 0, 2, 0.
  EXPECT_NEAR(r.horizon_rmse[0], std::sqrt(0.5), 1e-15);
  EXPECT_NEAR(r.horizon_rmse[1], std::sqrt(2.0), 1e-15);
  EXPECT_NEAR(r.horizon_mae[0], 0.5, 1e-15);
  EXPECT_NEAR(r.horizon_mae[1], 1.0, 1e-15);
  EXPECT_NEAR(r.rmse, std::sqrt(10.0 / 8.0), 1e-15);
  EXPECT_NEAR(r.mae, 6.0 / 8.0, 1e-15);
  EXPECT_NEAR(r.average_rmse, (std::sqrt(0.5) + std::sqrt(2.0)) / 2.0, 1e-15);
  EXPECT_EQ(r.windows, 2u);
  EXPECT_THROW(tsat::score({}, {}), tsat::ConfigError);
}

TEST(Predict, BatchedEqualsSingleForward) {
  const auto cfg = tiny_config();
  const auto p = tsat::parameter_init(cfg, 3);
  const auto& test = fixture().data.test;
  const auto preds = tsat::predict(p, cfg, test, 5);
  ASSERT_EQ(preds.size(), test.size());
  for (std::size_t i = 0; i < test.size(); ++i) EXPECT_EQ(preds[i], tsat::forward(test[i].graph, p, cfg).forecasts);
}

TEST(Train, FrozenModelStopsAfterTwoEpochsWithUntouchedParameters) {
  const auto cfg = tiny_config();
  tsat::TrainConfig tc;
  tc.initial_lr = 0.0;
  tc.patience = 1;
  tc.batch_size = 8;
  tc.seed = 5;
  const auto r = tsat::train(cfg, fixture().data.train, fixture().data.val, tc);
  EXPECT_EQ(r.epochs_run, 2u);
  EXPECT_EQ(r.curve.size(), 2u);
  EXPECT_EQ(flatten(r.params), flatten(tsat::parameter_init(cfg, tsat::derive_seed(5, tsat::kInitStream))));
}

TEST(Train, SeededRunsAreBitIdentical) {
  const auto cfg = tiny_config();
  tsat::TrainConfig tc;
  tc.initial_lr = 5e-3;
  tc.max_epochs = 3;
  tc.batch_size = 16;
  tc.seed = 6;
  const auto a = tsat::train(cfg, fixture().data.train, fixture().data.val, tc);
  const auto b = tsat::train(cfg, fixture().data.train, fixture().data.val, tc);
  EXPECT_EQ(a.curve, b.curve);
  EXPECT_EQ(flatten(a.params), flatten(b.params));
  tc.seed = 7;
  const auto c = tsat::train(cfg, fixture().data.train, fixture().data.val, tc);
  EXPECT_NE(a.curve, c.curve);
}

TEST(Train, LearnsAndKeepsBestValidationParameters) {
  const auto cfg = tiny_config();
  tsat::TrainConfig tc;
  tc.initial_lr = 1e-2;
  tc.max_epochs = 15;
  tc.batch_size = 16;
  tc.seed = 1;
  std::size_t callbacks = 0;
  const auto r = tsat::train(cfg, fixture().data.train, fixture().data.val, tc, nullptr,
                             [&](const tsat::LossCurvePoint&) { ++callbacks; });
  EXPECT_EQ(callbacks, r.epochs_run);
  for (const auto& p : r.curve) {
    EXPECT_TRUE(std::isfinite(p.train_loss));
    EXPECT_TRUE(std::isfinite(p.val_rmse));
    EXPECT_NEAR(p.learning_rate, tsat::decay_learning_rate(1e-2, static_cast<int>(p.epoch), 5e-3), 1e-18);
  }
  EXPECT_LE(r.best_val_rmse, r.curve.front().val_rmse);
  EXPECT_LT(r.curve.back().train_loss, r.curve.front().train_loss);
  EXPECT_EQ(tsat::dataset_rmse(r.params, cfg, fixture().data.val), r.best_val_rmse);
  EXPECT_EQ(r.curve[r.best_epoch].val_rmse, r.best_val_rmse);
}

TEST(Train, RejectsEmptySplitsAndBadConfig) {
  const auto cfg = tiny_config();
  tsat::TrainConfig tc;
  EXPECT_THROW(tsat::train(cfg, {}, fixture().data.val, tc), tsat::ConfigError);
  EXPECT_THROW(tsat::train(cfg, fixture().data.train, {}, tc), tsat::ConfigError);
  tc.batch_size = 0;
  EXPECT_THROW(tsat::train(cfg, fixture().data.train, fixture().data.val, tc), tsat::ConfigError);
}

TEST(Train, LossCurveCsv) {
  std::ostringstream out;
  tsat::write_loss_curve(out, {{0, 0.5, 0.25, 1e-4}});
  EXPECT_EQ(out.str(), "epoch,train_loss,val_rmse,lr\n0,0.5,0.25,1e-04\n");
}

TEST(GradCheck, SmallModelPasses) {
  tsat::TsatConfig cfg;
  cfg.series = 4;
  cfg.backcast = 16;
  cfg.horizon = 4;
  cfg.model_dim = 8;
  cfg.key_dim = cfg.value_dim = 4;
  cfg.heads = 2;
  cfg.blocks = 1;
  cfg.imf_count = 3;
  tsat::GradCheckOptions opt;
  opt.seed = 2;
  const auto r = tsat::grad_check(cfg, opt);
  EXPECT_TRUE(r.passed) << r.worst_group << " " << r.max_relative_error;
  EXPECT_EQ(r.groups.size(), tsat::zero_parameters(cfg).blocks[0].heads.size() * 3 + 17);
}

TEST(GradCheck, HeadOnlyModelIsExactlyQuadratic) {
  tsat::TsatConfig cfg = tiny_config();
  cfg.blocks = 0;
  tsat::GradCheckOptions opt;
  opt.groups = {"head."};
  opt.tolerance = 1e-8;
  const auto r = tsat::grad_check(cfg, opt);
  ASSERT_EQ(r.groups.size(), 2u);
  EXPECT_LT(r.max_relative_error, 1e-8);
  EXPECT_TRUE(r.passed);
}

TEST(GradCheck, CorruptedGroupIsNamed) {
  tsat::TsatConfig cfg = tiny_config();
  tsat::GradCheckOptions opt;
  opt.corrupt = [](const std::string& group, Tensor& g) {
    if (group == "block0.ffn.in") g[3] += 0.5;
  };
  const auto r = tsat::grad_check(cfg, opt);
  EXPECT_FALSE(r.passed);
  EXPECT_EQ(r.worst_group, "block0.ffn.in");
}

TEST(Ablation, VariantOrderAndReports) {
  const auto labels = tsat::ablation_variants();
  ASSERT_EQ(labels.size(), 4u);
  EXPECT_EQ(labels[0].label, "TSAT w/o graph");
  EXPECT_EQ(labels[1].label, "TSAT w/o edge");
  EXPECT_EQ(labels[2].label, "TSAT w/o adj");
  EXPECT_EQ(labels[3].label, "TSAT");
  EXPECT_FALSE(labels[0].use_edge || labels[0].use_adjacency);
  EXPECT_TRUE(!labels[1].use_edge && labels[1].use_adjacency);
  EXPECT_TRUE(labels[2].use_edge && !labels[2].use_adjacency);

  tsat::TrainConfig tc;
  tc.max_epochs = 2;
  tc.batch_size = 16;
  tc.initial_lr = 1e-3;
  tc.seed = 3;
  std::vector<std::string> seen;
  const auto reports = tsat::ablation_run(fixture().data, tiny_config(), tc,
                                          [&](const tsat::AblationVariant& v, const tsat::TrainResult&,
                                              const tsat::EvalReport&) { seen.push_back(v.label); });
  ASSERT_EQ(reports.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(reports[i].label, labels[i].label);
    EXPECT_TRUE(reports[i].ok());
    EXPECT_GE(reports[i].rmse, reports[i].mae);
    EXPECT_EQ(reports[i].epochs_run, 2u);
  }
  EXPECT_EQ(seen.size(), 4u);

  std::ostringstream table, csv;
  tsat::write_eval_table(table, reports);
  tsat::write_eval_csv(csv, reports);
  for (const auto& v : labels) {
    EXPECT_NE(table.str().find(v.label + " "), std::string::npos);
    EXPECT_NE(csv.str().find("\n" + v.label + ","), std::string::npos);
  }
}

TEST(Ablation, FailuresAreReportedPerVariant) {
  tsat::AblationData broken = fixture().data;
  broken.val.clear();
  tsat::TrainConfig tc;
  tc.max_epochs = 1;
  const auto reports = tsat::ablation_run(broken, tiny_config(), tc);
  ASSERT_EQ(reports.size(), 4u);
  for (const auto& r : reports) {
    EXPECT_FALSE(r.ok());
    EXPECT_NE(r.error.find("validation"), std::string::npos);
  }
  std::ostringstream table;
  tsat::write_eval_table(table, reports);
  EXPECT_NE(table.str().find("failed"), std::string::npos);
}
