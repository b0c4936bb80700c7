// Library walk-through: synthesize data, build one dynamic graph, train a
// small model for a few epochs and compare it with the persistence forecast.

#include <iostream>

#include "tsat/data.hpp"
#include "tsat/graph.hpp"
#include "tsat/model.hpp"
#include "tsat/train.hpp"

int main() {
  tsat::SynthOptions so;
  so.series = 4;
  so.length = 1024;
  so.seed = 1;
  const auto raw = tsat::synth_coupled_sinusoids(so);

  const std::size_t backcast = 48, horizon = 12;
  const auto splits = tsat::split_sequential(raw.length(), backcast + horizon);
  const auto norm = tsat::znormalize(raw, splits.train);

  tsat::GraphOptions g;
  g.imf_count = 4;
  g.threshold = 0.5;
  const auto graph = tsat::build_graph(tsat::window_nodes(norm.frame, 0, backcast), g);
  std::cout << "adjacency of the first window:\n";
  for (std::size_t i = 0; i < graph.series_count(); ++i) {
    for (std::size_t j = 0; j < graph.series_count(); ++j) std::cout << ' ' << graph.adjacency(i, j);
    std::cout << '\n';
  }

  const auto train_set =
      tsat::make_samples(norm.frame, tsat::make_windows(splits.train, backcast, horizon, 4), backcast, horizon, g);
  const auto val_set =
      tsat::make_samples(norm.frame, tsat::make_windows(splits.val, backcast, horizon, 4), backcast, horizon, g);
  const auto test_set =
      tsat::make_samples(norm.frame, tsat::make_windows(splits.test, backcast, horizon, 4), backcast, horizon, g);

  tsat::TsatConfig cfg;
  cfg.series = raw.series_count();
  cfg.backcast = backcast;
  cfg.horizon = horizon;
  tsat::TrainConfig tc;
  tc.initial_lr = 3e-3;
  tc.max_epochs = 15;
  tc.seed = 1;
  const auto result = tsat::train(cfg, train_set, val_set, tc, nullptr, [](const tsat::LossCurvePoint& p) {
    std::cout << "epoch " << p.epoch << "  train " << p.train_loss << "  val rmse " << p.val_rmse << '\n';
  });

  auto report = tsat::evaluate(result.params, cfg, test_set);
  report.epochs_run = result.epochs_run;
  tsat::write_eval_table(std::cout, {report, tsat::evaluate_persistence(test_set)});
}
