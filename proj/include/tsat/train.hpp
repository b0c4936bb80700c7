#pragma once

// Training loop (mini-batch Adam, exponential decay, early stopping on
// validation RMSE), metrics, the persistence baseline, a finite-difference
// gradient harness and the four-variant ablation runner.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <iomanip>
#include <limits>
#include <numbers>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "tsat/adam.hpp"
#include "tsat/autodiff.hpp"
#include "tsat/data.hpp"
#include "tsat/error.hpp"
#include "tsat/graph.hpp"
#include "tsat/model.hpp"

namespace tsat {

// ---- metrics ----

namespace detail {

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (!a.same_shape(b)) {
    throw DimensionError(std::string(what) + ": shapes " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()) + " differ");
  }
}

}  // namespace detail

inline double mse_loss(const Tensor& pred, const Tensor& target) {
  detail::require_same_shape(pred, target, "mse_loss");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += (pred[i] - target[i]) * (pred[i] - target[i]);
  return s / static_cast<double>(pred.size());
}

inline double rmse(const Tensor& pred, const Tensor& target) {
  detail::require_same_shape(pred, target, "rmse");
  return std::sqrt(mse_loss(pred, target));
}

inline double mae(const Tensor& pred, const Tensor& target) {
  detail::require_same_shape(pred, target, "mae");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += std::fabs(pred[i] - target[i]);
  return s / static_cast<double>(pred.size());
}

/// Repeats each series' last observation across the horizon.
inline Tensor persistence_baseline(const Tensor& window, std::size_t horizon) {
  if (window.cols() < 1) throw ParameterError("persistence_baseline: empty window");
  Tensor out = Tensor::matrix(window.rows(), horizon);
  for (std::size_t i = 0; i < window.rows(); ++i)
    for (std::size_t h = 0; h < horizon; ++h) out(i, h) = window(i, window.cols() - 1);
  return out;
}

// ---- samples ----

/// One training example: the graph of a backcast window and its N x L_y target.
struct Sample {
  DynamicGraph graph;
  Tensor target;
  std::size_t window_index = 0;
};

/// Builds graphs and targets for the given windows of a (normalized) frame.
inline std::vector<Sample> make_samples(const TimeSeriesFrame& frame, const std::vector<WindowIndex>& windows,
                                        std::size_t backcast, std::size_t horizon, const GraphOptions& graph_options,
                                        std::size_t first_index = 0) {
  std::vector<Sample> out;
  out.reserve(windows.size());
  for (std::size_t w = 0; w < windows.size(); ++w) {
    Sample s;
    s.graph = build_graph(window_nodes(frame, windows[w].x_start, backcast), graph_options);
    s.target = window_target(frame, windows[w].y_start, horizon);
    s.window_index = first_index + w;
    out.push_back(std::move(s));
  }
  return out;
}

// ---- training ----

struct TrainConfig {
  std::size_t batch_size = 64;
  double initial_lr = 1e-4;
  double decay_gamma = 5e-3;
  std::size_t max_epochs = 2000;
  std::size_t patience = 20;
  std::uint64_t seed = 0;

  void validate() const {
    if (batch_size < 1) throw ConfigError("train: batch_size must be at least 1");
    if (max_epochs < 1) throw ConfigError("train: max_epochs must be at least 1");
    if (patience < 1) throw ConfigError("train: patience must be at least 1");
    if (!(initial_lr >= 0.0)) throw ConfigError("train: initial_lr must be non-negative");
    if (!(decay_gamma >= 0.0)) throw ConfigError("train: decay_gamma must be non-negative");
  }

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

/// Independent sub-seed for a named stream (splitmix64 of seed + stream).
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

enum SeedStream : std::uint64_t { kInitStream = 1, kShuffleStream = 2, kDropoutStream = 3 };

struct LossCurvePoint {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_rmse = 0.0;
  double learning_rate = 0.0;
  friend bool operator==(const LossCurvePoint&, const LossCurvePoint&) = default;
};

struct TrainResult {
  TsatParams params;  // best-validation parameters
  std::vector<LossCurvePoint> curve;
  std::size_t epochs_run = 0;
  std::size_t best_epoch = 0;
  double best_val_rmse = 0.0;
  double runtime_seconds = 0.0;
};

/// Forecasts for every sample, evaluated in batches without dropout.
inline std::vector<Tensor> predict(const TsatParams& params, const TsatConfig& cfg, const std::vector<Sample>& samples,
                                   std::size_t batch_size = 64) {
  std::vector<Tensor> out;
  out.reserve(samples.size());
  const std::size_t n = cfg.series;
  for (std::size_t start = 0; start < samples.size(); start += batch_size) {
    const std::size_t count = std::min(batch_size, samples.size() - start);
    std::vector<const DynamicGraph*> graphs;
    for (std::size_t b = 0; b < count; ++b) graphs.push_back(&samples[start + b].graph);
    ad::Tape tape;
    const TapeWeights w = record_parameters(tape, params);
    const Tensor f = forward_batch(tape, w, graphs, cfg).forecasts.value();
    for (std::size_t b = 0; b < count; ++b) {
      Tensor one = Tensor::matrix(n, cfg.horizon);
      std::copy_n(f.values().begin() + static_cast<std::ptrdiff_t>(b * n * cfg.horizon), n * cfg.horizon,
                  one.values().begin());
      out.push_back(std::move(one));
    }
  }
  return out;
}

/// RMSE over all samples and elements.
inline double dataset_rmse(const TsatParams& params, const TsatConfig& cfg, const std::vector<Sample>& samples,
                           std::size_t batch_size = 64) {
  const auto preds = predict(params, cfg, samples, batch_size);
  double s = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    for (std::size_t e = 0; e < preds[i].size(); ++e) {
      const double d = preds[i][e] - samples[i].target[e];
      s += d * d;
    }
    count += preds[i].size();
  }
  return std::sqrt(s / static_cast<double>(count));
}

using EpochCallback = std::function<void(const LossCurvePoint&)>;

/// Mini-batch Adam with a seeded per-epoch shuffle (last partial batch kept),
/// lr = lr0 exp(-gamma epoch), and early stopping after `patience` epochs
/// without a validation improvement. Returns the best-validation parameters.
inline TrainResult train(const TsatConfig& cfg, const std::vector<Sample>& train_set, const std::vector<Sample>& val_set,
                         const TrainConfig& tc, const TsatParams* initial = nullptr,
                         const EpochCallback& on_epoch = {}) {
  cfg.validate();
  tc.validate();
  if (train_set.empty()) throw ConfigError("train: no training windows");
  if (val_set.empty()) throw ConfigError("train: no validation windows");
  const auto started = std::chrono::steady_clock::now();

  TsatParams params = initial ? *initial : parameter_init(cfg, derive_seed(tc.seed, kInitStream));
  check_parameter_shapes(params, cfg);
  std::vector<Tensor*> slots;
  for_each_parameter(params, [&](const std::string&, Tensor& t) { slots.push_back(&t); });
  std::vector<AdamState> optimizer(slots.size());

  std::mt19937_64 shuffle_rng(derive_seed(tc.seed, kShuffleStream));
  Dropout dropout(cfg.dropout, derive_seed(tc.seed, kDropoutStream));
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  TrainResult result;
  result.params = params;
  result.best_val_rmse = std::numeric_limits<double>::infinity();
  std::size_t stale = 0;
  const std::size_t n = cfg.series;

  for (std::size_t epoch = 0; epoch < tc.max_epochs; ++epoch) {
    const double lr = decay_learning_rate(tc.initial_lr, static_cast<int>(epoch), tc.decay_gamma);
    for (auto& s : optimizer) s.learning_rate = lr;
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += tc.batch_size) {
      const std::size_t count = std::min(tc.batch_size, order.size() - start);
      std::vector<const DynamicGraph*> graphs;
      Tensor target = Tensor::matrix(count * n, cfg.horizon);
      for (std::size_t b = 0; b < count; ++b) {
        const Sample& s = train_set[order[start + b]];
        graphs.push_back(&s.graph);
        if (s.target.rows() != n || s.target.cols() != cfg.horizon) {
          throw DimensionError("train: target shape " + shape_string(s.target.shape()) + " does not match config");
        }
        std::copy(s.target.values().begin(), s.target.values().end(),
                  target.values().begin() + static_cast<std::ptrdiff_t>(b * n * cfg.horizon));
      }
      ad::Tape tape;
      const TapeWeights w = record_parameters(tape, params);
      const BatchOutput out = forward_batch(tape, w, graphs, cfg, cfg.dropout > 0.0 ? &dropout : nullptr);
      ad::Var loss = ad::mse(out.forecasts, tape.constant(std::move(target), "target"));
      tape.backward(loss);
      std::size_t i = 0;
      for_each_parameter(w, [&](const std::string&, const ad::Var& v) {
        adam_step(optimizer[i], *slots[i], v.grad());
        ++i;
      });
      loss_sum += loss.value()[0] * static_cast<double>(count);
    }

    LossCurvePoint point{epoch, loss_sum / static_cast<double>(order.size()), dataset_rmse(params, cfg, val_set), lr};
    if (!std::isfinite(point.train_loss) || !std::isfinite(point.val_rmse)) {
      throw NumericError("train: non-finite loss at epoch " + std::to_string(epoch));
    }
    result.curve.push_back(point);
    result.epochs_run = epoch + 1;
    if (on_epoch) on_epoch(point);
    if (point.val_rmse < result.best_val_rmse) {
      result.best_val_rmse = point.val_rmse;
      result.best_epoch = epoch;
      result.params = params;
      stale = 0;
    } else if (++stale >= tc.patience) {
      break;
    }
  }
  result.runtime_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return result;
}

inline void write_loss_curve(std::ostream& out, const std::vector<LossCurvePoint>& curve) {
  out << "epoch,train_loss,val_rmse,lr\n";
  for (const auto& p : curve) {
    out << p.epoch << ',' << format_double(p.train_loss) << ',' << format_double(p.val_rmse) << ','
        << format_double(p.learning_rate) << '\n';
  }
}

// ---- evaluation ----

struct EvalReport {
  std::string label = "TSAT";
  std::uint64_t seed = 0;
  std::vector<double> horizon_rmse;  // one entry per forecast step
  std::vector<double> horizon_mae;
  double rmse = 0.0;          // over all elements
  double mae = 0.0;
  double average_rmse = 0.0;  // mean of horizon_rmse
  std::size_t windows = 0;
  std::size_t epochs_run = 0;
  double best_val_rmse = 0.0;
  double runtime_seconds = 0.0;
  std::string error;  // set when the variant failed

  bool ok() const noexcept { return error.empty(); }
};

/// Per-horizon and aggregate metrics of `predictions` against the sample
/// targets.
inline EvalReport score(const std::vector<Tensor>& predictions, const std::vector<Sample>& samples) {
  if (predictions.size() != samples.size()) throw DimensionError("score: prediction count mismatch");
  if (samples.empty()) throw ConfigError("score: no windows to evaluate");
  const std::size_t horizon = samples.front().target.cols();
  std::vector<double> sq(horizon, 0.0), ab(horizon, 0.0);
  std::size_t per_step = 0;
  for (std::size_t s = 0; s < samples.size(); ++s) {
    const Tensor& p = predictions[s];
    const Tensor& y = samples[s].target;
    detail::require_same_shape(p, y, "score");
    for (std::size_t i = 0; i < y.rows(); ++i) {
      for (std::size_t h = 0; h < horizon; ++h) {
        const double d = p(i, h) - y(i, h);
        sq[h] += d * d;
        ab[h] += std::fabs(d);
      }
    }
    per_step += y.rows();
  }
  EvalReport r;
  r.windows = samples.size();
  double sq_total = 0.0, ab_total = 0.0;
  for (std::size_t h = 0; h < horizon; ++h) {
    r.horizon_rmse.push_back(std::sqrt(sq[h] / static_cast<double>(per_step)));
    r.horizon_mae.push_back(ab[h] / static_cast<double>(per_step));
    sq_total += sq[h];
    ab_total += ab[h];
  }
  const double total = static_cast<double>(per_step * horizon);
  r.rmse = std::sqrt(sq_total / total);
  r.mae = ab_total / total;
  r.average_rmse = std::accumulate(r.horizon_rmse.begin(), r.horizon_rmse.end(), 0.0) / static_cast<double>(horizon);
  return r;
}

inline EvalReport evaluate(const TsatParams& params, const TsatConfig& cfg, const std::vector<Sample>& samples) {
  return score(predict(params, cfg, samples), samples);
}

inline EvalReport evaluate_persistence(const std::vector<Sample>& samples) {
  std::vector<Tensor> preds;
  preds.reserve(samples.size());
  for (const auto& s : samples) preds.push_back(persistence_baseline(s.graph.nodes.values, s.target.cols()));
  EvalReport r = score(preds, samples);
  r.label = "persistence";
  return r;
}

/// Metric CSV; runtime is left out so reruns are byte-identical.
inline void write_eval_csv(std::ostream& out, const std::vector<EvalReport>& reports) {
  std::size_t horizon = 0;
  for (const auto& r : reports) horizon = std::max(horizon, r.horizon_rmse.size());
  out << "variant,seed,windows,epochs_run,best_val_rmse,average_rmse,rmse,mae";
  for (std::size_t h = 0; h < horizon; ++h) out << ",rmse_h" << h + 1;
  for (std::size_t h = 0; h < horizon; ++h) out << ",mae_h" << h + 1;
  out << ",error\n";
  for (const auto& r : reports) {
    out << r.label << ',' << r.seed << ',' << r.windows << ',' << r.epochs_run << ',' << format_double(r.best_val_rmse)
        << ',' << format_double(r.average_rmse) << ',' << format_double(r.rmse) << ',' << format_double(r.mae);
    for (std::size_t h = 0; h < horizon; ++h)
      out << ',' << (h < r.horizon_rmse.size() ? format_double(r.horizon_rmse[h]) : "");
    for (std::size_t h = 0; h < horizon; ++h)
      out << ',' << (h < r.horizon_mae.size() ? format_double(r.horizon_mae[h]) : "");
    std::string err = r.error;
    std::replace(err.begin(), err.end(), ',', ';');
    std::replace(err.begin(), err.end(), '\n', ' ');
    out << ',' << err << '\n';
  }
}

/// Aligned text table: one row per variant with its average RMSE.
inline void write_eval_table(std::ostream& out, const std::vector<EvalReport>& reports) {
  std::size_t width = std::string("Variant").size();
  for (const auto& r : reports) width = std::max(width, r.label.size());
  out << std::left << std::setw(static_cast<int>(width)) << "Variant" << "  " << std::right << std::setw(12)
      << "Avg RMSE" << std::setw(12) << "RMSE" << std::setw(12) << "MAE" << std::setw(8) << "Epochs" << '\n';
  out << std::string(width + 2 + 44, '-') << '\n';
  for (const auto& r : reports) {
    out << std::left << std::setw(static_cast<int>(width)) << r.label << "  " << std::right;
    if (r.ok()) {
      out << std::fixed << std::setprecision(6) << std::setw(12) << r.average_rmse << std::setw(12) << r.rmse
          << std::setw(12) << r.mae << std::setw(8) << r.epochs_run;
      out.unsetf(std::ios::floatfield);
    } else {
      out << "failed: " << r.error;
    }
    out << '\n';
  }
}

// ---- gradient check ----

struct GradCheckGroup {
  std::string name;
  double max_relative_error = 0.0;
  std::size_t entries = 0;
};

struct GradCheckReport {
  std::vector<GradCheckGroup> groups;
  double max_relative_error = 0.0;
  std::string worst_group;
  double tolerance = 1e-4;
  bool passed = false;
};

struct GradCheckOptions {
  double tolerance = 1e-4;
  double step = 1e-5;
  std::uint64_t seed = 0;
  std::vector<std::string> groups;  // parameter-name prefixes to check; empty checks all
  /// Test hook applied to each analytic gradient before comparison.
  std::function<void(const std::string& group, Tensor& grad)> corrupt;
};

inline double gradcheck_relative_error(double analytic, double numeric) {
  return std::fabs(analytic - numeric) / std::max({std::fabs(analytic), std::fabs(numeric), 1e-6});
}

/// Central finite differences of the MSE loss on a seeded random graph and
/// target, compared with the tape gradient for every parameter group.
inline GradCheckReport grad_check(const TsatConfig& cfg, const GradCheckOptions& opt = {}) {
  cfg.validate();
  std::mt19937_64 rng(opt.seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 0.1);

  NodeMatrix window;
  window.values = Tensor::matrix(cfg.series, cfg.backcast);
  for (std::size_t i = 0; i < cfg.series; ++i) {
    window.series_names.push_back("s" + std::to_string(i));
    const double two_pi = 2.0 * std::numbers::pi;
    const double slope = 2.0 * (u(rng) - 0.5), cycles = 1.0 + 3.0 * u(rng), phase = two_pi * u(rng);
    for (std::size_t t = 0; t < cfg.backcast; ++t) {
      const double tt = static_cast<double>(t) / static_cast<double>(cfg.backcast);
      window.values(i, t) = slope * tt + std::sin(two_pi * cycles * tt + phase) + noise(rng);
    }
  }
  GraphOptions graph_options;
  graph_options.imf_count = cfg.imf_count;
  graph_options.threshold = cfg.threshold;
  const DynamicGraph graph = build_graph(window, graph_options);
  Tensor target = Tensor::matrix(cfg.series, cfg.horizon);
  for (double& v : target.values()) v = 2.0 * u(rng) - 1.0;

  TsatParams params = parameter_init(cfg, derive_seed(opt.seed, kInitStream));
  // Perturb alpha, biases and gains off their symmetric initial values.
  for_each_parameter(params, [&](const std::string&, Tensor& t) {
    if (t.rank() == 2) return;
    for (double& v : t.values()) v += 0.2 * (u(rng) - 0.5);
  });

  auto loss_of = [&](const TsatParams& p) {
    ad::Tape tape;
    const TapeWeights w = record_parameters(tape, p);
    const DynamicGraph* one[] = {&graph};
    const BatchOutput out = forward_batch(tape, w, one, cfg);
    return ad::mse(out.forecasts, tape.constant(target)).value()[0];
  };

  std::vector<Tensor> analytic;
  {
    ad::Tape tape;
    const TapeWeights w = record_parameters(tape, params);
    const DynamicGraph* one[] = {&graph};
    const BatchOutput out = forward_batch(tape, w, one, cfg);
    tape.backward(ad::mse(out.forecasts, tape.constant(target)));
    for_each_parameter(w, [&](const std::string&, const ad::Var& v) { analytic.push_back(v.grad()); });
  }

  GradCheckReport report;
  report.tolerance = opt.tolerance;
  std::size_t slot = 0;
  for_each_parameter(params, [&](const std::string& name, Tensor& t) {
    Tensor& grad = analytic[slot++];
    const bool selected = opt.groups.empty() || std::any_of(opt.groups.begin(), opt.groups.end(), [&](const auto& g) {
                            return name.rfind(g, 0) == 0;
                          });
    if (!selected) return;
    if (opt.corrupt) opt.corrupt(name, grad);
    GradCheckGroup group{name, 0.0, t.size()};
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double orig = t[i];
      t[i] = orig + opt.step;
      const double up = loss_of(params);
      t[i] = orig - opt.step;
      const double down = loss_of(params);
      t[i] = orig;
      const double numeric = (up - down) / (2.0 * opt.step);
      group.max_relative_error = std::max(group.max_relative_error, gradcheck_relative_error(grad[i], numeric));
    }
    if (group.max_relative_error >= report.max_relative_error) {
      report.max_relative_error = group.max_relative_error;
      report.worst_group = name;
    }
    report.groups.push_back(group);
  });
  report.passed = report.max_relative_error < opt.tolerance;
  return report;
}

// ---- ablation ----

struct AblationVariant {
  std::string label;
  bool use_edge;
  bool use_adjacency;
};

/// Row order of the ablation table.
inline std::vector<AblationVariant> ablation_variants() {
  return {{"TSAT w/o graph", false, false},
          {"TSAT w/o edge", false, true},
          {"TSAT w/o adj", true, false},
          {"TSAT", true, true}};
}

struct AblationData {
  std::vector<Sample> train, val, test;
};

using VariantCallback = std::function<void(const AblationVariant&, const TrainResult&, const EvalReport&)>;

/// Trains and tests every variant with the same seed and splits. A failing
/// variant yields a report carrying its error; the others still run.
inline std::vector<EvalReport> ablation_run(const AblationData& data, const TsatConfig& base, const TrainConfig& tc,
                                            const VariantCallback& on_variant = {}) {
  std::vector<EvalReport> reports;
  for (const auto& v : ablation_variants()) {
    TsatConfig cfg = base;
    cfg.use_edge = v.use_edge;
    cfg.use_adjacency = v.use_adjacency;
    EvalReport r;
    try {
      const TrainResult trained = train(cfg, data.train, data.val, tc);
      r = evaluate(trained.params, cfg, data.test);
      r.epochs_run = trained.epochs_run;
      r.best_val_rmse = trained.best_val_rmse;
      r.runtime_seconds = trained.runtime_seconds;
      r.label = v.label;
      r.seed = tc.seed;
      if (on_variant) on_variant(v, trained, r);
    } catch (const Error& e) {
      r = EvalReport{};
      r.label = v.label;
      r.seed = tc.seed;
      r.error = e.what();
    }
    reports.push_back(std::move(r));
  }
  return reports;
}

}  // namespace tsat
