// tsat: command-line front end.
//
//   tsat synth       --out-dir runs/synth
//   tsat decompose   --input data.csv --k-max 4
//   tsat build-graph --input data.csv --backcast 48 --imf-count 4 --threshold 0.5
//   tsat train       --input data.csv --seed 1
//   tsat evaluate    --input data.csv --checkpoint runs/train/checkpoint.json
//   tsat ablate      --input data.csv --seed 1
//   tsat embed       --input data.csv --checkpoint runs/train/checkpoint.json
//
// Every subcommand takes --config FILE (INI; a [train] section holds the
// train flags by their long names, and so on), --seed and --out-dir (default
// $TSAT_OUTPUT_DIR, else ./tsat-out). The fully resolved option set is written
// to <out-dir>/resolved_config.ini and can be fed back through --config.
//
// Exit status: 0 success, 1 internal error, 2 bad input or usage.

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "tsat/data.hpp"
#include "tsat/emd.hpp"
#include "tsat/error.hpp"
#include "tsat/graph.hpp"
#include "tsat/model.hpp"
#include "tsat/serialization.hpp"
#include "tsat/train.hpp"

namespace fs = std::filesystem;

namespace {

constexpr const char* kConfigEcho = "resolved_config.ini";

struct Common {
  std::uint64_t seed = 0;
  std::string out_dir = "tsat-out";
};

struct WindowFlags {
  std::string input;
  std::size_t backcast = 48;
  std::size_t horizon = 12;
  std::size_t stride = 1;
  std::size_t eval_stride = 1;
};

struct SiftFlags {
  double sd_threshold = 0.2;
  int max_iter = 100;
};

struct ModelFlags {
  tsat::TsatConfig cfg;
  std::string activation = "softmax";
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--seed", c.seed, "Master seed")->capture_default_str();
  sub->add_option("--out-dir", c.out_dir, "Output directory")->envname("TSAT_OUTPUT_DIR")->capture_default_str();
}

void add_input(CLI::App* sub, WindowFlags& w) {
  sub->add_option("--input", w.input, "Time-series CSV (one column per series)")->required();
}

void add_windows(CLI::App* sub, WindowFlags& w, bool with_eval_stride) {
  sub->add_option("--backcast", w.backcast, "Backcast length L_x")->capture_default_str();
  sub->add_option("--horizon", w.horizon, "Forecast length L_y")->capture_default_str();
  sub->add_option("--stride", w.stride, "Stride between training windows")->capture_default_str();
  if (with_eval_stride) {
    sub->add_option("--eval-stride", w.eval_stride, "Stride between validation/test windows")->capture_default_str();
  }
}

void add_sift(CLI::App* sub, SiftFlags& s) {
  sub->add_option("--sd-threshold", s.sd_threshold, "Sifting stop threshold")->capture_default_str();
  sub->add_option("--max-sift", s.max_iter, "Maximum sifting iterations per IMF")->capture_default_str();
}

void add_graph(CLI::App* sub, ModelFlags& m) {
  sub->add_option("--imf-count", m.cfg.imf_count, "IMFs per series (edge dimension K)")->capture_default_str();
  sub->add_option("--threshold", m.cfg.threshold, "Adjacency threshold c")->capture_default_str();
}

void add_model(CLI::App* sub, ModelFlags& m) {
  auto& c = m.cfg;
  add_graph(sub, m);
  sub->add_option("--model-dim", c.model_dim, "Embedding width d")->capture_default_str();
  sub->add_option("--key-dim", c.key_dim, "Query/key width per head")->capture_default_str();
  sub->add_option("--value-dim", c.value_dim, "Value width per head")->capture_default_str();
  sub->add_option("--heads", c.heads, "Attention heads")->capture_default_str();
  sub->add_option("--blocks", c.blocks, "Encoder blocks M")->capture_default_str();
  sub->add_option("--ffn-width", c.ffn_width, "Feed-forward width (0 = 4 * model-dim)")->capture_default_str();
  sub->add_option("--dropout", c.dropout, "Dropout rate")->capture_default_str();
  sub->add_option("--imf-activation", m.activation, "Activation on IMF similarity")
      ->check(CLI::IsMember({"softmax", "exp", "none"}))
      ->capture_default_str();
  sub->add_option("--use-edge", c.use_edge, "Inject IMF similarity into attention")->capture_default_str();
  sub->add_option("--use-adjacency", c.use_adjacency, "Inject adjacency into attention")->capture_default_str();
}

void add_training(CLI::App* sub, tsat::TrainConfig& t) {
  sub->add_option("--batch-size", t.batch_size, "Mini-batch size")->capture_default_str();
  sub->add_option("--lr", t.initial_lr, "Initial learning rate")->capture_default_str();
  sub->add_option("--decay", t.decay_gamma, "Exponential learning-rate decay per epoch")->capture_default_str();
  sub->add_option("--max-epochs", t.max_epochs, "Epoch limit")->capture_default_str();
  sub->add_option("--patience", t.patience, "Epochs without validation improvement before stopping")
      ->capture_default_str();
}

std::string output_dir(const Common& c) {
  fs::path p(c.out_dir);
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw tsat::IoError("cannot create output directory '" + c.out_dir + "': " + ec.message());
  return p.string();
}

std::span<const double> row_of(const tsat::Tensor& m, std::size_t i) {
  return m.values().subspan(i * m.cols(), m.cols());
}

std::string join(const std::string& dir, const std::string& name) { return (fs::path(dir) / name).string(); }

template <class Writer>
void write_text(const std::string& path, Writer&& write) {
  std::ostringstream out;
  write(out);
  tsat::detail::write_file(path, out.str());
}

void echo_config(const CLI::App* sub, const std::string& dir) {
  write_text(join(dir, kConfigEcho), [&](std::ostream& out) {
    out << '[' << sub->get_name() << "]\n" << sub->config_to_str(true, false);
  });
}

tsat::GraphOptions graph_options(const ModelFlags& m, const SiftFlags& s) {
  tsat::GraphOptions g;
  g.imf_count = m.cfg.imf_count;
  g.threshold = m.cfg.threshold;
  g.sift.sd_threshold = s.sd_threshold;
  g.sift.max_iter = s.max_iter;
  return g;
}

void report_warnings(const std::vector<std::string>& warnings) {
  for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';
}

struct Prepared {
  tsat::TimeSeriesFrame raw;
  tsat::TimeSeriesFrame frame;  // normalized
  tsat::NormalizationStats stats;
  tsat::SplitRanges splits;
  std::vector<tsat::WindowIndex> train_windows, val_windows, test_windows;
};

// Loads, splits and normalizes. With `stats` given those are applied instead
// of training-range statistics.
Prepared prepare(const WindowFlags& w, const tsat::NormalizationStats* stats = nullptr) {
  Prepared p;
  p.raw = tsat::load_csv(w.input);
  p.splits = tsat::split_sequential(p.raw.length(), w.backcast + w.horizon);
  if (stats) {
    p.frame = tsat::normalize_with(p.raw, *stats);
    p.stats = *stats;
  } else {
    auto n = tsat::znormalize(p.raw, p.splits.train);
    report_warnings(n.warnings);
    p.frame = std::move(n.frame);
    p.stats = std::move(n.stats);
  }
  p.train_windows = tsat::make_windows(p.splits.train, w.backcast, w.horizon, w.stride, tsat::Split::train);
  p.val_windows = tsat::make_windows(p.splits.val, w.backcast, w.horizon, w.eval_stride, tsat::Split::val);
  p.test_windows = tsat::make_windows(p.splits.test, w.backcast, w.horizon, w.eval_stride, tsat::Split::test);
  return p;
}

tsat::TsatConfig resolve_model(const ModelFlags& m, const Prepared& p, const WindowFlags& w, std::uint64_t seed) {
  tsat::TsatConfig cfg = m.cfg;
  cfg.series = p.frame.series_count();
  cfg.backcast = w.backcast;
  cfg.horizon = w.horizon;
  cfg.imf_activation = tsat::parse_imf_activation(m.activation);
  cfg.seed = seed;
  cfg.validate();
  return cfg;
}

std::vector<tsat::Sample> samples_for(const Prepared& p, const std::vector<tsat::WindowIndex>& windows,
                                      const WindowFlags& w, const tsat::GraphOptions& g) {
  return tsat::make_samples(p.frame, windows, w.backcast, w.horizon, g);
}

// Long-format test forecasts, normalized and on the original scale.
void write_forecasts(std::ostream& out, const std::vector<tsat::Tensor>& preds, const std::vector<tsat::Sample>& samples,
                     const std::vector<tsat::WindowIndex>& windows, const Prepared& p) {
  out << "window_id,y_start,series,step,forecast,target,forecast_denorm,target_denorm\n";
  for (std::size_t s = 0; s < samples.size(); ++s) {
    const tsat::Tensor f = tsat::denormalize(preds[s], p.stats);
    const tsat::Tensor y = tsat::denormalize(samples[s].target, p.stats);
    for (std::size_t i = 0; i < preds[s].rows(); ++i) {
      for (std::size_t h = 0; h < preds[s].cols(); ++h) {
        out << s << ',' << windows[s].y_start << ',' << p.frame.series_names[i] << ',' << h + 1 << ','
            << tsat::format_double(preds[s](i, h)) << ',' << tsat::format_double(samples[s].target(i, h)) << ','
            << tsat::format_double(f(i, h)) << ',' << tsat::format_double(y(i, h)) << '\n';
      }
    }
  }
}

void write_reports(const std::string& dir, const std::string& stem, const std::vector<tsat::EvalReport>& reports) {
  write_text(join(dir, stem + ".csv"), [&](std::ostream& out) { tsat::write_eval_csv(out, reports); });
  write_text(join(dir, stem + ".txt"), [&](std::ostream& out) { tsat::write_eval_table(out, reports); });
  tsat::write_eval_table(std::cout, reports);
}

// ---- subcommands ----

struct SynthCmd {
  Common common;
  tsat::SynthOptions opt;
  bool zero_phases = false;
  std::string output = "synth.csv";

  void attach(CLI::App& app) {
    auto* sub = app.add_subcommand("synth", "Generate grouped, coupled sinusoids with opposing trends");
    add_common(sub, common);
    sub->add_option("--series", opt.series, "Number of series N")->capture_default_str();
    sub->add_option("--length", opt.length, "Number of time steps T")->capture_default_str();
    sub->add_option("--groups", opt.groups, "Number of series groups")->capture_default_str();
    sub->add_option("--noise-std", opt.noise_std, "Gaussian noise standard deviation")->capture_default_str();
    sub->add_option("--coupling", opt.coupling, "Strength of the lagged peer term")->capture_default_str();
    sub->add_option("--lag", opt.lag, "Lag of the peer term in steps")->capture_default_str();
    sub->add_option("--zero-phases", zero_phases, "Start every sinusoid at phase zero")->capture_default_str();
    sub->add_option("--output", output, "File name inside the output directory")->capture_default_str();
    sub->callback([this, sub] { run(sub); });
  }

  void run(const CLI::App* sub) {
    const std::string dir = output_dir(common);
    opt.seed = common.seed;
    opt.random_phases = !zero_phases;
    tsat::save_csv(join(dir, output), tsat::synth_coupled_sinusoids(opt));
    echo_config(sub, dir);
    std::cout << "wrote " << join(dir, output) << '\n';
  }
};

struct DecomposeCmd {
  Common common;
  WindowFlags data;
  SiftFlags sift;
  std::size_t k_max = 4;

  void attach(CLI::App& app) {
    auto* sub = app.add_subcommand("decompose", "Split every series into IMFs and a residual trend");
    add_common(sub, common);
    add_input(sub, data);
    sub->add_option("--k-max", k_max, "Maximum number of IMFs per series")->capture_default_str();
    add_sift(sub, sift);
    sub->callback([this, sub] { run(sub); });
  }

  void run(const CLI::App* sub) {
    const auto frame = tsat::load_csv(data.input);
    tsat::emd::EmdOptions opt;
    opt.k_max = k_max;
    opt.sift.sd_threshold = sift.sd_threshold;
    opt.sift.max_iter = sift.max_iter;
    const std::string dir = output_dir(common);
    write_text(join(dir, "imfs.csv"), [&](std::ostream& out) {
      out << "series,component,t,value\n";
      for (std::size_t i = 0; i < frame.series_count(); ++i) {
        const auto d = tsat::emd::decompose(row_of(frame.values, i), opt);
        const auto& name = frame.series_names[i];
        for (std::size_t k = 0; k < d.imf_count(); ++k)
          for (std::size_t t = 0; t < d.length(); ++t)
            out << name << ",imf" << k + 1 << ',' << t << ',' << tsat::format_double(d.imfs[k][t]) << '\n';
        for (std::size_t t = 0; t < d.length(); ++t)
          out << name << ",residual," << t << ',' << tsat::format_double(d.residual[t]) << '\n';
        std::cout << name << ": " << d.imf_count() << " IMFs\n";
      }
    });
    echo_config(sub, dir);
  }
};

struct BuildGraphCmd {
  Common common;
  WindowFlags data;
  SiftFlags sift;
  ModelFlags model;
  bool per_window = false;

  void attach(CLI::App& app) {
    auto* sub = app.add_subcommand("build-graph", "Turn rolling windows into dynamic graphs");
    add_common(sub, common);
    add_input(sub, data);
    add_windows(sub, data, false);
    add_graph(sub, model);
    add_sift(sub, sift);
    sub->add_option("--per-window", per_window, "Write graphs/window_<id>.json instead of one archive")
        ->capture_default_str();
    sub->callback([this, sub] { run(sub); });
  }

  void run(const CLI::App* sub) {
    data.eval_stride = data.stride;
    const Prepared p = prepare(data);
    std::vector<tsat::WindowIndex> windows = p.train_windows;
    windows.insert(windows.end(), p.val_windows.begin(), p.val_windows.end());
    windows.insert(windows.end(), p.test_windows.begin(), p.test_windows.end());
    const auto g = graph_options(model, sift);

    std::vector<tsat::DynamicGraph> graphs;
    graphs.reserve(windows.size());
    for (const auto& w : windows) graphs.push_back(tsat::build_graph(tsat::window_nodes(p.frame, w.x_start, data.backcast), g));

    const std::string dir = output_dir(common);
    if (per_window) {
      const fs::path sub_dir = fs::path(dir) / "graphs";
      fs::create_directories(sub_dir);
      for (std::size_t i = 0; i < graphs.size(); ++i)
        tsat::export_graph(graphs[i], (sub_dir / ("window_" + std::to_string(i) + ".json")).string());
    } else {
      tsat::save_graph_archive(join(dir, "graphs.jsonl"), graphs);
    }
    write_text(join(dir, "manifest.csv"), [&](std::ostream& out) { tsat::write_window_manifest(out, windows); });
    tsat::save_csv(join(dir, "normalized.csv"), p.frame);
    write_text(join(dir, "normalization.json"), [&](std::ostream& out) {
      out << tsat::Json{{"mean", p.stats.mean}, {"std", p.stats.std}}.dump() << '\n';
    });
    echo_config(sub, dir);
    std::cout << "built " << graphs.size() << " graphs (" << p.train_windows.size() << " train, "
              << p.val_windows.size() << " val, " << p.test_windows.size() << " test)\n";
  }
};

struct TrainCmd {
  Common common;
  WindowFlags data;
  SiftFlags sift;
  ModelFlags model;
  tsat::TrainConfig tc;
  bool quiet = false;

  void attach(CLI::App& app) {
    auto* sub = app.add_subcommand("train", "Train TSAT and evaluate it on the test split");
    add_common(sub, common);
    add_input(sub, data);
    add_windows(sub, data, true);
    add_model(sub, model);
    add_sift(sub, sift);
    add_training(sub, tc);
    sub->add_flag("--quiet", quiet, "Suppress per-epoch progress");
    sub->callback([this, sub] { run(sub); });
  }

  void run(const CLI::App* sub) {
    const Prepared p = prepare(data);
    const auto cfg = resolve_model(model, p, data, common.seed);
    tc.seed = common.seed;
    tc.validate();
    const auto g = graph_options(model, sift);
    const auto train_set = samples_for(p, p.train_windows, data, g);
    const auto val_set = samples_for(p, p.val_windows, data, g);
    const auto test_set = samples_for(p, p.test_windows, data, g);

    const auto result = tsat::train(cfg, train_set, val_set, tc, nullptr, [&](const tsat::LossCurvePoint& pt) {
      if (!quiet) {
        std::cerr << "epoch " << pt.epoch << " train_loss " << pt.train_loss << " val_rmse " << pt.val_rmse << '\n';
      }
    });

    const auto preds = tsat::predict(result.params, cfg, test_set);
    tsat::EvalReport report = tsat::score(preds, test_set);
    report.seed = common.seed;
    report.epochs_run = result.epochs_run;
    report.best_val_rmse = result.best_val_rmse;
    tsat::EvalReport baseline = tsat::evaluate_persistence(test_set);
    baseline.seed = common.seed;

    const std::string dir = output_dir(common);
    tsat::save_checkpoint(join(dir, "checkpoint.json"), {cfg, result.params, p.stats});
    write_text(join(dir, "loss_curve.csv"), [&](std::ostream& out) { tsat::write_loss_curve(out, result.curve); });
    write_text(join(dir, "test_forecasts.csv"),
               [&](std::ostream& out) { write_forecasts(out, preds, test_set, p.test_windows, p); });
    write_reports(dir, "metrics", {report, baseline});
    echo_config(sub, dir);
    std::cerr << "trained " << result.epochs_run << " epochs in " << result.runtime_seconds << " s\n";
  }
};

struct EvaluateCmd {
  Common common;
  WindowFlags data;
  SiftFlags sift;
  std::string checkpoint;

  void attach(CLI::App& app) {
    auto* sub = app.add_subcommand("evaluate", "Score a checkpoint on the test split");
    add_common(sub, common);
    add_input(sub, data);
    sub->add_option("--checkpoint", checkpoint, "Checkpoint written by train")->required();
    sub->add_option("--eval-stride", data.eval_stride, "Stride between test windows")->capture_default_str();
    add_sift(sub, sift);
    sub->callback([this, sub] { run(sub); });
  }

  void run(const CLI::App* sub) {
    const auto ckpt = tsat::load_checkpoint(checkpoint);
    data.backcast = ckpt.config.backcast;
    data.horizon = ckpt.config.horizon;
    const Prepared p = prepare(data, &ckpt.normalization);
    if (p.frame.series_count() != ckpt.config.series) {
      throw tsat::ConfigError("checkpoint expects " + std::to_string(ckpt.config.series) + " series, '" + data.input +
                              "' has " + std::to_string(p.frame.series_count()));
    }
    ModelFlags m{ckpt.config, tsat::to_string(ckpt.config.imf_activation)};
    const auto test_set = samples_for(p, p.test_windows, data, graph_options(m, sift));
    const auto preds = tsat::predict(ckpt.params, ckpt.config, test_set);
    tsat::EvalReport report = tsat::score(preds, test_set);
    report.seed = ckpt.config.seed;
    tsat::EvalReport baseline = tsat::evaluate_persistence(test_set);
    baseline.seed = ckpt.config.seed;

    const std::string dir = output_dir(common);
    write_text(join(dir, "test_forecasts.csv"),
               [&](std::ostream& out) { write_forecasts(out, preds, test_set, p.test_windows, p); });
    write_reports(dir, "metrics", {report, baseline});
    echo_config(sub, dir);
  }
};

struct AblateCmd {
  Common common;
  WindowFlags data;
  SiftFlags sift;
  ModelFlags model;
  tsat::TrainConfig tc;

  void attach(CLI::App& app) {
    auto* sub = app.add_subcommand("ablate", "Train the four graph ablation variants with shared seed and splits");
    add_common(sub, common);
    add_input(sub, data);
    add_windows(sub, data, true);
    add_model(sub, model);
    add_sift(sub, sift);
    add_training(sub, tc);
    sub->callback([this, sub] { run(sub); });
  }

  void run(const CLI::App* sub) {
    const Prepared p = prepare(data);
    const auto cfg = resolve_model(model, p, data, common.seed);
    tc.seed = common.seed;
    tc.validate();
    const auto g = graph_options(model, sift);
    tsat::AblationData d{samples_for(p, p.train_windows, data, g), samples_for(p, p.val_windows, data, g),
                         samples_for(p, p.test_windows, data, g)};
    const auto reports = tsat::ablation_run(d, cfg, tc, [](const tsat::AblationVariant& v, const tsat::TrainResult& r,
                                                           const tsat::EvalReport&) {
      std::cerr << v.label << ": " << r.epochs_run << " epochs in " << r.runtime_seconds << " s\n";
    });
    const std::string dir = output_dir(common);
    write_reports(dir, "ablation", reports);
    echo_config(sub, dir);
    for (const auto& r : reports)
      if (!r.ok()) throw tsat::Error("variant '" + r.label + "' failed: " + r.error);
  }
};

struct EmbedCmd {
  Common common;
  WindowFlags data;
  SiftFlags sift;
  std::string checkpoint;
  std::string split = "all";

  void attach(CLI::App& app) {
    auto* sub = app.add_subcommand("embed", "Export node and pooled graph embeddings per window");
    add_common(sub, common);
    add_input(sub, data);
    sub->add_option("--checkpoint", checkpoint, "Checkpoint written by train")->required();
    sub->add_option("--stride", data.stride, "Stride between windows")->capture_default_str();
    sub->add_option("--split", split, "Windows to export")
        ->check(CLI::IsMember({"all", "train", "val", "test"}))
        ->capture_default_str();
    add_sift(sub, sift);
    sub->callback([this, sub] { run(sub); });
  }

  void run(const CLI::App* sub) {
    const auto ckpt = tsat::load_checkpoint(checkpoint);
    data.backcast = ckpt.config.backcast;
    data.horizon = ckpt.config.horizon;
    data.eval_stride = data.stride;
    const Prepared p = prepare(data, &ckpt.normalization);
    if (p.frame.series_count() != ckpt.config.series) {
      throw tsat::ConfigError("checkpoint expects " + std::to_string(ckpt.config.series) + " series, '" + data.input +
                              "' has " + std::to_string(p.frame.series_count()));
    }
    std::vector<tsat::WindowIndex> windows;
    auto take = [&](const std::string& name, const std::vector<tsat::WindowIndex>& w) {
      if (split == "all" || split == name) windows.insert(windows.end(), w.begin(), w.end());
    };
    take("train", p.train_windows);
    take("val", p.val_windows);
    take("test", p.test_windows);

    ModelFlags m{ckpt.config, tsat::to_string(ckpt.config.imf_activation)};
    const auto g = graph_options(m, sift);
    const std::size_t d = ckpt.config.model_dim;
    const std::string dir = output_dir(common);
    std::ostringstream nodes, pooled;
    tsat::write_embedding_header(nodes, {"window_index", "split", "node"}, d);
    tsat::write_embedding_header(pooled, {"window_index", "split"}, d);
    for (std::size_t w = 0; w < windows.size(); ++w) {
      const auto graph = tsat::build_graph(tsat::window_nodes(p.frame, windows[w].x_start, data.backcast), g);
      const auto out = tsat::forward(graph, ckpt.params, ckpt.config);
      const std::string id = std::to_string(w), tag = tsat::to_string(windows[w].split);
      for (std::size_t i = 0; i < ckpt.config.series; ++i) {
        tsat::write_embedding_row(nodes, {id, tag, p.frame.series_names[i]}, row_of(out.node_embeddings, i));
      }
      tsat::write_embedding_row(pooled, {id, tag}, out.graph_embedding.values());
    }
    tsat::detail::write_file(join(dir, "node_embeddings.csv"), nodes.str());
    tsat::detail::write_file(join(dir, "graph_embeddings.csv"), pooled.str());
    echo_config(sub, dir);
    std::cout << "embedded " << windows.size() << " windows x " << ckpt.config.series << " nodes\n";
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Edge-enhanced dynamic graphs and TSAT forecasting for multivariate time series", "tsat"};
  app.require_subcommand(1);
  app.fallthrough();
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.set_config("--config", "", "INI file supplying option values; keys go under a [subcommand] section");
  app.set_help_all_flag("--help-all", "Show help for every subcommand");

  SynthCmd synth;
  DecomposeCmd decompose;
  BuildGraphCmd build_graph;
  TrainCmd train;
  EvaluateCmd evaluate;
  AblateCmd ablate;
  EmbedCmd embed;
  synth.attach(app);
  decompose.attach(app);
  build_graph.attach(app);
  train.attach(app);
  evaluate.attach(app);
  ablate.attach(app);
  embed.attach(app);

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  } catch (const tsat::InputError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
