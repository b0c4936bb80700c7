#pragma once

// Time series attention transformer: an RNN time embedding per node,
// M post-norm blocks of graph-augmented multi-head attention + FFN, a final
// LayerNorm read-out and a shared per-node forecast head.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tsat/autodiff.hpp"
#include "tsat/error.hpp"
#include "tsat/graph.hpp"
#include "tsat/tensor.hpp"

namespace tsat {

enum class ImfActivation { softmax, exp, none };

inline std::string to_string(ImfActivation a) {
  switch (a) {
    case ImfActivation::softmax: return "softmax";
    case ImfActivation::exp: return "exp";
    case ImfActivation::none: return "none";
  }
  return "softmax";
}

inline ImfActivation parse_imf_activation(const std::string& s) {
  if (s == "softmax") return ImfActivation::softmax;
  if (s == "exp") return ImfActivation::exp;
  if (s == "none") return ImfActivation::none;
  throw ConfigError("unknown IMF activation '" + s + "' (expected softmax, exp or none)");
}

struct TsatConfig {
  std::size_t series = 0;     // N
  std::size_t backcast = 0;   // L_x
  std::size_t horizon = 0;    // L_y
  std::size_t imf_count = 4;  // K
  std::size_t model_dim = 16;
  std::size_t key_dim = 8;
  std::size_t value_dim = 8;
  std::size_t heads = 4;
  std::size_t blocks = 1;      // M
  std::size_t ffn_width = 0;   // 0 selects 4 * model_dim
  double dropout = 0.1;
  ImfActivation imf_activation = ImfActivation::softmax;
  bool use_edge = true;
  bool use_adjacency = true;
  double threshold = 0.5;  // c
  std::uint64_t seed = 0;
  double layer_norm_eps = 1e-5;

  std::size_t resolved_ffn_width() const noexcept { return ffn_width ? ffn_width : 4 * model_dim; }

  void validate() const {
    if (series < 1) throw ConfigError("config: series count must be positive");
    if (backcast < 1 || horizon < 1) throw ConfigError("config: backcast and horizon must be positive");
    if (imf_count < 1) throw ConfigError("config: imf_count must be positive");
    if (model_dim < 1 || key_dim < 1 || value_dim < 1 || heads < 1) {
      throw ConfigError("config: model_dim, key_dim, value_dim and heads must be positive");
    }
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("config: dropout must lie in [0, 1)");
    if (!(threshold >= 0.0 && threshold <= 1.0)) throw ConfigError("config: threshold must lie in [0, 1]");
    if (!(layer_norm_eps > 0.0)) throw ConfigError("config: layer_norm_eps must be positive");
  }

  friend bool operator==(const TsatConfig&, const TsatConfig&) = default;
};

/// floor(L_x / 2^n) for n in {1, 2, 3, 4}.
inline std::size_t key_dim_for(std::size_t backcast, int n) {
  if (n < 1 || n > 4) throw ParameterError("key_dim_for: n must be in {1, 2, 3, 4}");
  return backcast >> n;
}

template <class T>
struct HeadWeights {
  T query;  // d x d_k
  T key;    // d x d_k
  T value;  // d x d_v
};

template <class T>
struct BlockWeights {
  std::vector<HeadWeights<T>> heads;
  T output;  // (H * d_v) x d
  T norm1_gain, norm1_bias;
  T ffn_in, ffn_in_bias;    // d x ffn, ffn
  T ffn_out, ffn_out_bias;  // ffn x d, d
  T norm2_gain, norm2_bias;
};

template <class T>
struct Weights {
  T rnn_input;   // 1 x d
  T rnn_hidden;  // d x d
  T rnn_bias;    // d
  T alpha;       // K + 2, shared by all heads and blocks
  std::vector<BlockWeights<T>> blocks;
  T final_gain, final_bias;
  T head, head_bias;  // d x L_y, L_y
};

using TsatParams = Weights<Tensor>;

/// Visits every parameter slot in a fixed order with its group name.
template <class W, class F>
void for_each_parameter(W& w, F&& f) {
  f("rnn.input", w.rnn_input);
  f("rnn.hidden", w.rnn_hidden);
  f("rnn.bias", w.rnn_bias);
  f("alpha", w.alpha);
  for (std::size_t b = 0; b < w.blocks.size(); ++b) {
    auto& blk = w.blocks[b];
    const std::string p = "block" + std::to_string(b) + ".";
    for (std::size_t h = 0; h < blk.heads.size(); ++h) {
      const std::string hp = p + "head" + std::to_string(h) + ".";
      f(hp + "query", blk.heads[h].query);
      f(hp + "key", blk.heads[h].key);
      f(hp + "value", blk.heads[h].value);
    }
    f(p + "output", blk.output);
    f(p + "norm1.gain", blk.norm1_gain);
    f(p + "norm1.bias", blk.norm1_bias);
    f(p + "ffn.in", blk.ffn_in);
    f(p + "ffn.in_bias", blk.ffn_in_bias);
    f(p + "ffn.out", blk.ffn_out);
    f(p + "ffn.out_bias", blk.ffn_out_bias);
    f(p + "norm2.gain", blk.norm2_gain);
    f(p + "norm2.bias", blk.norm2_bias);
  }
  f("final_norm.gain", w.final_gain);
  f("final_norm.bias", w.final_bias);
  f("head.weight", w.head);
  f("head.bias", w.head_bias);
}

/// Same structure as `src`, with every slot mapped through `fn`.
template <class U, class T, class F>
Weights<U> map_weights(const Weights<T>& src, F&& fn) {
  Weights<U> out;
  out.blocks.resize(src.blocks.size());
  for (std::size_t b = 0; b < src.blocks.size(); ++b) out.blocks[b].heads.resize(src.blocks[b].heads.size());
  std::vector<const T*> in;
  for_each_parameter(src, [&](const std::string&, const T& t) { in.push_back(&t); });
  std::size_t i = 0;
  for_each_parameter(out, [&](const std::string& name, U& u) { u = fn(name, *in[i++]); });
  return out;
}

inline std::size_t parameter_count(const TsatParams& p) {
  std::size_t n = 0;
  for_each_parameter(p, [&](const std::string&, const Tensor& t) { n += t.size(); });
  return n;
}

/// Shapes implied by a configuration, in for_each_parameter order.
inline TsatParams zero_parameters(const TsatConfig& cfg) {
  const std::size_t d = cfg.model_dim, ffn = cfg.resolved_ffn_width();
  TsatParams p;
  p.rnn_input = Tensor::matrix(1, d);
  p.rnn_hidden = Tensor::matrix(d, d);
  p.rnn_bias = Tensor({d});
  p.alpha = Tensor({cfg.imf_count + 2});
  p.blocks.resize(cfg.blocks);
  for (auto& blk : p.blocks) {
    blk.heads.resize(cfg.heads);
    for (auto& h : blk.heads) {
      h.query = Tensor::matrix(d, cfg.key_dim);
      h.key = Tensor::matrix(d, cfg.key_dim);
      h.value = Tensor::matrix(d, cfg.value_dim);
    }
    blk.output = Tensor::matrix(cfg.heads * cfg.value_dim, d);
    blk.norm1_gain = Tensor({d}, 1.0);
    blk.norm1_bias = Tensor({d});
    blk.ffn_in = Tensor::matrix(d, ffn);
    blk.ffn_in_bias = Tensor({ffn});
    blk.ffn_out = Tensor::matrix(ffn, d);
    blk.ffn_out_bias = Tensor({d});
    blk.norm2_gain = Tensor({d}, 1.0);
    blk.norm2_bias = Tensor({d});
  }
  p.final_gain = Tensor({d}, 1.0);
  p.final_bias = Tensor({d});
  p.head = Tensor::matrix(d, cfg.horizon);
  p.head_bias = Tensor({cfg.horizon});
  return p;
}

/// Glorot-uniform matrices, zero biases, unit LayerNorm gains and
/// alpha_i = 1 / (K + 2).
inline TsatParams parameter_init(const TsatConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  TsatParams p = zero_parameters(cfg);
  std::mt19937_64 rng(seed);
  for_each_parameter(p, [&](const std::string&, Tensor& t) {
    if (t.rank() != 2) return;
    const double fan_in = static_cast<double>(t.rows());
    const double fan_out = static_cast<double>(t.cols());
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (double& v : t.values()) v = dist(rng);
  });
  p.alpha.fill(1.0 / static_cast<double>(cfg.imf_count + 2));
  return p;
}

inline void check_parameter_shapes(const TsatParams& p, const TsatConfig& cfg) {
  const TsatParams expected = zero_parameters(cfg);
  std::vector<Shape> shapes;
  for_each_parameter(expected, [&](const std::string&, const Tensor& t) { shapes.push_back(t.shape()); });
  std::size_t i = 0;
  bool ok = p.blocks.size() == cfg.blocks;
  for (const auto& blk : p.blocks) ok = ok && blk.heads.size() == cfg.heads;
  if (!ok) throw DimensionError("parameters do not match configured block/head counts");
  for_each_parameter(p, [&](const std::string& name, const Tensor& t) {
    if (t.shape() != shapes[i++]) {
      throw DimensionError("parameter " + name + " has shape " + shape_string(t.shape()));
    }
  });
}

/// Inverted dropout: kept activations are scaled by 1 / (1 - p).
class Dropout {
 public:
  Dropout(double p, std::uint64_t seed) : p_(p), rng_(seed) {}

  ad::Var apply(ad::Var x) {
    if (p_ <= 0.0) return x;
    Tensor mask(x.value().shape());
    std::bernoulli_distribution keep(1.0 - p_);
    const double scale = 1.0 / (1.0 - p_);
    for (double& m : mask.values()) m = keep(rng_) ? scale : 0.0;
    return ad::apply_mask(x, std::move(mask));
  }

 private:
  double p_;
  std::mt19937_64 rng_;
};

using TapeWeights = Weights<ad::Var>;

inline TapeWeights record_parameters(ad::Tape& tape, const TsatParams& params) {
  return map_weights<ad::Var>(params, [&](const std::string& name, const Tensor& t) { return tape.variable(t, name); });
}

/// Elementwise IMF activation applied to a D_imf_k matrix.
inline Tensor activate_imf(const Tensor& d, ImfActivation act) {
  switch (act) {
    case ImfActivation::softmax: return kernels::softmax_rows(d);
    case ImfActivation::exp: {
      Tensor out = d;
      for (double& v : out.values()) v = std::exp(v);
      return out;
    }
    case ImfActivation::none: return d;
  }
  return d;
}

/// Graph-dependent part of the mixed score matrix,
/// sum_k alpha_k act(D_k) + alpha_{K+1} A, or an invalid Var when both terms
/// are disabled.
inline ad::Var graph_bias(ad::Tape& tape, const DynamicGraph& g, ad::Var alpha, const TsatConfig& cfg) {
  ad::Var total;
  auto accumulate = [&](ad::Var term) { total = total.valid() ? ad::add(total, term) : term; };
  if (cfg.use_edge) {
    for (std::size_t k = 0; k < cfg.imf_count; ++k) {
      ad::Var dk = tape.constant(activate_imf(g.imf_similarity_matrix(k), cfg.imf_activation), "imf_similarity");
      accumulate(ad::scale(ad::element(alpha, k + 1), dk));
    }
  }
  if (cfg.use_adjacency) {
    ad::Var a = tape.constant(g.adjacency.as_tensor(), "adjacency");
    accumulate(ad::scale(ad::element(alpha, cfg.imf_count + 1), a));
  }
  return total;
}

/// alpha_0 softmax(Q K^T / sqrt(d_k)) + bias, for one window and one head.
inline ad::Var attention_scores(ad::Var q, ad::Var k, ad::Var bias, ad::Var alpha, const TsatConfig& cfg) {
  ad::Var logits = ad::scale(ad::matmul_nt(q, k), 1.0 / std::sqrt(static_cast<double>(cfg.key_dim)));
  ad::Var scores = ad::scale(ad::element(alpha, 0), ad::softmax_rows(logits));
  return bias.valid() ? ad::add(scores, bias) : scores;
}

/// RNN time embedding: h_t = tanh(x_t W_in + h_{t-1} W_hh + b), h_0 = 0, run
/// independently per row of `x` with shared weights. Returns the final state.
inline ad::Var time_embed(ad::Tape& tape, const Tensor& x, const TapeWeights& w) {
  const std::size_t rows = x.rows(), steps = x.cols();
  ad::Var h;
  for (std::size_t t = 0; t < steps; ++t) {
    Tensor column = Tensor::matrix(rows, 1);
    for (std::size_t r = 0; r < rows; ++r) column(r, 0) = x(r, t);
    ad::Var pre = ad::matmul(tape.constant(std::move(column), "x_t"), w.rnn_input);
    if (h.valid()) pre = ad::add(pre, ad::matmul(h, w.rnn_hidden));
    h = ad::tanh(ad::add_bias(pre, w.rnn_bias));
  }
  if (!h.valid()) throw DimensionError("time_embed: empty backcast window");
  return h;
}

/// Multi-head graph-augmented attention over a stack of `windows` graphs of
/// `nodes` rows each. `biases[w]` is graph_bias() of window w.
inline ad::Var multi_head_attention(ad::Var h, const std::vector<ad::Var>& biases, const BlockWeights<ad::Var>& blk,
                                    ad::Var alpha, const TsatConfig& cfg, std::size_t nodes) {
  const std::size_t windows = biases.size();
  std::vector<ad::Var> head_outputs;
  head_outputs.reserve(blk.heads.size());
  for (const auto& head : blk.heads) {
    ad::Var q = ad::matmul(h, head.query);
    ad::Var k = ad::matmul(h, head.key);
    ad::Var v = ad::matmul(h, head.value);
    std::vector<ad::Var> per_window;
    per_window.reserve(windows);
    for (std::size_t w = 0; w < windows; ++w) {
      const std::size_t at = w * nodes;
      ad::Var scores = attention_scores(ad::slice_rows(q, at, nodes), ad::slice_rows(k, at, nodes), biases[w], alpha,
                                        cfg);
      per_window.push_back(ad::matmul(scores, ad::slice_rows(v, at, nodes)));
    }
    head_outputs.push_back(windows == 1 ? per_window.front() : ad::concat_rows(per_window));
  }
  ad::Var joined = head_outputs.size() == 1 ? head_outputs.front() : ad::concat_cols(head_outputs);
  return ad::matmul(joined, blk.output);
}

/// Post-norm block: H_a = LN(H + MHA(H)); out = LN(H_a + FFN(H_a)).
/// Dropout, when given, is applied to the block output.
inline ad::Var tsat_block(ad::Var h, const std::vector<ad::Var>& biases, const BlockWeights<ad::Var>& blk,
                          ad::Var alpha, const TsatConfig& cfg, std::size_t nodes, Dropout* dropout) {
  ad::Var attended = multi_head_attention(h, biases, blk, alpha, cfg, nodes);
  ad::Var ha = ad::layer_norm(ad::add(h, attended), blk.norm1_gain, blk.norm1_bias, cfg.layer_norm_eps);
  ad::Var hidden = ad::relu(ad::add_bias(ad::matmul(ha, blk.ffn_in), blk.ffn_in_bias));
  ad::Var ffn = ad::add_bias(ad::matmul(hidden, blk.ffn_out), blk.ffn_out_bias);
  ad::Var out = ad::layer_norm(ad::add(ha, ffn), blk.norm2_gain, blk.norm2_bias, cfg.layer_norm_eps);
  return dropout ? dropout->apply(out) : out;
}

/// Tape handles for a batch of windows stacked row-wise (window-major).
struct BatchOutput {
  ad::Var forecasts;        // (B*N) x L_y
  ad::Var node_embeddings;  // (B*N) x d
  ad::Var graph_embeddings; // B x d
};

inline void check_graph(const DynamicGraph& g, const TsatConfig& cfg) {
  if (g.series_count() != cfg.series || g.length() != cfg.backcast || g.imf_count() != cfg.imf_count) {
    throw DimensionError("graph shape (N=" + std::to_string(g.series_count()) + ", L_x=" +
                         std::to_string(g.length()) + ", K=" + std::to_string(g.imf_count()) +
                         ") does not match the model configuration");
  }
}

/// Forward pass over a batch. `dropout` null means evaluation mode.
inline BatchOutput forward_batch(ad::Tape& tape, const TapeWeights& w, std::span<const DynamicGraph* const> graphs,
                                 const TsatConfig& cfg, Dropout* dropout = nullptr) {
  if (graphs.empty()) throw ContractError("forward_batch: empty batch");
  const std::size_t n = cfg.series;
  Tensor x = Tensor::matrix(graphs.size() * n, cfg.backcast);
  std::vector<ad::Var> biases;
  biases.reserve(graphs.size());
  for (std::size_t b = 0; b < graphs.size(); ++b) {
    const DynamicGraph& g = *graphs[b];
    check_graph(g, cfg);
    std::copy(g.nodes.values.values().begin(), g.nodes.values.values().end(),
              x.values().begin() + static_cast<std::ptrdiff_t>(b * n * cfg.backcast));
    biases.push_back(graph_bias(tape, g, w.alpha, cfg));
  }
  ad::Var h = time_embed(tape, x, w);
  for (const auto& blk : w.blocks) h = tsat_block(h, biases, blk, w.alpha, cfg, n, dropout);
  BatchOutput out;
  out.node_embeddings = ad::layer_norm(h, w.final_gain, w.final_bias, cfg.layer_norm_eps);
  out.graph_embeddings = ad::group_mean_rows(out.node_embeddings, n);
  ad::Var head_in = dropout ? dropout->apply(out.node_embeddings) : out.node_embeddings;
  out.forecasts = ad::add_bias(ad::matmul(head_in, w.head), w.head_bias);
  return out;
}

struct ForwardOutput {
  Tensor forecasts;        // N x L_y
  Tensor node_embeddings;  // N x d
  Tensor graph_embedding;  // d
};

/// Single-graph forward pass. With `training` set, dropout masks are drawn
/// from `dropout_seed`.
inline ForwardOutput forward(const DynamicGraph& graph, const TsatParams& params, const TsatConfig& cfg,
                             bool training = false, std::uint64_t dropout_seed = 0) {
  ad::Tape tape;
  const TapeWeights w = record_parameters(tape, params);
  Dropout dropout(cfg.dropout, dropout_seed);
  const DynamicGraph* one[] = {&graph};
  BatchOutput b = forward_batch(tape, w, one, cfg, training ? &dropout : nullptr);
  return ForwardOutput{b.forecasts.value(), b.node_embeddings.value(),
                       b.graph_embeddings.value().reshaped({cfg.model_dim})};
}

/// Mixed score matrix of one head of one block for a single graph; `h` is
/// the N x d block input.
inline Tensor attention_scores(const Tensor& h, const DynamicGraph& graph, const HeadWeights<Tensor>& head,
                               const Tensor& alpha, const TsatConfig& cfg) {
  ad::Tape tape;
  ad::Var hv = tape.constant(h);
  ad::Var a = tape.constant(alpha);
  ad::Var q = ad::matmul(hv, tape.constant(head.query));
  ad::Var k = ad::matmul(hv, tape.constant(head.key));
  return attention_scores(q, k, graph_bias(tape, graph, a, cfg), a, cfg).value();
}

/// Time embedding of a node matrix (N x L_x) as plain values.
inline Tensor time_embed(const Tensor& x, const TsatParams& params) {
  ad::Tape tape;
  TapeWeights w;
  w.rnn_input = tape.constant(params.rnn_input);
  w.rnn_hidden = tape.constant(params.rnn_hidden);
  w.rnn_bias = tape.constant(params.rnn_bias);
  return time_embed(tape, x, w).value();
}

}  // namespace tsat
