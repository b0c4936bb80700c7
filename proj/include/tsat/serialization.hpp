#pragma once

// JSON encodings for graphs, graph archives (one graph per line after a
// header line) and model checkpoints. Doubles are written in shortest
// round-trip form, so every file reads back bit-exactly.

#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "tsat/data.hpp"
#include "tsat/error.hpp"
#include "tsat/graph.hpp"
#include "tsat/model.hpp"

namespace tsat {

using Json = nlohmann::json;

namespace detail {

inline const Json& field(const Json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) throw IntegrityError(std::string("missing field '") + key + "'");
  return j.at(key);
}

template <class T>
T get_as(const Json& j, const char* key) {
  try {
    return field(j, key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw IntegrityError(std::string("field '") + key + "' has the wrong type: " + e.what());
  }
}

inline std::vector<double> numbers(const Json& j, const char* key, std::size_t expected) {
  auto v = get_as<std::vector<double>>(j, key);
  if (v.size() != expected) {
    throw IntegrityError(std::string("field '") + key + "' holds " + std::to_string(v.size()) +
                         " values, header implies " + std::to_string(expected));
  }
  return v;
}

/// Parses text, mapping a premature end to IntegrityError and any other
/// syntax error to a located ParseError.
inline Json parse_json(const std::string& text, const std::string& source) {
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    const std::size_t at = e.byte == 0 ? 0 : e.byte - 1;
    if (at >= text.size() || std::string(e.what()).find("unexpected end of input") != std::string::npos) {
      throw IntegrityError(source + ": truncated document");
    }
    std::size_t line = 1, column = 1;
    for (std::size_t i = 0; i < at && i < text.size(); ++i) {
      if (text[i] == '\n') {
        ++line;
        column = 1;
      } else {
        ++column;
      }
    }
    throw ParseError(source + ": malformed JSON at line " + std::to_string(line) + ", column " +
                         std::to_string(column),
                     line, column);
  }
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

inline void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << text;
  if (!out) throw IoError("write failed for '" + path + "'");
}

}  // namespace detail

// ---- graphs ----

inline Json graph_to_json(const DynamicGraph& g) {
  const std::size_t n = g.series_count(), k = g.imf_count();
  Json decomps = Json::array();
  for (const auto& d : g.decompositions) {
    decomps.push_back({{"imfs", d.imfs}, {"residual", d.residual}, {"sift_iterations", d.sift_iterations}});
  }
  return Json{{"format", "tsat-graph"},
              {"version", 1},
              {"N", n},
              {"L_x", g.length()},
              {"K", k},
              {"c", g.adjacency.threshold},
              {"window_start", g.nodes.window_start},
              {"series_names", g.nodes.series_names},
              {"nodes", g.nodes.values.data()},
              {"edges", g.edges.values},
              {"adjacency", g.adjacency.values},
              {"rho", g.residual_correlations.data()},
              {"decompositions", decomps}};
}

/// Structural checks on a graph: symmetric E with diagonal in {0, 1},
/// |e| <= 1 + 1e-12, and an adjacency that is the threshold of rho.
inline void validate_graph(const DynamicGraph& g) {
  const std::size_t n = g.series_count(), k = g.imf_count();
  if (g.edges.nodes != n || g.adjacency.nodes != n || g.residual_correlations.rows() != n ||
      g.decompositions.size() != n) {
    throw IntegrityError("graph components disagree on the node count");
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < k; ++c) {
      const double d = g.edges(i, i, c);
      if (d != 0.0 && d != 1.0) throw IntegrityError("edge tensor diagonal must be 0 or 1");
    }
    for (std::size_t j = 0; j < n; ++j) {
      for (std::size_t c = 0; c < k; ++c) {
        if (g.edges(i, j, c) != g.edges(j, i, c)) throw IntegrityError("edge tensor is not symmetric");
        if (std::fabs(g.edges(i, j, c)) > 1.0 + 1e-12) throw IntegrityError("edge similarity outside [-1, 1]");
      }
    }
  }
  if (build_adjacency(g.residual_correlations, g.adjacency.threshold) != g.adjacency) {
    throw IntegrityError("adjacency does not match the thresholded residual correlations");
  }
  for (const auto& d : g.decompositions) {
    if (d.imf_count() != k || d.residual.size() != g.length()) throw IntegrityError("decomposition shape mismatch");
    for (const auto& imf : d.imfs)
      if (imf.size() != g.length()) throw IntegrityError("decomposition shape mismatch");
  }
}

inline DynamicGraph graph_from_json(const Json& j) {
  if (detail::get_as<std::string>(j, "format") != "tsat-graph") throw IntegrityError("not a graph document");
  const auto n = detail::get_as<std::size_t>(j, "N");
  const auto len = detail::get_as<std::size_t>(j, "L_x");
  const auto k = detail::get_as<std::size_t>(j, "K");
  DynamicGraph g;
  g.nodes.values = Tensor({n, len}, detail::numbers(j, "nodes", n * len));
  g.nodes.series_names = detail::get_as<std::vector<std::string>>(j, "series_names");
  if (g.nodes.series_names.size() != n) throw IntegrityError("series_names does not match N");
  g.nodes.window_start = detail::get_as<std::size_t>(j, "window_start");
  g.edges = EdgeTensor(n, k);
  g.edges.values = detail::numbers(j, "edges", n * n * k);
  g.adjacency.nodes = n;
  g.adjacency.threshold = detail::get_as<double>(j, "c");
  g.adjacency.values = detail::get_as<std::vector<std::uint8_t>>(j, "adjacency");
  if (g.adjacency.values.size() != n * n) throw IntegrityError("adjacency does not match N");
  g.residual_correlations = Tensor({n, n}, detail::numbers(j, "rho", n * n));
  const Json& decomps = detail::field(j, "decompositions");
  if (!decomps.is_array() || decomps.size() != n) throw IntegrityError("decompositions do not match N");
  for (const auto& d : decomps) {
    emd::ImfDecomposition dec;
    dec.imfs = detail::get_as<std::vector<std::vector<double>>>(d, "imfs");
    dec.residual = detail::get_as<std::vector<double>>(d, "residual");
    dec.sift_iterations = detail::get_as<std::vector<int>>(d, "sift_iterations");
    g.decompositions.push_back(std::move(dec));
  }
  validate_graph(g);
  return g;
}

inline std::string graph_to_string(const DynamicGraph& g) { return graph_to_json(g).dump() + "\n"; }

inline DynamicGraph graph_from_string(const std::string& text, const std::string& source = "graph") {
  return graph_from_json(detail::parse_json(text, source));
}

inline void export_graph(const DynamicGraph& g, const std::string& path) {
  detail::write_file(path, graph_to_string(g));
}

inline DynamicGraph import_graph(const std::string& path) {
  return graph_from_string(detail::read_file(path), path);
}

/// Header line {"format": "tsat-graph-archive", "count": n} followed by one
/// graph document per line.
inline void write_graph_archive(std::ostream& out, const std::vector<DynamicGraph>& graphs) {
  out << Json{{"format", "tsat-graph-archive"}, {"version", 1}, {"count", graphs.size()}}.dump() << '\n';
  for (const auto& g : graphs) out << graph_to_json(g).dump() << '\n';
}

inline std::vector<DynamicGraph> read_graph_archive(std::istream& in, const std::string& source = "archive") {
  std::string line;
  if (!std::getline(in, line)) throw IntegrityError(source + ": empty archive");
  const Json header = detail::parse_json(line, source);
  if (detail::get_as<std::string>(header, "format") != "tsat-graph-archive") {
    throw IntegrityError(source + ": not a graph archive");
  }
  const auto count = detail::get_as<std::size_t>(header, "count");
  std::vector<DynamicGraph> graphs;
  graphs.reserve(count);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (graphs.size() == count) throw IntegrityError(source + ": more graphs than the header declares");
    graphs.push_back(graph_from_string(line, source + " graph " + std::to_string(graphs.size())));
  }
  if (graphs.size() != count) {
    throw IntegrityError(source + ": header declares " + std::to_string(count) + " graphs, found " +
                         std::to_string(graphs.size()));
  }
  return graphs;
}

inline void save_graph_archive(const std::string& path, const std::vector<DynamicGraph>& graphs) {
  std::ostringstream out;
  write_graph_archive(out, graphs);
  detail::write_file(path, out.str());
}

inline std::vector<DynamicGraph> load_graph_archive(const std::string& path) {
  std::istringstream in(detail::read_file(path));
  return read_graph_archive(in, path);
}

// ---- model configuration and checkpoints ----

inline Json config_to_json(const TsatConfig& c) {
  return Json{{"series", c.series},
              {"backcast", c.backcast},
              {"horizon", c.horizon},
              {"imf_count", c.imf_count},
              {"model_dim", c.model_dim},
              {"key_dim", c.key_dim},
              {"value_dim", c.value_dim},
              {"heads", c.heads},
              {"blocks", c.blocks},
              {"ffn_width", c.ffn_width},
              {"dropout", c.dropout},
              {"imf_activation", to_string(c.imf_activation)},
              {"use_edge", c.use_edge},
              {"use_adjacency", c.use_adjacency},
              {"threshold", c.threshold},
              {"seed", c.seed},
              {"layer_norm_eps", c.layer_norm_eps}};
}

inline TsatConfig config_from_json(const Json& j) {
  TsatConfig c;
  c.series = detail::get_as<std::size_t>(j, "series");
  c.backcast = detail::get_as<std::size_t>(j, "backcast");
  c.horizon = detail::get_as<std::size_t>(j, "horizon");
  c.imf_count = detail::get_as<std::size_t>(j, "imf_count");
  c.model_dim = detail::get_as<std::size_t>(j, "model_dim");
  c.key_dim = detail::get_as<std::size_t>(j, "key_dim");
  c.value_dim = detail::get_as<std::size_t>(j, "value_dim");
  c.heads = detail::get_as<std::size_t>(j, "heads");
  c.blocks = detail::get_as<std::size_t>(j, "blocks");
  c.ffn_width = detail::get_as<std::size_t>(j, "ffn_width");
  c.dropout = detail::get_as<double>(j, "dropout");
  c.imf_activation = parse_imf_activation(detail::get_as<std::string>(j, "imf_activation"));
  c.use_edge = detail::get_as<bool>(j, "use_edge");
  c.use_adjacency = detail::get_as<bool>(j, "use_adjacency");
  c.threshold = detail::get_as<double>(j, "threshold");
  c.seed = detail::get_as<std::uint64_t>(j, "seed");
  c.layer_norm_eps = detail::get_as<double>(j, "layer_norm_eps");
  return c;
}

struct Checkpoint {
  TsatConfig config;
  TsatParams params;
  NormalizationStats normalization;

  friend bool operator==(const Checkpoint& a, const Checkpoint& b) {
    if (!(a.config == b.config && a.normalization == b.normalization)) return false;
    std::vector<Tensor> ta, tb;
    for_each_parameter(a.params, [&](const std::string&, const Tensor& t) { ta.push_back(t); });
    for_each_parameter(b.params, [&](const std::string&, const Tensor& t) { tb.push_back(t); });
    return ta == tb;
  }
};

inline Json checkpoint_to_json(const Checkpoint& c) {
  Json params = Json::array();
  for_each_parameter(c.params, [&](const std::string& name, const Tensor& t) {
    params.push_back({{"name", name}, {"shape", t.shape()}, {"values", t.data()}});
  });
  return Json{{"format", "tsat-checkpoint"},
              {"version", 1},
              {"config", config_to_json(c.config)},
              {"normalization", {{"mean", c.normalization.mean}, {"std", c.normalization.std}}},
              {"parameters", params}};
}

inline Checkpoint checkpoint_from_json(const Json& j) {
  if (detail::get_as<std::string>(j, "format") != "tsat-checkpoint") throw IntegrityError("not a checkpoint");
  Checkpoint c;
  c.config = config_from_json(detail::field(j, "config"));
  const Json& norm = detail::field(j, "normalization");
  c.normalization.mean = detail::get_as<std::vector<double>>(norm, "mean");
  c.normalization.std = detail::get_as<std::vector<double>>(norm, "std");
  c.params = zero_parameters(c.config);
  const Json& params = detail::field(j, "parameters");
  if (!params.is_array()) throw IntegrityError("checkpoint parameters must be a list");
  std::size_t i = 0;
  for_each_parameter(c.params, [&](const std::string& name, Tensor& t) {
    if (i >= params.size()) throw IntegrityError("checkpoint is missing parameter " + name);
    const Json& p = params[i++];
    if (detail::get_as<std::string>(p, "name") != name) {
      throw IntegrityError("checkpoint parameter " + std::to_string(i - 1) + " should be " + name);
    }
    if (detail::get_as<Shape>(p, "shape") != t.shape()) {
      throw IntegrityError("checkpoint parameter " + name + " does not match the configured shape");
    }
    t = Tensor(t.shape(), detail::numbers(p, "values", t.size()));
  });
  if (i != params.size()) throw IntegrityError("checkpoint has extra parameters");
  return c;
}

inline void save_checkpoint(const std::string& path, const Checkpoint& c) {
  detail::write_file(path, checkpoint_to_json(c).dump() + "\n");
}

inline Checkpoint load_checkpoint(const std::string& path) {
  return checkpoint_from_json(detail::parse_json(detail::read_file(path), path));
}

/// Loads a checkpoint and rejects it unless its model configuration equals
/// `expected`.
inline Checkpoint load_checkpoint(const std::string& path, const TsatConfig& expected) {
  Checkpoint c = load_checkpoint(path);
  if (!(c.config == expected)) {
    throw ConfigError(path + ": checkpoint configuration " + config_to_json(c.config).dump() +
                      " differs from the requested " + config_to_json(expected).dump());
  }
  return c;
}

// ---- embeddings ----

inline void write_embedding_header(std::ostream& out, const std::vector<std::string>& leading, std::size_t dim) {
  for (const auto& l : leading) out << l << ',';
  for (std::size_t j = 0; j < dim; ++j) out << (j ? "," : "") << "dim_" << j;
  out << '\n';
}

inline void write_embedding_row(std::ostream& out, const std::vector<std::string>& leading,
                                std::span<const double> values) {
  for (const auto& l : leading) out << l << ',';
  for (std::size_t j = 0; j < values.size(); ++j) out << (j ? "," : "") << format_double(values[j]);
  out << '\n';
}

}  // namespace tsat
