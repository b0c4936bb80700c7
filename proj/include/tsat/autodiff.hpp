#pragma once

// Reverse-mode automatic differentiation over dense tensors.
//
// A Tape records each primitive as a node holding its value and a closure
// that pushes the node's adjoint into its inputs. Nodes are appended in
// evaluation order, so replaying them backwards is a valid topological order.

#include <cmath>
#include <cstddef>
#include <functional>
#include <iomanip>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "tsat/error.hpp"
#include "tsat/tensor.hpp"

namespace tsat::ad {

class Tape;

/// Handle to a node on a Tape. Cheap to copy; only valid while the tape lives.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Tensor& grad() const;
  Tape* tape() const noexcept { return tape_; }
  std::size_t id() const noexcept { return id_; }
  bool valid() const noexcept { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  using Backprop = std::function<void(Tape&, const Tensor& out_grad)>;

  /// With `checked` set, every recorded value is scanned for NaN/Inf.
  explicit Tape(bool checked = false) : checked_(checked) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var variable(Tensor value, std::string name = "param") {
    return push(std::move(name), std::move(value), {}, nullptr, true, true);
  }

  Var constant(Tensor value, std::string name = "const") {
    return push(std::move(name), std::move(value), {}, nullptr, false, false);
  }

  /// Records the result of a primitive. `backprop` is only kept when at least
  /// one input needs a gradient.
  Var record(std::string op, Tensor value, std::vector<Var> inputs, Backprop backprop) {
    bool needs = false;
    std::vector<std::size_t> ids;
    ids.reserve(inputs.size());
    for (const Var& in : inputs) {
      if (in.tape_ != this) throw ContractError(op + ": input belongs to another tape");
      needs = needs || nodes_[in.id_].requires_grad;
      ids.push_back(in.id_);
    }
    Var out = push(std::move(op), std::move(value), std::move(ids), needs ? std::move(backprop) : nullptr,
                   needs, false);
    return out;
  }

  const Tensor& value(Var v) const { return nodes_.at(v.id_).value; }
  const Tensor& value_at(std::size_t id) const { return nodes_[id].value; }

  /// Adjoint of a node after backward(); zeros for nodes the loss does not reach.
  const Tensor& grad(Var v) const {
    const Node& n = nodes_.at(v.id_);
    if (n.grad.empty() && !n.value.empty()) {
      n.grad = Tensor(n.value.shape());
    }
    return n.grad;
  }

  bool requires_grad(Var v) const { return nodes_.at(v.id_).requires_grad; }

  /// Mutable adjoint buffer of node `id`, zero-initialised on first use.
  Tensor& grad_buffer(std::size_t id) {
    Node& n = nodes_[id];
    if (n.grad.empty()) n.grad = Tensor(n.value.shape());
    return n.grad;
  }

  bool needs_grad(std::size_t id) const { return nodes_[id].requires_grad; }

  void backward(Var loss) {
    if (loss.tape_ != this) throw ContractError("backward: loss belongs to another tape");
    if (nodes_[loss.id_].value.size() != 1) {
      throw ContractError("backward: loss must be a scalar, got shape " +
                          shape_string(nodes_[loss.id_].value.shape()));
    }
    for (Node& n : nodes_) n.grad = Tensor{};
    grad_buffer(loss.id_)[0] = 1.0;
    for (std::size_t i = loss.id_ + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.requires_grad || !n.backprop || n.grad.empty()) continue;
      n.backprop(*this, n.grad);
    }
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      if (nodes_[i].trainable) grad_buffer(i);
    }
  }

  std::size_t size() const noexcept { return nodes_.size(); }
  bool checked() const noexcept { return checked_; }

  /// Debug listing: one line per node with op name, shape and adjoint L2 norm.
  void dump_gradient_norms(std::ostream& out) const {
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      const Node& n = nodes_[i];
      out << i << ' ' << n.op << ' ' << shape_string(n.value.shape()) << ' ';
      if (n.grad.empty()) {
        out << "-\n";
      } else {
        out << std::setprecision(6) << std::sqrt(n.grad.squared_norm()) << '\n';
      }
    }
  }

 private:
  struct Node {
    std::string op;
    Tensor value;
    mutable Tensor grad;
    std::vector<std::size_t> inputs;
    Backprop backprop;
    bool requires_grad = false;
    bool trainable = false;
  };

  Var push(std::string op, Tensor value, std::vector<std::size_t> inputs, Backprop backprop, bool requires_grad,
           bool trainable) {
    if (checked_ && !value.all_finite()) throw NumericError(op + ": non-finite value");
    nodes_.push_back(Node{std::move(op), std::move(value), Tensor{}, std::move(inputs), std::move(backprop),
                          requires_grad, trainable});
    return Var(this, nodes_.size() - 1);
  }

  std::vector<Node> nodes_;
  bool checked_;
};

inline const Tensor& Var::value() const { return tape_->value(*this); }
inline const Tensor& Var::grad() const { return tape_->grad(*this); }

namespace detail {

inline void add_into(Tensor& dst, const Tensor& src) {
  auto d = dst.values();
  auto s = src.values();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
}

inline void require_same(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b)) {
    throw DimensionError(std::string(op) + ": shapes differ " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
}

template <class F>
Tensor map(const Tensor& x, F f) {
  Tensor out(x.shape());
  auto xs = x.values();
  auto ys = out.values();
  for (std::size_t i = 0; i < xs.size(); ++i) ys[i] = f(xs[i]);
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Primitives. Each computes its value with the plain kernels and records a
// closure that accumulates input adjoints.

inline Var matmul(Var a, Var b) {
  Tensor out = kernels::matmul(a.value(), b.value());
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape()->record("matmul", std::move(out), {a, b}, [ia, ib](Tape& t, const Tensor& g) {
    if (t.needs_grad(ia)) detail::add_into(t.grad_buffer(ia), kernels::matmul_nt(g, t.value_at(ib)));
    if (t.needs_grad(ib)) detail::add_into(t.grad_buffer(ib), kernels::matmul_tn(t.value_at(ia), g));
  });
}

/// a * b^T
inline Var matmul_nt(Var a, Var b) {
  Tensor out = kernels::matmul_nt(a.value(), b.value());
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape()->record("matmul_nt", std::move(out), {a, b}, [ia, ib](Tape& t, const Tensor& g) {
    if (t.needs_grad(ia)) detail::add_into(t.grad_buffer(ia), kernels::matmul(g, t.value_at(ib)));
    if (t.needs_grad(ib)) detail::add_into(t.grad_buffer(ib), kernels::matmul_tn(g, t.value_at(ia)));
  });
}

inline Var add(Var a, Var b) {
  detail::require_same(a.value(), b.value(), "add");
  Tensor out = a.value();
  detail::add_into(out, b.value());
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape()->record("add", std::move(out), {a, b}, [ia, ib](Tape& t, const Tensor& g) {
    if (t.needs_grad(ia)) detail::add_into(t.grad_buffer(ia), g);
    if (t.needs_grad(ib)) detail::add_into(t.grad_buffer(ib), g);
  });
}

inline Var sub(Var a, Var b) {
  detail::require_same(a.value(), b.value(), "sub");
  Tensor out = a.value();
  auto o = out.values();
  auto bv = b.value().values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] -= bv[i];
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape()->record("sub", std::move(out), {a, b}, [ia, ib](Tape& t, const Tensor& g) {
    if (t.needs_grad(ia)) detail::add_into(t.grad_buffer(ia), g);
    if (t.needs_grad(ib)) {
      auto d = t.grad_buffer(ib).values();
      auto gs = g.values();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] -= gs[i];
    }
  });
}

/// Elementwise (Hadamard) product.
inline Var mul(Var a, Var b) {
  detail::require_same(a.value(), b.value(), "mul");
  Tensor out = a.value();
  auto o = out.values();
  auto bv = b.value().values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] *= bv[i];
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape()->record("mul", std::move(out), {a, b}, [ia, ib](Tape& t, const Tensor& g) {
    auto gs = g.values();
    if (t.needs_grad(ia)) {
      auto d = t.grad_buffer(ia).values();
      auto bv = t.value_at(ib).values();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += gs[i] * bv[i];
    }
    if (t.needs_grad(ib)) {
      auto d = t.grad_buffer(ib).values();
      auto av = t.value_at(ia).values();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += gs[i] * av[i];
    }
  });
}

/// Adds a length-c bias to every row of an r x c matrix.
inline Var add_bias(Var x, Var bias) {
  const Tensor& xv = x.value();
  const Tensor& bv = bias.value();
  if (bv.size() != xv.cols()) {
    throw DimensionError("add_bias: bias " + shape_string(bv.shape()) + " does not fit " + shape_string(xv.shape()));
  }
  Tensor out = xv;
  const std::size_t r = xv.rows(), c = xv.cols();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out(i, j) += bv[j];
  const std::size_t ix = x.id(), ib = bias.id();
  return x.tape()->record("add_bias", std::move(out), {x, bias}, [ix, ib, r, c](Tape& t, const Tensor& g) {
    if (t.needs_grad(ix)) detail::add_into(t.grad_buffer(ix), g);
    if (t.needs_grad(ib)) {
      Tensor& d = t.grad_buffer(ib);
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) d[j] += g(i, j);
    }
  });
}

inline Var scale(Var x, double factor) {
  Tensor out = detail::map(x.value(), [factor](double v) { return v * factor; });
  const std::size_t ix = x.id();
  return x.tape()->record("scale", std::move(out), {x}, [ix, factor](Tape& t, const Tensor& g) {
    auto d = t.grad_buffer(ix).values();
    auto gs = g.values();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += factor * gs[i];
  });
}

/// Multiplies every entry of `x` by the single value held in `s`.
inline Var scale(Var s, Var x) {
  if (s.value().size() != 1) throw DimensionError("scale: factor must hold one value");
  const double factor = s.value()[0];
  Tensor out = detail::map(x.value(), [factor](double v) { return v * factor; });
  const std::size_t is = s.id(), ix = x.id();
  return x.tape()->record("scale_by", std::move(out), {s, x}, [is, ix](Tape& t, const Tensor& g) {
    auto gs = g.values();
    if (t.needs_grad(is)) {
      auto xv = t.value_at(ix).values();
      double acc = 0.0;
      for (std::size_t i = 0; i < gs.size(); ++i) acc += gs[i] * xv[i];
      t.grad_buffer(is)[0] += acc;
    }
    if (t.needs_grad(ix)) {
      const double factor = t.value_at(is)[0];
      auto d = t.grad_buffer(ix).values();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += factor * gs[i];
    }
  });
}

/// Picks entry `index` of a tensor as a one-element tensor.
inline Var element(Var x, std::size_t index) {
  if (index >= x.value().size()) throw DimensionError("element: index out of range");
  const std::size_t ix = x.id();
  return x.tape()->record("element", Tensor::scalar(x.value()[index]), {x},
                          [ix, index](Tape& t, const Tensor& g) { t.grad_buffer(ix)[index] += g[0]; });
}

inline Var tanh(Var x) {
  Tensor out = detail::map(x.value(), [](double v) { return std::tanh(v); });
  const std::size_t ix = x.id();
  const std::size_t iy = x.tape()->size();  // id the result will receive
  return x.tape()->record("tanh", std::move(out), {x}, [ix, iy](Tape& t, const Tensor& g) {
    auto d = t.grad_buffer(ix).values();
    auto yv = t.value_at(iy).values();
    auto gs = g.values();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += gs[i] * (1.0 - yv[i] * yv[i]);
  });
}

inline Var relu(Var x) {
  Tensor out = detail::map(x.value(), [](double v) { return v > 0.0 ? v : 0.0; });
  const std::size_t ix = x.id();
  return x.tape()->record("relu", std::move(out), {x}, [ix](Tape& t, const Tensor& g) {
    auto d = t.grad_buffer(ix).values();
    auto xv = t.value_at(ix).values();
    auto gs = g.values();
    for (std::size_t i = 0; i < d.size(); ++i)
      if (xv[i] > 0.0) d[i] += gs[i];
  });
}

inline Var exp(Var x) {
  Tensor out = detail::map(x.value(), [](double v) { return std::exp(v); });
  const std::size_t ix = x.id();
  return x.tape()->record("exp", std::move(out), {x}, [ix](Tape& t, const Tensor& g) {
    auto d = t.grad_buffer(ix).values();
    auto xv = t.value_at(ix).values();
    auto gs = g.values();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += gs[i] * std::exp(xv[i]);
  });
}

/// Row-wise softmax; each output row is nonnegative and sums to one.
inline Var softmax_rows(Var x) {
  Tensor y = kernels::softmax_rows(x.value());
  const std::size_t ix = x.id();
  const std::size_t r = y.rows(), c = y.cols();
  Tensor saved = y;
  return x.tape()->record("softmax_rows", std::move(y), {x},
                          [ix, r, c, saved = std::move(saved)](Tape& t, const Tensor& g) {
                            Tensor& d = t.grad_buffer(ix);
                            for (std::size_t i = 0; i < r; ++i) {
                              double dot = 0.0;
                              for (std::size_t j = 0; j < c; ++j) dot += g(i, j) * saved(i, j);
                              for (std::size_t j = 0; j < c; ++j) d(i, j) += saved(i, j) * (g(i, j) - dot);
                            }
                          });
}

/// Per-row normalisation to zero mean and unit variance, then gain * x + bias.
inline Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5) {
  if (!(eps > 0.0)) throw ParameterError("layer_norm: eps must be positive");
  const Tensor& xv = x.value();
  const std::size_t r = xv.rows(), c = xv.cols();
  if (gain.value().size() != c || bias.value().size() != c) {
    throw DimensionError("layer_norm: gain/bias must have " + std::to_string(c) + " entries");
  }
  Tensor normalized(xv.shape());
  std::vector<double> inv_std(r);
  Tensor out(xv.shape());
  const Tensor& gv = gain.value();
  const Tensor& bv = bias.value();
  for (std::size_t i = 0; i < r; ++i) {
    double mean = 0.0;
    for (std::size_t j = 0; j < c; ++j) mean += xv(i, j);
    mean /= static_cast<double>(c);
    double var = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      const double dv = xv(i, j) - mean;
      var += dv * dv;
    }
    var /= static_cast<double>(c);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < c; ++j) {
      normalized(i, j) = (xv(i, j) - mean) * inv_std[i];
      out(i, j) = gv[j] * normalized(i, j) + bv[j];
    }
  }
  const std::size_t ix = x.id(), ig = gain.id(), ib = bias.id();
  return x.tape()->record(
      "layer_norm", std::move(out), {x, gain, bias},
      [ix, ig, ib, r, c, normalized = std::move(normalized), inv_std = std::move(inv_std)](Tape& t,
                                                                                        const Tensor& g) {
        if (t.needs_grad(ig)) {
          Tensor& d = t.grad_buffer(ig);
          for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) d[j] += g(i, j) * normalized(i, j);
        }
        if (t.needs_grad(ib)) {
          Tensor& d = t.grad_buffer(ib);
          for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) d[j] += g(i, j);
        }
        if (t.needs_grad(ix)) {
          Tensor& d = t.grad_buffer(ix);
          const Tensor& gv = t.value_at(ig);
          const double n = static_cast<double>(c);
          std::vector<double> dn(c);
          for (std::size_t i = 0; i < r; ++i) {
            double sum_dn = 0.0, sum_dn_x = 0.0;
            for (std::size_t j = 0; j < c; ++j) {
              dn[j] = g(i, j) * gv[j];
              sum_dn += dn[j];
              sum_dn_x += dn[j] * normalized(i, j);
            }
            for (std::size_t j = 0; j < c; ++j) {
              d(i, j) += inv_std[i] / n * (n * dn[j] - sum_dn - normalized(i, j) * sum_dn_x);
            }
          }
        }
      });
}

inline Var sum(Var x) {
  const std::size_t ix = x.id();
  return x.tape()->record("sum", Tensor::scalar(x.value().sum()), {x}, [ix](Tape& t, const Tensor& g) {
    auto d = t.grad_buffer(ix).values();
    for (double& v : d) v += g[0];
  });
}

inline Var mean(Var x) {
  const double n = static_cast<double>(x.value().size());
  return scale(sum(x), 1.0 / n);
}

/// Mean of squared differences over all entries.
inline Var mse(Var pred, Var target) {
  detail::require_same(pred.value(), target.value(), "mse");
  Var diff = sub(pred, target);
  return mean(mul(diff, diff));
}

/// Rows [begin, begin + count) of a matrix.
inline Var slice_rows(Var x, std::size_t begin, std::size_t count) {
  const Tensor& xv = x.value();
  if (xv.rank() != 2 || begin + count > xv.rows()) throw DimensionError("slice_rows: range out of bounds");
  const std::size_t c = xv.cols();
  std::vector<double> data(xv.values().begin() + static_cast<std::ptrdiff_t>(begin * c),
                           xv.values().begin() + static_cast<std::ptrdiff_t>((begin + count) * c));
  const std::size_t ix = x.id();
  return x.tape()->record("slice_rows", Tensor({count, c}, std::move(data)), {x},
                          [ix, begin, c](Tape& t, const Tensor& g) {
                            auto d = t.grad_buffer(ix).values();
                            auto gs = g.values();
                            for (std::size_t i = 0; i < gs.size(); ++i) d[begin * c + i] += gs[i];
                          });
}

/// Stacks matrices with equal column counts vertically.
inline Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no inputs");
  const std::size_t c = parts.front().value().cols();
  std::size_t r = 0;
  std::vector<double> data;
  for (const Var& p : parts) {
    if (p.value().rank() != 2 || p.value().cols() != c) throw DimensionError("concat_rows: column mismatch");
    r += p.value().rows();
    data.insert(data.end(), p.value().values().begin(), p.value().values().end());
  }
  std::vector<std::size_t> ids;
  for (const Var& p : parts) ids.push_back(p.id());
  return parts.front().tape()->record("concat_rows", Tensor({r, c}, std::move(data)), parts,
                                      [ids](Tape& t, const Tensor& g) {
                                        std::size_t offset = 0;
                                        for (std::size_t id : ids) {
                                          const std::size_t n = t.value_at(id).size();
                                          if (t.needs_grad(id)) {
                                            auto d = t.grad_buffer(id).values();
                                            for (std::size_t i = 0; i < n; ++i) d[i] += g[offset + i];
                                          }
                                          offset += n;
                                        }
                                      });
}

/// Places matrices with equal row counts side by side.
inline Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  const std::size_t r = parts.front().value().rows();
  std::size_t c = 0;
  for (const Var& p : parts) {
    if (p.value().rank() != 2 || p.value().rows() != r) throw DimensionError("concat_cols: row mismatch");
    c += p.value().cols();
  }
  Tensor out = Tensor::matrix(r, c);
  std::size_t offset = 0;
  std::vector<std::size_t> ids;
  for (const Var& p : parts) {
    const Tensor& v = p.value();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < v.cols(); ++j) out(i, offset + j) = v(i, j);
    offset += v.cols();
    ids.push_back(p.id());
  }
  return parts.front().tape()->record("concat_cols", std::move(out), parts, [ids, r](Tape& t, const Tensor& g) {
    std::size_t offset = 0;
    for (std::size_t id : ids) {
      const std::size_t w = t.value_at(id).cols();
      if (t.needs_grad(id)) {
        Tensor& d = t.grad_buffer(id);
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < w; ++j) d(i, j) += g(i, offset + j);
      }
      offset += w;
    }
  });
}

/// Averages consecutive blocks of `group` rows: (B*group x c) -> (B x c).
inline Var group_mean_rows(Var x, std::size_t group) {
  const Tensor& xv = x.value();
  if (group == 0 || xv.rank() != 2 || xv.rows() % group != 0) {
    throw DimensionError("group_mean_rows: row count not divisible by group size");
  }
  const std::size_t blocks = xv.rows() / group, c = xv.cols();
  Tensor out = Tensor::matrix(blocks, c);
  const double inv = 1.0 / static_cast<double>(group);
  for (std::size_t b = 0; b < blocks; ++b)
    for (std::size_t i = 0; i < group; ++i)
      for (std::size_t j = 0; j < c; ++j) out(b, j) += xv(b * group + i, j) * inv;
  const std::size_t ix = x.id();
  return x.tape()->record("group_mean_rows", std::move(out), {x},
                          [ix, blocks, group, c, inv](Tape& t, const Tensor& g) {
                            Tensor& d = t.grad_buffer(ix);
                            for (std::size_t b = 0; b < blocks; ++b)
                              for (std::size_t i = 0; i < group; ++i)
                                for (std::size_t j = 0; j < c; ++j) d(b * group + i, j) += g(b, j) * inv;
                          });
}

/// Multiplies by a fixed mask (inverted dropout: entries are 0 or 1/(1-p)).
inline Var apply_mask(Var x, Tensor mask) {
  detail::require_same(x.value(), mask, "apply_mask");
  Tensor out = x.value();
  auto o = out.values();
  auto m = mask.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] *= m[i];
  const std::size_t ix = x.id();
  return x.tape()->record("dropout", std::move(out), {x}, [ix, mask = std::move(mask)](Tape& t, const Tensor& g) {
    auto d = t.grad_buffer(ix).values();
    auto gs = g.values();
    auto m = mask.values();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += gs[i] * m[i];
  });
}

}  // namespace tsat::ad
