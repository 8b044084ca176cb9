// Copyright 2026 The SlimCAE Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Reverse-mode differentiation over a linear tape. Nodes are appended in
// evaluation order, so reverse creation order is a valid topological order
// and the graph cannot contain cycles.

#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "slimcae/conv.hpp"
#include "slimcae/tensor.hpp"

namespace slimcae {

enum class ParamGroup { kMain, kEntropy };

/// A named trainable tensor with its gradient accumulator.
struct Param {
  std::string name;
  Tensor4 value;
  Tensor4 grad;
  ParamGroup group = ParamGroup::kMain;

  Param(std::string n, Tensor4 v, ParamGroup g = ParamGroup::kMain)
      : name(std::move(n)), value(std::move(v)), grad(value.shape()), group(g) {}

  void zero_grad() { grad = Tensor4(value.shape()); }
};

/// Ordered collection of Params; the order is the checkpoint order.
class ParamStore {
 public:
  Param& add(std::string name, Tensor4 value, ParamGroup group = ParamGroup::kMain) {
    if (index_.count(name)) throw InternalError("duplicate parameter name " + name);
    params_.push_back(std::make_unique<Param>(name, std::move(value), group));
    index_[name] = params_.size() - 1;
    return *params_.back();
  }

  Param& get(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("unknown parameter " + name);
    return *params_[it->second];
  }
  const Param& get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("unknown parameter " + name);
    return *params_[it->second];
  }
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  std::size_t size() const { return params_.size(); }
  Param& operator[](std::size_t i) { return *params_[i]; }
  const Param& operator[](std::size_t i) const { return *params_[i]; }

  void zero_grads() {
    for (auto& p : params_) p->zero_grad();
  }

  std::size_t count_values() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p->value.size();
    return n;
  }

 private:
  std::vector<std::unique_ptr<Param>> params_;
  std::map<std::string, std::size_t> index_;
};

class Tape;

/// Handle to a node on a Tape.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  const Tensor4& value() const;
  const Shape& shape() const { return value().shape(); }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  // Receives the node's accumulated output gradient.
  using BackwardFn = std::function<void(Tape&, const Tensor4& grad_out)>;

  Var constant(Tensor4 v) { return push(std::move(v), false, nullptr, {}); }

  /// Leaf bound to `p`; backward() adds this leaf's gradient into p.grad.
  Var param(Param& p) {
    Var v = push(p.value, true, nullptr, {});
    nodes_[v.id()].param = &p;
    return v;
  }

  /// Records an op result. `inputs` decide whether the node needs a gradient.
  Var record(Tensor4 value, std::initializer_list<Var> inputs, BackwardFn fn,
             bool differentiable = true) {
    bool needs = false;
    for (const Var& in : inputs) {
      check_owned(in);
      needs = needs || nodes_[in.id()].requires_grad;
    }
    if (needs && !differentiable) non_differentiable_ = true;
    return push(std::move(value), needs, needs ? std::move(fn) : BackwardFn{}, {},
                differentiable);
  }

  const Tensor4& value(Var v) const {
    check_owned(v);
    return nodes_[v.id()].value;
  }
  bool requires_grad(Var v) const { return nodes_[v.id()].requires_grad; }

  /// True when some recorded op on a gradient path has no derivative.
  bool has_non_differentiable() const { return non_differentiable_; }

  /// Adds `g` into the gradient of input node `v` (no-op for constants).
  void accumulate(Var v, const Tensor4& g) {
    Node& n = nodes_[v.id()];
    if (!n.requires_grad) return;
    if (g.shape() != n.value.shape())
      throw InternalError("gradient shape " + g.shape().str() + " does not match node " +
                          n.value.shape().str());
    if (n.grad.empty() && n.value.size() != 0) {
      n.grad = g;
      return;
    }
    for (std::size_t i = 0; i < g.size(); ++i) n.grad[i] += g[i];
  }
  void accumulate(Var v, Tensor4&& g) {
    Node& n = nodes_[v.id()];
    if (!n.requires_grad) return;
    if (g.shape() != n.value.shape())
      throw InternalError("gradient shape " + g.shape().str() + " does not match node " +
                          n.value.shape().str());
    if (n.grad.empty() && n.value.size() != 0) {
      n.grad = std::move(g);
      return;
    }
    for (std::size_t i = 0; i < g.size(); ++i) n.grad[i] += g[i];
  }

  /// Runs reverse accumulation from a scalar loss and adds leaf gradients
  /// into their Params.
  void backward(Var loss) {
    check_owned(loss);
    const Node& root = nodes_[loss.id()];
    if (root.value.size() != 1) throw InternalError("backward: loss must be a scalar");
    if (!std::isfinite(root.value[0])) throw NumericError("backward: non-finite loss");
    if (!root.requires_grad) return;
    if (non_differentiable_)
      throw InternalError("backward: graph contains a non-differentiable op on a gradient path");
    nodes_[loss.id()].grad = Tensor4::scalar(1.0);
    for (std::size_t i = loss.id() + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.requires_grad || n.grad.empty()) continue;
      if (n.backward) {
        // Copy out: the callback may grow other nodes' gradients.
        const Tensor4 g = std::move(n.grad);
        n.grad = Tensor4();
        n.backward(*this, g);
      } else if (n.param) {
        Tensor4& pg = n.param->grad;
        for (std::size_t j = 0; j < pg.size(); ++j) pg[j] += n.grad[j];
      }
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor4 value;
    Tensor4 grad;
    bool requires_grad = false;
    bool differentiable = true;
    BackwardFn backward;
    Param* param = nullptr;
  };

  Var push(Tensor4 value, bool requires_grad, BackwardFn fn, std::initializer_list<Var>,
           bool differentiable = true) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    n.differentiable = differentiable;
    n.backward = std::move(fn);
    nodes_.push_back(std::move(n));
    return Var(this, nodes_.size() - 1);
  }

  void check_owned(Var v) const {
    if (v.tape() != this || v.id() >= nodes_.size())
      throw InternalError("variable is not recorded on this tape");
  }

  std::deque<Node> nodes_;
  bool non_differentiable_ = false;
};

inline const Tensor4& Var::value() const {
  if (!tape_) throw InternalError("use of an unbound variable");
  return tape_->value(*this);
}

// ---------------------------------------------------------------------------
// Differentiable ops.

namespace ops {

inline void require_same(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape())
    throw ConfigError(std::string(op) + ": shape mismatch " + a.shape().str() + " vs " +
                      b.shape().str());
}

inline Var add(Var a, Var b) {
  require_same(a, b, "add");
  Tensor4 out = a.value();
  const Tensor4& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  return a.tape()->record(std::move(out), {a, b}, [a, b](Tape& t, const Tensor4& g) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

inline Var sub(Var a, Var b) {
  require_same(a, b, "sub");
  Tensor4 out = a.value();
  const Tensor4& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  return a.tape()->record(std::move(out), {a, b}, [a, b](Tape& t, const Tensor4& g) {
    t.accumulate(a, g);
    Tensor4 ng = g;
    for (std::size_t i = 0; i < ng.size(); ++i) ng[i] = -ng[i];
    t.accumulate(b, std::move(ng));
  });
}

inline Var mul(Var a, Var b) {
  require_same(a, b, "mul");
  Tensor4 out = a.value();
  const Tensor4& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  return a.tape()->record(std::move(out), {a, b}, [a, b](Tape& t, const Tensor4& g) {
    Tensor4 ga = g, gb = g;
    const Tensor4& av = a.value();
    const Tensor4& bv = b.value();
    for (std::size_t i = 0; i < g.size(); ++i) {
      ga[i] *= bv[i];
      gb[i] *= av[i];
    }
    t.accumulate(a, std::move(ga));
    t.accumulate(b, std::move(gb));
  });
}

/// a * c for a constant c.
inline Var scale(Var a, double c) {
  Tensor4 out = a.value();
  for (double& v : out.data()) v *= c;
  return a.tape()->record(std::move(out), {a}, [a, c](Tape& t, const Tensor4& g) {
    Tensor4 ga = g;
    for (double& v : ga.data()) v *= c;
    t.accumulate(a, std::move(ga));
  });
}

/// a + c for a constant tensor c of the same shape.
inline Var add_constant(Var a, const Tensor4& c) {
  if (a.shape() != c.shape())
    throw ConfigError("add_constant: shape mismatch " + a.shape().str() + " vs " + c.shape().str());
  Tensor4 out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += c[i];
  return a.tape()->record(std::move(out), {a},
                          [a](Tape& t, const Tensor4& g) { t.accumulate(a, g); });
}

/// Elementwise a * s for a one-element tensor s.
inline Var mul_scalar(Var a, Var s) {
  if (s.value().size() != 1) throw ConfigError("mul_scalar: scale must have one element");
  const double sv = s.value()[0];
  Tensor4 out = a.value();
  for (double& v : out.data()) v *= sv;
  return a.tape()->record(std::move(out), {a, s}, [a, s](Tape& t, const Tensor4& g) {
    const double sv = s.value()[0];
    Tensor4 ga = g;
    double gs = 0.0;
    const Tensor4& av = a.value();
    for (std::size_t i = 0; i < ga.size(); ++i) {
      gs += g[i] * av[i];
      ga[i] *= sv;
    }
    t.accumulate(a, std::move(ga));
    t.accumulate(s, Tensor4(s.shape(), gs));
  });
}

/// Elementwise a + b for a one-element tensor b.
inline Var add_scalar(Var a, Var b) {
  if (b.value().size() != 1) throw ConfigError("add_scalar: offset must have one element");
  const double bv = b.value()[0];
  Tensor4 out = a.value();
  for (double& v : out.data()) v += bv;
  return a.tape()->record(std::move(out), {a, b}, [a, b](Tape& t, const Tensor4& g) {
    t.accumulate(a, g);
    t.accumulate(b, Tensor4(b.shape(), sum(g)));
  });
}

/// max(a, lo); gradient is zero where the bound is active.
inline Var clamp_min(Var a, double lo) {
  Tensor4 out = a.value();
  for (double& v : out.data()) v = std::max(v, lo);
  return a.tape()->record(std::move(out), {a}, [a, lo](Tape& t, const Tensor4& g) {
    Tensor4 ga = g;
    const Tensor4& av = a.value();
    for (std::size_t i = 0; i < ga.size(); ++i)
      if (av[i] < lo) ga[i] = 0.0;
    t.accumulate(a, std::move(ga));
  });
}

inline Var sum(Var a) {
  const Shape s = a.shape();
  return a.tape()->record(Tensor4::scalar(slimcae::sum(a.value())), {a},
                          [a, s](Tape& t, const Tensor4& g) { t.accumulate(a, Tensor4(s, g[0])); });
}

/// Leading block [0:s.n, 0:s.c, 0:s.h, 0:s.w]; the gradient scatters back
/// into that block and leaves the rest exactly zero.
inline Var slice_leading(Var a, Shape s) {
  if (s == a.shape()) return a;
  const Shape full = a.shape();
  return a.tape()->record(leading_slice(a.value(), s), {a}, [a, full](Tape& t, const Tensor4& g) {
    Tensor4 ga(full);
    add_into_leading(ga, g);
    t.accumulate(a, std::move(ga));
  });
}

inline Var slice_channels(Var a, std::size_t c) {
  const Shape s = a.shape();
  if (c > s.c)
    throw ConfigError("slice_channels: requested " + std::to_string(c) + " of " +
                      std::to_string(s.c) + " channels");
  return slice_leading(a, {s.n, c, s.h, s.w});
}

/// Sub-range [begin, end) along dimension 0 (batch/rows) or 1 (channels).
inline Var slice_range(Var a, int dim, std::size_t begin, std::size_t end) {
  const Shape s = a.shape();
  const std::size_t len = dim == 0 ? s.n : s.c;
  if ((dim != 0 && dim != 1) || begin > end || end > len)
    throw ConfigError("slice_range: invalid range [" + std::to_string(begin) + ", " +
                      std::to_string(end) + ") on " + s.str());
  Shape o = s;
  (dim == 0 ? o.n : o.c) = end - begin;
  const std::size_t inner = s.h * s.w;
  auto offset = [&](const Shape& sh, std::size_t n, std::size_t c) {
    return (n * sh.c + c) * inner;
  };
  Tensor4 out(o);
  for (std::size_t n = 0; n < o.n; ++n)
    for (std::size_t c = 0; c < o.c; ++c) {
      const std::size_t src = dim == 0 ? offset(s, n + begin, c) : offset(s, n, c + begin);
      std::copy_n(a.value().data().begin() + src, inner, out.data().begin() + offset(o, n, c));
    }
  return a.tape()->record(std::move(out), {a}, [a, dim, begin, o, inner](Tape& t, const Tensor4& g) {
    const Shape s = a.shape();
    Tensor4 ga(s);
    for (std::size_t n = 0; n < o.n; ++n)
      for (std::size_t c = 0; c < o.c; ++c) {
        const std::size_t dst = dim == 0 ? ((n + begin) * s.c + c) * inner
                                         : (n * s.c + c + begin) * inner;
        const std::size_t src = (n * o.c + c) * inner;
        for (std::size_t i = 0; i < inner; ++i) ga[dst + i] += g[src + i];
      }
    t.accumulate(a, std::move(ga));
  });
}

/// Convolution; `bias` may be an unbound Var for no bias.
inline Var conv2d(Var x, Var kernel, Var bias, ConvGeometry g) {
  const bool has_bias = bias.tape() != nullptr;
  Tensor4 y = conv2d_forward(x.value(), kernel.value(), has_bias ? &bias.value() : nullptr, g);
  auto fn = [x, kernel, bias, g, has_bias](Tape& t, const Tensor4& gy) {
    if (t.requires_grad(x)) t.accumulate(x, conv2d_adjoint(gy, kernel.value(), g, x.shape()));
    if (t.requires_grad(kernel))
      t.accumulate(kernel, conv2d_kernel_grad(x.value(), gy, kernel.shape(), g));
    if (has_bias && t.requires_grad(bias)) t.accumulate(bias, channel_sums(gy));
  };
  if (has_bias) return x.tape()->record(std::move(y), {x, kernel, bias}, fn);
  return x.tape()->record(std::move(y), {x, kernel}, fn);
}

/// Transposed convolution with kernel (c_in, c_out, kh, kw).
inline Var deconv2d(Var x, Var kernel, Var bias, ConvGeometry g, std::size_t out_pad = 0) {
  const bool has_bias = bias.tape() != nullptr;
  Tensor4 y = deconv2d_forward(x.value(), kernel.value(), has_bias ? &bias.value() : nullptr, g,
                               out_pad);
  auto fn = [x, kernel, bias, g, has_bias](Tape& t, const Tensor4& gy) {
    if (t.requires_grad(x)) t.accumulate(x, conv2d_forward(gy, kernel.value(), nullptr, g));
    if (t.requires_grad(kernel))
      t.accumulate(kernel, conv2d_kernel_grad(gy, x.value(), kernel.shape(), g));
    if (has_bias && t.requires_grad(bias)) t.accumulate(bias, channel_sums(gy));
  };
  if (has_bias) return x.tape()->record(std::move(y), {x, kernel, bias}, fn);
  return x.tape()->record(std::move(y), {x, kernel}, fn);
}

/// Mean squared error over the top-left (h, w) region of every image and
/// channel.
inline Var mse_region(Var xhat, const Tensor4& x, std::size_t h, std::size_t w) {
  const Shape s = xhat.shape();
  if (x.shape() != s)
    throw ConfigError("mse: shape mismatch " + s.str() + " vs " + x.shape().str());
  if (h > s.h || w > s.w || h == 0 || w == 0) throw ConfigError("mse: invalid region");
  const double count = static_cast<double>(s.n * s.c * h * w);
  double acc = 0.0;
  const Tensor4& xv = xhat.value();
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t c = 0; c < s.c; ++c)
      for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < w; ++j) {
          const double d = xv.at(n, c, i, j) - x.at(n, c, i, j);
          acc += d * d;
        }
  auto target = std::make_shared<const Tensor4>(x);
  return xhat.tape()->record(
      Tensor4::scalar(acc / count), {xhat}, [xhat, target, h, w, count](Tape& t, const Tensor4& g) {
        const Shape s = xhat.shape();
        Tensor4 gx(s);
        const Tensor4& xv = xhat.value();
        const double k = 2.0 * g[0] / count;
        for (std::size_t n = 0; n < s.n; ++n)
          for (std::size_t c = 0; c < s.c; ++c)
            for (std::size_t i = 0; i < h; ++i)
              for (std::size_t j = 0; j < w; ++j)
                gx.at(n, c, i, j) = k * (xv.at(n, c, i, j) - target->at(n, c, i, j));
        t.accumulate(xhat, std::move(gx));
      });
}

/// Records a value with no derivative (e.g. hard rounding). Backward through
/// it is refused.
inline Var non_differentiable(Var a, Tensor4 value) {
  return a.tape()->record(std::move(value), {a}, Tape::BackwardFn{}, false);
}

}  // namespace ops
}  // namespace slimcae
