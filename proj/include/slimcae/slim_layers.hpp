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

// Slimmable layers. Every layer holds the parameters of its widest
// configuration; running at level k uses the leading slice of each tensor,
// so the parameter sets of the levels are nested.

#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "slimcae/rng.hpp"
#include "slimcae/tape.hpp"

namespace slimcae {

/// Strictly increasing list of layer widths, one per level.
class WidthSet {
 public:
  WidthSet() = default;
  explicit WidthSet(std::vector<std::size_t> widths) : widths_(std::move(widths)) {
    if (widths_.empty()) throw ConfigError("width set must not be empty");
    for (std::size_t i = 0; i < widths_.size(); ++i) {
      if (widths_[i] == 0) throw ConfigError("widths must be positive");
      if (i > 0 && widths_[i] <= widths_[i - 1])
        throw ConfigError("widths must be strictly increasing");
    }
  }

  std::size_t levels() const { return widths_.size(); }
  std::size_t operator[](std::size_t level) const {
    check(level);
    return widths_[level];
  }
  std::size_t max() const { return widths_.back(); }
  const std::vector<std::size_t>& values() const { return widths_; }

  void check(std::size_t level) const {
    if (level >= widths_.size())
      throw ConfigError("width level " + std::to_string(level + 1) + " out of range 1.." +
                        std::to_string(widths_.size()));
  }

  bool operator==(const WidthSet&) const = default;

 private:
  std::vector<std::size_t> widths_;
};

/// Per-level channel count of one tensor dimension: either follows the
/// WidthSet or stays fixed (image channels).
inline std::vector<std::size_t> follow_widths(const WidthSet& ws) { return ws.values(); }
inline std::vector<std::size_t> fixed_channels(const WidthSet& ws, std::size_t c) {
  return std::vector<std::size_t>(ws.levels(), c);
}

/// Slimmable convolution or transposed convolution.
///
/// Convolution kernels are (c_out, c_in, kh, kw); transposed kernels are
/// (c_in, c_out, kh, kw). Level k uses the leading (in(k), out(k)) block.
class SlimConv {
 public:
  SlimConv() = default;
  SlimConv(ParamStore& store, const std::string& name, std::vector<std::size_t> in_ch,
           std::vector<std::size_t> out_ch, std::size_t ksize, ConvGeometry g, bool transposed,
           std::size_t out_pad = 0)
      : in_(std::move(in_ch)), out_(std::move(out_ch)), ksize_(ksize), geom_(g),
        transposed_(transposed), out_pad_(out_pad) {
    if (in_.size() != out_.size() || in_.empty())
      throw ConfigError(name + ": channel specs must have one entry per level");
    const std::size_t ci = in_.back(), co = out_.back();
    const Shape ks = transposed_ ? Shape{ci, co, ksize, ksize} : Shape{co, ci, ksize, ksize};
    kernel_ = &store.add(name + ".kernel", Tensor4(ks));
    bias_ = &store.add(name + ".bias", Tensor4::vector(co));
  }

  std::size_t levels() const { return in_.size(); }
  std::size_t in_channels(std::size_t level) const { return in_.at(level); }
  std::size_t out_channels(std::size_t level) const { return out_.at(level); }
  std::size_t kernel_size() const { return ksize_; }
  const ConvGeometry& geometry() const { return geom_; }
  bool transposed() const { return transposed_; }
  std::size_t out_pad() const { return out_pad_; }
  Param& kernel() const { return *kernel_; }
  Param& bias() const { return *bias_; }

  Shape kernel_slice(std::size_t level) const {
    check(level);
    return transposed_ ? Shape{in_[level], out_[level], ksize_, ksize_}
                       : Shape{out_[level], in_[level], ksize_, ksize_};
  }

  /// Centered uniform init with bound sqrt(3 / fan_in); bias zero.
  void init(Rng& rng) {
    const Shape ks = kernel_->value.shape();
    double fan_in = transposed_
                        ? static_cast<double>(ks.n * ks.h * ks.w) / (geom_.stride * geom_.stride)
                        : static_cast<double>(ks.c * ks.h * ks.w);
    fan_in = std::max(fan_in, 1.0);
    const double a = std::sqrt(3.0 / fan_in);
    for (double& v : kernel_->value.data()) v = rng.uniform(-a, a);
    bias_->value.fill(0.0);
  }

  Var forward(Tape& tape, Var x, std::size_t level) const {
    check(level);
    if (x.shape().c != in_[level])
      throw ConfigError("slim conv: input has " + std::to_string(x.shape().c) +
                        " channels, level " + std::to_string(level + 1) + " expects " +
                        std::to_string(in_[level]));
    Var k = ops::slice_leading(tape.param(*kernel_), kernel_slice(level));
    Var b = ops::slice_leading(tape.param(*bias_), {out_[level], 1, 1, 1});
    return transposed_ ? ops::deconv2d(x, k, b, geom_, out_pad_) : ops::conv2d(x, k, b, geom_);
  }

  std::size_t active_params(std::size_t level) const {
    return kernel_slice(level).size() + out_[level];
  }
  std::size_t stored_params() const { return kernel_->value.size() + bias_->value.size(); }

 private:
  void check(std::size_t level) const {
    if (level >= in_.size())
      throw ConfigError("width level " + std::to_string(level + 1) + " out of range 1.." +
                        std::to_string(in_.size()));
  }

  std::vector<std::size_t> in_, out_;
  std::size_t ksize_ = 1;
  ConvGeometry geom_;
  bool transposed_ = false;
  std::size_t out_pad_ = 0;
  Param* kernel_ = nullptr;
  Param* bias_ = nullptr;
};

// ---------------------------------------------------------------------------
// GDN / IGDN

enum class GdnVariant { kSwitch, kSlim, kSlimPlus };

inline const char* to_string(GdnVariant v) {
  switch (v) {
    case GdnVariant::kSwitch: return "switch";
    case GdnVariant::kSlim: return "slim";
    case GdnVariant::kSlimPlus: return "slim_plus";
  }
  return "?";
}

inline GdnVariant parse_gdn_variant(const std::string& s) {
  if (s == "switch") return GdnVariant::kSwitch;
  if (s == "slim") return GdnVariant::kSlim;
  if (s == "slim_plus" || s == "slimplus" || s == "slim+") return GdnVariant::kSlimPlus;
  throw ConfigError("unknown GDN variant '" + s + "' (expected switch, slim or slim_plus)");
}

/// Stored parameter count of one GDN layer over `widths`.
inline std::size_t gdn_param_count(GdnVariant v, const std::vector<std::size_t>& widths) {
  const std::size_t top = widths.back();
  switch (v) {
    case GdnVariant::kSwitch: {
      std::size_t n = 0;
      for (std::size_t w : widths) n += (w + 1) * w;
      return n;
    }
    case GdnVariant::kSlim: return (top + 1) * top;
    case GdnVariant::kSlimPlus: return (top + 1) * top + 4 * widths.size();
  }
  return 0;
}

inline constexpr double kGdnPedestal = 0x1.0p-36;
inline constexpr double kBetaMin = 1e-6;
inline constexpr double kGammaMin = 0.0;

/// Raw GDN evaluation: per pixel, out_i = y_i / sqrt(beta_i + sum_j gamma_ij y_j^2)
/// (or y_i * sqrt(...) when `inverse`). gamma is (C, C, 1, 1), beta (C, 1, 1, 1).
inline Tensor4 gdn_eval(const Tensor4& y, const Tensor4& gamma, const Tensor4& beta, bool inverse,
                        Tensor4* norm_out = nullptr) {
  const Shape s = y.shape();
  const std::size_t c = s.c, hw = s.h * s.w;
  if (gamma.shape() != Shape{c, c, 1, 1} || beta.size() != c)
    throw ConfigError("gdn: parameters " + gamma.shape().str() + "/" + beta.shape().str() +
                      " do not match " + std::to_string(c) + " channels");
  Tensor4 norm(s);
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t i = 0; i < c; ++i) {
      double* np = &norm.at(n, i, 0, 0);
      for (std::size_t p = 0; p < hw; ++p) np[p] = beta[i];
      for (std::size_t j = 0; j < c; ++j) {
        const double g = gamma.at(i, j, 0, 0);
        if (g == 0.0) continue;
        const double* yp = &y.at(n, j, 0, 0);
        for (std::size_t p = 0; p < hw; ++p) np[p] += g * yp[p] * yp[p];
      }
    }
  }
  Tensor4 out(s);
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!(norm[i] > 0.0)) throw InternalError("gdn: non-positive normalization pool");
    const double r = std::sqrt(norm[i]);
    out[i] = inverse ? y[i] * r : y[i] / r;
  }
  if (norm_out) *norm_out = std::move(norm);
  return out;
}

namespace ops {

/// Differentiable GDN/IGDN with explicit gamma/beta inputs.
inline Var gdn(Var y, Var gamma, Var beta, bool inverse) {
  auto norm = std::make_shared<Tensor4>();
  Tensor4 out = gdn_eval(y.value(), gamma.value(), beta.value(), inverse, norm.get());
  return y.tape()->record(
      std::move(out), {y, gamma, beta}, [y, gamma, beta, inverse, norm](Tape& t, const Tensor4& g) {
        const Tensor4& yv = y.value();
        const Tensor4& gm = gamma.value();
        const Shape s = yv.shape();
        const std::size_t c = s.c, hw = s.h * s.w;
        // gn = dL/dnorm per element.
        Tensor4 gn(s), gy(s);
        for (std::size_t i = 0; i < yv.size(); ++i) {
          const double nv = (*norm)[i];
          const double r = std::sqrt(nv);
          if (inverse) {
            gy[i] = g[i] * r;
            gn[i] = g[i] * 0.5 * yv[i] / r;
          } else {
            gy[i] = g[i] / r;
            gn[i] = -g[i] * 0.5 * yv[i] / (nv * r);
          }
        }
        Tensor4 ggamma(gm.shape()), gbeta(beta.shape());
        for (std::size_t n = 0; n < s.n; ++n) {
          for (std::size_t i = 0; i < c; ++i) {
            const double* gnp = &gn.at(n, i, 0, 0);
            double bsum = 0.0;
            for (std::size_t p = 0; p < hw; ++p) bsum += gnp[p];
            gbeta[i] += bsum;
            for (std::size_t j = 0; j < c; ++j) {
              const double* yp = &yv.at(n, j, 0, 0);
              double* gyp = &gy.at(n, j, 0, 0);
              const double gij = gm.at(i, j, 0, 0);
              double acc = 0.0;
              for (std::size_t p = 0; p < hw; ++p) {
                const double y2 = yp[p] * yp[p];
                acc += gnp[p] * y2;
                gyp[p] += gnp[p] * 2.0 * gij * yp[p];
              }
              ggamma.at(i, j, 0, 0) += acc;
            }
          }
        }
        t.accumulate(y, std::move(gy));
        t.accumulate(gamma, std::move(ggamma));
        t.accumulate(beta, std::move(gbeta));
      });
}

/// Maps unconstrained storage v to max(max(v, sqrt(min + ped))^2 - ped, min).
/// The gradient passes through the lower bound when v is above it or when
/// descent would push v upwards.
inline Var bounded_square(Var v, double min_value) {
  const double bound = std::sqrt(min_value + kGdnPedestal);
  Tensor4 out = v.value();
  for (double& x : out.data()) {
    const double lb = std::max(x, bound);
    x = std::max(lb * lb - kGdnPedestal, min_value);
  }
  return v.tape()->record(std::move(out), {v}, [v, bound](Tape& t, const Tensor4& g) {
    Tensor4 gv = g;
    const Tensor4& vv = v.value();
    for (std::size_t i = 0; i < gv.size(); ++i) {
      const double lb = std::max(vv[i], bound);
      const bool pass = vv[i] >= bound || g[i] < 0.0;
      gv[i] = pass ? g[i] * 2.0 * lb : 0.0;
    }
    t.accumulate(v, std::move(gv));
  });
}

}  // namespace ops

/// Inverse of the bounded-square map for initialization.
inline double gdn_storage_for(double effective) { return std::sqrt(effective + kGdnPedestal); }

/// One GDN or IGDN layer in one of the three slimmable variants.
class SlimGdn {
 public:
  SlimGdn() = default;
  SlimGdn(ParamStore& store, const std::string& name, const WidthSet& widths, GdnVariant variant,
          bool inverse)
      : widths_(widths), variant_(variant), inverse_(inverse) {
    const std::size_t top = widths.max();
    if (variant == GdnVariant::kSwitch) {
      for (std::size_t k = 0; k < widths.levels(); ++k) {
        const std::size_t w = widths[k];
        const std::string sfx = "." + std::to_string(k + 1);
        gammas_.push_back(&store.add(name + ".gamma" + sfx, Tensor4({w, w, 1, 1})));
        betas_.push_back(&store.add(name + ".beta" + sfx, Tensor4::vector(w)));
      }
    } else {
      gammas_.push_back(&store.add(name + ".gamma", Tensor4({top, top, 1, 1})));
      betas_.push_back(&store.add(name + ".beta", Tensor4::vector(top)));
    }
    if (variant == GdnVariant::kSlimPlus) {
      for (std::size_t k = 0; k < widths.levels(); ++k) {
        const std::string sfx = "." + std::to_string(k + 1);
        mods_.push_back({&store.add(name + ".scale_gamma" + sfx, Tensor4::scalar(1.0)),
                         &store.add(name + ".bias_gamma" + sfx, Tensor4::scalar(0.0)),
                         &store.add(name + ".scale_beta" + sfx, Tensor4::scalar(1.0)),
                         &store.add(name + ".bias_beta" + sfx, Tensor4::scalar(0.0))});
      }
    }
    reset();
  }

  /// beta = 1, gamma = 0.1 * I, modulation (1, 0, 1, 0).
  void reset() {
    for (std::size_t i = 0; i < gammas_.size(); ++i) {
      Tensor4& g = gammas_[i]->value;
      const std::size_t c = g.shape().n;
      for (std::size_t a = 0; a < c; ++a)
        for (std::size_t b = 0; b < c; ++b)
          g.at(a, b, 0, 0) = gdn_storage_for(a == b ? 0.1 : 0.0);
      betas_[i]->value.fill(gdn_storage_for(1.0));
    }
    for (auto& m : mods_) {
      m[0]->value.fill(1.0);
      m[1]->value.fill(0.0);
      m[2]->value.fill(1.0);
      m[3]->value.fill(0.0);
    }
  }

  GdnVariant variant() const { return variant_; }
  bool inverse() const { return inverse_; }
  const WidthSet& widths() const { return widths_; }

  /// Effective (gamma, beta) at `level`, after slicing, modulation and the
  /// domain constraints.
  std::pair<Var, Var> effective(Tape& tape, std::size_t level) const {
    widths_.check(level);
    const std::size_t w = widths_[level];
    if (variant_ == GdnVariant::kSwitch) {
      return {ops::bounded_square(tape.param(*gammas_[level]), kGammaMin),
              ops::bounded_square(tape.param(*betas_[level]), kBetaMin)};
    }
    Var gamma = ops::bounded_square(
        ops::slice_leading(tape.param(*gammas_[0]), {w, w, 1, 1}), kGammaMin);
    Var beta = ops::bounded_square(ops::slice_leading(tape.param(*betas_[0]), {w, 1, 1, 1}),
                                   kBetaMin);
    if (variant_ == GdnVariant::kSlimPlus) {
      const auto& m = mods_[level];
      gamma = ops::clamp_min(
          ops::add_scalar(ops::mul_scalar(gamma, tape.param(*m[0])), tape.param(*m[1])), kGammaMin);
      beta = ops::clamp_min(
          ops::add_scalar(ops::mul_scalar(beta, tape.param(*m[2])), tape.param(*m[3])), kBetaMin);
    }
    return {gamma, beta};
  }

  Var forward(Tape& tape, Var y, std::size_t level) const {
    widths_.check(level);
    if (y.shape().c != widths_[level])
      throw ConfigError("gdn: input has " + std::to_string(y.shape().c) + " channels, level " +
                        std::to_string(level + 1) + " expects " + std::to_string(widths_[level]));
    auto [gamma, beta] = effective(tape, level);
    return ops::gdn(y, gamma, beta, inverse_);
  }

  std::size_t stored_params() const {
    std::size_t n = 0;
    for (auto* p : gammas_) n += p->value.size();
    for (auto* p : betas_) n += p->value.size();
    return n + 4 * mods_.size();
  }

  /// Parameters touched when running at `level`.
  std::size_t active_params(std::size_t level) const {
    const std::size_t w = widths_[level];
    return (w + 1) * w + (variant_ == GdnVariant::kSlimPlus ? 4 : 0);
  }

  Param& gamma_param(std::size_t i = 0) const { return *gammas_.at(i); }
  Param& beta_param(std::size_t i = 0) const { return *betas_.at(i); }
  const std::array<Param*, 4>& modulation(std::size_t level) const { return mods_.at(level); }

 private:
  WidthSet widths_;
  GdnVariant variant_ = GdnVariant::kSlim;
  bool inverse_ = false;
  std::vector<Param*> gammas_, betas_;
  std::vector<std::array<Param*, 4>> mods_;
};

}  // namespace slimcae
