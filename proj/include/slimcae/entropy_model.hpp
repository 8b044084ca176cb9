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

// Switchable factorized entropy model.
//
// Each level k owns an independent set of per-channel distributions over the
// integer symbols [-L, L-1]. A channel is a piecewise-linear CDF whose bin
// masses (one per symbol, bins centred on the integers) are the softmax of
// learnable logits. The likelihood of a real value v is F(v + 1/2) - F(v - 1/2),
// which equals the bin mass at integers and interpolates linearly between
// neighbouring masses elsewhere.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <numeric>
#include <ostream>
#include <string>
#include <vector>

#include "slimcae/rng.hpp"
#include "slimcae/slim_layers.hpp"
#include "slimcae/tape.hpp"

namespace slimcae {

inline constexpr double kLikelihoodFloor = 0x1.0p-16;

struct ClampStats {
  std::size_t total = 0;
  std::size_t clamped = 0;
  double rate() const { return total ? static_cast<double>(clamped) / total : 0.0; }
};

/// Uniform noise on (-1/2, 1/2), the training-time stand-in for rounding.
inline Tensor4 uniform_noise(Shape s, Rng& rng) {
  Tensor4 t(s);
  for (double& v : t.data()) v = rng.uniform() - 0.5;
  return t;
}

inline Tensor4 add_uniform_noise(const Tensor4& z, Rng& rng) {
  Tensor4 out = z;
  for (double& v : out.data()) v += rng.uniform() - 0.5;
  return out;
}

struct QuantizeResult {
  Tensor4 symbols;  // integer-valued
  ClampStats clamp;
  bool clamp_warning = false;  // more than 1% of symbols clamped
};

/// Rounds half away from zero and clamps into [-L, L-1].
inline QuantizeResult quantize(const Tensor4& z, int support) {
  QuantizeResult r{Tensor4(z.shape()), {}, false};
  const double lo = -support, hi = support - 1;
  for (std::size_t i = 0; i < z.size(); ++i) {
    double q = std::round(z[i]);
    if (q < lo || q > hi) {
      q = std::clamp(q, lo, hi);
      ++r.clamp.clamped;
    }
    r.symbols[i] = q;
  }
  r.clamp.total = z.size();
  r.clamp_warning = r.clamp.rate() > 0.01;
  return r;
}

/// Integer CDF for one channel: cdf[0] = 0 < cdf[1] < ... < cdf[S] = 2^precision.
struct CdfTable {
  std::vector<std::uint32_t> cdf;

  std::uint32_t freq(std::size_t s) const { return cdf[s + 1] - cdf[s]; }
  std::size_t symbols() const { return cdf.size() - 1; }
  bool operator==(const CdfTable&) const = default;
};

struct CdfTables {
  int precision = 16;
  int support = 32;  // symbols are [-support, support - 1]
  std::vector<CdfTable> channels;

  std::uint32_t total() const { return std::uint32_t{1} << precision; }
  bool operator==(const CdfTables&) const = default;
};

/// Quantizes a probability vector onto integers summing to 2^precision with
/// every symbol receiving at least one count.
inline CdfTable make_cdf_table(const std::vector<double>& pmf, int precision) {
  if (precision < 12 || precision > 16) throw ConfigError("CDF precision must be in [12, 16]");
  const std::uint64_t total = std::uint64_t{1} << precision;
  const std::size_t s = pmf.size();
  if (s == 0 || s >= total)
    throw ConfigError("support of " + std::to_string(s) + " symbols too wide for " +
                      std::to_string(precision) + "-bit precision");
  const double spare = static_cast<double>(total - s);
  std::vector<std::uint64_t> freq(s);
  std::vector<double> frac(s);
  std::uint64_t used = 0;
  for (std::size_t i = 0; i < s; ++i) {
    const double want = std::max(pmf[i], 0.0) * spare;
    const double fl = std::floor(want);
    freq[i] = 1 + static_cast<std::uint64_t>(fl);
    frac[i] = want - fl;
    used += freq[i];
  }
  if (used > total) throw InternalError("cdf table: probability mass exceeds one");
  std::uint64_t rem = total - used;
  std::vector<std::size_t> order(s);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return frac[a] > frac[b]; });
  for (std::size_t i = 0; rem > 0; i = (i + 1) % s, --rem) ++freq[order[i]];
  CdfTable t;
  t.cdf.resize(s + 1, 0);
  for (std::size_t i = 0; i < s; ++i) t.cdf[i + 1] = t.cdf[i] + static_cast<std::uint32_t>(freq[i]);
  return t;
}

/// Writes per-channel cumulative counts cdf[0..S-1] as little-endian u16
/// (the final count 2^precision is implied).
inline void dump_cdf_tables(std::ostream& os, const CdfTables& t) {
  for (const auto& ch : t.channels)
    for (std::size_t i = 0; i + 1 < ch.cdf.size(); ++i) {
      const std::uint32_t v = ch.cdf[i];
      const char b[2] = {static_cast<char>(v & 0xFF), static_cast<char>((v >> 8) & 0xFF)};
      os.write(b, 2);
    }
}

namespace detail {

inline std::vector<double> softmax_row(const double* a, std::size_t n) {
  double mx = a[0];
  for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, a[i]);
  std::vector<double> m(n);
  double z = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    m[i] = std::exp(a[i] - mx);
    z += m[i];
  }
  for (double& v : m) v /= z;
  return m;
}

// Position of v inside the mass table: lower bin index and fraction.
struct BinPos {
  std::size_t i0;
  double frac;
  bool clamped;
};

inline BinPos locate(double v, int support) {
  const double lo = -support, hi = support - 1;
  bool clamped = false;
  if (v < lo) {
    v = lo;
    clamped = true;
  } else if (v > hi) {
    v = hi;
    clamped = true;
  }
  const double f = v + support;
  double fl = std::floor(f);
  const auto last = static_cast<double>(2 * support - 1);
  if (fl >= last) return {static_cast<std::size_t>(last), 0.0, clamped};
  return {static_cast<std::size_t>(fl), f - fl, clamped};
}

inline double interp(const std::vector<double>& m, const BinPos& b) {
  if (b.frac == 0.0) return m[b.i0];
  return (1.0 - b.frac) * m[b.i0] + b.frac * m[b.i0 + 1];
}

}  // namespace detail

namespace ops {

/// Total code length in bits, -sum log2 p(z), of z (n, C, h, w) under the
/// per-channel masses softmax(logits) with logits shaped (C, 2L, 1, 1).
inline Var entropy_bits(Var z, Var logits, int support, ClampStats* stats = nullptr) {
  const Shape zs = z.shape(), ls = logits.shape();
  const std::size_t nsym = 2 * static_cast<std::size_t>(support);
  if (ls.n != zs.c || ls.c != nsym)
    throw ConfigError("entropy model: logits " + ls.str() + " do not match latent " + zs.str() +
                      " with support " + std::to_string(support));
  auto masses = std::make_shared<std::vector<std::vector<double>>>();
  for (std::size_t c = 0; c < zs.c; ++c)
    masses->push_back(detail::softmax_row(&logits.value().at(c, 0, 0, 0), nsym));
  const Tensor4& zv = z.value();
  const std::size_t hw = zs.h * zs.w;
  double bits = 0.0;
  for (std::size_t n = 0; n < zs.n; ++n)
    for (std::size_t c = 0; c < zs.c; ++c) {
      const double* zp = &zv.at(n, c, 0, 0);
      for (std::size_t p = 0; p < hw; ++p) {
        const auto b = detail::locate(zp[p], support);
        if (stats) {
          ++stats->total;
          stats->clamped += b.clamped;
        }
        bits -= std::log2(std::max(detail::interp((*masses)[c], b), kLikelihoodFloor));
      }
    }
  return z.tape()->record(
      Tensor4::scalar(bits), {z, logits}, [z, logits, support, masses](Tape& t, const Tensor4& g) {
        const Shape zs = z.shape();
        const std::size_t nsym = 2 * static_cast<std::size_t>(support);
        const std::size_t hw = zs.h * zs.w;
        const Tensor4& zv = z.value();
        const double inv_ln2 = 1.0 / std::log(2.0);
        Tensor4 gz(zs);
        Tensor4 gl(logits.shape());
        std::vector<double> gm(nsym);
        for (std::size_t c = 0; c < zs.c; ++c) {
          const auto& m = (*masses)[c];
          std::fill(gm.begin(), gm.end(), 0.0);
          for (std::size_t n = 0; n < zs.n; ++n) {
            const double* zp = &zv.at(n, c, 0, 0);
            double* gzp = &gz.at(n, c, 0, 0);
            for (std::size_t p = 0; p < hw; ++p) {
              const auto b = detail::locate(zp[p], support);
              const double raw = detail::interp(m, b);
              const double pv = std::max(raw, kLikelihoodFloor);
              const double dp = -g[0] * inv_ln2 / pv;  // dL/dp
              if (raw < kLikelihoodFloor && dp >= 0.0) continue;
              gm[b.i0] += dp * (1.0 - b.frac);
              if (b.frac != 0.0) gm[b.i0 + 1] += dp * b.frac;
              if (!b.clamped && b.i0 + 1 < nsym) gzp[p] = dp * (m[b.i0 + 1] - m[b.i0]);
            }
          }
          double dot = 0.0;
          for (std::size_t i = 0; i < nsym; ++i) dot += m[i] * gm[i];
          for (std::size_t i = 0; i < nsym; ++i) gl.at(c, i, 0, 0) = m[i] * (gm[i] - dot);
        }
        t.accumulate(z, std::move(gz));
        t.accumulate(logits, std::move(gl));
      });
}

}  // namespace ops

/// Per-level, per-channel factorized model. Levels share no parameters.
class FactorizedEntropyModel {
 public:
  FactorizedEntropyModel() = default;
  FactorizedEntropyModel(ParamStore& store, const std::string& name, const WidthSet& widths,
                         int support)
      : widths_(widths), support_(support) {
    if (support < 1) throw ConfigError("entropy support must be positive");
    for (std::size_t k = 0; k < widths.levels(); ++k)
      logits_.push_back(&store.add(name + ".logits." + std::to_string(k + 1),
                                   Tensor4({widths[k], symbols(), 1, 1}), ParamGroup::kEntropy));
    init_laplacian(1.0);
  }

  int support() const { return support_; }
  std::size_t symbols() const { return 2 * static_cast<std::size_t>(support_); }
  std::size_t levels() const { return logits_.size(); }
  std::size_t channels(std::size_t level) const { return widths_[level]; }
  Param& logits(std::size_t level) const {
    widths_.check(level);
    return *logits_[level];
  }

  /// Logits -|q| / scale, a discretized Laplacian centred on zero.
  void init_laplacian(double scale) {
    for (Param* p : logits_) {
      const Shape s = p->value.shape();
      for (std::size_t c = 0; c < s.n; ++c)
        for (std::size_t i = 0; i < s.c; ++i)
          p->value.at(c, i, 0, 0) = -std::abs(static_cast<double>(i) - support_) / scale;
    }
  }

  /// Uniform masses over every symbol.
  void set_flat() {
    for (Param* p : logits_) p->value.fill(0.0);
  }

  std::vector<double> pmf(std::size_t level, std::size_t channel) const {
    const Param& p = logits(level);
    if (channel >= p.value.shape().n) throw ConfigError("entropy model: channel out of range");
    return detail::softmax_row(&p.value.at(channel, 0, 0, 0), symbols());
  }

  /// Per-element likelihoods of z at `level`, floored at 2^-16.
  Tensor4 likelihood(const Tensor4& z, std::size_t level, ClampStats* stats = nullptr) const {
    check_latent(z.shape(), level);
    Tensor4 out(z.shape());
    const Shape s = z.shape();
    for (std::size_t c = 0; c < s.c; ++c) {
      const auto m = pmf(level, c);
      for (std::size_t n = 0; n < s.n; ++n)
        for (std::size_t h = 0; h < s.h; ++h)
          for (std::size_t w = 0; w < s.w; ++w) {
            const auto b = detail::locate(z.at(n, c, h, w), support_);
            if (stats) {
              ++stats->total;
              stats->clamped += b.clamped;
            }
            out.at(n, c, h, w) = std::max(detail::interp(m, b), kLikelihoodFloor);
          }
    }
    return out;
  }

  /// -sum log2 p(z) without recording gradients.
  double total_bits(const Tensor4& z, std::size_t level, ClampStats* stats = nullptr) const {
    const Tensor4 p = likelihood(z, level, stats);
    double bits = 0.0;
    for (double v : p.data()) bits -= std::log2(v);
    return bits;
  }

  /// Differentiable code length (bits) of z at `level`.
  Var bits(Tape& tape, Var z, std::size_t level, ClampStats* stats = nullptr) const {
    check_latent(z.shape(), level);
    return ops::entropy_bits(z, tape.param(*logits_[level]), support_, stats);
  }

  /// Differentiable rate in bits per source pixel.
  Var rate_bpp(Tape& tape, Var z, std::size_t level, double num_pixels,
               ClampStats* stats = nullptr) const {
    if (!(num_pixels > 0)) throw ConfigError("rate: pixel count must be positive");
    return ops::scale(bits(tape, z, level, stats), 1.0 / num_pixels);
  }

  /// Integer tables for the range coder; a pure function of the logits.
  CdfTables cdf_tables(std::size_t level, int precision_bits = 16) const {
    CdfTables t;
    t.precision = precision_bits;
    t.support = support_;
    for (std::size_t c = 0; c < widths_[level]; ++c)
      t.channels.push_back(make_cdf_table(pmf(level, c), precision_bits));
    return t;
  }

 private:
  void check_latent(const Shape& s, std::size_t level) const {
    widths_.check(level);
    if (s.c != widths_[level])
      throw ConfigError("entropy model: latent has " + std::to_string(s.c) + " channels, level " +
                        std::to_string(level + 1) + " expects " + std::to_string(widths_[level]));
  }

  WidthSet widths_;
  int support_ = 32;
  std::vector<Param*> logits_;
};

}  // namespace slimcae
