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


// Shared helpers for the unit and acceptance tests.

#pragma once

#include <cmath>
#include <vector>

#include "slimcae/conv.hpp"
#include "slimcae/rng.hpp"
#include "slimcae/slim_layers.hpp"
#include "slimcae/tape.hpp"
#include "slimcae/tensor.hpp"

namespace slimcae {

// Readable parameter names in test listings.
inline void PrintTo(GdnVariant v, std::ostream* os) { *os << to_string(v); }

}  // namespace slimcae

namespace slimcae::testing {

inline Tensor4 random_tensor(Shape s, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor4 t(s);
  for (double& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

/// Direct cross-correlation with zero padding, written without the library.
inline Tensor4 naive_conv(const Tensor4& x, const Tensor4& k, const Tensor4* bias, std::size_t stride,
                          std::size_t pad) {
  const Shape xs = x.shape(), ks = k.shape();
  const std::size_t oh = (xs.h + 2 * pad - ks.h) / stride + 1;
  const std::size_t ow = (xs.w + 2 * pad - ks.w) / stride + 1;
  Tensor4 y({xs.n, ks.n, oh, ow});
  for (std::size_t n = 0; n < xs.n; ++n)
    for (std::size_t o = 0; o < ks.n; ++o)
      for (std::size_t i = 0; i < oh; ++i)
        for (std::size_t j = 0; j < ow; ++j) {
          double acc = bias ? (*bias)[o] : 0.0;
          for (std::size_t c = 0; c < xs.c; ++c)
            for (std::size_t a = 0; a < ks.h; ++a)
              for (std::size_t b = 0; b < ks.w; ++b) {
                const long yy = static_cast<long>(i * stride + a) - static_cast<long>(pad);
                const long xx = static_cast<long>(j * stride + b) - static_cast<long>(pad);
                if (yy < 0 || xx < 0 || yy >= static_cast<long>(xs.h) || xx >= static_cast<long>(xs.w))
                  continue;
                acc += x.at(n, c, static_cast<std::size_t>(yy), static_cast<std::size_t>(xx)) *
                       k.at(o, c, a, b);
              }
          y.at(n, o, i, j) = acc;
        }
  return y;
}

/// Transposed convolution as an explicit scatter of every input pixel.
inline Tensor4 naive_deconv(const Tensor4& x, const Tensor4& k, const Tensor4* bias, std::size_t stride,
                            std::size_t pad, std::size_t out_pad) {
  const Shape xs = x.shape(), ks = k.shape();  // k: (c_in, c_out, kh, kw)
  const std::size_t oh = (xs.h - 1) * stride + ks.h + out_pad - 2 * pad;
  const std::size_t ow = (xs.w - 1) * stride + ks.w + out_pad - 2 * pad;
  Tensor4 y({xs.n, ks.c, oh, ow});
  for (std::size_t n = 0; n < xs.n; ++n)
    for (std::size_t c = 0; c < xs.c; ++c)
      for (std::size_t i = 0; i < xs.h; ++i)
        for (std::size_t j = 0; j < xs.w; ++j)
          for (std::size_t o = 0; o < ks.c; ++o)
            for (std::size_t a = 0; a < ks.h; ++a)
              for (std::size_t b = 0; b < ks.w; ++b) {
                const long yy = static_cast<long>(i * stride + a) - static_cast<long>(pad);
                const long xx = static_cast<long>(j * stride + b) - static_cast<long>(pad);
                if (yy < 0 || xx < 0 || yy >= static_cast<long>(oh) || xx >= static_cast<long>(ow)) continue;
                y.at(n, o, static_cast<std::size_t>(yy), static_cast<std::size_t>(xx)) +=
                    x.at(n, c, i, j) * k.at(c, o, a, b);
              }
  if (bias)
    for (std::size_t n = 0; n < xs.n; ++n)
      for (std::size_t o = 0; o < ks.c; ++o)
        for (std::size_t i = 0; i < oh; ++i)
          for (std::size_t j = 0; j < ow; ++j) y.at(n, o, i, j) += (*bias)[o];
  return y;
}

/// GDN written from its definition: y_i / sqrt(beta_i + sum_j gamma_ij y_j^2)
/// (times the root for the inverse).
inline Tensor4 naive_gdn(const Tensor4& y, const Tensor4& gamma, const Tensor4& beta, bool inverse) {
  const Shape s = y.shape();
  Tensor4 out(s);
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t i = 0; i < s.c; ++i)
      for (std::size_t h = 0; h < s.h; ++h)
        for (std::size_t w = 0; w < s.w; ++w) {
          double pool = beta[i];
          for (std::size_t j = 0; j < s.c; ++j) pool += gamma.at(i, j, 0, 0) * y.at(n, j, h, w) * y.at(n, j, h, w);
          const double r = std::sqrt(pool);
          out.at(n, i, h, w) = inverse ? y.at(n, i, h, w) * r : y.at(n, i, h, w) / r;
        }
  return out;
}

/// Scalar <w, y> for a fixed weight tensor, so every output element
/// contributes a distinct gradient.
inline Var weighted_sum(Var y, const Tensor4& w) {
  return ops::sum(ops::mul(y, y.tape()->constant(w)));
}

/// Moves GDN parameters off the constraint boundary (off-diagonal gamma
/// starts exactly on it) so finite differences see a smooth function.
inline void jitter_gdn(ParamStore& store, Rng& rng) {
  for (std::size_t i = 0; i < store.size(); ++i) {
    Param& p = store[i];
    const std::string& n = p.name;
    double lo = 0.0, hi = 0.0;
    if (n.find(".scale_") != std::string::npos) lo = 0.8, hi = 1.2;
    else if (n.find(".bias_") != std::string::npos) lo = 0.01, hi = 0.05;
    else if (n.find(".gamma") != std::string::npos) lo = 0.05, hi = 0.4;
    else if (n.find(".beta") != std::string::npos) lo = 0.7, hi = 1.3;
    else continue;
    for (double& v : p.value.data()) v = rng.uniform(lo, hi);
  }
}

}  // namespace slimcae::testing
