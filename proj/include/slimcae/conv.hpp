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

// Raw convolution kernels. Convolution is cross-correlation with zero
// padding; the transposed convolution is its exact adjoint.

#pragma once

#include <cstddef>
#include <string>

#include "slimcae/tensor.hpp"

namespace slimcae {

struct ConvGeometry {
  std::size_t stride = 1;
  std::size_t pad = 0;
};

namespace detail {

// Range [lo, hi) of output indices o with 0 <= o*stride - pad + offset < in_len.
inline void valid_range(std::ptrdiff_t in_len, std::ptrdiff_t out_len, std::ptrdiff_t stride,
                        std::ptrdiff_t pad, std::ptrdiff_t offset, std::ptrdiff_t& lo,
                        std::ptrdiff_t& hi) {
  std::ptrdiff_t a = pad - offset;  // need o*stride >= a
  lo = a <= 0 ? 0 : (a + stride - 1) / stride;
  std::ptrdiff_t b = in_len - 1 + pad - offset;  // need o*stride <= b
  hi = b < 0 ? 0 : b / stride + 1;
  if (hi > out_len) hi = out_len;
  if (lo > hi) lo = hi;
}

inline std::string dims(const char* what, std::size_t got, std::size_t want) {
  return std::string(what) + " is " + std::to_string(got) + ", expected " + std::to_string(want);
}

}  // namespace detail

inline std::size_t conv_out_len(std::size_t in, std::size_t k, const ConvGeometry& g) {
  if (g.stride == 0) throw ConfigError("conv2d: stride must be >= 1");
  if (in + 2 * g.pad < k)
    throw ConfigError("conv2d: kernel extent " + std::to_string(k) + " exceeds padded input " +
                      std::to_string(in + 2 * g.pad));
  return (in + 2 * g.pad - k) / g.stride + 1;
}

inline std::size_t deconv_out_len(std::size_t in, std::size_t k, const ConvGeometry& g,
                                  std::size_t out_pad) {
  if (g.stride == 0) throw ConfigError("deconv2d: stride must be >= 1");
  if (out_pad >= g.stride) throw ConfigError("deconv2d: output padding must be < stride");
  std::ptrdiff_t len = static_cast<std::ptrdiff_t>((in - 1) * g.stride + k + out_pad) -
                       static_cast<std::ptrdiff_t>(2 * g.pad);
  if (in == 0 || len <= 0) throw ConfigError("deconv2d: empty output");
  return static_cast<std::size_t>(len);
}

/// y = conv(x, kernel) + bias. kernel is (c_out, c_in, kh, kw); bias may be
/// empty or have c_out entries.
inline Tensor4 conv2d_forward(const Tensor4& x, const Tensor4& kernel, const Tensor4* bias,
                              const ConvGeometry& g) {
  const Shape xs = x.shape(), ks = kernel.shape();
  if (xs.c != ks.c) throw ConfigError("conv2d: input channels " + detail::dims("x.c", xs.c, ks.c));
  if (bias && !bias->empty() && bias->size() != ks.n)
    throw ConfigError("conv2d: " + detail::dims("bias length", bias->size(), ks.n));
  const std::size_t oh = conv_out_len(xs.h, ks.h, g), ow = conv_out_len(xs.w, ks.w, g);
  Tensor4 y({xs.n, ks.n, oh, ow});
  const auto s = static_cast<std::ptrdiff_t>(g.stride), p = static_cast<std::ptrdiff_t>(g.pad);
  for (std::size_t n = 0; n < xs.n; ++n) {
    for (std::size_t co = 0; co < ks.n; ++co) {
      double* yp = &y.at(n, co, 0, 0);
      if (bias && !bias->empty())
        for (std::size_t i = 0; i < oh * ow; ++i) yp[i] = (*bias)[co];
      for (std::size_t ci = 0; ci < ks.c; ++ci) {
        const double* xp = &x.at(n, ci, 0, 0);
        for (std::size_t ki = 0; ki < ks.h; ++ki) {
          std::ptrdiff_t h0, h1;
          detail::valid_range(xs.h, oh, s, p, ki, h0, h1);
          for (std::size_t kj = 0; kj < ks.w; ++kj) {
            const double kv = kernel.at(co, ci, ki, kj);
            std::ptrdiff_t w0, w1;
            detail::valid_range(xs.w, ow, s, p, kj, w0, w1);
            for (std::ptrdiff_t a = h0; a < h1; ++a) {
              const double* xr = xp + (a * s - p + static_cast<std::ptrdiff_t>(ki)) * xs.w;
              double* yr = yp + a * ow;
              for (std::ptrdiff_t b = w0; b < w1; ++b)
                yr[b] += kv * xr[b * s - p + static_cast<std::ptrdiff_t>(kj)];
            }
          }
        }
      }
    }
  }
  return y;
}

/// Adjoint of conv2d_forward (without bias): maps gy of shape
/// (n, c_out, oh, ow) back onto an input of shape `in_shape`.
inline Tensor4 conv2d_adjoint(const Tensor4& gy, const Tensor4& kernel, const ConvGeometry& g,
                              Shape in_shape) {
  const Shape ys = gy.shape(), ks = kernel.shape();
  if (ys.c != ks.n) throw ConfigError("conv2d adjoint: " + detail::dims("channels", ys.c, ks.n));
  if (in_shape.c != ks.c)
    throw ConfigError("conv2d adjoint: " + detail::dims("output channels", in_shape.c, ks.c));
  Tensor4 gx({ys.n, ks.c, in_shape.h, in_shape.w});
  const auto s = static_cast<std::ptrdiff_t>(g.stride), p = static_cast<std::ptrdiff_t>(g.pad);
  for (std::size_t n = 0; n < ys.n; ++n) {
    for (std::size_t co = 0; co < ks.n; ++co) {
      const double* yp = &gy.at(n, co, 0, 0);
      for (std::size_t ci = 0; ci < ks.c; ++ci) {
        double* xp = &gx.at(n, ci, 0, 0);
        for (std::size_t ki = 0; ki < ks.h; ++ki) {
          std::ptrdiff_t h0, h1;
          detail::valid_range(in_shape.h, ys.h, s, p, ki, h0, h1);
          for (std::size_t kj = 0; kj < ks.w; ++kj) {
            const double kv = kernel.at(co, ci, ki, kj);
            std::ptrdiff_t w0, w1;
            detail::valid_range(in_shape.w, ys.w, s, p, kj, w0, w1);
            for (std::ptrdiff_t a = h0; a < h1; ++a) {
              double* xr = xp + (a * s - p + static_cast<std::ptrdiff_t>(ki)) * in_shape.w;
              const double* yr = yp + a * ys.w;
              for (std::ptrdiff_t b = w0; b < w1; ++b)
                xr[b * s - p + static_cast<std::ptrdiff_t>(kj)] += kv * yr[b];
            }
          }
        }
      }
    }
  }
  return gx;
}

/// Gradient of <conv2d(x, K), gy> with respect to K.
inline Tensor4 conv2d_kernel_grad(const Tensor4& x, const Tensor4& gy, Shape kshape,
                                  const ConvGeometry& g) {
  const Shape xs = x.shape(), ys = gy.shape();
  if (xs.n != ys.n || xs.c != kshape.c || ys.c != kshape.n)
    throw InternalError("conv2d kernel grad: inconsistent shapes " + xs.str() + " " + ys.str() +
                        " " + kshape.str());
  Tensor4 gk(kshape);
  const auto s = static_cast<std::ptrdiff_t>(g.stride), p = static_cast<std::ptrdiff_t>(g.pad);
  for (std::size_t n = 0; n < xs.n; ++n) {
    for (std::size_t co = 0; co < kshape.n; ++co) {
      const double* yp = &gy.at(n, co, 0, 0);
      for (std::size_t ci = 0; ci < kshape.c; ++ci) {
        const double* xp = &x.at(n, ci, 0, 0);
        for (std::size_t ki = 0; ki < kshape.h; ++ki) {
          std::ptrdiff_t h0, h1;
          detail::valid_range(xs.h, ys.h, s, p, ki, h0, h1);
          for (std::size_t kj = 0; kj < kshape.w; ++kj) {
            std::ptrdiff_t w0, w1;
            detail::valid_range(xs.w, ys.w, s, p, kj, w0, w1);
            double acc = 0.0;
            for (std::ptrdiff_t a = h0; a < h1; ++a) {
              const double* xr = xp + (a * s - p + static_cast<std::ptrdiff_t>(ki)) * xs.w;
              const double* yr = yp + a * ys.w;
              for (std::ptrdiff_t b = w0; b < w1; ++b)
                acc += yr[b] * xr[b * s - p + static_cast<std::ptrdiff_t>(kj)];
            }
            gk.at(co, ci, ki, kj) += acc;
          }
        }
      }
    }
  }
  return gk;
}

/// Per-channel sum over (n, h, w); the bias gradient.
inline Tensor4 channel_sums(const Tensor4& gy) {
  const Shape s = gy.shape();
  Tensor4 gb = Tensor4::vector(s.c);
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t c = 0; c < s.c; ++c) {
      const double* p = &gy.at(n, c, 0, 0);
      double acc = 0.0;
      for (std::size_t i = 0; i < s.h * s.w; ++i) acc += p[i];
      gb[c] += acc;
    }
  return gb;
}

/// Transposed convolution with kernel (c_in, c_out, kh, kw): the adjoint
/// of conv2d with the same kernel, plus a per-output-channel bias.
inline Tensor4 deconv2d_forward(const Tensor4& x, const Tensor4& kernel, const Tensor4* bias,
                                const ConvGeometry& g, std::size_t out_pad = 0) {
  const Shape xs = x.shape(), ks = kernel.shape();
  if (xs.c != ks.n) throw ConfigError("deconv2d: input channels " + detail::dims("x.c", xs.c, ks.n));
  if (bias && !bias->empty() && bias->size() != ks.c)
    throw ConfigError("deconv2d: " + detail::dims("bias length", bias->size(), ks.c));
  const Shape out{xs.n, ks.c, deconv_out_len(xs.h, ks.h, g, out_pad),
                  deconv_out_len(xs.w, ks.w, g, out_pad)};
  Tensor4 y = conv2d_adjoint(x, kernel, g, out);
  if (bias && !bias->empty()) {
    for (std::size_t n = 0; n < out.n; ++n)
      for (std::size_t c = 0; c < out.c; ++c) {
        double* p = &y.at(n, c, 0, 0);
        for (std::size_t i = 0; i < out.h * out.w; ++i) p[i] += (*bias)[c];
      }
  }
  return y;
}

}  // namespace slimcae
