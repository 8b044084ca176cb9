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

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace slimcae {

// Error hierarchy. The CLI maps these onto exit codes
// (ConfigError -> 1, DataError/FormatError -> 2, NumericError -> 3).
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ConfigError : Error {
  using Error::Error;
};
struct DataError : Error {
  using Error::Error;
};
struct FormatError : DataError {
  using DataError::DataError;
};
struct NumericError : Error {
  using Error::Error;
};
struct InternalError : Error {
  using Error::Error;
};

/// Shape of a 4-D tensor in (batch, channel, height, width) order.
struct Shape {
  std::size_t n = 0, c = 0, h = 0, w = 0;

  constexpr std::size_t size() const { return n * c * h * w; }
  constexpr bool operator==(const Shape&) const = default;

  std::string str() const {
    std::ostringstream os;
    os << "(" << n << "," << c << "," << h << "," << w << ")";
    return os.str();
  }
};

/// Dense real-valued 4-D array stored row-major (w fastest).
class Tensor4 {
 public:
  Tensor4() = default;
  explicit Tensor4(Shape s, double fill = 0.0) : shape_(s), data_(s.size(), fill) {}
  Tensor4(Shape s, std::vector<double> data) : shape_(s), data_(std::move(data)) {
    if (data_.size() != shape_.size())
      throw ConfigError("tensor data length " + std::to_string(data_.size()) +
                        " does not match shape " + shape_.str());
  }

  static Tensor4 scalar(double v) { return Tensor4({1, 1, 1, 1}, v); }
  static Tensor4 vector(std::size_t len, double fill = 0.0) {
    return Tensor4({len, 1, 1, 1}, fill);
  }

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::vector<double>& storage() { return data_; }
  const std::vector<double>& storage() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::size_t index(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
    return ((n * shape_.c + c) * shape_.h + h) * shape_.w + w;
  }
  double& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
    return data_[index(n, c, h, w)];
  }
  const double& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
    return data_[index(n, c, h, w)];
  }

  double item() const {
    if (data_.size() != 1) throw InternalError("item() on non-scalar tensor " + shape_.str());
    return data_[0];
  }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
  }

  bool operator==(const Tensor4& o) const { return shape_ == o.shape_ && data_ == o.data_; }

 private:
  Shape shape_{};
  std::vector<double> data_;
};

inline double sum(const Tensor4& t) {
  double s = 0.0;
  for (double v : t.data()) s += v;
  return s;
}

inline double dot(const Tensor4& a, const Tensor4& b) {
  if (a.shape() != b.shape())
    throw ConfigError("dot: shape mismatch " + a.shape().str() + " vs " + b.shape().str());
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double max_abs_diff(const Tensor4& a, const Tensor4& b) {
  if (a.shape() != b.shape())
    throw ConfigError("max_abs_diff: shape mismatch " + a.shape().str() + " vs " + b.shape().str());
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

/// Copies the leading block [0:s.n, 0:s.c, 0:s.h, 0:s.w] of `t`.
inline Tensor4 leading_slice(const Tensor4& t, Shape s) {
  const Shape& f = t.shape();
  if (s.n > f.n || s.c > f.c || s.h > f.h || s.w > f.w)
    throw ConfigError("slice " + s.str() + " exceeds tensor " + f.str());
  Tensor4 out(s);
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t c = 0; c < s.c; ++c)
      for (std::size_t h = 0; h < s.h; ++h)
        for (std::size_t w = 0; w < s.w; ++w) out.at(n, c, h, w) = t.at(n, c, h, w);
  return out;
}

/// Adds `src` into the leading block of `dst`.
inline void add_into_leading(Tensor4& dst, const Tensor4& src) {
  const Shape& s = src.shape();
  const Shape& f = dst.shape();
  if (s.n > f.n || s.c > f.c || s.h > f.h || s.w > f.w)
    throw InternalError("scatter " + s.str() + " exceeds tensor " + f.str());
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t c = 0; c < s.c; ++c)
      for (std::size_t h = 0; h < s.h; ++h)
        for (std::size_t w = 0; w < s.w; ++w) dst.at(n, c, h, w) += src.at(n, c, h, w);
}

}  // namespace slimcae
