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


// Range coder over 32-bit state with carry propagation.
//
// The encoder keeps a 33-bit `low` and a delayed byte (`cache`) plus a run
// of pending 0xFF bytes so a carry can ripple into bytes not yet written.
// The first byte the classic construction emits is always zero and is
// dropped, so a stream carries (renormalizations + 4) bytes and an empty
// stream is exactly 4 bytes.

#pragma once

#include <algorithm>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "slimcae/binary_io.hpp"
#include "slimcae/entropy_model.hpp"
#include "slimcae/tensor.hpp"

namespace slimcae {

inline constexpr std::uint32_t kRangeTop = 1u << 24;

class RangeEncoder {
 public:
  explicit RangeEncoder(int precision = 16) : precision_(precision) {
    if (precision < 1 || precision > 16) throw ConfigError("range coder precision must be in [1, 16]");
  }

  void encode(std::uint32_t cum, std::uint32_t freq) {
    if (freq == 0) throw InternalError("range coder: zero-mass symbol");
    if (cum + freq > (1u << precision_)) throw InternalError("range coder: interval outside table");
    const std::uint32_t r = range_ >> precision_;
    low_ += static_cast<std::uint64_t>(r) * cum;
    range_ = r * freq;
    while (range_ < kRangeTop) {
      range_ <<= 8;
      shift_low();
    }
  }

  void encode_symbol(const CdfTable& t, std::size_t s) { encode(t.cdf.at(s), t.freq(s)); }

  Bytes finish() {
    for (int i = 0; i < 5; ++i) shift_low();
    Bytes out(out_.begin() + 1, out_.end());
    out_.clear();
    return out;
  }

 private:
  void shift_low() {
    if (low_ < 0xFF000000ull || low_ >= (1ull << 32)) {
      const auto carry = static_cast<std::uint8_t>(low_ >> 32);
      std::uint8_t b = cache_;
      do {
        out_.push_back(static_cast<std::uint8_t>(b + carry));
        b = 0xFF;
      } while (--pending_ != 0);
      cache_ = static_cast<std::uint8_t>(low_ >> 24);
    }
    ++pending_;
    low_ = (low_ & 0x00FFFFFFull) << 8;
  }

  int precision_;
  std::uint64_t low_ = 0;
  std::uint32_t range_ = 0xFFFFFFFFu;
  std::uint8_t cache_ = 0;
  std::uint64_t pending_ = 1;
  Bytes out_;
};

class RangeDecoder {
 public:
  RangeDecoder(std::span<const std::uint8_t> data, int precision = 16)
      : data_(data), precision_(precision) {
    if (data.size() < 4) throw FormatError("range coded payload shorter than 4 bytes");
    for (int i = 0; i < 4; ++i) code_ = (code_ << 8) | next();
  }

  std::size_t decode_symbol(const CdfTable& t) {
    const std::uint32_t r = range_ >> precision_;
    const std::uint32_t v = code_ / r;
    if (v >= (1u << precision_)) throw FormatError("corrupt range coded payload");
    const auto it = std::upper_bound(t.cdf.begin() + 1, t.cdf.end(), v);
    const std::size_t s = static_cast<std::size_t>(it - t.cdf.begin()) - 1;
    if (s >= t.symbols()) throw FormatError("corrupt range coded payload");
    code_ -= r * t.cdf[s];
    range_ = r * t.freq(s);
    while (range_ < kRangeTop) {
      code_ = (code_ << 8) | next();
      range_ <<= 8;
    }
    return s;
  }

  /// Terminator check: a well-formed payload is consumed exactly.
  void finish() const {
    if (pos_ != data_.size())
      throw FormatError("range coded payload has " + std::to_string(data_.size() - pos_) +
                        " unread bytes");
  }

  std::size_t consumed() const { return pos_; }

 private:
  std::uint32_t next() {
    if (pos_ >= data_.size()) throw FormatError("range coded payload truncated");
    return data_[pos_++];
  }

  std::span<const std::uint8_t> data_;
  int precision_;
  std::size_t pos_ = 0;
  std::uint32_t code_ = 0;
  std::uint32_t range_ = 0xFFFFFFFFu;
};

/// Symbols with the table index used for each.
struct SymbolStream {
  std::vector<int> symbols;
  std::vector<std::uint32_t> channels;
};

inline Bytes range_encode(const SymbolStream& s, const CdfTables& tables) {
  if (s.symbols.size() != s.channels.size())
    throw ConfigError("symbol stream: symbol and channel counts differ");
  RangeEncoder enc(tables.precision);
  for (std::size_t i = 0; i < s.symbols.size(); ++i) {
    const int v = s.symbols[i];
    if (v < -tables.support || v >= tables.support)
      throw InternalError("symbol " + std::to_string(v) + " outside the coder support");
    enc.encode_symbol(tables.channels.at(s.channels[i]),
                      static_cast<std::size_t>(v + tables.support));
  }
  return enc.finish();
}

inline SymbolStream range_decode(std::span<const std::uint8_t> bytes, const CdfTables& tables,
                                 const std::vector<std::uint32_t>& channel_map) {
  RangeDecoder dec(bytes, tables.precision);
  SymbolStream out;
  out.channels = channel_map;
  out.symbols.reserve(channel_map.size());
  for (std::uint32_t c : channel_map) {
    if (c >= tables.channels.size()) throw ConfigError("channel map exceeds table count");
    out.symbols.push_back(static_cast<int>(dec.decode_symbol(tables.channels[c])) - tables.support);
  }
  dec.finish();
  return out;
}

/// -sum log2 (freq / total): the codelength an ideal coder would need.
inline double ideal_codelength_bits(const SymbolStream& s, const CdfTables& tables) {
  double bits = 0.0;
  for (std::size_t i = 0; i < s.symbols.size(); ++i) {
    const auto& t = tables.channels.at(s.channels[i]);
    bits -= std::log2(static_cast<double>(t.freq(static_cast<std::size_t>(
                          s.symbols[i] + tables.support))) /
                      tables.total());
  }
  return bits;
}

}  // namespace slimcae
