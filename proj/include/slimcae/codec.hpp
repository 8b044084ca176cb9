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


// Bitstream container and image encode/decode pipelines.
//
// Layout (little-endian):
//   "SCAE" | version u8 | model hash u64 | level u8 (1-based)
//   | height u32 | width u32 | pad_h u8 | pad_w u8 | flags u8
//   | [scalable: G u8, G x u32 group payload lengths]
//   | crc32 of the payload u32 | payload

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "slimcae/binary_io.hpp"
#include "slimcae/model.hpp"
#include "slimcae/range_coder.hpp"

namespace slimcae {

inline constexpr std::uint8_t kBitstreamVersion = 1;
inline constexpr std::uint8_t kFlagScalable = 1;
inline constexpr int kCoderPrecision = 16;

struct BitstreamHeader {
  std::uint8_t version = kBitstreamVersion;
  std::uint64_t model_hash = 0;
  std::uint8_t level = 1;  // 1-based
  std::uint32_t height = 0;
  std::uint32_t width = 0;
  std::uint8_t pad_h = 0;
  std::uint8_t pad_w = 0;
  std::uint8_t flags = 0;
  std::vector<std::uint32_t> group_lengths;  // scalable only

  bool scalable() const { return flags & kFlagScalable; }
  bool operator==(const BitstreamHeader&) const = default;

  void write(ByteWriter& w) const {
    w.bytes("SCAE", 4);
    w.u8(version);
    w.u64(model_hash);
    w.u8(level);
    w.u32(height);
    w.u32(width);
    w.u8(pad_h);
    w.u8(pad_w);
    w.u8(flags);
    if (scalable()) {
      if (group_lengths.empty() || group_lengths.size() > 255)
        throw ConfigError("scalable header needs 1..255 groups");
      w.u8(static_cast<std::uint8_t>(group_lengths.size()));
      for (auto n : group_lengths) w.u32(n);
    } else if (!group_lengths.empty()) {
      throw ConfigError("group lengths given for a non-scalable stream");
    }
  }

  static BitstreamHeader read(ByteReader& r) {
    char magic[4];
    r.bytes(magic, 4);
    if (std::string(magic, 4) != "SCAE") throw FormatError("not a SlimCAE bitstream (bad magic)");
    BitstreamHeader h;
    h.version = r.u8();
    if (h.version != kBitstreamVersion)
      throw FormatError("unsupported bitstream version " + std::to_string(h.version));
    h.model_hash = r.u64();
    h.level = r.u8();
    h.height = r.u32();
    h.width = r.u32();
    h.pad_h = r.u8();
    h.pad_w = r.u8();
    h.flags = r.u8();
    if (h.flags & ~kFlagScalable) throw FormatError("unknown bitstream flags");
    if (h.level == 0) throw FormatError("bitstream level must be >= 1");
    if (h.scalable()) {
      const std::uint8_t g = r.u8();
      if (g == 0) throw FormatError("scalable bitstream with zero groups");
      for (std::uint8_t i = 0; i < g; ++i) h.group_lengths.push_back(r.u32());
    }
    return h;
  }
};

struct Bitstream {
  BitstreamHeader header;
  Bytes payload;

  std::size_t payload_bits() const { return 8 * payload.size(); }

  /// Payload bits per original pixel; header and checksum excluded.
  double bpp() const {
    return static_cast<double>(payload_bits()) /
           (static_cast<double>(header.height) * static_cast<double>(header.width));
  }

  Bytes serialize() const {
    ByteWriter w;
    header.write(w);
    w.u32(checksum32(payload.data(), payload.size()));
    w.bytes(payload.data(), payload.size());
    return w.take();
  }

  static Bitstream parse(const Bytes& bytes) {
    ByteReader r(bytes);
    Bitstream b;
    b.header = BitstreamHeader::read(r);
    const std::uint32_t crc = r.u32();
    b.payload.assign(r.cursor(), r.cursor() + r.remaining());
    if (b.header.scalable()) {
      // Streams cut after a group boundary stay decodable up to that group;
      // the checksum covers only the complete payload.
      std::uint64_t prefix = 0;
      bool boundary = false;
      for (auto n : b.header.group_lengths) {
        prefix += n;
        if (prefix == b.payload.size()) boundary = true;
      }
      if (!boundary) throw FormatError("payload size does not end on a channel group boundary");
      if (prefix != b.payload.size()) return b;
    }
    if (checksum32(b.payload.data(), b.payload.size()) != crc)
      throw FormatError("bitstream checksum mismatch (corrupt payload)");
    return b;
  }
};

inline std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) s[static_cast<std::size_t>(i)] = digits[v & 0xF];
  return s;
}

namespace detail {

/// Channel-major, raster-within-channel serialization of channels [c0, c1)
/// of a single-image latent; channel indices are relative to c0.
inline SymbolStream serialize_channels(const Tensor4& q, std::size_t c0, std::size_t c1) {
  const Shape s = q.shape();
  SymbolStream out;
  out.symbols.reserve((c1 - c0) * s.h * s.w);
  for (std::size_t c = c0; c < c1; ++c)
    for (std::size_t h = 0; h < s.h; ++h)
      for (std::size_t w = 0; w < s.w; ++w) {
        out.symbols.push_back(static_cast<int>(q.at(0, c, h, w)));
        out.channels.push_back(static_cast<std::uint32_t>(c - c0));
      }
  return out;
}

inline std::vector<std::uint32_t> channel_map(std::size_t channels, std::size_t positions) {
  std::vector<std::uint32_t> m;
  m.reserve(channels * positions);
  for (std::size_t c = 0; c < channels; ++c) m.insert(m.end(), positions, static_cast<std::uint32_t>(c));
  return m;
}

inline CdfTables restrict_tables(CdfTables t, std::size_t c0, std::size_t c1) {
  t.channels = std::vector<CdfTable>(t.channels.begin() + static_cast<std::ptrdiff_t>(c0),
                                     t.channels.begin() + static_cast<std::ptrdiff_t>(c1));
  return t;
}

// Rejects headers claiming more symbols than the payload could hold even if
// every symbol took the cheapest code in `t`; guards allocations on corrupt input.
inline void check_symbol_budget(std::size_t symbols, std::size_t payload_bytes, const CdfTables& t) {
  std::uint32_t max_freq = 1;
  for (const auto& ch : t.channels)
    for (std::size_t s = 0; s < ch.symbols(); ++s) max_freq = std::max(max_freq, ch.freq(s));
  const double min_bits = std::log2(static_cast<double>(t.total()) / max_freq);
  const double budget = (8.0 * static_cast<double>(payload_bytes) + 64.0) / min_bits;
  if (static_cast<double>(symbols) > budget)
    throw FormatError("bitstream dimensions need " + std::to_string(symbols) +
                      " latent symbols, more than the payload can hold");
}

inline void fill_channels(Tensor4& q, const SymbolStream& s, std::size_t c0) {
  const Shape sh = q.shape();
  std::size_t i = 0;
  const std::size_t hw = sh.h * sh.w;
  for (std::size_t k = 0; k < s.symbols.size(); ++k, ++i)
    q.at(0, c0 + i / hw, (i % hw) / sh.w, i % sh.w) = s.symbols[k];
}

}  // namespace detail

struct EncodeResult {
  Bitstream stream;
  Tensor4 symbols;  // quantized latent at the coded level
  ClampStats clamp;
  bool clamp_warning = false;
};

/// Pads, encodes at `level` (0-based), quantizes and range codes one image
/// (n = 1). Scalable mode requires the top level and writes one
/// independently decodable payload per channel group.
inline EncodeResult encode_image(const Tensor4& x, const SlimCAE& model, std::size_t level,
                                 bool scalable = false) {
  const Shape s = x.shape();
  if (s.n != 1) throw ConfigError("encode_image expects a single image");
  if (s.c != model.config().input_channels)
    throw DataError("image has " + std::to_string(s.c) + " channels, model expects " +
                    std::to_string(model.config().input_channels));
  model.config().widths.check(level);
  if (scalable && level + 1 != model.levels())
    throw ConfigError("scalable encoding requires the top width level");
  if (s.h > 0xFFFFFFFFull || s.w > 0xFFFFFFFFull) throw DataError("image dimensions exceed u32");
  const std::size_t f = model.config().downsampling();
  const Tensor4 xp = pad_to_multiple(x, f);
  if (xp.shape().h - s.h > 255 || xp.shape().w - s.w > 255)
    throw ConfigError("padding does not fit the header");

  auto q = quantize(model.encode_latent(xp, level), model.config().support);
  EncodeResult res;
  BitstreamHeader& h = res.stream.header;
  h.model_hash = model.model_hash();
  h.level = static_cast<std::uint8_t>(level + 1);
  h.height = static_cast<std::uint32_t>(s.h);
  h.width = static_cast<std::uint32_t>(s.w);
  h.pad_h = static_cast<std::uint8_t>(xp.shape().h - s.h);
  h.pad_w = static_cast<std::uint8_t>(xp.shape().w - s.w);
  if (!scalable) {
    const auto tables = model.entropy().cdf_tables(level, kCoderPrecision);
    res.stream.payload = range_encode(detail::serialize_channels(q.symbols, 0, q.symbols.shape().c), tables);
  } else {
    h.flags = kFlagScalable;
    const auto& ws = model.config().widths;
    const auto top = model.entropy().cdf_tables(level, kCoderPrecision);
    for (std::size_t g = 0; g < model.levels(); ++g) {
      const std::size_t c0 = g ? ws[g - 1] : 0, c1 = ws[g];
      const auto tables = detail::restrict_tables(top, c0, c1);
      const Bytes part = range_encode(detail::serialize_channels(q.symbols, c0, c1), tables);
      h.group_lengths.push_back(static_cast<std::uint32_t>(part.size()));
      res.stream.payload.insert(res.stream.payload.end(), part.begin(), part.end());
    }
  }
  res.symbols = std::move(q.symbols);
  res.clamp = q.clamp;
  res.clamp_warning = q.clamp_warning;
  return res;
}

struct DecodeResult {
  Tensor4 image;    // cropped, clipped to [0, 1]
  Tensor4 symbols;  // latent that was decoded
  std::size_t level = 0;  // 0-based decoder level used
  std::size_t payload_bytes = 0;  // bytes actually decoded
};

/// Decodes a stream. `levels` (1-based) selects progressive decoding of the
/// first l groups of a scalable stream; it must be absent otherwise.
inline DecodeResult decode_image(const Bitstream& b, const SlimCAE& model,
                                 std::optional<std::size_t> levels = std::nullopt) {
  const BitstreamHeader& h = b.header;
  if (h.model_hash != model.model_hash())
    throw FormatError("bitstream was produced with a different model checkpoint (stream " +
                      hex64(h.model_hash) + ", checkpoint " + hex64(model.model_hash()) + ")");
  if (h.level > model.levels())
    throw FormatError("bitstream level " + std::to_string(h.level) + " exceeds model levels");
  const std::size_t f = model.config().downsampling();
  const std::size_t ph = h.height + h.pad_h, pw = h.width + h.pad_w;
  if (h.height == 0 || h.width == 0 || ph % f || pw % f)
    throw FormatError("bitstream dimensions inconsistent with the model");
  const std::size_t lh = ph / f, lw = pw / f;
  const auto& ws = model.config().widths;

  DecodeResult out;
  if (!h.scalable()) {
    if (levels) throw ConfigError("progressive decoding needs a scalable bitstream");
    out.level = h.level - 1u;
    const std::size_t c = ws[out.level];
    const auto tables = model.entropy().cdf_tables(out.level, kCoderPrecision);
    detail::check_symbol_budget(c * lh * lw, b.payload.size(), tables);
    SymbolStream s;
    try {
      s = range_decode(b.payload, tables, detail::channel_map(c, lh * lw));
    } catch (const FormatError& e) {
      throw FormatError(std::string("payload does not decode as ") + std::to_string(c) +
                        " latent channels: " + e.what());
    }
    out.symbols = Tensor4({1, c, lh, lw});
    detail::fill_channels(out.symbols, s, 0);
    out.payload_bytes = b.payload.size();
  } else {
    if (h.level != model.levels() || h.group_lengths.size() != model.levels())
      throw FormatError("scalable bitstream group count does not match the model");
    const std::size_t l = levels.value_or(h.group_lengths.size());
    if (l < 1 || l > h.group_lengths.size())
      throw ConfigError("progressive level must be in 1.." + std::to_string(h.group_lengths.size()));
    out.level = l - 1;
    const auto top = model.entropy().cdf_tables(model.levels() - 1, kCoderPrecision);
    detail::check_symbol_budget(ws[out.level] * lh * lw, b.payload.size(), top);
    out.symbols = Tensor4({1, ws[out.level], lh, lw});
    std::size_t offset = 0;
    for (std::size_t g = 0; g < l; ++g) {
      const std::size_t c0 = g ? ws[g - 1] : 0, c1 = ws[g];
      const std::size_t len = h.group_lengths[g];
      if (offset + len > b.payload.size()) throw FormatError("missing channel group payload");
      const auto tables = detail::restrict_tables(top, c0, c1);
      const auto s = range_decode(std::span(b.payload).subspan(offset, len), tables,
                                  detail::channel_map(c1 - c0, lh * lw));
      detail::fill_channels(out.symbols, s, c0);
      offset += len;
    }
    out.payload_bytes = offset;
  }
  out.image = clip01(crop(model.decode_latent(out.symbols, out.level), h.height, h.width));
  return out;
}

}  // namespace slimcae
