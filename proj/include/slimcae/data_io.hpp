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


// Image files, datasets, batch sampling and synthetic image generators.

#pragma once

#include <png.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "slimcae/binary_io.hpp"
#include "slimcae/rng.hpp"
#include "slimcae/tensor.hpp"

namespace slimcae {

namespace detail {

inline Tensor4 from_rgb8(const std::uint8_t* p, std::size_t h, std::size_t w) {
  Tensor4 t({1, 3, h, w});
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < 3; ++c) t.at(0, c, y, x) = p[(y * w + x) * 3 + c] / 255.0;
  return t;
}

inline std::vector<std::uint8_t> to_rgb8(const Tensor4& t) {
  const Shape s = t.shape();
  if (s.n != 1 || s.c != 3) throw DataError("only single RGB images can be saved, got " + s.str());
  std::vector<std::uint8_t> out(s.h * s.w * 3);
  for (std::size_t y = 0; y < s.h; ++y)
    for (std::size_t x = 0; x < s.w; ++x)
      for (std::size_t c = 0; c < 3; ++c) {
        const double v = std::clamp(t.at(0, c, y, x), 0.0, 1.0);
        out[(y * s.w + x) * 3 + c] = static_cast<std::uint8_t>(std::lround(v * 255.0));
      }
  return out;
}

inline bool has_suffix(const std::string& path, const std::string& ext) {
  std::string e = std::filesystem::path(path).extension().string();
  std::transform(e.begin(), e.end(), e.begin(), [](unsigned char c) { return std::tolower(c); });
  return e == ext;
}

/// Reads one whitespace-delimited PPM header token, skipping comments.
inline std::string ppm_token(std::istream& is) {
  std::string tok;
  int ch;
  while ((ch = is.get()) != EOF) {
    if (ch == '#') {
      while ((ch = is.get()) != EOF && ch != '\n') {
      }
      continue;
    }
    if (std::isspace(ch)) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(static_cast<char>(ch));
  }
  return tok;
}

}  // namespace detail

inline Tensor4 load_ppm(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open " + path);
  const std::string magic = detail::ppm_token(is);
  if (magic == "P5" || magic == "P2") throw FormatError(path + ": grayscale PNM is not supported");
  if (magic != "P6") throw FormatError(path + ": not a binary PPM (P6)");
  std::size_t w = 0, h = 0, maxval = 0;
  try {
    w = std::stoul(detail::ppm_token(is));
    h = std::stoul(detail::ppm_token(is));
    maxval = std::stoul(detail::ppm_token(is));
  } catch (const std::exception&) {
    throw FormatError(path + ": malformed PPM header");
  }
  if (maxval != 255) throw FormatError(path + ": only 8-bit PPM (maxval 255) is supported");
  if (w == 0 || h == 0) throw FormatError(path + ": empty image");
  std::vector<std::uint8_t> buf(w * h * 3);
  is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (static_cast<std::size_t>(is.gcount()) != buf.size()) throw FormatError(path + ": truncated PPM data");
  return detail::from_rgb8(buf.data(), h, w);
}

inline void save_ppm(const std::string& path, const Tensor4& x) {
  const auto rgb = detail::to_rgb8(x);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write " + path);
  os << "P6\n" << x.shape().w << " " << x.shape().h << "\n255\n";
  os.write(reinterpret_cast<const char*>(rgb.data()), static_cast<std::streamsize>(rgb.size()));
  if (!os) throw DataError("failed writing " + path);
}

inline Tensor4 load_png(const std::string& path) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str()))
    throw FormatError(path + ": " + img.message);
  const auto fmt = img.format;
  auto fail = [&](const std::string& why) {
    png_image_free(&img);
    throw FormatError(path + ": " + why);
  };
  if (!(fmt & PNG_FORMAT_FLAG_COLOR)) fail("grayscale PNG is not supported (8-bit RGB only)");
  if (fmt & PNG_FORMAT_FLAG_ALPHA) fail("PNG with alpha channel is not supported (8-bit RGB only)");
  if (fmt & PNG_FORMAT_FLAG_LINEAR) fail("16-bit PNG is not supported (8-bit RGB only)");
  img.format = PNG_FORMAT_RGB;
  std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, buf.data(), 0, nullptr)) fail(img.message);
  return detail::from_rgb8(buf.data(), img.height, img.width);
}

inline void save_png(const std::string& path, const Tensor4& x) {
  const auto rgb = detail::to_rgb8(x);
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(x.shape().w);
  img.height = static_cast<png_uint_32>(x.shape().h);
  img.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&img, path.c_str(), 0, rgb.data(), 0, nullptr))
    throw DataError(path + ": " + img.message);
}

/// Dispatches on extension: .png, or .ppm/.pnm.
inline Tensor4 load_image(const std::string& path) {
  if (detail::has_suffix(path, ".png")) return load_png(path);
  if (detail::has_suffix(path, ".ppm") || detail::has_suffix(path, ".pnm")) return load_ppm(path);
  throw FormatError(path + ": unsupported image format (expected .png or .ppm)");
}

inline void save_image(const std::string& path, const Tensor4& x) {
  if (detail::has_suffix(path, ".png")) return save_png(path, x);
  if (detail::has_suffix(path, ".ppm") || detail::has_suffix(path, ".pnm")) return save_ppm(path, x);
  throw FormatError(path + ": unsupported image format (expected .png or .ppm)");
}

// ---------------------------------------------------------------------------
// Datasets

class Dataset {
 public:
  Dataset() = default;
  Dataset(std::vector<Tensor4> images, std::vector<std::string> names = {})
      : images_(std::move(images)), names_(std::move(names)) {
    for (const auto& im : images_)
      if (im.shape().n != 1) throw DataError("dataset images must have batch size 1");
    if (names_.empty())
      for (std::size_t i = 0; i < images_.size(); ++i) names_.push_back("image" + std::to_string(i));
    if (names_.size() != images_.size()) throw DataError("dataset name count mismatch");
  }

  static Dataset load(const std::vector<std::string>& paths) {
    std::vector<Tensor4> ims;
    for (const auto& p : paths) ims.push_back(load_image(p));
    return Dataset(std::move(ims), paths);
  }

  std::size_t size() const { return images_.size(); }
  bool empty() const { return images_.empty(); }
  const Tensor4& operator[](std::size_t i) const { return images_.at(i); }
  const std::string& name(std::size_t i) const { return names_.at(i); }
  const std::vector<Tensor4>& images() const { return images_; }

  /// Images [begin, end) as a new dataset.
  Dataset subset(std::size_t begin, std::size_t end) const {
    end = std::min(end, size());
    return Dataset({images_.begin() + static_cast<std::ptrdiff_t>(begin), images_.begin() + static_cast<std::ptrdiff_t>(end)},
                   {names_.begin() + static_cast<std::ptrdiff_t>(begin), names_.begin() + static_cast<std::ptrdiff_t>(end)});
  }

 private:
  std::vector<Tensor4> images_;
  std::vector<std::string> names_;
};

struct SamplerOptions {
  std::size_t crop = 24;
  std::size_t batch_size = 8;
  std::uint64_t seed = 0;
};

struct Crop {
  std::size_t image = 0, y = 0, x = 0;
};

/// Deterministic random crops: batch `step` is a pure function of
/// (seed, step). Images smaller than the crop are skipped with a warning.
class BatchSampler {
 public:
  BatchSampler(const Dataset& data, SamplerOptions opt) : data_(&data), opt_(opt) {
    if (opt.crop == 0 || opt.batch_size == 0) throw ConfigError("crop and batch size must be positive");
    for (std::size_t i = 0; i < data.size(); ++i) {
      const Shape s = data[i].shape();
      if (s.h >= opt.crop && s.w >= opt.crop)
        eligible_.push_back(i);
      else
        std::cerr << "warning: skipping " << data.name(i) << " (" << s.h << "x" << s.w
                  << ") smaller than crop " << opt.crop << "\n";
    }
    if (eligible_.empty()) throw DataError("no image is at least as large as the crop size");
  }

  const SamplerOptions& options() const { return opt_; }

  std::vector<Crop> crops(std::uint64_t step) const {
    Rng rng(opt_.seed, RngStream::kBatch, step);
    std::vector<Crop> out;
    for (std::size_t b = 0; b < opt_.batch_size; ++b) {
      Crop c;
      c.image = eligible_[rng.below(eligible_.size())];
      const Shape s = (*data_)[c.image].shape();
      c.y = rng.below(s.h - opt_.crop + 1);
      c.x = rng.below(s.w - opt_.crop + 1);
      out.push_back(c);
    }
    return out;
  }

  Tensor4 batch(std::uint64_t step) const {
    const std::size_t k = opt_.crop;
    Tensor4 out({opt_.batch_size, 3, k, k});
    const auto cs = crops(step);
    for (std::size_t b = 0; b < cs.size(); ++b) {
      const Tensor4& im = (*data_)[cs[b].image];
      if (im.shape().c != 3) throw DataError("expected RGB images");
      for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t y = 0; y < k; ++y)
          for (std::size_t x = 0; x < k; ++x) out.at(b, c, y, x) = im.at(0, c, cs[b].y + y, cs[b].x + x);
    }
    return out;
  }

 private:
  const Dataset* data_;
  SamplerOptions opt_;
  std::vector<std::size_t> eligible_;
};

/// Splits paths into (train, validation) by a seeded hash of each path.
inline std::pair<std::vector<std::string>, std::vector<std::string>> split_paths(
    const std::vector<std::string>& paths, double val_fraction, std::uint64_t split_seed) {
  if (val_fraction < 0 || val_fraction > 1) throw ConfigError("validation fraction must be in [0, 1]");
  std::pair<std::vector<std::string>, std::vector<std::string>> out;
  for (const auto& p : paths) {
    const std::uint64_t h = fnv1a64(reinterpret_cast<const std::uint8_t*>(p.data()), p.size(),
                                    splitmix64(split_seed));
    const double u = static_cast<double>(h >> 11) * 0x1.0p-53;
    (u < val_fraction ? out.second : out.first).push_back(p);
  }
  return out;
}

/// Non-empty lines of a manifest file.
inline std::vector<std::string> read_manifest(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open manifest " + path);
  std::vector<std::string> out;
  std::string line;
  while (std::getline(is, line)) {
    while (!line.empty() && std::isspace(static_cast<unsigned char>(line.back()))) line.pop_back();
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

/// Sorted .png/.ppm files directly inside `dir`.
inline std::vector<std::string> list_images(const std::string& dir) {
  std::vector<std::string> out;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    const std::string p = e.path().string();
    if (e.is_regular_file() && (detail::has_suffix(p, ".png") || detail::has_suffix(p, ".ppm")))
      out.push_back(p);
  }
  std::sort(out.begin(), out.end());
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic images

enum class SyntheticKind { kGaussianBlobs, kGradients, kBandLimitedNoise, kConstant };

inline SyntheticKind parse_synthetic_kind(const std::string& s) {
  if (s == "gaussian_blobs") return SyntheticKind::kGaussianBlobs;
  if (s == "gradients") return SyntheticKind::kGradients;
  if (s == "band_limited_noise") return SyntheticKind::kBandLimitedNoise;
  if (s == "constant") return SyntheticKind::kConstant;
  throw ConfigError("unknown synthetic kind '" + s +
                    "' (gaussian_blobs, gradients, band_limited_noise, constant)");
}

inline const char* to_string(SyntheticKind k) {
  switch (k) {
    case SyntheticKind::kGaussianBlobs: return "gaussian_blobs";
    case SyntheticKind::kGradients: return "gradients";
    case SyntheticKind::kBandLimitedNoise: return "band_limited_noise";
    case SyntheticKind::kConstant: return "constant";
  }
  return "?";
}

struct SyntheticOptions {
  // Highest spatial frequency (cycles per pixel) of band_limited_noise.
  double cutoff = 0.15;
  std::size_t components = 12;
};

inline Tensor4 synthetic_image(SyntheticKind kind, std::size_t size, Rng& rng,
                               const SyntheticOptions& opt = {}) {
  Tensor4 t({1, 3, size, size});
  const double n = static_cast<double>(size);
  switch (kind) {
    case SyntheticKind::kConstant: {
      for (std::size_t c = 0; c < 3; ++c) {
        const double v = rng.uniform();
        for (std::size_t y = 0; y < size; ++y)
          for (std::size_t x = 0; x < size; ++x) t.at(0, c, y, x) = v;
      }
      break;
    }
    case SyntheticKind::kGradients: {
      const double theta = rng.uniform(0.0, 2 * std::numbers::pi);
      const double dx = std::cos(theta), dy = std::sin(theta);
      for (std::size_t c = 0; c < 3; ++c) {
        const double a = rng.uniform(), b = rng.uniform();
        for (std::size_t y = 0; y < size; ++y)
          for (std::size_t x = 0; x < size; ++x) {
            const double u = ((x + 0.5) / n - 0.5) * dx + ((y + 0.5) / n - 0.5) * dy;
            t.at(0, c, y, x) = std::clamp(a + (b - a) * (u + 0.5), 0.0, 1.0);
          }
      }
      break;
    }
    case SyntheticKind::kGaussianBlobs: {
      for (std::size_t c = 0; c < 3; ++c) {
        const double bg = rng.uniform(0.0, 0.3);
        for (std::size_t y = 0; y < size; ++y)
          for (std::size_t x = 0; x < size; ++x) t.at(0, c, y, x) = bg;
      }
      const std::size_t blobs = 2 + rng.below(4);
      for (std::size_t k = 0; k < blobs; ++k) {
        const double cy = rng.uniform(0, n), cx = rng.uniform(0, n);
        const double sigma = rng.uniform(n / 10, n / 4);
        double col[3];
        for (double& v : col) v = rng.uniform();
        for (std::size_t y = 0; y < size; ++y)
          for (std::size_t x = 0; x < size; ++x) {
            const double d2 = (y + 0.5 - cy) * (y + 0.5 - cy) + (x + 0.5 - cx) * (x + 0.5 - cx);
            const double a = std::exp(-d2 / (2 * sigma * sigma));
            for (std::size_t c = 0; c < 3; ++c)
              t.at(0, c, y, x) = t.at(0, c, y, x) * (1 - a) + col[c] * a;
          }
      }
      break;
    }
    case SyntheticKind::kBandLimitedNoise: {
      if (!(opt.cutoff > 0 && opt.cutoff <= 0.5)) throw ConfigError("cutoff must be in (0, 0.5]");
      const double amp = 0.5 / std::sqrt(static_cast<double>(opt.components));
      for (std::size_t c = 0; c < 3; ++c) {
        std::vector<std::array<double, 3>> waves;
        for (std::size_t i = 0; i < opt.components; ++i) {
          const double f = opt.cutoff * std::sqrt(rng.uniform());
          const double dir = rng.uniform(0.0, 2 * std::numbers::pi);
          waves.push_back({f * std::cos(dir), f * std::sin(dir), rng.uniform(0.0, 2 * std::numbers::pi)});
        }
        for (std::size_t y = 0; y < size; ++y)
          for (std::size_t x = 0; x < size; ++x) {
            double v = 0.5;
            for (const auto& wv : waves)
              v += amp * std::sin(2 * std::numbers::pi * (wv[0] * x + wv[1] * y) + wv[2]);
            t.at(0, c, y, x) = std::clamp(v, 0.0, 1.0);
          }
      }
      break;
    }
  }
  return t;
}

/// n reproducible images; image i depends only on (kind, seed, i).
inline Dataset make_synthetic(SyntheticKind kind, std::size_t n, std::size_t size,
                              std::uint64_t seed, const SyntheticOptions& opt = {}) {
  if (size == 0) throw ConfigError("synthetic image size must be positive");
  std::vector<Tensor4> ims;
  std::vector<std::string> names;
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng(seed, RngStream::kSynthetic, i);
    ims.push_back(synthetic_image(kind, size, rng, opt));
    names.push_back(std::string(to_string(kind)) + "_" + std::to_string(i));
  }
  return Dataset(std::move(ims), std::move(names));
}

}  // namespace slimcae
