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


#include <gtest/gtest.h>
#include <png.h>

#include <filesystem>
#include <fstream>
#include <map>

#include "slimcae/data_io.hpp"

using namespace slimcae;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("slimcae_io_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) + "_" +
            ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

Tensor4 noise_image(std::size_t h, std::size_t w, std::uint64_t seed) {
  Rng rng(seed);
  Tensor4 t({1, 3, h, w});
  for (double& v : t.data()) v = rng.uniform();
  return t;
}

void write_png(const std::string& path, std::uint32_t format, std::size_t h, std::size_t w) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(w);
  img.height = static_cast<png_uint_32>(h);
  img.format = format;
  std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(img), 128);
  ASSERT_TRUE(png_image_write_to_file(&img, path.c_str(), 0, buf.data(), 0, nullptr));
}

}  // namespace

TEST(Ppm, WhiteImageDecodesToOnes) {
  TempDir d;
  const std::string p = d.file("white.ppm");
  {
    std::ofstream os(p, std::ios::binary);
    os << "P6\n# comment\n2 3\n255\n";
    for (int i = 0; i < 18; ++i) os.put(static_cast<char>(255));
  }
  const Tensor4 t = load_image(p);
  EXPECT_EQ(t.shape(), (Shape{1, 3, 3, 2}));
  for (double v : t.data()) EXPECT_EQ(v, 1.0);
}

TEST(Ppm, PixelOrderIsInterleavedRowMajor) {
  TempDir d;
  const std::string p = d.file("px.ppm");
  {
    std::ofstream os(p, std::ios::binary);
    os << "P6 2 1 255\n";
    const unsigned char px[6] = {255, 0, 0, 0, 0, 51};
    os.write(reinterpret_cast<const char*>(px), 6);
  }
  const Tensor4 t = load_ppm(p);
  EXPECT_EQ(t.at(0, 0, 0, 0), 1.0);
  EXPECT_EQ(t.at(0, 1, 0, 0), 0.0);
  EXPECT_EQ(t.at(0, 2, 0, 1), 0.2);
}

TEST(ImageIo, RoundTripWithinHalfStep) {
  TempDir d;
  const Tensor4 x = noise_image(7, 11, 3);
  for (const char* name : {"a.ppm", "a.png"}) {
    save_image(d.file(name), x);
    const Tensor4 y = load_image(d.file(name));
    ASSERT_EQ(y.shape(), x.shape());
    EXPECT_LE(max_abs_diff(x, y), 1.0 / 510 + 1e-12) << name;
    save_image(d.file(std::string("b") + name), y);
    EXPECT_EQ(load_image(d.file(std::string("b") + name)), y) << name;
  }
}

TEST(ImageIo, OutOfRangeValuesAreClamped) {
  TempDir d;
  Tensor4 x({1, 3, 1, 2});
  x.fill(2.0);
  x.at(0, 1, 0, 1) = -1.0;
  save_png(d.file("c.png"), x);
  const Tensor4 y = load_png(d.file("c.png"));
  EXPECT_EQ(y.at(0, 0, 0, 0), 1.0);
  EXPECT_EQ(y.at(0, 1, 0, 1), 0.0);
}

TEST(ImageIo, UnsupportedInputsRejected) {
  TempDir d;
  write_png(d.file("gray.png"), PNG_FORMAT_GRAY, 4, 4);
  write_png(d.file("rgba.png"), PNG_FORMAT_RGBA, 4, 4);
  EXPECT_THROW(load_png(d.file("gray.png")), FormatError);
  EXPECT_THROW(load_png(d.file("rgba.png")), FormatError);
  {
    std::ofstream os(d.file("p5.ppm"), std::ios::binary);
    os << "P5 1 1 255\n";
    os.put(0);
  }
  EXPECT_THROW(load_ppm(d.file("p5.ppm")), FormatError);
  {
    std::ofstream os(d.file("short.ppm"), std::ios::binary);
    os << "P6 4 4 255\n";
    os.put(0);
  }
  EXPECT_THROW(load_ppm(d.file("short.ppm")), FormatError);
  {
    std::ofstream os(d.file("deep.ppm"), std::ios::binary);
    os << "P6 1 1 65535\n";
  }
  EXPECT_THROW(load_ppm(d.file("deep.ppm")), FormatError);
  EXPECT_THROW(load_image(d.file("x.jpg")), FormatError);
  EXPECT_THROW(load_image(d.file("missing.png")), DataError);
  EXPECT_THROW(save_image(d.file("g.png"), Tensor4({1, 1, 2, 2})), DataError);
}

TEST(Sampler, DeterministicPerStep) {
  const Dataset ds = make_synthetic(SyntheticKind::kGradients, 5, 40, 1);
  BatchSampler a(ds, {16, 4, 9}), b(ds, {16, 4, 9});
  EXPECT_EQ(a.batch(17), b.batch(17));
  // A batch does not depend on which batches were drawn before it.
  (void)a.batch(3);
  EXPECT_EQ(a.batch(17), b.batch(17));
  EXPECT_NE(a.batch(17), a.batch(18));
  BatchSampler c(ds, {16, 4, 10});
  EXPECT_NE(a.batch(17), c.batch(17));
}

TEST(Sampler, CropsCopyTheRightPixels) {
  const Dataset ds = make_synthetic(SyntheticKind::kBandLimitedNoise, 3, 20, 2);
  BatchSampler s(ds, {8, 5, 4});
  const auto cs = s.crops(6);
  const Tensor4 b = s.batch(6);
  ASSERT_EQ(b.shape(), (Shape{5, 3, 8, 8}));
  for (std::size_t i = 0; i < cs.size(); ++i)
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t y = 0; y < 8; ++y)
        for (std::size_t x = 0; x < 8; ++x)
          ASSERT_EQ(b.at(i, c, y, x), ds[cs[i].image].at(0, c, cs[i].y + y, cs[i].x + x));
}

TEST(Sampler, OffsetsAndImagesAreUniform) {
  const Dataset ds = make_synthetic(SyntheticKind::kConstant, 4, 12, 3);
  BatchSampler s(ds, {8, 16, 5});
  // 5 offsets per axis, 4 images: chi-square against uniform.
  std::map<std::size_t, double> ys, xs, ims;
  std::size_t n = 0;
  for (std::uint64_t step = 0; step < 1000; ++step)
    for (const Crop& c : s.crops(step)) {
      ys[c.y]++, xs[c.x]++, ims[c.image]++;
      ++n;
    }
  auto chi2 = [&](const std::map<std::size_t, double>& m, std::size_t k) {
    EXPECT_EQ(m.size(), k);
    const double e = static_cast<double>(n) / k;
    double s2 = 0;
    for (const auto& [key, o] : m) s2 += (o - e) * (o - e) / e;
    return s2;
  };
  // 99.9% quantiles: chi2(4) = 18.47, chi2(3) = 16.27.
  EXPECT_LT(chi2(ys, 5), 18.47);
  EXPECT_LT(chi2(xs, 5), 18.47);
  EXPECT_LT(chi2(ims, 4), 16.27);
}

TEST(Sampler, UndersizedImagesSkipped) {
  std::vector<Tensor4> ims = {Tensor4({1, 3, 8, 30}), Tensor4({1, 3, 20, 20}, 0.5)};
  const Dataset ds(ims);
  BatchSampler s(ds, {16, 8, 0});
  for (std::uint64_t step = 0; step < 20; ++step)
    for (const Crop& c : s.crops(step)) EXPECT_EQ(c.image, 1u);
  const Dataset tiny({Tensor4({1, 3, 8, 8})});
  EXPECT_THROW(BatchSampler(tiny, {16, 8, 0}), DataError);
  EXPECT_THROW(BatchSampler(ds, {0, 8, 0}), ConfigError);
}

TEST(Split, DeterministicAndDisjoint) {
  std::vector<std::string> paths;
  for (int i = 0; i < 400; ++i) paths.push_back("img/" + std::to_string(i) + ".png");
  const auto a = split_paths(paths, 0.25, 7), b = split_paths(paths, 0.25, 7);
  EXPECT_EQ(a, b);
  EXPECT_EQ(a.first.size() + a.second.size(), paths.size());
  EXPECT_NEAR(static_cast<double>(a.second.size()) / paths.size(), 0.25, 0.07);
  // Membership is per path, so it survives reordering.
  std::vector<std::string> rev(paths.rbegin(), paths.rend());
  auto r = split_paths(rev, 0.25, 7);
  std::sort(r.second.begin(), r.second.end());
  auto s = a.second;
  std::sort(s.begin(), s.end());
  EXPECT_EQ(r.second, s);
  EXPECT_NE(split_paths(paths, 0.25, 8).second, a.second);
  EXPECT_TRUE(split_paths(paths, 0.0, 7).second.empty());
  EXPECT_TRUE(split_paths(paths, 1.0, 7).first.empty());
  EXPECT_THROW(split_paths(paths, 1.5, 7), ConfigError);
}

TEST(Manifest, ReadsNonEmptyLinesAndLists) {
  TempDir d;
  {
    std::ofstream os(d.file("m.txt"));
    os << "a.png\n\n  \nb.ppm  \r\n";
  }
  EXPECT_EQ(read_manifest(d.file("m.txt")), (std::vector<std::string>{"a.png", "b.ppm"}));
  EXPECT_THROW(read_manifest(d.file("none.txt")), DataError);
  save_ppm(d.file("z.ppm"), Tensor4({1, 3, 2, 2}));
  save_png(d.file("a.png"), Tensor4({1, 3, 2, 2}));
  EXPECT_EQ(list_images(d.path.string()), (std::vector<std::string>{d.file("a.png"), d.file("z.ppm")}));
  const Dataset ds = Dataset::load(list_images(d.path.string()));
  EXPECT_EQ(ds.size(), 2u);
  EXPECT_EQ(ds.name(1), d.file("z.ppm"));
}

TEST(Synthetic, DeterministicAndInRange) {
  for (auto kind : {SyntheticKind::kGaussianBlobs, SyntheticKind::kGradients, SyntheticKind::kBandLimitedNoise,
                    SyntheticKind::kConstant}) {
    const Dataset a = make_synthetic(kind, 4, 16, 11), b = make_synthetic(kind, 6, 16, 11);
    for (std::size_t i = 0; i < 4; ++i) {
      EXPECT_EQ(a[i], b[i]) << to_string(kind);
      for (double v : a[i].data()) ASSERT_TRUE(v >= 0.0 && v <= 1.0);
    }
    EXPECT_NE(a[0], make_synthetic(kind, 1, 16, 12)[0]);
    EXPECT_EQ(parse_synthetic_kind(to_string(kind)), kind);
  }
  EXPECT_THROW(parse_synthetic_kind("stripes"), ConfigError);
  EXPECT_THROW(make_synthetic(SyntheticKind::kConstant, 1, 0, 1), ConfigError);
}

TEST(Synthetic, ConstantAndGradientStructure) {
  const Tensor4 c = make_synthetic(SyntheticKind::kConstant, 1, 9, 4)[0];
  for (std::size_t ch = 0; ch < 3; ++ch)
    for (std::size_t i = 0; i < 81; ++i) EXPECT_EQ(c[ch * 81 + i], c[ch * 81]);
  // Gradients are affine before clamping, so second differences vanish away from the clamp.
  const Tensor4 g = make_synthetic(SyntheticKind::kGradients, 1, 16, 4)[0];
  for (std::size_t ch = 0; ch < 3; ++ch)
    for (std::size_t y = 0; y < 16; ++y)
      for (std::size_t x = 1; x + 1 < 16; ++x) {
        const double a = g.at(0, ch, y, x - 1), b = g.at(0, ch, y, x), d = g.at(0, ch, y, x + 1);
        if (a > 0 && a < 1 && b > 0 && b < 1 && d > 0 && d < 1) {
          EXPECT_NEAR(a - 2 * b + d, 0.0, 1e-12);
        }
      }
}

TEST(Synthetic, BandLimitedNoiseHasNoHighFrequencies) {
  SyntheticOptions opt;
  opt.cutoff = 0.1;
  const Tensor4 t = make_synthetic(SyntheticKind::kBandLimitedNoise, 1, 32, 5, opt)[0];
  // Neighbouring pixels differ by at most 2*pi*cutoff*sqrt(2)*sum(amp).
  const double bound = 2 * std::numbers::pi * opt.cutoff * std::sqrt(2.0) * 0.5 * std::sqrt(12.0);
  for (std::size_t ch = 0; ch < 3; ++ch)
    for (std::size_t y = 0; y < 32; ++y)
      for (std::size_t x = 1; x < 32; ++x)
        EXPECT_LE(std::abs(t.at(0, ch, y, x) - t.at(0, ch, y, x - 1)), bound);
  opt.cutoff = 0.7;
  EXPECT_THROW(make_synthetic(SyntheticKind::kBandLimitedNoise, 1, 8, 5, opt), ConfigError);
}
