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

#include <cmath>
#include <set>

#include "slimcae/binary_io.hpp"
#include "slimcae/conv.hpp"
#include "slimcae/gradcheck.hpp"
#include "slimcae/rng.hpp"
#include "slimcae/tape.hpp"
#include "test_util.hpp"

using namespace slimcae;
using slimcae::testing::naive_conv;
using slimcae::testing::naive_deconv;
using slimcae::testing::random_tensor;
using slimcae::testing::weighted_sum;

struct ConvCase {
  std::size_t n, cin, cout, h, w, k, stride, pad;
};

void PrintTo(const ConvCase& c, std::ostream* os) {
  *os << "n" << c.n << " " << c.cin << "->" << c.cout << " " << c.h << "x" << c.w << " k" << c.k << " s" << c.stride
      << " p" << c.pad;
}

class ConvShapes : public ::testing::TestWithParam<ConvCase> {};

TEST_P(ConvShapes, ForwardMatchesDirectLoops) {
  const ConvCase c = GetParam();
  Rng rng(11, RngStream::kTest, c.h * 31 + c.k);
  Tensor4 x = random_tensor({c.n, c.cin, c.h, c.w}, rng);
  Tensor4 k = random_tensor({c.cout, c.cin, c.k, c.k}, rng);
  Tensor4 b = random_tensor({c.cout, 1, 1, 1}, rng);
  const ConvGeometry g{c.stride, c.pad};
  EXPECT_LT(max_abs_diff(conv2d_forward(x, k, &b, g), naive_conv(x, k, &b, c.stride, c.pad)), 1e-12);
}

TEST_P(ConvShapes, DeconvMatchesScatter) {
  const ConvCase c = GetParam();
  Rng rng(12, RngStream::kTest, c.h * 31 + c.k);
  Tensor4 x = random_tensor({c.n, c.cout, c.h, c.w}, rng);
  Tensor4 k = random_tensor({c.cout, c.cin, c.k, c.k}, rng);
  Tensor4 b = random_tensor({c.cin, 1, 1, 1}, rng);
  const std::size_t op = c.stride - 1;
  EXPECT_LT(max_abs_diff(deconv2d_forward(x, k, &b, {c.stride, c.pad}, op),
                         naive_deconv(x, k, &b, c.stride, c.pad, op)),
            1e-12);
}

TEST_P(ConvShapes, AdjointIdentity) {
  const ConvCase c = GetParam();
  Rng rng(13, RngStream::kTest, c.h * 31 + c.k);
  const ConvGeometry g{c.stride, c.pad};
  Tensor4 x = random_tensor({c.n, c.cin, c.h, c.w}, rng);
  Tensor4 k = random_tensor({c.cout, c.cin, c.k, c.k}, rng);
  Tensor4 y = conv2d_forward(x, k, nullptr, g);
  Tensor4 u = random_tensor(y.shape(), rng);
  const double lhs = dot(y, u);
  const double rhs = dot(x, conv2d_adjoint(u, k, g, x.shape()));
  EXPECT_NEAR(lhs, rhs, 1e-10 * std::max(1.0, std::abs(lhs)));
}

INSTANTIATE_TEST_SUITE_P(Core, ConvShapes,
                         ::testing::Values(ConvCase{1, 1, 1, 5, 5, 3, 1, 1}, ConvCase{2, 3, 4, 8, 7, 3, 2, 1},
                                           ConvCase{1, 2, 3, 9, 9, 5, 2, 2}, ConvCase{1, 3, 2, 16, 12, 5, 4, 2},
                                           ConvCase{2, 1, 2, 6, 6, 1, 1, 0}));

TEST(Conv, IdentityKernelCopiesInput) {
  Rng rng(1, RngStream::kTest);
  Tensor4 x = random_tensor({1, 1, 4, 4}, rng);
  Tensor4 k({1, 1, 3, 3});
  k.at(0, 0, 1, 1) = 1.0;
  EXPECT_EQ(conv2d_forward(x, k, nullptr, {1, 1}), x);
}

TEST(Conv, OutputLengths) {
  EXPECT_EQ(conv_out_len(16, 5, {4, 2}), 4u);
  EXPECT_EQ(conv_out_len(4, 3, {2, 1}), 2u);
  EXPECT_EQ(deconv_out_len(4, 5, {4, 2}, 3), 16u);
  EXPECT_EQ(deconv_out_len(2, 3, {2, 1}, 1), 4u);
  EXPECT_THROW(conv_out_len(2, 5, {1, 0}), ConfigError);
  EXPECT_THROW(conv_out_len(8, 3, {0, 1}), ConfigError);
  EXPECT_THROW(deconv_out_len(4, 3, {2, 1}, 2), ConfigError);
}

TEST(Conv, ChannelMismatchThrows) {
  Tensor4 x({1, 2, 4, 4}), k({1, 3, 3, 3});
  EXPECT_THROW(conv2d_forward(x, k, nullptr, {1, 1}), ConfigError);
}

namespace {

GradCheckReport check_conv(bool transposed, std::uint64_t seed) {
  Rng rng(seed, RngStream::kTest);
  const std::size_t s = 1 + rng.below(2);
  const ConvGeometry g{s, 1};
  // Conv maps 2 -> 3 channels; the transposed op maps 3 -> 2 with the same kernel layout.
  Param x("x", random_tensor({2, transposed ? 3u : 2u, 4 + rng.below(3), 4 + rng.below(3)}, rng));
  Param k("k", random_tensor({3, 2, 3, 3}, rng));
  Param b("b", random_tensor({transposed ? 2u : 3u, 1, 1, 1}, rng));
  const Tensor4 y0 = transposed ? deconv2d_forward(x.value, k.value, &b.value, g, s - 1)
                                : conv2d_forward(x.value, k.value, &b.value, g);
  const Tensor4 w = random_tensor(y0.shape(), rng);
  auto build = [&](Tape& t) {
    Var y = transposed ? ops::deconv2d(t.param(x), t.param(k), t.param(b), g, s - 1)
                       : ops::conv2d(t.param(x), t.param(k), t.param(b), g);
    return weighted_sum(y, w);
  };
  return finite_diff_check(build, {&x, &k, &b});
}

}  // namespace

TEST(GradCheck, Conv) {
  for (std::uint64_t i = 0; i < 5; ++i) EXPECT_TRUE(check_conv(false, 100 + i).passed()) << i;
}

TEST(GradCheck, Deconv) {
  for (std::uint64_t i = 0; i < 5; ++i) EXPECT_TRUE(check_conv(true, 200 + i).passed()) << i;
}

TEST(GradCheck, ElementwiseAndSlicing) {
  Rng rng(3, RngStream::kTest);
  Param a("a", random_tensor({2, 4, 3, 3}, rng));
  Param b("b", random_tensor({2, 4, 3, 3}, rng));
  Param s("s", Tensor4::scalar(0.7));
  const Tensor4 w2 = random_tensor({2, 2, 3, 3}, rng);
  const Tensor4 w1 = random_tensor({1, 4, 3, 3}, rng);
  const Tensor4 wl = random_tensor({1, 3, 2, 2}, rng);
  auto build = [&](Tape& t) {
    Var va = t.param(a), vb = t.param(b), vs = t.param(s);
    Var m = ops::add(ops::mul(va, vb), ops::scale(ops::sub(va, vb), 0.3));
    m = ops::mul_scalar(m, vs);
    Var l = ops::sum(ops::mul(ops::slice_channels(m, 2), t.constant(w2)));
    l = ops::add_scalar(l, weighted_sum(ops::slice_range(m, 0, 1, 2), w1));
    l = ops::add_scalar(l, weighted_sum(ops::slice_leading(va, {1, 3, 2, 2}), wl));
    return ops::add_scalar(l, weighted_sum(ops::add_constant(vb, Tensor4(vb.shape(), 0.5)), Tensor4(vb.shape(), 0.2)));
  };
  const GradCheckReport r = finite_diff_check(build, {&a, &b, &s});
  EXPECT_TRUE(r.passed()) << r.max_error();
}

TEST(GradCheck, ClampAndMse) {
  Rng rng(4, RngStream::kTest);
  Param a("a", random_tensor({1, 2, 4, 4}, rng, 0.05, 1.0));
  const Tensor4 target = random_tensor({1, 2, 4, 4}, rng);
  auto build = [&](Tape& t) { return ops::mse_region(ops::clamp_min(t.param(a), 0.01), target, 3, 2); };
  EXPECT_TRUE(finite_diff_check(build, {&a}).passed());
}

TEST(GradCheck, RejectsNonDifferentiableGraph) {
  Param a("a", Tensor4({1, 1, 2, 2}, 0.3));
  auto build = [&](Tape& t) {
    Var v = t.param(a);
    Tensor4 r = v.value();
    for (double& x : r.data()) x = std::round(x);
    return ops::sum(ops::non_differentiable(v, r));
  };
  const GradCheckReport rep = finite_diff_check(build, {&a});
  EXPECT_TRUE(rep.rejected);
  EXPECT_FALSE(rep.passed());
  Tape t;
  Var l = build(t);
  EXPECT_THROW(t.backward(l), InternalError);
}

TEST(GradCheck, DetectsWrongGradient) {
  Param a("a", Tensor4({1, 1, 1, 3}, 0.8));
  auto build = [&](Tape& t) {
    Var v = t.param(a);
    Tensor4 sq = v.value();
    for (double& x : sq.data()) x = x * x;
    // Deliberately report d/dx = 1 instead of 2x.
    return ops::sum(t.record(sq, {v}, [v](Tape& tp, const Tensor4& g) { tp.accumulate(v, g); }));
  };
  EXPECT_FALSE(finite_diff_check(build, {&a}).passed());
}

TEST(Tape, GradientsAccumulateAcrossUses) {
  Param a("a", Tensor4::scalar(3.0));
  Tape t;
  Var v = t.param(a);
  t.backward(ops::add(ops::mul(v, v), v));
  EXPECT_DOUBLE_EQ(a.grad[0], 7.0);
}

TEST(Tape, NonFiniteLossThrows) {
  Param a("a", Tensor4::scalar(std::nan("")));
  Tape t;
  Var v = t.param(a);
  EXPECT_THROW(t.backward(v), NumericError);
}

TEST(Rng, StreamsAreReproducibleAndDistinct) {
  Rng a(5, RngStream::kNoise, 3), b(5, RngStream::kNoise, 3), c(5, RngStream::kBatch, 3), d(5, RngStream::kNoise, 4);
  const auto va = a.next();
  EXPECT_EQ(va, b.next());
  EXPECT_NE(va, c.next());
  EXPECT_NE(va, d.next());
}

TEST(Rng, UniformAndBelowRanges) {
  Rng r(9);
  double mean = 0.0;
  std::set<std::uint64_t> seen;
  for (int i = 0; i < 20000; ++i) {
    const double u = r.uniform();
    ASSERT_GT(u, 0.0);
    ASSERT_LT(u, 1.0);
    mean += u;
    const auto k = r.below(7);
    ASSERT_LT(k, 7u);
    seen.insert(k);
  }
  EXPECT_NEAR(mean / 20000.0, 0.5, 0.01);
  EXPECT_EQ(seen.size(), 7u);
}

TEST(BinaryIo, RoundTrip) {
  ByteWriter w;
  w.u8(7);
  w.u16(0xBEEF);
  w.u32(0xDEADBEEF);
  w.u64(0x0123456789ABCDEFull);
  w.f64(-1.25);
  w.str("slim");
  const Bytes b = w.take();
  EXPECT_EQ(b[1], 0xEF);  // little endian
  ByteReader r(b);
  EXPECT_EQ(r.u8(), 7);
  EXPECT_EQ(r.u16(), 0xBEEF);
  EXPECT_EQ(r.u32(), 0xDEADBEEFu);
  EXPECT_EQ(r.u64(), 0x0123456789ABCDEFull);
  EXPECT_EQ(r.f64(), -1.25);
  EXPECT_EQ(r.str(), "slim");
  EXPECT_EQ(r.remaining(), 0u);
  EXPECT_THROW(r.u8(), FormatError);
}

TEST(BinaryIo, KnownHashes) {
  // Standard check values for CRC-32 and 64-bit FNV-1a.
  const std::string s = "123456789";
  const auto* p = reinterpret_cast<const std::uint8_t*>(s.data());
  EXPECT_EQ(checksum32(p, s.size()), 0xCBF43926u);
  EXPECT_EQ(fnv1a64(p, 0), 0xCBF29CE484222325ull);
  EXPECT_EQ(fnv1a64(reinterpret_cast<const std::uint8_t*>("a"), 1), 0xAF63DC4C8601EC8Cull);
}
