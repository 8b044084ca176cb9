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

#include "slimcae/gradcheck.hpp"
#include "slimcae/model.hpp"
#include "test_util.hpp"

using namespace slimcae;
using slimcae::testing::jitter_gdn;
using slimcae::testing::random_tensor;

namespace {

Batch random_batch(std::size_t n, std::size_t h, std::size_t w, std::uint64_t seed) {
  Rng rng(seed, RngStream::kTest);
  return make_batch(random_tensor({n, 3, h, w}, rng, 0.0, 1.0), 16);
}

std::vector<Tensor4> grads(const ParamStore& s) {
  std::vector<Tensor4> g;
  for (std::size_t i = 0; i < s.size(); ++i) g.push_back(s[i].grad);
  return g;
}

}  // namespace

TEST(Psnr, KnownValues) {
  Tensor4 a({1, 3, 4, 4}, 0.5);
  EXPECT_EQ(psnr(a, a), 100.0);
  Tensor4 b = a;
  for (double& v : b.data()) v += 1.0 / 255.0;
  EXPECT_NEAR(psnr(a, b), 48.131, 1e-3);
  EXPECT_NEAR(psnr_from_mse(0.01), 20.0, 1e-12);
}

TEST(Padding, PadAndCrop) {
  Rng rng(1, RngStream::kTest);
  Tensor4 x = random_tensor({1, 3, 17, 20}, rng);
  Tensor4 p = pad_to_multiple(x, 16);
  EXPECT_EQ(p.shape(), (Shape{1, 3, 32, 32}));
  EXPECT_EQ(p.at(0, 1, 20, 25), 0.0);
  EXPECT_EQ(crop(p, 17, 20), x);
  EXPECT_EQ(pad_to_multiple(p, 16), p);
}

TEST(Config, DefaultsAndRoundTrip) {
  const SlimCAEConfig d = SlimCAEConfig::desk();
  EXPECT_EQ(d.widths.values(), (std::vector<std::size_t>{4, 8, 16}));
  EXPECT_EQ(d.downsampling(), 16u);
  EXPECT_EQ(SlimCAEConfig::parse(d.serialize()), d);
  const SlimCAEConfig f = SlimCAEConfig::full_scale(GdnVariant::kSwitch);
  EXPECT_EQ(SlimCAEConfig::parse(f.serialize()), f);
  EXPECT_EQ(f.stages[0].kernel, 9u);
}

TEST(Config, RejectsBadSettings) {
  SlimCAEConfig c;
  EXPECT_THROW(c.set("widths", "8,4"), ConfigError);
  EXPECT_THROW(c.set("widths", "4,x"), ConfigError);
  EXPECT_THROW(c.set("depth", "3"), ConfigError);
  EXPECT_THROW(c.set("gdn", "bn"), ConfigError);
  EXPECT_THROW(SlimCAEConfig::parse("kernels=5,3\nstrides=2,2,2\n"), ConfigError);
  EXPECT_THROW(SlimCAEConfig::parse("kernels=4\nstrides=2\n"), ConfigError);
}

TEST(Model, Shapes) {
  SlimCAE m(SlimCAEConfig::desk(), 1);
  Rng rng(2, RngStream::kTest);
  Tensor4 x = random_tensor({1, 3, 16, 16}, rng, 0.0, 1.0);
  for (std::size_t k = 0; k < 3; ++k) {
    const Tensor4 z = m.encode_latent(x, k);
    EXPECT_EQ(z.shape(), (Shape{1, m.latent_channels(k), 1, 1}));
    EXPECT_EQ(m.decode_latent(z, k).shape(), x.shape());
  }
  Tensor4 big = random_tensor({2, 3, 32, 48}, rng, 0.0, 1.0);
  EXPECT_EQ(m.encode_latent(big, 2).shape(), (Shape{2, 16, 2, 3}));
  EXPECT_THROW(m.encode_latent(random_tensor({1, 3, 17, 16}, rng), 0), InternalError);
  EXPECT_THROW(m.encode_latent(x, 3), ConfigError);
}

TEST(Model, ParameterNamesFollowLayout) {
  SlimCAE m;
  for (const char* n : {"enc0.kernel", "enc2.bias", "enc_gdn1.gamma", "dec_igdn0.beta", "dec2.kernel",
                        "entropy.logits.3", "enc_gdn0.scale_gamma.2"})
    EXPECT_TRUE(m.params().contains(n)) << n;
  EXPECT_EQ(m.params().get("dec2.kernel").value.shape(), (Shape{16, 3, 5, 5}));
  EXPECT_EQ(m.params().get("enc0.kernel").value.shape(), (Shape{16, 3, 5, 5}));
}

TEST(Model, SeedDeterminesInitialization) {
  SlimCAE a(SlimCAEConfig::desk(), 7), b(SlimCAEConfig::desk(), 7), c(SlimCAEConfig::desk(), 8);
  EXPECT_EQ(a.model_hash(), b.model_hash());
  EXPECT_NE(a.model_hash(), c.model_hash());
}

class Nesting : public ::testing::TestWithParam<GdnVariant> {};

TEST_P(Nesting, ExtractedLevelMatchesSlimLevel) {
  SlimCAEConfig cfg;
  cfg.gdn = GetParam();
  SlimCAE m(cfg, 3);
  Rng rng(4, RngStream::kTest);
  jitter_gdn(m.params(), rng);
  for (double& v : m.entropy().logits(1).value.data()) v = rng.uniform(-2, 2);
  const Batch b = random_batch(2, 32, 32, 5);
  const Tensor4 noise = m.draw_noise(b, rng);
  for (std::size_t k = 0; k < 3; ++k) {
    auto single = m.extract_level(k);
    EXPECT_EQ(single->levels(), 1u);
    const Tensor4 z = m.encode_latent(b.images, k);
    EXPECT_EQ(z, single->encode_latent(b.images, 0));
    EXPECT_EQ(m.decode_latent(z, k), single->decode_latent(z, 0));
    EXPECT_EQ(m.entropy().total_bits(z, k), single->entropy().total_bits(z, 0));
    Tape t1, t2;
    EXPECT_EQ(m.loss_single(t1, b, k, 0.05, noise).loss.value().item(),
              single->loss_single(t2, b, 0, 0.05, noise).loss.value().item());
  }
}

INSTANTIATE_TEST_SUITE_P(Model, Nesting,
                         ::testing::Values(GdnVariant::kSwitch, GdnVariant::kSlim, GdnVariant::kSlimPlus),
                         [](const auto& info) { return std::string(to_string(info.param)); });

TEST(Model, JointLossIsSumOfSingles) {
  SlimCAE m(SlimCAEConfig::desk(), 5);
  Rng rng(6, RngStream::kTest);
  const Batch b = random_batch(2, 32, 32, 6);
  const Tensor4 noise = m.draw_noise(b, rng);
  const std::vector<double> lambdas{0.2, 0.05, 0.01};

  m.params().zero_grads();
  Tape tj;
  LossResult joint = m.loss_joint(tj, b, lambdas, noise);
  tj.backward(joint.loss);
  const auto gj = grads(m.params());

  double sum = 0.0;
  m.params().zero_grads();
  for (std::size_t k = 0; k < 3; ++k) {
    Tape t;
    LossResult r = m.loss_single(t, b, k, lambdas[k], noise);
    sum += r.loss.value().item();
    EXPECT_NEAR(joint.distortion(k), r.distortion(0), 1e-15);
    EXPECT_NEAR(joint.rate(k), r.rate(0), 1e-15);
    t.backward(r.loss);
  }
  EXPECT_NEAR(joint.loss.value().item(), sum, 1e-12);
  const auto gs = grads(m.params());
  for (std::size_t i = 0; i < gj.size(); ++i)
    EXPECT_LT(max_abs_diff(gj[i], gs[i]), 1e-10) << m.params()[i].name;
}

TEST(Model, SingleLevelGradientStaysInsideSlice) {
  SlimCAE m(SlimCAEConfig::desk(), 9);
  Rng rng(7, RngStream::kTest);
  const Batch b = random_batch(1, 16, 16, 7);
  Tape t;
  m.params().zero_grads();
  t.backward(m.loss_single(t, b, 0, 0.1, m.draw_noise(b, rng)).loss);
  const Param& k = m.params().get("enc1.kernel");  // (16, 16, 3, 3), level 1 uses [0:4, 0:4]
  for (std::size_t o = 0; o < 16; ++o)
    for (std::size_t i = 0; i < 16; ++i)
      for (std::size_t a = 0; a < 3; ++a)
        for (std::size_t c = 0; c < 3; ++c) {
          if (o >= 4 || i >= 4) {
            ASSERT_EQ(k.grad.at(o, i, a, c), 0.0);
          }
        }
  for (double g : m.params().get("entropy.logits.2").grad.data()) ASSERT_EQ(g, 0.0);
  for (double g : m.params().get("enc_gdn0.scale_beta.3").grad.data()) ASSERT_EQ(g, 0.0);
}

TEST(Model, FlatEntropyRateClosedForm) {
  SlimCAE m(SlimCAEConfig::desk(), 2);
  m.entropy().set_flat();
  const Batch b = random_batch(2, 32, 48, 8);
  Rng rng(9, RngStream::kTest);
  Tape t;
  LossResult r = m.loss_joint(t, b, {0.1, 0.1, 0.1}, m.draw_noise(b, rng));
  // Every latent element costs log2(64) = 6 bits; there are w * 2 * 3 of
  // them per image against 32 * 48 pixels.
  for (std::size_t k = 0; k < 3; ++k)
    EXPECT_NEAR(r.rate(k), 6.0 * m.latent_channels(k) * 6.0 / (32.0 * 48.0), 1e-12);
}

TEST(Model, DistortionCountsOnlyUnpaddedRegion) {
  SlimCAE m(SlimCAEConfig::desk(), 2);
  Rng rng(10, RngStream::kTest);
  Tensor4 x = random_tensor({1, 3, 20, 18}, rng, 0.0, 1.0);
  const Batch b = make_batch(x, 16);
  Tape t;
  LossResult r = m.loss_single(t, b, 2, 0.0, Tensor4());
  Tensor4 xhat = crop(m.decode_latent(m.encode_latent(b.images, 2), 2), 20, 18);
  EXPECT_NEAR(r.distortion(0), mse(x, xhat), 1e-12);
}

TEST(Model, JointLossGradCheck) {
  for (GdnVariant v : {GdnVariant::kSwitch, GdnVariant::kSlim, GdnVariant::kSlimPlus}) {
    SlimCAEConfig cfg;
    cfg.gdn = v;
    SlimCAE m(cfg, 11);
    Rng rng(12, RngStream::kTest);
    jitter_gdn(m.params(), rng);
    const Batch b = random_batch(1, 16, 32, 13);
    const Tensor4 noise = m.draw_noise(b, rng);
    std::vector<Param*> ps;
    for (std::size_t i = 0; i < m.params().size(); ++i) ps.push_back(&m.params()[i]);
    auto build = [&](Tape& t) { return m.loss_joint(t, b, {0.3, 0.1, 0.03}, noise).loss; };
    GradCheckOptions opt;
    opt.max_probes_per_param = 12;
    const GradCheckReport r = finite_diff_check(build, ps, opt);
    EXPECT_TRUE(r.passed()) << to_string(v) << " " << r.max_error();
  }
}

TEST(Model, ScalableLossSharesTopLevelEncoder) {
  SlimCAE m(SlimCAEConfig::desk(), 4);
  Rng rng(14, RngStream::kTest);
  const Batch b = random_batch(1, 32, 32, 14);
  const Tensor4 noise = m.draw_noise(b, rng);
  Tape t;
  LossResult r = m.loss_scalable(t, b, {0.1, 0.1, 0.1}, noise);
  // Rates accumulate channel groups, so they cannot decrease with level.
  EXPECT_LE(r.rate(0), r.rate(1));
  EXPECT_LE(r.rate(1), r.rate(2));
  const Tensor4 z = m.encode_latent(b.images, 2);
  Tensor4 zt = z;
  for (std::size_t i = 0; i < z.size(); ++i) zt[i] += noise[i];
  Tensor4 z0 = leading_slice(zt, {1, 4, 2, 2});
  EXPECT_NEAR(r.distortion(0), mse(b.images, m.decode_latent(z0, 0)), 1e-12);
}

TEST(Checkpoint, RoundTripAndHash) {
  SlimCAE m(SlimCAEConfig::desk(), 21);
  Rng rng(15, RngStream::kTest);
  jitter_gdn(m.params(), rng);
  const Bytes b = m.save();
  auto l = SlimCAE::load(b);
  EXPECT_EQ(l->save(), b);
  EXPECT_EQ(l->model_hash(), m.model_hash());
  EXPECT_EQ(l->config(), m.config());
  m.params()[0].value[0] += 1e-9;
  EXPECT_NE(l->model_hash(), m.model_hash());
}

TEST(Checkpoint, RejectsCorruptInput) {
  SlimCAE m;
  Bytes b = m.save();
  Bytes bad = b;
  bad[0] = 'X';
  EXPECT_THROW(SlimCAE::load(bad), FormatError);
  bad = b;
  bad[4] = 9;
  EXPECT_THROW(SlimCAE::load(bad), FormatError);
  EXPECT_THROW(SlimCAE::load(Bytes(b.begin(), b.begin() + b.size() / 2)), FormatError);
  bad = b;
  bad.push_back(0);
  EXPECT_THROW(SlimCAE::load(bad), FormatError);
}
