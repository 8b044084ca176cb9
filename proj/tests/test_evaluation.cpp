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

#include <sstream>

#include "slimcae/evaluation.hpp"
#include "slimcae/training.hpp"

using namespace slimcae;

namespace {

RDCurve curve(const std::vector<double>& rates, const std::vector<double>& psnrs) {
  RDCurve c;
  for (std::size_t i = 0; i < rates.size(); ++i) {
    RDPoint p;
    p.level = i;
    p.rate = rates[i];
    p.psnr = psnrs[i];
    c.push_back(p);
  }
  return c;
}

bool same(double a, double b) { return (std::isnan(a) && std::isnan(b)) || a == b; }

void expect_rows_equal(const std::vector<SweepRow>& a, const std::vector<SweepRow>& b) {
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].level, b[i].level);
    EXPECT_EQ(a[i].width, b[i].width);
    for (auto f : {&SweepRow::lambda, &SweepRow::est_bpp, &SweepRow::actual_bpp, &SweepRow::psnr_db,
                   &SweepRow::flops, &SweepRow::param_bytes, &SweepRow::feature_bytes, &SweepRow::enc_ms,
                   &SweepRow::dec_ms})
      EXPECT_TRUE(same(a[i].*f, b[i].*f)) << i << ": " << a[i].*f << " vs " << b[i].*f;
  }
}

}  // namespace

TEST(Flops, PointwiseConvIsTwoFlops) { EXPECT_EQ(conv_flops(1, 1, 1, 1, 1, 1), 2.0); }

TEST(Flops, ConvAndGdnFormulas) {
  EXPECT_EQ(conv_flops(3, 4, 5, 5, 2, 3), 2.0 * 3 * 4 * 25 * 6);
  // gamma mix (w multiply-adds per output) plus the per-element nonlinearity.
  EXPECT_EQ(gdn_flops(4, 2, 3), 2.0 * 4 * 4 * 6 + kGdnElementFlops * 24);
}

TEST(Flops, LayerSumByHand) {
  SlimCAEConfig c;
  c.widths = WidthSet({2});
  c.stages = {{3, 2}};
  // 4x4 input: conv 3->2 at 2x2, GDN at 2x2, IGDN at 2x2, deconv 2->3 at 2x2 inputs.
  const double want = 2.0 * 3 * 2 * 9 * 4 + 2 * gdn_flops(2, 2, 2) + 2.0 * 2 * 3 * 9 * 4;
  EXPECT_EQ(flops_count(c, 0, 4, 4), want);
}

TEST(Flops, DoublingAreaDoublesFlops) {
  for (const auto& cfg : {SlimCAEConfig::desk(), SlimCAEConfig::full_scale()})
    for (std::size_t k = 0; k < cfg.levels(); ++k) {
      EXPECT_EQ(flops_count(cfg, k, 64, 128), 2.0 * flops_count(cfg, k, 64, 64));
      EXPECT_EQ(flops_count(cfg, k, 128, 128), 4.0 * flops_count(cfg, k, 64, 64));
    }
}

TEST(Flops, PaddedSizesCountAsPadded) {
  const auto cfg = SlimCAEConfig::desk();
  EXPECT_EQ(flops_count(cfg, 1, 17, 30), flops_count(cfg, 1, 32, 32));
}

TEST(Costs, MonotoneInLevel) {
  for (GdnVariant v : {GdnVariant::kSwitch, GdnVariant::kSlim, GdnVariant::kSlimPlus}) {
    const CostReport r = cost_report(SlimCAEConfig::full_scale(v), 512, 768);
    ASSERT_EQ(r.levels.size(), 5u);
    for (std::size_t k = 1; k < 5; ++k) {
      EXPECT_GT(r.levels[k].flops, r.levels[k - 1].flops);
      EXPECT_GT(r.levels[k].param_bytes, r.levels[k - 1].param_bytes);
      EXPECT_GT(r.levels[k].feature_bytes, r.levels[k - 1].feature_bytes);
      EXPECT_GT(r.levels[k].width, r.levels[k - 1].width);
    }
  }
}

TEST(Costs, StoredParamsMatchRealModel) {
  for (GdnVariant v : {GdnVariant::kSwitch, GdnVariant::kSlim, GdnVariant::kSlimPlus}) {
    SlimCAEConfig c;
    c.gdn = v;
    SlimCAE m(c, 0);
    EXPECT_EQ(stored_param_count(c), m.params().count_values()) << to_string(v);
  }
  EXPECT_EQ(stored_param_count(SlimCAEConfig::desk()), 15195u);
}

TEST(Costs, ActiveParamsMatchExtractedModel) {
  const auto cfg = SlimCAEConfig::desk();
  SlimCAE m(cfg, 0);
  for (std::size_t k = 0; k < 3; ++k) {
    // The extracted model stores one GDN per layer plus the Slim+ modulation.
    EXPECT_EQ(active_param_count(cfg, k), m.extract_level(k)->params().count_values()) << k;
  }
}

TEST(Costs, FullScaleMemoryWithinTenPercentOfPublished) {
  const CostReport slim = cost_report(SlimCAEConfig::full_scale(GdnVariant::kSlimPlus), 512, 768);
  EXPECT_NEAR(slim.total_model_bytes / kMiB, 15.3, 1.53);
  EXPECT_NEAR(slim.independent_bytes / kMiB, 31.1, 3.11);
  EXPECT_NEAR(gdn_storage_bytes(SlimCAEConfig::full_scale(GdnVariant::kSlim)) / kMiB, 0.85, 0.085);
  EXPECT_NEAR(gdn_storage_bytes(SlimCAEConfig::full_scale(GdnVariant::kSwitch)) / kMiB, 1.71, 0.171);
}

TEST(BdRate, IdenticalCurvesGiveZero) {
  const RDCurve a = curve({0.1, 0.2, 0.4, 0.8, 1.6}, {26, 29, 32, 35, 37.5});
  EXPECT_EQ(bd_rate(a, a), 0.0);
}

TEST(BdRate, ScaledRatesGiveClosedForm) {
  const RDCurve b = curve({0.1, 0.2, 0.4, 0.8, 1.6}, {26, 29, 32, 35, 37.5});
  RDCurve a = b;
  for (auto& p : a) p.rate *= 0.9;
  EXPECT_NEAR(bd_rate(a, b), -10.0, 0.1);
  EXPECT_NEAR(bd_rate(b, a), 100.0 / 0.9 - 100.0, 0.1);
}

TEST(BdRate, SwappingArgumentsInverts) {
  // Two log-linear curves with different slopes.
  const RDCurve a = curve({0.12, 0.25, 0.5, 1.1, 2.0}, {27, 30.2, 33.1, 36.0, 38.2});
  const RDCurve b = curve({0.1, 0.2, 0.4, 0.8, 1.6}, {26, 29, 32, 35, 37.5});
  const double ab = bd_rate(a, b), ba = bd_rate(b, a);
  EXPECT_NEAR(ab, -ba / (1.0 + ba / 100.0), 0.5);
}

TEST(BdRate, Errors) {
  const RDCurve a = curve({0.1, 0.2, 0.4}, {26, 29, 32});
  EXPECT_THROW(bd_rate(a, a), ConfigError);
  const RDCurve lo = curve({0.1, 0.2, 0.4, 0.8}, {20, 21, 22, 23});
  const RDCurve hi = curve({0.1, 0.2, 0.4, 0.8}, {30, 31, 32, 33});
  EXPECT_THROW(bd_rate(lo, hi), ConfigError);
}

TEST(Sweep, RowsAndSerializationRoundTrip) {
  SlimCAE m(SlimCAEConfig::desk(), 1);
  const Dataset d = make_synthetic(SyntheticKind::kGaussianBlobs, 2, 32, 5);
  SweepOptions opt;
  opt.timing_runs = 2;
  opt.warmup = 0;
  opt.lambdas = {0.04, 0.02, 0.01};
  const auto rows = rd_sweep(m, d, opt);
  ASSERT_EQ(rows.size(), 3u);
  for (std::size_t k = 0; k < 3; ++k) {
    EXPECT_EQ(rows[k].level, k + 1);
    EXPECT_EQ(rows[k].lambda, opt.lambdas[k]);
    EXPECT_GT(rows[k].actual_bpp, 0.0);
    EXPECT_GE(rows[k].enc_ms, 0.0);
  }
  std::stringstream ss;
  write_sweep_csv(ss, rows);
  expect_rows_equal(read_sweep_csv(ss), rows);
  expect_rows_equal(sweep_from_json(nlohmann::json::parse(sweep_json(rows).dump())), rows);

  opt.timing_runs = 0;
  opt.lambdas.clear();
  const auto untimed = rd_sweep(m, d, opt);
  EXPECT_TRUE(std::isnan(untimed[0].enc_ms));
  std::stringstream s2;
  write_sweep_csv(s2, untimed);
  expect_rows_equal(read_sweep_csv(s2), untimed);
  expect_rows_equal(sweep_from_json(sweep_json(untimed)), untimed);
}

TEST(Sweep, BadCsvRejected) {
  std::stringstream a("level,width\n1,2\n");
  EXPECT_THROW(read_sweep_csv(a), FormatError);
  std::stringstream b(std::string(kSweepColumns) + "\n1,2,3\n");
  EXPECT_THROW(read_sweep_csv(b), FormatError);
}

TEST(Latency, MedianOfRuns) {
  int calls = 0;
  const double ms = median_ms([&] { ++calls; }, 5, 2);
  EXPECT_EQ(calls, 7);
  EXPECT_GE(ms, 0.0);
}
