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


// Cost accounting (FLOPs, memory, latency), BD-rate and RD sweeps.

#pragma once

#include <Eigen/Dense>
#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "slimcae/codec.hpp"
#include "slimcae/model.hpp"
#include "slimcae/training.hpp"

namespace slimcae {

inline constexpr double kBytesPerValue = 4.0;
inline constexpr double kMiB = 1024.0 * 1024.0;
// Per-element cost of the GDN square root and division.
inline constexpr double kGdnElementFlops = 2.0;

/// Multiply-adds of one convolution counted as 2 FLOPs each.
inline double conv_flops(std::size_t cin, std::size_t cout, std::size_t kh, std::size_t kw,
                         std::size_t positions_h, std::size_t positions_w) {
  return 2.0 * static_cast<double>(cin * cout * kh * kw) * static_cast<double>(positions_h * positions_w);
}

/// Generalized divisive normalization over a w-channel, h x w map.
inline double gdn_flops(std::size_t channels, std::size_t h, std::size_t w) {
  const double e = static_cast<double>(channels * h * w);
  return 2.0 * static_cast<double>(channels) * e + kGdnElementFlops * e;
}

struct LayerCost {
  std::string name;
  double flops = 0.0;
  std::size_t active_params = 0;
  std::size_t out_elements = 0;  // per image
};

/// Layer-by-layer analytic costs of one image at `level` with input
/// (h, w), padded to the downsampling factor. Transposed convolutions are
/// counted at their input positions (one k x k scatter per input pixel).
inline std::vector<LayerCost> layer_costs(const SlimCAEConfig& cfg, std::size_t level,
                                          std::size_t h, std::size_t w) {
  cfg.widths.check(level);
  const std::size_t f = cfg.downsampling();
  h = (h + f - 1) / f * f;
  w = (w + f - 1) / f * f;
  const std::size_t wk = cfg.widths[level];
  const std::size_t slim_extra = cfg.gdn == GdnVariant::kSlimPlus ? 4 : 0;
  std::vector<LayerCost> out;
  std::size_t cin = cfg.input_channels;
  for (std::size_t i = 0; i < cfg.stages.size(); ++i) {
    const auto& st = cfg.stages[i];
    h /= st.stride;
    w /= st.stride;
    out.push_back({"enc" + std::to_string(i), conv_flops(cin, wk, st.kernel, st.kernel, h, w),
                   cin * wk * st.kernel * st.kernel + wk, wk * h * w});
    out.push_back({"enc_gdn" + std::to_string(i), gdn_flops(wk, h, w), (wk + 1) * wk + slim_extra,
                   wk * h * w});
    cin = wk;
  }
  const std::size_t n = cfg.stages.size();
  for (std::size_t j = 0; j < n; ++j) {
    const auto& st = cfg.stages[n - 1 - j];
    const std::size_t cout = j + 1 == n ? cfg.input_channels : wk;
    out.push_back({"dec_igdn" + std::to_string(j), gdn_flops(wk, h, w), (wk + 1) * wk + slim_extra,
                   wk * h * w});
    const double flops = conv_flops(wk, cout, st.kernel, st.kernel, h, w);
    h *= st.stride;
    w *= st.stride;
    out.push_back({"dec" + std::to_string(j), flops, wk * cout * st.kernel * st.kernel + cout,
                   cout * h * w});
  }
  return out;
}

/// Forward FLOPs (encoder + decoder) of one image at `level`.
inline double flops_count(const SlimCAEConfig& cfg, std::size_t level, std::size_t h, std::size_t w) {
  double s = 0.0;
  for (const auto& l : layer_costs(cfg, level, h, w)) s += l.flops;
  return s;
}

/// Parameters stored by the whole slimmable model (all levels).
inline std::size_t stored_param_count(const SlimCAEConfig& cfg) {
  const auto& ws = cfg.widths;
  const std::size_t top = ws.max();
  std::size_t n = 0;
  std::size_t cin = cfg.input_channels;
  for (const auto& st : cfg.stages) {
    n += cin * top * st.kernel * st.kernel + top;
    cin = top;
  }
  for (std::size_t j = 0; j < cfg.stages.size(); ++j) {
    const auto& st = cfg.stages[cfg.stages.size() - 1 - j];
    const std::size_t cout = j + 1 == cfg.stages.size() ? cfg.input_channels : top;
    n += top * cout * st.kernel * st.kernel + cout;
  }
  n += 2 * cfg.stages.size() * gdn_param_count(cfg.gdn, ws.values());
  for (std::size_t k = 0; k < ws.levels(); ++k) n += ws[k] * 2 * static_cast<std::size_t>(cfg.support);
  return n;
}

/// Parameters a single level touches, entropy model included.
inline std::size_t active_param_count(const SlimCAEConfig& cfg, std::size_t level) {
  std::size_t n = cfg.widths[level] * 2 * static_cast<std::size_t>(cfg.support);
  for (const auto& l : layer_costs(cfg, level, cfg.downsampling(), cfg.downsampling()))
    n += l.active_params;
  return n;
}

/// Bytes of all GDN/IGDN parameters in the model.
inline double gdn_storage_bytes(const SlimCAEConfig& cfg) {
  return kBytesPerValue * 2.0 * static_cast<double>(cfg.stages.size()) *
         static_cast<double>(gdn_param_count(cfg.gdn, cfg.widths.values()));
}

/// Total bytes of one independent single-width model per width.
inline double independent_models_bytes(const SlimCAEConfig& cfg) {
  double b = 0.0;
  for (std::size_t k = 0; k < cfg.levels(); ++k) {
    SlimCAEConfig c = cfg;
    c.widths = WidthSet({cfg.widths[k]});
    b += kBytesPerValue * static_cast<double>(stored_param_count(c));
  }
  return b;
}

struct MemoryFootprint {
  double param_bytes = 0.0;    // parameters active at the level
  double feature_bytes = 0.0;  // sum of all layer outputs
  double total_model_bytes = 0.0;
};

inline MemoryFootprint memory_footprint(const SlimCAEConfig& cfg, std::size_t level, std::size_t h,
                                        std::size_t w) {
  MemoryFootprint m;
  m.param_bytes = kBytesPerValue * static_cast<double>(active_param_count(cfg, level));
  for (const auto& l : layer_costs(cfg, level, h, w))
    m.feature_bytes += kBytesPerValue * static_cast<double>(l.out_elements);
  m.total_model_bytes = kBytesPerValue * static_cast<double>(stored_param_count(cfg));
  return m;
}

struct LevelCost {
  std::size_t level = 0;
  std::size_t width = 0;
  double flops = 0.0;
  double param_bytes = 0.0;
  double feature_bytes = 0.0;
  double enc_ms = std::numeric_limits<double>::quiet_NaN();
  double dec_ms = std::numeric_limits<double>::quiet_NaN();
};

struct CostReport {
  std::size_t height = 0, width = 0;
  double total_model_bytes = 0.0;
  double independent_bytes = 0.0;
  double gdn_bytes = 0.0;
  std::vector<LevelCost> levels;
};

inline CostReport cost_report(const SlimCAEConfig& cfg, std::size_t h, std::size_t w) {
  CostReport r;
  r.height = h;
  r.width = w;
  r.total_model_bytes = kBytesPerValue * static_cast<double>(stored_param_count(cfg));
  r.independent_bytes = independent_models_bytes(cfg);
  r.gdn_bytes = gdn_storage_bytes(cfg);
  for (std::size_t k = 0; k < cfg.levels(); ++k) {
    const auto m = memory_footprint(cfg, k, h, w);
    r.levels.push_back({k, cfg.widths[k], flops_count(cfg, k, h, w), m.param_bytes, m.feature_bytes});
  }
  return r;
}

/// Median wall-clock milliseconds of `fn` over `runs` calls after `warmup`.
template <class Fn>
double median_ms(Fn&& fn, std::size_t runs = 20, std::size_t warmup = 3) {
  for (std::size_t i = 0; i < warmup; ++i) fn();
  std::vector<double> t;
  for (std::size_t i = 0; i < runs; ++i) {
    const auto a = std::chrono::steady_clock::now();
    fn();
    t.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - a).count());
  }
  std::sort(t.begin(), t.end());
  return runs ? (runs % 2 ? t[runs / 2] : 0.5 * (t[runs / 2 - 1] + t[runs / 2])) : 0.0;
}

/// Encoder and decoder latency (batch 1, no entropy coding or file I/O).
inline void measure_latency(const SlimCAE& model, const Tensor4& x, LevelCost& c,
                            std::size_t runs = 20, std::size_t warmup = 3) {
  const Tensor4 xp = pad_to_multiple(x, model.config().downsampling());
  Tensor4 z;
  c.enc_ms = median_ms([&] { z = model.encode_latent(xp, c.level); }, runs, warmup);
  const Tensor4 q = quantize(z, model.config().support).symbols;
  c.dec_ms = median_ms([&] { (void)model.decode_latent(q, c.level); }, runs, warmup);
}

// ---------------------------------------------------------------------------
// BD-rate

namespace detail {

/// Least-squares cubic coefficients (c0..c3) of y over x.
inline Eigen::Vector4d cubic_fit(const std::vector<double>& x, const std::vector<double>& y) {
  Eigen::MatrixXd a(x.size(), 4);
  Eigen::VectorXd b(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    for (int p = 0; p < 4; ++p) a(static_cast<Eigen::Index>(i), p) = std::pow(x[i], p);
    b(static_cast<Eigen::Index>(i)) = y[i];
  }
  return a.colPivHouseholderQr().solve(b);
}

inline double cubic_integral(const Eigen::Vector4d& c, double lo, double hi) {
  auto prim = [&](double x) {
    return c(0) * x + c(1) * x * x / 2 + c(2) * x * x * x / 3 + c(3) * x * x * x * x / 4;
  };
  return prim(hi) - prim(lo);
}

}  // namespace detail

/// Bjontegaard delta rate of `a` relative to `b`, in percent (negative when
/// `a` needs fewer bits for the same PSNR).
inline double bd_rate(const RDCurve& a, const RDCurve& b) {
  if (a.size() < 4 || b.size() < 4) throw ConfigError("BD-rate needs at least 4 points per curve");
  auto unpack = [](const RDCurve& c, std::vector<double>& d, std::vector<double>& lr) {
    for (const auto& p : c) {
      if (!(p.rate > 0)) throw ConfigError("BD-rate needs positive rates");
      d.push_back(p.psnr);
      lr.push_back(std::log(p.rate));
    }
  };
  std::vector<double> da, ra, db, rb;
  unpack(a, da, ra);
  unpack(b, db, rb);
  const double lo = std::max(*std::min_element(da.begin(), da.end()), *std::min_element(db.begin(), db.end()));
  const double hi = std::min(*std::max_element(da.begin(), da.end()), *std::max_element(db.begin(), db.end()));
  if (!(lo < hi)) throw ConfigError("BD-rate: curves have no overlapping distortion range");
  // Centre the abscissa for a well-conditioned fit.
  const double mid = 0.5 * (lo + hi);
  for (double& v : da) v -= mid;
  for (double& v : db) v -= mid;
  const auto ca = detail::cubic_fit(da, ra), cb = detail::cubic_fit(db, rb);
  const double avg = (detail::cubic_integral(ca, lo - mid, hi - mid) -
                      detail::cubic_integral(cb, lo - mid, hi - mid)) /
                     (hi - lo);
  return (std::exp(avg) - 1.0) * 100.0;
}

// ---------------------------------------------------------------------------
// RD sweep

struct SweepRow {
  std::size_t level = 0;  // 1-based in emitted tables
  std::size_t width = 0;
  double lambda = std::numeric_limits<double>::quiet_NaN();
  double est_bpp = 0.0;
  double actual_bpp = 0.0;
  double psnr_db = 0.0;
  double flops = 0.0;
  double param_bytes = 0.0;
  double feature_bytes = 0.0;
  double enc_ms = std::numeric_limits<double>::quiet_NaN();
  double dec_ms = std::numeric_limits<double>::quiet_NaN();

  bool operator==(const SweepRow&) const = default;
};

struct SweepOptions {
  std::vector<double> lambdas;  // optional, one per level
  std::size_t timing_runs = 20;
  std::size_t warmup = 3;
};

/// Per level: mean estimated bpp, mean coded bpp, mean PSNR of the decoded
/// images, and costs at the first image's size.
inline std::vector<SweepRow> rd_sweep(const SlimCAE& model, const Dataset& data,
                                      const SweepOptions& opt = {}) {
  if (data.empty()) throw DataError("sweep dataset is empty");
  std::vector<SweepRow> rows;
  const Shape s0 = data[0].shape();
  for (std::size_t k = 0; k < model.levels(); ++k) {
    SweepRow r;
    r.level = k + 1;
    r.width = model.config().widths[k];
    if (!opt.lambdas.empty()) r.lambda = opt.lambdas.at(k);
    for (std::size_t i = 0; i < data.size(); ++i) {
      const auto e = encode_image(data[i], model, k);
      const auto d = decode_image(e.stream, model);
      r.est_bpp += model.entropy().total_bits(e.symbols, k) /
                   static_cast<double>(data[i].shape().h * data[i].shape().w);
      r.actual_bpp += e.stream.bpp();
      r.psnr_db += psnr(data[i], d.image);
    }
    const double n = static_cast<double>(data.size());
    r.est_bpp /= n;
    r.actual_bpp /= n;
    r.psnr_db /= n;
    const auto m = memory_footprint(model.config(), k, s0.h, s0.w);
    r.flops = flops_count(model.config(), k, s0.h, s0.w);
    r.param_bytes = m.param_bytes;
    r.feature_bytes = m.feature_bytes;
    if (opt.timing_runs) {
      LevelCost c{k};
      measure_latency(model, data[0], c, opt.timing_runs, opt.warmup);
      r.enc_ms = c.enc_ms;
      r.dec_ms = c.dec_ms;
    }
    rows.push_back(r);
  }
  return rows;
}

inline const char* kSweepColumns =
    "level,width,lambda,est_bpp,actual_bpp,psnr_db,flops,param_bytes,feature_bytes,enc_ms,dec_ms";

inline void write_sweep_csv(std::ostream& os, const std::vector<SweepRow>& rows) {
  os << kSweepColumns << "\n";
  for (const auto& r : rows)
    os << r.level << "," << r.width << "," << format_double(r.lambda) << "," << format_double(r.est_bpp)
       << "," << format_double(r.actual_bpp) << "," << format_double(r.psnr_db) << ","
       << format_double(r.flops) << "," << format_double(r.param_bytes) << ","
       << format_double(r.feature_bytes) << "," << format_double(r.enc_ms) << ","
       << format_double(r.dec_ms) << "\n";
}

inline std::vector<SweepRow> read_sweep_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != kSweepColumns) throw FormatError("unexpected sweep CSV header");
  std::vector<SweepRow> rows;
  auto num = [](const std::string& s) {
    return s.empty() ? std::numeric_limits<double>::quiet_NaN() : std::stod(s);
  };
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (!line.empty() && line.back() == ',') f.emplace_back();
    if (f.size() != 11) throw FormatError("sweep CSV row has " + std::to_string(f.size()) + " fields");
    SweepRow r;
    r.level = std::stoul(f[0]);
    r.width = std::stoul(f[1]);
    r.lambda = num(f[2]);
    r.est_bpp = num(f[3]);
    r.actual_bpp = num(f[4]);
    r.psnr_db = num(f[5]);
    r.flops = num(f[6]);
    r.param_bytes = num(f[7]);
    r.feature_bytes = num(f[8]);
    r.enc_ms = num(f[9]);
    r.dec_ms = num(f[10]);
    rows.push_back(r);
  }
  return rows;
}

inline nlohmann::json sweep_json(const std::vector<SweepRow>& rows) {
  auto opt = [](double v) { return std::isnan(v) ? nlohmann::json(nullptr) : nlohmann::json(v); };
  nlohmann::json j = nlohmann::json::array();
  for (const auto& r : rows)
    j.push_back({{"level", r.level},           {"width", r.width},
                 {"lambda", opt(r.lambda)},    {"est_bpp", r.est_bpp},
                 {"actual_bpp", r.actual_bpp}, {"psnr_db", r.psnr_db},
                 {"flops", r.flops},           {"param_bytes", r.param_bytes},
                 {"feature_bytes", r.feature_bytes},
                 {"enc_ms", opt(r.enc_ms)},    {"dec_ms", opt(r.dec_ms)}});
  return j;
}

inline std::vector<SweepRow> sweep_from_json(const nlohmann::json& j) {
  auto get = [](const nlohmann::json& v) {
    return v.is_null() ? std::numeric_limits<double>::quiet_NaN() : v.get<double>();
  };
  std::vector<SweepRow> rows;
  for (const auto& e : j)
    rows.push_back({e.at("level").get<std::size_t>(), e.at("width").get<std::size_t>(),
                    get(e.at("lambda")), e.at("est_bpp").get<double>(), e.at("actual_bpp").get<double>(),
                    e.at("psnr_db").get<double>(), e.at("flops").get<double>(),
                    e.at("param_bytes").get<double>(), e.at("feature_bytes").get<double>(),
                    get(e.at("enc_ms")), get(e.at("dec_ms"))});
  return rows;
}

inline nlohmann::json cost_json(const CostReport& r) {
  nlohmann::json j;
  j["height"] = r.height;
  j["width"] = r.width;
  j["total_model_bytes"] = r.total_model_bytes;
  j["independent_models_bytes"] = r.independent_bytes;
  j["gdn_bytes"] = r.gdn_bytes;
  for (const auto& l : r.levels)
    j["levels"].push_back({{"level", l.level + 1},
                           {"width", l.width},
                           {"flops", l.flops},
                           {"param_bytes", l.param_bytes},
                           {"feature_bytes", l.feature_bytes},
                           {"enc_ms", std::isnan(l.enc_ms) ? nlohmann::json(nullptr) : nlohmann::json(l.enc_ms)},
                           {"dec_ms", std::isnan(l.dec_ms) ? nlohmann::json(nullptr) : nlohmann::json(l.dec_ms)}});
  return j;
}

}  // namespace slimcae
