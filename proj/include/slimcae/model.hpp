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

// The slimmable compressive autoencoder.
//
// Encoder: three (slim conv -> GDN) stages. Decoder: three (IGDN -> slim
// transposed conv) stages, the last producing image channels. Entropy
// model: one factorized model per level. Pixels live in [0, 1]; the loss is
// D + lambda * R with D the MSE and R in bits per source pixel.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "slimcae/binary_io.hpp"
#include "slimcae/entropy_model.hpp"
#include "slimcae/rng.hpp"
#include "slimcae/slim_layers.hpp"
#include "slimcae/tape.hpp"

namespace slimcae {

struct StageSpec {
  std::size_t kernel = 5;
  std::size_t stride = 2;
  bool operator==(const StageSpec&) const = default;
};

struct SlimCAEConfig {
  WidthSet widths{{4, 8, 16}};
  std::size_t input_channels = 3;
  std::vector<StageSpec> stages{{5, 4}, {3, 2}, {3, 2}};
  GdnVariant gdn = GdnVariant::kSlimPlus;
  int support = 32;
  // Multiplier applied to [0, 1] pixels before the encoder.
  double input_scale = 1.0;

  bool operator==(const SlimCAEConfig&) const = default;

  std::size_t levels() const { return widths.levels(); }

  std::size_t downsampling() const {
    std::size_t f = 1;
    for (const auto& s : stages) f *= s.stride;
    return f;
  }

  /// Desk-scale default: widths {4, 8, 16}, kernels 5/3/3, strides 4/2/2.
  static SlimCAEConfig desk() { return {}; }

  /// The published architecture: widths {48, 72, 96, 144, 192}, kernels
  /// 9/5/5, strides 4/2/2.
  static SlimCAEConfig full_scale(GdnVariant v = GdnVariant::kSlimPlus) {
    SlimCAEConfig c;
    c.widths = WidthSet({48, 72, 96, 144, 192});
    c.stages = {{9, 4}, {5, 2}, {5, 2}};
    c.gdn = v;
    return c;
  }

  void validate() const {
    if (stages.empty()) throw ConfigError("model needs at least one stage");
    for (const auto& s : stages) {
      if (s.stride == 0) throw ConfigError("stage stride must be >= 1");
      if (s.kernel == 0 || s.kernel % 2 == 0) throw ConfigError("stage kernels must be odd");
    }
    if (input_channels == 0) throw ConfigError("input_channels must be positive");
    if (support < 1 || 2 * support >= (1 << 12)) throw ConfigError("entropy support out of range");
    if (!(input_scale > 0)) throw ConfigError("input_scale must be positive");
  }

  /// Flat key=value lines; parse() inverts it.
  std::string serialize() const {
    std::ostringstream os;
    os.precision(17);
    auto join = [](const auto& v, auto get) {
      std::string s;
      for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(get(v[i]));
      return s;
    };
    os << "widths=" << join(widths.values(), [](std::size_t w) { return w; }) << "\n";
    os << "input_channels=" << input_channels << "\n";
    os << "kernels=" << join(stages, [](const StageSpec& s) { return s.kernel; }) << "\n";
    os << "strides=" << join(stages, [](const StageSpec& s) { return s.stride; }) << "\n";
    os << "gdn=" << to_string(gdn) << "\n";
    os << "support=" << support << "\n";
    os << "input_scale=" << input_scale << "\n";
    return os.str();
  }

  static std::vector<std::size_t> parse_list(const std::string& s, const std::string& key) {
    std::vector<std::size_t> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
      try {
        std::size_t pos = 0;
        const long long v = std::stoll(item, &pos);
        if (pos != item.size() || v < 0) throw std::invalid_argument(item);
        out.push_back(static_cast<std::size_t>(v));
      } catch (const std::exception&) {
        throw ConfigError("invalid list entry '" + item + "' for " + key);
      }
    }
    return out;
  }

  /// Applies one key=value setting; unknown keys are configuration errors.
  void set(const std::string& key, const std::string& value) {
    try {
      if (key == "widths") {
        widths = WidthSet(parse_list(value, key));
      } else if (key == "input_channels") {
        input_channels = std::stoul(value);
      } else if (key == "kernels" || key == "strides") {
        auto v = parse_list(value, key);
        if (stages.size() != v.size()) stages.resize(v.size());
        for (std::size_t i = 0; i < v.size(); ++i)
          (key == "kernels" ? stages[i].kernel : stages[i].stride) = v[i];
      } else if (key == "gdn") {
        gdn = parse_gdn_variant(value);
      } else if (key == "support") {
        support = std::stoi(value);
      } else if (key == "input_scale") {
        input_scale = std::stod(value);
      } else {
        throw ConfigError("unknown model setting '" + key + "'");
      }
    } catch (const std::invalid_argument&) {
      throw ConfigError("invalid value '" + value + "' for " + key);
    } catch (const std::out_of_range&) {
      throw ConfigError("value out of range for " + key);
    }
  }

  static SlimCAEConfig parse(const std::string& text) {
    SlimCAEConfig c;
    std::stringstream ss(text);
    std::string line;
    std::size_t nk = 0, ns = 0;
    while (std::getline(ss, line)) {
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw FormatError("malformed config line '" + line + "'");
      const std::string key = line.substr(0, eq), val = line.substr(eq + 1);
      c.set(key, val);
      if (key == "kernels") nk = parse_list(val, key).size();
      if (key == "strides") ns = parse_list(val, key).size();
    }
    if (nk != ns) throw ConfigError("kernels and strides must have the same length");
    c.validate();
    return c;
  }
};

/// Rate/distortion measurement of one level.
struct RDPoint {
  std::size_t level = 0;
  double rate = 0.0;  // bits per source pixel
  double mse = 0.0;
  double psnr = 0.0;
};
using RDCurve = std::vector<RDPoint>;

inline constexpr double kPsnrCap = 100.0;

/// 10 log10(1 / MSE) for [0, 1] images, capped at 100 dB.
inline double psnr_from_mse(double mse) {
  if (mse < 1e-10) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

inline double mse(const Tensor4& a, const Tensor4& b) {
  if (a.shape() != b.shape())
    throw ConfigError("mse: shape mismatch " + a.shape().str() + " vs " + b.shape().str());
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return a.size() ? acc / static_cast<double>(a.size()) : 0.0;
}

inline double psnr(const Tensor4& x, const Tensor4& xhat) { return psnr_from_mse(mse(x, xhat)); }

/// Zero-pads height and width up to a multiple of `factor` (bottom/right).
inline Tensor4 pad_to_multiple(const Tensor4& x, std::size_t factor) {
  const Shape s = x.shape();
  const std::size_t h = (s.h + factor - 1) / factor * factor;
  const std::size_t w = (s.w + factor - 1) / factor * factor;
  if (h == s.h && w == s.w) return x;
  Tensor4 out({s.n, s.c, h, w});
  add_into_leading(out, x);
  return out;
}

inline Tensor4 crop(const Tensor4& x, std::size_t h, std::size_t w) {
  const Shape s = x.shape();
  return leading_slice(x, {s.n, s.c, h, w});
}

inline Tensor4 clip01(Tensor4 x) {
  for (double& v : x.data()) v = std::clamp(v, 0.0, 1.0);
  return x;
}

/// Distortion and rate of one level inside a loss evaluation.
struct LevelTerms {
  std::size_t level = 0;
  Var distortion;  // MSE
  Var rate;        // bpp
  double lambda = 0.0;
};

struct LossResult {
  Var loss;
  std::vector<LevelTerms> terms;

  double distortion(std::size_t i) const { return terms[i].distortion.value().item(); }
  double rate(std::size_t i) const { return terms[i].rate.value().item(); }
};

/// One minibatch prepared for the loss: padded images plus the size of the
/// unpadded region the distortion and bpp refer to.
struct Batch {
  Tensor4 images;  // (n, C, H, W), H and W multiples of the downsampling factor
  std::size_t height = 0;
  std::size_t width = 0;
};

inline Batch make_batch(const Tensor4& x, std::size_t factor) {
  return {pad_to_multiple(x, factor), x.shape().h, x.shape().w};
}

class SlimCAE {
 public:
  explicit SlimCAE(SlimCAEConfig cfg = SlimCAEConfig::desk(), std::uint64_t seed = 0)
      : cfg_(std::move(cfg)) {
    cfg_.validate();
    build();
    initialize(seed);
  }

  SlimCAE(const SlimCAE&) = delete;
  SlimCAE& operator=(const SlimCAE&) = delete;

  const SlimCAEConfig& config() const { return cfg_; }
  std::size_t levels() const { return cfg_.levels(); }
  std::size_t latent_channels(std::size_t level) const { return cfg_.widths[level]; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  const FactorizedEntropyModel& entropy() const { return entropy_; }
  FactorizedEntropyModel& entropy() { return entropy_; }
  const std::vector<SlimConv>& encoder_convs() const { return enc_; }
  const std::vector<SlimConv>& decoder_convs() const { return dec_; }
  const std::vector<SlimGdn>& encoder_gdns() const { return enc_gdn_; }
  const std::vector<SlimGdn>& decoder_gdns() const { return dec_gdn_; }

  /// Re-draws conv weights from `seed` and resets GDN and entropy params.
  void initialize(std::uint64_t seed) {
    Rng rng(seed, RngStream::kInit);
    for (auto& l : enc_) l.init(rng);
    for (auto& l : dec_) l.init(rng);
    for (auto& g : enc_gdn_) g.reset();
    for (auto& g : dec_gdn_) g.reset();
    entropy_.init_laplacian(1.0);
  }

  Var encode(Tape& tape, Var x, std::size_t level) const {
    cfg_.widths.check(level);
    const std::size_t f = cfg_.downsampling();
    if (x.shape().h % f || x.shape().w % f)
      throw InternalError("encode: input " + x.shape().str() + " is not padded to a multiple of " +
                          std::to_string(f));
    Var y = cfg_.input_scale == 1.0 ? x : ops::scale(x, cfg_.input_scale);
    for (std::size_t i = 0; i < enc_.size(); ++i) {
      y = enc_[i].forward(tape, y, level);
      y = enc_gdn_[i].forward(tape, y, level);
    }
    return y;
  }

  Var decode(Tape& tape, Var z, std::size_t level) const {
    cfg_.widths.check(level);
    if (z.shape().c != cfg_.widths[level])
      throw ConfigError("decode: latent has " + std::to_string(z.shape().c) + " channels, level " +
                        std::to_string(level + 1) + " expects " +
                        std::to_string(cfg_.widths[level]));
    Var y = z;
    for (std::size_t i = 0; i < dec_.size(); ++i) {
      y = dec_gdn_[i].forward(tape, y, level);
      y = dec_[i].forward(tape, y, level);
    }
    return y;
  }

  /// z = f(x) at `level` for a padded [0, 1] image.
  Tensor4 encode_latent(const Tensor4& x, std::size_t level) const {
    Tape tape;
    return encode(tape, tape.constant(x), level).value();
  }

  /// x_hat = g(z) at `level` (unclipped).
  Tensor4 decode_latent(const Tensor4& z, std::size_t level) const {
    Tape tape;
    return decode(tape, tape.constant(z), level).value();
  }

  /// D + lambda R at one level with noisy latents. `noise` must cover at
  /// least the level's latent channels; its leading channels are used.
  LossResult loss_single(Tape& tape, const Batch& b, std::size_t level, double lambda,
                         const Tensor4& noise, ClampStats* stats = nullptr) const {
    LossResult r;
    r.terms.push_back(level_terms(tape, b, level, lambda, noise, stats));
    r.loss = combine(r.terms);
    return r;
  }

  /// Sum over levels of D^(k) + lambda^(k) R^(k), one forward per level,
  /// sharing one noise draw (sliced per level).
  LossResult loss_joint(Tape& tape, const Batch& b, const std::vector<double>& lambdas,
                        const Tensor4& noise, ClampStats* stats = nullptr) const {
    if (lambdas.size() != levels())
      throw ConfigError("loss_joint: expected " + std::to_string(levels()) + " lambdas, got " +
                        std::to_string(lambdas.size()));
    LossResult r;
    for (std::size_t k = 0; k < levels(); ++k)
      r.terms.push_back(level_terms(tape, b, k, lambdas[k], noise, stats));
    r.loss = combine(r.terms);
    return r;
  }

  /// Joint loss for the quality-scalable variant: the encoder always runs at
  /// the top level and level l decodes the first w^(l) latent channels; the
  /// rate of level l is the cost of those channels under the top-level
  /// entropy model, which codes every channel group.
  LossResult loss_scalable(Tape& tape, const Batch& b, const std::vector<double>& lambdas,
                           const Tensor4& noise) const {
    if (lambdas.size() != levels()) throw ConfigError("loss_scalable: lambda count mismatch");
    const std::size_t top = levels() - 1;
    const double pixels = static_cast<double>(b.images.shape().n * b.height * b.width);
    Var x = tape.constant(b.images);
    Var z = encode(tape, x, top);
    Var zt = ops::add_constant(z, latent_noise(noise, z.shape()));
    Var logits = tape.param(entropy_.logits(top));
    LossResult r;
    for (std::size_t l = 0; l < levels(); ++l) {
      const std::size_t c = cfg_.widths[l];
      Var zl = ops::slice_channels(zt, c);
      Var bits = ops::entropy_bits(zl, ops::slice_range(logits, 0, 0, c), cfg_.support);
      Var xhat = decode(tape, zl, l);
      r.terms.push_back({l, ops::mse_region(xhat, b.images, b.height, b.width),
                         ops::scale(bits, 1.0 / pixels), lambdas[l]});
    }
    r.loss = combine(r.terms);
    return r;
  }

  /// Noise tensor shaped for the top-level latent of batch `b`.
  Tensor4 draw_noise(const Batch& b, Rng& rng) const {
    const std::size_t f = cfg_.downsampling();
    const Shape s = b.images.shape();
    return uniform_noise({s.n, cfg_.widths.max(), s.h / f, s.w / f}, rng);
  }

  /// A single-level model whose parameters are copies of this model's
  /// level-`level` slices.
  std::unique_ptr<SlimCAE> extract_level(std::size_t level) const {
    cfg_.widths.check(level);
    SlimCAEConfig c = cfg_;
    c.widths = WidthSet({cfg_.widths[level]});
    auto m = std::make_unique<SlimCAE>(c, 0);
    for (std::size_t i = 0; i < enc_.size(); ++i) {
      copy_conv(enc_[i], m->enc_[i], level);
      copy_conv(dec_[i], m->dec_[i], level);
      copy_gdn(enc_gdn_[i], m->enc_gdn_[i], level);
      copy_gdn(dec_gdn_[i], m->dec_gdn_[i], level);
    }
    m->entropy_.logits(0).value = entropy_.logits(level).value;
    return m;
  }

  // -------------------------------------------------------------------------
  // Checkpoints

  Bytes save() const {
    ByteWriter w;
    w.bytes("SCCK", 4);
    w.u32(kCheckpointVersion);
    w.str(cfg_.serialize());
    w.u32(static_cast<std::uint32_t>(params_.size()));
    for (std::size_t i = 0; i < params_.size(); ++i) {
      const Param& p = params_[i];
      w.str(p.name);
      const Shape s = p.value.shape();
      w.u32(static_cast<std::uint32_t>(s.n));
      w.u32(static_cast<std::uint32_t>(s.c));
      w.u32(static_cast<std::uint32_t>(s.h));
      w.u32(static_cast<std::uint32_t>(s.w));
      for (double v : p.value.data()) w.f64(v);
    }
    return w.take();
  }

  static std::unique_ptr<SlimCAE> load(const Bytes& bytes) {
    ByteReader r(bytes);
    char magic[4];
    r.bytes(magic, 4);
    if (std::string(magic, 4) != "SCCK") throw FormatError("not a SlimCAE checkpoint");
    const std::uint32_t version = r.u32();
    if (version != kCheckpointVersion)
      throw FormatError("unsupported checkpoint version " + std::to_string(version));
    auto m = std::make_unique<SlimCAE>(SlimCAEConfig::parse(r.str()), 0);
    const std::uint32_t count = r.u32();
    if (count != m->params_.size())
      throw FormatError("checkpoint has " + std::to_string(count) + " parameters, model expects " +
                        std::to_string(m->params_.size()));
    for (std::uint32_t i = 0; i < count; ++i) {
      const std::string name = r.str();
      Param& p = m->params_.get(name);
      Shape s;
      s.n = r.u32();
      s.c = r.u32();
      s.h = r.u32();
      s.w = r.u32();
      if (s != p.value.shape())
        throw FormatError("parameter " + name + " has shape " + s.str() + ", expected " +
                          p.value.shape().str());
      for (double& v : p.value.data()) v = r.f64();
    }
    if (r.remaining()) throw FormatError("trailing bytes in checkpoint");
    return m;
  }

  /// 64-bit identity of config plus parameters; carried in bitstreams.
  std::uint64_t model_hash() const { return fnv1a64(save()); }

  static constexpr std::uint32_t kCheckpointVersion = 1;

 private:
  void build() {
    const auto& ws = cfg_.widths;
    const auto wide = follow_widths(ws);
    const auto img = fixed_channels(ws, cfg_.input_channels);
    const std::size_t n = cfg_.stages.size();
    for (std::size_t i = 0; i < n; ++i) {
      const auto& st = cfg_.stages[i];
      const ConvGeometry g{st.stride, st.kernel / 2};
      enc_.emplace_back(params_, "enc" + std::to_string(i), i == 0 ? img : wide, wide, st.kernel, g,
                        false);
      enc_gdn_.emplace_back(params_, "enc_gdn" + std::to_string(i), ws, cfg_.gdn, false);
    }
    for (std::size_t j = 0; j < n; ++j) {
      const auto& st = cfg_.stages[n - 1 - j];
      const ConvGeometry g{st.stride, st.kernel / 2};
      // Odd kernels with pad k/2: out_pad s-1 makes the output exactly in*s.
      const std::size_t out_pad = st.stride - 1;
      dec_gdn_.emplace_back(params_, "dec_igdn" + std::to_string(j), ws, cfg_.gdn, true);
      dec_.emplace_back(params_, "dec" + std::to_string(j), wide, j + 1 == n ? img : wide,
                        st.kernel, g, true, out_pad);
    }
    entropy_ = FactorizedEntropyModel(params_, "entropy", ws, cfg_.support);
  }

  static Tensor4 latent_noise(const Tensor4& noise, const Shape& zs) {
    if (noise.empty()) return Tensor4(zs);
    return leading_slice(noise, zs);
  }

  LevelTerms level_terms(Tape& tape, const Batch& b, std::size_t level, double lambda,
                         const Tensor4& noise, ClampStats* stats) const {
    const double pixels = static_cast<double>(b.images.shape().n * b.height * b.width);
    Var x = tape.constant(b.images);
    Var z = encode(tape, x, level);
    Var zt = ops::add_constant(z, latent_noise(noise, z.shape()));
    Var xhat = decode(tape, zt, level);
    return {level, ops::mse_region(xhat, b.images, b.height, b.width),
            entropy_.rate_bpp(tape, zt, level, pixels, stats), lambda};
  }

  static Var combine(const std::vector<LevelTerms>& terms) {
    Var total;
    for (std::size_t i = 0; i < terms.size(); ++i) {
      Var t = ops::add(terms[i].distortion, ops::scale(terms[i].rate, terms[i].lambda));
      total = i ? ops::add(total, t) : t;
    }
    if (!std::isfinite(total.value().item()))
      throw NumericError("non-finite loss (D/R diverged)");
    return total;
  }

  static void copy_conv(const SlimConv& from, SlimConv& to, std::size_t level) {
    to.kernel().value = leading_slice(from.kernel().value, from.kernel_slice(level));
    to.bias().value = leading_slice(from.bias().value, {from.out_channels(level), 1, 1, 1});
  }

  static void copy_gdn(const SlimGdn& from, SlimGdn& to, std::size_t level) {
    const std::size_t w = from.widths()[level];
    if (from.variant() == GdnVariant::kSwitch) {
      to.gamma_param().value = from.gamma_param(level).value;
      to.beta_param().value = from.beta_param(level).value;
      return;
    }
    to.gamma_param().value = leading_slice(from.gamma_param().value, {w, w, 1, 1});
    to.beta_param().value = leading_slice(from.beta_param().value, {w, 1, 1, 1});
    if (from.variant() == GdnVariant::kSlimPlus)
      for (int i = 0; i < 4; ++i) to.modulation(0)[i]->value = from.modulation(level)[i]->value;
  }

  SlimCAEConfig cfg_;
  ParamStore params_;
  std::vector<SlimConv> enc_, dec_;
  std::vector<SlimGdn> enc_gdn_, dec_gdn_;
  FactorizedEntropyModel entropy_;
};

}  // namespace slimcae
