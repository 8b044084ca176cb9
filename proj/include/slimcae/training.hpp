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


// Optimizer, training loops and the lambda schedules.

#pragma once

// pchip.hpp calls unqualified isnan.
#include <math.h>

#include <boost/math/interpolators/pchip.hpp>

#include <cmath>
#include <cstdint>
#include <functional>
#include <iomanip>
#include <iostream>
#include <limits>
#include <memory>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "slimcae/binary_io.hpp"
#include "slimcae/data_io.hpp"
#include "slimcae/model.hpp"

namespace slimcae {

/// Adam with separate learning rates for the main and entropy groups.
class Adam {
 public:
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  void step(ParamStore& store, double lr_main, double lr_entropy) {
    if (m_.empty()) {
      for (std::size_t i = 0; i < store.size(); ++i) {
        m_.emplace_back(store[i].value.shape());
        v_.emplace_back(store[i].value.shape());
      }
    }
    if (m_.size() != store.size()) throw InternalError("optimizer state does not match the model");
    ++t_;
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < store.size(); ++i) {
      Param& p = store[i];
      const double lr = p.group == ParamGroup::kEntropy ? lr_entropy : lr_main;
      auto m = m_[i].data();
      auto v = v_[i].data();
      auto g = p.grad.data();
      auto x = p.value.data();
      for (std::size_t j = 0; j < x.size(); ++j) {
        m[j] = beta1 * m[j] + (1 - beta1) * g[j];
        v[j] = beta2 * v[j] + (1 - beta2) * g[j] * g[j];
        x[j] -= lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + eps);
      }
    }
  }

  std::uint64_t steps() const { return t_; }

  void write(ByteWriter& w) const {
    w.u64(t_);
    w.u32(static_cast<std::uint32_t>(m_.size()));
    for (std::size_t i = 0; i < m_.size(); ++i) {
      for (double v : m_[i].data()) w.f64(v);
      for (double v : v_[i].data()) w.f64(v);
    }
  }

  void read(ByteReader& r, const ParamStore& store) {
    t_ = r.u64();
    const std::uint32_t n = r.u32();
    m_.clear();
    v_.clear();
    if (n == 0) return;
    if (n != store.size()) throw FormatError("optimizer state does not match the model");
    for (std::size_t i = 0; i < n; ++i) {
      m_.emplace_back(store[i].value.shape());
      v_.emplace_back(store[i].value.shape());
      for (double& v : m_[i].data()) v = r.f64();
      for (double& v : v_[i].data()) v = r.f64();
    }
  }

 private:
  std::uint64_t t_ = 0;
  std::vector<Tensor4> m_, v_;
};

enum class LossMode { kJoint, kScalable };

struct TrainOptions {
  double lr_main = 2e-3;
  double lr_entropy = 1e-2;
  std::size_t batch_size = 8;
  std::size_t crop = 24;
  std::uint64_t seed = 0;
};

struct StepStats {
  std::uint64_t iteration = 0;
  double loss = 0.0;
  std::vector<double> mse, rate;
};

/// Minibatch training on the joint loss. Batch and noise of iteration t are
/// pure functions of (seed, t), so a run restored from (checkpoint, Adam
/// state, iteration) continues bit-identically.
class Trainer {
 public:
  Trainer(SlimCAE& model, const Dataset& train, TrainOptions opt)
      : model_(&model), opt_(opt), sampler_(train, {opt.crop, opt.batch_size, opt.seed}) {}

  std::uint64_t iteration() const { return iteration_; }
  SlimCAE& model() const { return *model_; }
  void set_iteration(std::uint64_t t) { iteration_ = t; }
  Adam& adam() { return adam_; }
  const Adam& adam() const { return adam_; }
  const TrainOptions& options() const { return opt_; }
  /// Multiplies both learning rates (the fine-tuning phase halves them).
  void set_lr_scale(double s) { lr_scale_ = s; }
  double lr_scale() const { return lr_scale_; }

  StepStats step(const std::vector<double>& lambdas, LossMode mode = LossMode::kJoint) {
    const Batch b = make_batch(sampler_.batch(iteration_), model_->config().downsampling());
    Rng noise_rng(opt_.seed, RngStream::kNoise, iteration_);
    const Tensor4 noise = model_->draw_noise(b, noise_rng);
    ParamStore& store = model_->params();
    store.zero_grads();
    Tape tape;
    StepStats st;
    st.iteration = iteration_;
    try {
      LossResult r = mode == LossMode::kJoint ? model_->loss_joint(tape, b, lambdas, noise)
                                              : model_->loss_scalable(tape, b, lambdas, noise);
      tape.backward(r.loss);
      for (std::size_t i = 0; i < store.size(); ++i)
        if (!store[i].grad.all_finite())
          throw NumericError("non-finite gradient for " + store[i].name);
      st.loss = r.loss.value().item();
      for (std::size_t k = 0; k < r.terms.size(); ++k) {
        st.mse.push_back(r.distortion(k));
        st.rate.push_back(r.rate(k));
      }
    } catch (const NumericError& e) {
      throw NumericError("training diverged at iteration " + std::to_string(iteration_) + ": " +
                         e.what() + " (parameters left at the last good step)");
    }
    adam_.step(store, opt_.lr_main * lr_scale_, opt_.lr_entropy * lr_scale_);
    ++iteration_;
    return st;
  }

  /// `iterations` steps at fixed lambdas; returns the last step's stats.
  StepStats run(const std::vector<double>& lambdas, std::size_t iterations,
                LossMode mode = LossMode::kJoint) {
    StepStats last;
    for (std::size_t i = 0; i < iterations; ++i) last = step(lambdas, mode);
    return last;
  }

 private:
  SlimCAE* model_;
  TrainOptions opt_;
  BatchSampler sampler_;
  Adam adam_;
  std::uint64_t iteration_ = 0;
  double lr_scale_ = 1.0;
};

/// `iterations` steps of minibatch training on the joint loss.
inline void sgd_train(SlimCAE& model, const Dataset& data, const std::vector<double>& lambdas,
                      std::size_t iterations, const TrainOptions& opt) {
  if (lambdas.size() != model.levels())
    throw ConfigError("expected " + std::to_string(model.levels()) + " lambdas");
  Trainer t(model, data, opt);
  t.run(lambdas, iterations);
}

/// Naive training: every level shares one lambda.
inline void train_naive(SlimCAE& model, const Dataset& data, double lambda, std::size_t iterations,
                        const TrainOptions& opt) {
  sgd_train(model, data, std::vector<double>(model.levels(), lambda), iterations, opt);
}

// ---------------------------------------------------------------------------
// Validation

struct ImageMeasure {
  double bits = 0.0;  // estimated code length of the quantized latent
  double bpp = 0.0;
  double mse = 0.0;
  double psnr = 0.0;
};

/// Hard-quantized measurement of one image at `level`.
inline ImageMeasure measure_image(const SlimCAE& model, const Tensor4& x, std::size_t level) {
  const Tensor4 xp = pad_to_multiple(x, model.config().downsampling());
  const auto q = quantize(model.encode_latent(xp, level), model.config().support);
  ImageMeasure m;
  m.bits = model.entropy().total_bits(q.symbols, level);
  m.bpp = m.bits / static_cast<double>(x.shape().h * x.shape().w);
  const Tensor4 xhat =
      clip01(crop(model.decode_latent(q.symbols, level), x.shape().h, x.shape().w));
  m.mse = mse(x, xhat);
  m.psnr = psnr_from_mse(m.mse);
  return m;
}

/// Per level: mean estimated bpp and mean PSNR over the set (no noise).
inline RDCurve validate_rd(const SlimCAE& model, const Dataset& val) {
  if (val.empty()) throw DataError("validation set is empty");
  RDCurve curve;
  for (std::size_t k = 0; k < model.levels(); ++k) {
    RDPoint p;
    p.level = k;
    for (std::size_t i = 0; i < val.size(); ++i) {
      const auto m = measure_image(model, val[i], k);
      p.rate += m.bpp;
      p.mse += m.mse;
      p.psnr += m.psnr;
    }
    const double n = static_cast<double>(val.size());
    p.rate /= n;
    p.mse /= n;
    p.psnr /= n;
    curve.push_back(p);
  }
  return curve;
}

inline double rate_spread(const RDCurve& c) {
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto& p : c) {
    lo = std::min(lo, p.rate);
    hi = std::max(hi, p.rate);
  }
  return c.empty() ? 0.0 : hi - lo;
}

// ---------------------------------------------------------------------------
// Estimated lambdas from independent RD curves

/// One independent model's RD curve: (rate bpp, distortion MSE) samples.
struct RateDistortionSamples {
  std::vector<double> rate;
  std::vector<double> mse;
};

/// Monotone interpolation of log D over log R.
class LogLogCurve {
 public:
  explicit LogLogCurve(const RateDistortionSamples& s) {
    if (s.rate.size() != s.mse.size() || s.rate.size() < 3)
      throw ConfigError("an RD curve needs at least 3 (rate, distortion) points");
    std::vector<std::size_t> idx(s.rate.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return s.rate[a] < s.rate[b]; });
    for (auto i : idx) {
      if (!(s.rate[i] > 0 && s.mse[i] > 0)) throw ConfigError("RD curve points must be positive");
      if (!x_.empty() && std::log(s.rate[i]) <= x_.back())
        throw ConfigError("RD curve rates must be distinct");
      x_.push_back(std::log(s.rate[i]));
      y_.push_back(std::log(s.mse[i]));
    }
    if (x_.size() >= 4) {
      auto x = x_, y = y_;
      spline_.emplace(std::move(x), std::move(y));
    }
  }

  double min_rate() const { return std::exp(x_.front()); }
  double max_rate() const { return std::exp(x_.back()); }

  /// log D at log R (PCHIP with >= 4 points, linear otherwise).
  double log_d(double lr) const {
    lr = std::clamp(lr, x_.front(), x_.back());
    if (spline_) return (*spline_)(lr);
    std::size_t i = 1;
    while (i + 1 < x_.size() && x_[i] < lr) ++i;
    const double t = (lr - x_[i - 1]) / (x_[i] - x_[i - 1]);
    return y_[i - 1] + t * (y_[i] - y_[i - 1]);
  }

  double distortion(double rate) const { return std::exp(log_d(std::log(rate))); }

  /// -dD/dR at `rate` by a central difference on the interpolant.
  double neg_slope(double rate) const {
    const double h = 1e-4;
    const double lo = std::max(std::log(rate) - h, x_.front());
    const double hi = std::min(std::log(rate) + h, x_.back());
    return -(std::exp(log_d(hi)) - std::exp(log_d(lo))) / (std::exp(hi) - std::exp(lo));
  }

 private:
  std::vector<double> x_, y_;
  std::optional<boost::math::interpolators::pchip<std::vector<double>>> spline_;
};

struct LambdaEstimate {
  std::vector<double> lambdas;
  std::vector<double> divergence_rates;  // one per k < K
};

/// For each k < K: the lowest rate at which curve k's distortion exceeds
/// curve k+1's by more than `delta` (relative), and lambda^(k) = -dD_k/dR
/// there. lambda^(K) = lambda_top. Curves are ordered by width.
inline LambdaEstimate estimate_lambdas_from_curves(const std::vector<RateDistortionSamples>& curves,
                                                   double lambda_top, double delta = 0.05) {
  if (curves.empty()) throw ConfigError("no RD curves given");
  if (!(delta > 0)) throw ConfigError("divergence tolerance must be positive");
  LambdaEstimate est;
  for (std::size_t k = 0; k + 1 < curves.size(); ++k) {
    const LogLogCurve a(curves[k]), b(curves[k + 1]);
    const double lo = std::log(std::max(a.min_rate(), b.min_rate()));
    const double hi = std::log(std::min(a.max_rate(), b.max_rate()));
    if (!(lo < hi)) throw ConfigError("RD curves " + std::to_string(k + 1) + " and " +
                                      std::to_string(k + 2) + " share no rate range");
    auto gap = [&](double lr) {
      const double da = std::exp(a.log_d(lr)), db = std::exp(b.log_d(lr));
      return (da - db) / db - delta;
    };
    constexpr int kGrid = 400;
    double prev = lo;
    std::optional<double> found;
    for (int g = 0; g <= kGrid; ++g) {
      const double lr = lo + (hi - lo) * g / kGrid;
      if (gap(lr) > 0) {
        if (g == 0) {
          found = lr;
        } else {
          double l = prev, r = lr;
          for (int it = 0; it < 100; ++it) {
            const double mid = 0.5 * (l + r);
            (gap(mid) > 0 ? r : l) = mid;
          }
          found = r;
        }
        break;
      }
      prev = lr;
    }
    if (!found)
      throw ConfigError("RD curves " + std::to_string(k + 1) + " and " + std::to_string(k + 2) +
                        " never diverge by more than the tolerance; sweep a wider lambda range");
    const double rate = std::exp(*found);
    est.divergence_rates.push_back(rate);
    est.lambdas.push_back(a.neg_slope(rate));
  }
  est.lambdas.push_back(lambda_top);
  return est;
}

// ---------------------------------------------------------------------------
// Lambda scheduling

struct ScheduleParams {
  double lambda_top = 0.01;
  double kappa = 1.25;
  std::size_t T = 200;
  std::size_t M = 7;

  void validate() const {
    if (!(kappa > 1)) throw ConfigError("kappa must be > 1");
    if (T < 1) throw ConfigError("T must be >= 1");
    if (M < 1) throw ConfigError("M must be >= 1");
    if (!(lambda_top > 0)) throw ConfigError("lambda_top must be positive");
  }
};

/// One row of the training log.
struct LogRecord {
  std::uint64_t iteration = 0;
  std::string phase;
  int level = 0;  // scheduled level i (1-based), 0 outside scheduling
  int step = 0;   // scheduling step m
  std::vector<double> lambdas;
  std::vector<double> rate, psnr;
  double xi = std::numeric_limits<double>::quiet_NaN();
  std::string event;
};

inline std::string format_double(double v) {
  if (std::isnan(v)) return "";
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

inline std::string join_doubles(const std::vector<double>& v, char sep = ';') {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? std::string(1, sep) : "") + format_double(v[i]);
  return s;
}

inline void write_log_csv(std::ostream& os, const std::vector<LogRecord>& log) {
  os << "iteration,phase,level,step,lambdas,rates_bpp,psnr_db,xi,event\n";
  for (const auto& r : log)
    os << r.iteration << "," << r.phase << "," << r.level << "," << r.step << ","
       << join_doubles(r.lambdas) << "," << join_doubles(r.rate) << "," << join_doubles(r.psnr)
       << "," << format_double(r.xi) << "," << r.event << "\n";
}

/// Alg. state: level being scheduled, step within it, reference slope and
/// history. Everything needed to resume between scheduling steps.
struct TrainState {
  std::uint64_t iteration = 0;
  std::uint64_t seed = 0;
  std::vector<double> lambdas;
  int level = 0;  // 1-based level i being scheduled; 0 = finished
  int step = 0;   // steps taken at this level
  double xi_ref = std::numeric_limits<double>::quiet_NaN();
  std::vector<bool> frozen;
  std::vector<double> xi_history;
  std::vector<LogRecord> log;
  bool started = false;

  bool done() const { return started && level == 0; }

  void write(ByteWriter& w) const {
    w.u64(iteration);
    w.u64(seed);
    w.u32(static_cast<std::uint32_t>(lambdas.size()));
    for (double v : lambdas) w.f64(v);
    w.u32(static_cast<std::uint32_t>(level));
    w.u32(static_cast<std::uint32_t>(step));
    w.f64(xi_ref);
    w.u32(static_cast<std::uint32_t>(frozen.size()));
    for (bool f : frozen) w.u8(f);
    w.u32(static_cast<std::uint32_t>(xi_history.size()));
    for (double v : xi_history) w.f64(v);
    w.u8(started);
    w.u32(static_cast<std::uint32_t>(log.size()));
    for (const auto& r : log) {
      w.u64(r.iteration);
      w.str(r.phase);
      w.u32(static_cast<std::uint32_t>(r.level));
      w.u32(static_cast<std::uint32_t>(r.step));
      for (const auto* v : {&r.lambdas, &r.rate, &r.psnr}) {
        w.u32(static_cast<std::uint32_t>(v->size()));
        for (double x : *v) w.f64(x);
      }
      w.f64(r.xi);
      w.str(r.event);
    }
  }

  static TrainState read(ByteReader& r) {
    TrainState s;
    s.iteration = r.u64();
    s.seed = r.u64();
    s.lambdas.resize(r.u32());
    for (double& v : s.lambdas) v = r.f64();
    s.level = static_cast<int>(r.u32());
    s.step = static_cast<int>(r.u32());
    s.xi_ref = r.f64();
    s.frozen.resize(r.u32());
    for (std::size_t i = 0; i < s.frozen.size(); ++i) s.frozen[i] = r.u8() != 0;
    s.xi_history.resize(r.u32());
    for (double& v : s.xi_history) v = r.f64();
    s.started = r.u8() != 0;
    s.log.resize(r.u32());
    for (auto& rec : s.log) {
      rec.iteration = r.u64();
      rec.phase = r.str();
      rec.level = static_cast<int>(r.u32());
      rec.step = static_cast<int>(r.u32());
      for (auto* v : {&rec.lambdas, &rec.rate, &rec.psnr}) {
        v->resize(r.u32());
        for (double& x : *v) x = r.f64();
      }
      rec.xi = r.f64();
      rec.event = r.str();
    }
    return s;
  }
};

/// Training snapshot for resume: model checkpoint, optimizer and schedule.
inline Bytes save_training_snapshot(const SlimCAE& model, const Trainer& trainer,
                                    const TrainState& state) {
  ByteWriter w;
  w.bytes("SCTS", 4);
  const Bytes ck = model.save();
  w.u64(ck.size());
  w.bytes(ck.data(), ck.size());
  w.u64(trainer.iteration());
  w.f64(trainer.lr_scale());
  trainer.adam().write(w);
  state.write(w);
  return w.take();
}

struct TrainingSnapshot {
  std::unique_ptr<SlimCAE> model;
  std::uint64_t iteration = 0;
  double lr_scale = 1.0;
  Bytes adam;  // raw optimizer section, applied with restore_trainer
  TrainState state;
};

inline TrainingSnapshot load_training_snapshot(const Bytes& bytes) {
  ByteReader r(bytes);
  char magic[4];
  r.bytes(magic, 4);
  if (std::string(magic, 4) != "SCTS") throw FormatError("not a training snapshot");
  TrainingSnapshot s;
  const std::uint64_t n = r.u64();
  Bytes ck(n);
  r.bytes(ck.data(), n);
  s.model = SlimCAE::load(ck);
  s.iteration = r.u64();
  s.lr_scale = r.f64();
  const std::size_t a0 = r.position();
  Adam probe;
  probe.read(r, s.model->params());
  s.adam.assign(bytes.begin() + static_cast<std::ptrdiff_t>(a0),
                bytes.begin() + static_cast<std::ptrdiff_t>(r.position()));
  s.state = TrainState::read(r);
  if (r.remaining()) throw FormatError("trailing bytes in training snapshot");
  return s;
}

/// Loads the snapshot's optimizer state into a trainer built on the
/// snapshot's model (which the caller may have taken ownership of).
inline void restore_trainer(Trainer& t, const TrainingSnapshot& snap) {
  ByteReader r(snap.adam);
  t.adam().read(r, t.model().params());
  t.set_iteration(snap.iteration);
  t.set_lr_scale(snap.lr_scale);
}

inline LogRecord make_record(const Trainer& t, std::string phase, const std::vector<double>& lambdas,
                             const RDCurve& c) {
  LogRecord r;
  r.iteration = t.iteration();
  r.phase = std::move(phase);
  r.lambdas = lambdas;
  for (const auto& p : c) {
    r.rate.push_back(p.rate);
    r.psnr.push_back(p.psnr);
  }
  return r;
}

/// Slope between validation points i and i+1 (1-based i), PSNR per bpp.
inline double rd_slope(const RDCurve& c, int i) {
  const auto& a = c[static_cast<std::size_t>(i - 1)];
  const auto& b = c[static_cast<std::size_t>(i)];
  return (b.psnr - a.psnr) / (b.rate - a.rate);
}

/// Lambda scheduling on an already naive-trained model. The trainer must
/// wrap the same model. `on_step` runs after every scheduling step (a
/// natural point to snapshot); `max_steps` stops early for testing resume.
class LambdaScheduler {
 public:
  using StepHook = std::function<void(const TrainState&)>;

  LambdaScheduler(SlimCAE& model, Trainer& trainer, const Dataset& val, ScheduleParams p)
      : model_(&model), trainer_(&trainer), val_(&val), p_(p) {
    p_.validate();
  }

  /// Starts a fresh schedule: Lambda_0 = [lambda_top] * K and xi_0 from the
  /// top two levels.
  TrainState begin() const {
    const std::size_t K = model_->levels();
    TrainState s;
    s.seed = trainer_->options().seed;
    s.iteration = trainer_->iteration();
    s.lambdas.assign(K, p_.lambda_top);
    s.frozen.assign(K, false);
    s.frozen[K - 1] = true;
    s.started = true;
    const RDCurve c = validate_rd(*model_, *val_);
    LogRecord rec = make_record(*trainer_, "schedule", s.lambdas, c);
    if (K < 2) {
      s.level = 0;
      rec.event = "single level";
    } else {
      s.level = static_cast<int>(K - 1);
      s.xi_ref = rd_slope(c, s.level);
      rec.xi = s.xi_ref;
      rec.level = s.level;
      s.xi_history.push_back(s.xi_ref);
      rec.event = "xi0";
    }
    s.log.push_back(rec);
    return s;
  }

  /// Runs until done (or `max_steps` scheduling steps).
  void run(TrainState& s, const StepHook& on_step = {},
           std::optional<std::size_t> max_steps = std::nullopt) {
    std::size_t taken = 0;
    while (!s.done() && (!max_steps || taken < *max_steps)) {
      step(s);
      ++taken;
      if (on_step) on_step(s);
    }
  }

  /// One scheduling step at level s.level: scale lambdas 1..i by kappa,
  /// train T iterations, re-measure and decide.
  void step(TrainState& s) {
    if (s.done()) return;
    const int i = s.level;
    ++s.step;
    for (int k = 0; k < i; ++k) {
      if (s.frozen[static_cast<std::size_t>(k)])
        throw InternalError("frozen lambda would be modified");
      s.lambdas[static_cast<std::size_t>(k)] *= p_.kappa;
    }
    trainer_->run(s.lambdas, p_.T);
    s.iteration = trainer_->iteration();
    const RDCurve c = validate_rd(*model_, *val_);
    LogRecord rec = make_record(*trainer_, "schedule", s.lambdas, c);
    rec.level = i;
    rec.step = s.step;
    bool advance = false;
    const auto& lo = c[static_cast<std::size_t>(i - 1)];
    const auto& hi = c[static_cast<std::size_t>(i)];
    if (hi.rate <= lo.rate) {
      rec.event = "rates out of order; continue";
    } else {
      const double xi = rd_slope(c, i);
      rec.xi = xi;
      s.xi_history.push_back(xi);
      if (xi > s.xi_ref) {
        rec.event = "slope increased; freeze level " + std::to_string(i);
        advance = true;
      } else {
        rec.event = "slope decreased";
      }
      s.xi_ref = xi;
    }
    if (!advance && s.step >= static_cast<int>(p_.M)) {
      std::cerr << "warning: lambda scheduling exhausted M=" << p_.M << " steps at level " << i
                << "; moving on\n";
      rec.event += "; M exhausted, freeze level " + std::to_string(i);
      advance = true;
    }
    s.log.push_back(rec);
    if (advance) {
      s.frozen[static_cast<std::size_t>(i - 1)] = true;
      s.level = i - 1;
      s.step = 0;
      // The next level's reference is the current slope of its own segment
      // when its points are ordered, otherwise the last measured slope.
      if (s.level >= 1) {
        const auto& a = c[static_cast<std::size_t>(s.level - 1)];
        const auto& b = c[static_cast<std::size_t>(s.level)];
        if (b.rate > a.rate) s.xi_ref = rd_slope(c, s.level);
      }
    }
  }

  const ScheduleParams& params() const { return p_; }

 private:
  SlimCAE* model_;
  Trainer* trainer_;
  const Dataset* val_;
  ScheduleParams p_;
};

}  // namespace slimcae
