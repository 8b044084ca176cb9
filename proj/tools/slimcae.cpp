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


// slimcae: train, encode, decode, eval, cost and sweep.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "slimcae/codec.hpp"
#include "slimcae/data_io.hpp"
#include "slimcae/evaluation.hpp"
#include "slimcae/model.hpp"
#include "slimcae/run_config.hpp"
#include "slimcae/training.hpp"

namespace fs = std::filesystem;
using namespace slimcae;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

std::string default_output_dir() {
  const char* env = std::getenv("SLIMCAE_OUTPUT_DIR");
  return env && *env ? env : "runs";
}

void write_text(const fs::path& p, const std::string& s) {
  std::ofstream os(p, std::ios::binary);
  if (!os) throw DataError("cannot write " + p.string());
  os << s;
}

std::string read_text(const std::string& p) {
  const Bytes b = read_file(p);
  return std::string(b.begin(), b.end());
}

std::unique_ptr<SlimCAE> load_checkpoint(const std::string& path) {
  return SlimCAE::load(read_file(path));
}

void print_curve(const RDCurve& c) {
  for (const auto& p : c)
    std::cout << "  level " << p.level + 1 << ": " << p.rate << " bpp, " << p.psnr << " dB\n";
}

nlohmann::json nullable(double v) { return std::isnan(v) ? nlohmann::json(nullptr) : nlohmann::json(v); }

nlohmann::json curve_json(const RDCurve& c, const std::vector<double>& lambdas) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& p : c)
    j.push_back({{"level", p.level + 1},
                 {"lambda", lambdas.empty() ? nlohmann::json(nullptr) : nlohmann::json(lambdas[p.level])},
                 {"bpp", p.rate},
                 {"mse", p.mse},
                 {"psnr_db", p.psnr}});
  return j;
}

nlohmann::json log_json(const std::vector<LogRecord>& log) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& r : log)
    j.push_back({{"iteration", r.iteration}, {"phase", r.phase},     {"level", r.level},
                 {"step", r.step},           {"lambdas", r.lambdas}, {"rates_bpp", r.rate},
                 {"psnr_db", r.psnr},        {"xi", nullable(r.xi)}, {"event", r.event}});
  return j;
}

/// Reads a sweep output (curves.json) into per-width RD samples.
std::vector<RateDistortionSamples> read_curves(const std::string& path, const WidthSet& widths) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text(path));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path + ": " + e.what());
  }
  std::vector<RateDistortionSamples> out;
  for (std::size_t k = 0; k < widths.levels(); ++k) {
    bool found = false;
    for (const auto& c : j.at("curves")) {
      if (c.at("width").get<std::size_t>() != widths[k]) continue;
      RateDistortionSamples s;
      for (const auto& p : c.at("points")) {
        s.rate.push_back(p.at("bpp").get<double>());
        s.mse.push_back(p.at("mse").get<double>());
      }
      out.push_back(s);
      found = true;
      break;
    }
    if (!found) throw DataError(path + ": no curve for width " + std::to_string(widths[k]));
  }
  return out;
}

struct TrainArgs {
  std::string config_file;
  std::vector<std::string> overrides;
  std::optional<std::string> regime, widths, gdn, synthetic, image_dir, manifest, out;
  std::optional<std::uint64_t> seed, split_seed;
  std::optional<std::size_t> naive_iterations, finetune_iterations, T, M;
  std::optional<double> lambda_top, kappa;
  bool resume = false;
};

RunConfig build_run_config(const TrainArgs& a) {
  RunConfig c;
  if (!a.config_file.empty()) c = RunConfig::from_ini(read_text(a.config_file));
  if (a.regime) c.regime = parse_regime(*a.regime);
  if (a.widths) c.model.set("widths", *a.widths);
  if (a.gdn) c.model.set("gdn", *a.gdn);
  if (a.synthetic) c.set("data.synthetic", *a.synthetic);
  if (a.image_dir) {
    c.data.image_dir = *a.image_dir;
    c.data.synthetic.clear();
  }
  if (a.manifest) {
    c.data.manifest = *a.manifest;
    c.data.synthetic.clear();
  }
  if (a.seed) c.train.seed = *a.seed;
  if (a.split_seed) c.data.split_seed = *a.split_seed;
  if (a.naive_iterations) c.naive_iterations = *a.naive_iterations;
  if (a.finetune_iterations) c.finetune_iterations = *a.finetune_iterations;
  if (a.T) c.schedule.T = *a.T;
  if (a.M) c.schedule.M = *a.M;
  if (a.lambda_top) c.schedule.lambda_top = *a.lambda_top;
  if (a.kappa) c.schedule.kappa = *a.kappa;
  for (const auto& o : a.overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects section.key=value, got '" + o + "'");
    c.set(o.substr(0, eq), o.substr(eq + 1));
  }
  if (a.out) c.output_dir = *a.out;
  if (c.output_dir.empty()) c.output_dir = default_output_dir();
  c.validate();
  return c;
}

int cmd_train(const TrainArgs& a) {
  const RunConfig cfg = build_run_config(a);
  const fs::path dir(cfg.output_dir);
  fs::create_directories(dir);
  write_text(dir / "run.ini", cfg.to_ini());
  const auto data = load_datasets(cfg.data);
  std::cout << "train: " << data.train.size() << " images, validation: " << data.val.size()
            << " images, regime " << to_string(cfg.regime) << "\n";

  const fs::path snapshot_path = dir / "train_state.bin";
  std::unique_ptr<SlimCAE> model;
  std::optional<TrainingSnapshot> snap;
  if (a.resume) {
    if (!fs::exists(snapshot_path)) throw DataError("nothing to resume in " + dir.string());
    snap = load_training_snapshot(read_file(snapshot_path.string()));
    if (!(snap->model->config() == cfg.model))
      throw ConfigError("snapshot model config differs from the run config");
    model = std::move(snap->model);
  } else {
    fs::remove(snapshot_path);
    model = std::make_unique<SlimCAE>(cfg.model, cfg.train.seed);
  }
  Trainer trainer(*model, data.train, cfg.train);
  TrainState state;
  if (snap) {
    restore_trainer(trainer, *snap);
    state = snap->state;
  }
  const std::size_t K = model->levels();
  const double lt = cfg.schedule.lambda_top;

  auto log_phase = [&](const std::string& phase, const std::vector<double>& lambdas,
                       const std::string& event) {
    const RDCurve c = validate_rd(*model, data.val);
    LogRecord r = make_record(trainer, phase, lambdas, c);
    r.event = event;
    state.log.push_back(r);
    std::cout << phase << " (" << event << ") at iteration " << trainer.iteration() << ":\n";
    print_curve(c);
    return c;
  };

  try {
    std::vector<double> lambdas(K, lt);
    if (cfg.regime == Regime::kEstimated) {
      if (!cfg.lambdas.empty()) {
        lambdas = cfg.lambdas;
      } else if (!cfg.curves.empty()) {
        lambdas = estimate_lambdas_from_curves(read_curves(cfg.curves, cfg.model.widths), lt,
                                               cfg.delta)
                      .lambdas;
      } else {
        throw ConfigError("estimated regime needs train.lambdas or train.curves");
      }
      std::cout << "estimated lambdas:";
      for (double l : lambdas) std::cout << " " << l;
      std::cout << "\n";
    }
    if (!(snap && state.started)) {
      trainer.run(lambdas, cfg.naive_iterations);
      log_phase(cfg.regime == Regime::kScheduled ? "naive" : "train", lambdas, "phase end");
    }
    if (cfg.regime == Regime::kScheduled) {
      LambdaScheduler sched(*model, trainer, data.val, cfg.schedule);
      if (!state.started) {
        auto log = state.log;
        state = sched.begin();
        log.insert(log.end(), state.log.begin(), state.log.end());
        state.log = log;
      }
      sched.run(state, [&](const TrainState& s) {
        const auto& r = s.log.back();
        std::cout << "schedule level " << r.level << " step " << r.step << ": xi " << r.xi << " ("
                  << r.event << ")\n";
        write_file(snapshot_path.string(), save_training_snapshot(*model, trainer, s));
      });
      lambdas = state.lambdas;
    }
    trainer.set_lr_scale(0.5);
    trainer.run(lambdas, cfg.finetune_iterations);
    const RDCurve final_curve = log_phase("finetune", lambdas, "final");
    write_file((dir / "model.ckpt").string(), model->save());
    std::ofstream csv(dir / "train_log.csv");
    write_log_csv(csv, state.log);
    write_text(dir / "train_log.json", log_json(state.log).dump(2) + "\n");
    write_text(dir / "lambdas.json", nlohmann::json(lambdas).dump() + "\n");
    write_text(dir / "rd.json", curve_json(final_curve, lambdas).dump(2) + "\n");
    std::cout << "final lambdas:";
    for (double l : lambdas) std::cout << " " << l;
    std::cout << "\nwrote " << (dir / "model.ckpt").string() << "\n";
  } catch (const NumericError&) {
    write_file((dir / "model.ckpt").string(), model->save());
    std::cerr << "saved last good parameters to " << (dir / "model.ckpt").string() << "\n";
    throw;
  }
  return 0;
}

int cmd_encode(const std::string& image, const std::string& ckpt, const std::string& out,
               std::optional<std::size_t> level, bool scalable) {
  const auto model = load_checkpoint(ckpt);
  const std::size_t k = scalable ? model->levels() : level.value_or(model->levels());
  if (k < 1 || k > model->levels())
    throw ConfigError("--width-level must be in 1.." + std::to_string(model->levels()));
  const Tensor4 x = load_image(image);
  const auto r = encode_image(x, *model, k - 1, scalable);
  if (r.clamp_warning)
    std::cerr << "warning: " << r.clamp.clamped << " of " << r.clamp.total
              << " latent values clamped to the entropy model support\n";
  write_file(out, r.stream.serialize());
  std::cout << "level " << k << (scalable ? " (scalable)" : "") << ": " << r.stream.payload.size()
            << " payload bytes, " << r.stream.bpp() << " bpp\n";
  return 0;
}

int cmd_decode(const std::string& in, const std::string& ckpt, const std::string& out,
               std::optional<std::size_t> levels, const std::string& original) {
  const auto model = load_checkpoint(ckpt);
  const Bitstream b = Bitstream::parse(read_file(in));
  const auto r = decode_image(b, *model, levels);
  save_image(out, r.image);
  const double bpp = 8.0 * static_cast<double>(r.payload_bytes) /
                     (static_cast<double>(b.header.height) * b.header.width);
  std::cout << "decoded level " << r.level + 1 << ", " << bpp << " bpp";
  if (!original.empty()) std::cout << ", PSNR " << psnr(load_image(original), r.image) << " dB";
  std::cout << "\n";
  return 0;
}

Dataset eval_dataset(const std::vector<std::string>& images, const std::string& synthetic,
                     std::size_t n, std::size_t size, std::uint64_t seed) {
  if (!images.empty()) {
    std::vector<std::string> paths;
    for (const auto& p : images) {
      if (fs::is_directory(p)) {
        const auto more = list_images(p);
        paths.insert(paths.end(), more.begin(), more.end());
      } else {
        paths.push_back(p);
      }
    }
    return Dataset::load(paths);
  }
  return make_synthetic(parse_synthetic_kind(synthetic), n, size, seed);
}

int cmd_eval(const std::string& ckpt, const Dataset& data, std::size_t timing, const std::string& out) {
  const auto model = load_checkpoint(ckpt);
  SweepOptions so;
  so.timing_runs = timing;
  const fs::path lam = fs::path(ckpt).parent_path() / "lambdas.json";
  if (fs::exists(lam)) {
    so.lambdas = nlohmann::json::parse(read_text(lam.string())).get<std::vector<double>>();
    if (so.lambdas.size() != model->levels()) so.lambdas.clear();
  }
  const auto rows = rd_sweep(*model, data, so);
  write_sweep_csv(std::cout, rows);
  if (!out.empty()) {
    fs::create_directories(out);
    std::ofstream csv(fs::path(out) / "eval.csv");
    write_sweep_csv(csv, rows);
    write_text(fs::path(out) / "eval.json", sweep_json(rows).dump(2) + "\n");
  }
  return 0;
}

int cmd_cost(const std::string& widths, const std::string& gdn, bool full, std::size_t h,
             std::size_t w, const std::string& json_out) {
  SlimCAEConfig c = full ? SlimCAEConfig::full_scale() : SlimCAEConfig::desk();
  if (!widths.empty()) c.set("widths", widths);
  if (!gdn.empty()) c.set("gdn", gdn);
  c.validate();
  const auto r = cost_report(c, h, w);
  std::cout << "input " << h << "x" << w << ", gdn " << to_string(c.gdn) << "\n";
  std::cout << "level,width,flops,flops_ratio,param_bytes,feature_bytes\n";
  for (const auto& l : r.levels)
    std::cout << l.level + 1 << "," << l.width << "," << l.flops << ","
              << l.flops / r.levels.back().flops << "," << l.param_bytes << "," << l.feature_bytes
              << "\n";
  std::cout << "total model: " << r.total_model_bytes / kMiB << " MB\n"
            << "independent models: " << r.independent_bytes / kMiB << " MB\n"
            << "GDN storage: " << r.gdn_bytes / kMiB << " MB\n";
  if (!json_out.empty()) write_text(json_out, cost_json(r).dump(2) + "\n");
  return 0;
}

/// Trains one single-width model per (width, lambda) and writes their RD
/// points, the input of the estimated regime.
int cmd_sweep(const TrainArgs& a, const std::string& lambdas_str) {
  const RunConfig cfg = build_run_config(a);
  std::vector<double> lambdas;
  std::stringstream ss(lambdas_str);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      lambdas.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw ConfigError("invalid lambda '" + item + "'");
    }
  }
  if (lambdas.size() < 3) throw ConfigError("--lambdas needs at least 3 values");
  const fs::path dir(cfg.output_dir);
  fs::create_directories(dir);
  write_text(dir / "run.ini", cfg.to_ini());
  const auto data = load_datasets(cfg.data);
  nlohmann::json j;
  j["curves"] = nlohmann::json::array();
  for (std::size_t k = 0; k < cfg.model.levels(); ++k) {
    nlohmann::json curve{{"width", cfg.model.widths[k]}, {"points", nlohmann::json::array()}};
    for (double lam : lambdas) {
      SlimCAEConfig mc = cfg.model;
      mc.widths = WidthSet({cfg.model.widths[k]});
      SlimCAE m(mc, cfg.train.seed);
      Trainer t(m, data.train, cfg.train);
      t.run({lam}, cfg.naive_iterations);
      t.set_lr_scale(0.5);
      t.run({lam}, cfg.finetune_iterations);
      const RDPoint p = validate_rd(m, data.val)[0];
      std::cout << "width " << mc.widths[0] << " lambda " << lam << ": " << p.rate << " bpp, "
                << p.psnr << " dB\n";
      curve["points"].push_back({{"lambda", lam}, {"bpp", p.rate}, {"mse", p.mse}, {"psnr_db", p.psnr}});
    }
    j["curves"].push_back(curve);
  }
  write_text(dir / "curves.json", j.dump(2) + "\n");
  std::cout << "wrote " << (dir / "curves.json").string() << "\n";
  return 0;
}

void add_train_options(CLI::App* c, TrainArgs& a) {
  c->add_option("--config", a.config_file, "INI run configuration")->check(CLI::ExistingFile);
  c->add_option("--set", a.overrides, "Override a config value, section.key=value");
  c->add_option("--widths", a.widths, "Comma-separated increasing widths, e.g. 4,8,16");
  c->add_option("--gdn", a.gdn, "GDN variant: switch, slim, slim_plus");
  c->add_option("--synthetic", a.synthetic,
                "Synthetic data: gaussian_blobs, gradients, band_limited_noise, constant");
  c->add_option("--image-dir", a.image_dir, "Directory of PNG/PPM training images");
  c->add_option("--manifest", a.manifest, "File listing one image path per line");
  c->add_option("--split-seed", a.split_seed, "Seed of the train/validation split");
  c->add_option("--seed", a.seed, "Seed for initialization, batches and noise");
  c->add_option("--naive-iterations", a.naive_iterations, "Iterations of the first phase");
  c->add_option("--finetune-iterations", a.finetune_iterations, "Iterations at halved learning rates");
  c->add_option("--lambda-top", a.lambda_top, "Tradeoff of the widest level (D + lambda R)");
  c->add_option("--kappa", a.kappa, "Scheduling factor (> 1)");
  c->add_option("-T", a.T, "Iterations per scheduling step");
  c->add_option("-M", a.M, "Maximum scheduling steps per level");
  c->add_option("--out", a.out, "Output directory (default $SLIMCAE_OUTPUT_DIR or ./runs)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Slimmable compressive autoencoder codec"};
  app.require_subcommand(1);

  TrainArgs train_args;
  auto* train = app.add_subcommand("train", "Train a model (naive, estimated or scheduled)");
  add_train_options(train, train_args);
  train->add_option("--regime", train_args.regime, "naive, estimated or scheduled");
  train->add_flag("--resume", train_args.resume, "Resume a scheduled run from its last snapshot");

  std::string enc_image, enc_ckpt, enc_out;
  std::optional<std::size_t> enc_level;
  bool enc_scalable = false;
  auto* encode = app.add_subcommand("encode", "Compress an image to a .scae bitstream");
  encode->add_option("image", enc_image, "PNG or PPM image")->required()->check(CLI::ExistingFile);
  encode->add_option("-c,--checkpoint", enc_ckpt, "Model checkpoint")->required()->check(CLI::ExistingFile);
  encode->add_option("-o,--output", enc_out, "Output .scae file")->required();
  auto* lvl = encode->add_option("-k,--width-level", enc_level, "Width level, 1-based (default: top)");
  encode->add_flag("--scalable", enc_scalable, "Write independently decodable channel groups")->excludes(lvl);

  std::string dec_in, dec_ckpt, dec_out, dec_orig;
  std::optional<std::size_t> dec_levels;
  auto* decode = app.add_subcommand("decode", "Reconstruct an image from a .scae bitstream");
  decode->add_option("bitstream", dec_in, ".scae file")->required()->check(CLI::ExistingFile);
  decode->add_option("-c,--checkpoint", dec_ckpt, "Model checkpoint")->required()->check(CLI::ExistingFile);
  decode->add_option("-o,--output", dec_out, "Output PNG or PPM")->required();
  decode->add_option("-l,--levels", dec_levels, "Decode the first l groups of a scalable stream");
  decode->add_option("--original", dec_orig, "Original image, for PSNR")->check(CLI::ExistingFile);

  std::string ev_ckpt, ev_out, ev_synth = "gaussian_blobs";
  std::vector<std::string> ev_images;
  std::size_t ev_n = 10, ev_size = 128, ev_timing = 20;
  std::uint64_t ev_seed = 100;
  auto* eval = app.add_subcommand("eval", "Per-level RD and cost table (CSV and JSON)");
  eval->add_option("-c,--checkpoint", ev_ckpt, "Model checkpoint")->required()->check(CLI::ExistingFile);
  eval->add_option("--images", ev_images, "Images or directories to evaluate");
  eval->add_option("--synthetic", ev_synth, "Synthetic kind used when no images are given");
  eval->add_option("--count", ev_n, "Synthetic image count");
  eval->add_option("--size", ev_size, "Synthetic image size");
  eval->add_option("--seed", ev_seed, "Synthetic seed");
  eval->add_option("--timing-runs", ev_timing, "Latency runs per level (0 disables timing)");
  eval->add_option("--out", ev_out, "Directory for eval.csv and eval.json");

  std::string cost_widths, cost_gdn, cost_json_out;
  bool cost_full = false;
  std::size_t cost_h = 512, cost_w = 768;
  auto* cost = app.add_subcommand("cost", "FLOP and memory accounting (no checkpoint needed)");
  cost->add_flag("--full-scale", cost_full, "Use the published five-width architecture");
  cost->add_option("--widths", cost_widths, "Override widths");
  cost->add_option("--gdn", cost_gdn, "GDN variant: switch, slim, slim_plus");
  cost->add_option("--height", cost_h, "Input height");
  cost->add_option("--width", cost_w, "Input width");
  cost->add_option("--json", cost_json_out, "Also write the report as JSON");

  TrainArgs sweep_args;
  std::string sweep_lambdas = "0.005,0.01,0.02,0.04,0.08";
  auto* sweep = app.add_subcommand("sweep", "Train independent single-width models across lambdas");
  add_train_options(sweep, sweep_args);
  sweep->add_option("--lambdas", sweep_lambdas, "Comma-separated lambdas (at least 3)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kExitUsage;
  }

  try {
    if (*train) return cmd_train(train_args);
    if (*encode) return cmd_encode(enc_image, enc_ckpt, enc_out, enc_level, enc_scalable);
    if (*decode) return cmd_decode(dec_in, dec_ckpt, dec_out, dec_levels, dec_orig);
    if (*eval) return cmd_eval(ev_ckpt, eval_dataset(ev_images, ev_synth, ev_n, ev_size, ev_seed), ev_timing, ev_out);
    if (*cost) return cmd_cost(cost_widths, cost_gdn, cost_full, cost_h, cost_w, cost_json_out);
    if (*sweep) return cmd_sweep(sweep_args, sweep_lambdas);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const InternalError& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return 0;
}
