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


// Run configuration: INI file with [model], [train], [data] and [output]
// sections.

#pragma once

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "slimcae/data_io.hpp"
#include "slimcae/model.hpp"
#include "slimcae/training.hpp"

namespace slimcae {

enum class Regime { kNaive, kEstimated, kScheduled };

inline const char* to_string(Regime r) {
  switch (r) {
    case Regime::kNaive: return "naive";
    case Regime::kEstimated: return "estimated";
    case Regime::kScheduled: return "scheduled";
  }
  return "?";
}

inline Regime parse_regime(const std::string& s) {
  if (s == "naive") return Regime::kNaive;
  if (s == "estimated") return Regime::kEstimated;
  if (s == "scheduled") return Regime::kScheduled;
  throw ConfigError("unknown regime '" + s + "' (naive, estimated, scheduled)");
}

struct DataSpec {
  std::string synthetic = "gaussian_blobs";  // empty when files are used
  std::size_t synthetic_count = 256;
  std::size_t synthetic_val_count = 32;
  std::size_t synthetic_size = 24;
  double cutoff = 0.15;
  std::string image_dir;
  std::string manifest;
  double val_fraction = 0.1;
  std::uint64_t split_seed = 0;
};

struct RunConfig {
  SlimCAEConfig model = SlimCAEConfig::desk();
  Regime regime = Regime::kScheduled;
  TrainOptions train;
  ScheduleParams schedule;
  std::size_t naive_iterations = 4000;
  std::size_t finetune_iterations = 2000;
  std::vector<double> lambdas;  // estimated regime: explicit Lambda
  std::string curves;           // estimated regime: sweep output to estimate from
  double delta = 0.05;
  DataSpec data;
  std::string output_dir;

  std::string to_ini() const {
    boost::property_tree::ptree pt;
    std::stringstream ms(model.serialize());
    std::string line;
    while (std::getline(ms, line)) {
      const auto eq = line.find('=');
      pt.put("model." + line.substr(0, eq), line.substr(eq + 1));
    }
    pt.put("train.regime", to_string(regime));
    pt.put("train.seed", train.seed);
    pt.put("train.lr_main", format_double(train.lr_main));
    pt.put("train.lr_entropy", format_double(train.lr_entropy));
    pt.put("train.batch_size", train.batch_size);
    pt.put("train.crop", train.crop);
    pt.put("train.naive_iterations", naive_iterations);
    pt.put("train.finetune_iterations", finetune_iterations);
    pt.put("train.lambda_top", format_double(schedule.lambda_top));
    pt.put("train.kappa", format_double(schedule.kappa));
    pt.put("train.T", schedule.T);
    pt.put("train.M", schedule.M);
    pt.put("train.lambdas", join_doubles(lambdas, ','));
    pt.put("train.curves", curves);
    pt.put("train.delta", format_double(delta));
    pt.put("data.synthetic", data.synthetic);
    pt.put("data.synthetic_count", data.synthetic_count);
    pt.put("data.synthetic_val_count", data.synthetic_val_count);
    pt.put("data.synthetic_size", data.synthetic_size);
    pt.put("data.cutoff", format_double(data.cutoff));
    pt.put("data.image_dir", data.image_dir);
    pt.put("data.manifest", data.manifest);
    pt.put("data.val_fraction", format_double(data.val_fraction));
    pt.put("data.split_seed", data.split_seed);
    pt.put("output.dir", output_dir);
    std::ostringstream os;
    boost::property_tree::write_ini(os, pt);
    return os.str();
  }

  static RunConfig from_ini(const std::string& text) {
    boost::property_tree::ptree pt;
    std::istringstream is(text);
    try {
      boost::property_tree::read_ini(is, pt);
    } catch (const boost::property_tree::ini_parser_error& e) {
      throw ConfigError(std::string("config: ") + e.what());
    }
    RunConfig c;
    for (const auto& [section, tree] : pt)
      for (const auto& [key, node] : tree) c.set(section + "." + key, node.get_value<std::string>());
    c.validate();
    return c;
  }

  /// Applies one "section.key" setting.
  void set(const std::string& key, const std::string& v) {
    auto u = [&] {
      try {
        std::size_t pos = 0;
        const unsigned long long x = std::stoull(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return static_cast<std::uint64_t>(x);
      } catch (const std::exception&) {
        throw ConfigError("invalid integer '" + v + "' for " + key);
      }
    };
    auto d = [&] {
      try {
        std::size_t pos = 0;
        const double x = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return x;
      } catch (const std::exception&) {
        throw ConfigError("invalid number '" + v + "' for " + key);
      }
    };
    if (key.rfind("model.", 0) == 0) {
      model.set(key.substr(6), v);
    } else if (key == "train.regime") {
      regime = parse_regime(v);
    } else if (key == "train.seed") {
      train.seed = u();
    } else if (key == "train.lr_main") {
      train.lr_main = d();
    } else if (key == "train.lr_entropy") {
      train.lr_entropy = d();
    } else if (key == "train.batch_size") {
      train.batch_size = u();
    } else if (key == "train.crop") {
      train.crop = u();
    } else if (key == "train.naive_iterations") {
      naive_iterations = u();
    } else if (key == "train.finetune_iterations") {
      finetune_iterations = u();
    } else if (key == "train.lambda_top") {
      schedule.lambda_top = d();
    } else if (key == "train.kappa") {
      schedule.kappa = d();
    } else if (key == "train.T") {
      schedule.T = u();
    } else if (key == "train.M") {
      schedule.M = u();
    } else if (key == "train.lambdas") {
      lambdas.clear();
      std::stringstream ss(v);
      std::string item;
      while (std::getline(ss, item, ',')) {
        try {
          lambdas.push_back(std::stod(item));
        } catch (const std::exception&) {
          throw ConfigError("invalid lambda '" + item + "'");
        }
      }
    } else if (key == "train.curves") {
      curves = v;
    } else if (key == "train.delta") {
      delta = d();
    } else if (key == "data.synthetic") {
      if (!v.empty()) parse_synthetic_kind(v);
      data.synthetic = v;
    } else if (key == "data.synthetic_count") {
      data.synthetic_count = u();
    } else if (key == "data.synthetic_val_count") {
      data.synthetic_val_count = u();
    } else if (key == "data.synthetic_size") {
      data.synthetic_size = u();
    } else if (key == "data.cutoff") {
      data.cutoff = d();
    } else if (key == "data.image_dir") {
      data.image_dir = v;
    } else if (key == "data.manifest") {
      data.manifest = v;
    } else if (key == "data.val_fraction") {
      data.val_fraction = d();
    } else if (key == "data.split_seed") {
      data.split_seed = u();
    } else if (key == "output.dir") {
      output_dir = v;
    } else {
      throw ConfigError("unknown config key '" + key + "'");
    }
  }

  void validate() const {
    model.validate();
    schedule.validate();
    if (train.batch_size == 0 || train.crop == 0) throw ConfigError("batch_size and crop must be positive");
    if (!(train.lr_main > 0) || !(train.lr_entropy > 0)) throw ConfigError("learning rates must be positive");
    if (!lambdas.empty() && lambdas.size() != model.levels())
      throw ConfigError("lambdas: expected " + std::to_string(model.levels()) + " values");
    if (data.synthetic.empty() && data.image_dir.empty() && data.manifest.empty())
      throw ConfigError("data: set synthetic, image_dir or manifest");
  }
};

struct Datasets {
  Dataset train, val;
};

/// Builds the train/validation sets a config describes.
inline Datasets load_datasets(const DataSpec& d) {
  if (!d.synthetic.empty()) {
    const auto kind = parse_synthetic_kind(d.synthetic);
    SyntheticOptions so;
    so.cutoff = d.cutoff;
    // Distinct seeds keep validation images out of the training set.
    return {make_synthetic(kind, d.synthetic_count, d.synthetic_size, 2 * d.split_seed + 1, so),
            make_synthetic(kind, d.synthetic_val_count, d.synthetic_size, 2 * d.split_seed + 2, so)};
  }
  std::vector<std::string> paths;
  if (!d.manifest.empty()) paths = read_manifest(d.manifest);
  if (!d.image_dir.empty()) {
    const auto more = list_images(d.image_dir);
    paths.insert(paths.end(), more.begin(), more.end());
  }
  if (paths.empty()) throw DataError("no images found");
  const auto [tr, va] = split_paths(paths, d.val_fraction, d.split_seed);
  if (tr.empty() || va.empty())
    throw DataError("train/validation split left one side empty; adjust val_fraction");
  return {Dataset::load(tr), Dataset::load(va)};
}

}  // namespace slimcae
