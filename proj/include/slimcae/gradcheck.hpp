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

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "slimcae/tape.hpp"

namespace slimcae {

struct GradCheckOptions {
  double tolerance = 1e-3;
  // Step is step_scale * max(1, |value|).
  double step_scale = 1e-6;
  // Denominator floor for the relative error, so two near-zero gradients
  // are not reported as disagreeing.
  double abs_floor = 1e-6;
  // Elements probed per parameter; 0 probes all of them.
  std::size_t max_probes_per_param = 0;
};

struct GradCheckEntry {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  bool finite = true;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  bool rejected = false;
  std::string reason;
  double tolerance = 1e-3;

  double max_error() const {
    double m = 0.0;
    for (const auto& e : entries)
      m = std::max(m, e.finite ? e.max_rel_error : std::numeric_limits<double>::infinity());
    return m;
  }
  bool passed() const {
    if (rejected || entries.empty()) return false;
    for (const auto& e : entries)
      if (!e.finite || e.max_rel_error > tolerance) return false;
    return true;
  }
};

/// Builds a scalar loss on the given tape, binding Params via tape.param().
using LossBuilder = std::function<Var(Tape&)>;

/// Compares analytic gradients of `build` against central finite
/// differences for every element of every listed Param.
inline GradCheckReport finite_diff_check(const LossBuilder& build, const std::vector<Param*>& params,
                                         const GradCheckOptions& opt = {}) {
  GradCheckReport report;
  report.tolerance = opt.tolerance;
  for (Param* p : params) p->zero_grad();
  {
    Tape tape;
    Var loss = build(tape);
    if (tape.has_non_differentiable()) {
      report.rejected = true;
      report.reason = "loss depends on a non-differentiable op (e.g. hard rounding)";
      return report;
    }
    if (!std::isfinite(loss.value().item())) {
      report.rejected = true;
      report.reason = "non-finite loss at probe point";
      return report;
    }
    tape.backward(loss);
  }
  auto eval = [&build]() {
    Tape tape;
    return build(tape).value().item();
  };
  for (Param* p : params) {
    GradCheckEntry e;
    e.name = p->name;
    const std::size_t n = p->value.size();
    std::size_t stride = 1;
    if (opt.max_probes_per_param && n > opt.max_probes_per_param)
      stride = (n + opt.max_probes_per_param - 1) / opt.max_probes_per_param;
    for (std::size_t i = 0; i < n; i += stride) {
      const double orig = p->value[i];
      const double h = opt.step_scale * std::max(1.0, std::abs(orig));
      p->value[i] = orig + h;
      const double fp = eval();
      p->value[i] = orig - h;
      const double fm = eval();
      p->value[i] = orig;
      const double numeric = (fp - fm) / (2.0 * h);
      const double analytic = p->grad[i];
      if (!std::isfinite(fp) || !std::isfinite(fm) || !std::isfinite(analytic)) {
        e.finite = false;
        e.worst_index = i;
        break;
      }
      const double denom = std::max({std::abs(analytic), std::abs(numeric), opt.abs_floor});
      const double err = std::abs(analytic - numeric) / denom;
      if (err >= e.max_rel_error) {
        e.max_rel_error = err;
        e.worst_index = i;
        e.analytic = analytic;
        e.numeric = numeric;
      }
    }
    report.entries.push_back(e);
  }
  return report;
}

}  // namespace slimcae
