/*
 * Copyright 2026 The taskrag Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *   http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "taskrag/params.hpp"
#include "taskrag/tape.hpp"

namespace taskrag {

struct GradCheckReport {
  double max_error = 0.0;
  // Worst relative error per parameter group, in parameter order.
  std::vector<std::pair<std::string, double>> per_parameter;
};

// Compares reverse-mode gradients of a scalar function with central finite
// differences in double precision. The error of one coordinate is
// |analytic - numeric| / max(1, |numeric|).
//
// `f` is called as f(tape, bound_params) and must return a 1x1 Var.
template <typename F>
GradCheckReport grad_check(F&& f, const ParameterSet<double>& params, double step) {
  ParameterSet<double> analytic;
  {
    Tape<double> tape;
    BoundParams<double> bound(tape, params);
    Var<double> loss = f(tape, bound);
    tape.backward(loss);
    analytic = bound.gradients();
  }

  auto evaluate = [&](const ParameterSet<double>& p, const std::string& where) {
    Tape<double> tape;
    tape.set_check_finite(false);
    BoundParams<double> bound(tape, p, [](std::string_view) { return false; });
    const double v = f(tape, bound).value()(0, 0);
    if (!std::isfinite(v)) throw NumericError("grad_check: non-finite function value at " + where);
    return v;
  };

  GradCheckReport report;
  ParameterSet<double> probe = params;
  for (const auto& entry : params) {
    double worst = 0.0;
    auto& x = probe.at(entry.name);
    const auto& g = analytic.at(entry.name);
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      const double orig = x.data()[i];
      const std::string where = entry.name + "[" + std::to_string(i) + "]";
      x.data()[i] = orig + step;
      const double up = evaluate(probe, where + "+h");
      x.data()[i] = orig - step;
      const double down = evaluate(probe, where + "-h");
      x.data()[i] = orig;
      const double numeric = (up - down) / (2.0 * step);
      const double err = std::abs(g.data()[i] - numeric) / std::max(1.0, std::abs(numeric));
      worst = std::max(worst, err);
    }
    report.per_parameter.emplace_back(entry.name, worst);
    report.max_error = std::max(report.max_error, worst);
  }
  return report;
}

// Single-input convenience form: f(tape, x) -> 1x1 Var.
template <typename F>
double grad_check(F&& f, const Matrix<double>& point, double step) {
  ParameterSet<double> p;
  p.add("x", point);
  return grad_check([&](Tape<double>& t, const BoundParams<double>& b) { return f(t, b["x"]); }, p, step)
      .max_error;
}

}  // namespace taskrag
