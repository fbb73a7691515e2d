// Copyright (c) 2026 The sanetts Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
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
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "sanetts/autodiff.hpp"

namespace sanetts {

struct GradCheckEntry {
  std::string name;  // "<param>[<flat index>]"
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
};

struct GradCheckReport {
  double max_abs_error = 0.0;
  double max_rel_error = 0.0;
  std::vector<GradCheckEntry> per_parameter;
  bool passed = false;
  std::string diagnostic;

  std::string summary() const {
    std::ostringstream os;
    os << (passed ? "passed" : "FAILED") << " max_abs=" << max_abs_error
       << " max_rel=" << max_rel_error;
    if (!diagnostic.empty()) os << " (" << diagnostic << ")";
    auto worst = std::max_element(per_parameter.begin(), per_parameter.end(),
                                  [](const auto& a, const auto& b) { return a.rel_error < b.rel_error; });
    if (worst != per_parameter.end()) {
      os << " worst " << worst->name << " analytic=" << worst->analytic
         << " numeric=" << worst->numeric;
    }
    return os.str();
  }
};

// Builds a graph on the given tape and returns its scalar output.
using Objective = std::function<Var(Tape&)>;

struct GradCheckOptions {
  // Elements checked per tensor; 0 checks all of them. Subsets are drawn
  // uniformly without replacement from `seed`.
  std::size_t max_elements_per_tensor = 0;
  std::uint64_t seed = 0;
};

inline double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

// Compares the reverse-mode gradient of `analytic_f` with central
// differences of `numeric_f`. The two objectives are normally the same
// function; they differ only when the analytic graph deliberately alters
// gradients (gradient reversal) and the numeric side encodes the expected
// equivalent objective.
inline GradCheckReport finite_difference_check(const Objective& analytic_f,
                                               const Objective& numeric_f,
                                               const std::vector<NamedTensor>& params, double h,
                                               double tol, const GradCheckOptions& options = {}) {
  require(h > 0.0, "finite_difference_check: step size must be positive");
  GradCheckReport report;

  std::vector<std::vector<double>> analytic;
  {
    Tape tape;
    Var out = analytic_f(tape);
    if (!std::isfinite(out.item())) {
      report.diagnostic = "objective is not finite at the base point";
      return report;
    }
    for (const auto& p : params) p.tensor->requires_grad = true;
    backward(tape, out);
    for (const auto& p : params) {
      analytic.push_back(p.tensor->grad ? *p.tensor->grad
                                        : std::vector<double>(p.tensor->size(), 0.0));
    }
  }

  auto evaluate = [&]() {
    Tape tape;
    return numeric_f(tape).item();
  };

  std::mt19937_64 rng(options.seed);
  bool finite = true;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& t = *params[k].tensor;
    std::vector<std::size_t> indices(t.size());
    std::iota(indices.begin(), indices.end(), std::size_t{0});
    if (options.max_elements_per_tensor && indices.size() > options.max_elements_per_tensor) {
      std::shuffle(indices.begin(), indices.end(), rng);
      indices.resize(options.max_elements_per_tensor);
      std::sort(indices.begin(), indices.end());
    }
    for (std::size_t i : indices) {
      const double saved = t.values[i];
      t.values[i] = saved + h;
      const double plus = evaluate();
      t.values[i] = saved - h;
      const double minus = evaluate();
      t.values[i] = saved;
      const double numeric = (plus - minus) / (2.0 * h);
      if (!std::isfinite(numeric)) {
        finite = false;
        report.diagnostic = "non-finite objective while perturbing " + params[k].name + "[" +
                            std::to_string(i) + "]";
      }
      GradCheckEntry e{params[k].name + "[" + std::to_string(i) + "]", analytic[k][i], numeric,
                       relative_error(analytic[k][i], numeric)};
      report.max_abs_error = std::max(report.max_abs_error, std::abs(e.analytic - e.numeric));
      report.max_rel_error = std::max(report.max_rel_error, e.rel_error);
      report.per_parameter.push_back(std::move(e));
    }
  }
  report.passed = finite && report.max_rel_error <= tol;
  return report;
}

inline GradCheckReport finite_difference_check(const Objective& f,
                                               const std::vector<NamedTensor>& params, double h,
                                               double tol, const GradCheckOptions& options = {}) {
  return finite_difference_check(f, f, params, h, tol, options);
}

}  // namespace sanetts
