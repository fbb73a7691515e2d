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

#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "sanetts/model.hpp"

namespace sanetts {

class TrainingDivergence : public Error {
 public:
  TrainingDivergence(const std::string& what, LossBreakdown b) : Error(what), breakdown(b) {}
  LossBreakdown breakdown;
};

// First-order optimizer state; moment buffers are keyed by registry name.
//   sgd:  v <- mu * v + g;  w <- w - lr * v
//   adam: m <- b1 * m + (1 - b1) g;  v <- b2 * v + (1 - b2) g^2;
//         w <- w - lr * m_hat / (sqrt(v_hat) + eps), bias-corrected with the
//         1-based global step, b1 = momentum.
struct OptimizerState {
  std::string kind = "adam";
  double learning_rate = 0.002;
  double momentum = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double clip_norm = 0.0;
  std::map<std::string, std::vector<double>> first;
  std::map<std::string, std::vector<double>> second;  // adam only

  static OptimizerState from_config(const TrainingConfig& c) {
    OptimizerState s;
    s.kind = c.optimizer;
    s.learning_rate = c.learning_rate;
    s.momentum = c.momentum;
    s.beta2 = c.beta2;
    s.clip_norm = c.clip_norm;
    return s;
  }

  void update(const std::string& name, Tensor& t, double grad_scale, std::size_t step) {
    auto& m = first[name];
    if (m.size() != t.values.size()) m.assign(t.values.size(), 0.0);
    auto grad = [&](std::size_t i) { return t.grad ? (*t.grad)[i] * grad_scale : 0.0; };
    if (kind == "sgd") {
      for (std::size_t i = 0; i < m.size(); ++i) {
        m[i] = momentum * m[i] + grad(i);
        t.values[i] -= learning_rate * m[i];
      }
      return;
    }
    auto& v = second[name];
    if (v.size() != t.values.size()) v.assign(t.values.size(), 0.0);
    const double k = static_cast<double>(step + 1);
    const double c1 = 1.0 - std::pow(momentum, k), c2 = 1.0 - std::pow(beta2, k);
    for (std::size_t i = 0; i < m.size(); ++i) {
      const double g = grad(i);
      m[i] = momentum * m[i] + (1.0 - momentum) * g;
      v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
      t.values[i] -= learning_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
    }
  }
};

// One optimization step on `batch` at global step index `step`.
inline LossBreakdown train_step(SaneModel& model, OptimizerState& opt, const Batch& batch,
                                std::size_t step, const LambdaSchedule& schedule) {
  require(step < schedule.total_steps, "train_step: step " + std::to_string(step) +
                                           " is not below total_steps " +
                                           std::to_string(schedule.total_steps));
  const double lambda = lambda_at(schedule, step);
  auto params = model.parameters();
  for (auto& p : params) p.tensor->grad.reset();

  Tape tape;
  ForwardResult fwd = model_forward_train(tape, model, batch, lambda);
  if (!std::isfinite(fwd.breakdown.total)) {
    throw TrainingDivergence("non-finite loss at step " + std::to_string(step), fwd.breakdown);
  }
  backward(tape, fwd.total);

  double scale_factor = 1.0;
  if (opt.clip_norm > 0.0) {
    double sq = 0.0;
    for (auto& p : params) {
      if (!p.tensor->grad) continue;
      for (double g : *p.tensor->grad) sq += g * g;
    }
    const double norm = std::sqrt(sq);
    if (norm > opt.clip_norm) scale_factor = opt.clip_norm / norm;
  }
  for (auto& p : params) opt.update(p.name, *p.tensor, scale_factor, step);
  return fwd.breakdown;
}

inline std::string rng_state_string(const std::mt19937_64& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

inline std::mt19937_64 rng_from_state(const std::string& state) {
  std::mt19937_64 rng;
  std::istringstream is(state);
  is >> rng;
  if (!is) throw IntegrityError("invalid rng state");
  return rng;
}

// Owns one training run. Batch order: at the start of every epoch the run's
// rng draws an epoch seed for make_batches; the rng state before that draw is
// what a checkpoint records, so a resumed run rebuilds the same epoch.
class Trainer {
 public:
  Trainer(const TrainingConfig& config, const Corpus& corpus)
      : model_(config, ModelDims::from_spec(corpus.spec)),
        corpus_(&corpus),
        opt_(OptimizerState::from_config(config)),
        rng_(config.seed ^ 0x5a4e4554545321ull) {
    require(!corpus.utterances.empty(), "training on an empty corpus");
  }

  // Continues a run from saved state.
  Trainer(SaneModel model, const Corpus& corpus, std::size_t step, const std::string& rng_state,
          OptimizerState opt)
      : model_(std::move(model)),
        corpus_(&corpus),
        opt_(std::move(opt)),
        rng_(rng_from_state(rng_state)),
        step_(step) {
    require(!corpus.utterances.empty(), "training on an empty corpus");
    require(model_.dims == ModelDims::from_spec(corpus.spec),
            "checkpoint dimensions do not match the corpus");
  }

  SaneModel& model() { return model_; }
  const OptimizerState& optimizer() const { return opt_; }
  std::size_t step() const { return step_; }
  const TrainingConfig& config() const { return model_.config; }

  std::size_t batches_per_epoch() const {
    const std::size_t n = corpus_->utterances.size(), b = model_.config.batch_size;
    return (n + b - 1) / b;
  }

  // Rng state as of the start of the epoch that contains the next step.
  std::string rng_state() const {
    return have_epoch_ && step_ % batches_per_epoch() != 0 ? epoch_rng_state_
                                                           : rng_state_string(rng_);
  }

  LambdaSchedule schedule() const {
    return {model_.config.lambda_steepness, model_.config.total_steps};
  }

  LossBreakdown step_once() {
    const std::size_t nb = batches_per_epoch();
    if (!have_epoch_ || step_ % nb == 0) {
      epoch_rng_state_ = rng_state_string(rng_);
      batches_ = make_batches(*corpus_, model_.config.batch_size, rng_());
      have_epoch_ = true;
    }
    LossBreakdown b = train_step(model_, opt_, batches_[step_ % nb], step_, schedule());
    ++step_;
    return b;
  }

  // Runs until total_steps, calling `on_step(step, breakdown)` after each.
  void run(const std::function<void(std::size_t, const LossBreakdown&)>& on_step = {}) {
    while (step_ < model_.config.total_steps) {
      const std::size_t s = step_;
      LossBreakdown b = step_once();
      if (on_step) on_step(s, b);
    }
  }

 private:
  SaneModel model_;
  const Corpus* corpus_;
  OptimizerState opt_;
  std::mt19937_64 rng_;
  std::size_t step_ = 0;
  bool have_epoch_ = false;
  std::string epoch_rng_state_;
  std::vector<Batch> batches_;
};

// ---- loss log -------------------------------------------------------------------

inline const char* loss_csv_header() {
  return "step,lambda,reconstruction,duration,speaker_cls,speaker_reg,total\n";
}

inline std::string loss_csv_row(std::size_t step, const LossBreakdown& b) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", step, b.lambda,
                b.reconstruction, b.duration, b.speaker_cls, b.speaker_reg, b.total);
  return buf;
}

}  // namespace sanetts
