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

// Speaker-adversarial training of the text encoder and the speaker
// regularization loss on hidden speaker representations.

#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "sanetts/layers.hpp"

namespace sanetts {

struct GradientReversal {
  double lambda = 0.0;

  Var apply(Var x) const { return gradient_reversal(x, lambda); }
};

inline Var grl_apply(const GradientReversal& layer, Var x) { return layer.apply(x); }

// Adversarial weight ramp lambda(p) = 2 / (1 + exp(-steepness * p)) - 1 with
// p = step / total_steps.
struct LambdaSchedule {
  double steepness = 10.0;
  std::size_t total_steps = 1;

  static double at_progress(double progress, double steepness = 10.0) {
    const double v = 2.0 / (1.0 + std::exp(-steepness * progress)) - 1.0;
    return std::clamp(v, 0.0, std::nextafter(1.0, 0.0));
  }
};

inline double lambda_at(const LambdaSchedule& schedule, std::size_t step) {
  if (schedule.total_steps == 0) throw ConfigError("lambda schedule needs total_steps > 0");
  require(step <= schedule.total_steps, "lambda_at: step " + std::to_string(step) +
                                            " beyond total_steps " +
                                            std::to_string(schedule.total_steps));
  const double p = static_cast<double>(step) / static_cast<double>(schedule.total_steps);
  return LambdaSchedule::at_progress(p, schedule.steepness);
}

// Fully connected stack with tanh between layers; the last layer emits one
// logit per speaker.
struct SpeakerClassifier {
  std::vector<FullyConnected> layers;

  static SpeakerClassifier random(std::size_t input_dim, std::size_t hidden_layers,
                                  std::size_t num_speakers, std::mt19937_64& rng) {
    SpeakerClassifier c;
    for (std::size_t i = 0; i < hidden_layers; ++i) {
      c.layers.push_back(FullyConnected::random(input_dim, input_dim, rng));
    }
    c.layers.push_back(FullyConnected::random(input_dim, num_speakers, rng));
    return c;
  }

  std::size_t num_speakers() const { return layers.back().out_channels; }

  Var logits(Tape& tape, Var features) {
    Var x = features;
    for (std::size_t i = 0; i < layers.size(); ++i) {
      x = layers[i].forward_vector(tape, x);
      if (i + 1 < layers.size()) x = tanh(x);
    }
    return x;
  }

  std::vector<NamedTensor> named(const std::string& prefix) {
    std::vector<NamedTensor> out;
    for (std::size_t i = 0; i < layers.size(); ++i) {
      for (auto& p : layers[i].named(prefix + ".fc" + std::to_string(i))) out.push_back(p);
    }
    return out;
  }
};

// Mean-pools text_hidden [len x hidden] over positions, passes it through the
// gradient reversal layer and the classifier, and returns the cross-entropy
// against the true speaker.
inline Var speaker_classification_loss(Tape& tape, SpeakerClassifier& classifier,
                                       Var text_hidden, std::size_t true_speaker,
                                       const GradientReversal& grl) {
  require(text_hidden.shape().size() == 2 && text_hidden.rows() > 0,
          "speaker classification needs a nonempty [len x hidden] input, got " +
              to_string(text_hidden.shape()));
  require(true_speaker < classifier.num_speakers(),
          "speaker id " + std::to_string(true_speaker) + " out of range for " +
              std::to_string(classifier.num_speakers()) + " speakers");
  Var pooled = grl.apply(mean_rows(text_hidden));
  return cross_entropy(classifier.logits(tape, pooled), true_speaker);
}

// Kernel-1 conv from speaker embedding width to hidden width.
using SpeakerProjection = PointwiseConv;

// Euclidean norm of the batch mean of projection(S_k).
inline Var speaker_regularization_loss(Tape& tape, SpeakerProjection& projection,
                                       const std::vector<Var>& batch_speaker_embeddings) {
  require(!batch_speaker_embeddings.empty(), "speaker regularization over an empty batch");
  Var hidden = projection.forward(tape, stack_rows(batch_speaker_embeddings));
  return l2_norm(mean_rows(hidden));
}

}  // namespace sanetts
