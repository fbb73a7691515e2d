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
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "sanetts/layers.hpp"
#include "sanetts/mechanisms.hpp"

namespace sanetts {

// score(i, j): log-score of frame j under phoneme i. Row-major [P x T].
struct ScoreMatrix {
  std::size_t phonemes = 0;
  std::size_t frames = 0;
  std::vector<double> scores;

  ScoreMatrix() = default;
  ScoreMatrix(std::size_t p, std::size_t t, std::vector<double> s)
      : phonemes(p), frames(t), scores(std::move(s)) {
    require(p >= 1 && t >= 1, "score matrix needs at least one phoneme and one frame");
    require(scores.size() == p * t, "score matrix expects " + std::to_string(p * t) +
                                        " values, got " + std::to_string(scores.size()));
  }

  double operator()(std::size_t i, std::size_t j) const { return scores[i * frames + j]; }
};

// Phoneme index per frame.
struct Alignment {
  std::vector<std::size_t> assignment;

  bool operator==(const Alignment&) const = default;
};

struct DurationSequence {
  std::vector<std::size_t> frames;

  std::size_t total() const {
    std::size_t t = 0;
    for (std::size_t d : frames) t += d;
    return t;
  }
  std::size_t size() const { return frames.size(); }

  bool operator==(const DurationSequence&) const = default;
};

// Monotone (steps of 0 or +1), starts at 0, ends at P-1.
inline bool is_valid_alignment(const Alignment& a, std::size_t phonemes) {
  const auto& v = a.assignment;
  if (v.empty() || phonemes == 0 || v.front() != 0 || v.back() != phonemes - 1) return false;
  for (std::size_t j = 1; j < v.size(); ++j) {
    if (v[j] != v[j - 1] && v[j] != v[j - 1] + 1) return false;
  }
  return true;
}

inline double alignment_score(const ScoreMatrix& s, const Alignment& a) {
  double total = 0.0;
  for (std::size_t j = 0; j < a.assignment.size(); ++j) total += s(a.assignment[j], j);
  return total;
}

// Best monotone surjective alignment by dynamic programming.
//
// best[i][j] is the highest score collectable over frames j..T-1 given that
// frame j sits on phoneme i. The path is then traced forward from (0, 0),
// staying on the current phoneme whenever that is at least as good as
// advancing. Among equal-score alignments this yields the lexicographically
// smallest assignment, i.e. the longest early durations.
inline Alignment mas_search(const ScoreMatrix& s) {
  const std::size_t p = s.phonemes, t = s.frames;
  if (p == 0 || t < p) {
    throw InfeasibleAlignment("cannot align " + std::to_string(p) + " phonemes to " +
                              std::to_string(t) + " frames");
  }
  constexpr double kNeg = -std::numeric_limits<double>::infinity();
  std::vector<double> best(p * t, kNeg);
  auto at = [&](std::size_t i, std::size_t j) -> double& { return best[i * t + j]; };
  at(p - 1, t - 1) = s(p - 1, t - 1);
  for (std::size_t j = t - 1; j-- > 0;) {
    // Frame j can host phoneme i only if i <= j and the remaining frames
    // cover the remaining phonemes.
    const std::size_t hi = std::min(j, p - 1);
    const std::size_t lo = (p - 1 > t - 1 - j) ? (p - 1) - (t - 1 - j) : 0;
    for (std::size_t i = lo; i <= hi; ++i) {
      const double stay = at(i, j + 1);
      const double advance = i + 1 < p ? at(i + 1, j + 1) : kNeg;
      at(i, j) = s(i, j) + std::max(stay, advance);
    }
  }
  Alignment a;
  a.assignment.reserve(t);
  std::size_t i = 0;
  a.assignment.push_back(0);
  for (std::size_t j = 1; j < t; ++j) {
    const double stay = at(i, j);
    const double advance = i + 1 < p ? at(i + 1, j) : kNeg;
    if (advance > stay) ++i;
    a.assignment.push_back(i);
  }
  return a;
}

// Exhaustive search over all monotone surjective alignments; test oracle.
// Ties resolve to the lexicographically smallest assignment.
inline Alignment brute_force_mas(const ScoreMatrix& s) {
  const std::size_t p = s.phonemes, t = s.frames;
  require(p >= 1 && p <= 6 && t <= 10, "brute_force_mas supports P <= 6 and T <= 10, got P=" +
                                           std::to_string(p) + " T=" + std::to_string(t));
  if (t < p) {
    throw InfeasibleAlignment("cannot align " + std::to_string(p) + " phonemes to " +
                              std::to_string(t) + " frames");
  }
  // An alignment is fixed by which of the T-1 frame boundaries advance; exactly
  // P-1 of them must. Enumerated in increasing bitmask order, then compared.
  std::optional<Alignment> best;
  double best_score = -std::numeric_limits<double>::infinity();
  for (std::uint32_t mask = 0; mask < (1u << (t - 1)); ++mask) {
    if (static_cast<std::size_t>(std::popcount(mask)) != p - 1) continue;
    Alignment a;
    std::size_t i = 0;
    a.assignment.push_back(0);
    for (std::size_t j = 1; j < t; ++j) {
      if (mask & (1u << (j - 1))) ++i;
      a.assignment.push_back(i);
    }
    const double score = alignment_score(s, a);
    if (!best || score > best_score ||
        (score == best_score && a.assignment < best->assignment)) {
      best = a;
      best_score = score;
    }
  }
  return *best;
}

inline DurationSequence durations_from_alignment(const Alignment& a) {
  DurationSequence d;
  if (a.assignment.empty()) return d;
  d.frames.assign(a.assignment.back() + 1, 0);
  for (std::size_t phoneme : a.assignment) ++d.frames[phoneme];
  return d;
}

// Repeats row i of text_hidden [P x hidden] d[i] times -> [sum(d) x hidden].
inline Var length_regulate(Var text_hidden, const DurationSequence& d) {
  require(text_hidden.shape().size() == 2 && text_hidden.rows() == d.size(),
          "length_regulate: " + std::to_string(d.size()) + " durations for hidden " +
              to_string(text_hidden.shape()));
  for (std::size_t v : d.frames) require(v >= 1, "length_regulate: zero duration");
  return repeat_rows(text_hidden, d.frames);
}

// Deterministic duration predictor: (text hidden + speaker term + language
// term) -> [conv -> tanh -> layer norm] x depth -> one log-duration per phoneme.
struct DurationPredictor {
  std::vector<Conv1d> convs;
  PointwiseConv output;         // hidden -> 1
  PointwiseConv language_conv;  // embedding -> hidden

  static DurationPredictor random(std::size_t hidden, std::size_t embedding_dim,
                                  std::size_t depth, std::size_t kernel, std::mt19937_64& rng) {
    DurationPredictor p;
    for (std::size_t i = 0; i < depth; ++i) p.convs.push_back(Conv1d::random(hidden, hidden, kernel, rng));
    p.output = PointwiseConv::random(hidden, 1, rng);
    p.language_conv = PointwiseConv::random(embedding_dim, hidden, rng);
    return p;
  }

  std::size_t hidden_dim() const { return output.in_channels; }

  std::vector<NamedTensor> named(const std::string& prefix) {
    std::vector<NamedTensor> out;
    for (std::size_t i = 0; i < convs.size(); ++i) {
      for (auto& p : convs[i].named(prefix + ".conv" + std::to_string(i))) out.push_back(p);
    }
    for (auto& p : output.named(prefix + ".output")) out.push_back(p);
    for (auto& p : language_conv.named(prefix + ".language_conv")) out.push_back(p);
    return out;
  }
};

// With no speaker embedding the projection sees a zero vector, so the speaker
// term reduces to the projection bias and every speaker gets the same output.
inline Var ddp_forward(Tape& tape, DurationPredictor& predictor, SpeakerProjection& speaker_conv,
                       Var text_hidden, std::optional<Var> speaker_embedding,
                       Var language_embedding) {
  require(text_hidden.shape().size() == 2 && text_hidden.cols() == predictor.hidden_dim(),
          "duration predictor expects width " + std::to_string(predictor.hidden_dim()) +
              ", got " + to_string(text_hidden.shape()));
  require(speaker_conv.out_channels == predictor.hidden_dim(),
          "speaker projection width does not match the duration predictor");
  Var speaker = speaker_embedding
                    ? *speaker_embedding
                    : tape.constant(Shape{speaker_conv.in_channels},
                                    std::vector<double>(speaker_conv.in_channels, 0.0));
  Var x = add_row(text_hidden, speaker_conv.forward_vector(tape, speaker));
  x = add_row(x, predictor.language_conv.forward_vector(tape, language_embedding));
  for (Conv1d& conv : predictor.convs) x = layer_norm(tanh(conv.forward(tape, x)));
  Var out = predictor.output.forward(tape, x);
  return reshape(out, {text_hidden.rows()});
}

// MSE between predicted log-durations and log(target).
inline Var duration_loss(Var predicted_log_d, const DurationSequence& target) {
  require(predicted_log_d.size() == target.size(),
          "duration_loss: " + std::to_string(predicted_log_d.size()) + " predictions for " +
              std::to_string(target.size()) + " targets");
  std::vector<double> logs;
  logs.reserve(target.size());
  for (std::size_t d : target.frames) {
    require(d >= 1, "duration_loss: zero target duration");
    logs.push_back(std::log(static_cast<double>(d)));
  }
  Var t = predicted_log_d.tape().constant(predicted_log_d.shape(), std::move(logs));
  return mse(predicted_log_d, t);
}

// d[i] = max(1, round(exp(log_d[i]))).
inline DurationSequence discretize_durations(std::span<const double> predicted_log_d) {
  DurationSequence d;
  d.frames.reserve(predicted_log_d.size());
  for (double v : predicted_log_d) {
    require(std::isfinite(v), "discretize_durations: non-finite log-duration");
    const double r = std::round(std::exp(std::min(v, 20.0)));
    d.frames.push_back(std::max<std::size_t>(1, static_cast<std::size_t>(r)));
  }
  return d;
}

}  // namespace sanetts
