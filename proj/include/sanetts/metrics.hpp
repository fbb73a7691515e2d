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
#include <cstdlib>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sanetts/model.hpp"

namespace sanetts {

constexpr double kScatterEpsilon = 1e-9;

// between / (within + eps). between: count-weighted mean squared distance of
// language centroids to the global centroid; within: mean squared distance of
// each vector to its language centroid.
inline double scatter_ratio(const std::vector<std::vector<double>>& reps,
                            const std::vector<std::size_t>& labels) {
  require(reps.size() == labels.size(), "scatter_ratio: one label per vector required");
  require(std::set<std::size_t>(labels.begin(), labels.end()).size() >= 2,
          "scatter_ratio needs at least two languages");
  const std::size_t dim = reps.front().size();
  for (const auto& r : reps) require(r.size() == dim, "scatter_ratio: ragged vectors");
  const double n = static_cast<double>(reps.size());

  std::vector<double> global(dim, 0.0);
  std::map<std::size_t, std::pair<std::vector<double>, double>> centroids;
  for (std::size_t k = 0; k < reps.size(); ++k) {
    auto& [c, count] = centroids[labels[k]];
    if (c.empty()) c.assign(dim, 0.0);
    for (std::size_t d = 0; d < dim; ++d) {
      c[d] += reps[k][d];
      global[d] += reps[k][d] / n;
    }
    count += 1.0;
  }
  for (auto& [label, entry] : centroids) {
    for (double& v : entry.first) v /= entry.second;
  }
  double between = 0.0, within = 0.0;
  for (const auto& [label, entry] : centroids) {
    double sq = 0.0;
    for (std::size_t d = 0; d < dim; ++d) sq += (entry.first[d] - global[d]) * (entry.first[d] - global[d]);
    between += entry.second * sq / n;
  }
  for (std::size_t k = 0; k < reps.size(); ++k) {
    const auto& c = centroids[labels[k]].first;
    for (std::size_t d = 0; d < dim; ++d) within += (reps[k][d] - c[d]) * (reps[k][d] - c[d]) / n;
  }
  return between / (within + kScatterEpsilon);
}

// Largest elementwise gap between the duration sequences predicted for the
// same text by different speakers.
inline double duration_consistency(SaneModel& model, const std::vector<std::size_t>& text,
                                   std::size_t language, const std::vector<std::size_t>& speakers,
                                   InferenceMode mode = InferenceMode::kForceCrosslingual) {
  require(speakers.size() >= 2, "duration_consistency needs at least two speakers");
  std::vector<DurationSequence> all;
  for (std::size_t s : speakers) all.push_back(infer(model, {text, language, s, mode}).durations);
  double worst = 0.0;
  for (std::size_t a = 0; a < all.size(); ++a) {
    for (std::size_t b = a + 1; b < all.size(); ++b) {
      for (std::size_t i = 0; i < all[a].size(); ++i) {
        const double d = std::abs(static_cast<double>(all[a].frames[i]) -
                                  static_cast<double>(all[b].frames[i]));
        worst = std::max(worst, d);
      }
    }
  }
  return worst;
}

// Uniformly random phoneme sequence from `language`'s id range.
inline std::vector<std::size_t> random_text(const ModelDims& dims, std::size_t language,
                                            std::size_t length, std::mt19937_64& rng) {
  const std::size_t per = dims.num_phonemes / dims.num_languages;
  std::uniform_int_distribution<std::size_t> pick(0, per - 1);
  std::vector<std::size_t> text(length);
  for (std::size_t& p : text) p = language * per + pick(rng);
  return text;
}

struct ProbeOptions {
  std::size_t iterations = 400;
  double learning_rate = 0.5;
  double l2 = 1e-4;
};

// Softmax-regression speaker probe on frozen, standardized, mean-pooled text
// hiddens. Trains on utterances with index % 5 != 0 and returns the accuracy
// on the rest.
inline double speaker_probe_accuracy(SaneModel& model, const Corpus& corpus,
                                     const ProbeOptions& opts = {}) {
  require(corpus.utterances.size() >= 5, "speaker probe needs at least five utterances");
  const auto features = pooled_text_hiddens(model, corpus.utterances);
  const std::size_t dim = features.front().size(), classes = model.dims.num_speakers();
  std::vector<std::size_t> train, test;
  for (std::size_t i = 0; i < features.size(); ++i) (i % 5 == 0 ? test : train).push_back(i);

  std::vector<double> mu(dim, 0.0), sd(dim, 0.0);
  for (std::size_t i : train)
    for (std::size_t d = 0; d < dim; ++d) mu[d] += features[i][d] / static_cast<double>(train.size());
  for (std::size_t i : train)
    for (std::size_t d = 0; d < dim; ++d)
      sd[d] += (features[i][d] - mu[d]) * (features[i][d] - mu[d]) / static_cast<double>(train.size());
  for (double& s : sd) s = std::sqrt(s) + 1e-12;
  auto standardized = [&](std::size_t i) {
    std::vector<double> x(dim);
    for (std::size_t d = 0; d < dim; ++d) x[d] = (features[i][d] - mu[d]) / sd[d];
    return x;
  };

  std::vector<double> w(classes * dim, 0.0), b(classes, 0.0);
  auto probs = [&](const std::vector<double>& x) {
    std::vector<double> z(classes);
    for (std::size_t c = 0; c < classes; ++c) {
      z[c] = b[c];
      for (std::size_t d = 0; d < dim; ++d) z[c] += w[c * dim + d] * x[d];
    }
    const double m = *std::max_element(z.begin(), z.end());
    double total = 0.0;
    for (double& v : z) total += (v = std::exp(v - m));
    for (double& v : z) v /= total;
    return z;
  };
  std::vector<std::vector<double>> xs;
  for (std::size_t i : train) xs.push_back(standardized(i));
  for (std::size_t it = 0; it < opts.iterations; ++it) {
    std::vector<double> gw(w.size(), 0.0), gb(classes, 0.0);
    for (std::size_t k = 0; k < train.size(); ++k) {
      auto p = probs(xs[k]);
      p[corpus.utterances[train[k]].speaker_id] -= 1.0;
      for (std::size_t c = 0; c < classes; ++c) {
        gb[c] += p[c];
        for (std::size_t d = 0; d < dim; ++d) gw[c * dim + d] += p[c] * xs[k][d];
      }
    }
    const double inv = 1.0 / static_cast<double>(train.size());
    for (std::size_t j = 0; j < w.size(); ++j) w[j] -= opts.learning_rate * (gw[j] * inv + opts.l2 * w[j]);
    for (std::size_t c = 0; c < classes; ++c) b[c] -= opts.learning_rate * gb[c] * inv;
  }
  std::size_t correct = 0;
  for (std::size_t i : test) {
    auto p = probs(standardized(i));
    const auto guess = static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
    if (guess == corpus.utterances[i].speaker_id) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(test.size());
}

struct MetricsReport {
  double scatter_ratio = 0.0;
  double duration_consistency_max_dev = 0.0;
  double speaker_probe_accuracy = 0.0;
  std::vector<double> language_duration_means;  // zero-vector mode, per language
  std::string config_text;

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json config = nlohmann::ordered_json::object();
    for (const auto& [k, v] : parse_config_pairs(config_text)) config[k] = v;
    return {{"scatter_ratio", scatter_ratio},
            {"duration_consistency_max_dev", duration_consistency_max_dev},
            {"speaker_probe_accuracy", speaker_probe_accuracy},
            {"language_duration_means", language_duration_means},
            {"config", config}};
  }
};

struct EvalOptions {
  std::size_t texts_per_language = 10;
  std::size_t text_length = 8;
  std::uint64_t seed = 7;
  ProbeOptions probe;
};

inline MetricsReport evaluate(SaneModel& model, const Corpus& corpus, const EvalOptions& opts = {}) {
  MetricsReport r;
  r.config_text = config_to_text(model.config);
  r.scatter_ratio = scatter_ratio(hidden_speaker_representations(model), model.dims.speaker_languages);
  std::vector<std::size_t> all_speakers(model.dims.num_speakers());
  for (std::size_t s = 0; s < all_speakers.size(); ++s) all_speakers[s] = s;
  std::mt19937_64 rng(opts.seed);
  for (std::size_t l = 0; l < model.dims.num_languages; ++l) {
    double total = 0.0, count = 0.0;
    for (std::size_t t = 0; t < opts.texts_per_language; ++t) {
      auto text = random_text(model.dims, l, opts.text_length, rng);
      if (all_speakers.size() >= 2) {
        r.duration_consistency_max_dev =
            std::max(r.duration_consistency_max_dev, duration_consistency(model, text, l, all_speakers));
      }
      auto d = infer(model, {text, l, 0, InferenceMode::kForceCrosslingual}).durations;
      total += static_cast<double>(d.total());
      count += static_cast<double>(d.size());
    }
    r.language_duration_means.push_back(total / count);
  }
  r.speaker_probe_accuracy = speaker_probe_accuracy(model, corpus, opts.probe);
  return r;
}

}  // namespace sanetts
