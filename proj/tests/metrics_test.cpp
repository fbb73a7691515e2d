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

#include <gtest/gtest.h>

#include "model_fixture.hpp"

namespace sanetts {
namespace {

using test::tiny_config;
using test::tiny_corpus_spec;

TEST(ScatterRatio, IdenticalVectorsGiveZero) {
  std::vector<std::vector<double>> reps(4, {0.3, -1.0});
  EXPECT_EQ(scatter_ratio(reps, {0, 0, 1, 1}), 0.0);
}

TEST(ScatterRatio, DegenerateWithinSpread) {
  EXPECT_GT(scatter_ratio({{1, 0}, {1, 0}, {-1, 0}, {-1, 0}}, {0, 0, 1, 1}), 1e8);
}

TEST(ScatterRatio, HandComputedExample) {
  // Centroids (1, 0.1) and (-1, -0.1), global centroid 0:
  // between = 1.01, within = 0.01.
  const double r = scatter_ratio({{1, 0}, {1, 0.2}, {-1, 0}, {-1, -0.2}}, {0, 0, 1, 1});
  EXPECT_NEAR(r, 1.01 / (0.01 + kScatterEpsilon), 1e-6);
}

TEST(ScatterRatio, WeightsLanguagesByCount) {
  // Centroids 3 (three members) and -1 (one member) around global 2:
  // between = (3 * 1 + 1 * 9) / 4 = 3; within = (1 + 1 + 0 + 0) / 4 = 0.5.
  EXPECT_NEAR(scatter_ratio({{2}, {4}, {3}, {-1}}, {0, 0, 0, 1}), 3.0 / (0.5 + kScatterEpsilon),
              1e-9);
}

TEST(ScatterRatio, TranslationInvariant) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<std::vector<double>> reps(12, std::vector<double>(5));
  std::vector<std::size_t> labels;
  for (std::size_t k = 0; k < reps.size(); ++k) {
    for (double& v : reps[k]) v = n(rng);
    labels.push_back(k % 3);
  }
  const double base = scatter_ratio(reps, labels);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<double> shift(5);
    for (double& v : shift) v = 10.0 * n(rng);
    auto moved = reps;
    for (auto& r : moved)
      for (std::size_t d = 0; d < 5; ++d) r[d] += shift[d];
    EXPECT_NEAR(scatter_ratio(moved, labels), base, 1e-9 * base);
  }
}

TEST(ScatterRatio, NeedsTwoLanguages) {
  EXPECT_THROW(scatter_ratio({{1}, {2}}, {0, 0}), ContractViolation);
}

TEST(DurationConsistency, ZeroModeIsExactlyConsistent) {
  Corpus corpus = generate_corpus(tiny_corpus_spec());
  Trainer t(tiny_config(), corpus);
  t.run();
  EXPECT_EQ(duration_consistency(t.model(), {4, 5, 6, 7, 5}, 1, {0, 1, 2, 3}), 0.0);
  EXPECT_THROW(duration_consistency(t.model(), {4, 5}, 1, {2}), ContractViolation);
}

TEST(DurationConsistency, SpeakerModeDiffersWithRandomWeights) {
  SaneModel m(TrainingConfig{}, ModelDims::from_spec(SyntheticCorpusSpec{}));
  std::vector<std::size_t> speakers(16);
  for (std::size_t s = 0; s < 16; ++s) speakers[s] = s;
  std::mt19937_64 rng(11);
  double worst = 0.0;
  for (int i = 0; i < 5; ++i) {
    auto text = random_text(m.dims, 2, 10, rng);
    worst = std::max(worst, duration_consistency(m, text, 2, speakers,
                                                 InferenceMode::kForceIntralingual));
  }
  EXPECT_GT(worst, 0.0);
}

TEST(SpeakerProbe, AccuracyIsAProbability) {
  Corpus corpus = generate_corpus(tiny_corpus_spec());
  SaneModel m(tiny_config(), ModelDims::from_spec(corpus.spec));
  const double acc = speaker_probe_accuracy(m, corpus);
  EXPECT_GE(acc, 0.0);
  EXPECT_LE(acc, 1.0);
  EXPECT_EQ(acc, speaker_probe_accuracy(m, corpus));
}

TEST(MetricsReport, JsonFieldsAndBounds) {
  Corpus corpus = generate_corpus(tiny_corpus_spec());
  SaneModel m(tiny_config(), ModelDims::from_spec(corpus.spec));
  EvalOptions opts;
  opts.texts_per_language = 2;
  MetricsReport r = evaluate(m, corpus, opts);
  EXPECT_GE(r.scatter_ratio, 0.0);
  EXPECT_EQ(r.duration_consistency_max_dev, 0.0);
  EXPECT_EQ(r.language_duration_means.size(), 2u);
  auto j = r.to_json();
  EXPECT_TRUE(j.contains("scatter_ratio"));
  EXPECT_TRUE(j.contains("speaker_probe_accuracy"));
  EXPECT_EQ(j["config"]["enable_dat"], "true");
  EXPECT_EQ(j.dump(), evaluate(m, corpus, opts).to_json().dump());
}

}  // namespace
}  // namespace sanetts
