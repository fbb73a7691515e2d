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

#include <cmath>
#include <limits>

#include "sanetts/alignment.hpp"
#include "test_util.hpp"

namespace sanetts {
namespace {

ScoreMatrix random_scores(std::size_t p, std::size_t t, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  std::vector<double> v(p * t);
  for (double& x : v) x = dist(rng);
  return {p, t, std::move(v)};
}

TEST(MonotonicAlignment, SinglePhonemeTakesAllFrames) {
  std::mt19937_64 rng(1);
  for (std::size_t t = 1; t <= 9; ++t) {
    auto a = mas_search(random_scores(1, t, rng));
    EXPECT_EQ(a.assignment, std::vector<std::size_t>(t, 0));
    EXPECT_EQ(durations_from_alignment(a).frames, (std::vector<std::size_t>{t}));
  }
}

TEST(MonotonicAlignment, DiagonalScoresGiveIdentity) {
  const std::size_t n = 5;
  std::vector<double> v(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) v[i * n + i] = 100.0;
  auto a = mas_search({n, n, v});
  EXPECT_EQ(a.assignment, (std::vector<std::size_t>{0, 1, 2, 3, 4}));
  EXPECT_EQ(durations_from_alignment(a).frames, std::vector<std::size_t>(n, 1));
}

TEST(MonotonicAlignment, TwoByThreeInstance) {
  // Feasible alignments: durations (1,2) score -2, durations (2,1) score -1.
  ScoreMatrix s(2, 3, {0, -1, -5, -5, -2, 0});
  auto a = mas_search(s);
  EXPECT_EQ(durations_from_alignment(a).frames, (std::vector<std::size_t>{2, 1}));
  EXPECT_EQ(alignment_score(s, a), -1.0);
  EXPECT_EQ(brute_force_mas(s), a);
}

TEST(MonotonicAlignment, TiesPreferStaying) {
  for (std::size_t p = 1; p <= 4; ++p) {
    for (std::size_t t = p; t <= 7; ++t) {
      ScoreMatrix flat(p, t, std::vector<double>(p * t, 0.0));
      auto a = mas_search(flat);
      EXPECT_EQ(a, brute_force_mas(flat));
      EXPECT_EQ(durations_from_alignment(a).frames.front(), t - p + 1);
    }
  }
}

TEST(MonotonicAlignment, InfeasibleWhenFewerFramesThanPhonemes) {
  ScoreMatrix s(3, 2, std::vector<double>(6, 0.0));
  EXPECT_THROW(mas_search(s), InfeasibleAlignment);
  EXPECT_THROW(brute_force_mas(s), InfeasibleAlignment);
}

TEST(BruteForceAlignment, BoundsAndTrivialCase) {
  EXPECT_THROW(brute_force_mas(ScoreMatrix(7, 8, std::vector<double>(56, 0.0))), ContractViolation);
  EXPECT_THROW(brute_force_mas(ScoreMatrix(2, 11, std::vector<double>(22, 0.0))), ContractViolation);
  ScoreMatrix s(2, 2, {1.0, 2.0, 3.0, 4.0});
  EXPECT_EQ(brute_force_mas(s).assignment, (std::vector<std::size_t>{0, 1}));
  EXPECT_EQ(mas_search(s).assignment, (std::vector<std::size_t>{0, 1}));
}

TEST(BruteForceAlignment, ScoreDominatesEveryEnumeratedAlignment) {
  std::mt19937_64 rng(2);
  auto s = random_scores(3, 6, rng);
  const double best = alignment_score(s, brute_force_mas(s));
  for (std::size_t a = 1; a < 6; ++a) {
    for (std::size_t b = a + 1; b < 6; ++b) {
      Alignment al;
      for (std::size_t j = 0; j < 6; ++j) al.assignment.push_back((j >= a) + (j >= b));
      EXPECT_GE(best, alignment_score(s, al));
    }
  }
}

TEST(BruteForceAlignment, AgreesWithDynamicProgramOnRandomFourBySeven) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    auto s = random_scores(4, 7, rng);
    auto dp = mas_search(s);
    auto bf = brute_force_mas(s);
    EXPECT_EQ(dp, bf);
    EXPECT_EQ(alignment_score(s, dp), alignment_score(s, bf));
  }
}

TEST(MonotonicAlignment, OutputAlwaysSatisfiesInvariants) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t p = 1 + rng() % 12;
    const std::size_t t = p + rng() % 30;
    auto a = mas_search(random_scores(p, t, rng));
    EXPECT_EQ(a.assignment.size(), t);
    EXPECT_TRUE(is_valid_alignment(a, p));
    EXPECT_EQ(durations_from_alignment(a).total(), t);
  }
}

TEST(Durations, FromAlignment) {
  EXPECT_EQ(durations_from_alignment({{0, 0, 1}}).frames, (std::vector<std::size_t>{2, 1}));
  EXPECT_EQ(durations_from_alignment({{0, 1, 2}}).frames, (std::vector<std::size_t>{1, 1, 1}));
}

TEST(LengthRegulate, RowCountsAndIdentity) {
  std::mt19937_64 rng(5);
  Tensor h = test::random_tensor({3, 2}, rng);
  Tape tape;
  Var out = length_regulate(tape.constant(h), {{2, 1, 3}});
  EXPECT_EQ(out.shape(), (Shape{6, 2}));
  EXPECT_EQ(out.values()[2], h.values[0]);
  EXPECT_EQ(out.values()[6], h.values[4]);
  Var same = length_regulate(tape.constant(h), {{1, 1, 1}});
  EXPECT_EQ(std::vector<double>(same.values().begin(), same.values().end()), h.values);
}

TEST(LengthRegulate, GradientIsDurationTimesOnes) {
  std::mt19937_64 rng(6);
  Tensor h = test::random_tensor({3, 2}, rng);
  const DurationSequence d{{2, 1, 3}};
  auto f = [&](Tape& t) { return sum(length_regulate(t.param(h), d)); };
  auto report = finite_difference_check(f, {{"hidden", &h}}, test::kStep, test::kTol);
  EXPECT_TRUE(report.passed) << report.summary();
  for (const auto& e : report.per_parameter) {
    const std::size_t row = std::stoul(e.name.substr(e.name.find('[') + 1)) / 2;
    EXPECT_NEAR(e.numeric, static_cast<double>(d.frames[row]), 1e-6);
    EXPECT_EQ(e.analytic, static_cast<double>(d.frames[row]));
  }
}

TEST(LengthRegulate, Errors) {
  Tape tape;
  Var h = tape.constant({2, 2}, {1, 2, 3, 4});
  EXPECT_THROW(length_regulate(h, {{1, 1, 1}}), ContractViolation);
  EXPECT_THROW(length_regulate(h, {{1, 0}}), ContractViolation);
}

TEST(MasPipeline, RegulatedLengthMatchesFrameCount) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t p = 1 + rng() % 6;
    const std::size_t t = p + rng() % 10;
    auto d = durations_from_alignment(mas_search(random_scores(p, t, rng)));
    Tape tape;
    Tensor h = test::random_tensor({p, 3}, rng);
    EXPECT_EQ(length_regulate(tape.constant(h), d).rows(), t);
  }
}

struct PredictorFixture {
  std::mt19937_64 rng;
  std::size_t hidden = 4, emb = 3;
  DurationPredictor predictor;
  SpeakerProjection speaker_conv;
  EmbeddingTable speakers;
  Tensor text, language;

  explicit PredictorFixture(std::uint64_t seed)
      : rng(seed),
        predictor(DurationPredictor::random(hidden, emb, 2, 3, rng)),
        speaker_conv(SpeakerProjection::random(emb, hidden, rng)),
        speakers(EmbeddingTable::random(6, emb, rng)),
        text(test::random_tensor({5, hidden}, rng)),
        language(test::random_tensor({emb}, rng)) {}

  std::vector<double> run(std::optional<std::size_t> speaker) {
    Tape tape;
    std::optional<Var> s;
    if (speaker) s = speakers.row(tape, *speaker);
    Var out = ddp_forward(tape, predictor, speaker_conv, tape.constant(text), s,
                          tape.constant(language));
    return {out.values().begin(), out.values().end()};
  }
};

TEST(DurationPredictor, ZeroModeIgnoresSpeaker) {
  PredictorFixture fx(8);
  const auto zero = fx.run(std::nullopt);
  EXPECT_EQ(zero.size(), 5u);
  // Any speaker table content is irrelevant in zero mode.
  for (int k = 0; k < 3; ++k) {
    fx.speakers = EmbeddingTable::random(6, fx.emb, fx.rng);
    EXPECT_EQ(fx.run(std::nullopt), zero);
  }
}

TEST(DurationPredictor, SpeakerModeDependsOnSpeaker) {
  PredictorFixture fx(9);
  EXPECT_NE(fx.run(0), fx.run(1));
  EXPECT_NE(fx.run(0), fx.run(std::nullopt));
}

TEST(DurationPredictor, GradientCheck) {
  for (int seed = 0; seed < test::kSeeds; ++seed) {
    PredictorFixture fx(static_cast<std::uint64_t>(seed) + 100);
    auto f = [&](Tape& t) {
      return sum(ddp_forward(t, fx.predictor, fx.speaker_conv, t.param(fx.text),
                             fx.speakers.row(t, 2), t.param(fx.language)));
    };
    auto params = fx.predictor.named("ddp");
    for (auto& p : fx.speaker_conv.named("speaker_conv")) params.push_back(p);
    params.push_back({"speakers", &fx.speakers.weights});
    params.push_back({"text", &fx.text});
    params.push_back({"language", &fx.language});
    GradCheckOptions opts;
    opts.max_elements_per_tensor = 30;
    opts.seed = static_cast<std::uint64_t>(seed);
    auto report = finite_difference_check(f, params, test::kStep, test::kTol, opts);
    EXPECT_TRUE(report.passed) << "seed " << seed << ": " << report.summary();
  }
}

TEST(DurationPredictor, WidthMismatch) {
  PredictorFixture fx(10);
  Tape tape;
  EXPECT_THROW(ddp_forward(tape, fx.predictor, fx.speaker_conv,
                           tape.constant({2, 3}, std::vector<double>(6, 0.0)), std::nullopt,
                           tape.constant(fx.language)),
               ContractViolation);
}

TEST(DurationLoss, Values) {
  Tape tape;
  const DurationSequence target{{2, 3, 1}};
  Var exact = tape.constant({3}, {std::log(2.0), std::log(3.0), 0.0});
  EXPECT_EQ(duration_loss(exact, target).item(), 0.0);
  Var pred = tape.constant({3}, {0.5, -1.0, 2.0});
  EXPECT_DOUBLE_EQ(duration_loss(pred, {{1, 1, 1}}).item(), (0.25 + 1.0 + 4.0) / 3.0);
  EXPECT_THROW(duration_loss(pred, {{1, 1}}), ContractViolation);
}

TEST(DurationLoss, GradientCheck) {
  for (int seed = 0; seed < test::kSeeds; ++seed) {
    std::mt19937_64 rng(static_cast<std::uint64_t>(seed));
    Tensor pred = test::random_tensor({4}, rng, -1.0, 2.0);
    const DurationSequence target{{1 + rng() % 5, 1 + rng() % 5, 1 + rng() % 5, 1 + rng() % 5}};
    auto report = finite_difference_check([&](Tape& t) { return duration_loss(t.param(pred), target); },
                                          {{"pred", &pred}}, test::kStep, test::kTol);
    EXPECT_TRUE(report.passed) << report.summary();
  }
}

TEST(DiscretizeDurations, Rounding) {
  const double zeros[] = {0.0, 0.0, 0.0};
  EXPECT_EQ(discretize_durations(zeros).frames, (std::vector<std::size_t>{1, 1, 1}));
  const double ln24[] = {std::log(2.4)};
  EXPECT_EQ(discretize_durations(ln24).frames, (std::vector<std::size_t>{2}));
  const double tiny[] = {-5.0};
  EXPECT_EQ(discretize_durations(tiny).frames, (std::vector<std::size_t>{1}));
  const double bad[] = {std::numeric_limits<double>::quiet_NaN()};
  EXPECT_THROW(discretize_durations(bad), ContractViolation);
}

TEST(DiscretizeDurations, NeverZero) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> dist(-30.0, 4.0);
  std::vector<double> v(1000);
  for (double& x : v) x = dist(rng);
  for (std::size_t d : discretize_durations(v).frames) EXPECT_GE(d, 1u);
}

}  // namespace
}  // namespace sanetts
