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

#include <algorithm>

#include "sanetts/layers.hpp"
#include "test_util.hpp"

namespace sanetts {
namespace {

std::vector<double> to_vec(Var v) { return {v.values().begin(), v.values().end()}; }

TextEncoderSpec tiny_spec() {
  TextEncoderSpec s;
  s.num_blocks = 2;
  s.hidden_dim = 4;
  s.num_heads = 2;
  s.ffn_dim = 6;
  s.attention_window = 2;
  return s;
}

// Flat block weights drawn the same way the generator base is initialized.
Tensor random_flat(const ParamLayout& layout, std::mt19937_64& rng) {
  Tensor flat = Tensor::zeros({layout.total()}, true);
  for (const auto& e : layout.entries()) {
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    for (std::size_t i = 0; i < numel(e.shape); ++i) {
      flat.values[e.offset + i] = e.is_gain ? 1.0 + 0.3 * dist(rng) : dist(rng) / std::sqrt(e.fan_in);
    }
  }
  return flat;
}

TEST(EmbeddingTable, RepeatedIdsGiveIdenticalRows) {
  std::mt19937_64 rng(1);
  auto table = EmbeddingTable::random(3, 5, rng);
  Tape tape;
  const std::size_t ids[] = {0, 0};
  Var out = table.lookup(tape, ids);
  ASSERT_EQ(out.shape(), (Shape{2, 5}));
  for (std::size_t j = 0; j < 5; ++j) EXPECT_EQ(out.values()[j], out.values()[5 + j]);
}

TEST(EmbeddingTable, OneHotLookup) {
  EmbeddingTable table{2, 2, Tensor({2, 2}, {1.0, 0.0, 0.0, 1.0}, true)};
  Tape tape;
  const std::size_t ids[] = {1};
  EXPECT_EQ(to_vec(table.lookup(tape, ids)), (std::vector<double>{0.0, 1.0}));
}

TEST(EmbeddingTable, GradientScatterAdds) {
  std::mt19937_64 rng(2);
  auto table = EmbeddingTable::random(3, 4, rng);
  const std::size_t ids[] = {0, 0, 1};
  auto f = [&](Tape& t) { return sum(table.lookup(t, ids)); };
  auto report = finite_difference_check(f, {{"weights", &table.weights}}, test::kStep, test::kTol);
  EXPECT_TRUE(report.passed) << report.summary();
  Tape tape;
  backward(tape, f(tape));
  const auto& g = *table.weights.grad;
  for (std::size_t j = 0; j < 4; ++j) {
    EXPECT_DOUBLE_EQ(g[j], 2.0);
    EXPECT_DOUBLE_EQ(g[4 + j], 1.0);
    EXPECT_DOUBLE_EQ(g[8 + j], 0.0);
  }
}

TEST(EmbeddingTable, OutOfRangeIdNamesIdAndSize) {
  std::mt19937_64 rng(3);
  auto table = EmbeddingTable::random(3, 2, rng);
  Tape tape;
  const std::size_t ids[] = {7};
  try {
    table.lookup(tape, ids);
    FAIL();
  } catch (const ContractViolation& e) {
    EXPECT_NE(std::string(e.what()).find("7"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("3 entries"), std::string::npos);
  }
}

TEST(PointwiseConv, IdentityAndBiasOnly) {
  std::mt19937_64 rng(4);
  Tensor x = test::random_tensor({5, 3}, rng);
  auto id = PointwiseConv::identity(3);
  Tape tape;
  EXPECT_EQ(to_vec(id.forward(tape, tape.constant(x))), x.values);

  PointwiseConv bias_only{3, 2, Tensor::zeros({2, 3}, true), Tensor({2}, {0.5, -1.5}, true)};
  Var out = bias_only.forward(tape, tape.constant(x));
  for (std::size_t t = 0; t < 5; ++t) {
    EXPECT_EQ(out.values()[2 * t], 0.5);
    EXPECT_EQ(out.values()[2 * t + 1], -1.5);
  }
}

TEST(PointwiseConv, GradientCheck) {
  for (int seed = 0; seed < test::kSeeds; ++seed) {
    std::mt19937_64 rng(static_cast<std::uint64_t>(seed));
    auto conv = PointwiseConv::random(3, 4, rng);
    Tensor x = test::random_tensor({5, 3}, rng);
    auto f = [&](Tape& t) { return test::weighted_sum(conv.forward(t, t.param(x)), seed); };
    auto params = conv.named("conv");
    params.push_back({"x", &x});
    auto report = finite_difference_check(f, params, test::kStep, test::kTol);
    EXPECT_TRUE(report.passed) << report.summary();
  }
}

TEST(PointwiseConv, ChannelMismatch) {
  auto conv = PointwiseConv::identity(3);
  Tape tape;
  EXPECT_THROW(conv.forward(tape, tape.constant({2, 4}, std::vector<double>(8, 0.0))),
               ContractViolation);
}

TEST(Conv1d, GradientCheck) {
  for (int seed = 0; seed < test::kSeeds; ++seed) {
    std::mt19937_64 rng(static_cast<std::uint64_t>(seed) + 40);
    auto conv = Conv1d::random(2, 3, 3, rng);
    Tensor x = test::random_tensor({4, 2}, rng);
    auto f = [&](Tape& t) { return test::weighted_sum(conv.forward(t, t.param(x)), seed); };
    auto params = conv.named("conv");
    params.push_back({"x", &x});
    auto report = finite_difference_check(f, params, test::kStep, test::kTol);
    EXPECT_TRUE(report.passed) << report.summary();
  }
}

TEST(EncoderLayout, CoversFlatVectorExactly) {
  const auto layout = encoder_layout(tiny_spec());
  std::size_t covered = 0;
  for (const auto& e : layout.entries()) {
    EXPECT_EQ(e.offset, covered);
    covered += numel(e.shape);
  }
  EXPECT_EQ(covered, layout.total());
  TextEncoderSpec bad = tiny_spec();
  bad.num_heads = 3;
  EXPECT_THROW(encoder_layout(bad), ConfigError);
}

TEST(TransformerBlock, SinglePositionIsFinite) {
  std::mt19937_64 rng(5);
  const auto spec = tiny_spec();
  auto layout = std::make_shared<const ParamLayout>(encoder_layout(spec));
  Tensor flat = random_flat(*layout, rng);
  Tensor x = test::random_tensor({1, spec.hidden_dim}, rng);
  Tape tape;
  Var y = transformer_block_forward(spec, BlockParams::from({layout, tape.param(flat)}, 0),
                                    tape.constant(x));
  EXPECT_EQ(y.shape(), (Shape{1, spec.hidden_dim}));
  for (double v : y.values()) EXPECT_TRUE(std::isfinite(v));
}

TEST(TransformerBlock, ZeroedBranchesAreResidualIdentity) {
  std::mt19937_64 rng(6);
  const auto spec = tiny_spec();
  auto layout = std::make_shared<const ParamLayout>(encoder_layout(spec));
  Tensor flat = random_flat(*layout, rng);
  for (const char* name : {"attn.output", "ffn.out", "ffn.out_bias"}) {
    const auto& e = layout->at(block_key(0, name));
    std::fill_n(flat.values.begin() + static_cast<std::ptrdiff_t>(e.offset), numel(e.shape), 0.0);
  }
  Tensor x = test::random_tensor({4, spec.hidden_dim}, rng);
  Tape tape;
  Var y = transformer_block_forward(spec, BlockParams::from({layout, tape.param(flat)}, 0),
                                    tape.constant(x));
  EXPECT_EQ(to_vec(y), x.values);
}

TEST(TransformerBlock, PermutationEquivariantWithoutPositionBias) {
  std::mt19937_64 rng(7);
  const auto spec = tiny_spec();
  auto layout = std::make_shared<const ParamLayout>(encoder_layout(spec));
  Tensor flat = random_flat(*layout, rng);
  const auto& rel = layout->at(block_key(0, "attn.rel_bias"));
  std::fill_n(flat.values.begin() + static_cast<std::ptrdiff_t>(rel.offset), numel(rel.shape), 0.0);
  Tensor x = test::random_tensor({4, spec.hidden_dim}, rng);
  const std::vector<std::size_t> perm = {2, 0, 3, 1};
  Tensor xp = Tensor::zeros({4, spec.hidden_dim});
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t c = 0; c < spec.hidden_dim; ++c) xp.at(r, c) = x.at(perm[r], c);
  Tape tape;
  auto params = BlockParams::from({layout, tape.param(flat)}, 0);
  Var y = transformer_block_forward(spec, params, tape.constant(x));
  Var yp = transformer_block_forward(spec, params, tape.constant(xp));
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t c = 0; c < spec.hidden_dim; ++c)
      EXPECT_NEAR(yp.values()[r * spec.hidden_dim + c], y.values()[perm[r] * spec.hidden_dim + c],
                  1e-12);
}

TEST(TransformerBlock, GradientCheckOverAllBlockParameters) {
  const auto spec = tiny_spec();
  auto layout = std::make_shared<const ParamLayout>(encoder_layout(spec));
  for (int seed = 0; seed < test::kSeeds; ++seed) {
    std::mt19937_64 rng(static_cast<std::uint64_t>(seed) + 1000);
    Tensor flat = random_flat(*layout, rng);
    Tensor x = test::random_tensor({3, spec.hidden_dim}, rng);
    auto f = [&](Tape& t) {
      auto p = BlockParams::from({layout, t.param(flat)}, 1);
      return test::weighted_sum(transformer_block_forward(spec, p, t.param(x)), seed);
    };
    auto report = finite_difference_check(f, {{"block", &flat}, {"x", &x}}, test::kStep, test::kTol);
    EXPECT_TRUE(report.passed) << "seed " << seed << ": " << report.summary();
  }
}

TEST(TransformerBlock, WidthMismatch) {
  std::mt19937_64 rng(8);
  const auto spec = tiny_spec();
  auto layout = std::make_shared<const ParamLayout>(encoder_layout(spec));
  Tensor flat = random_flat(*layout, rng);
  Tape tape;
  EXPECT_THROW(transformer_block_forward(spec, BlockParams::from({layout, tape.param(flat)}, 0),
                                         tape.constant({2, 3}, std::vector<double>(6, 0.0))),
               ContractViolation);
}

TEST(ParameterGenerator, DeterministicAndLayoutStable) {
  std::mt19937_64 rng(9);
  auto gen = ParameterGenerator::random(tiny_spec(), 3, rng);
  Tensor lang = test::random_tensor({3}, rng);
  Tape tape;
  auto a = generate_encoder_params(tape, gen, tape.constant(lang));
  auto b = generate_encoder_params(tape, gen, tape.constant(lang));
  EXPECT_EQ(to_vec(a.flat), to_vec(b.flat));
  EXPECT_EQ(a.layout, b.layout);
  EXPECT_EQ(a.flat.size(), a.layout->total());
}

TEST(ParameterGenerator, ZeroWeightReturnsBase) {
  std::mt19937_64 rng(10);
  auto gen = ParameterGenerator::random(tiny_spec(), 3, rng);
  std::fill(gen.weight.values.begin(), gen.weight.values.end(), 0.0);
  Tape tape;
  for (int k = 0; k < 3; ++k) {
    Tensor lang = test::random_tensor({3}, rng);
    EXPECT_EQ(to_vec(generate_encoder_params(tape, gen, tape.constant(lang)).flat), gen.base.values);
  }
}

TEST(ParameterGenerator, DistinctEmbeddingsGiveDistinctParameters) {
  std::mt19937_64 rng(11);
  auto gen = ParameterGenerator::random(tiny_spec(), 3, rng);
  Tensor a = test::random_tensor({3}, rng);
  Tensor b = test::random_tensor({3}, rng);
  Tape tape;
  auto pa = to_vec(generate_encoder_params(tape, gen, tape.constant(a)).flat);
  auto pb = to_vec(generate_encoder_params(tape, gen, tape.constant(b)).flat);
  std::size_t differing = 0;
  for (std::size_t i = 0; i < pa.size(); ++i) differing += pa[i] != pb[i];
  EXPECT_GE(differing, 1u);
}

TEST(ParameterGenerator, WidthMismatch) {
  std::mt19937_64 rng(12);
  auto gen = ParameterGenerator::random(tiny_spec(), 3, rng);
  Tape tape;
  EXPECT_THROW(generate_encoder_params(tape, gen, tape.constant({4}, {0, 0, 0, 0})),
               ContractViolation);
}

struct EncoderFixture {
  std::mt19937_64 rng{13};
  TextEncoder encoder = TextEncoder::random(tiny_spec(), 10, 3, rng);
  std::vector<std::size_t> ids{1, 4, 4, 9, 0};
};

TEST(TextEncoder, OutputShape) {
  EncoderFixture fx;
  Tensor lang = test::random_tensor({3}, fx.rng);
  for (std::size_t len : {1u, 3u, 5u}) {
    Tape tape;
    Var l = tape.constant(lang);
    auto gen = generate_encoder_params(tape, fx.encoder.generator, l);
    std::span<const std::size_t> ids(fx.ids.data(), len);
    EXPECT_EQ(text_encoder_forward(tape, fx.encoder, gen, ids, l).shape(),
              (Shape{len, fx.encoder.spec.hidden_dim}));
  }
}

TEST(TextEncoder, ZeroLanguageAndBiasMeansNoInjection) {
  EncoderFixture fx;
  std::fill(fx.encoder.language_injection.bias.values.begin(),
            fx.encoder.language_injection.bias.values.end(), 0.0);
  Tensor gen_lang = test::random_tensor({3}, fx.rng);
  Tape tape;
  auto gen = generate_encoder_params(tape, fx.encoder.generator, tape.constant(gen_lang));
  Var out = text_encoder_forward(tape, fx.encoder, gen, fx.ids, tape.constant({3}, {0, 0, 0}));
  Var x = fx.encoder.phonemes.lookup(tape, fx.ids);
  for (std::size_t b = 0; b < fx.encoder.spec.num_blocks; ++b)
    x = transformer_block_forward(fx.encoder.spec, BlockParams::from(gen, b), x);
  EXPECT_EQ(to_vec(out), to_vec(x));
}

TEST(TextEncoder, LanguageInjectionIsAdditive) {
  EncoderFixture fx;
  Tensor lang = test::random_tensor({3}, fx.rng);
  Tape tape;
  auto gen = generate_encoder_params(tape, fx.encoder.generator, tape.constant(lang));
  Var with = text_encoder_forward(tape, fx.encoder, gen, fx.ids, tape.constant(lang));
  auto saved_bias = fx.encoder.language_injection.bias;
  auto without_enc = fx.encoder;
  std::fill(without_enc.language_injection.bias.values.begin(),
            without_enc.language_injection.bias.values.end(), 0.0);
  Var without = text_encoder_forward(tape, without_enc, gen, fx.ids, tape.constant({3}, {0, 0, 0}));
  Var injected = fx.encoder.language_injection.forward_vector(tape, tape.constant(lang));
  const std::size_t h = fx.encoder.spec.hidden_dim;
  for (std::size_t t = 0; t < fx.ids.size(); ++t)
    for (std::size_t c = 0; c < h; ++c)
      EXPECT_NEAR(with.values()[t * h + c] - without.values()[t * h + c], injected.values()[c],
                  1e-12);
}

TEST(TextEncoder, DifferentLanguagesGiveDifferentHiddens) {
  for (int seed = 0; seed < 5; ++seed) {
    std::mt19937_64 rng(static_cast<std::uint64_t>(seed) + 50);
    auto encoder = TextEncoder::random(tiny_spec(), 10, 3, rng);
    Tensor a = test::random_tensor({3}, rng);
    Tensor b = test::random_tensor({3}, rng);
    const std::vector<std::size_t> ids{2, 3, 5};
    Tape tape;
    Var la = tape.constant(a), lb = tape.constant(b);
    auto ha = to_vec(text_encoder_forward(tape, encoder, generate_encoder_params(tape, encoder.generator, la), ids, la));
    auto hb = to_vec(text_encoder_forward(tape, encoder, generate_encoder_params(tape, encoder.generator, lb), ids, lb));
    EXPECT_NE(ha, hb);
  }
}

TEST(TextEncoder, LayoutMismatchIsConfigError) {
  EncoderFixture fx;
  TextEncoderSpec other = tiny_spec();
  other.ffn_dim = 8;
  std::mt19937_64 rng(14);
  auto foreign = ParameterGenerator::random(other, 3, rng);
  Tape tape;
  Var l = tape.constant({3}, {0.1, 0.2, 0.3});
  auto gen = generate_encoder_params(tape, foreign, l);
  EXPECT_THROW(text_encoder_forward(tape, fx.encoder, gen, fx.ids, l), ConfigError);
}

TEST(TextEncoder, GradientFlowsThroughGeneratorIntoEveryInput) {
  for (int seed = 0; seed < test::kSeeds; ++seed) {
    std::mt19937_64 rng(static_cast<std::uint64_t>(seed) + 300);
    auto encoder = TextEncoder::random(tiny_spec(), 10, 3, rng);
    Tensor lang = test::random_tensor({3}, rng);
    const std::vector<std::size_t> ids{1, 7, 2, 2};
    auto f = [&](Tape& t) {
      Var l = t.param(lang);
      auto gen = generate_encoder_params(t, encoder.generator, l);
      return sum(text_encoder_forward(t, encoder, gen, ids, l));
    };
    auto params = encoder.named("encoder");
    params.push_back({"language", &lang});
    GradCheckOptions opts;
    opts.max_elements_per_tensor = 40;
    opts.seed = static_cast<std::uint64_t>(seed);
    auto report = finite_difference_check(f, params, test::kStep, test::kTol, opts);
    EXPECT_TRUE(report.passed) << "seed " << seed << ": " << report.summary();
  }
}

}  // namespace
}  // namespace sanetts
