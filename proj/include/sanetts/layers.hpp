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
#include <map>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "sanetts/autodiff.hpp"

namespace sanetts {

// U(-1/sqrt(fan_in), +1/sqrt(fan_in)) in row-major order.
inline Tensor uniform_tensor(Shape shape, std::size_t fan_in, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> v(numel(shape));
  for (double& x : v) x = dist(rng);
  return Tensor(std::move(shape), std::move(v), true);
}

struct EmbeddingTable {
  std::size_t num_entries = 0;
  std::size_t dim = 0;
  Tensor weights;  // [num_entries x dim]

  static EmbeddingTable random(std::size_t entries, std::size_t dim, std::mt19937_64& rng) {
    return {entries, dim, uniform_tensor({entries, dim}, dim, rng)};
  }

  // [ids.size() x dim]
  Var lookup(Tape& tape, std::span<const std::size_t> ids) {
    for (std::size_t id : ids) {
      require(id < num_entries, "embedding id " + std::to_string(id) +
                                    " out of range for table of " +
                                    std::to_string(num_entries) + " entries");
    }
    return gather_rows(tape.param(weights), ids);
  }

  // Single entry as a [dim] vector.
  Var row(Tape& tape, std::size_t id) {
    const std::size_t ids[1] = {id};
    return reshape(lookup(tape, ids), {dim});
  }
};

// Kernel-size-1 convolution: out[t] = weight * x[t] + bias at each position t.
// Also serves as the fully connected layer for single vectors.
struct PointwiseConv {
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  Tensor weight;  // [out x in]
  Tensor bias;    // [out]

  static PointwiseConv random(std::size_t in, std::size_t out, std::mt19937_64& rng) {
    PointwiseConv c{in, out, uniform_tensor({out, in}, in, rng), uniform_tensor({out}, in, rng)};
    return c;
  }

  static PointwiseConv identity(std::size_t n) {
    PointwiseConv c{n, n, Tensor::zeros({n, n}, true), Tensor::zeros({n}, true)};
    for (std::size_t i = 0; i < n; ++i) c.weight.at(i, i) = 1.0;
    return c;
  }

  // x [len x in] -> [len x out]
  Var forward(Tape& tape, Var x) {
    require(x.shape().size() == 2 && x.cols() == in_channels,
            "pointwise conv expects " + std::to_string(in_channels) + " channels, got " +
                to_string(x.shape()));
    return add_row(matmul(x, transpose(tape.param(weight))), tape.param(bias));
  }

  // v [in] -> [out]
  Var forward_vector(Tape& tape, Var v) {
    require(v.size() == in_channels, "pointwise conv expects " + std::to_string(in_channels) +
                                         " channels, got " + to_string(v.shape()));
    return reshape(forward(tape, reshape(v, {1, in_channels})), {out_channels});
  }

  std::vector<NamedTensor> named(const std::string& prefix) {
    return {{prefix + ".weight", &weight}, {prefix + ".bias", &bias}};
  }
};

using FullyConnected = PointwiseConv;

// Zero-padded 1-D convolution over the sequence axis with an odd kernel.
struct Conv1d {
  std::size_t kernel = 1;
  PointwiseConv taps;  // [out x (kernel * in)], window position major

  static Conv1d random(std::size_t in, std::size_t out, std::size_t kernel,
                       std::mt19937_64& rng) {
    return {kernel, PointwiseConv::random(in * kernel, out, rng)};
  }

  std::size_t in_channels() const { return taps.in_channels / kernel; }

  Var forward(Tape& tape, Var x) {
    require(x.shape().size() == 2 && x.cols() == in_channels(),
            "conv1d expects " + std::to_string(in_channels()) + " channels, got " +
                to_string(x.shape()));
    return taps.forward(tape, kernel == 1 ? x : unfold(x, kernel));
  }

  std::vector<NamedTensor> named(const std::string& prefix) { return taps.named(prefix); }
};

// ---- text encoder -----------------------------------------------------------

struct TextEncoderSpec {
  std::size_t num_blocks = 2;
  std::size_t hidden_dim = 32;
  std::size_t num_heads = 2;
  std::size_t ffn_dim = 64;
  std::size_t attention_window = 4;  // relative positions clipped to [-w, w]

  void validate() const {
    if (num_blocks == 0 || hidden_dim == 0 || num_heads == 0 || ffn_dim == 0) {
      throw ConfigError("text encoder dimensions must be positive");
    }
    if (hidden_dim % num_heads != 0) {
      throw ConfigError("hidden_dim " + std::to_string(hidden_dim) +
                        " is not divisible by num_heads " + std::to_string(num_heads));
    }
  }

  bool operator==(const TextEncoderSpec&) const = default;
};

struct LayoutEntry {
  std::string name;
  Shape shape;
  std::size_t offset = 0;
  std::size_t fan_in = 1;
  bool is_gain = false;  // layer norm gains start at 1
};

// Placement of every text-encoder tensor inside the generated flat vector.
class ParamLayout {
 public:
  void add(std::string name, Shape shape, std::size_t fan_in, bool is_gain = false) {
    const std::size_t n = numel(shape);
    index_.emplace(name, entries_.size());
    entries_.push_back({std::move(name), std::move(shape), total_, fan_in, is_gain});
    total_ += n;
  }

  const LayoutEntry& at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("parameter layout has no entry '" + name + "'");
    return entries_[it->second];
  }

  const std::vector<LayoutEntry>& entries() const { return entries_; }
  std::size_t total() const { return total_; }

  bool operator==(const ParamLayout& o) const {
    if (total_ != o.total_ || entries_.size() != o.entries_.size()) return false;
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      if (entries_[i].name != o.entries_[i].name || entries_[i].shape != o.entries_[i].shape ||
          entries_[i].offset != o.entries_[i].offset)
        return false;
    }
    return true;
  }

 private:
  std::vector<LayoutEntry> entries_;
  std::map<std::string, std::size_t> index_;
  std::size_t total_ = 0;
};

inline std::string block_key(std::size_t block, const char* name) {
  return "block" + std::to_string(block) + "." + name;
}

inline ParamLayout encoder_layout(const TextEncoderSpec& spec) {
  spec.validate();
  const std::size_t h = spec.hidden_dim, f = spec.ffn_dim;
  ParamLayout layout;
  for (std::size_t b = 0; b < spec.num_blocks; ++b) {
    layout.add(block_key(b, "ln1.gain"), {h}, h, true);
    layout.add(block_key(b, "ln1.bias"), {h}, h);
    layout.add(block_key(b, "attn.query"), {h, h}, h);
    layout.add(block_key(b, "attn.key"), {h, h}, h);
    layout.add(block_key(b, "attn.value"), {h, h}, h);
    layout.add(block_key(b, "attn.output"), {h, h}, h);
    layout.add(block_key(b, "attn.rel_bias"), {spec.num_heads, 2 * spec.attention_window + 1},
               2 * spec.attention_window + 1);
    layout.add(block_key(b, "ln2.gain"), {h}, h, true);
    layout.add(block_key(b, "ln2.bias"), {h}, h);
    layout.add(block_key(b, "ffn.in"), {h, f}, h);
    layout.add(block_key(b, "ffn.in_bias"), {f}, h);
    layout.add(block_key(b, "ffn.out"), {f, h}, f);
    layout.add(block_key(b, "ffn.out_bias"), {h}, f);
  }
  return layout;
}

// Text-encoder weights produced for one language, as views into a flat
// vector recorded on a tape.
struct GeneratedParameters {
  std::shared_ptr<const ParamLayout> layout;
  Var flat;

  Var get(const std::string& name) const {
    const LayoutEntry& e = layout->at(name);
    return segment(flat, e.offset, e.shape);
  }
};

// Affine map from a language embedding to the flat encoder parameter vector:
// flat = weight * embedding + base.
struct ParameterGenerator {
  std::shared_ptr<const ParamLayout> layout;
  std::size_t embedding_dim = 0;
  Tensor weight;  // [layout.total x embedding_dim]
  Tensor base;    // [layout.total]

  static ParameterGenerator random(const TextEncoderSpec& spec, std::size_t embedding_dim,
                                   std::mt19937_64& rng) {
    auto layout = std::make_shared<const ParamLayout>(encoder_layout(spec));
    const std::size_t n = layout->total();
    ParameterGenerator g{layout, embedding_dim,
                         uniform_tensor({n, embedding_dim}, embedding_dim, rng),
                         Tensor::zeros({n}, true)};
    for (const LayoutEntry& e : layout->entries()) {
      const std::size_t count = numel(e.shape);
      if (e.is_gain) {
        std::fill_n(g.base.values.begin() + static_cast<std::ptrdiff_t>(e.offset), count, 1.0);
        continue;
      }
      const double bound = 1.0 / std::sqrt(static_cast<double>(e.fan_in));
      std::uniform_real_distribution<double> dist(-bound, bound);
      for (std::size_t i = 0; i < count; ++i) g.base.values[e.offset + i] = dist(rng);
    }
    return g;
  }

  std::vector<NamedTensor> named(const std::string& prefix) {
    return {{prefix + ".weight", &weight}, {prefix + ".base", &base}};
  }
};

inline GeneratedParameters generate_encoder_params(Tape& tape, ParameterGenerator& generator,
                                                   Var language_embedding) {
  require(language_embedding.size() == generator.embedding_dim,
          "parameter generator expects a " + std::to_string(generator.embedding_dim) +
              "-wide language embedding, got " + to_string(language_embedding.shape()));
  const std::size_t n = generator.layout->total();
  Var column = reshape(language_embedding, {generator.embedding_dim, 1});
  Var flat = add(reshape(matmul(tape.param(generator.weight), column), {n}),
                 tape.param(generator.base));
  return {generator.layout, flat};
}

// Weights of one pre-norm transformer block.
struct BlockParams {
  Var ln1_gain, ln1_bias;
  Var query, key, value, output;
  Var rel_bias;  // [heads x (2w + 1)]
  Var ln2_gain, ln2_bias;
  Var ffn_in, ffn_in_bias, ffn_out, ffn_out_bias;

  static BlockParams from(const GeneratedParameters& g, std::size_t b) {
    return {g.get(block_key(b, "ln1.gain")),   g.get(block_key(b, "ln1.bias")),
            g.get(block_key(b, "attn.query")), g.get(block_key(b, "attn.key")),
            g.get(block_key(b, "attn.value")), g.get(block_key(b, "attn.output")),
            g.get(block_key(b, "attn.rel_bias")), g.get(block_key(b, "ln2.gain")),
            g.get(block_key(b, "ln2.bias")),   g.get(block_key(b, "ffn.in")),
            g.get(block_key(b, "ffn.in_bias")), g.get(block_key(b, "ffn.out")),
            g.get(block_key(b, "ffn.out_bias"))};
  }
};

inline Var affine_norm(Var x, Var gain, Var bias) {
  return add_row(mul_row(layer_norm(x), gain), bias);
}

// x + Attn(LN(x)), then y + FFN(LN(y)). Attention logits carry a learned
// bias indexed by the clipped relative offset j - i.
inline Var transformer_block_forward(const TextEncoderSpec& spec, const BlockParams& p, Var x) {
  require(x.shape().size() == 2 && x.cols() == spec.hidden_dim,
          "transformer block expects width " + std::to_string(spec.hidden_dim) + ", got " +
              to_string(x.shape()));
  const std::size_t len = x.rows();
  const std::size_t head_dim = spec.hidden_dim / spec.num_heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(head_dim));

  Var xn = affine_norm(x, p.ln1_gain, p.ln1_bias);
  Var q = matmul(xn, p.query);
  Var k = matmul(xn, p.key);
  Var v = matmul(xn, p.value);
  std::vector<Var> heads;
  for (std::size_t h = 0; h < spec.num_heads; ++h) {
    Var qh = spec.num_heads == 1 ? q : slice_cols(q, h * head_dim, head_dim);
    Var kh = spec.num_heads == 1 ? k : slice_cols(k, h * head_dim, head_dim);
    Var vh = spec.num_heads == 1 ? v : slice_cols(v, h * head_dim, head_dim);
    Var logits = add(scale(matmul(qh, transpose(kh)), inv_sqrt),
                     relative_bias(p.rel_bias, h, len, spec.attention_window));
    heads.push_back(matmul(softmax(logits), vh));
  }
  Var context = heads.size() == 1 ? heads.front() : concat_cols(heads);
  Var y = add(x, matmul(context, p.output));

  Var yn = affine_norm(y, p.ln2_gain, p.ln2_bias);
  Var hidden = tanh(add_row(matmul(yn, p.ffn_in), p.ffn_in_bias));
  return add(y, add_row(matmul(hidden, p.ffn_out), p.ffn_out_bias));
}

struct TextEncoder {
  TextEncoderSpec spec;
  EmbeddingTable phonemes;          // shared across languages, [num_phonemes x hidden]
  ParameterGenerator generator;     // language embedding -> block weights
  PointwiseConv language_injection; // language embedding -> hidden

  static TextEncoder random(const TextEncoderSpec& spec, std::size_t num_phonemes,
                            std::size_t embedding_dim, std::mt19937_64& rng) {
    spec.validate();
    TextEncoder e{spec, EmbeddingTable::random(num_phonemes, spec.hidden_dim, rng),
                  ParameterGenerator::random(spec, embedding_dim, rng),
                  PointwiseConv::random(embedding_dim, spec.hidden_dim, rng)};
    return e;
  }

  std::vector<NamedTensor> named(const std::string& prefix) {
    std::vector<NamedTensor> out{{prefix + ".phonemes", &phonemes.weights}};
    for (auto& p : generator.named(prefix + ".generator")) out.push_back(p);
    for (auto& p : language_injection.named(prefix + ".language_injection")) out.push_back(p);
    return out;
  }
};

// Phoneme lookup -> transformer blocks with generated weights -> add the
// projected language embedding at every position. Returns [len x hidden].
inline Var text_encoder_forward(Tape& tape, TextEncoder& encoder,
                                const GeneratedParameters& generated,
                                std::span<const std::size_t> phoneme_ids,
                                Var language_embedding) {
  if (!generated.layout || !(*generated.layout == encoder_layout(encoder.spec))) {
    throw ConfigError("generated parameter layout does not match the text encoder spec");
  }
  require(!phoneme_ids.empty(), "text encoder needs at least one phoneme");
  Var x = encoder.phonemes.lookup(tape, phoneme_ids);
  for (std::size_t b = 0; b < encoder.spec.num_blocks; ++b) {
    x = transformer_block_forward(encoder.spec, BlockParams::from(generated, b), x);
  }
  return add_row(x, encoder.language_injection.forward_vector(tape, language_embedding));
}

}  // namespace sanetts
