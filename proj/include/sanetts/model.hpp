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

// Full multilingual model: language-conditioned text encoder, speaker
// adversary, speaker regularization, duration predictor, and a small frame
// decoder standing in for an acoustic backbone.

#pragma once

#include <map>
#include <memory>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "sanetts/alignment.hpp"
#include "sanetts/config.hpp"
#include "sanetts/corpus.hpp"

namespace sanetts {

// Sizes that come from the corpus rather than the config.
struct ModelDims {
  std::size_t num_phonemes = 0;
  std::size_t num_languages = 0;
  std::size_t feature_dim = 0;
  std::vector<std::size_t> speaker_languages;  // native language per speaker

  std::size_t num_speakers() const { return speaker_languages.size(); }

  static ModelDims from_spec(const SyntheticCorpusSpec& spec) {
    ModelDims d{spec.num_phonemes(), spec.num_languages, spec.feature_dim, {}};
    for (std::size_t s = 0; s < spec.num_speakers(); ++s) {
      d.speaker_languages.push_back(spec.native_language(s));
    }
    return d;
  }

  bool operator==(const ModelDims&) const = default;
};

// Conditioned convolutional stack from length-regulated hidden states to frames.
struct FrameDecoder {
  PointwiseConv speaker_conv;   // embedding -> hidden
  PointwiseConv language_conv;  // embedding -> hidden
  Conv1d conv;                  // hidden -> hidden
  PointwiseConv output;         // hidden -> feature

  static FrameDecoder random(std::size_t hidden, std::size_t embedding_dim, std::size_t features,
                             std::size_t kernel, std::mt19937_64& rng) {
    FrameDecoder d;
    d.speaker_conv = PointwiseConv::random(embedding_dim, hidden, rng);
    d.language_conv = PointwiseConv::random(embedding_dim, hidden, rng);
    d.conv = Conv1d::random(hidden, hidden, kernel, rng);
    d.output = PointwiseConv::random(hidden, features, rng);
    return d;
  }

  Var forward(Tape& tape, Var regulated, Var speaker, Var language) {
    Var x = add_row(regulated, speaker_conv.forward_vector(tape, speaker));
    x = add_row(x, language_conv.forward_vector(tape, language));
    return output.forward(tape, tanh(conv.forward(tape, x)));
  }

  std::vector<NamedTensor> named(const std::string& prefix) {
    std::vector<NamedTensor> out;
    for (auto& p : speaker_conv.named(prefix + ".speaker_conv")) out.push_back(p);
    for (auto& p : language_conv.named(prefix + ".language_conv")) out.push_back(p);
    for (auto& p : conv.named(prefix + ".conv")) out.push_back(p);
    for (auto& p : output.named(prefix + ".output")) out.push_back(p);
    return out;
  }
};

struct LossBreakdown {
  double reconstruction = 0.0;
  double duration = 0.0;
  double speaker_cls = 0.0;
  double speaker_reg = 0.0;
  double total = 0.0;
  double lambda = 0.0;

  bool operator==(const LossBreakdown&) const = default;
};

enum class InferenceMode { kAuto, kForceIntralingual, kForceCrosslingual };

struct InferenceRequest {
  std::vector<std::size_t> phoneme_ids;
  std::size_t target_language = 0;
  std::size_t speaker = 0;
  InferenceMode mode = InferenceMode::kAuto;
};

struct InferenceResult {
  DurationSequence durations;
  Tensor frames;  // [sum(durations) x feature_dim]
  bool intralingual = false;

  bool operator==(const InferenceResult&) const = default;
};

class SaneModel {
 public:
  TrainingConfig config;
  ModelDims dims;
  EmbeddingTable speakers;
  EmbeddingTable languages;
  TextEncoder encoder;
  SpeakerProjection speaker_projection;              // DDP speaker conv
  std::optional<SpeakerProjection> reg_projection;   // only when not shared
  SpeakerClassifier classifier;
  DurationPredictor predictor;
  FrameDecoder decoder;
  PointwiseConv frame_encoder;  // feature -> hidden, scores for alignment search

  SaneModel(const TrainingConfig& cfg, const ModelDims& d) : config(cfg), dims(d) {
    config.validate();
    require(dims.num_phonemes > 0 && dims.num_languages > 0 && dims.feature_dim > 0 &&
                dims.num_speakers() > 0,
            "model dims must be positive");
    for (std::size_t l : dims.speaker_languages) {
      require(l < dims.num_languages, "speaker native language out of range");
    }
    std::mt19937_64 rng(config.seed);
    const std::size_t e = config.embedding_dim, h = config.hidden_dim;
    speakers = EmbeddingTable::random(dims.num_speakers(), e, rng);
    languages = EmbeddingTable::random(dims.num_languages, e, rng);
    encoder = TextEncoder::random(config.encoder_spec(), dims.num_phonemes, e, rng);
    speaker_projection = SpeakerProjection::random(e, h, rng);
    if (!config.share_speaker_projection) reg_projection = SpeakerProjection::random(e, h, rng);
    classifier = SpeakerClassifier::random(h, config.classifier_layers, dims.num_speakers(), rng);
    predictor = DurationPredictor::random(h, e, config.ddp_depth, config.ddp_kernel, rng);
    decoder = FrameDecoder::random(h, e, dims.feature_dim, config.decoder_kernel, rng);
    frame_encoder = PointwiseConv::random(dims.feature_dim, h, rng);
  }

  SaneModel(const SaneModel&) = default;
  SaneModel& operator=(const SaneModel&) = default;

  SpeakerProjection& regularized_projection() {
    return reg_projection ? *reg_projection : speaker_projection;
  }

  // Every trainable tensor under a unique, stable name.
  std::vector<NamedTensor> parameters() {
    std::vector<NamedTensor> out{{"speakers", &speakers.weights},
                                 {"languages", &languages.weights}};
    auto append = [&](std::vector<NamedTensor> v) { out.insert(out.end(), v.begin(), v.end()); };
    append(encoder.named("encoder"));
    append(speaker_projection.named("speaker_projection"));
    if (reg_projection) append(reg_projection->named("reg_projection"));
    append(classifier.named("classifier"));
    append(predictor.named("predictor"));
    append(decoder.named("decoder"));
    append(frame_encoder.named("frame_encoder"));
    return out;
  }

  std::size_t native_language(std::size_t speaker) const {
    require(speaker < dims.num_speakers(), "speaker id " + std::to_string(speaker) +
                                               " out of range for " +
                                               std::to_string(dims.num_speakers()) + " speakers");
    return dims.speaker_languages[speaker];
  }
};

// Alignment search scores: -||text_hidden_i - encoded_frame_j||^2.
inline ScoreMatrix alignment_scores(Var text_hidden, Var encoded_frames) {
  const std::size_t p = text_hidden.rows(), t = encoded_frames.rows(), h = text_hidden.cols();
  auto hv = text_hidden.values();
  auto fv = encoded_frames.values();
  std::vector<double> s(p * t);
  for (std::size_t i = 0; i < p; ++i) {
    for (std::size_t j = 0; j < t; ++j) {
      double d = 0.0;
      for (std::size_t c = 0; c < h; ++c) {
        const double diff = hv[i * h + c] - fv[j * h + c];
        d += diff * diff;
      }
      s[i * t + j] = -d;
    }
  }
  return {p, t, std::move(s)};
}

struct ForwardResult {
  LossBreakdown breakdown;
  Var total;
  Var speaker_cls;  // batch-mean classification term, already inside total
};

// Composite training loss on one batch. Each term is averaged over the
// batch's utterances; disabled terms are a constant 0. The tape total is
// ((reconstruction + w_dur * duration) + speaker_cls) + w_reg * speaker_reg.
inline ForwardResult model_forward_train(Tape& tape, SaneModel& model, const Batch& batch,
                                         double lambda) {
  require(batch.size() > 0, "training on an empty batch");
  const TrainingConfig& cfg = model.config;
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  std::map<std::size_t, GeneratedParameters> generated;
  const GradientReversal grl{lambda};

  std::optional<Var> recon, dur, cls;
  auto accumulate = [](std::optional<Var>& acc, Var term) { acc = acc ? add(*acc, term) : term; };
  std::vector<Var> batch_speakers;

  for (const Utterance* u : batch.utterances) {
    if (u->frames.rank() != 2 || u->frames.shape[1] != model.dims.feature_dim) {
      throw ConfigError("utterance " + std::to_string(u->utterance_id) + " has frame width " +
                        to_string(u->frames.shape) + ", model expects " +
                        std::to_string(model.dims.feature_dim));
    }
    if (u->speaker_id >= model.dims.num_speakers() || u->language_id >= model.dims.num_languages) {
      throw ConfigError("utterance " + std::to_string(u->utterance_id) +
                        " references ids outside the model");
    }
    Var speaker = model.speakers.row(tape, u->speaker_id);
    Var language = model.languages.row(tape, u->language_id);
    auto it = generated.find(u->language_id);
    if (it == generated.end()) {
      it = generated.emplace(u->language_id, generate_encoder_params(tape, model.encoder.generator,
                                                                     language))
               .first;
    }
    Var hidden = text_encoder_forward(tape, model.encoder, it->second, u->phoneme_ids, language);
    Var target_frames = tape.constant(u->frames);

    DurationSequence durations = u->durations;
    std::optional<Var> align_loss;
    if (cfg.duration_source == "mas") {
      Var encoded = model.frame_encoder.forward(tape, target_frames);
      durations = durations_from_alignment(mas_search(alignment_scores(hidden, encoded)));
      align_loss = mse(length_regulate(stop_gradient(hidden), durations), encoded);
    }

    Var ddp_input = cfg.detach_duration_input ? stop_gradient(hidden) : hidden;
    Var log_d = ddp_forward(tape, model.predictor, model.speaker_projection, ddp_input, speaker,
                            language);
    accumulate(dur, duration_loss(log_d, durations));

    Var frames = model.decoder.forward(tape, length_regulate(hidden, durations), speaker, language);
    Var r = mse(frames, target_frames);
    if (align_loss) r = add(r, *align_loss);
    accumulate(recon, r);

    if (cfg.enable_dat) {
      accumulate(cls, speaker_classification_loss(tape, model.classifier, hidden, u->speaker_id,
                                                  grl));
    }
    batch_speakers.push_back(speaker);
  }

  Var recon_mean = scale(*recon, inv_b);
  Var dur_mean = scale(*dur, inv_b);
  Var cls_mean = cls ? scale(*cls, inv_b) : tape.scalar(0.0);
  Var reg = cfg.enable_reg_loss
                ? speaker_regularization_loss(tape, model.regularized_projection(), batch_speakers)
                : tape.scalar(0.0);
  Var total = add(add(add(recon_mean, scale(dur_mean, cfg.w_dur)), cls_mean),
                  scale(reg, cfg.w_reg));

  LossBreakdown b;
  b.reconstruction = recon_mean.item();
  b.duration = dur_mean.item();
  b.speaker_cls = cls_mean.item();
  b.speaker_reg = reg.item();
  b.total = total.item();
  b.lambda = lambda;
  return {b, total, cls_mean};
}

inline bool resolve_intralingual(const SaneModel& model, const InferenceRequest& request) {
  switch (request.mode) {
    case InferenceMode::kForceIntralingual:
      return true;
    case InferenceMode::kForceCrosslingual:
      return false;
    case InferenceMode::kAuto:
      break;
  }
  return request.target_language == model.native_language(request.speaker);
}

// Duration path gets the speaker embedding only for intralingual requests;
// the decoder is always conditioned on the speaker.
inline InferenceResult infer(SaneModel& model, const InferenceRequest& request) {
  require(request.speaker < model.dims.num_speakers(),
          "speaker id " + std::to_string(request.speaker) + " out of range");
  require(request.target_language < model.dims.num_languages,
          "language id " + std::to_string(request.target_language) + " out of range");
  require(!request.phoneme_ids.empty(), "inference needs at least one phoneme");
  for (std::size_t p : request.phoneme_ids) {
    require(p < model.dims.num_phonemes, "phoneme id " + std::to_string(p) + " out of range");
  }
  const bool intralingual = resolve_intralingual(model, request);
  Tape tape;
  Var speaker = model.speakers.row(tape, request.speaker);
  Var language = model.languages.row(tape, request.target_language);
  GeneratedParameters gen = generate_encoder_params(tape, model.encoder.generator, language);
  Var hidden = text_encoder_forward(tape, model.encoder, gen, request.phoneme_ids, language);
  std::optional<Var> ddp_speaker;
  if (intralingual) ddp_speaker = speaker;
  Var log_d = ddp_forward(tape, model.predictor, model.speaker_projection, hidden, ddp_speaker,
                          language);
  InferenceResult out;
  out.intralingual = intralingual;
  out.durations = discretize_durations(log_d.values());
  Var frames = model.decoder.forward(tape, length_regulate(hidden, out.durations), speaker,
                                     language);
  out.frames = Tensor(frames.shape(), std::vector<double>(frames.values().begin(),
                                                          frames.values().end()));
  return out;
}

// Mean-pooled text encoder output per utterance, [hidden] each.
inline std::vector<std::vector<double>> pooled_text_hiddens(SaneModel& model,
                                                            const std::vector<Utterance>& utts) {
  std::vector<std::vector<double>> out;
  out.reserve(utts.size());
  for (const Utterance& u : utts) {
    Tape tape;
    Var language = model.languages.row(tape, u.language_id);
    GeneratedParameters gen = generate_encoder_params(tape, model.encoder.generator, language);
    Var pooled = mean_rows(text_encoder_forward(tape, model.encoder, gen, u.phoneme_ids, language));
    out.emplace_back(pooled.values().begin(), pooled.values().end());
  }
  return out;
}

// projection(S_k) for every speaker through the duration predictor's speaker conv.
inline std::vector<std::vector<double>> hidden_speaker_representations(SaneModel& model) {
  std::vector<std::vector<double>> out;
  for (std::size_t s = 0; s < model.dims.num_speakers(); ++s) {
    Tape tape;
    Var v = model.speaker_projection.forward_vector(tape, model.speakers.row(tape, s));
    out.emplace_back(v.values().begin(), v.values().end());
  }
  return out;
}

}  // namespace sanetts
