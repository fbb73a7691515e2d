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

// Seeded synthetic multilingual corpus made of monolingual speakers.
//
// Generative process, in RNG draw order from one mt19937_64(seed):
//   1. a frame template in U(-1, 1)^feature_dim for every phoneme;
//   2. an additive offset in U(-0.5, 0.5)^feature_dim for every speaker;
//   3. a duration offset in {-1, 0, +1} for every phoneme;
//   4. per speaker, phoneme preference weights exp(1.5 z), z ~ N(0, 1), over
//      the speaker's native phoneme set (speakers do not share transcripts);
//   5. per utterance: a length in [min_length, max_length], phonemes drawn
//      from the speaker's preferences, durations
//      max(1, base(language) + offset(phoneme) + jitter) with jitter -1 / +1
//      at probability 0.15 each, and frames = template + speaker offset +
//      N(0, noise) per element.
// base(language) = 2 + language, i.e. 2, 3, 4, 5 frames for four languages.

#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sanetts/alignment.hpp"

namespace sanetts {

class EmptyCorpus : public ParseError {
 public:
  using ParseError::ParseError;
};

struct SyntheticCorpusSpec {
  std::size_t num_languages = 4;
  std::size_t speakers_per_language = 4;
  std::size_t phonemes_per_language = 12;
  std::size_t utterances_per_speaker = 25;
  std::size_t feature_dim = 16;
  std::size_t min_length = 6;
  std::size_t max_length = 12;
  double noise = 0.01;
  std::uint64_t seed = 42;

  std::size_t num_speakers() const { return num_languages * speakers_per_language; }
  std::size_t num_phonemes() const { return num_languages * phonemes_per_language; }
  std::size_t native_language(std::size_t speaker) const { return speaker / speakers_per_language; }
  std::size_t base_duration(std::size_t language) const { return 2 + language; }

  void validate() const {
    if (num_languages == 0 || speakers_per_language == 0 || phonemes_per_language == 0 ||
        utterances_per_speaker == 0 || feature_dim == 0 || min_length == 0) {
      throw ContractViolation("synthetic corpus counts must all be at least 1");
    }
    if (max_length < min_length) throw ContractViolation("max_length below min_length");
    if (!(noise >= 0.0)) throw ContractViolation("noise must be nonnegative");
  }

  bool operator==(const SyntheticCorpusSpec&) const = default;
};

struct Utterance {
  std::size_t utterance_id = 0;
  std::size_t speaker_id = 0;
  std::size_t language_id = 0;
  std::vector<std::size_t> phoneme_ids;
  Tensor frames;  // [T x feature_dim]
  DurationSequence durations;

  std::size_t num_frames() const { return frames.shape.empty() ? 0 : frames.shape[0]; }

  bool operator==(const Utterance& o) const {
    return utterance_id == o.utterance_id && speaker_id == o.speaker_id &&
           language_id == o.language_id && phoneme_ids == o.phoneme_ids && frames == o.frames &&
           durations == o.durations;
  }
};

struct Corpus {
  SyntheticCorpusSpec spec;
  std::vector<Utterance> utterances;

  bool operator==(const Corpus&) const = default;
};

inline void validate_utterance(const Utterance& u, const SyntheticCorpusSpec& spec) {
  auto fail = [&](const std::string& what) {
    throw ValidationError("utterance " + std::to_string(u.utterance_id) + ": " + what);
  };
  if (u.speaker_id >= spec.num_speakers()) fail("speaker id out of range");
  if (u.language_id != spec.native_language(u.speaker_id))
    fail("language does not match the speaker's native language");
  if (u.phoneme_ids.empty()) fail("no phonemes");
  const std::size_t lo = u.language_id * spec.phonemes_per_language;
  for (std::size_t p : u.phoneme_ids) {
    if (p < lo || p >= lo + spec.phonemes_per_language) fail("phoneme outside the language's set");
  }
  if (u.durations.size() != u.phoneme_ids.size()) fail("duration count differs from phoneme count");
  for (std::size_t d : u.durations.frames) {
    if (d == 0) fail("zero duration");
  }
  if (u.frames.rank() != 2 || u.frames.shape[1] != spec.feature_dim) fail("frame width mismatch");
  if (u.durations.total() != u.num_frames()) fail("sum(durations) != frame count");
}

// The hidden quantities of the generative process.
struct CorpusGenerator {
  SyntheticCorpusSpec spec;
  std::vector<std::vector<double>> templates;        // per phoneme
  std::vector<std::vector<double>> speaker_offsets;  // per speaker
  std::vector<int> duration_offsets;                 // per phoneme
  std::vector<std::vector<double>> preferences;      // per speaker, native phonemes
  std::mt19937_64 rng;

  explicit CorpusGenerator(const SyntheticCorpusSpec& s) : spec(s), rng(s.seed) {
    spec.validate();
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    std::uniform_real_distribution<double> half(-0.5, 0.5);
    for (std::size_t p = 0; p < spec.num_phonemes(); ++p) {
      std::vector<double> t(spec.feature_dim);
      for (double& v : t) v = unit(rng);
      templates.push_back(std::move(t));
    }
    for (std::size_t s_id = 0; s_id < spec.num_speakers(); ++s_id) {
      std::vector<double> o(spec.feature_dim);
      for (double& v : o) v = half(rng);
      speaker_offsets.push_back(std::move(o));
    }
    std::uniform_int_distribution<int> offset(-1, 1);
    for (std::size_t p = 0; p < spec.num_phonemes(); ++p) duration_offsets.push_back(offset(rng));
    std::normal_distribution<double> normal(0.0, 1.0);
    for (std::size_t s_id = 0; s_id < spec.num_speakers(); ++s_id) {
      std::vector<double> w(spec.phonemes_per_language);
      for (double& v : w) v = std::exp(1.5 * normal(rng));
      preferences.push_back(std::move(w));
    }
  }

  // Frames for a given phoneme/duration sequence and speaker; noise drawn
  // from `noise_rng` unless the spec's noise is zero.
  Tensor render(const std::vector<std::size_t>& phonemes, const DurationSequence& d,
                std::size_t speaker, std::mt19937_64& noise_rng) const {
    std::normal_distribution<double> noise(0.0, spec.noise > 0.0 ? spec.noise : 1.0);
    std::vector<double> v;
    v.reserve(d.total() * spec.feature_dim);
    for (std::size_t i = 0; i < phonemes.size(); ++i) {
      for (std::size_t r = 0; r < d.frames[i]; ++r) {
        for (std::size_t c = 0; c < spec.feature_dim; ++c) {
          double x = templates[phonemes[i]][c] + speaker_offsets[speaker][c];
          if (spec.noise > 0.0) x += noise(noise_rng);
          v.push_back(x);
        }
      }
    }
    return Tensor({d.total(), spec.feature_dim}, std::move(v));
  }

  Corpus generate() {
    Corpus corpus{spec, {}};
    std::size_t next_id = 0;
    std::uniform_int_distribution<std::size_t> length(spec.min_length, spec.max_length);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    for (std::size_t s_id = 0; s_id < spec.num_speakers(); ++s_id) {
      const std::size_t lang = spec.native_language(s_id);
      std::discrete_distribution<std::size_t> pick(preferences[s_id].begin(), preferences[s_id].end());
      for (std::size_t k = 0; k < spec.utterances_per_speaker; ++k) {
        Utterance u;
        u.utterance_id = next_id++;
        u.speaker_id = s_id;
        u.language_id = lang;
        const std::size_t len = length(rng);
        for (std::size_t i = 0; i < len; ++i) {
          const std::size_t ph = lang * spec.phonemes_per_language + pick(rng);
          u.phoneme_ids.push_back(ph);
          const double r = u01(rng);
          const int jitter = r < 0.15 ? -1 : (r > 0.85 ? 1 : 0);
          const long d = static_cast<long>(spec.base_duration(lang)) + duration_offsets[ph] + jitter;
          u.durations.frames.push_back(static_cast<std::size_t>(std::max<long>(1, d)));
        }
        u.frames = render(u.phoneme_ids, u.durations, s_id, rng);
        corpus.utterances.push_back(std::move(u));
      }
    }
    return corpus;
  }
};

inline Corpus generate_corpus(const SyntheticCorpusSpec& spec) {
  return CorpusGenerator(spec).generate();
}

// ---- on-disk format -----------------------------------------------------------
//
// JSON Lines. Line 1 is a header:
//   {"format":"sanetts-corpus","version":1,"spec":{...}}
// Every further line is one utterance:
//   {"id":..,"speaker":..,"language":..,"phonemes":[..],"durations":[..],
//    "frame_dim":F,"frames":[T*F numbers, row-major]}

constexpr int kCorpusFormatVersion = 1;

inline nlohmann::json spec_to_json(const SyntheticCorpusSpec& s) {
  return {{"num_languages", s.num_languages},
          {"speakers_per_language", s.speakers_per_language},
          {"phonemes_per_language", s.phonemes_per_language},
          {"utterances_per_speaker", s.utterances_per_speaker},
          {"feature_dim", s.feature_dim},
          {"min_length", s.min_length},
          {"max_length", s.max_length},
          {"noise", s.noise},
          {"seed", s.seed}};
}

inline SyntheticCorpusSpec spec_from_json(const nlohmann::json& j) {
  SyntheticCorpusSpec s;
  s.num_languages = j.at("num_languages").get<std::size_t>();
  s.speakers_per_language = j.at("speakers_per_language").get<std::size_t>();
  s.phonemes_per_language = j.at("phonemes_per_language").get<std::size_t>();
  s.utterances_per_speaker = j.at("utterances_per_speaker").get<std::size_t>();
  s.feature_dim = j.at("feature_dim").get<std::size_t>();
  s.min_length = j.at("min_length").get<std::size_t>();
  s.max_length = j.at("max_length").get<std::size_t>();
  s.noise = j.at("noise").get<double>();
  s.seed = j.at("seed").get<std::uint64_t>();
  return s;
}

inline void write_corpus(const Corpus& corpus, std::ostream& os) {
  os << nlohmann::json{{"format", "sanetts-corpus"},
                       {"version", kCorpusFormatVersion},
                       {"spec", spec_to_json(corpus.spec)}}
            .dump()
     << '\n';
  for (const Utterance& u : corpus.utterances) {
    os << nlohmann::json{{"id", u.utterance_id},
                         {"speaker", u.speaker_id},
                         {"language", u.language_id},
                         {"phonemes", u.phoneme_ids},
                         {"durations", u.durations.frames},
                         {"frame_dim", u.frames.shape.at(1)},
                         {"frames", u.frames.values}}
              .dump()
       << '\n';
  }
}

inline void save_corpus(const Corpus& corpus, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open " + path + " for writing");
  write_corpus(corpus, os);
  if (!os) throw Error("failed writing " + path);
}

inline Corpus read_corpus(std::istream& is) {
  std::string line;
  std::size_t line_no = 0;
  auto parse = [&](const std::string& text) {
    try {
      return nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("corpus line " + std::to_string(line_no) + ": " + e.what());
    }
  };
  Corpus corpus;
  bool have_header = false;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j = parse(line);
    try {
      if (!have_header) {
        if (j.value("format", "") != "sanetts-corpus") {
          throw ParseError("corpus line " + std::to_string(line_no) + ": missing corpus header");
        }
        if (j.at("version").get<int>() != kCorpusFormatVersion) {
          throw ParseError("corpus line " + std::to_string(line_no) + ": unsupported version " +
                           j.at("version").dump());
        }
        corpus.spec = spec_from_json(j.at("spec"));
        have_header = true;
        continue;
      }
      Utterance u;
      u.utterance_id = j.at("id").get<std::size_t>();
      u.speaker_id = j.at("speaker").get<std::size_t>();
      u.language_id = j.at("language").get<std::size_t>();
      u.phoneme_ids = j.at("phonemes").get<std::vector<std::size_t>>();
      u.durations.frames = j.at("durations").get<std::vector<std::size_t>>();
      const auto dim = j.at("frame_dim").get<std::size_t>();
      auto values = j.at("frames").get<std::vector<double>>();
      if (dim == 0 || values.empty() || values.size() % dim != 0) {
        throw ParseError("corpus line " + std::to_string(line_no) +
                         ": frame values do not form rows of width " + std::to_string(dim));
      }
      const std::size_t rows = values.size() / dim;
      u.frames = Tensor({rows, dim}, std::move(values));
      corpus.utterances.push_back(std::move(u));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("corpus line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (!have_header) throw EmptyCorpus("empty corpus file");
  for (const Utterance& u : corpus.utterances) validate_utterance(u, corpus.spec);
  return corpus;
}

inline Corpus load_corpus(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open corpus " + path);
  return read_corpus(is);
}

// ---- batching -------------------------------------------------------------------

// Borrowed view of utterances; valid while the corpus lives.
struct Batch {
  std::vector<const Utterance*> utterances;

  std::size_t size() const { return utterances.size(); }
};

// std::shuffle of utterance order under mt19937_64(epoch_seed), then
// contiguous chunks of batch_size; the last batch may be smaller.
inline std::vector<Batch> make_batches(const Corpus& corpus, std::size_t batch_size,
                                       std::uint64_t epoch_seed) {
  require(batch_size >= 1, "batch_size must be at least 1");
  std::vector<std::size_t> order(corpus.utterances.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::mt19937_64 rng(epoch_seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<Batch> batches;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    Batch b;
    for (std::size_t i = start; i < std::min(order.size(), start + batch_size); ++i) {
      b.utterances.push_back(&corpus.utterances[order[i]]);
    }
    batches.push_back(std::move(b));
  }
  return batches;
}

}  // namespace sanetts
