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

// Training configuration: a flat `key = value` text format with `#` comments.
// Unknown keys are rejected. A `dims` preset is applied before every other
// key, so explicit dimension keys always win regardless of their position.

#pragma once

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "sanetts/layers.hpp"

namespace sanetts {

struct TrainingConfig {
  std::size_t batch_size = 16;
  std::size_t total_steps = 300;
  std::string optimizer = "adam";  // adam | sgd
  double learning_rate = 0.002;
  double momentum = 0.9;  // sgd momentum, adam beta1
  double beta2 = 0.999;
  double clip_norm = 5.0;  // global gradient norm clip; 0 disables
  std::uint64_t seed = 42;
  double w_dur = 1.0;
  double w_reg = 1.0;
  bool enable_dat = true;
  bool enable_reg_loss = true;
  bool share_speaker_projection = true;
  std::string duration_source = "oracle";  // oracle | mas
  bool detach_duration_input = true;       // duration loss does not reach the encoder
  std::string dims = "desk";               // desk | paper (alias paper-dims)
  std::size_t embedding_dim = 32;
  std::size_t hidden_dim = 32;
  std::size_t num_blocks = 2;
  std::size_t num_heads = 2;
  std::size_t ffn_dim = 64;
  std::size_t attention_window = 4;
  std::size_t ddp_depth = 2;
  std::size_t ddp_kernel = 3;
  std::size_t decoder_kernel = 3;
  std::size_t classifier_layers = 2;
  double lambda_steepness = 10.0;
  std::size_t checkpoint_every = 0;  // 0: only the final checkpoint

  TextEncoderSpec encoder_spec() const {
    return {num_blocks, hidden_dim, num_heads, ffn_dim, attention_window};
  }

  void apply_dims_preset(const std::string& preset) {
    if (preset == "desk") {
      batch_size = 16;
      embedding_dim = 32;
      hidden_dim = 32;
      num_blocks = 2;
      num_heads = 2;
      ffn_dim = 64;
    } else if (preset == "paper" || preset == "paper-dims") {
      batch_size = 64;
      embedding_dim = 256;
      hidden_dim = 192;
      num_blocks = 6;
      num_heads = 2;
      ffn_dim = 768;
    } else {
      throw ConfigError("unknown dims preset '" + preset + "' (expected desk, paper or paper-dims)");
    }
    dims = preset == "paper-dims" ? "paper" : preset;
  }

  void validate() const {
    auto nonneg = [](const char* key, double v) {
      if (!std::isfinite(v) || v < 0.0) {
        throw ConfigError(std::string(key) + " must be finite and nonnegative");
      }
    };
    nonneg("learning_rate", learning_rate);
    nonneg("momentum", momentum);
    nonneg("beta2", beta2);
    nonneg("clip_norm", clip_norm);
    nonneg("w_dur", w_dur);
    nonneg("w_reg", w_reg);
    nonneg("lambda_steepness", lambda_steepness);
    if (momentum >= 1.0 || beta2 >= 1.0) throw ConfigError("momentum and beta2 must be below 1");
    if (optimizer != "adam" && optimizer != "sgd") throw ConfigError("optimizer must be adam or sgd");
    if (batch_size == 0) throw ConfigError("batch_size must be at least 1");
    if (duration_source != "oracle" && duration_source != "mas") {
      throw ConfigError("duration_source must be oracle or mas");
    }
    if (embedding_dim == 0) throw ConfigError("embedding_dim must be positive");
    if (ddp_kernel % 2 == 0 || decoder_kernel % 2 == 0) {
      throw ConfigError("convolution kernels must be odd");
    }
    encoder_spec().validate();
  }

  bool operator==(const TrainingConfig&) const = default;
};

namespace detail {

inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T out{};
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, out);
  if (ec != std::errc() || ptr != end) {
    throw ConfigError("invalid value '" + text + "' for " + key);
  }
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw ConfigError("invalid boolean '" + text + "' for " + key);
}

struct ConfigField {
  std::function<void(TrainingConfig&, const std::string&)> set;
  std::function<std::string(const TrainingConfig&)> get;
};

#define SANETTS_SIZE_FIELD(name)                                                               \
  {                                                                                            \
    #name, {[](TrainingConfig& c, const std::string& v) {                                      \
              c.name = parse_number<std::size_t>(#name, v);                                    \
            },                                                                                 \
            [](const TrainingConfig& c) { return std::to_string(c.name); }}                    \
  }
#define SANETTS_DOUBLE_FIELD(name)                                                             \
  {                                                                                            \
    #name, {[](TrainingConfig& c, const std::string& v) {                                      \
              c.name = parse_number<double>(#name, v);                                         \
            },                                                                                 \
            [](const TrainingConfig& c) { return format_double(c.name); }}                     \
  }
#define SANETTS_BOOL_FIELD(name)                                                               \
  {                                                                                            \
    #name, {[](TrainingConfig& c, const std::string& v) { c.name = parse_bool(#name, v); },    \
            [](const TrainingConfig& c) { return std::string(c.name ? "true" : "false"); }}    \
  }

// Every key except `dims`, in serialization order.
inline const std::vector<std::pair<std::string, ConfigField>>& config_fields() {
  static const std::vector<std::pair<std::string, ConfigField>> fields = {
      SANETTS_SIZE_FIELD(batch_size),
      SANETTS_SIZE_FIELD(total_steps),
      {"optimizer",
       {[](TrainingConfig& c, const std::string& v) { c.optimizer = v; },
        [](const TrainingConfig& c) { return c.optimizer; }}},
      SANETTS_DOUBLE_FIELD(learning_rate),
      SANETTS_DOUBLE_FIELD(momentum),
      SANETTS_DOUBLE_FIELD(beta2),
      SANETTS_DOUBLE_FIELD(clip_norm),
      {"seed",
       {[](TrainingConfig& c, const std::string& v) {
          c.seed = parse_number<std::uint64_t>("seed", v);
        },
        [](const TrainingConfig& c) { return std::to_string(c.seed); }}},
      SANETTS_DOUBLE_FIELD(w_dur),
      SANETTS_DOUBLE_FIELD(w_reg),
      SANETTS_BOOL_FIELD(enable_dat),
      SANETTS_BOOL_FIELD(enable_reg_loss),
      SANETTS_BOOL_FIELD(share_speaker_projection),
      SANETTS_BOOL_FIELD(detach_duration_input),
      {"duration_source",
       {[](TrainingConfig& c, const std::string& v) { c.duration_source = v; },
        [](const TrainingConfig& c) { return c.duration_source; }}},
      SANETTS_SIZE_FIELD(embedding_dim),
      SANETTS_SIZE_FIELD(hidden_dim),
      SANETTS_SIZE_FIELD(num_blocks),
      SANETTS_SIZE_FIELD(num_heads),
      SANETTS_SIZE_FIELD(ffn_dim),
      SANETTS_SIZE_FIELD(attention_window),
      SANETTS_SIZE_FIELD(ddp_depth),
      SANETTS_SIZE_FIELD(ddp_kernel),
      SANETTS_SIZE_FIELD(decoder_kernel),
      SANETTS_SIZE_FIELD(classifier_layers),
      SANETTS_DOUBLE_FIELD(lambda_steepness),
      SANETTS_SIZE_FIELD(checkpoint_every),
  };
  return fields;
}

#undef SANETTS_SIZE_FIELD
#undef SANETTS_DOUBLE_FIELD
#undef SANETTS_BOOL_FIELD

}  // namespace detail

// Applies `key=value` pairs in order, with any `dims` preset applied first.
inline void apply_config_pairs(TrainingConfig& config,
                               const std::vector<std::pair<std::string, std::string>>& pairs) {
  for (const auto& [key, value] : pairs) {
    if (key == "dims") config.apply_dims_preset(value);
  }
  for (const auto& [key, value] : pairs) {
    if (key == "dims") continue;
    const auto& fields = detail::config_fields();
    auto it = std::find_if(fields.begin(), fields.end(),
                           [&](const auto& f) { return f.first == key; });
    if (it == fields.end()) throw ConfigError("unknown config key '" + key + "'");
    it->second.set(config, value);
  }
  config.validate();
}

inline std::pair<std::string, std::string> split_assignment(const std::string& text,
                                                            const std::string& where) {
  const auto eq = text.find('=');
  if (eq == std::string::npos) throw ConfigError(where + ": expected key = value");
  std::string key = detail::trim(text.substr(0, eq));
  std::string value = detail::trim(text.substr(eq + 1));
  if (key.empty()) throw ConfigError(where + ": empty key");
  return {key, value};
}

inline std::vector<std::pair<std::string, std::string>> parse_config_pairs(
    const std::string& text) {
  std::vector<std::pair<std::string, std::string>> pairs;
  std::istringstream is(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    pairs.push_back(split_assignment(line, "config line " + std::to_string(line_no)));
  }
  return pairs;
}

inline TrainingConfig parse_config(const std::string& text,
                                   const std::vector<std::string>& overrides = {}) {
  auto pairs = parse_config_pairs(text);
  for (const std::string& o : overrides) pairs.push_back(split_assignment(o, "--set " + o));
  TrainingConfig config;
  apply_config_pairs(config, pairs);
  return config;
}

inline TrainingConfig load_config(const std::string& path,
                                  const std::vector<std::string>& overrides = {}) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read config " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return parse_config(ss.str(), overrides);
}

// Canonical text form; parse_config(config_to_text(c)) == c.
inline std::string config_to_text(const TrainingConfig& config) {
  std::string out = "dims = " + config.dims + "\n";
  for (const auto& [key, field] : detail::config_fields()) {
    out += key + " = " + field.get(config) + "\n";
  }
  return out;
}

}  // namespace sanetts
