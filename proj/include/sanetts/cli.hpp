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

// Command-line front end. Exit codes: 0 success, 1 runtime or validation
// failure, 2 usage error.

#pragma once

#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sanetts/checkpoint.hpp"
#include "sanetts/metrics.hpp"

namespace sanetts {

constexpr const char* kConfigEnvVar = "SANETTS_CONFIG";

namespace cli {

inline std::string fmt(double v) { return detail::format_double(v); }

// Writes to `path`, or to `out` when path is empty or "-".
inline void emit(const std::string& path, const std::string& text, std::ostream& out) {
  if (path.empty() || path == "-") {
    out << text;
    return;
  }
  write_file(path, text);
}

inline std::vector<std::size_t> parse_id_list(const std::string& text) {
  std::vector<std::size_t> ids;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = detail::trim(item);
    if (item.empty()) continue;
    try {
      ids.push_back(detail::parse_number<std::size_t>("phoneme list", item));
    } catch (const ConfigError&) {
      throw ValidationError("invalid phoneme id '" + item + "'");
    }
  }
  if (ids.empty()) throw ValidationError("empty phoneme list");
  return ids;
}

// Numeric CSV matrix, one row per phoneme; a non-numeric first line is a header.
inline ScoreMatrix read_score_csv(const std::string& path) {
  std::istringstream is(read_file(path));
  std::string line;
  std::vector<double> values;
  std::size_t rows = 0, cols = 0, line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    line = detail::trim(line);
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ls(line);
    std::string cell;
    bool numeric = true;
    while (std::getline(ls, cell, ',')) {
      cell = detail::trim(cell);
      double v = 0.0;
      auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (ec != std::errc() || ptr != cell.data() + cell.size()) {
        numeric = false;
        break;
      }
      row.push_back(v);
    }
    if (!numeric) {
      if (rows == 0 && values.empty()) continue;  // header
      throw ParseError("score matrix line " + std::to_string(line_no) + ": non-numeric cell");
    }
    if (cols == 0) cols = row.size();
    if (row.size() != cols) {
      throw ParseError("score matrix line " + std::to_string(line_no) + ": expected " +
                       std::to_string(cols) + " columns");
    }
    values.insert(values.end(), row.begin(), row.end());
    ++rows;
  }
  if (rows == 0) throw ParseError("score matrix is empty");
  return {rows, cols, std::move(values)};
}

inline std::string join(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

inline std::string frames_csv(const Tensor& frames) {
  std::string out;
  for (std::size_t c = 0; c < frames.shape[1]; ++c) out += (c ? ",f" : "f") + std::to_string(c);
  out += "\n";
  for (std::size_t r = 0; r < frames.shape[0]; ++r) {
    for (std::size_t c = 0; c < frames.shape[1]; ++c) out += (c ? "," : "") + fmt(frames.at(r, c));
    out += "\n";
  }
  return out;
}

inline std::string speaker_representation_csv(SaneModel& model) {
  auto reps = hidden_speaker_representations(model);
  std::string out = "speaker,language";
  for (std::size_t d = 0; d < model.config.hidden_dim; ++d) out += ",h" + std::to_string(d);
  out += "\n";
  for (std::size_t s = 0; s < reps.size(); ++s) {
    out += std::to_string(s) + "," + std::to_string(model.dims.speaker_languages[s]);
    for (double v : reps[s]) out += "," + fmt(v);
    out += "\n";
  }
  return out;
}

inline TrainingConfig resolve_config(const std::string& path,
                                     const std::vector<std::string>& overrides) {
  std::string source = path;
  if (source.empty()) {
    if (const char* env = std::getenv(kConfigEnvVar)) source = env;
  }
  return source.empty() ? parse_config("", overrides) : load_config(source, overrides);
}

// Trains until total_steps, writing (or, when resuming, appending to)
// <dir>/loss.csv and writing
// checkpoint_<step>.ckpt every checkpoint_every steps plus final.ckpt.
inline void train_into(Trainer& trainer, const std::filesystem::path& dir, bool append_log) {
  std::filesystem::create_directories(dir);
  append_log = append_log && std::filesystem::exists(dir / "loss.csv");
  std::ofstream log(dir / "loss.csv", append_log ? std::ios::app : std::ios::trunc);
  if (!log) throw Error("cannot write " + (dir / "loss.csv").string());
  if (!append_log) log << loss_csv_header();
  const std::size_t every = trainer.config().checkpoint_every;
  trainer.run([&](std::size_t step, const LossBreakdown& b) {
    log << loss_csv_row(step, b);
    if (every && (step + 1) % every == 0) {
      log.flush();
      save_training_checkpoint(trainer,
                               (dir / ("checkpoint_" + std::to_string(step + 1) + ".ckpt")).string());
    }
  });
  log.flush();
  save_training_checkpoint(trainer, (dir / "final.ckpt").string());
}

struct AblationVariant {
  std::string name;
  std::vector<std::string> overrides;
};

struct AblationResult {
  std::string name;
  MetricsReport metrics;
};

// Parses "name:key=value,key=value".
inline AblationVariant parse_variant(const std::string& text) {
  AblationVariant v;
  const auto colon = text.find(':');
  v.name = detail::trim(text.substr(0, colon));
  if (v.name.empty()) throw ConfigError("ablation variant needs a name: " + text);
  if (colon != std::string::npos) {
    std::stringstream ss(text.substr(colon + 1));
    std::string item;
    while (std::getline(ss, item, ',')) {
      if (!detail::trim(item).empty()) v.overrides.push_back(item);
    }
  }
  return v;
}

inline std::vector<AblationVariant> default_variants() {
  return {{"reference", {}},
          {"no_reg", {"enable_reg_loss=false"}},
          {"no_dat", {"enable_dat=false"}}};
}

// Trains every variant (concurrently) from the same base config and corpus.
inline std::vector<AblationResult> ablation_run(const TrainingConfig& base, const Corpus& corpus,
                                                const std::vector<AblationVariant>& variants,
                                                const std::filesystem::path& out_dir = {}) {
  require(!variants.empty(), "ablation needs at least one variant");
  std::vector<std::future<AblationResult>> jobs;
  for (const AblationVariant& v : variants) {
    auto pairs = parse_config_pairs(config_to_text(base));
    for (const auto& o : v.overrides) pairs.push_back(split_assignment(o, "variant " + v.name));
    TrainingConfig config;
    apply_config_pairs(config, pairs);
    jobs.push_back(std::async(std::launch::async, [config, &corpus, v, out_dir]() {
      Trainer trainer(config, corpus);
      if (out_dir.empty()) {
        trainer.run();
      } else {
        train_into(trainer, out_dir / v.name, false);
      }
      return AblationResult{v.name, evaluate(trainer.model(), corpus)};
    }));
  }
  std::vector<AblationResult> results;
  for (auto& j : jobs) results.push_back(j.get());
  return results;
}

inline nlohmann::ordered_json ablation_report(const std::vector<AblationResult>& results) {
  nlohmann::ordered_json variants = nlohmann::ordered_json::array();
  for (const auto& r : results) {
    nlohmann::ordered_json entry = {{"name", r.name}};
    entry["metrics"] = r.metrics.to_json();
    variants.push_back(entry);
  }
  return {{"variants", variants}};
}

inline InferenceMode parse_mode(const std::string& m) {
  if (m == "auto") return InferenceMode::kAuto;
  if (m == "intra") return InferenceMode::kForceIntralingual;
  if (m == "cross") return InferenceMode::kForceCrosslingual;
  throw ValidationError("unknown mode '" + m + "'");
}

}  // namespace cli

inline int run_cli(int argc, char** argv, std::ostream& out = std::cout,
                   std::ostream& err = std::cerr) {
  CLI::App app{"Multilingual speech-synthesis mechanisms on a synthetic corpus", "sanetts"};
  app.require_subcommand(1);

  // corpus generate / validate
  auto* corpus_cmd = app.add_subcommand("corpus", "Generate or validate corpus files");
  corpus_cmd->require_subcommand(1);
  SyntheticCorpusSpec spec;
  std::string corpus_out;
  bool no_noise = false;
  auto* gen = corpus_cmd->add_subcommand("generate", "Write a synthetic corpus");
  gen->add_option("--out", corpus_out, "Output corpus file")->required();
  gen->add_option("--seed", spec.seed, "Generator seed");
  gen->add_option("--languages", spec.num_languages);
  gen->add_option("--speakers-per-language", spec.speakers_per_language);
  gen->add_option("--phonemes-per-language", spec.phonemes_per_language);
  gen->add_option("--utterances-per-speaker", spec.utterances_per_speaker);
  gen->add_option("--feature-dim", spec.feature_dim);
  gen->add_option("--min-length", spec.min_length);
  gen->add_option("--max-length", spec.max_length);
  gen->add_option("--noise", spec.noise);
  gen->add_flag("--no-noise", no_noise, "Noise-free frames");
  std::string validate_path;
  auto* val = corpus_cmd->add_subcommand("validate", "Check a corpus file");
  val->add_option("file", validate_path)->required();

  // train
  std::string corpus_path, out_dir, config_path, resume_path;
  std::vector<std::string> overrides;
  std::optional<std::size_t> steps;
  auto* train = app.add_subcommand("train", "Train a model");
  train->add_option("--corpus", corpus_path)->required();
  train->add_option("--out", out_dir, "Output directory")->required();
  train->add_option("--config", config_path, std::string("Config file (default: $") +
                                                 kConfigEnvVar + ")");
  train->add_option("--set", overrides, "key=value override")->take_all();
  train->add_option("--steps", steps, "Shorthand for --set total_steps=N");
  train->add_option("--resume", resume_path, "Continue from a training checkpoint");

  // synth
  std::string ckpt_path, phonemes, mode = "auto", durations_out, frames_out;
  std::size_t language = 0, speaker = 0;
  auto* synth = app.add_subcommand("synth", "Run inference from a checkpoint");
  synth->add_option("--checkpoint", ckpt_path)->required();
  synth->add_option("--phonemes", phonemes, "Comma-separated phoneme ids")->required();
  synth->add_option("--language", language)->required();
  synth->add_option("--speaker", speaker)->required();
  synth->add_option("--mode", mode, "auto | intra | cross")
      ->check(CLI::IsMember({"auto", "intra", "cross"}));
  synth->add_option("--durations-out", durations_out, "Durations CSV (default stdout)");
  synth->add_option("--frames-out", frames_out, "Frames CSV (default stdout)");

  // eval
  std::string report_out;
  auto* eval = app.add_subcommand("eval", "Compute the metrics report");
  eval->add_option("--checkpoint", ckpt_path)->required();
  eval->add_option("--corpus", corpus_path)->required();
  eval->add_option("--out", report_out, "Report JSON (default stdout)");

  // ablate
  std::vector<std::string> variants;
  auto* ablate = app.add_subcommand("ablate", "Train feature-flag variants and compare");
  ablate->add_option("--corpus", corpus_path)->required();
  ablate->add_option("--out", out_dir, "Output directory")->required();
  ablate->add_option("--config", config_path);
  ablate->add_option("--set", overrides)->take_all();
  ablate->add_option("--variant", variants, "name:key=value,... (repeatable)");

  // mas
  std::string scores_path, mas_out;
  auto* mas = app.add_subcommand("mas", "Monotonic alignment search on a CSV score matrix");
  mas->add_option("--scores", scores_path)->required();
  mas->add_option("--out", mas_out, "Durations CSV (default stdout)");

  // dump
  std::string dump_out;
  auto* dump = app.add_subcommand("dump", "Hidden speaker representations as CSV");
  dump->add_option("--checkpoint", ckpt_path)->required();
  dump->add_option("--out", dump_out, "CSV (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n";
    return 2;
  }

  try {
    if (gen->parsed()) {
      if (no_noise) spec.noise = 0.0;
      Corpus c = generate_corpus(spec);
      save_corpus(c, corpus_out);
      out << "wrote " << c.utterances.size() << " utterances to " << corpus_out << "\n";
    } else if (val->parsed()) {
      Corpus c = load_corpus(validate_path);
      out << "ok: " << c.utterances.size() << " utterances\n";
    } else if (train->parsed()) {
      Corpus c = load_corpus(corpus_path);
      if (steps) overrides.push_back("total_steps=" + std::to_string(*steps));
      if (!resume_path.empty()) {
        if (!config_path.empty() || !overrides.empty()) {
          throw ConfigError("--resume uses the checkpoint's config; drop --config/--set/--steps");
        }
        Trainer trainer = resume_training(resume_path, c);
        cli::train_into(trainer, out_dir, true);
      } else {
        Trainer trainer(cli::resolve_config(config_path, overrides), c);
        cli::train_into(trainer, out_dir, false);
      }
      out << "trained; outputs in " << out_dir << "\n";
    } else if (synth->parsed()) {
      SaneModel model = load_checkpoint(ckpt_path);
      InferenceRequest req{cli::parse_id_list(phonemes), language, speaker, cli::parse_mode(mode)};
      InferenceResult r = infer(model, req);
      cli::emit(durations_out, cli::join(r.durations.frames) + "\n", out);
      cli::emit(frames_out, cli::frames_csv(r.frames), out);
    } else if (eval->parsed()) {
      SaneModel model = load_checkpoint(ckpt_path);
      Corpus c = load_corpus(corpus_path);
      require(ModelDims::from_spec(c.spec) == model.dims, "corpus does not match the checkpoint");
      cli::emit(report_out, evaluate(model, c).to_json().dump(2) + "\n", out);
    } else if (ablate->parsed()) {
      Corpus c = load_corpus(corpus_path);
      TrainingConfig base = cli::resolve_config(config_path, overrides);
      std::vector<cli::AblationVariant> list;
      for (const auto& v : variants) list.push_back(cli::parse_variant(v));
      if (list.empty()) list = cli::default_variants();
      std::filesystem::create_directories(out_dir);
      const std::string report =
          cli::ablation_report(cli::ablation_run(base, c, list, out_dir)).dump(2) + "\n";
      write_file((std::filesystem::path(out_dir) / "report.json").string(), report);
      out << report;
    } else if (mas->parsed()) {
      ScoreMatrix s = cli::read_score_csv(scores_path);
      cli::emit(mas_out, cli::join(durations_from_alignment(mas_search(s)).frames) + "\n", out);
    } else if (dump->parsed()) {
      SaneModel model = load_checkpoint(ckpt_path);
      cli::emit(dump_out, cli::speaker_representation_csv(model), out);
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace sanetts
