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

// Binary checkpoint, all integers little-endian:
//
//   bytes[8]  magic "SANECKPT"
//   u32       format version
//   str       config text (config_to_text)
//   u64       num_phonemes, num_languages, feature_dim
//   u64       speaker count, then one u64 native language per speaker
//   u64       step
//   str       rng state (decimal words, std::mt19937_64 stream format)
//   u64       array count, then per array:
//               str name, u32 rank, u64 dims[rank], u64 count, f64 values[count]
//   u64       FNV-1a 64 hash of every preceding byte
//
// str is a u64 byte length followed by the bytes. Arrays hold every registry
// parameter under its name, plus optimizer moments as "opt.m/<name>" and
// "opt.v/<name>".

#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "sanetts/trainer.hpp"

namespace sanetts {

constexpr std::uint32_t kCheckpointVersion = 1;
constexpr std::string_view kCheckpointMagic = "SANECKPT";

struct NamedArray {
  std::string name;
  Tensor tensor;

  bool operator==(const NamedArray&) const = default;
};

struct Checkpoint {
  std::uint32_t version = kCheckpointVersion;
  std::string config_text;
  ModelDims dims;
  std::uint64_t step = 0;
  std::string rng_state;
  std::vector<NamedArray> arrays;
};

inline std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

namespace detail {

class ByteWriter {
 public:
  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void f64(double v) { put(std::bit_cast<std::uint64_t>(v), 8); }
  void str(std::string_view s) {
    u64(s.size());
    out_.append(s);
  }
  void raw(std::string_view s) { out_.append(s); }
  std::string& bytes() { return out_; }

 private:
  void put(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  std::string out_;
};

class ByteReader {
 public:
  explicit ByteReader(std::string_view bytes) : in_(bytes) {}
  std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
  std::uint64_t u64() { return get(8); }
  double f64() { return std::bit_cast<double>(get(8)); }
  std::string str() {
    const std::uint64_t n = u64();
    need(n);
    std::string s(in_.substr(pos_, n));
    pos_ += n;
    return s;
  }
  std::string_view raw(std::size_t n) {
    need(n);
    auto s = in_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  void need(std::uint64_t n) const {
    if (n > in_.size() - pos_) throw IntegrityError("checkpoint truncated");
  }
  std::uint64_t get(int n) {
    need(static_cast<std::uint64_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in_[pos_ + i])) << (8 * i);
    }
    pos_ += n;
    return v;
  }
  std::string_view in_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string encode_checkpoint(const Checkpoint& ckpt) {
  detail::ByteWriter w;
  w.raw(kCheckpointMagic);
  w.u32(ckpt.version);
  w.str(ckpt.config_text);
  w.u64(ckpt.dims.num_phonemes);
  w.u64(ckpt.dims.num_languages);
  w.u64(ckpt.dims.feature_dim);
  w.u64(ckpt.dims.speaker_languages.size());
  for (std::size_t l : ckpt.dims.speaker_languages) w.u64(l);
  w.u64(ckpt.step);
  w.str(ckpt.rng_state);
  w.u64(ckpt.arrays.size());
  for (const NamedArray& a : ckpt.arrays) {
    w.str(a.name);
    w.u32(static_cast<std::uint32_t>(a.tensor.shape.size()));
    for (std::size_t d : a.tensor.shape) w.u64(d);
    w.u64(a.tensor.values.size());
    for (double v : a.tensor.values) w.f64(v);
  }
  const std::uint64_t hash = fnv1a64(w.bytes());
  w.u64(hash);
  return std::move(w.bytes());
}

inline Checkpoint decode_checkpoint(std::string_view bytes) {
  detail::ByteReader r(bytes);
  if (bytes.size() < kCheckpointMagic.size() || r.raw(kCheckpointMagic.size()) != kCheckpointMagic) {
    throw IntegrityError("not a checkpoint file");
  }
  Checkpoint c;
  c.version = r.u32();
  if (c.version != kCheckpointVersion) {
    throw IncompatibleVersion("checkpoint format version " + std::to_string(c.version) +
                              " is not supported (expected " +
                              std::to_string(kCheckpointVersion) + ")");
  }
  if (bytes.size() < kCheckpointMagic.size() + 4 + 8) throw IntegrityError("checkpoint truncated");
  const std::string_view body = bytes.substr(0, bytes.size() - 8);
  detail::ByteReader tail(bytes.substr(bytes.size() - 8));
  if (fnv1a64(body) != tail.u64()) throw IntegrityError("checkpoint checksum mismatch");

  detail::ByteReader b(body.substr(kCheckpointMagic.size() + 4));
  c.config_text = b.str();
  c.dims.num_phonemes = b.u64();
  c.dims.num_languages = b.u64();
  c.dims.feature_dim = b.u64();
  const std::uint64_t speakers = b.u64();
  for (std::uint64_t s = 0; s < speakers; ++s) c.dims.speaker_languages.push_back(b.u64());
  c.step = b.u64();
  c.rng_state = b.str();
  const std::uint64_t count = b.u64();
  for (std::uint64_t i = 0; i < count; ++i) {
    NamedArray a;
    a.name = b.str();
    const std::uint32_t rank = b.u32();
    Shape shape;
    for (std::uint32_t k = 0; k < rank; ++k) shape.push_back(b.u64());
    const std::uint64_t n = b.u64();
    if (n != numel(shape) || std::find(shape.begin(), shape.end(), 0u) != shape.end()) {
      throw IntegrityError("array " + a.name + " has shape " + to_string(shape) + " but " +
                           std::to_string(n) + " values");
    }
    std::vector<double> values(n);
    for (double& v : values) v = b.f64();
    a.tensor = Tensor(std::move(shape), std::move(values), true);
    c.arrays.push_back(std::move(a));
  }
  if (!b.done()) throw IntegrityError("trailing bytes in checkpoint");
  return c;
}

inline Checkpoint make_checkpoint(SaneModel& model, std::uint64_t step = 0,
                                  const std::string& rng_state = "",
                                  const OptimizerState* opt = nullptr) {
  Checkpoint c;
  c.config_text = config_to_text(model.config);
  c.dims = model.dims;
  c.step = step;
  c.rng_state = rng_state;
  for (const NamedTensor& p : model.parameters()) {
    c.arrays.push_back({p.name, Tensor(p.tensor->shape, p.tensor->values, true)});
  }
  if (opt) {
    auto add_moments = [&](const std::string& prefix,
                           const std::map<std::string, std::vector<double>>& moments) {
      for (const auto& [name, values] : moments) {
        c.arrays.push_back({prefix + name, Tensor({values.size()}, values, true)});
      }
    };
    add_moments("opt.m/", opt->first);
    add_moments("opt.v/", opt->second);
  }
  return c;
}

// Rebuilds the model and fills every registry entry; all-or-nothing.
inline SaneModel model_from_checkpoint(const Checkpoint& c, OptimizerState* opt = nullptr) {
  TrainingConfig config = parse_config(c.config_text);
  SaneModel model(config, c.dims);
  std::map<std::string, const Tensor*> by_name;
  for (const NamedArray& a : c.arrays) {
    if (!by_name.emplace(a.name, &a.tensor).second) {
      throw IntegrityError("duplicate array " + a.name + " in checkpoint");
    }
  }
  auto params = model.parameters();
  std::size_t matched = 0;
  for (const NamedTensor& p : params) {
    auto it = by_name.find(p.name);
    if (it == by_name.end()) throw IntegrityError("checkpoint lacks parameter " + p.name);
    if (it->second->shape != p.tensor->shape) {
      throw IntegrityError("parameter " + p.name + " has shape " + to_string(it->second->shape) +
                           ", model expects " + to_string(p.tensor->shape));
    }
    p.tensor->values = it->second->values;
    ++matched;
  }
  OptimizerState restored = OptimizerState::from_config(config);
  for (const NamedArray& a : c.arrays) {
    const bool m = a.name.starts_with("opt.m/"), v = a.name.starts_with("opt.v/");
    if (!m && !v) continue;
    (m ? restored.first : restored.second)[a.name.substr(6)] = a.tensor.values;
    ++matched;
  }
  if (matched != c.arrays.size()) throw IntegrityError("checkpoint holds unknown arrays");
  if (opt) *opt = std::move(restored);
  return model;
}

inline void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open " + path + " for writing");
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw Error("failed writing " + path);
}

inline std::string read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

inline void save_checkpoint(SaneModel& model, const std::string& path) {
  write_file(path, encode_checkpoint(make_checkpoint(model)));
}

inline SaneModel load_checkpoint(const std::string& path) {
  return model_from_checkpoint(decode_checkpoint(read_file(path)));
}

inline void save_training_checkpoint(Trainer& trainer, const std::string& path) {
  write_file(path, encode_checkpoint(make_checkpoint(trainer.model(), trainer.step(),
                                                     trainer.rng_state(), &trainer.optimizer())));
}

// Resumes a run; the corpus must match the one the run was trained on.
inline Trainer resume_training(const std::string& path, const Corpus& corpus) {
  Checkpoint c = decode_checkpoint(read_file(path));
  OptimizerState opt;
  SaneModel model = model_from_checkpoint(c, &opt);
  return Trainer(std::move(model), corpus, c.step, c.rng_state, std::move(opt));
}

}  // namespace sanetts
