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

#include <cstddef>
#include <functional>
#include <numeric>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace sanetts {

// Error hierarchy. Every failure surfaced by the library derives from Error.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A caller broke a documented precondition (shape, range, emptiness).
class ContractViolation : public Error {
 public:
  using Error::Error;
};

// A tape whose nodes reference inputs that were recorded later.
class CorruptTape : public Error {
 public:
  using Error::Error;
};

// Inconsistent configuration or model/spec mismatch.
class ConfigError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

// Checkpoint truncation, checksum mismatch or malformed field.
class IntegrityError : public Error {
 public:
  using Error::Error;
};

class IncompatibleVersion : public Error {
 public:
  using Error::Error;
};

class InfeasibleAlignment : public Error {
 public:
  using Error::Error;
};

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

inline std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << " x ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

inline void require(bool condition, const std::string& message) {
  if (!condition) throw ContractViolation(message);
}

// Dense row-major array of doubles. Parameters live in Tensors; the tape
// references them by address while a graph is alive.
struct Tensor {
  Shape shape;
  std::vector<double> values;
  std::optional<std::vector<double>> grad;
  bool requires_grad = false;
  std::optional<std::size_t> tape_id;

  Tensor() = default;

  Tensor(Shape s, std::vector<double> v, bool trainable = false)
      : shape(std::move(s)), values(std::move(v)), requires_grad(trainable) {
    for (std::size_t d : shape) {
      require(d > 0, "tensor dimensions must be positive, got " + to_string(shape));
    }
    require(numel(shape) == values.size(),
            "tensor shape " + to_string(shape) + " does not match " +
                std::to_string(values.size()) + " values");
  }

  static Tensor zeros(Shape s, bool trainable = false) {
    const std::size_t n = numel(s);
    return Tensor(std::move(s), std::vector<double>(n, 0.0), trainable);
  }

  std::size_t size() const { return values.size(); }
  std::size_t rank() const { return shape.size(); }

  double& at(std::size_t r, std::size_t c) { return values[r * shape.back() + c]; }
  double at(std::size_t r, std::size_t c) const { return values[r * shape.back() + c]; }

  bool operator==(const Tensor& other) const {
    return shape == other.shape && values == other.values;
  }
};

// A parameter tensor together with its registry name.
struct NamedTensor {
  std::string name;
  Tensor* tensor = nullptr;
};

}  // namespace sanetts
