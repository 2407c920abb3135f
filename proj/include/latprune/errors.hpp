// Copyright 2026 The latprune Authors. All Rights Reserved.
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

#include <stdexcept>
#include <string>

namespace latprune {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid hyperparameters, malformed configuration, schema violations.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Tensor extents do not line up.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Pooling over a mask with no kept entries.
class EmptyPoolError : public Error {
 public:
  using Error::Error;
};

/// Weighted average whose weights sum to zero.
class DegenerateWeightsError : public Error {
 public:
  using Error::Error;
};

/// Lookup outside the measured domain of a table.
class RangeError : public Error {
 public:
  using Error::Error;
};

/// Malformed or non-monotone input file.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Caller violated an API precondition that is not about shapes.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// No plan on the search grid meets the latency budget.
class InfeasibleError : public Error {
 public:
  InfeasibleError(const std::string& what, double min_latency_ms)
      : Error(what), min_latency_ms_(min_latency_ms) {}
  double min_latency_ms() const noexcept { return min_latency_ms_; }

 private:
  double min_latency_ms_;
};

/// Training produced a non-finite loss.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace latprune
