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

#include <cstdint>
#include <map>
#include <random>
#include <string>

#include "latprune/autodiff.hpp"
#include "latprune/tensor.hpp"

namespace latprune {

/// Named parameter tensors, iterated in name order.
class ParamStore {
 public:
  void set(const std::string& name, Tensor value) { params_[name] = std::move(value); }
  const Tensor& get(const std::string& name) const;
  Tensor& get(const std::string& name);
  bool contains(const std::string& name) const { return params_.count(name) != 0; }
  std::size_t size() const { return params_.size(); }
  std::size_t total_elements() const;

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  friend bool operator==(const ParamStore& a, const ParamStore& b) { return a.params_ == b.params_; }

 private:
  std::map<std::string, Tensor> params_;
};

/// Parameters placed on a tape as leaves.
class BoundParams {
 public:
  BoundParams(Tape& tape, const ParamStore& store, bool requires_grad);
  const Var& operator()(const std::string& name) const;
  Tape& tape() const { return *tape_; }
  /// Gradients after tape.backward(), keyed like the store.
  ParamStore grads() const;

 private:
  Tape* tape_;
  std::map<std::string, Var> vars_;
};

/// Deterministic initializers on a 64-bit Mersenne stream.
Tensor init_normal(Shape shape, double stddev, std::mt19937_64& rng);
/// Normal with stddev sqrt(1/fan_in), fan_in = shape[0].
Tensor init_linear(std::size_t in, std::size_t out, std::mt19937_64& rng);

}  // namespace latprune
