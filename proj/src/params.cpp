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

#include "latprune/params.hpp"

#include <cmath>

#include "latprune/errors.hpp"

namespace latprune {

const Tensor& ParamStore::get(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw ConfigError("missing parameter '" + name + "'");
  return it->second;
}

Tensor& ParamStore::get(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw ConfigError("missing parameter '" + name + "'");
  return it->second;
}

std::size_t ParamStore::total_elements() const {
  std::size_t n = 0;
  for (const auto& [_, t] : params_) n += t.size();
  return n;
}

BoundParams::BoundParams(Tape& tape, const ParamStore& store, bool requires_grad) : tape_(&tape) {
  for (const auto& [name, t] : store) vars_.emplace(name, tape.leaf(t, requires_grad));
}

const Var& BoundParams::operator()(const std::string& name) const {
  auto it = vars_.find(name);
  if (it == vars_.end()) throw ConfigError("missing parameter '" + name + "'");
  return it->second;
}

ParamStore BoundParams::grads() const {
  ParamStore g;
  for (const auto& [name, v] : vars_) g.set(name, tape_->grad(v));
  return g;
}

Tensor init_normal(Shape shape, double stddev, std::mt19937_64& rng) {
  Tensor t(std::move(shape));
  std::normal_distribution<double> dist(0.0, stddev);
  for (auto& v : t.data()) v = dist(rng);
  return t;
}

Tensor init_linear(std::size_t in, std::size_t out, std::mt19937_64& rng) {
  return init_normal({in, out}, std::sqrt(1.0 / static_cast<double>(in)), rng);
}

}  // namespace latprune
