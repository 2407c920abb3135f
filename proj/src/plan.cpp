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

#include "latprune/plan.hpp"

#include <string>

#include "latprune/errors.hpp"

namespace latprune {

PruningPlan make_plan(std::size_t blocks, std::vector<std::size_t> positions, std::vector<double> phase_rates) {
  if (positions.size() != phase_rates.size()) {
    throw ConfigError("plan: " + std::to_string(positions.size()) + " positions but " +
                      std::to_string(phase_rates.size()) + " phase rates");
  }
  for (std::size_t i = 0; i < positions.size(); ++i) {
    if (positions[i] >= blocks) throw ConfigError("plan: position " + std::to_string(positions[i]) + " out of range");
    if (i > 0 && positions[i] <= positions[i - 1]) throw ConfigError("plan: positions must be strictly increasing");
    if (!(phase_rates[i] >= 0.0 && phase_rates[i] < 1.0)) {
      throw ConfigError("plan: rate " + std::to_string(phase_rates[i]) + " outside [0, 1)");
    }
  }
  PruningPlan plan;
  plan.rates.assign(blocks, 0.0);
  for (std::size_t i = 0; i < positions.size(); ++i) {
    const std::size_t end = i + 1 < positions.size() ? positions[i + 1] : blocks;
    for (std::size_t l = positions[i]; l < end; ++l) plan.rates[l] = phase_rates[i];
  }
  plan.positions = std::move(positions);
  plan.phase_rates = std::move(phase_rates);
  return plan;
}

PruningPlan dense_plan(std::size_t blocks) { return make_plan(blocks, {}, {}); }

}  // namespace latprune
