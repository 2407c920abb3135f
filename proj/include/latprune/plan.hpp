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

#include <cstddef>
#include <limits>
#include <vector>

namespace latprune {

/// Per-block pruning rates plus the selector layout that produces them.
///
/// rates[i] is the share of the original prunable tokens that is absent while
/// block i runs. A selector at position p starts a phase covering blocks
/// p .. next position - 1; rates are constant within a phase and zero before
/// the first selector.
struct PruningPlan {
  std::vector<double> rates;
  std::vector<std::size_t> positions;
  std::vector<double> phase_rates;
  double latency_ms = std::numeric_limits<double>::quiet_NaN();
  double flops = std::numeric_limits<double>::quiet_NaN();

  std::size_t blocks() const { return rates.size(); }
};

/// Expands per-phase rates to per-block rates. Throws ConfigError when
/// positions are not strictly increasing within [0, blocks - 1], counts differ,
/// or a rate lies outside [0, 1).
PruningPlan make_plan(std::size_t blocks, std::vector<std::size_t> positions, std::vector<double> phase_rates);

/// A plan with no selectors.
PruningPlan dense_plan(std::size_t blocks);

}  // namespace latprune
