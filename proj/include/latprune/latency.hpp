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
#include <string>
#include <utility>
#include <vector>

#include "latprune/plan.hpp"
#include "latprune/selector.hpp"

namespace latprune {

inline constexpr double kDefaultRateStep = 0.05;

/// k-th point of a rate grid. When 1 / step is a whole number the point is
/// k / (1 / step), so 6 steps of 0.05 give exactly 0.3.
double grid_rate(std::size_t k, double step);

struct LatencyEntry {
  double rate = 0.0;
  double latency_ms = 0.0;
};

/// Measured per-block latency as a function of pruning rate.
class LatencyTable {
 public:
  LatencyTable() = default;
  /// Throws ValidationError (naming the row) unless rates are strictly
  /// increasing within [0, 1) and latencies strictly decreasing.
  LatencyTable(std::string device, std::vector<LatencyEntry> entries);

  const std::string& device() const noexcept { return device_; }
  const std::vector<LatencyEntry>& entries() const noexcept { return entries_; }
  double min_rate() const { return entries_.front().rate; }
  double max_rate() const { return entries_.back().rate; }
  double floor_ms() const { return entries_.back().latency_ms; }

  static LatencyTable deit_tiny();
  static LatencyTable deit_small();

 private:
  std::string device_;
  std::vector<LatencyEntry> entries_;
};

/// Parses `rate,latency_ms` text. Row numbers in errors count data rows from 1.
LatencyTable parse_table(const std::string& text, const std::string& device);
/// Device defaults to the file stem.
LatencyTable load_table(const std::string& path, const std::string& device = "");
std::string format_table(const LatencyTable& table);

/// Exact at table points, linear in between. RangeError outside the table.
double block_lat(const LatencyTable& table, double rate);

double plan_latency(const LatencyTable& table, const PruningPlan& plan);

/// Exhaustive search over per-phase rates on a grid. Phase rates are
/// nondecreasing. Minimizes the summed per-block rate; ties go to the plan with
/// smaller early rates. Throws InfeasibleError carrying the minimum latency.
PruningPlan solve_budget(const LatencyTable& table, std::size_t blocks, const std::vector<std::size_t>& positions,
                         double budget_ms, double grid_step = kDefaultRateStep);

/// Sum over entries of (1 - rate - batch-mean kept fraction)^2, protected
/// tokens excluded from the kept fraction.
double sparsity_loss(const std::vector<KeepDecision>& decisions, const std::vector<double>& rates);

}  // namespace latprune
