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
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "latprune/backbone.hpp"
#include "latprune/latency.hpp"
#include "latprune/params.hpp"

namespace latprune {

struct RunReport {
  std::string command;
  std::string config_digest;
  std::uint64_t seed = 0;
  double wall_time_s = 0.0;
  nlohmann::json outputs = nlohmann::json::object();
  /// Human-readable table, not part of the JSON form.
  std::string human;

  std::string to_json() const;
  static RunReport from_json(const std::string& text);
};

struct AnalyzeOptions {
  /// Uniform phase rate for the plan; with strategy_compare, the comparison rate.
  std::optional<double> rate;
  bool strategy_compare = false;
  /// Solve phase rates for this total (embedding and head included).
  std::optional<double> target_gflops;
  std::uint64_t seed = 0;
};

/// Dense cost, cost of the plan (target, uniform rate or config rates), and
/// optionally the strategy comparison.
RunReport cmd_analyze(const ArchConfig& config, const AnalyzeOptions& options);

struct LatencyOptions {
  std::optional<double> rate;
  std::uint64_t seed = 0;
};

/// Table contents, block latency at a rate, dense and config-plan latency.
RunReport cmd_latency(const ArchConfig& config, const LatencyTable& table, const LatencyOptions& options);

struct PlanOptions {
  double budget_ms = 0.0;
  /// Phase starts; one phase over all blocks when empty.
  std::vector<std::size_t> positions;
  double grid_step = kDefaultRateStep;
  bool progressive = false;
  std::size_t epochs = 20;
  std::size_t finetune_epochs = 5;
  std::size_t train_samples = 1000;
  std::size_t validation_samples = 2000;
  std::uint64_t seed = 0;
};

/// Budget solve; with progressive, the schedule on synthetic data. Throws
/// InfeasibleError when the budget cannot be met by the solver.
RunReport cmd_plan(const ArchConfig& config, const LatencyTable& table, const PlanOptions& options);

struct TrainCommandOptions {
  std::size_t epochs = 20;
  std::size_t samples = 1000;
  std::size_t validation_samples = 2000;
  double noise = 0.3;
  std::uint64_t seed = 0;
  /// Written when nonempty.
  std::string weights_path;
};

/// Trains on synthetic blobs: an unpruned stage then a pruning finetune, each
/// `epochs` long. Reports accuracy and kept fractions.
RunReport cmd_train(const ArchConfig& config, const TrainCommandOptions& options, ParamStore* trained = nullptr);

struct RunOptions {
  Phase mode = Phase::infer;
  bool keep_all = false;
  std::uint64_t seed = 0;
  /// Writes <prefix>.phase<k>.img<b>.pgm keep masks when nonempty.
  std::string mask_prefix;
};

/// Forward on `images` [B, H, W, ch]: logits, prediction, kept fraction and an
/// ASCII keep mask per phase.
RunReport cmd_run(const ArchConfig& config, const ParamStore& params, const Tensor& images, const RunOptions& options);

/// Patch-grid rendering of one image's keep mask: '#' kept, '.' pruned.
std::vector<std::string> ascii_mask(const ArchConfig& config, const KeepDecision& decision, std::size_t image);

}  // namespace latprune
