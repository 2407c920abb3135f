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
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "latprune/backbone.hpp"
#include "latprune/data.hpp"
#include "latprune/latency.hpp"
#include "latprune/params.hpp"
#include "latprune/plan.hpp"

namespace latprune {

struct LossWeights {
  double kl = 0.5;
  double distill = 0.5;
  double ratio = 2.0;
};

struct LossComponents {
  double cls = 0.0;
  double kl = 0.0;
  double distill = 0.0;
  double ratio = 0.0;
  double total = 0.0;
};

/// Mean over the batch of KL(softmax(logits) || softmax(ref_logits)).
double kl_divergence(const Tensor& logits, const Tensor& ref_logits);

/// Cross-entropy + weighted KL against the unpruned reference + weighted
/// distillation (zero, no teacher) + weighted sparsity loss over `decisions`.
LossComponents total_loss(const Tensor& logits, std::span<const int> labels, const Tensor& ref_logits,
                          const std::vector<KeepDecision>& decisions, const std::vector<double>& rates,
                          const LossWeights& weights);

struct GraphLoss {
  Var total;
  LossComponents components;
};

/// Differentiable form. `patch_decisions` are [B, patches] per selector.
GraphLoss total_loss_graph(const Var& logits, std::span<const int> labels, const Tensor& ref_logits,
                           const std::vector<Var>& patch_decisions, const std::vector<double>& rates,
                           const LossWeights& weights);

struct AdamConfig {
  double lr_selector = 5e-4;
  double lr_backbone = 5e-6;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  ParamStore m;
  ParamStore v;
  std::uint64_t step = 0;
};

/// One Adam update; selector parameters use lr_selector, the rest lr_backbone.
void adam_step(ParamStore& params, const ParamStore& grads, AdamState& state, const AdamConfig& config);

struct StepOptions {
  LossWeights weights;
  AdamConfig adam;
  std::optional<DecisionMode> decision;  // default: sample
  std::uint64_t seed = 0;
  bool selectors = true;
};

struct StepRecord {
  LossComponents loss;
  std::vector<double> kept_fraction;  // batch mean per selector
};

/// Frozen unpruned forward, pruned forward, loss, backward, Adam update.
/// Throws DivergenceError on a non-finite loss or gradient; params and state
/// are left untouched in that case.
StepRecord train_step(const ArchConfig& config, ParamStore& params, AdamState& state, const Dataset& batch,
                      const StepOptions& options);

/// Loss on a batch with the given decision mode, without updating anything.
LossComponents batch_loss(const ArchConfig& config, const ParamStore& params, const Dataset& batch,
                          const StepOptions& options);

struct EvalResult {
  double accuracy = 0.0;                // percent
  std::vector<double> kept_fraction;    // mean over images per selector
};

/// Physically pruned forward with argmax decisions.
EvalResult evaluate(const ArchConfig& config, const ParamStore& params, const Dataset& data, bool selectors = true);

/// Masked layout with sampled decisions: accuracy, and the batch-mean kept
/// fraction per selector averaged over batches of `batch_size`.
EvalResult evaluate_sampled(const ArchConfig& config, const ParamStore& params, const Dataset& data,
                            std::size_t batch_size, std::uint64_t seed);

struct TrainOptions {
  std::size_t epochs = 5;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  StepOptions step;
  /// Probe-batch finite-difference check before the first step.
  bool verify_gradients = true;
  std::size_t gradcheck_probes = 24;
};

struct TrainReport {
  std::vector<double> epoch_loss;
  std::vector<std::vector<double>> epoch_kept_fraction;
  double gradcheck_error = std::numeric_limits<double>::quiet_NaN();
  std::size_t steps = 0;
};

/// Shuffled minibatch loop. Same seed and inputs give bit-identical params.
TrainReport train(const ArchConfig& config, ParamStore& params, const Dataset& data, const TrainOptions& options);

/// Max relative error of the soft-mode total loss gradient on a probe batch.
double verify_loss_gradients(const ArchConfig& config, const ParamStore& params, const Dataset& probe,
                             const LossWeights& weights, std::uint64_t seed, std::size_t probes);

// Desk-scale recipe: an unpruned base model trained at base_lr, then a
// finetune under the two learning-rate groups. The control finetunes the same
// base without selectors.
struct RecipeOptions {
  std::size_t pretrain_epochs = 20;
  std::size_t finetune_epochs = 20;
  double base_lr = 2e-3;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  AdamConfig finetune_adam;
  LossWeights weights;
  bool verify_gradients = true;
};

struct RecipeResult {
  ParamStore params;
  TrainReport pretrain;
  TrainReport finetune;
};

RecipeResult train_recipe(const ArchConfig& config, const Dataset& data, const RecipeOptions& options,
                          bool selectors = true);

/// Copies every parameter of `base` into a fresh init of `config`, so selector
/// parameters come from init_model_params and the backbone from `base`.
ParamStore with_backbone(const ArchConfig& config, const ParamStore& base, std::uint64_t seed);

// Phase grouping.

struct PhaseSpan {
  std::size_t start = 0;
  std::size_t length = 0;
  double rate = 0.0;

  friend bool operator==(const PhaseSpan&, const PhaseSpan&) = default;
};

enum class GroupingRule {
  phase_head,  // compare with the first block of the current phase
  adjacent,    // compare with the previous block
};

inline constexpr double kDefaultGroupingTol = 0.085;

/// Greedy left-to-right grouping; each phase keeps its first block's rate.
std::vector<PhaseSpan> phase_grouping(const std::vector<double>& rates, double tol = kDefaultGroupingTol,
                                      GroupingRule rule = GroupingRule::phase_head);

// Progressive schedule.

/// The model, data and finetuning that the schedule drives.
class ScheduleEnv {
 public:
  virtual ~ScheduleEnv() = default;
  virtual std::size_t blocks() const = 0;
  virtual double max_rate() const = 0;
  virtual void insert_selector(std::size_t block) = 0;
  virtual void set_rate(std::size_t block, double rate) = 0;
  virtual void finetune() = 0;
  /// Validation accuracy in percent.
  virtual double validate() = 0;
};

struct ScheduleOptions {
  double rate_step = kDefaultRateStep;
  double drop_threshold = 0.5;  // accuracy points
  double tol = kDefaultGroupingTol;
  GroupingRule rule = GroupingRule::phase_head;
  const LatencyTable* table = nullptr;
  double budget_ms = std::numeric_limits<double>::quiet_NaN();
};

struct InsertionRecord {
  std::size_t block = 0;
  double reference_accuracy = 0.0;
  std::vector<double> rates;        // tried rates in order
  std::vector<double> accuracies;   // accuracy after finetuning at each tried rate
  double achieved_rate = 0.0;
  double achieved_accuracy = 0.0;
};

struct ScheduleState {
  std::vector<InsertionRecord> history;
  /// Rate per block after all insertions; block 0 never carries a selector.
  std::vector<double> block_rates;
  std::vector<PhaseSpan> phases;
  PruningPlan plan;
  bool budget_met = true;
};

/// Inserts selectors from block L-1 down to 1. Each grows its rate on the
/// grid until accuracy drops more than drop_threshold below the accuracy
/// before its insertion; a block's rate never exceeds the next block's. Then
/// groups phases and, with a table and budget, lowers phase rates front to
/// back while the plan stays within budget.
ScheduleState progressive_schedule(ScheduleEnv& env, const ScheduleOptions& options);

/// One JSON object per line per insertion.
std::string schedule_log(const ScheduleState& state);

/// accuracy = base - sum_i sensitivity_i * rate_i^2, finetune is a no-op.
class QuadraticScheduleEnv : public ScheduleEnv {
 public:
  QuadraticScheduleEnv(double base, std::vector<double> sensitivity, double max_rate);
  std::size_t blocks() const override { return sensitivity_.size(); }
  double max_rate() const override { return max_rate_; }
  void insert_selector(std::size_t block) override;
  void set_rate(std::size_t block, double rate) override { rates_.at(block) = rate; }
  void finetune() override {}
  double validate() override;
  const std::vector<std::size_t>& insertions() const { return insertions_; }

 private:
  double base_;
  std::vector<double> sensitivity_;
  double max_rate_;
  std::vector<double> rates_;
  std::vector<std::size_t> insertions_;
};

/// Drives the real model: selectors are added to the configuration, finetuned
/// with the two learning-rate groups, and validated with pruned inference.
class ModelScheduleEnv : public ScheduleEnv {
 public:
  ModelScheduleEnv(ArchConfig base_config, ParamStore base_params, Dataset train, Dataset validation,
                   TrainOptions finetune, double max_rate);
  std::size_t blocks() const override { return base_.blocks; }
  double max_rate() const override { return max_rate_; }
  void insert_selector(std::size_t block) override;
  void set_rate(std::size_t block, double rate) override;
  void finetune() override;
  double validate() override;

  /// Current configuration and parameters with selectors in block order.
  ArchConfig config() const;
  ParamStore params() const;

 private:
  void absorb(const ArchConfig& config, const ParamStore& params);

  ArchConfig base_;
  ParamStore backbone_;
  std::map<std::size_t, ParamStore> selectors_;  // block -> parameters without prefix
  std::map<std::size_t, double> rates_;
  Dataset train_;
  Dataset validation_;
  TrainOptions finetune_;
  double max_rate_;
  std::uint64_t round_ = 0;
};

// Representation similarity.

/// Linear CKA between [n, p] and [n, q] feature matrices. Throws
/// ValidationError for n < 2 or a zero-variance input.
double cka(const Tensor& a, const Tensor& b);

/// CKA between every pair of block outputs, each flattened to [B, N * C].
std::vector<std::vector<double>> block_similarity(const ArchConfig& config, const ParamStore& params,
                                                  const Tensor& images);

}  // namespace latprune
