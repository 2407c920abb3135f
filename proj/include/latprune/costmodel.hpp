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

// Closed-form multiply-accumulate counts for a ViT block and a pruned model.
// Softmax, normalization and activation element costs are not counted.

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "latprune/backbone.hpp"
#include "latprune/plan.hpp"

namespace latprune {

/// Rows of the block cost table:
///   0 QKV linear transformation   3 N D_ch D_attn
///   1 Q times K^T                 N^2 D_attn
///   2 attention times V           N^2 D_attn
///   3 output projection           N D_attn D_ch
///   4 FFN first layer             4 N D_ch D_fc
///   5 FFN second layer            4 N D_fc D_ch
struct BlockCost {
  std::array<std::uint64_t, 6> rows{};
  std::uint64_t total = 0;

  static const std::array<const char*, 6>& labels();
};

BlockCost block_flops(std::uint64_t tokens, std::uint64_t d_ch, std::uint64_t d_attn, std::uint64_t d_fc);

/// Same closed form over reals, for fractional token counts.
double block_flops_real(double tokens, double d_ch, double d_attn, double d_fc);

/// MACs of one selector scoring `tokens` prunable tokens.
std::uint64_t selector_flops(std::uint64_t tokens, std::size_t channels, std::size_t heads);

/// Tokens present at a rate: ceil of the surviving prunable share.
std::size_t surviving_tokens(std::size_t prunable, double rate);

struct ModelCost {
  std::vector<std::size_t> tokens_per_block;
  std::vector<BlockCost> blocks;
  std::uint64_t block_total = 0;
  std::uint64_t selector_total = 0;
  std::uint64_t package_total = 0;
  /// Patch embedding and classifier; reported apart from the block totals.
  std::uint64_t embed_head = 0;
  /// L x the unpruned block cost.
  std::uint64_t dense_block_total = 0;

  std::uint64_t total() const { return block_total + selector_total + package_total; }
  std::uint64_t total_with_embed_head() const { return total() + embed_head; }
  std::uint64_t dense_total_with_embed_head() const { return dense_block_total + embed_head; }
  /// Share of the dense model (embedding and head included) removed.
  double reduction() const;
  double selector_share() const;
};

/// Cost of running `config` under `plan`. Throws ConfigError for rates outside
/// [0, 1) or a plan whose block count differs from the configuration.
ModelCost model_flops(const ArchConfig& config, const PruningPlan& plan);

struct StrategyComparison {
  double dense = 0.0;
  double token_remaining = 0.0;
  double channel_remaining = 0.0;
  double head_remaining = 0.0;
  double token_reduction = 0.0;
  double channel_reduction = 0.0;
  double head_reduction = 0.0;
  /// Share of the block cost that scales with D_attn.
  double attn_share = 0.0;
};

/// One block at equal rate under three strategies: token (N scaled), channel
/// (D_ch scaled on the QKV input side only), head (D_attn scaled).
StrategyComparison compare_strategies(double tokens, double d_ch, double d_attn, double d_fc, double rate);
StrategyComparison compare_strategies(const ArchConfig& config, double rate);

/// Phase rates 1 - r^(k+1) for selectors k, with r found by bisection so that
/// the full model cost (embedding and head included) is as close as possible to
/// target_flops without exceeding it.
PruningPlan solve_flops_target(const ArchConfig& config, const std::vector<std::size_t>& positions,
                               double target_flops);

}  // namespace latprune
