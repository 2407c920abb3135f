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

#include "latprune/costmodel.hpp"

#include <algorithm>
#include <cmath>

#include "latprune/errors.hpp"
#include "latprune/selector.hpp"

namespace latprune {

const std::array<const char*, 6>& BlockCost::labels() {
  static const std::array<const char*, 6> names{"qkv_linear", "q_times_kT", "attn_times_v",
                                                "projection", "fc1",        "fc2"};
  return names;
}

BlockCost block_flops(std::uint64_t tokens, std::uint64_t d_ch, std::uint64_t d_attn, std::uint64_t d_fc) {
  if (tokens == 0 || d_ch == 0 || d_attn == 0 || d_fc == 0) {
    throw ConfigError("block_flops: all extents must be positive");
  }
  BlockCost c;
  c.rows[0] = 3 * tokens * d_ch * d_attn;
  c.rows[1] = tokens * tokens * d_attn;
  c.rows[2] = tokens * tokens * d_attn;
  c.rows[3] = tokens * d_attn * d_ch;
  c.rows[4] = 4 * tokens * d_ch * d_fc;
  c.rows[5] = 4 * tokens * d_fc * d_ch;
  for (auto r : c.rows) c.total += r;
  return c;
}

double block_flops_real(double tokens, double d_ch, double d_attn, double d_fc) {
  return 4.0 * tokens * d_ch * d_attn + 2.0 * tokens * tokens * d_attn + 8.0 * tokens * d_ch * d_fc;
}

std::uint64_t selector_flops(std::uint64_t tokens, std::size_t channels, std::size_t heads) {
  const SelectorDims d = selector_dims(channels, heads);
  const std::uint64_t hd = d.head_dim;
  const std::uint64_t per_head = hd * (hd / 2)             // local MLP
                                 + hd * (hd / 2)           // scoring layer 1
                                 + (hd / 2) * (hd / 4)     // scoring layer 2
                                 + (hd / 4) * 2;           // scoring layer 3
  const std::uint64_t branch = 2 * static_cast<std::uint64_t>(heads) * d.branch_hidden;
  return tokens * (heads * per_head + branch);
}

std::size_t surviving_tokens(std::size_t prunable, double rate) {
  const double kept = static_cast<double>(prunable) * (1.0 - rate);
  // Guard against 0.7 * 10 = 7.000000000000001 style round-up.
  return static_cast<std::size_t>(std::ceil(kept - 1e-9));
}

double ModelCost::reduction() const {
  const double dense = static_cast<double>(dense_total_with_embed_head());
  return 1.0 - static_cast<double>(total_with_embed_head()) / dense;
}

double ModelCost::selector_share() const {
  return static_cast<double>(selector_total) / static_cast<double>(total_with_embed_head());
}

ModelCost model_flops(const ArchConfig& config, const PruningPlan& plan) {
  if (plan.rates.size() != config.blocks) {
    throw ConfigError("model_flops: plan covers " + std::to_string(plan.rates.size()) + " blocks, config has " +
                      std::to_string(config.blocks));
  }
  for (double r : plan.rates) {
    if (!(r >= 0.0 && r < 1.0)) throw ConfigError("model_flops: rate " + std::to_string(r) + " outside [0, 1)");
  }
  const std::size_t P = config.patches(), cls = config.cls_tokens();
  const std::uint64_t C = config.embed_dim;
  ModelCost cost;
  const BlockCost dense = block_flops(config.tokens(), C, config.attn_dim, config.fc_dim);
  cost.dense_block_total = dense.total * config.blocks;
  cost.embed_head = static_cast<std::uint64_t>(P) * config.patch_size * config.patch_size * config.in_channels * C +
                    C * config.num_classes;

  std::size_t packages = 0;
  std::size_t present = P;
  std::size_t next = 0;
  for (std::size_t l = 0; l < config.blocks; ++l) {
    if (next < plan.positions.size() && plan.positions[next] == l) {
      ++next;
      const std::size_t after = surviving_tokens(P, plan.rates[l]);
      cost.selector_total += selector_flops(present, config.embed_dim, config.heads);
      if (after < present) {
        cost.package_total += static_cast<std::uint64_t>(present - after) * C;
        packages = config.package_policy == PackagePolicy::concat_per_phase ? packages + 1 : 1;
      }
      present = std::min(present, after);
    }
    const std::size_t n = cls + present + packages;
    cost.tokens_per_block.push_back(n);
    cost.blocks.push_back(block_flops(n, C, config.attn_dim, config.fc_dim));
    cost.block_total += cost.blocks.back().total;
  }
  return cost;
}

StrategyComparison compare_strategies(double tokens, double d_ch, double d_attn, double d_fc, double rate) {
  if (!(rate >= 0.0 && rate < 1.0)) throw ConfigError("compare_strategies: rate outside [0, 1)");
  const double keep = 1.0 - rate;
  StrategyComparison s;
  s.dense = block_flops_real(tokens, d_ch, d_attn, d_fc);
  s.token_remaining = block_flops_real(tokens * keep, d_ch, d_attn, d_fc);
  s.head_remaining = block_flops_real(tokens, d_ch, d_attn * keep, d_fc);
  // Channel masking only thins the input side of the current QKV product.
  s.channel_remaining = s.dense - 3.0 * tokens * d_ch * d_attn * rate;
  s.token_reduction = 1.0 - s.token_remaining / s.dense;
  s.head_reduction = 1.0 - s.head_remaining / s.dense;
  s.channel_reduction = 1.0 - s.channel_remaining / s.dense;
  s.attn_share = (4.0 * tokens * d_ch * d_attn + 2.0 * tokens * tokens * d_attn) / s.dense;
  return s;
}

StrategyComparison compare_strategies(const ArchConfig& config, double rate) {
  return compare_strategies(static_cast<double>(config.tokens()), static_cast<double>(config.embed_dim),
                            static_cast<double>(config.attn_dim), static_cast<double>(config.fc_dim), rate);
}

PruningPlan solve_flops_target(const ArchConfig& config, const std::vector<std::size_t>& positions,
                               double target_flops) {
  auto plan_for = [&](double keep) {
    std::vector<double> rates;
    for (std::size_t k = 0; k < positions.size(); ++k) {
      rates.push_back(std::clamp(1.0 - std::pow(keep, static_cast<double>(k + 1)), 0.0, 0.999999));
    }
    PruningPlan plan = make_plan(config.blocks, positions, rates);
    plan.flops = static_cast<double>(model_flops(config, plan).total_with_embed_head());
    return plan;
  };
  PruningPlan hi = plan_for(1.0);
  if (hi.flops <= target_flops) return hi;
  PruningPlan lo = plan_for(0.0);
  if (lo.flops > target_flops) {
    throw InfeasibleError("target " + std::to_string(target_flops) + " below the most aggressive plan", lo.flops);
  }
  // Invariant: cost(lo_keep) <= target < cost(hi_keep).
  double lo_keep = 0.0, hi_keep = 1.0;
  for (int it = 0; it < 80; ++it) {
    const double mid = 0.5 * (lo_keep + hi_keep);
    PruningPlan m = plan_for(mid);
    if (m.flops <= target_flops) {
      lo_keep = mid;
      lo = std::move(m);
    } else {
      hi_keep = mid;
    }
  }
  return lo;
}

}  // namespace latprune
