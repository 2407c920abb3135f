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

// Flat DeiT-style vision transformer with token selectors between blocks.
//
// Two execution layouts:
//   train - every image keeps its full token grid plus reserved package slots;
//           pruned tokens are masked out of attention and frozen.
//   infer - each image runs alone and pruned tokens are physically removed.
// For a fixed set of decisions both produce the same kept-token outputs.

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "latprune/autodiff.hpp"
#include "latprune/packaging.hpp"
#include "latprune/params.hpp"
#include "latprune/selector.hpp"

namespace latprune {

struct ArchConfig {
  std::size_t blocks = 12;
  std::size_t embed_dim = 192;  // D_ch
  std::size_t heads = 3;
  std::size_t attn_dim = 192;   // D_attn
  std::size_t fc_dim = 192;     // D_fc; FFN hidden width is 4 * fc_dim
  std::size_t image_size = 224;
  std::size_t patch_size = 16;
  std::size_t in_channels = 3;
  std::size_t num_classes = 1000;
  /// Selector k sits in front of block selector_positions[k] (0-based), i.e.
  /// after that many blocks have run.
  std::vector<std::size_t> selector_positions{3, 6, 9};
  /// Target pruning rate per phase, as a share of the original prunable tokens.
  std::vector<double> target_rates;
  bool use_cls_token = true;
  PackagePolicy package_policy = PackagePolicy::concat_per_phase;
  double gumbel_tau = kDefaultGumbelTau;

  std::size_t patches() const;
  /// Sequence length N: patches plus the class token.
  std::size_t tokens() const;
  std::size_t cls_tokens() const { return use_cls_token ? 1 : 0; }
  /// Reserved package rows in the masked layout.
  std::size_t package_slots() const;

  /// Throws ConfigError on the first violated invariant.
  void validate() const;

  static ArchConfig deit_tiny();
  static ArchConfig deit_small();
  /// Desk-scale model: 8x8 grayscale, 2x2 patches, 3 blocks, C = 16, H = 2.
  static ArchConfig toy();

  friend bool operator==(const ArchConfig&, const ArchConfig&) = default;
};

/// Randomly initialized backbone, head and selector parameters.
ParamStore init_model_params(const ArchConfig& config, std::uint64_t seed);

/// Parameter name prefix of selector k.
std::string selector_prefix(std::size_t k);
bool is_selector_param(const std::string& name);

/// images: [B, H, W, ch] -> tokens [B, N, C] with class token and position embedding.
Var patch_embed(const BoundParams& p, const ArchConfig& config, const Tensor& images);
Tensor patch_embed(const ParamStore& params, const ArchConfig& config, const Tensor& images);

/// Pre-norm multi-head attention sub-block with residual. Masked rows receive
/// no update; masked keys get zero attention weight.
Var msa_forward(const BoundParams& p, const ArchConfig& config, std::size_t block, const Var& x, const Var& mask);
/// Pre-norm FFN sub-block (C -> 4 D_fc -> C, GELU) with residual, masked rows unchanged.
Var ffn_forward(const BoundParams& p, const ArchConfig& config, std::size_t block, const Var& x, const Var& mask);

struct ForwardOptions {
  Phase layout = Phase::infer;
  /// Defaults to sample for train layout and argmax for infer layout.
  std::optional<DecisionMode> decision;
  std::uint64_t seed = 0;
  /// Per selector, [B, patches] over original patch order (mode forced).
  const std::vector<Tensor>* forced = nullptr;
  /// false runs the plain backbone (no selectors, no package slots).
  bool selectors = true;
};

struct ForwardResult {
  Tensor logits;                                 // [B, classes]
  std::vector<KeepDecision> decisions;           // per selector, [B, N], class token protected
  std::vector<std::vector<double>> kept_fraction;  // [phase][image], share of patch tokens kept
  std::vector<std::size_t> final_lengths;        // infer layout: tokens per image after the last block
};

/// Masked (train layout) forward on a tape; the building block for training.
struct GraphForward {
  Var logits;
  /// Per selector, cumulative [B, patches] decision used in the sparsity loss.
  std::vector<Var> patch_decisions;
  ForwardResult summary;
};
GraphForward model_forward_graph(const BoundParams& p, const ArchConfig& config, const Tensor& images,
                                 const ForwardOptions& options);

ForwardResult model_forward(const ArchConfig& config, const ParamStore& params, const Tensor& images,
                            const ForwardOptions& options);

/// Block outputs of the plain backbone on a batch, for similarity diagnostics.
/// Entry l is [B, N, C] after block l.
std::vector<Tensor> block_features(const ArchConfig& config, const ParamStore& params, const Tensor& images);

}  // namespace latprune
