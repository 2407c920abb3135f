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

// Multi-head token selector.
//
// Each head scores its channel slice with a local/global MLP and a 2-way
// softmax (keep, prune). A small head-attention branch weights the heads per
// token, and the weighted scores are turned into a binary keep decision with
// Gumbel sampling (training) or argmax (inference).

#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "latprune/autodiff.hpp"
#include "latprune/params.hpp"
#include "latprune/tensor.hpp"

namespace latprune {

inline constexpr double kDefaultGumbelTau = 0.5;

/// Binary keep/prune mask over [batch, tokens]. Protected token indices
/// (class token, package tokens) are always kept.
class KeepDecision {
 public:
  KeepDecision() = default;
  KeepDecision(std::size_t batch, std::size_t tokens, std::vector<std::uint8_t> mask,
               std::vector<std::size_t> protected_tokens = {});

  static KeepDecision all_kept(std::size_t batch, std::size_t tokens, std::vector<std::size_t> protected_tokens = {});
  /// Thresholds a [B, N] tensor at 0.5.
  static KeepDecision from_tensor(const Tensor& mask, std::vector<std::size_t> protected_tokens = {});

  std::size_t batch() const noexcept { return batch_; }
  std::size_t tokens() const noexcept { return tokens_; }
  const std::vector<std::uint8_t>& mask() const noexcept { return mask_; }
  const std::vector<std::size_t>& protected_tokens() const noexcept { return protected_; }
  bool is_protected(std::size_t token) const;

  bool kept(std::size_t b, std::size_t n) const { return mask_[b * tokens_ + n] != 0; }
  /// Kept tokens of image b, protected ones included.
  std::size_t kept_count(std::size_t b) const;
  /// Kept share of the prunable (unprotected) tokens of image b.
  double kept_fraction(std::size_t b) const;
  Tensor as_tensor() const;

  friend bool operator==(const KeepDecision&, const KeepDecision&) = default;

 private:
  std::size_t batch_ = 0;
  std::size_t tokens_ = 0;
  std::vector<std::uint8_t> mask_;
  std::vector<std::size_t> protected_;
};

/// Hadamard update: elementwise product, protected sets united and forced kept.
KeepDecision update_decision(const KeepDecision& old_decision, const KeepDecision& new_decision);

struct SelectorDims {
  std::size_t channels = 0;
  std::size_t heads = 0;
  std::size_t head_dim = 0;        // d = C / H
  std::size_t branch_hidden = 0;   // H / 2, at least 1
};

/// Validates C divisible by H and d divisible by 4 (the scoring MLP halves d twice).
SelectorDims selector_dims(std::size_t channels, std::size_t heads);

void init_selector_params(ParamStore& store, const std::string& prefix, std::size_t channels, std::size_t heads,
                          std::mt19937_64& rng);

/// Channel-contiguous split of [B, N, C] into H tensors of [B, N, C/H].
std::vector<Tensor> split_heads(const Tensor& x, std::size_t heads);
Tensor concat_heads(std::span<const Tensor> parts);

namespace selector_ops {

/// LayerNorm -> Linear(d, d/2) -> GELU on one head slice.
Var local_features(const BoundParams& p, const std::string& prefix, std::size_t head, const Var& x_head);
/// Mean of local features over kept tokens: [B, 1, d/2].
Var global_features(const Var& local, const Var& mask);
/// Linear(d,d/2) -> GELU -> Linear(d/2,d/4) -> GELU -> Linear(d/4,2) -> Softmax.
Var head_token_scores(const BoundParams& p, const std::string& prefix, std::size_t head, const Var& features);
/// Per-head channel means -> Linear(H,H/2) -> GELU -> Linear(H/2,H) -> Sigmoid.
Var head_attention(const BoundParams& p, const std::string& prefix, const Var& x, std::size_t heads);
/// sum_i t_i * a_i / sum_i a_i, per token.
Var aggregate_scores(std::span<const Var> head_scores, const Var& head_weights);

}  // namespace selector_ops

/// Selector scores on plain tensors.
struct TokenScore {
  std::vector<Tensor> per_head;  // H x [B, N, 2]
  Tensor head_weights;           // [B, N, H]
  Tensor aggregate;              // [B, N, 2]
};

TokenScore score_tokens(const ParamStore& params, const std::string& prefix, const Tensor& x, const Tensor& mask,
                        std::size_t heads);

/// Per-head pooled statistic of x[B, N, C]: [B, N, H].
Tensor head_channel_means(const Tensor& x, std::size_t heads);

/// Tensor-level aggregate for tests and tools. Throws DegenerateWeightsError on a
/// zero weight sum.
Tensor aggregate_scores(std::span<const Tensor> head_scores, const Tensor& head_weights);

enum class DecisionMode {
  sample,    // Gumbel noise + hard argmax, straight-through gradient
  argmax,    // deterministic, keep iff p_keep >= p_prune
  soft,      // relaxed keep probability (for gradient checks)
  keep_all,  // selector clamped open
  forced,    // caller-supplied mask
};

/// Gumbel(0, 1) draw from one uniform on (0, 1).
double gumbel_noise(std::mt19937_64& rng);

/// Keep/prune decision from aggregate scores [B, N, 2].
/// train: Gumbel-perturbed log-probabilities, temperature softmax, hard argmax.
/// infer: argmax of the scores; ties keep.
enum class Phase { train, infer };
KeepDecision gumbel_decision(const Tensor& scores, Phase phase, double tau, std::uint64_t seed,
                             std::vector<std::size_t> protected_tokens = {});

struct DecisionOptions {
  DecisionMode mode = DecisionMode::argmax;
  double tau = kDefaultGumbelTau;
  const Tensor* forced = nullptr;  // [B, N] when mode == forced
};

struct SelectorOutput {
  Var scores;    // [B, N, 2]
  Var decision;  // [B, N] new decision D' (hard values except in soft mode)
};

/// Full selector over prunable tokens x[B, N, C] given the running mask [B, N].
/// In hard modes an image whose every currently-kept token would be pruned keeps
/// its highest-scoring one.
SelectorOutput run_selector(const BoundParams& p, const std::string& prefix, const Var& x, const Var& mask,
                            std::size_t heads, const DecisionOptions& options, std::mt19937_64& rng);

}  // namespace latprune
