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

// Token packaging: pruned tokens are folded into one package token, weighted
// by their keep probability, instead of being dropped.

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "latprune/autodiff.hpp"
#include "latprune/tensor.hpp"

namespace latprune {

enum class PackagePolicy {
  concat_per_phase,  // one new token per pruning phase
  merge_single,      // a single token, later packages added elementwise
};

std::string to_string(PackagePolicy policy);
PackagePolicy package_policy_from_string(const std::string& s);

struct PackageToken {
  Tensor value;  // [C]
  std::size_t sources = 0;
  std::size_t phase = 0;
};

/// pruned: [Q, C]; scores: [Q, 2] with column 0 the keep probability.
/// Throws ContractError for Q = 0 (caller skips packaging) and
/// DegenerateWeightsError when the keep probabilities sum to zero.
PackageToken build_package(const Tensor& pruned, const Tensor& scores, std::size_t phase = 0);

/// One image's token sequence [N, C] with the rows that hold package tokens.
struct TokenSequence {
  Tensor tokens;
  std::vector<std::size_t> package_rows;

  std::size_t length() const { return tokens.empty() ? 0 : tokens.dim(0); }
};

/// concat_per_phase appends the package as a new row; merge_single adds it into
/// the existing package row, appending one on first use.
TokenSequence attach_package(const TokenSequence& seq, const PackageToken& pkg, PackagePolicy policy);

/// Batched, differentiable packaging for masked execution. Tokens leaving the
/// running mask in this phase (old - new) are averaged with weights
/// (old - new) * keep_prob. Images listed invalid get a zero row.
/// x: [B, N, C]; masks, keep_prob: [B, N]. Returns [B, 1, C].
Var package_tokens(const Var& x, const Var& old_mask, const Var& new_mask, const Var& keep_prob,
                   std::span<const std::uint8_t> valid);

}  // namespace latprune
