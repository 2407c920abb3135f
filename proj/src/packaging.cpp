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

#include "latprune/packaging.hpp"

#include "latprune/errors.hpp"

namespace latprune {

std::string to_string(PackagePolicy policy) {
  return policy == PackagePolicy::concat_per_phase ? "concat_per_phase" : "merge_single";
}

PackagePolicy package_policy_from_string(const std::string& s) {
  if (s == "concat_per_phase") return PackagePolicy::concat_per_phase;
  if (s == "merge_single") return PackagePolicy::merge_single;
  throw ConfigError("unknown package policy '" + s + "'");
}

PackageToken build_package(const Tensor& pruned, const Tensor& scores, std::size_t phase) {
  if (pruned.rank() != 2 || scores.rank() != 2 || scores.dim(1) != 2 || scores.dim(0) != pruned.dim(0)) {
    throw DimensionError("build_package expects pruned[Q,C] and scores[Q,2], got " + shape_str(pruned.shape()) +
                         " and " + shape_str(scores.shape()));
  }
  const std::size_t q = pruned.dim(0), c = pruned.dim(1);
  if (q == 0) throw ContractError("build_package: no pruned tokens; skip packaging for this image");
  PackageToken pkg{Tensor({c}), q, phase};
  double wsum = 0.0;
  for (std::size_t i = 0; i < q; ++i) {
    const double w = scores.at(i, 0);
    wsum += w;
    for (std::size_t j = 0; j < c; ++j) pkg.value[j] += w * pruned.at(i, j);
  }
  if (wsum <= 0.0) throw DegenerateWeightsError("build_package: keep probabilities sum to zero");
  for (std::size_t j = 0; j < c; ++j) pkg.value[j] /= wsum;
  return pkg;
}

TokenSequence attach_package(const TokenSequence& seq, const PackageToken& pkg, PackagePolicy policy) {
  const std::size_t c = pkg.value.size();
  if (!seq.tokens.empty() && seq.tokens.dim(1) != c) {
    throw DimensionError("package width " + std::to_string(c) + " does not match sequence " +
                         shape_str(seq.tokens.shape()));
  }
  TokenSequence out = seq;
  if (policy == PackagePolicy::merge_single && !seq.package_rows.empty()) {
    const std::size_t row = seq.package_rows.front();
    for (std::size_t j = 0; j < c; ++j) out.tokens.at(row, j) += pkg.value[j];
    return out;
  }
  const std::size_t n = seq.length();
  std::vector<double> data(seq.tokens.values());
  data.insert(data.end(), pkg.value.values().begin(), pkg.value.values().end());
  out.tokens = Tensor({n + 1, c}, std::move(data));
  out.package_rows.push_back(n);
  return out;
}

Var package_tokens(const Var& x, const Var& old_mask, const Var& new_mask, const Var& keep_prob,
                   std::span<const std::uint8_t> valid) {
  Var weights = ad::mul(ad::sub(old_mask, new_mask), keep_prob);
  return ad::weighted_pool(x, weights, valid);
}

}  // namespace latprune
