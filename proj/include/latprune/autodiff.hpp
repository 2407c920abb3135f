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

// Reverse-mode gradient tape over the dense kernels.
//
// A Tape owns every value produced during one forward pass. Ops append a node
// holding the output and, when recording and some input requires a gradient,
// a closure that pushes the output gradient back to the inputs. backward()
// walks the nodes in reverse insertion order, so each recorded input receives
// its gradient contribution exactly once per consumer.
//
// One tape per step; a tape is not thread safe.

#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <span>
#include <vector>

#include "latprune/kernels.hpp"
#include "latprune/tensor.hpp"

namespace latprune {

class Tape;

/// Handle to a node on a Tape.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  bool valid() const noexcept { return tape_ != nullptr; }
  Tape& tape() const { return *tape_; }
  std::size_t id() const noexcept { return id_; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  using Backward = std::function<void(Tape&, const Tensor& grad_out)>;

  explicit Tape(bool recording = true) : recording_(recording) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const noexcept { return recording_; }

  Var leaf(Tensor value, bool requires_grad);
  Var constant(Tensor value) { return leaf(std::move(value), false); }

  /// Appends an op output. The closure is kept only when recording and some
  /// input requires a gradient.
  Var push(Tensor value, std::span<const Var> inputs, Backward backward);

  const Tensor& value(const Var& v) const { return nodes_[v.id()].value; }
  bool requires_grad(const Var& v) const { return nodes_[v.id()].requires_grad; }

  /// Gradient accumulated at v by the last backward(); zeros if none reached it.
  Tensor grad(const Var& v) const;

  /// Seeds d(out)/d(out) = 1 for a single-element `out` and propagates.
  void backward(const Var& out);

  void accumulate(const Var& v, const Tensor& g);

  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    Backward backward;
  };
  std::deque<Node> nodes_;
  bool recording_;
};

/// Differentiable ops. Shapes follow the underlying kernels.
namespace ad {

Var matmul(const Var& a, const Var& b);
Var transpose_last2(const Var& x);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& x, double c);
Var add_scalar(const Var& x, double c);
Var square(const Var& x);
Var exp(const Var& x);
Var log(const Var& x);

/// x[..., C] + bias[C]
Var add_bias(const Var& x, const Var& bias);
/// x[..., K] * c[..., 1]
Var mul_col(const Var& x, const Var& c);
/// x[..., K] / c[..., 1]
Var div_col(const Var& x, const Var& c);
/// Sum over the trailing axis, keeping it with extent 1.
Var sum_last(const Var& x);
Var sum_all(const Var& x);
Var mean_all(const Var& x);
Var reshape(const Var& x, Shape shape);

Var linear(const Var& x, const Var& weight, const Var& bias);
Var layernorm(const Var& x, const Var& gamma, const Var& beta, double eps = kernels::kLayerNormEps);
Var gelu(const Var& x);
Var sigmoid(const Var& x);
Var softmax_last(const Var& x);
Var log_softmax_last(const Var& x);
Var masked_mean(const Var& x, const Var& mask);

Var slice_last(const Var& x, std::size_t start, std::size_t len);
Var concat_last(std::span<const Var> parts);
/// Slice / concat along axis 1 of [B, N, C] (or [B, N]).
Var slice_tokens(const Var& x, std::size_t start, std::size_t len);
Var concat_tokens(std::span<const Var> parts);
/// [B, 1, C] -> [B, N, C]
Var broadcast_tokens(const Var& x, std::size_t n);
/// x[B, N, C] * m[B, N] per row.
Var row_gate(const Var& x, const Var& m);
/// Replaces row `index` of x[B, N, C] with row[B, 1, C].
Var set_token(const Var& x, std::size_t index, const Var& row);

/// [B, N, H*dh] -> [B*H, N, dh]
Var split_heads(const Var& x, std::size_t heads);
/// [B*H, N, dh] -> [B, N, H*dh]
Var merge_heads(const Var& x, std::size_t heads);

/// Key-masked softmax over the trailing axis of logits[B*H, N, N] with key
/// weights m[B, N]: p_j = m_j e^{l_j} / sum_k m_k e^{l_k}. For a binary mask this
/// equals adding -inf to masked logits; it stays differentiable in m.
Var masked_softmax_keys(const Var& logits, const Var& mask, std::size_t heads);

/// Forward value `hard`, gradient routed unchanged to `soft`.
Var straight_through(Tensor hard, const Var& soft);

/// Per image: sum_n w[b,n] x[b,n,:] / sum_n w[b,n] for images with valid[b],
/// zero row otherwise. x[B, N, C], w[B, N] -> [B, 1, C].
Var weighted_pool(const Var& x, const Var& w, std::span<const std::uint8_t> valid);

/// Mean negative log-likelihood of integer labels under log-probs[B, K].
Var nll(const Var& log_probs, std::span<const int> labels);

}  // namespace ad
}  // namespace latprune
