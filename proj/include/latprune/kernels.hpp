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

// Dense kernels. Each forward has a matching *_backward that maps an output
// gradient to input gradients. All functions are pure.

#pragma once

#include <cstddef>

#include "latprune/tensor.hpp"

namespace latprune::kernels {

inline constexpr double kLayerNormEps = 1e-5;

/// a: [..., m, k]; b: [k, n] (shared) or [..., k, n] with the same leading extents.
Tensor matmul(const Tensor& a, const Tensor& b);

struct MatmulGrads {
  Tensor a;
  Tensor b;
};
MatmulGrads matmul_backward(const Tensor& a, const Tensor& b, const Tensor& grad_out);

/// Swaps the two trailing axes.
Tensor transpose_last2(const Tensor& x);

/// Normalizes over the trailing axis, then applies gamma/beta of that extent.
Tensor layernorm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = kLayerNormEps);

struct LayerNormGrads {
  Tensor x;
  Tensor gamma;
  Tensor beta;
};
LayerNormGrads layernorm_backward(const Tensor& x, const Tensor& gamma, double eps, const Tensor& grad_out);

enum class Activation { gelu, sigmoid };

double gelu(double x);
double gelu_derivative(double x);
double sigmoid(double x);

Tensor activation(const Tensor& x, Activation kind);
Tensor activation_backward(const Tensor& x, Activation kind, const Tensor& grad_out);

/// Softmax along `axis`, max-subtracted.
Tensor softmax(const Tensor& x, std::size_t axis);
/// Takes the softmax output y, not the input.
Tensor softmax_backward(const Tensor& y, std::size_t axis, const Tensor& grad_out);

/// x: [B, N, C], mask: [B, N] nonnegative weights (binary for hard decisions).
/// Returns [B, 1, C] with sum_n mask[b,n] x[b,n,:] / sum_n mask[b,n].
/// Throws EmptyPoolError when an image has zero total mask.
Tensor masked_mean(const Tensor& x, const Tensor& mask);

struct MaskedMeanGrads {
  Tensor x;
  Tensor mask;
};
MaskedMeanGrads masked_mean_backward(const Tensor& x, const Tensor& mask, const Tensor& grad_out);

}  // namespace latprune::kernels
