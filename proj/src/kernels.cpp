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

#include "latprune/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "latprune/errors.hpp"

namespace latprune::kernels {
namespace {

struct MatmulDims {
  std::size_t batch = 1;
  std::size_t m = 0, k = 0, n = 0;
  bool shared_b = false;
};

MatmulDims matmul_dims(const Tensor& a, const Tensor& b) {
  if (a.rank() < 2 || b.rank() < 2) {
    throw DimensionError("matmul needs rank >= 2 operands, got " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
  }
  MatmulDims d;
  d.m = a.shape()[a.rank() - 2];
  d.k = a.shape()[a.rank() - 1];
  d.n = b.shape()[b.rank() - 1];
  const std::size_t bk = b.shape()[b.rank() - 2];
  if (bk != d.k) {
    throw DimensionError("matmul inner extents differ: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  d.batch = a.size() / (d.m * d.k == 0 ? 1 : d.m * d.k);
  if (b.rank() == 2) {
    d.shared_b = true;
  } else {
    if (b.rank() != a.rank() || !std::equal(a.shape().begin(), a.shape().end() - 2, b.shape().begin())) {
      throw DimensionError("matmul batch extents differ: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    }
  }
  return d;
}

// out[m,n] += a[m,k] * b[k,n]
void gemm_nn(const double* a, const double* b, double* out, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* orow = out + i * n;
    const double* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
}

// out[m,k] += g[m,n] * b[k,n]^T
void gemm_nt(const double* g, const double* b, double* out, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* grow = g + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double* brow = b + p * n;
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += grow[j] * brow[j];
      out[i * k + p] += s;
    }
  }
}

// out[k,n] += a[m,k]^T * g[m,n]
void gemm_tn(const double* a, const double* g, double* out, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    const double* grow = g + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      double* orow = out + p * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * grow[j];
    }
  }
}

struct AxisView {
  std::size_t outer = 1, len = 1, inner = 1;
};

AxisView axis_view(const Shape& shape, std::size_t axis) {
  if (axis >= shape.size()) throw DimensionError("softmax axis out of range for " + shape_str(shape));
  AxisView v;
  for (std::size_t i = 0; i < axis; ++i) v.outer *= shape[i];
  v.len = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) v.inner *= shape[i];
  return v;
}

void check_masked_mean_shapes(const Tensor& x, const Tensor& mask) {
  if (x.rank() != 3 || mask.rank() != 2 || mask.dim(0) != x.dim(0) || mask.dim(1) != x.dim(1)) {
    throw DimensionError("masked_mean expects x[B,N,C] and mask[B,N], got " + shape_str(x.shape()) + " and " +
                         shape_str(mask.shape()));
  }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  const MatmulDims d = matmul_dims(a, b);
  Shape out_shape(a.shape().begin(), a.shape().end() - 1);
  out_shape.push_back(d.n);
  Tensor out(out_shape);
  for (std::size_t t = 0; t < d.batch; ++t) {
    const double* bp = b.data().data() + (d.shared_b ? 0 : t * d.k * d.n);
    gemm_nn(a.data().data() + t * d.m * d.k, bp, out.data().data() + t * d.m * d.n, d.m, d.k, d.n);
  }
  return out;
}

MatmulGrads matmul_backward(const Tensor& a, const Tensor& b, const Tensor& grad_out) {
  const MatmulDims d = matmul_dims(a, b);
  MatmulGrads g{Tensor(a.shape()), Tensor(b.shape())};
  for (std::size_t t = 0; t < d.batch; ++t) {
    const std::size_t boff = d.shared_b ? 0 : t * d.k * d.n;
    const double* gy = grad_out.data().data() + t * d.m * d.n;
    gemm_nt(gy, b.data().data() + boff, g.a.data().data() + t * d.m * d.k, d.m, d.k, d.n);
    gemm_tn(a.data().data() + t * d.m * d.k, gy, g.b.data().data() + boff, d.m, d.k, d.n);
  }
  return g;
}

Tensor transpose_last2(const Tensor& x) {
  if (x.rank() < 2) throw DimensionError("transpose needs rank >= 2");
  const std::size_t m = x.shape()[x.rank() - 2];
  const std::size_t n = x.shape()[x.rank() - 1];
  Shape s = x.shape();
  std::swap(s[s.size() - 1], s[s.size() - 2]);
  Tensor out(s);
  const std::size_t batch = x.size() / std::max<std::size_t>(1, m * n);
  for (std::size_t t = 0; t < batch; ++t) {
    const double* src = x.data().data() + t * m * n;
    double* dst = out.data().data() + t * m * n;
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) dst[j * m + i] = src[i * n + j];
  }
  return out;
}

Tensor layernorm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  if (x.rank() == 0) throw DimensionError("layernorm on rank-0 tensor");
  const std::size_t c = x.shape().back();
  if (gamma.size() != c || beta.size() != c) {
    throw DimensionError("layernorm affine extent " + std::to_string(gamma.size()) + " does not match channels " +
                         std::to_string(c));
  }
  if (!(eps > 0.0)) throw ConfigError("layernorm eps must be positive");
  Tensor out(x.shape());
  const std::size_t rows = c ? x.size() / c : 0;
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x.data().data() + r * c;
    double* yr = out.data().data() + r * c;
    double mean = 0.0;
    for (std::size_t j = 0; j < c; ++j) mean += xr[j];
    mean /= static_cast<double>(c);
    double var = 0.0;
    for (std::size_t j = 0; j < c; ++j) var += (xr[j] - mean) * (xr[j] - mean);
    var /= static_cast<double>(c);
    const double inv = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < c; ++j) yr[j] = (xr[j] - mean) * inv * gamma[j] + beta[j];
  }
  return out;
}

LayerNormGrads layernorm_backward(const Tensor& x, const Tensor& gamma, double eps, const Tensor& grad_out) {
  const std::size_t c = x.shape().back();
  LayerNormGrads g{Tensor(x.shape()), Tensor({c}), Tensor({c})};
  const std::size_t rows = c ? x.size() / c : 0;
  std::vector<double> xhat(c);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x.data().data() + r * c;
    const double* gy = grad_out.data().data() + r * c;
    double* gx = g.x.data().data() + r * c;
    double mean = 0.0;
    for (std::size_t j = 0; j < c; ++j) mean += xr[j];
    mean /= static_cast<double>(c);
    double var = 0.0;
    for (std::size_t j = 0; j < c; ++j) var += (xr[j] - mean) * (xr[j] - mean);
    var /= static_cast<double>(c);
    const double inv = 1.0 / std::sqrt(var + eps);
    double sum_gxhat = 0.0, sum_gxhat_xhat = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      xhat[j] = (xr[j] - mean) * inv;
      const double gxhat = gy[j] * gamma[j];
      sum_gxhat += gxhat;
      sum_gxhat_xhat += gxhat * xhat[j];
      g.gamma[j] += gy[j] * xhat[j];
      g.beta[j] += gy[j];
    }
    const double cn = static_cast<double>(c);
    for (std::size_t j = 0; j < c; ++j) {
      const double gxhat = gy[j] * gamma[j];
      gx[j] = inv * (gxhat - sum_gxhat / cn - xhat[j] * sum_gxhat_xhat / cn);
    }
  }
  return g;
}

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); }

double gelu_derivative(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return cdf + x * pdf;
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Tensor activation(const Tensor& x, Activation kind) {
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = kind == Activation::gelu ? gelu(x[i]) : sigmoid(x[i]);
  return out;
}

Tensor activation_backward(const Tensor& x, Activation kind, const Tensor& grad_out) {
  Tensor g(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    double d;
    if (kind == Activation::gelu) {
      d = gelu_derivative(x[i]);
    } else {
      const double s = sigmoid(x[i]);
      d = s * (1.0 - s);
    }
    g[i] = grad_out[i] * d;
  }
  return g;
}

Tensor softmax(const Tensor& x, std::size_t axis) {
  const AxisView v = axis_view(x.shape(), axis);
  Tensor out(x.shape());
  for (std::size_t o = 0; o < v.outer; ++o) {
    for (std::size_t in = 0; in < v.inner; ++in) {
      const std::size_t base = o * v.len * v.inner + in;
      double mx = -INFINITY;
      for (std::size_t j = 0; j < v.len; ++j) mx = std::max(mx, x[base + j * v.inner]);
      double sum = 0.0;
      for (std::size_t j = 0; j < v.len; ++j) {
        const double e = std::exp(x[base + j * v.inner] - mx);
        out[base + j * v.inner] = e;
        sum += e;
      }
      for (std::size_t j = 0; j < v.len; ++j) out[base + j * v.inner] /= sum;
    }
  }
  return out;
}

Tensor softmax_backward(const Tensor& y, std::size_t axis, const Tensor& grad_out) {
  const AxisView v = axis_view(y.shape(), axis);
  Tensor g(y.shape());
  for (std::size_t o = 0; o < v.outer; ++o) {
    for (std::size_t in = 0; in < v.inner; ++in) {
      const std::size_t base = o * v.len * v.inner + in;
      double dot = 0.0;
      for (std::size_t j = 0; j < v.len; ++j) dot += y[base + j * v.inner] * grad_out[base + j * v.inner];
      for (std::size_t j = 0; j < v.len; ++j) {
        const std::size_t idx = base + j * v.inner;
        g[idx] = y[idx] * (grad_out[idx] - dot);
      }
    }
  }
  return g;
}

Tensor masked_mean(const Tensor& x, const Tensor& mask) {
  check_masked_mean_shapes(x, mask);
  const std::size_t B = x.dim(0), N = x.dim(1), C = x.dim(2);
  Tensor out({B, 1, C});
  for (std::size_t b = 0; b < B; ++b) {
    double wsum = 0.0;
    for (std::size_t n = 0; n < N; ++n) wsum += mask.at(b, n);
    if (!(wsum > 0.0)) throw EmptyPoolError("masked_mean: image " + std::to_string(b) + " has no kept tokens");
    for (std::size_t n = 0; n < N; ++n) {
      const double w = mask.at(b, n);
      if (w == 0.0) continue;
      for (std::size_t c = 0; c < C; ++c) out.at(b, 0, c) += w * x.at(b, n, c);
    }
    for (std::size_t c = 0; c < C; ++c) out.at(b, 0, c) /= wsum;
  }
  return out;
}

MaskedMeanGrads masked_mean_backward(const Tensor& x, const Tensor& mask, const Tensor& grad_out) {
  check_masked_mean_shapes(x, mask);
  const std::size_t B = x.dim(0), N = x.dim(1), C = x.dim(2);
  const Tensor y = masked_mean(x, mask);
  MaskedMeanGrads g{Tensor(x.shape()), Tensor(mask.shape())};
  for (std::size_t b = 0; b < B; ++b) {
    double wsum = 0.0;
    for (std::size_t n = 0; n < N; ++n) wsum += mask.at(b, n);
    for (std::size_t n = 0; n < N; ++n) {
      const double w = mask.at(b, n);
      double gm = 0.0;
      for (std::size_t c = 0; c < C; ++c) {
        const double gy = grad_out.at(b, 0, c);
        g.x.at(b, n, c) = gy * w / wsum;
        gm += gy * (x.at(b, n, c) - y.at(b, 0, c));
      }
      g.mask.at(b, n) = gm / wsum;
    }
  }
  return g;
}

}  // namespace latprune::kernels
