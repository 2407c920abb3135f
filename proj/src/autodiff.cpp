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

#include "latprune/autodiff.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "latprune/errors.hpp"

namespace latprune {

const Tensor& Var::value() const { return tape_->value(*this); }

Var Tape::leaf(Tensor value, bool requires_grad) {
  nodes_.push_back(Node{std::move(value), Tensor{}, requires_grad && recording_, nullptr});
  return Var(this, nodes_.size() - 1);
}

Var Tape::push(Tensor value, std::span<const Var> inputs, Backward backward) {
  bool needs = false;
  if (recording_) {
    for (const Var& in : inputs) needs = needs || nodes_[in.id()].requires_grad;
  }
  nodes_.push_back(Node{std::move(value), Tensor{}, needs, needs ? std::move(backward) : nullptr});
  return Var(this, nodes_.size() - 1);
}

Tensor Tape::grad(const Var& v) const {
  const Node& n = nodes_[v.id()];
  if (n.grad.empty()) return Tensor(n.value.shape());
  return n.grad;
}

void Tape::accumulate(const Var& v, const Tensor& g) {
  Node& n = nodes_[v.id()];
  if (!n.requires_grad) return;
  if (g.shape() != n.value.shape()) {
    throw DimensionError("gradient shape " + shape_str(g.shape()) + " does not match value " +
                         shape_str(n.value.shape()));
  }
  if (n.grad.empty()) {
    n.grad = g;
    return;
  }
  for (std::size_t i = 0; i < g.size(); ++i) n.grad[i] += g[i];
}

void Tape::backward(const Var& out) {
  if (value(out).size() != 1) {
    throw ContractError("backward requires a single-element output, got " + shape_str(value(out).shape()));
  }
  for (auto& n : nodes_) n.grad = Tensor{};
  if (!nodes_[out.id()].requires_grad) return;
  nodes_[out.id()].grad = Tensor(value(out).shape(), 1.0);
  for (std::size_t i = out.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.backward || n.grad.empty()) continue;
    // Copy: the closure may append to other nodes' grads but never to its own.
    const Tensor g = n.grad;
    n.backward(*this, g);
  }
}

namespace ad {
namespace {

void require_same(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + " shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

template <typename F>
Tensor map(const Tensor& x, F f) {
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i]);
  return out;
}

std::size_t last_dim(const Var& x) {
  if (x.shape().empty()) throw DimensionError("rank-0 tensor");
  return x.shape().back();
}

void require_col(const Var& x, const Var& c, const char* op) {
  const Shape& xs = x.shape();
  const Shape& cs = c.shape();
  if (xs.size() != cs.size() || cs.back() != 1 || !std::equal(xs.begin(), xs.end() - 1, cs.begin())) {
    throw DimensionError(std::string(op) + " expects column shape matching " + shape_str(xs) + ", got " +
                         shape_str(cs));
  }
}

}  // namespace

Var matmul(const Var& a, const Var& b) {
  Tape& t = a.tape();
  const std::array in{a, b};
  return t.push(kernels::matmul(a.value(), b.value()), in, [a, b](Tape& tp, const Tensor& g) {
    auto gr = kernels::matmul_backward(a.value(), b.value(), g);
    tp.accumulate(a, gr.a);
    tp.accumulate(b, gr.b);
  });
}

Var transpose_last2(const Var& x) {
  const std::array in{x};
  return x.tape().push(kernels::transpose_last2(x.value()), in,
                       [x](Tape& tp, const Tensor& g) { tp.accumulate(x, kernels::transpose_last2(g)); });
}

Var add(const Var& a, const Var& b) {
  require_same(a, b, "add");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  const std::array in{a, b};
  return a.tape().push(std::move(out), in, [a, b](Tape& tp, const Tensor& g) {
    tp.accumulate(a, g);
    tp.accumulate(b, g);
  });
}

Var sub(const Var& a, const Var& b) {
  require_same(a, b, "sub");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  const std::array in{a, b};
  return a.tape().push(std::move(out), in, [a, b](Tape& tp, const Tensor& g) {
    tp.accumulate(a, g);
    tp.accumulate(b, map(g, [](double v) { return -v; }));
  });
}

Var mul(const Var& a, const Var& b) {
  require_same(a, b, "mul");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  const std::array in{a, b};
  return a.tape().push(std::move(out), in, [a, b](Tape& tp, const Tensor& g) {
    Tensor ga(g.shape()), gb(g.shape());
    for (std::size_t i = 0; i < g.size(); ++i) {
      ga[i] = g[i] * b.value()[i];
      gb[i] = g[i] * a.value()[i];
    }
    tp.accumulate(a, ga);
    tp.accumulate(b, gb);
  });
}

Var scale(const Var& x, double c) {
  const std::array in{x};
  return x.tape().push(map(x.value(), [c](double v) { return v * c; }), in, [x, c](Tape& tp, const Tensor& g) {
    tp.accumulate(x, map(g, [c](double v) { return v * c; }));
  });
}

Var add_scalar(const Var& x, double c) {
  const std::array in{x};
  return x.tape().push(map(x.value(), [c](double v) { return v + c; }), in,
                       [x](Tape& tp, const Tensor& g) { tp.accumulate(x, g); });
}

Var square(const Var& x) { return mul(x, x); }

Var exp(const Var& x) {
  Tensor y = map(x.value(), [](double v) { return std::exp(v); });
  const std::array in{x};
  Tensor yc = y;
  return x.tape().push(std::move(y), in, [x, yc](Tape& tp, const Tensor& g) {
    Tensor gx(g.shape());
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] = g[i] * yc[i];
    tp.accumulate(x, gx);
  });
}

Var log(const Var& x) {
  const std::array in{x};
  return x.tape().push(map(x.value(), [](double v) { return std::log(v); }), in, [x](Tape& tp, const Tensor& g) {
    Tensor gx(g.shape());
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] = g[i] / x.value()[i];
    tp.accumulate(x, gx);
  });
}

Var add_bias(const Var& x, const Var& bias) {
  const std::size_t c = last_dim(x);
  if (bias.value().size() != c) {
    throw DimensionError("bias extent " + std::to_string(bias.value().size()) + " does not match " +
                         shape_str(x.shape()));
  }
  Tensor out = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bias.value()[i % c];
  const std::array in{x, bias};
  return x.tape().push(std::move(out), in, [x, bias, c](Tape& tp, const Tensor& g) {
    tp.accumulate(x, g);
    Tensor gb(bias.shape());
    for (std::size_t i = 0; i < g.size(); ++i) gb[i % c] += g[i];
    tp.accumulate(bias, gb);
  });
}

Var mul_col(const Var& x, const Var& c) {
  require_col(x, c, "mul_col");
  const std::size_t k = last_dim(x);
  Tensor out = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= c.value()[i / k];
  const std::array in{x, c};
  return x.tape().push(std::move(out), in, [x, c, k](Tape& tp, const Tensor& g) {
    Tensor gx(g.shape()), gc(c.shape());
    for (std::size_t i = 0; i < g.size(); ++i) {
      gx[i] = g[i] * c.value()[i / k];
      gc[i / k] += g[i] * x.value()[i];
    }
    tp.accumulate(x, gx);
    tp.accumulate(c, gc);
  });
}

Var div_col(const Var& x, const Var& c) {
  require_col(x, c, "div_col");
  const std::size_t k = last_dim(x);
  Tensor out = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] /= c.value()[i / k];
  const std::array in{x, c};
  return x.tape().push(std::move(out), in, [x, c, k](Tape& tp, const Tensor& g) {
    Tensor gx(g.shape()), gc(c.shape());
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double cv = c.value()[i / k];
      gx[i] = g[i] / cv;
      gc[i / k] -= g[i] * x.value()[i] / (cv * cv);
    }
    tp.accumulate(x, gx);
    tp.accumulate(c, gc);
  });
}

Var sum_last(const Var& x) {
  const std::size_t k = last_dim(x);
  Shape s = x.shape();
  s.back() = 1;
  Tensor out(s);
  for (std::size_t i = 0; i < x.value().size(); ++i) out[i / k] += x.value()[i];
  const std::array in{x};
  return x.tape().push(std::move(out), in, [x, k](Tape& tp, const Tensor& g) {
    Tensor gx(x.shape());
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] = g[i / k];
    tp.accumulate(x, gx);
  });
}

Var sum_all(const Var& x) {
  double s = 0.0;
  for (double v : x.value().data()) s += v;
  const std::array in{x};
  return x.tape().push(Tensor::scalar(s), in,
                       [x](Tape& tp, const Tensor& g) { tp.accumulate(x, Tensor(x.shape(), g[0])); });
}

Var mean_all(const Var& x) { return scale(sum_all(x), 1.0 / static_cast<double>(x.value().size())); }

Var reshape(const Var& x, Shape shape) {
  const std::array in{x};
  return x.tape().push(x.value().reshaped(std::move(shape)), in,
                       [x](Tape& tp, const Tensor& g) { tp.accumulate(x, g.reshaped(x.shape())); });
}

Var linear(const Var& x, const Var& weight, const Var& bias) { return add_bias(matmul(x, weight), bias); }

Var layernorm(const Var& x, const Var& gamma, const Var& beta, double eps) {
  const std::array in{x, gamma, beta};
  return x.tape().push(kernels::layernorm(x.value(), gamma.value(), beta.value(), eps), in,
                       [x, gamma, beta, eps](Tape& tp, const Tensor& g) {
                         auto gr = kernels::layernorm_backward(x.value(), gamma.value(), eps, g);
                         tp.accumulate(x, gr.x);
                         tp.accumulate(gamma, gr.gamma.reshaped(gamma.shape()));
                         tp.accumulate(beta, gr.beta.reshaped(beta.shape()));
                       });
}

Var gelu(const Var& x) {
  const std::array in{x};
  return x.tape().push(kernels::activation(x.value(), kernels::Activation::gelu), in,
                       [x](Tape& tp, const Tensor& g) {
                         tp.accumulate(x, kernels::activation_backward(x.value(), kernels::Activation::gelu, g));
                       });
}

Var sigmoid(const Var& x) {
  const std::array in{x};
  return x.tape().push(kernels::activation(x.value(), kernels::Activation::sigmoid), in,
                       [x](Tape& tp, const Tensor& g) {
                         tp.accumulate(x, kernels::activation_backward(x.value(), kernels::Activation::sigmoid, g));
                       });
}

Var softmax_last(const Var& x) {
  const std::size_t axis = x.shape().size() - 1;
  Tensor y = kernels::softmax(x.value(), axis);
  Tensor yc = y;
  const std::array in{x};
  return x.tape().push(std::move(y), in, [x, yc, axis](Tape& tp, const Tensor& g) {
    tp.accumulate(x, kernels::softmax_backward(yc, axis, g));
  });
}

Var log_softmax_last(const Var& x) {
  const std::size_t k = last_dim(x);
  const std::size_t rows = x.value().size() / k;
  Tensor y(x.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x.value().data().data() + r * k;
    double mx = -INFINITY;
    for (std::size_t j = 0; j < k; ++j) mx = std::max(mx, xr[j]);
    double s = 0.0;
    for (std::size_t j = 0; j < k; ++j) s += std::exp(xr[j] - mx);
    const double lse = mx + std::log(s);
    for (std::size_t j = 0; j < k; ++j) y[r * k + j] = xr[j] - lse;
  }
  Tensor yc = y;
  const std::array in{x};
  return x.tape().push(std::move(y), in, [x, yc, k, rows](Tape& tp, const Tensor& g) {
    Tensor gx(g.shape());
    for (std::size_t r = 0; r < rows; ++r) {
      double gs = 0.0;
      for (std::size_t j = 0; j < k; ++j) gs += g[r * k + j];
      for (std::size_t j = 0; j < k; ++j) gx[r * k + j] = g[r * k + j] - std::exp(yc[r * k + j]) * gs;
    }
    tp.accumulate(x, gx);
  });
}

Var masked_mean(const Var& x, const Var& mask) {
  const std::array in{x, mask};
  return x.tape().push(kernels::masked_mean(x.value(), mask.value()), in, [x, mask](Tape& tp, const Tensor& g) {
    auto gr = kernels::masked_mean_backward(x.value(), mask.value(), g);
    tp.accumulate(x, gr.x);
    tp.accumulate(mask, gr.mask);
  });
}

Var slice_last(const Var& x, std::size_t start, std::size_t len) {
  const std::size_t k = last_dim(x);
  if (start + len > k) throw DimensionError("slice_last out of range for " + shape_str(x.shape()));
  Shape s = x.shape();
  s.back() = len;
  Tensor out(s);
  const std::size_t rows = x.value().size() / k;
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < len; ++j) out[r * len + j] = x.value()[r * k + start + j];
  const std::array in{x};
  return x.tape().push(std::move(out), in, [x, start, len, k, rows](Tape& tp, const Tensor& g) {
    Tensor gx(x.shape());
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < len; ++j) gx[r * k + start + j] = g[r * len + j];
    tp.accumulate(x, gx);
  });
}

Var concat_last(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_last of nothing");
  Shape s = parts[0].shape();
  std::size_t total = 0;
  std::vector<std::size_t> widths;
  for (const Var& p : parts) {
    const Shape& ps = p.shape();
    if (ps.size() != s.size() || !std::equal(ps.begin(), ps.end() - 1, s.begin())) {
      throw DimensionError("concat_last leading extents differ: " + shape_str(ps) + " vs " + shape_str(s));
    }
    widths.push_back(ps.back());
    total += ps.back();
  }
  s.back() = total;
  Tensor out(s);
  const std::size_t rows = out.size() / std::max<std::size_t>(1, total);
  std::size_t off = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const Tensor& v = parts[p].value();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < widths[p]; ++j) out[r * total + off + j] = v[r * widths[p] + j];
    off += widths[p];
  }
  std::vector<Var> keep(parts.begin(), parts.end());
  return parts[0].tape().push(std::move(out), parts, [keep, widths, total, rows](Tape& tp, const Tensor& g) {
    std::size_t off = 0;
    for (std::size_t p = 0; p < keep.size(); ++p) {
      Tensor gp(keep[p].shape());
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < widths[p]; ++j) gp[r * widths[p] + j] = g[r * total + off + j];
      tp.accumulate(keep[p], gp);
      off += widths[p];
    }
  });
}

namespace {

// Views x as [B, N, inner] for token-axis ops on [B, N] or [B, N, C].
struct TokenView {
  std::size_t batch, tokens, inner;
};

TokenView token_view(const Var& x) {
  const Shape& s = x.shape();
  if (s.size() < 2) throw DimensionError("token op needs rank >= 2, got " + shape_str(s));
  TokenView v{s[0], s[1], 1};
  for (std::size_t i = 2; i < s.size(); ++i) v.inner *= s[i];
  return v;
}

}  // namespace

Var slice_tokens(const Var& x, std::size_t start, std::size_t len) {
  const TokenView v = token_view(x);
  if (start + len > v.tokens) throw DimensionError("slice_tokens out of range for " + shape_str(x.shape()));
  Shape s = x.shape();
  s[1] = len;
  Tensor out(s);
  for (std::size_t b = 0; b < v.batch; ++b)
    for (std::size_t n = 0; n < len; ++n)
      for (std::size_t c = 0; c < v.inner; ++c)
        out[(b * len + n) * v.inner + c] = x.value()[(b * v.tokens + start + n) * v.inner + c];
  const std::array in{x};
  return x.tape().push(std::move(out), in, [x, v, start, len](Tape& tp, const Tensor& g) {
    Tensor gx(x.shape());
    for (std::size_t b = 0; b < v.batch; ++b)
      for (std::size_t n = 0; n < len; ++n)
        for (std::size_t c = 0; c < v.inner; ++c)
          gx[(b * v.tokens + start + n) * v.inner + c] = g[(b * len + n) * v.inner + c];
    tp.accumulate(x, gx);
  });
}

Var concat_tokens(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_tokens of nothing");
  const TokenView v0 = token_view(parts[0]);
  std::vector<std::size_t> lens;
  std::size_t total = 0;
  for (const Var& p : parts) {
    const TokenView v = token_view(p);
    if (v.batch != v0.batch || v.inner != v0.inner || p.shape().size() != parts[0].shape().size()) {
      throw DimensionError("concat_tokens extents differ: " + shape_str(p.shape()) + " vs " +
                           shape_str(parts[0].shape()));
    }
    lens.push_back(v.tokens);
    total += v.tokens;
  }
  Shape s = parts[0].shape();
  s[1] = total;
  Tensor out(s);
  const std::size_t inner = v0.inner, batch = v0.batch;
  std::size_t off = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const Tensor& pv = parts[p].value();
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t n = 0; n < lens[p]; ++n)
        for (std::size_t c = 0; c < inner; ++c)
          out[(b * total + off + n) * inner + c] = pv[(b * lens[p] + n) * inner + c];
    off += lens[p];
  }
  std::vector<Var> keep(parts.begin(), parts.end());
  return parts[0].tape().push(std::move(out), parts, [keep, lens, total, inner, batch](Tape& tp, const Tensor& g) {
    std::size_t off = 0;
    for (std::size_t p = 0; p < keep.size(); ++p) {
      Tensor gp(keep[p].shape());
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t n = 0; n < lens[p]; ++n)
          for (std::size_t c = 0; c < inner; ++c)
            gp[(b * lens[p] + n) * inner + c] = g[(b * total + off + n) * inner + c];
      tp.accumulate(keep[p], gp);
      off += lens[p];
    }
  });
}

Var broadcast_tokens(const Var& x, std::size_t n) {
  const TokenView v = token_view(x);
  if (v.tokens != 1) throw DimensionError("broadcast_tokens expects a single token, got " + shape_str(x.shape()));
  Shape s = x.shape();
  s[1] = n;
  Tensor out(s);
  for (std::size_t b = 0; b < v.batch; ++b)
    for (std::size_t t = 0; t < n; ++t)
      for (std::size_t c = 0; c < v.inner; ++c) out[(b * n + t) * v.inner + c] = x.value()[b * v.inner + c];
  const std::array in{x};
  return x.tape().push(std::move(out), in, [x, v, n](Tape& tp, const Tensor& g) {
    Tensor gx(x.shape());
    for (std::size_t b = 0; b < v.batch; ++b)
      for (std::size_t t = 0; t < n; ++t)
        for (std::size_t c = 0; c < v.inner; ++c) gx[b * v.inner + c] += g[(b * n + t) * v.inner + c];
    tp.accumulate(x, gx);
  });
}

Var row_gate(const Var& x, const Var& m) {
  const TokenView v = token_view(x);
  if (m.shape() != Shape{v.batch, v.tokens}) {
    throw DimensionError("row_gate mask " + shape_str(m.shape()) + " does not cover " + shape_str(x.shape()));
  }
  Tensor out = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= m.value()[i / v.inner];
  const std::array in{x, m};
  return x.tape().push(std::move(out), in, [x, m, v](Tape& tp, const Tensor& g) {
    Tensor gx(x.shape()), gm(m.shape());
    for (std::size_t i = 0; i < g.size(); ++i) {
      gx[i] = g[i] * m.value()[i / v.inner];
      gm[i / v.inner] += g[i] * x.value()[i];
    }
    tp.accumulate(x, gx);
    tp.accumulate(m, gm);
  });
}

Var set_token(const Var& x, std::size_t index, const Var& row) {
  const TokenView v = token_view(x);
  const TokenView r = token_view(row);
  if (index >= v.tokens || r.tokens != 1 || r.batch != v.batch || r.inner != v.inner) {
    throw DimensionError("set_token row " + shape_str(row.shape()) + " does not fit " + shape_str(x.shape()));
  }
  Tensor out = x.value();
  for (std::size_t b = 0; b < v.batch; ++b)
    for (std::size_t c = 0; c < v.inner; ++c) out[(b * v.tokens + index) * v.inner + c] = row.value()[b * v.inner + c];
  const std::array in{x, row};
  return x.tape().push(std::move(out), in, [x, row, v, index](Tape& tp, const Tensor& g) {
    Tensor gx = g;
    Tensor gr(row.shape());
    for (std::size_t b = 0; b < v.batch; ++b)
      for (std::size_t c = 0; c < v.inner; ++c) {
        const std::size_t i = (b * v.tokens + index) * v.inner + c;
        gr[b * v.inner + c] = g[i];
        gx[i] = 0.0;
      }
    tp.accumulate(x, gx);
    tp.accumulate(row, gr);
  });
}

Var split_heads(const Var& x, std::size_t heads) {
  const Shape& s = x.shape();
  if (s.size() != 3 || heads == 0 || s[2] % heads != 0) {
    throw DimensionError("split_heads cannot split " + shape_str(s) + " into " + std::to_string(heads));
  }
  const std::size_t B = s[0], N = s[1], C = s[2], dh = C / heads;
  Tensor out({B * heads, N, dh});
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t h = 0; h < heads; ++h)
        for (std::size_t j = 0; j < dh; ++j)
          out[((b * heads + h) * N + n) * dh + j] = x.value()[(b * N + n) * C + h * dh + j];
  const std::array in{x};
  return x.tape().push(std::move(out), in, [x, B, N, C, dh, heads](Tape& tp, const Tensor& g) {
    Tensor gx(x.shape());
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t n = 0; n < N; ++n)
        for (std::size_t h = 0; h < heads; ++h)
          for (std::size_t j = 0; j < dh; ++j)
            gx[(b * N + n) * C + h * dh + j] = g[((b * heads + h) * N + n) * dh + j];
    tp.accumulate(x, gx);
  });
}

Var merge_heads(const Var& x, std::size_t heads) {
  const Shape& s = x.shape();
  if (s.size() != 3 || heads == 0 || s[0] % heads != 0) {
    throw DimensionError("merge_heads cannot merge " + shape_str(s) + " over " + std::to_string(heads));
  }
  const std::size_t B = s[0] / heads, N = s[1], dh = s[2], C = dh * heads;
  Tensor out({B, N, C});
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t h = 0; h < heads; ++h)
        for (std::size_t j = 0; j < dh; ++j)
          out[(b * N + n) * C + h * dh + j] = x.value()[((b * heads + h) * N + n) * dh + j];
  const std::array in{x};
  return x.tape().push(std::move(out), in, [x, B, N, C, dh, heads](Tape& tp, const Tensor& g) {
    Tensor gx(x.shape());
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t n = 0; n < N; ++n)
        for (std::size_t h = 0; h < heads; ++h)
          for (std::size_t j = 0; j < dh; ++j)
            gx[((b * heads + h) * N + n) * dh + j] = g[(b * N + n) * C + h * dh + j];
    tp.accumulate(x, gx);
  });
}

Var masked_softmax_keys(const Var& logits, const Var& mask, std::size_t heads) {
  const Shape& s = logits.shape();
  if (s.size() != 3 || s[1] != s[2] || heads == 0 || s[0] % heads != 0) {
    throw DimensionError("masked_softmax_keys expects [B*H,N,N], got " + shape_str(s));
  }
  const std::size_t BH = s[0], N = s[1], B = BH / heads;
  if (mask.shape() != Shape{B, N}) {
    throw DimensionError("attention mask " + shape_str(mask.shape()) + " does not cover " + shape_str(s));
  }
  const Tensor& l = logits.value();
  const Tensor& m = mask.value();
  Tensor p(s);
  // Row normalizers, kept for the backward pass: max over kept keys and sum.
  Tensor row_max({BH, N}), row_sum({BH, N});
  for (std::size_t bh = 0; bh < BH; ++bh) {
    const std::size_t b = bh / heads;
    for (std::size_t i = 0; i < N; ++i) {
      const double* lr = l.data().data() + (bh * N + i) * N;
      double mx = -INFINITY;
      bool any = false;
      for (std::size_t j = 0; j < N; ++j) {
        if (m.at(b, j) <= 0.0) continue;
        mx = any ? std::max(mx, lr[j]) : lr[j];
        any = true;
      }
      if (!any) throw EmptyPoolError("attention row has no kept keys");
      double z = 0.0;
      double* pr = p.data().data() + (bh * N + i) * N;
      for (std::size_t j = 0; j < N; ++j) {
        const double w = m.at(b, j);
        pr[j] = w > 0.0 ? w * std::exp(lr[j] - mx) : 0.0;
        z += pr[j];
      }
      for (std::size_t j = 0; j < N; ++j) pr[j] /= z;
      row_max.at(bh, i) = mx;
      row_sum.at(bh, i) = z;
    }
  }
  Tensor pc = p;
  const std::array in{logits, mask};
  return logits.tape().push(
      std::move(p), in, [logits, mask, pc, row_max, row_sum, heads, BH, N](Tape& tp, const Tensor& g) {
        const Tensor& l = logits.value();
        Tensor gl(l.shape()), gm(mask.shape());
        for (std::size_t bh = 0; bh < BH; ++bh) {
          const std::size_t b = bh / heads;
          for (std::size_t i = 0; i < N; ++i) {
            const std::size_t row = (bh * N + i) * N;
            double dot = 0.0;
            for (std::size_t j = 0; j < N; ++j) dot += g[row + j] * pc[row + j];
            const double mx = row_max.at(bh, i), z = row_sum.at(bh, i);
            for (std::size_t k = 0; k < N; ++k) {
              const double centered = g[row + k] - dot;
              gl[row + k] = pc[row + k] * centered;
              const double e = std::exp(std::min(l[row + k] - mx, 700.0));
              gm.at(b, k) += e / z * centered;
            }
          }
        }
        tp.accumulate(logits, gl);
        tp.accumulate(mask, gm);
      });
}

Var straight_through(Tensor hard, const Var& soft) {
  if (hard.shape() != soft.shape()) {
    throw DimensionError("straight_through shapes differ: " + shape_str(hard.shape()) + " vs " +
                         shape_str(soft.shape()));
  }
  const std::array in{soft};
  return soft.tape().push(std::move(hard), in, [soft](Tape& tp, const Tensor& g) { tp.accumulate(soft, g); });
}

Var weighted_pool(const Var& x, const Var& w, std::span<const std::uint8_t> valid) {
  const TokenView v = token_view(x);
  if (x.shape().size() != 3 || w.shape() != Shape{v.batch, v.tokens} || valid.size() != v.batch) {
    throw DimensionError("weighted_pool expects x[B,N,C], w[B,N], valid[B]; got " + shape_str(x.shape()) + ", " +
                         shape_str(w.shape()));
  }
  const std::size_t B = v.batch, N = v.tokens, C = v.inner;
  Tensor out({B, 1, C});
  std::vector<double> wsum(B, 0.0);
  for (std::size_t b = 0; b < B; ++b) {
    if (!valid[b]) continue;
    for (std::size_t n = 0; n < N; ++n) wsum[b] += w.value().at(b, n);
    if (wsum[b] <= 0.0) throw DegenerateWeightsError("package weights sum to zero");
    for (std::size_t n = 0; n < N; ++n) {
      const double wn = w.value().at(b, n);
      if (wn == 0.0) continue;
      for (std::size_t c = 0; c < C; ++c) out.at(b, 0, c) += wn * x.value().at(b, n, c);
    }
    for (std::size_t c = 0; c < C; ++c) out.at(b, 0, c) /= wsum[b];
  }
  Tensor yc = out;
  std::vector<std::uint8_t> vcopy(valid.begin(), valid.end());
  const std::array in{x, w};
  return x.tape().push(std::move(out), in, [x, w, yc, wsum, vcopy, B, N, C](Tape& tp, const Tensor& g) {
    Tensor gx(x.shape()), gw(w.shape());
    for (std::size_t b = 0; b < B; ++b) {
      if (!vcopy[b]) continue;
      for (std::size_t n = 0; n < N; ++n) {
        const double wn = w.value().at(b, n);
        double acc = 0.0;
        for (std::size_t c = 0; c < C; ++c) {
          const double gy = g.at(b, 0, c);
          gx.at(b, n, c) = gy * wn / wsum[b];
          acc += gy * (x.value().at(b, n, c) - yc.at(b, 0, c));
        }
        gw.at(b, n) = acc / wsum[b];
      }
    }
    tp.accumulate(x, gx);
    tp.accumulate(w, gw);
  });
}

Var nll(const Var& log_probs, std::span<const int> labels) {
  const Shape& s = log_probs.shape();
  if (s.size() != 2 || s[0] != labels.size()) {
    throw DimensionError("nll expects log-probs[B,K] with B labels, got " + shape_str(s) + " and " +
                         std::to_string(labels.size()) + " labels");
  }
  const std::size_t B = s[0], K = s[1];
  double acc = 0.0;
  for (std::size_t b = 0; b < B; ++b) {
    if (labels[b] < 0 || static_cast<std::size_t>(labels[b]) >= K) {
      throw DimensionError("label " + std::to_string(labels[b]) + " outside [0," + std::to_string(K) + ")");
    }
    acc -= log_probs.value().at(b, static_cast<std::size_t>(labels[b]));
  }
  std::vector<int> lab(labels.begin(), labels.end());
  const std::array in{log_probs};
  return log_probs.tape().push(Tensor::scalar(acc / static_cast<double>(B)), in,
                               [log_probs, lab, B](Tape& tp, const Tensor& g) {
                                 Tensor gx(log_probs.shape());
                                 for (std::size_t b = 0; b < B; ++b)
                                   gx.at(b, static_cast<std::size_t>(lab[b])) = -g[0] / static_cast<double>(B);
                                 tp.accumulate(log_probs, gx);
                               });
}

}  // namespace ad
}  // namespace latprune
