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

#include "latprune/selector.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "latprune/errors.hpp"

namespace latprune {

KeepDecision::KeepDecision(std::size_t batch, std::size_t tokens, std::vector<std::uint8_t> mask,
                           std::vector<std::size_t> protected_tokens)
    : batch_(batch), tokens_(tokens), mask_(std::move(mask)), protected_(std::move(protected_tokens)) {
  if (mask_.size() != batch_ * tokens_) {
    throw DimensionError("keep mask length " + std::to_string(mask_.size()) + " does not match " +
                         std::to_string(batch_) + "x" + std::to_string(tokens_));
  }
  std::sort(protected_.begin(), protected_.end());
  protected_.erase(std::unique(protected_.begin(), protected_.end()), protected_.end());
  for (std::size_t t : protected_) {
    if (t >= tokens_) throw DimensionError("protected token index out of range");
    for (std::size_t b = 0; b < batch_; ++b) mask_[b * tokens_ + t] = 1;
  }
  for (auto& m : mask_) m = m ? 1 : 0;
}

KeepDecision KeepDecision::all_kept(std::size_t batch, std::size_t tokens, std::vector<std::size_t> protected_tokens) {
  return KeepDecision(batch, tokens, std::vector<std::uint8_t>(batch * tokens, 1), std::move(protected_tokens));
}

KeepDecision KeepDecision::from_tensor(const Tensor& mask, std::vector<std::size_t> protected_tokens) {
  if (mask.rank() != 2) throw DimensionError("keep mask tensor must be [B,N], got " + shape_str(mask.shape()));
  std::vector<std::uint8_t> m(mask.size());
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = mask[i] >= 0.5 ? 1 : 0;
  return KeepDecision(mask.dim(0), mask.dim(1), std::move(m), std::move(protected_tokens));
}

bool KeepDecision::is_protected(std::size_t token) const {
  return std::binary_search(protected_.begin(), protected_.end(), token);
}

std::size_t KeepDecision::kept_count(std::size_t b) const {
  std::size_t n = 0;
  for (std::size_t t = 0; t < tokens_; ++t) n += mask_[b * tokens_ + t];
  return n;
}

double KeepDecision::kept_fraction(std::size_t b) const {
  const std::size_t prunable = tokens_ - protected_.size();
  if (prunable == 0) return 1.0;
  return static_cast<double>(kept_count(b) - protected_.size()) / static_cast<double>(prunable);
}

Tensor KeepDecision::as_tensor() const {
  Tensor t({batch_, tokens_});
  for (std::size_t i = 0; i < mask_.size(); ++i) t[i] = mask_[i];
  return t;
}

KeepDecision update_decision(const KeepDecision& old_decision, const KeepDecision& new_decision) {
  if (old_decision.batch() != new_decision.batch() || old_decision.tokens() != new_decision.tokens()) {
    throw DimensionError("update_decision shape mismatch");
  }
  std::vector<std::uint8_t> m(old_decision.mask().size());
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = old_decision.mask()[i] & new_decision.mask()[i];
  std::vector<std::size_t> prot = old_decision.protected_tokens();
  prot.insert(prot.end(), new_decision.protected_tokens().begin(), new_decision.protected_tokens().end());
  return KeepDecision(old_decision.batch(), old_decision.tokens(), std::move(m), std::move(prot));
}

SelectorDims selector_dims(std::size_t channels, std::size_t heads) {
  if (heads == 0 || channels % heads != 0) {
    throw ConfigError("selector: channels " + std::to_string(channels) + " not divisible by heads " +
                      std::to_string(heads));
  }
  SelectorDims d{channels, heads, channels / heads, std::max<std::size_t>(1, heads / 2)};
  if (d.head_dim % 4 != 0) {
    throw ConfigError("selector: head dim " + std::to_string(d.head_dim) + " must be divisible by 4");
  }
  return d;
}

namespace {

std::string head_key(const std::string& prefix, std::size_t h, const char* leaf) {
  return prefix + ".h" + std::to_string(h) + "." + leaf;
}

}  // namespace

void init_selector_params(ParamStore& store, const std::string& prefix, std::size_t channels, std::size_t heads,
                          std::mt19937_64& rng) {
  const SelectorDims dims = selector_dims(channels, heads);
  const std::size_t d = dims.head_dim;
  for (std::size_t h = 0; h < heads; ++h) {
    store.set(head_key(prefix, h, "local.ln.g"), Tensor::ones({d}));
    store.set(head_key(prefix, h, "local.ln.b"), Tensor::zeros({d}));
    store.set(head_key(prefix, h, "local.w"), init_linear(d, d / 2, rng));
    store.set(head_key(prefix, h, "local.b"), Tensor::zeros({d / 2}));
    store.set(head_key(prefix, h, "score.w1"), init_linear(d, d / 2, rng));
    store.set(head_key(prefix, h, "score.b1"), Tensor::zeros({d / 2}));
    store.set(head_key(prefix, h, "score.w2"), init_linear(d / 2, d / 4, rng));
    store.set(head_key(prefix, h, "score.b2"), Tensor::zeros({d / 4}));
    store.set(head_key(prefix, h, "score.w3"), init_linear(d / 4, 2, rng));
    store.set(head_key(prefix, h, "score.b3"), Tensor::zeros({2}));
  }
  store.set(prefix + ".branch.w1", init_linear(heads, dims.branch_hidden, rng));
  store.set(prefix + ".branch.b1", Tensor::zeros({dims.branch_hidden}));
  store.set(prefix + ".branch.w2", init_linear(dims.branch_hidden, heads, rng));
  store.set(prefix + ".branch.b2", Tensor::zeros({heads}));
}

std::vector<Tensor> split_heads(const Tensor& x, std::size_t heads) {
  if (x.rank() == 0 || heads == 0 || x.shape().back() % heads != 0) {
    throw ConfigError("split_heads: channels of " + shape_str(x.shape()) + " not divisible by " +
                      std::to_string(heads));
  }
  const std::size_t c = x.shape().back(), d = c / heads, rows = x.size() / c;
  Shape s = x.shape();
  s.back() = d;
  std::vector<Tensor> out(heads, Tensor(s));
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t h = 0; h < heads; ++h)
      for (std::size_t j = 0; j < d; ++j) out[h][r * d + j] = x[r * c + h * d + j];
  return out;
}

Tensor concat_heads(std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("concat_heads of nothing");
  Tape tape(false);
  std::vector<Var> vars;
  for (const Tensor& t : parts) vars.push_back(tape.constant(t));
  return ad::concat_last(vars).value();
}

namespace selector_ops {

Var local_features(const BoundParams& p, const std::string& prefix, std::size_t head, const Var& x_head) {
  const std::size_t d = x_head.shape().back();
  if (d % 2 != 0) throw ConfigError("local_features: head dim " + std::to_string(d) + " is odd");
  Var y = ad::layernorm(x_head, p(head_key(prefix, head, "local.ln.g")), p(head_key(prefix, head, "local.ln.b")));
  y = ad::linear(y, p(head_key(prefix, head, "local.w")), p(head_key(prefix, head, "local.b")));
  return ad::gelu(y);
}

Var global_features(const Var& local, const Var& mask) { return ad::masked_mean(local, mask); }

Var head_token_scores(const BoundParams& p, const std::string& prefix, std::size_t head, const Var& features) {
  const std::size_t d = features.shape().back();
  if (d % 4 != 0) throw ConfigError("head_token_scores: feature dim " + std::to_string(d) + " not divisible by 4");
  Var y = ad::gelu(ad::linear(features, p(head_key(prefix, head, "score.w1")), p(head_key(prefix, head, "score.b1"))));
  y = ad::gelu(ad::linear(y, p(head_key(prefix, head, "score.w2")), p(head_key(prefix, head, "score.b2"))));
  y = ad::linear(y, p(head_key(prefix, head, "score.w3")), p(head_key(prefix, head, "score.b3")));
  return ad::softmax_last(y);
}

Var head_attention(const BoundParams& p, const std::string& prefix, const Var& x, std::size_t heads) {
  const std::size_t c = x.shape().back();
  if (heads == 0 || c % heads != 0) throw ConfigError("head_attention: channels not divisible by heads");
  const std::size_t d = c / heads;
  std::vector<Var> means;
  for (std::size_t h = 0; h < heads; ++h) {
    means.push_back(ad::scale(ad::sum_last(ad::slice_last(x, h * d, d)), 1.0 / static_cast<double>(d)));
  }
  Var xbar = ad::concat_last(means);
  Var y = ad::gelu(ad::linear(xbar, p(prefix + ".branch.w1"), p(prefix + ".branch.b1")));
  y = ad::linear(y, p(prefix + ".branch.w2"), p(prefix + ".branch.b2"));
  return ad::sigmoid(y);
}

Var aggregate_scores(std::span<const Var> head_scores, const Var& head_weights) {
  const std::size_t heads = head_weights.shape().back();
  if (head_scores.size() != heads) {
    throw DimensionError("aggregate_scores: " + std::to_string(head_scores.size()) + " score maps for " +
                         std::to_string(heads) + " head weights");
  }
  Var weight_sum = ad::sum_last(head_weights);
  for (double v : weight_sum.value().data()) {
    if (v <= 0.0) throw DegenerateWeightsError("aggregate_scores: head weights sum to zero");
  }
  Var acc = ad::mul_col(head_scores[0], ad::slice_last(head_weights, 0, 1));
  for (std::size_t h = 1; h < heads; ++h) {
    acc = ad::add(acc, ad::mul_col(head_scores[h], ad::slice_last(head_weights, h, 1)));
  }
  return ad::div_col(acc, weight_sum);
}

}  // namespace selector_ops

namespace {

struct ScoreVars {
  std::vector<Var> per_head;
  Var head_weights;
  Var aggregate;
};

ScoreVars score_vars(const BoundParams& p, const std::string& prefix, const Var& x, const Var& mask,
                     std::size_t heads) {
  const SelectorDims dims = selector_dims(x.shape().back(), heads);
  ScoreVars out;
  const std::size_t n = x.shape()[1];
  for (std::size_t h = 0; h < heads; ++h) {
    Var xh = ad::slice_last(x, h * dims.head_dim, dims.head_dim);
    Var local = selector_ops::local_features(p, prefix, h, xh);
    Var global = ad::broadcast_tokens(selector_ops::global_features(local, mask), n);
    const std::array parts{local, global};
    out.per_head.push_back(selector_ops::head_token_scores(p, prefix, h, ad::concat_last(parts)));
  }
  out.head_weights = selector_ops::head_attention(p, prefix, x, heads);
  out.aggregate = selector_ops::aggregate_scores(out.per_head, out.head_weights);
  return out;
}

}  // namespace

TokenScore score_tokens(const ParamStore& params, const std::string& prefix, const Tensor& x, const Tensor& mask,
                        std::size_t heads) {
  Tape tape(false);
  BoundParams p(tape, params, false);
  ScoreVars s = score_vars(p, prefix, tape.constant(x), tape.constant(mask), heads);
  TokenScore out;
  for (const Var& v : s.per_head) out.per_head.push_back(v.value());
  out.head_weights = s.head_weights.value();
  out.aggregate = s.aggregate.value();
  return out;
}

Tensor head_channel_means(const Tensor& x, std::size_t heads) {
  if (x.rank() != 3 || heads == 0 || x.dim(2) % heads != 0) {
    throw ConfigError("head_channel_means: channels of " + shape_str(x.shape()) + " not divisible by heads");
  }
  const std::size_t B = x.dim(0), N = x.dim(1), C = x.dim(2), d = C / heads;
  Tensor out({B, N, heads});
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t h = 0; h < heads; ++h) {
        double s = 0.0;
        for (std::size_t j = 0; j < d; ++j) s += x.at(b, n, h * d + j);
        out.at(b, n, h) = s / static_cast<double>(d);
      }
  return out;
}

Tensor aggregate_scores(std::span<const Tensor> head_scores, const Tensor& head_weights) {
  Tape tape(false);
  std::vector<Var> t;
  for (const Tensor& s : head_scores) t.push_back(tape.constant(s));
  return selector_ops::aggregate_scores(t, tape.constant(head_weights)).value();
}

double gumbel_noise(std::mt19937_64& rng) {
  // Uniform on the open interval: 53 random mantissa bits, offset by half a step.
  const double u = (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;
  return -std::log(-std::log(u));
}

namespace {

void check_scores(const Tensor& scores) {
  if (scores.rank() != 3 || scores.dim(2) != 2) {
    throw DimensionError("token scores must be [B,N,2], got " + shape_str(scores.shape()));
  }
}

// Two-way tempered softmax of Gumbel-perturbed log-probabilities; returns the
// keep probability.
double perturbed_keep(double p_keep, double p_prune, double g_keep, double g_prune, double tau) {
  const double zk = (std::log(p_keep) + g_keep) / tau;
  const double zp = (std::log(p_prune) + g_prune) / tau;
  const double mx = std::max(zk, zp);
  const double ek = std::exp(zk - mx), ep = std::exp(zp - mx);
  return ek / (ek + ep);
}

}  // namespace

KeepDecision gumbel_decision(const Tensor& scores, Phase phase, double tau, std::uint64_t seed,
                             std::vector<std::size_t> protected_tokens) {
  if (!(tau > 0.0)) throw ConfigError("gumbel temperature must be positive");
  check_scores(scores);
  const std::size_t B = scores.dim(0), N = scores.dim(1);
  std::vector<std::uint8_t> mask(B * N);
  std::mt19937_64 rng(seed);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t n = 0; n < N; ++n) {
      const double pk = scores.at(b, n, 0), pp = scores.at(b, n, 1);
      if (phase == Phase::infer) {
        mask[b * N + n] = pk >= pp ? 1 : 0;
      } else {
        const double gk = gumbel_noise(rng);
        const double gp = gumbel_noise(rng);
        mask[b * N + n] = perturbed_keep(pk, pp, gk, gp, tau) >= 0.5 ? 1 : 0;
      }
    }
  return KeepDecision(B, N, std::move(mask), std::move(protected_tokens));
}

SelectorOutput run_selector(const BoundParams& p, const std::string& prefix, const Var& x, const Var& mask,
                            std::size_t heads, const DecisionOptions& options, std::mt19937_64& rng) {
  if (!(options.tau > 0.0)) throw ConfigError("gumbel temperature must be positive");
  Tape& tape = p.tape();
  ScoreVars s = score_vars(p, prefix, x, mask, heads);
  const std::size_t B = x.shape()[0], N = x.shape()[1];
  const Tensor& agg = s.aggregate.value();

  Var keep_prob = ad::reshape(ad::slice_last(s.aggregate, 0, 1), {B, N});
  Var decision;
  Tensor hard({B, N});
  switch (options.mode) {
    case DecisionMode::sample:
    case DecisionMode::soft: {
      Tensor noise({B, N, 2});
      for (auto& g : noise.data()) g = gumbel_noise(rng);
      Var z = ad::scale(ad::add(ad::log(s.aggregate), tape.constant(noise)), 1.0 / options.tau);
      Var relaxed = ad::reshape(ad::slice_last(ad::softmax_last(z), 0, 1), {B, N});
      if (options.mode == DecisionMode::soft) {
        decision = relaxed;
        break;
      }
      for (std::size_t i = 0; i < hard.size(); ++i) hard[i] = relaxed.value()[i] >= 0.5 ? 1.0 : 0.0;
      decision = relaxed;  // replaced below once the empty-image guard has run
      break;
    }
    case DecisionMode::argmax:
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t n = 0; n < N; ++n) hard.at(b, n) = agg.at(b, n, 0) >= agg.at(b, n, 1) ? 1.0 : 0.0;
      decision = keep_prob;
      break;
    case DecisionMode::keep_all:
      hard = Tensor::ones({B, N});
      decision = keep_prob;
      break;
    case DecisionMode::forced:
      if (options.forced == nullptr || options.forced->shape() != Shape{B, N}) {
        throw DimensionError("forced decision must be [B,N] = " + shape_str({B, N}));
      }
      hard = *options.forced;
      decision = keep_prob;
      break;
  }
  if (options.mode == DecisionMode::soft) return {s.aggregate, decision};

  // Never let an image lose all of its prunable tokens.
  const Tensor& cur = mask.value();
  for (std::size_t b = 0; b < B; ++b) {
    bool any = false, any_current = false;
    std::size_t best = 0;
    double best_p = 0.0;
    for (std::size_t n = 0; n < N; ++n) {
      if (cur.at(b, n) <= 0.0) continue;
      any = any || hard.at(b, n) > 0.0;
      if (!any_current || agg.at(b, n, 0) > best_p) {
        best_p = agg.at(b, n, 0);
        best = n;
      }
      any_current = true;
    }
    if (any_current && !any) hard.at(b, best) = 1.0;
  }
  if (options.mode == DecisionMode::sample) return {s.aggregate, ad::straight_through(hard, decision)};
  return {s.aggregate, ad::straight_through(hard, keep_prob)};
}

}  // namespace latprune
