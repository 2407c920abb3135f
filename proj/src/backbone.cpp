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

#include "latprune/backbone.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "latprune/errors.hpp"

namespace latprune {

std::size_t ArchConfig::patches() const {
  const std::size_t side = patch_size ? image_size / patch_size : 0;
  return side * side;
}

std::size_t ArchConfig::tokens() const { return patches() + cls_tokens(); }

std::size_t ArchConfig::package_slots() const {
  if (selector_positions.empty()) return 0;
  return package_policy == PackagePolicy::concat_per_phase ? selector_positions.size() : 1;
}

void ArchConfig::validate() const {
  auto fail = [](const std::string& key, const std::string& msg) { throw ConfigError(key + ": " + msg); };
  if (blocks == 0) fail("blocks", "must be positive");
  if (embed_dim == 0 || heads == 0 || attn_dim == 0 || fc_dim == 0) fail("embed_dim", "dimensions must be positive");
  if (embed_dim % heads != 0) {
    fail("heads", "embed_dim " + std::to_string(embed_dim) + " not divisible by heads " + std::to_string(heads));
  }
  if (attn_dim % heads != 0) {
    fail("heads", "attn_dim " + std::to_string(attn_dim) + " not divisible by heads " + std::to_string(heads));
  }
  if (patch_size == 0 || image_size == 0 || image_size % patch_size != 0) {
    fail("patch_size", "image_size must be a positive multiple of patch_size");
  }
  if (in_channels == 0) fail("in_channels", "must be positive");
  if (num_classes == 0) fail("num_classes", "must be positive");
  if (!(gumbel_tau > 0.0)) fail("gumbel_tau", "must be positive");
  for (std::size_t i = 0; i < selector_positions.size(); ++i) {
    const std::size_t p = selector_positions[i];
    if (p < 1 || p > blocks - 1) fail("selector_positions", "position " + std::to_string(p) + " outside [1, L-1]");
    if (i > 0 && p <= selector_positions[i - 1]) fail("selector_positions", "must be strictly increasing");
  }
  if (!selector_positions.empty()) {
    try {
      selector_dims(embed_dim, heads);
    } catch (const ConfigError& e) {
      fail("embed_dim", e.what());
    }
  }
  if (!target_rates.empty() && target_rates.size() != selector_positions.size()) {
    fail("target_rates", "need one rate per selector");
  }
  for (std::size_t i = 0; i < target_rates.size(); ++i) {
    if (!(target_rates[i] >= 0.0 && target_rates[i] < 1.0)) fail("target_rates", "rates must lie in [0, 1)");
    if (i > 0 && target_rates[i] < target_rates[i - 1]) {
      fail("target_rates", "rates are cumulative and must be nondecreasing");
    }
  }
}

ArchConfig ArchConfig::deit_tiny() {
  ArchConfig c;
  c.target_rates = {0.3, 0.5, 0.7};
  return c;
}

ArchConfig ArchConfig::deit_small() {
  ArchConfig c;
  c.embed_dim = c.attn_dim = c.fc_dim = 384;
  c.heads = 6;
  c.target_rates = {0.3, 0.5, 0.7};
  return c;
}

ArchConfig ArchConfig::toy() {
  ArchConfig c;
  c.blocks = 3;
  c.embed_dim = c.attn_dim = c.fc_dim = 16;
  c.heads = 2;
  c.image_size = 8;
  c.patch_size = 2;
  c.in_channels = 1;
  c.num_classes = 2;
  c.selector_positions = {1};
  c.target_rates = {0.3};
  return c;
}

std::string selector_prefix(std::size_t k) { return "selector" + std::to_string(k); }

bool is_selector_param(const std::string& name) { return name.rfind("selector", 0) == 0; }

namespace {

std::string block_key(std::size_t l, const char* leaf) { return "block" + std::to_string(l) + "." + leaf; }

}  // namespace

ParamStore init_model_params(const ArchConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  ParamStore p;
  const std::size_t C = config.embed_dim, Da = config.attn_dim, H4 = 4 * config.fc_dim;
  const std::size_t patch_in = config.patch_size * config.patch_size * config.in_channels;
  p.set("embed.w", init_linear(patch_in, C, rng));
  p.set("embed.b", Tensor::zeros({C}));
  if (config.use_cls_token) p.set("embed.cls", init_normal({1, C}, 0.02, rng));
  p.set("embed.pos", init_normal({config.tokens(), C}, 0.02, rng));
  for (std::size_t l = 0; l < config.blocks; ++l) {
    p.set(block_key(l, "ln1.g"), Tensor::ones({C}));
    p.set(block_key(l, "ln1.b"), Tensor::zeros({C}));
    p.set(block_key(l, "attn.wq"), init_linear(C, Da, rng));
    p.set(block_key(l, "attn.bq"), Tensor::zeros({Da}));
    p.set(block_key(l, "attn.wk"), init_linear(C, Da, rng));
    p.set(block_key(l, "attn.bk"), Tensor::zeros({Da}));
    p.set(block_key(l, "attn.wv"), init_linear(C, Da, rng));
    p.set(block_key(l, "attn.bv"), Tensor::zeros({Da}));
    p.set(block_key(l, "attn.wo"), init_linear(Da, C, rng));
    p.set(block_key(l, "attn.bo"), Tensor::zeros({C}));
    p.set(block_key(l, "ln2.g"), Tensor::ones({C}));
    p.set(block_key(l, "ln2.b"), Tensor::zeros({C}));
    p.set(block_key(l, "fc1.w"), init_linear(C, H4, rng));
    p.set(block_key(l, "fc1.b"), Tensor::zeros({H4}));
    p.set(block_key(l, "fc2.w"), init_linear(H4, C, rng));
    p.set(block_key(l, "fc2.b"), Tensor::zeros({C}));
  }
  p.set("head.ln.g", Tensor::ones({C}));
  p.set("head.ln.b", Tensor::zeros({C}));
  p.set("head.w", init_linear(C, config.num_classes, rng));
  p.set("head.b", Tensor::zeros({config.num_classes}));
  for (std::size_t k = 0; k < config.selector_positions.size(); ++k) {
    init_selector_params(p, selector_prefix(k), C, config.heads, rng);
  }
  return p;
}

Var patch_embed(const BoundParams& p, const ArchConfig& config, const Tensor& images) {
  const std::size_t ps = config.patch_size;
  if (images.rank() != 4) throw DimensionError("images must be [B,H,W,ch], got " + shape_str(images.shape()));
  const std::size_t B = images.dim(0), Hpx = images.dim(1), Wpx = images.dim(2), ch = images.dim(3);
  if (ps == 0 || Hpx % ps != 0 || Wpx % ps != 0) {
    throw ConfigError("image " + std::to_string(Hpx) + "x" + std::to_string(Wpx) + " not divisible by patch " +
                      std::to_string(ps));
  }
  if (Hpx != config.image_size || Wpx != config.image_size || ch != config.in_channels) {
    throw DimensionError("image extents " + shape_str(images.shape()) + " do not match the configuration");
  }
  const std::size_t gh = Hpx / ps, gw = Wpx / ps, P = gh * gw, patch_in = ps * ps * ch;
  Tensor patches({B, P, patch_in});
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t py = 0; py < gh; ++py)
      for (std::size_t px = 0; px < gw; ++px) {
        std::size_t j = 0;
        for (std::size_t y = 0; y < ps; ++y)
          for (std::size_t x = 0; x < ps; ++x)
            for (std::size_t c = 0; c < ch; ++c) {
              const std::size_t src = ((b * Hpx + py * ps + y) * Wpx + px * ps + x) * ch + c;
              patches.at(b, py * gw + px, j++) = images[src];
            }
      }
  Tape& tape = p.tape();
  Var x = ad::linear(tape.constant(std::move(patches)), p("embed.w"), p("embed.b"));
  const std::size_t C = config.embed_dim;
  if (config.use_cls_token) {
    Var cls = ad::reshape(p("embed.cls"), {1, 1, C});
    // Tile over the batch: B copies along the token axis, then fold into [B, 1, C].
    std::vector<Var> rows(B, cls);
    Var tiled = B == 1 ? cls : ad::reshape(ad::concat_tokens(rows), {B, 1, C});
    const std::array parts{tiled, x};
    x = ad::concat_tokens(parts);
  }
  const std::size_t N = config.tokens();
  Var pos = ad::reshape(p("embed.pos"), {1, N, C});
  std::vector<Var> pos_rows(B, pos);
  Var pos_tiled = B == 1 ? pos : ad::reshape(ad::concat_tokens(pos_rows), {B, N, C});
  return ad::add(x, pos_tiled);
}

Tensor patch_embed(const ParamStore& params, const ArchConfig& config, const Tensor& images) {
  Tape tape(false);
  BoundParams p(tape, params, false);
  return patch_embed(p, config, images).value();
}

Var msa_forward(const BoundParams& p, const ArchConfig& config, std::size_t block, const Var& x, const Var& mask) {
  const std::size_t H = config.heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(config.attn_dim / H));
  Var h = ad::layernorm(x, p(block_key(block, "ln1.g")), p(block_key(block, "ln1.b")));
  Var q = ad::split_heads(ad::linear(h, p(block_key(block, "attn.wq")), p(block_key(block, "attn.bq"))), H);
  Var k = ad::split_heads(ad::linear(h, p(block_key(block, "attn.wk")), p(block_key(block, "attn.bk"))), H);
  Var v = ad::split_heads(ad::linear(h, p(block_key(block, "attn.wv")), p(block_key(block, "attn.bv"))), H);
  Var logits = ad::scale(ad::matmul(q, ad::transpose_last2(k)), inv_sqrt);
  Var attn = ad::masked_softmax_keys(logits, mask, H);
  Var o = ad::merge_heads(ad::matmul(attn, v), H);
  o = ad::linear(o, p(block_key(block, "attn.wo")), p(block_key(block, "attn.bo")));
  return ad::add(x, ad::row_gate(o, mask));
}

Var ffn_forward(const BoundParams& p, const ArchConfig& config, std::size_t block, const Var& x, const Var& mask) {
  (void)config;
  Var h = ad::layernorm(x, p(block_key(block, "ln2.g")), p(block_key(block, "ln2.b")));
  h = ad::gelu(ad::linear(h, p(block_key(block, "fc1.w")), p(block_key(block, "fc1.b"))));
  h = ad::linear(h, p(block_key(block, "fc2.w")), p(block_key(block, "fc2.b")));
  return ad::add(x, ad::row_gate(h, mask));
}

namespace {

DecisionMode resolve_mode(const ForwardOptions& o) {
  if (o.decision) return *o.decision;
  return o.layout == Phase::train ? DecisionMode::sample : DecisionMode::argmax;
}

Var classify(const BoundParams& p, const ArchConfig& config, const Var& x, const Var& mask) {
  const std::size_t B = x.shape()[0], C = config.embed_dim;
  Var h = ad::layernorm(x, p("head.ln.g"), p("head.ln.b"));
  Var pooled = config.use_cls_token ? ad::slice_tokens(h, 0, 1) : ad::masked_mean(h, mask);
  return ad::linear(ad::reshape(pooled, {B, C}), p("head.w"), p("head.b"));
}

std::vector<std::size_t> cls_protected(const ArchConfig& config) {
  return config.use_cls_token ? std::vector<std::size_t>{0} : std::vector<std::size_t>{};
}

// Cumulative patch mask [B, P] -> KeepDecision over the full [B, N] token grid.
KeepDecision full_decision(const ArchConfig& config, const Tensor& patch_mask) {
  const std::size_t B = patch_mask.dim(0), P = patch_mask.dim(1), off = config.cls_tokens();
  std::vector<std::uint8_t> m(B * config.tokens(), 1);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t n = 0; n < P; ++n) m[b * config.tokens() + off + n] = patch_mask.at(b, n) >= 0.5 ? 1 : 0;
  return KeepDecision(B, config.tokens(), std::move(m), cls_protected(config));
}

}  // namespace

GraphForward model_forward_graph(const BoundParams& p, const ArchConfig& config, const Tensor& images,
                                 const ForwardOptions& options) {
  config.validate();
  Tape& tape = p.tape();
  const DecisionMode mode = resolve_mode(options);
  const bool with_selectors = options.selectors && !config.selector_positions.empty();
  const std::size_t B = images.dim(0), C = config.embed_dim, P = config.patches(), cls = config.cls_tokens();
  const std::size_t N = config.tokens();
  const std::size_t slots = with_selectors ? config.package_slots() : 0;
  const bool merge = config.package_policy == PackagePolicy::merge_single;
  std::mt19937_64 rng(options.seed);

  Var x = patch_embed(p, config, images);
  if (slots > 0) {
    const std::array parts{x, tape.constant(Tensor::zeros({B, slots, C}))};
    x = ad::concat_tokens(parts);
  }
  Var patch_mask = tape.constant(Tensor::ones({B, P}));
  Tensor slot_mask({B, slots});
  auto full_mask = [&]() {
    std::vector<Var> parts;
    if (cls) parts.push_back(tape.constant(Tensor::ones({B, cls})));
    parts.push_back(patch_mask);
    if (slots) parts.push_back(tape.constant(slot_mask));
    return parts.size() == 1 ? parts[0] : ad::concat_tokens(parts);
  };
  Var mask = full_mask();

  GraphForward out;
  std::size_t next = 0;
  for (std::size_t l = 0; l < config.blocks; ++l) {
    if (with_selectors && next < config.selector_positions.size() && config.selector_positions[next] == l) {
      const std::size_t k = next++;
      DecisionOptions dopt{mode, config.gumbel_tau, nullptr};
      if (mode == DecisionMode::forced) {
        if (options.forced == nullptr || options.forced->size() <= k) {
          throw ContractError("forced decisions missing for selector " + std::to_string(k));
        }
        dopt.forced = &(*options.forced)[k];
      }
      Var xp = ad::slice_tokens(x, cls, P);
      SelectorOutput sel = run_selector(p, selector_prefix(k), xp, patch_mask, config.heads, dopt, rng);
      Var new_mask = ad::mul(patch_mask, sel.decision);
      Var keep_prob = ad::reshape(ad::slice_last(sel.scores, 0, 1), {B, P});

      std::vector<std::uint8_t> valid(B, 0);
      for (std::size_t b = 0; b < B; ++b) {
        if (mode == DecisionMode::soft) {
          valid[b] = 1;
          continue;
        }
        for (std::size_t n = 0; n < P; ++n)
          if (patch_mask.value().at(b, n) - new_mask.value().at(b, n) > 0.5) valid[b] = 1;
      }
      Var pkg = package_tokens(xp, patch_mask, new_mask, keep_prob, valid);
      const std::size_t slot = N + (merge ? 0 : k);
      if (merge) pkg = ad::add(ad::slice_tokens(x, slot, 1), pkg);
      x = ad::set_token(x, slot, pkg);
      for (std::size_t b = 0; b < B; ++b) {
        double& sm = slot_mask.at(b, merge ? 0 : k);
        sm = std::max(sm, static_cast<double>(valid[b]));
      }
      patch_mask = new_mask;
      mask = full_mask();

      out.patch_decisions.push_back(patch_mask);
      out.summary.decisions.push_back(full_decision(config, patch_mask.value()));
      std::vector<double> frac(B, 0.0);
      for (std::size_t b = 0; b < B; ++b) {
        double s = 0.0;
        for (std::size_t n = 0; n < P; ++n) s += patch_mask.value().at(b, n);
        frac[b] = s / static_cast<double>(P);
      }
      out.summary.kept_fraction.push_back(std::move(frac));
    }
    x = msa_forward(p, config, l, x, mask);
    x = ffn_forward(p, config, l, x, mask);
  }
  out.logits = classify(p, config, x, mask);
  out.summary.logits = out.logits.value();
  return out;
}

namespace {

enum class TokenKind { cls, patch, package };

struct Row {
  TokenKind kind;
  std::size_t patch = 0;  // original patch index for patch rows
};

Var gather_rows(const Var& x, const std::vector<std::size_t>& rows) {
  std::vector<Var> parts;
  parts.reserve(rows.size());
  for (std::size_t r : rows) parts.push_back(ad::slice_tokens(x, r, 1));
  return ad::concat_tokens(parts);
}

// One image through the physically pruned layout.
void forward_single_pruned(const BoundParams& p, const ArchConfig& config, const Tensor& image, std::size_t b,
                           DecisionMode mode, const ForwardOptions& options, std::mt19937_64& rng,
                           ForwardResult& result, std::vector<Tensor>& patch_masks) {
  Tape& tape = p.tape();
  const std::size_t P = config.patches(), C = config.embed_dim;
  const bool with_selectors = options.selectors && !config.selector_positions.empty();
  const bool merge = config.package_policy == PackagePolicy::merge_single;

  Var x = patch_embed(p, config, image);
  std::vector<Row> rows;
  if (config.use_cls_token) rows.push_back({TokenKind::cls});
  for (std::size_t n = 0; n < P; ++n) rows.push_back({TokenKind::patch, n});
  std::vector<std::uint8_t> alive(P, 1);

  std::size_t next = 0;
  for (std::size_t l = 0; l < config.blocks; ++l) {
    if (with_selectors && next < config.selector_positions.size() && config.selector_positions[next] == l) {
      const std::size_t k = next++;
      std::vector<std::size_t> patch_rows;
      for (std::size_t r = 0; r < rows.size(); ++r)
        if (rows[r].kind == TokenKind::patch) patch_rows.push_back(r);
      const std::size_t present = patch_rows.size();
      Var xp = gather_rows(x, patch_rows);

      Tensor forced_local;
      DecisionOptions dopt{mode, config.gumbel_tau, nullptr};
      if (mode == DecisionMode::forced) {
        if (options.forced == nullptr || options.forced->size() <= k) {
          throw ContractError("forced decisions missing for selector " + std::to_string(k));
        }
        forced_local = Tensor({1, present});
        for (std::size_t i = 0; i < present; ++i) forced_local[i] = (*options.forced)[k].at(b, rows[patch_rows[i]].patch);
        dopt.forced = &forced_local;
      }
      SelectorOutput sel =
          run_selector(p, selector_prefix(k), xp, tape.constant(Tensor::ones({1, present})), config.heads, dopt, rng);
      const Tensor& dec = sel.decision.value();
      const Tensor& scores = sel.scores.value();

      std::vector<std::size_t> keep_rows, pruned_local;
      for (std::size_t r = 0; r < rows.size(); ++r)
        if (rows[r].kind == TokenKind::cls) keep_rows.push_back(r);
      for (std::size_t i = 0; i < present; ++i) {
        if (dec[i] >= 0.5) {
          keep_rows.push_back(patch_rows[i]);
        } else {
          pruned_local.push_back(i);
          alive[rows[patch_rows[i]].patch] = 0;
        }
      }
      std::vector<std::size_t> package_rows;
      for (std::size_t r = 0; r < rows.size(); ++r)
        if (rows[r].kind == TokenKind::package) package_rows.push_back(r);

      // Existing rows in layout order: class token, surviving patches, packages.
      std::vector<Row> next_rows;
      std::vector<std::size_t> order = keep_rows;
      order.insert(order.end(), package_rows.begin(), package_rows.end());
      for (std::size_t r : order) next_rows.push_back(rows[r]);
      Var nx = gather_rows(x, order);

      if (!pruned_local.empty()) {
        Tensor pruned({pruned_local.size(), C}), pscores({pruned_local.size(), 2});
        for (std::size_t q = 0; q < pruned_local.size(); ++q) {
          for (std::size_t c = 0; c < C; ++c) pruned.at(q, c) = xp.value().at(0, pruned_local[q], c);
          pscores.at(q, 0) = scores.at(0, pruned_local[q], 0);
          pscores.at(q, 1) = scores.at(0, pruned_local[q], 1);
        }
        PackageToken pkg = build_package(pruned, pscores, k);
        TokenSequence seq{nx.value().reshaped({next_rows.size(), C}), {}};
        for (std::size_t r = 0; r < next_rows.size(); ++r)
          if (next_rows[r].kind == TokenKind::package) seq.package_rows.push_back(r);
        const bool appends = !merge || seq.package_rows.empty();
        seq = attach_package(seq, pkg, merge ? PackagePolicy::merge_single : PackagePolicy::concat_per_phase);
        if (appends) next_rows.push_back({TokenKind::package});
        nx = tape.constant(seq.tokens.reshaped({1, next_rows.size(), C}));
      }
      x = nx;
      rows = std::move(next_rows);

      Tensor& pm = patch_masks[k];
      std::size_t kept = 0;
      for (std::size_t n = 0; n < P; ++n) {
        pm.at(b, n) = alive[n];
        kept += alive[n];
      }
      result.kept_fraction[k][b] = static_cast<double>(kept) / static_cast<double>(P);
    }
    Var ones = tape.constant(Tensor::ones({1, rows.size()}));
    x = msa_forward(p, config, l, x, ones);
    x = ffn_forward(p, config, l, x, ones);
  }
  Var logits = classify(p, config, x, tape.constant(Tensor::ones({1, rows.size()})));
  for (std::size_t j = 0; j < config.num_classes; ++j) result.logits.at(b, j) = logits.value()[j];
  result.final_lengths[b] = rows.size();
}

}  // namespace

ForwardResult model_forward(const ArchConfig& config, const ParamStore& params, const Tensor& images,
                            const ForwardOptions& options) {
  config.validate();
  Tape tape(false);
  BoundParams p(tape, params, false);
  if (options.layout == Phase::train) return model_forward_graph(p, config, images, options).summary;

  if (images.rank() != 4) throw DimensionError("images must be [B,H,W,ch], got " + shape_str(images.shape()));
  const std::size_t B = images.dim(0), P = config.patches();
  const std::size_t S = options.selectors ? config.selector_positions.size() : 0;
  const DecisionMode mode = resolve_mode(options);
  ForwardResult result;
  result.logits = Tensor({B, config.num_classes});
  result.kept_fraction.assign(S, std::vector<double>(B, 1.0));
  result.final_lengths.assign(B, 0);
  std::vector<Tensor> patch_masks(S, Tensor::ones({B, P}));
  std::mt19937_64 rng(options.seed);
  const std::size_t per_image = images.size() / std::max<std::size_t>(1, B);
  for (std::size_t b = 0; b < B; ++b) {
    Shape s = images.shape();
    s[0] = 1;
    Tensor image(s, std::vector<double>(images.values().begin() + static_cast<std::ptrdiff_t>(b * per_image),
                                        images.values().begin() + static_cast<std::ptrdiff_t>((b + 1) * per_image)));
    forward_single_pruned(p, config, image, b, mode, options, rng, result, patch_masks);
  }
  for (std::size_t k = 0; k < S; ++k) result.decisions.push_back(full_decision(config, patch_masks[k]));
  return result;
}

std::vector<Tensor> block_features(const ArchConfig& config, const ParamStore& params, const Tensor& images) {
  config.validate();
  Tape tape(false);
  BoundParams p(tape, params, false);
  Var x = patch_embed(p, config, images);
  Var ones = tape.constant(Tensor::ones({images.dim(0), config.tokens()}));
  std::vector<Tensor> out;
  for (std::size_t l = 0; l < config.blocks; ++l) {
    x = msa_forward(p, config, l, x, ones);
    x = ffn_forward(p, config, l, x, ones);
    out.push_back(x.value());
  }
  return out;
}

}  // namespace latprune
