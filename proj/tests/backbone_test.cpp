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

#include <random>

#include <doctest.h>

#include "latprune/backbone.hpp"
#include "latprune/errors.hpp"
#include "latprune/gradcheck.hpp"
#include "test_support.hpp"

using namespace latprune;
using latprune::testing::random_mask;
using latprune::testing::random_tensor;

namespace {

ArchConfig small_config() {
  ArchConfig c;
  c.blocks = 2;
  c.embed_dim = c.attn_dim = c.fc_dim = 8;
  c.heads = 2;
  c.image_size = 8;
  c.patch_size = 4;
  c.in_channels = 1;
  c.num_classes = 3;
  c.selector_positions = {};
  return c;
}

Tensor images_for(const ArchConfig& c, std::size_t batch, std::mt19937_64& rng) {
  return random_tensor({batch, c.image_size, c.image_size, c.in_channels}, rng);
}

}  // namespace

TEST_CASE("patch embedding token counts") {
  ArchConfig c = small_config();
  std::mt19937_64 rng(1);
  const ParamStore p = init_model_params(c, 1);
  CHECK(patch_embed(p, c, images_for(c, 2, rng)).shape() == Shape{2, 5, 8});
  c.use_cls_token = false;
  const ParamStore q = init_model_params(c, 1);
  CHECK(patch_embed(q, c, images_for(c, 2, rng)).shape() == Shape{2, 4, 8});
  CHECK_THROWS_AS(patch_embed(q, c, Tensor({1, 6, 6, 1})), ConfigError);
}

TEST_CASE("zero projection leaves only position embedding") {
  const ArchConfig c = small_config();
  std::mt19937_64 rng(2);
  ParamStore p = init_model_params(c, 2);
  p.get("embed.w") = Tensor::zeros({16, 8});
  p.get("embed.cls") = Tensor::zeros({1, 8});
  const Tensor x = patch_embed(p, c, images_for(c, 2, rng));
  const Tensor& pos = p.get("embed.pos");
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t i = 0; i < pos.size(); ++i) CHECK(x[b * pos.size() + i] == pos[i]);
}

TEST_CASE("attention with uniform logits averages value rows") {
  ArchConfig c = small_config();
  c.heads = 1;
  ParamStore p = init_model_params(c, 3);
  Tensor eye({8, 8});
  for (std::size_t i = 0; i < 8; ++i) eye.at(i, i) = 1.0;
  p.get("block0.attn.wq") = Tensor::zeros({8, 8});
  p.get("block0.attn.wk") = Tensor::zeros({8, 8});
  p.get("block0.attn.wv") = eye;
  p.get("block0.attn.wo") = eye;
  std::mt19937_64 rng(3);
  const Tensor x = random_tensor({1, 4, 8}, rng, -2, 2);
  Tape tape(false);
  BoundParams bp(tape, p, false);
  const Tensor y = msa_forward(bp, c, 0, tape.constant(x), tape.constant(Tensor::ones({1, 4}))).value();
  std::vector<double> mean(8, 0.0);
  for (std::size_t n = 0; n < 4; ++n) {
    std::vector<double> row(x.values().begin() + n * 8, x.values().begin() + n * 8 + 8);
    const auto ln = testing::layernorm_row(row, kernels::kLayerNormEps);
    for (std::size_t j = 0; j < 8; ++j) mean[j] += ln[j] / 4.0;
  }
  for (std::size_t n = 0; n < 4; ++n)
    for (std::size_t j = 0; j < 8; ++j) CHECK(y.at(0, n, j) == doctest::Approx(x.at(0, n, j) + mean[j]).epsilon(1e-12));
}

TEST_CASE("masked rows pass through both sub-blocks bit for bit") {
  const ArchConfig c = small_config();
  const ParamStore p = init_model_params(c, 4);
  std::mt19937_64 rng(4);
  const Tensor x = random_tensor({2, 5, 8}, rng);
  const Tensor m = Tensor::from_rows({{1, 0, 1, 1, 0}, {0, 1, 1, 1, 1}});
  Tape tape(false);
  BoundParams bp(tape, p, false);
  const Tensor a = msa_forward(bp, c, 0, tape.constant(x), tape.constant(m)).value();
  const Tensor f = ffn_forward(bp, c, 1, tape.constant(x), tape.constant(m)).value();
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t n = 0; n < 5; ++n) {
      if (m.at(b, n) > 0.0) continue;
      for (std::size_t j = 0; j < 8; ++j) {
        CHECK(a.at(b, n, j) == x.at(b, n, j));
        CHECK(f.at(b, n, j) == x.at(b, n, j));
      }
    }
  CHECK_THROWS_AS(msa_forward(bp, c, 0, tape.constant(x), tape.constant(Tensor({2, 5}))), EmptyPoolError);
}

TEST_CASE("zero FFN weights reduce to the residual") {
  const ArchConfig c = small_config();
  ParamStore p = init_model_params(c, 5);
  p.get("block0.fc1.w") = Tensor::zeros({8, 32});
  p.get("block0.fc2.w") = Tensor::zeros({32, 8});
  std::mt19937_64 rng(5);
  const Tensor x = random_tensor({2, 5, 8}, rng);
  Tape tape(false);
  BoundParams bp(tape, p, false);
  CHECK(ffn_forward(bp, c, 0, tape.constant(x), tape.constant(Tensor::ones({2, 5}))).value() == x);
}

TEST_CASE("masking matches physical removal inside one block") {
  const ArchConfig c = small_config();
  const ParamStore p = init_model_params(c, 6);
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    const Tensor x = random_tensor({1, 5, 8}, rng, -2, 2);
    const Tensor m = random_mask(1, 5, rng, 0.5);
    std::vector<std::size_t> kept;
    for (std::size_t n = 0; n < 5; ++n)
      if (m[n] > 0.0) kept.push_back(n);
    Tensor xs({1, kept.size(), 8});
    for (std::size_t i = 0; i < kept.size(); ++i)
      for (std::size_t j = 0; j < 8; ++j) xs.at(0, i, j) = x.at(0, kept[i], j);
    Tape tape(false);
    BoundParams bp(tape, p, false);
    Var mx = tape.constant(x), mm = tape.constant(m);
    const Tensor masked = ffn_forward(bp, c, 0, msa_forward(bp, c, 0, mx, mm), mm).value();
    Var sx = tape.constant(xs), sm = tape.constant(Tensor::ones({1, kept.size()}));
    const Tensor removed = ffn_forward(bp, c, 0, msa_forward(bp, c, 0, sx, sm), sm).value();
    for (std::size_t i = 0; i < kept.size(); ++i)
      for (std::size_t j = 0; j < 8; ++j) CHECK(std::abs(masked.at(0, kept[i], j) - removed.at(0, i, j)) < 1e-9);
  }
}

TEST_CASE("model without selectors emits no decisions") {
  const ArchConfig c = small_config();
  const ParamStore p = init_model_params(c, 7);
  std::mt19937_64 rng(7);
  const ForwardResult r = model_forward(c, p, images_for(c, 3, rng), {});
  CHECK(r.logits.shape() == Shape{3, 3});
  CHECK(r.decisions.empty());
  CHECK(r.kept_fraction.empty());
  CHECK(r.final_lengths == std::vector<std::size_t>{5, 5, 5});
}

TEST_CASE("selectors clamped open reproduce the plain backbone") {
  ArchConfig c = ArchConfig::toy();
  c.selector_positions = {1, 2};
  c.target_rates = {0.3, 0.5};
  const ParamStore p = init_model_params(c, 8);
  std::mt19937_64 rng(8);
  const Tensor img = images_for(c, 3, rng);
  for (Phase layout : {Phase::train, Phase::infer}) {
    ForwardOptions open;
    open.layout = layout;
    open.decision = DecisionMode::keep_all;
    ForwardOptions plain;
    plain.layout = layout;
    plain.selectors = false;
    const ForwardResult a = model_forward(c, p, img, open);
    const ForwardResult b = model_forward(c, p, img, plain);
    CHECK(max_abs_diff(a.logits, b.logits) < 1e-9);
    for (const auto& phase : a.kept_fraction)
      for (double f : phase) CHECK(f == 1.0);
  }
}

TEST_CASE("three selector positions emit three decisions") {
  ArchConfig c;
  c.embed_dim = c.attn_dim = c.fc_dim = 12;
  c.heads = 3;
  c.image_size = 16;
  c.patch_size = 4;
  c.in_channels = 1;
  c.num_classes = 4;
  const ParamStore p = init_model_params(c, 9);
  std::mt19937_64 rng(9);
  const Tensor img = images_for(c, 2, rng);
  for (Phase layout : {Phase::train, Phase::infer}) {
    ForwardOptions o;
    o.layout = layout;
    o.seed = 5;
    const ForwardResult r = model_forward(c, p, img, o);
    CHECK(r.decisions.size() == 3);
    REQUIRE(r.kept_fraction.size() == 3);
    for (std::size_t b = 0; b < 2; ++b) {
      CHECK(r.kept_fraction[1][b] <= r.kept_fraction[0][b]);
      CHECK(r.kept_fraction[2][b] <= r.kept_fraction[1][b]);
      CHECK(r.decisions[0].kept(b, 0));
    }
  }
}

TEST_CASE("forced decisions give the same logits in both layouts") {
  ArchConfig c = ArchConfig::toy();
  c.selector_positions = {1, 2};
  c.target_rates = {0.3, 0.5};
  std::mt19937_64 rng(10);
  for (PackagePolicy policy : {PackagePolicy::concat_per_phase, PackagePolicy::merge_single}) {
    c.package_policy = policy;
    const ParamStore p = init_model_params(c, 10);
    for (int trial = 0; trial < 10; ++trial) {
      const Tensor img = images_for(c, 2, rng);
      const std::vector<Tensor> forced{random_mask(2, c.patches(), rng, 0.6), random_mask(2, c.patches(), rng, 0.5)};
      ForwardOptions o;
      o.decision = DecisionMode::forced;
      o.forced = &forced;
      o.layout = Phase::train;
      const ForwardResult masked = model_forward(c, p, img, o);
      o.layout = Phase::infer;
      const ForwardResult removed = model_forward(c, p, img, o);
      CHECK(max_abs_diff(masked.logits, removed.logits) < 1e-9);
      for (std::size_t k = 0; k < 2; ++k)
        for (std::size_t b = 0; b < 2; ++b) CHECK(masked.kept_fraction[k][b] == removed.kept_fraction[k][b]);
    }
  }
}

TEST_CASE("inference is deterministic") {
  const ArchConfig c = ArchConfig::toy();
  const ParamStore p = init_model_params(c, 11);
  std::mt19937_64 rng(11);
  const Tensor img = images_for(c, 4, rng);
  const ForwardResult a = model_forward(c, p, img, {});
  ForwardOptions other;
  other.seed = 999;
  const ForwardResult b = model_forward(c, p, img, other);
  CHECK(a.logits == b.logits);
  CHECK(a.decisions == b.decisions);
}

TEST_CASE("configuration validation") {
  ArchConfig c = ArchConfig::deit_tiny();
  CHECK(c.tokens() == 197);
  CHECK(c.selector_positions == std::vector<std::size_t>{3, 6, 9});
  c.embed_dim = 10;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = ArchConfig::toy();
  c.selector_positions = {0};
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = ArchConfig::toy();
  c.target_rates = {1.0};
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("end-to-end gradient through a one-selector model") {
  ArchConfig c = ArchConfig::toy();
  c.blocks = 2;
  c.image_size = 4;
  c.embed_dim = c.attn_dim = c.fc_dim = 8;
  const ParamStore p = init_model_params(c, 12);
  std::mt19937_64 rng(12);
  const Tensor img = images_for(c, 2, rng);
  const Tensor readout = random_tensor({2, 2}, rng);
  const GradCheckResult r = grad_check_params(
      [&](const BoundParams& bp) {
        ForwardOptions o;
        o.layout = Phase::train;
        o.decision = DecisionMode::soft;
        o.seed = 4;
        GraphForward g = model_forward_graph(bp, c, img, o);
        Var logits_term = ad::sum_all(ad::mul(g.logits, bp.tape().constant(readout)));
        return ad::add(logits_term, ad::mean_all(g.patch_decisions[0]));
      },
      p, 1, 400);
  CAPTURE(r.worst_entry);
  CHECK(r.max_rel_error < 1e-4);
}
