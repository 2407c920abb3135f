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


// Acceptance run: one PASS/FAIL line per criterion with its measured runtime.
// Exits nonzero when any criterion fails or exceeds its time limit.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "latprune/backbone.hpp"
#include "latprune/costmodel.hpp"
#include "latprune/data.hpp"
#include "latprune/errors.hpp"
#include "latprune/gradcheck.hpp"
#include "latprune/kernels.hpp"
#include "latprune/latency.hpp"
#include "latprune/packaging.hpp"
#include "latprune/selector.hpp"
#include "latprune/trainer.hpp"
#include "test_support.hpp"

using namespace latprune;
using latprune::testing::random_mask;
using latprune::testing::random_tensor;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

bool run_criterion(int id, const char* name, double limit_s, const std::function<Outcome()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const bool in_time = s < limit_s;
  const bool ok = o.pass && in_time;
  std::printf("%s %2d %-26s %s | %.2f s (limit %.0f s%s)\n", ok ? "PASS" : "FAIL", id, name, o.detail.c_str(), s,
              limit_s, in_time ? "" : ", exceeded");
  std::fflush(stdout);
  return ok;
}

Tensor softmax_rows(const Tensor& logits) { return kernels::softmax(logits, logits.rank() - 1); }

Outcome flops_model() {
  const ModelCost t = model_flops(ArchConfig::deit_tiny(), dense_plan(12));
  const ModelCost s = model_flops(ArchConfig::deit_small(), dense_plan(12));
  const double tg = t.total() / 1e9, sg = s.total() / 1e9;
  const double t_gap = (1.30 - tg) / 1.30, s_gap = (4.60 - sg) / 4.60;
  const bool pass = std::abs(tg - 1.22) < 0.005 && std::abs(sg - 4.54) < 0.005 && std::abs(t_gap) < 0.10 &&
                    std::abs(s_gap) < 0.10 && t.total() == 12ULL * block_flops(197, 192, 192, 192).total &&
                    s.total() == 12ULL * block_flops(197, 384, 384, 384).total;
  return {pass, fmt("blocks x12: T %.4f G, S %.4f G; reference 1.30 / 4.60 G, gap %.1f%% / %.1f%% "
                    "(embedding+head excluded: +%.4f / +%.4f G gives %.4f / %.4f G)",
                    tg, sg, 100 * t_gap, 100 * s_gap, t.embed_head / 1e9, s.embed_head / 1e9,
                    t.total_with_embed_head() / 1e9, s.total_with_embed_head() / 1e9)};
}

Outcome latency_lookup() {
  const std::vector<double> rates{0.0, 0.1, 0.2, 0.3, 0.4, 0.5};
  const std::vector<double> tiny{0.689, 0.630, 0.587, 0.509, 0.468, 0.424};
  const std::vector<double> small{2.107, 1.891, 1.710, 1.503, 1.315, 1.121};
  bool exact = true;
  for (std::size_t i = 0; i < rates.size(); ++i) {
    exact = exact && block_lat(LatencyTable::deit_tiny(), rates[i]) == tiny[i];
    exact = exact && block_lat(LatencyTable::deit_small(), rates[i]) == small[i];
  }
  const double mid = block_lat(LatencyTable::deit_tiny(), 0.25);
  return {exact && std::abs(mid - 0.548) <= 1e-9,
          fmt("12 table entries %s; T rate 0.25 -> %.12f ms", exact ? "exact" : "MISMATCH", mid)};
}

Outcome budget_solver() {
  const LatencyTable t = LatencyTable::deit_tiny();
  const double budget = 12 * 0.509;
  const PruningPlan p = solve_budget(t, 12, {0}, budget);
  bool uniform = p.phase_rates.size() == 1 && std::abs(p.phase_rates[0] - 0.3) < 1e-12;
  for (double r : p.rates) uniform = uniform && std::abs(r - 0.3) < 1e-12;
  const bool under = p.latency_ms <= budget + 1e-9 && plan_latency(t, p) <= budget + 1e-9;

  std::vector<std::pair<double, double>> pts;
  for (const auto& e : t.entries()) pts.emplace_back(e.rate, e.latency_ms);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> draw(5.0, 8.4);
  const std::vector<std::vector<std::size_t>> layouts{{0}, {3, 6, 9}, {0, 6}, {2, 5, 8, 10}};
  int agree = 0, infeasible = 0;
  for (int i = 0; i < 100; ++i) {
    const auto& pos = layouts[i % layouts.size()];
    const double b = draw(rng);
    testing::OraclePlan want;
    if (!testing::budget_oracle(pts, 12, pos, b, want)) {
      try {
        solve_budget(t, 12, pos, b);
      } catch (const InfeasibleError&) {
        ++agree;
        ++infeasible;
      }
      continue;
    }
    const PruningPlan got = solve_budget(t, 12, pos, b);
    bool same = got.phase_rates.size() == want.phase_rates.size() && got.latency_ms <= b + 1e-9 &&
                std::abs(got.latency_ms - want.latency) < 1e-9;
    for (std::size_t k = 0; same && k < got.phase_rates.size(); ++k)
      same = std::abs(got.phase_rates[k] - want.phase_rates[k]) < 1e-12;
    agree += same ? 1 : 0;
  }
  return {uniform && under && agree == 100,
          fmt("budget %.3f ms -> rate %.2f, %.3f ms; oracle agrees on %d/100 budgets (%d infeasible)", budget,
              p.phase_rates.empty() ? -1.0 : p.phase_rates[0], p.latency_ms, agree, infeasible)};
}

Outcome strategy_comparison() {
  std::size_t cases = 0, held = 0;
  for (int r = 1; r <= 9; ++r)
    for (double n : {50.0, 197.0, 577.0})
      for (double c = 64; c <= 512; c += 64)
        for (double a = 64; a <= 512; a += 64)
          for (double f = 64; f <= 512; f += 64) {
            const StrategyComparison s = compare_strategies(n, c, a, f, r / 10.0);
            ++cases;
            held += s.token_reduction >= s.head_reduction ? 1 : 0;
          }
  const StrategyComparison s = compare_strategies(ArchConfig::deit_small(), 0.5);
  const double tok = 100 * s.token_reduction, head = 100 * s.head_reduction;
  return {held == cases && std::abs(tok - 52.0) < 0.05 && std::abs(head - 19.3) < 0.05,
          fmt("token >= head on %zu/%zu grid points; S rate 0.5: token %.2f%%, head %.2f%%, channel %.2f%%", held,
              cases, tok, head, 100 * s.channel_reduction)};
}

Outcome gradient_integrity() {
  ArchConfig c;
  c.blocks = 2;
  c.embed_dim = c.attn_dim = c.fc_dim = 8;
  c.heads = 2;
  c.image_size = 4;
  c.patch_size = 2;
  c.in_channels = 1;
  c.num_classes = 2;
  c.selector_positions = {1};
  c.target_rates = {0.3};
  const ParamStore p = init_model_params(c, 5);
  std::mt19937_64 rng(5);
  const Tensor img = random_tensor({2, 4, 4, 1}, rng);
  const std::vector<int> labels{0, 1};
  ForwardOptions plain;
  plain.selectors = false;
  const Tensor ref = model_forward(c, p, img, plain).logits;
  const GradCheckResult r = grad_check_params(
      [&](const BoundParams& bp) {
        ForwardOptions o;
        o.layout = Phase::train;
        o.decision = DecisionMode::soft;
        o.seed = 5;
        const GraphForward g = model_forward_graph(bp, c, img, o);
        return total_loss_graph(g.logits, labels, ref, g.patch_decisions, c.target_rates, LossWeights{}).total;
      },
      p, 0, 0);
  return {r.max_rel_error < 1e-4, fmt("B=2 N=%zu C=8 H=2, %zu parameters probed, max rel error %.3e (worst %s)",
                                      c.tokens(), r.probes, r.max_rel_error, r.worst_entry.c_str())};
}

Outcome mechanism_invariants() {
  constexpr int kInstances = 1000;
  std::mt19937_64 rng(6);
  int norm_ok = 0, scale_ok = 0, hull_ok = 0, mono_ok = 0, mask_ok = 0, shortened = 0;
  double worst_forward = 0.0;

  for (int i = 0; i < kInstances; ++i) {
    const std::size_t heads = 1 + rng() % 6, b = 1 + rng() % 3, n = 1 + rng() % 9;
    std::vector<Tensor> t;
    for (std::size_t h = 0; h < heads; ++h) t.push_back(softmax_rows(random_tensor({b, n, 2}, rng, -6, 6)));
    const Tensor a = random_tensor({b, n, heads}, rng, 1e-3, 1.0);
    const Tensor agg = aggregate_scores(t, a);
    bool ok = true;
    for (std::size_t r = 0; r < b * n; ++r)
      ok = ok && std::abs(agg[2 * r] + agg[2 * r + 1] - 1.0) < 1e-12 && agg[2 * r] >= 0 && agg[2 * r + 1] >= 0;
    norm_ok += ok;
    Tensor scaled = a;
    const double k = std::exp(random_tensor({1}, rng, -8, 8)[0]);
    for (auto& v : scaled.data()) v *= k;
    scale_ok += max_abs_diff(agg, aggregate_scores(t, scaled)) < 1e-12;
  }

  for (int i = 0; i < kInstances; ++i) {
    const std::size_t q = 1 + rng() % 8, c = 1 + rng() % 6;
    const Tensor rows = random_tensor({q, c}, rng, -10, 10);
    Tensor scores({q, 2});
    for (std::size_t r = 0; r < q; ++r) {
      scores.at(r, 0) = random_tensor({1}, rng, 1e-3, 1.0)[0];
      scores.at(r, 1) = 1.0 - scores.at(r, 0);
    }
    const PackageToken p = build_package(rows, scores);
    bool inside = true;
    for (int dir = 0; dir < 20; ++dir) {
      const Tensor u = random_tensor({c}, rng);
      double lo = 1e300, hi = -1e300, at = 0.0;
      for (std::size_t r = 0; r < q; ++r) {
        double d = 0.0;
        for (std::size_t j = 0; j < c; ++j) d += u[j] * rows.at(r, j);
        lo = std::min(lo, d);
        hi = std::max(hi, d);
      }
      for (std::size_t j = 0; j < c; ++j) at += u[j] * p.value[j];
      inside = inside && at >= lo - 1e-9 && at <= hi + 1e-9;
    }
    hull_ok += inside;
  }

  std::bernoulli_distribution coin(0.7);
  for (int i = 0; i < kInstances; ++i) {
    const std::size_t b = 1 + rng() % 3, n = 2 + rng() % 12;
    KeepDecision d = KeepDecision::all_kept(b, n, {0});
    bool ok = true;
    for (int step = 0; step < 4; ++step) {
      std::vector<std::uint8_t> m(b * n);
      for (auto& v : m) v = coin(rng);
      const KeepDecision next = update_decision(d, KeepDecision(b, n, m));
      for (std::size_t j = 0; j < b * n; ++j) ok = ok && next.mask()[j] <= d.mask()[j];
      for (std::size_t j = 0; j < b; ++j) ok = ok && next.kept(j, 0) && next.kept_count(j) <= d.kept_count(j);
      d = next;
    }
    mono_ok += ok;
  }

  ArchConfig c = ArchConfig::toy();
  c.selector_positions = {1, 2};
  c.target_rates = {0.3, 0.5};
  std::vector<ParamStore> stores;
  for (PackagePolicy policy : {PackagePolicy::concat_per_phase, PackagePolicy::merge_single}) {
    c.package_policy = policy;
    for (std::uint64_t s = 0; s < 5; ++s) stores.push_back(init_model_params(c, 100 + s));
  }
  for (int i = 0; i < kInstances; ++i) {
    c.package_policy = i % 2 ? PackagePolicy::merge_single : PackagePolicy::concat_per_phase;
    const ParamStore& p = stores[(i % 2) * 5 + (i / 2) % 5];
    const Tensor img = random_tensor({1, c.image_size, c.image_size, c.in_channels}, rng);
    const double keep = 0.2 + 0.7 * (rng() % 1000) / 1000.0;
    const std::vector<Tensor> forced{random_mask(1, c.patches(), rng, keep), random_mask(1, c.patches(), rng, keep)};
    ForwardOptions o;
    o.decision = DecisionMode::forced;
    o.forced = &forced;
    o.layout = Phase::train;
    const ForwardResult masked = model_forward(c, p, img, o);
    o.layout = Phase::infer;
    const ForwardResult removed = model_forward(c, p, img, o);
    const double diff = max_abs_diff(masked.logits, removed.logits);
    worst_forward = std::max(worst_forward, diff);
    mask_ok += diff <= 1e-9 && masked.kept_fraction == removed.kept_fraction;
    shortened += removed.final_lengths[0] < c.tokens();
  }

  const bool pass = norm_ok == kInstances && scale_ok == kInstances && hull_ok == kInstances &&
                    mono_ok == kInstances && mask_ok == kInstances;
  return {pass, fmt("normalization %d, scale invariance %d, convex hull %d, mask monotonicity %d, "
                    "masking vs removal %d (max |dlogit| %.2e, %d physically shortened) of %d each",
                    norm_ok, scale_ok, hull_ok, mono_ok, mask_ok, worst_forward, shortened, kInstances)};
}

Outcome gumbel_statistics() {
  constexpr int kDraws = 100000;
  std::string detail;
  bool pass = true;
  std::minstd_rand race(2024);
  for (double pk : {0.75, 0.3}) {
    // A Gumbel-max draw is the winner of an exponential race with the class
    // probabilities as rates.
    std::exponential_distribution<double> ek(pk), ep(1.0 - pk);
    int oracle = 0, keep = 0;
    for (int i = 0; i < kDraws; ++i) oracle += ek(race) < ep(race);
    const Tensor row({1, 1, 2}, std::vector<double>{pk, 1.0 - pk});
    for (int s = 0; s < kDraws; ++s)
      keep += gumbel_decision(row, Phase::train, 0.5, static_cast<std::uint64_t>(s) + 7 * kDraws).mask()[0];
    const double gap = static_cast<double>(keep - oracle) / kDraws;
    pass = pass && std::abs(gap) <= 0.01;
    detail += fmt("p_keep %.2f: train %.4f vs oracle %.4f; ", pk, static_cast<double>(keep) / kDraws,
                  static_cast<double>(oracle) / kDraws);
  }
  std::mt19937_64 rng(7);
  int stable = 0;
  for (int i = 0; i < 1000; ++i) {
    const Tensor s = softmax_rows(random_tensor({2, 6, 2}, rng, -3, 3));
    const KeepDecision d = gumbel_decision(s, Phase::infer, 0.5, 0);
    bool ok = true;
    for (std::size_t r = 0; r < 12; ++r) ok = ok && d.mask()[r] == (s[2 * r] >= s[2 * r + 1] ? 1 : 0);
    for (std::uint64_t seed : {1ULL, 99ULL, 123456789ULL})
      for (double tau : {0.1, 0.5, 2.0}) ok = ok && gumbel_decision(s, Phase::infer, tau, seed) == d;
    stable += ok;
  }
  pass = pass && stable == 1000;
  return {pass, detail + fmt("infer deterministic argmax on %d/1000", stable)};
}

Outcome sparsity_loss_checks() {
  // 10 prunable tokens plus a protected class token per image.
  auto decision = [](const std::vector<std::size_t>& kept) {
    std::vector<std::uint8_t> m(11 * kept.size(), 0);
    for (std::size_t b = 0; b < kept.size(); ++b)
      for (std::size_t i = 0; i <= kept[b]; ++i) m[b * 11 + i] = 1;
    return KeepDecision(kept.size(), 11, m, {0});
  };
  const double at_target = sparsity_loss({decision({7})}, {0.3});
  const double batch_mean = sparsity_loss({decision({10, 4}), decision({6, 4})}, {0.3, 0.5});
  const double off = sparsity_loss({decision({8})}, {0.3});

  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.0, 0.95);
  int nonneg = 0, oracle = 0;
  for (int i = 0; i < 10000; ++i) {
    const std::size_t b = 1 + rng() % 4, n = 2 + rng() % 20, phases = 1 + rng() % 3;
    std::vector<KeepDecision> ds;
    std::vector<double> rates;
    double want = 0.0;
    for (std::size_t k = 0; k < phases; ++k) {
      std::vector<std::uint8_t> m(b * n);
      for (auto& v : m) v = rng() % 2;
      ds.emplace_back(b, n, m, std::vector<std::size_t>{0});
      rates.push_back(u(rng));
      double mean = 0.0;
      for (std::size_t j = 0; j < b; ++j) {
        std::size_t kept = 0;
        for (std::size_t t = 1; t < n; ++t) kept += m[j * n + t];
        mean += static_cast<double>(kept) / static_cast<double>(n - 1) / static_cast<double>(b);
      }
      want += (1.0 - rates.back() - mean) * (1.0 - rates.back() - mean);
    }
    const double got = sparsity_loss(ds, rates);
    nonneg += got >= 0.0;
    oracle += std::abs(got - want) < 1e-12;
  }
  const bool pass = at_target == 0.0 && batch_mean == 0.0 && std::abs(off - 0.01) < 1e-12 && nonneg == 10000 &&
                    oracle == 10000;
  return {pass, fmt("on target %.1e, batch-mean target %.1e, rate 0.3 kept 0.8 -> %.15f; nonnegative %d/10000, "
                    "oracle %d/10000",
                    at_target, batch_mean, off, nonneg, oracle)};
}

// Starts of every contiguous partition that satisfies the grouping rule.
std::vector<std::vector<std::size_t>> valid_groupings(const std::vector<double>& r, double tol) {
  const std::size_t n = r.size();
  std::vector<std::vector<std::size_t>> out;
  for (std::uint64_t bits = 0; bits < (1ULL << (n - 1)); ++bits) {
    std::vector<std::size_t> starts{0};
    for (std::size_t i = 1; i < n; ++i)
      if (bits >> (i - 1) & 1) starts.push_back(i);
    bool ok = true;
    for (std::size_t p = 0; p < starts.size() && ok; ++p) {
      const std::size_t s = starts[p], e = p + 1 < starts.size() ? starts[p + 1] : n;
      for (std::size_t i = s + 1; i < e && ok; ++i) ok = std::abs(r[i] - r[s]) < tol - 1e-12;
      if (p > 0 && ok) ok = std::abs(r[s] - r[starts[p - 1]]) >= tol - 1e-12;
    }
    if (ok) out.push_back(starts);
  }
  return out;
}

Outcome schedule_logic() {
  const auto g = phase_grouping({0.10, 0.12, 0.30, 0.31, 0.33, 0.55, 0.56}, 0.085);
  const bool example = g.size() == 3 && g[0] == PhaseSpan{0, 2, 0.10} && g[1] == PhaseSpan{2, 3, 0.30} &&
                       g[2] == PhaseSpan{5, 2, 0.55};

  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.0, 0.7);
  int grouping_ok = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng() % 12;
    std::vector<double> r(n);
    for (auto& v : r) v = trial % 2 ? std::round(u(rng) * 20.0) / 20.0 : u(rng);
    const auto valid = valid_groupings(r, 0.085);
    std::vector<std::size_t> starts;
    bool rates_ok = true;
    for (const auto& p : phase_grouping(r, 0.085)) {
      starts.push_back(p.start);
      rates_ok = rates_ok && p.rate == r[p.start];
    }
    grouping_ok += valid.size() == 1 && starts == valid[0] && rates_ok;
  }

  std::uniform_real_distribution<double> sens(0.5, 40.0);
  int schedule_ok = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t L = 2 + rng() % 11;
    std::vector<double> s(L);
    for (auto& v : s) v = sens(rng);
    const double max_rate = trial % 3 == 0 ? 0.5 : 0.9;
    QuadraticScheduleEnv env(90.0, s, max_rate);
    ScheduleOptions o;
    const ScheduleState st = progressive_schedule(env, o);
    auto acc = [&](const std::vector<double>& r) {
      double a = 90.0;
      for (std::size_t i = 0; i < L; ++i) a -= s[i] * r[i] * r[i];
      return a;
    };
    std::vector<double> rates(L, 0.0);
    for (std::size_t i = L - 1; i >= 1; --i) {
      const double ref = acc(rates);
      const double cap = i + 1 < L ? std::min(max_rate, rates[i + 1]) : max_rate;
      for (int k = 1; k * 0.05 <= cap + 1e-12; ++k) {
        std::vector<double> t = rates;
        t[i] = k * 0.05;
        if (ref - acc(t) > o.drop_threshold) break;
        rates[i] = t[i];
      }
    }
    bool ok = st.block_rates.size() == L;
    for (std::size_t i = 0; ok && i < L; ++i) ok = std::abs(st.block_rates[i] - rates[i]) < 1e-12;
    schedule_ok += ok;
  }
  return {example && grouping_ok == 1000 && schedule_ok == 200,
          fmt("example phases %s; grouping oracle %d/1000; progressive vs per-block brute force %d/200",
              example ? "[0,2,5]" : "WRONG", grouping_ok, schedule_ok)};
}

Outcome desk_training() {
  const ArchConfig pruned = ArchConfig::toy();
  BlobSpec train_spec;
  train_spec.samples = 1000;
  train_spec.seed = 1;
  BlobSpec val_spec = train_spec;
  val_spec.samples = 2000;
  val_spec.seed = 2;
  const Dataset train_set = make_blobs(train_spec), validation = make_blobs(val_spec);
  RecipeOptions o;
  o.seed = 1;
  const RecipeResult with = train_recipe(pruned, train_set, o, true);
  const RecipeResult control = train_recipe(pruned, train_set, o, false);
  const EvalResult sampled = evaluate_sampled(pruned, with.params, validation, o.batch_size, 3);
  const EvalResult argmax = evaluate(pruned, with.params, validation, true);
  const EvalResult base = evaluate(pruned, control.params, validation, false);
  const double target = 1.0 - pruned.target_rates[0];
  const double gap = base.accuracy - sampled.accuracy;
  const bool pass = gap <= 2.0 && std::abs(sampled.kept_fraction[0] - target) <= 0.05;
  return {pass, fmt("pruned %.2f%% (kept %.3f, target %.2f) vs control %.2f%%, gap %.2f pts; "
                    "argmax inference %.2f%% kept %.3f",
                    sampled.accuracy, sampled.kept_fraction[0], target, base.accuracy, gap, argmax.accuracy,
                    argmax.kept_fraction[0])};
}

Outcome selector_overhead() {
  std::string detail;
  bool pass = true;
  for (const ArchConfig& c : {ArchConfig::deit_tiny(), ArchConfig::deit_small()}) {
    for (const std::vector<double>& r : {std::vector<double>{0.0, 0.0, 0.0}, std::vector<double>{0.3, 0.5, 0.7}}) {
      const ModelCost m = model_flops(c, make_plan(12, c.selector_positions, r));
      pass = pass && m.selector_total > 0 && m.selector_share() < 0.01;
      detail += fmt("C=%zu rates %.1f..%.1f: %.3f%%; ", c.embed_dim, r.front(), r.back(), 100 * m.selector_share());
    }
  }
  detail.resize(detail.size() - 2);
  return {pass, detail};
}

}  // namespace

int main() {
  int failed = 0;
  failed += !run_criterion(1, "flops model", 1, flops_model);
  failed += !run_criterion(2, "latency lookup", 1, latency_lookup);
  failed += !run_criterion(3, "budget solver", 10, budget_solver);
  failed += !run_criterion(4, "strategy comparison", 10, strategy_comparison);
  failed += !run_criterion(5, "gradient integrity", 60, gradient_integrity);
  failed += !run_criterion(6, "mechanism invariants", 120, mechanism_invariants);
  failed += !run_criterion(7, "gumbel statistics", 60, gumbel_statistics);
  failed += !run_criterion(8, "sparsity loss", 10, sparsity_loss_checks);
  failed += !run_criterion(9, "schedule logic", 60, schedule_logic);
  failed += !run_criterion(10, "desk-scale training", 600, desk_training);
  failed += !run_criterion(11, "selector overhead", 1, selector_overhead);
  std::printf("%d of 11 criteria passed\n", 11 - failed);
  return failed == 0 ? 0 : 1;
}
