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
#include <string>

#include <doctest.h>

#include "latprune/errors.hpp"
#include "latprune/latency.hpp"
#include "test_support.hpp"

using namespace latprune;

namespace {

const std::string kSource = LATPRUNE_SOURCE_DIR;

}  // namespace

TEST_CASE("built-in and file tables carry the measured rows") {
  const LatencyTable t = LatencyTable::deit_tiny();
  CHECK(block_lat(t, 0.0) == 0.689);
  CHECK(block_lat(t, 0.5) == 0.424);
  CHECK(block_lat(LatencyTable::deit_small(), 0.3) == 1.503);
  const LatencyTable ft = load_table(kSource + "/data/deit-t.csv");
  const LatencyTable fs = load_table(kSource + "/data/deit-s.csv");
  CHECK(ft.device() == "deit-t");
  REQUIRE(ft.entries().size() == t.entries().size());
  for (std::size_t i = 0; i < ft.entries().size(); ++i) {
    CHECK(ft.entries()[i].rate == t.entries()[i].rate);
    CHECK(ft.entries()[i].latency_ms == t.entries()[i].latency_ms);
    CHECK(fs.entries()[i].latency_ms == LatencyTable::deit_small().entries()[i].latency_ms);
  }
  CHECK(parse_table(format_table(t), "x").entries().size() == 6);
}

TEST_CASE("malformed tables are rejected with the row") {
  auto message = [](const std::string& text) {
    try {
      parse_table(text, "x");
    } catch (const ValidationError& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  CHECK(message("rate,latency_ms\n0.0,1.0\n0.1,1.2\n").find("row 2") != std::string::npos);
  CHECK(message("rate,latency_ms\n0.0,1.0\n0.1,abc\n").find("row 2") != std::string::npos);
  CHECK(message("rate,latency_ms\n0.2,1.0\n0.1,0.9\n").find("row 2") != std::string::npos);
  CHECK(message("rate,latency_ms\n0.0,1.0,3\n").find("row 1") != std::string::npos);
  CHECK_FALSE(message("rate,latency_ms\n0.0,1.0\n").empty());
  CHECK_FALSE(message("0.0,1.0\n0.1,0.9\n").empty());
  CHECK_THROWS_AS(load_table(kSource + "/data/missing.csv"), ValidationError);
}

TEST_CASE("block latency lookup") {
  const LatencyTable t = LatencyTable::deit_tiny();
  CHECK(block_lat(t, 0.2) == 0.587);
  CHECK(std::abs(block_lat(t, 0.25) - 0.548) <= 1e-9);
  CHECK_THROWS_AS(block_lat(t, 0.6), RangeError);
  CHECK_THROWS_AS(block_lat(t, -0.01), RangeError);
  double prev = 1e9;
  for (int k = 0; k <= 50; ++k) {
    const double v = block_lat(t, k * 0.01);
    CHECK(v < prev);
    prev = v;
  }
}

TEST_CASE("plan latency") {
  const LatencyTable t = LatencyTable::deit_tiny();
  CHECK(plan_latency(t, dense_plan(12)) == doctest::Approx(8.268).epsilon(1e-14));
  CHECK(plan_latency(LatencyTable::deit_small(), make_plan(1, {0}, {0.5})) == 1.121);
  CHECK(plan_latency(t, PruningPlan{}) == 0.0);
}

TEST_CASE("budget solver examples") {
  const LatencyTable t = LatencyTable::deit_tiny();
  const PruningPlan p = solve_budget(t, 12, {0}, 12 * 0.509);
  REQUIRE(p.phase_rates.size() == 1);
  CHECK(p.phase_rates[0] == doctest::Approx(0.3));
  for (double r : p.rates) CHECK(r == doctest::Approx(0.3));
  CHECK(p.latency_ms <= 12 * 0.509 + 1e-9);

  CHECK(solve_budget(t, 12, {0}, 9.0).phase_rates == std::vector<double>{0.0});
  CHECK(solve_budget(t, 12, {3, 6, 9}, 12 * 0.689).phase_rates == std::vector<double>{0.0, 0.0, 0.0});
  try {
    solve_budget(t, 12, {0}, 5.0);
    FAIL("expected infeasible");
  } catch (const InfeasibleError& e) {
    CHECK(e.min_latency_ms() == doctest::Approx(5.088).epsilon(1e-12));
  }
}

TEST_CASE("budget solver agrees with exhaustive search") {
  const LatencyTable t = LatencyTable::deit_tiny();
  std::vector<std::pair<double, double>> pts;
  for (const auto& e : t.entries()) pts.emplace_back(e.rate, e.latency_ms);
  std::mt19937_64 rng(5);
  const std::vector<std::vector<std::size_t>> layouts{{0}, {3, 6, 9}, {0, 6}, {2, 5, 8, 10}};
  std::uniform_real_distribution<double> budget(5.0, 8.4);
  for (int i = 0; i < 100; ++i) {
    const auto& pos = layouts[i % layouts.size()];
    const double b = budget(rng);
    testing::OraclePlan want;
    if (!testing::budget_oracle(pts, 12, pos, b, want)) {
      CHECK_THROWS_AS(solve_budget(t, 12, pos, b), InfeasibleError);
      continue;
    }
    const PruningPlan got = solve_budget(t, 12, pos, b);
    REQUIRE(got.phase_rates.size() == want.phase_rates.size());
    for (std::size_t k = 0; k < got.phase_rates.size(); ++k) CHECK(got.phase_rates[k] == doctest::Approx(want.phase_rates[k]));
    CHECK(got.latency_ms == doctest::Approx(want.latency).epsilon(1e-12));
    CHECK(got.latency_ms <= b + 1e-9);
  }
}

TEST_CASE("sparsity loss") {
  // 10 prunable tokens plus a protected class token.
  auto decision = [](std::size_t kept) {
    std::vector<std::uint8_t> m(11, 0);
    for (std::size_t i = 0; i <= kept; ++i) m[i] = 1;
    return KeepDecision(1, 11, m, {0});
  };
  CHECK(sparsity_loss({decision(7)}, {0.3}) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(sparsity_loss({decision(8)}, {0.3}) == doctest::Approx(0.01).epsilon(1e-12));
  CHECK(sparsity_loss({}, {}) == 0.0);
  CHECK_THROWS_AS(sparsity_loss({decision(8)}, {0.3, 0.5}), DimensionError);

  // Batch mean on target with unequal images.
  std::vector<std::uint8_t> two(22, 0);
  for (std::size_t i = 0; i <= 9; ++i) two[i] = 1;
  for (std::size_t i = 11; i <= 16; ++i) two[i] = 1;
  CHECK(sparsity_loss({KeepDecision(2, 11, two, {0})}, {0.3}) == doctest::Approx(0.0).epsilon(1e-15));
}
