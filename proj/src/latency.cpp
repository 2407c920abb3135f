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

#include "latprune/latency.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "latprune/errors.hpp"

namespace latprune {
namespace {

constexpr double kFeasibilityTol = 1e-9;

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double parse_number(const std::string& field, std::size_t row) {
  const std::string t = trim(field);
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(t, &used);
  } catch (const std::exception&) {
    throw ValidationError("latency table row " + std::to_string(row) + ": '" + t + "' is not a number");
  }
  if (used != t.size() || !std::isfinite(v)) {
    throw ValidationError("latency table row " + std::to_string(row) + ": '" + t + "' is not a number");
  }
  return v;
}

}  // namespace

LatencyTable::LatencyTable(std::string device, std::vector<LatencyEntry> entries)
    : device_(std::move(device)), entries_(std::move(entries)) {
  if (entries_.size() < 2) throw ValidationError("latency table needs at least 2 rows");
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const auto& e = entries_[i];
    const std::string row = "latency table row " + std::to_string(i + 1);
    if (!(e.rate >= 0.0 && e.rate < 1.0)) throw ValidationError(row + ": rate outside [0, 1)");
    if (!(e.latency_ms > 0.0)) throw ValidationError(row + ": latency must be positive");
    if (i > 0 && !(e.rate > entries_[i - 1].rate)) throw ValidationError(row + ": rates not strictly increasing");
    if (i > 0 && !(e.latency_ms < entries_[i - 1].latency_ms)) {
      throw ValidationError(row + ": latencies not strictly decreasing");
    }
  }
}

LatencyTable LatencyTable::deit_tiny() {
  return LatencyTable("deit-t", {{0.0, 0.689}, {0.1, 0.630}, {0.2, 0.587}, {0.3, 0.509}, {0.4, 0.468}, {0.5, 0.424}});
}

LatencyTable LatencyTable::deit_small() {
  return LatencyTable("deit-s", {{0.0, 2.107}, {0.1, 1.891}, {0.2, 1.710}, {0.3, 1.503}, {0.4, 1.315}, {0.5, 1.121}});
}

LatencyTable parse_table(const std::string& text, const std::string& device) {
  std::istringstream in(text);
  std::string line;
  bool header = false;
  std::vector<LatencyEntry> entries;
  while (std::getline(in, line)) {
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    if (!header) {
      std::string h;
      for (char c : line) {
        if (c != ' ' && c != '\t') h.push_back(c);
      }
      if (h != "rate,latency_ms") throw ValidationError("latency table: expected header 'rate,latency_ms'");
      header = true;
      continue;
    }
    const std::size_t row = entries.size() + 1;
    const auto comma = line.find(',');
    if (comma == std::string::npos || line.find(',', comma + 1) != std::string::npos) {
      throw ValidationError("latency table row " + std::to_string(row) + ": expected 2 fields");
    }
    entries.push_back({parse_number(line.substr(0, comma), row), parse_number(line.substr(comma + 1), row)});
  }
  if (!header) throw ValidationError("latency table: missing header");
  return LatencyTable(device, std::move(entries));
}

LatencyTable load_table(const std::string& path, const std::string& device) {
  std::ifstream in(path);
  if (!in) throw ValidationError("latency table: cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_table(ss.str(), device.empty() ? std::filesystem::path(path).stem().string() : device);
}

std::string format_table(const LatencyTable& table) {
  std::string out = "rate,latency_ms\n";
  char buf[64];
  for (const auto& e : table.entries()) {
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g\n", e.rate, e.latency_ms);
    out += buf;
  }
  return out;
}

double block_lat(const LatencyTable& table, double rate) {
  const auto& es = table.entries();
  if (!(rate >= table.min_rate() && rate <= table.max_rate())) {
    throw RangeError("rate " + std::to_string(rate) + " outside latency table range [" +
                     std::to_string(table.min_rate()) + ", " + std::to_string(table.max_rate()) + "]");
  }
  for (std::size_t i = 0; i + 1 < es.size(); ++i) {
    if (rate == es[i].rate) return es[i].latency_ms;
    if (rate < es[i + 1].rate) {
      const double t = (rate - es[i].rate) / (es[i + 1].rate - es[i].rate);
      return es[i].latency_ms + t * (es[i + 1].latency_ms - es[i].latency_ms);
    }
  }
  return es.back().latency_ms;
}

double plan_latency(const LatencyTable& table, const PruningPlan& plan) {
  double total = 0.0;
  for (double r : plan.rates) total += block_lat(table, r);
  return total;
}

double grid_rate(std::size_t k, double step) {
  const double per_unit = std::round(1.0 / step);
  if (std::abs(per_unit * step - 1.0) < 1e-12) return static_cast<double>(k) / per_unit;
  return static_cast<double>(k) * step;
}

PruningPlan solve_budget(const LatencyTable& table, std::size_t blocks, const std::vector<std::size_t>& positions,
                         double budget_ms, double grid_step) {
  if (!(grid_step > 0.0)) throw ConfigError("solve_budget: grid step must be positive");
  std::vector<double> grid;
  for (std::size_t k = 0;; ++k) {
    const double r = table.min_rate() + grid_rate(k, grid_step);
    if (r > table.max_rate() + 1e-12) break;
    grid.push_back(std::min(r, table.max_rate()));
  }
  const std::size_t phases = positions.size();
  std::vector<std::size_t> lengths(phases);
  for (std::size_t i = 0; i < phases; ++i) {
    lengths[i] = (i + 1 < phases ? positions[i + 1] : blocks) - positions[i];
  }

  auto build = [&](const std::vector<std::size_t>& idx) {
    std::vector<double> rates(phases);
    for (std::size_t i = 0; i < phases; ++i) rates[i] = grid[idx[i]];
    PruningPlan plan = make_plan(blocks, positions, rates);
    plan.latency_ms = plan_latency(table, plan);
    return plan;
  };

  std::vector<std::size_t> top(phases, grid.size() - 1);
  const PruningPlan fastest = build(top);
  if (fastest.latency_ms > budget_ms + kFeasibilityTol) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "budget %.6g ms infeasible; minimum achievable latency %.6g ms", budget_ms,
                  fastest.latency_ms);
    throw InfeasibleError(buf, fastest.latency_ms);
  }

  // Enumerate nondecreasing index tuples in lexicographic order; the first
  // feasible tuple at the lowest weighted index sum wins.
  std::vector<std::size_t> idx(phases, 0), best;
  std::size_t best_cost = 0;
  bool found = false;
  auto visit = [&](auto&& self, std::size_t i, std::size_t lo, std::size_t cost) -> void {
    if (found && cost > best_cost) return;
    if (i == phases) {
      if (found && cost >= best_cost) return;
      PruningPlan p = build(idx);
      if (p.latency_ms <= budget_ms + kFeasibilityTol) {
        best = idx;
        best_cost = cost;
        found = true;
      }
      return;
    }
    for (std::size_t k = lo; k < grid.size(); ++k) {
      idx[i] = k;
      self(self, i + 1, k, cost + k * lengths[i]);
    }
  };
  visit(visit, 0, 0, 0);
  PruningPlan plan = build(best);
  return plan;
}

double sparsity_loss(const std::vector<KeepDecision>& decisions, const std::vector<double>& rates) {
  if (decisions.size() != rates.size()) {
    throw DimensionError("sparsity_loss: " + std::to_string(decisions.size()) + " decisions but " +
                         std::to_string(rates.size()) + " rates");
  }
  double loss = 0.0;
  for (std::size_t i = 0; i < decisions.size(); ++i) {
    const auto& d = decisions[i];
    if (d.batch() == 0) throw DimensionError("sparsity_loss: empty batch");
    double mean = 0.0;
    for (std::size_t b = 0; b < d.batch(); ++b) mean += d.kept_fraction(b);
    mean /= static_cast<double>(d.batch());
    const double gap = 1.0 - rates[i] - mean;
    loss += gap * gap;
  }
  return loss;
}

}  // namespace latprune
