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

#include "latprune/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "latprune/errors.hpp"

namespace latprune {
namespace {

double scalar_value(const Var& out) {
  if (out.value().size() != 1) {
    throw ContractError("grad_check needs a scalar-valued function, got " + shape_str(out.shape()));
  }
  return out.value()[0];
}

std::vector<std::size_t> probe_indices(std::size_t total, std::uint64_t seed, std::size_t max_probes) {
  std::vector<std::size_t> idx(total);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (max_probes == 0 || max_probes >= total) return idx;
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(max_probes);
  std::sort(idx.begin(), idx.end());
  return idx;
}

void record(GradCheckResult& r, double a, double n, const std::string& entry) {
  const double e = relative_error(a, n);
  ++r.probes;
  if (e >= r.max_rel_error) {
    r.max_rel_error = e;
    r.worst_entry = entry;
    r.worst_analytic = a;
    r.worst_numeric = n;
  }
}

}  // namespace

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), kGradCheckFloor});
  return std::abs(analytic - numeric) / denom;
}

GradCheckResult grad_check(const ScalarFn& f, const Tensor& point, std::uint64_t seed, std::size_t max_probes) {
  Tensor analytic;
  {
    Tape tape;
    Var x = tape.leaf(point, true);
    Var out = f(tape, x);
    scalar_value(out);
    tape.backward(out);
    analytic = tape.grad(x);
  }
  auto eval = [&](const Tensor& p) {
    Tape tape(false);
    return scalar_value(f(tape, tape.constant(p)));
  };
  GradCheckResult r;
  Tensor probe = point;
  for (std::size_t i : probe_indices(point.size(), seed, max_probes)) {
    const double orig = probe[i];
    probe[i] = orig + kFiniteDiffStep;
    const double up = eval(probe);
    probe[i] = orig - kFiniteDiffStep;
    const double down = eval(probe);
    probe[i] = orig;
    record(r, analytic[i], (up - down) / (2.0 * kFiniteDiffStep), "x[" + std::to_string(i) + "]");
  }
  return r;
}

GradCheckResult grad_check_params(const ParamFn& f, const ParamStore& params, std::uint64_t seed,
                                  std::size_t max_probes) {
  ParamStore analytic;
  {
    Tape tape;
    BoundParams bound(tape, params, true);
    Var out = f(bound);
    scalar_value(out);
    tape.backward(out);
    analytic = bound.grads();
  }
  // Flatten (name, index) so the probe subset is drawn over all entries.
  std::vector<std::pair<std::string, std::size_t>> entries;
  for (const auto& [name, t] : params)
    for (std::size_t i = 0; i < t.size(); ++i) entries.emplace_back(name, i);

  ParamStore probe = params;
  auto eval = [&]() {
    Tape tape(false);
    BoundParams bound(tape, probe, false);
    return scalar_value(f(bound));
  };
  GradCheckResult r;
  for (std::size_t k : probe_indices(entries.size(), seed, max_probes)) {
    const auto& [name, i] = entries[k];
    Tensor& t = probe.get(name);
    const double orig = t[i];
    t[i] = orig + kFiniteDiffStep;
    const double up = eval();
    t[i] = orig - kFiniteDiffStep;
    const double down = eval();
    t[i] = orig;
    record(r, analytic.get(name)[i], (up - down) / (2.0 * kFiniteDiffStep), name + "[" + std::to_string(i) + "]");
  }
  return r;
}

}  // namespace latprune
