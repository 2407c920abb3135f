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

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>

#include "latprune/autodiff.hpp"
#include "latprune/params.hpp"

namespace latprune {

inline constexpr double kFiniteDiffStep = 1e-5;

/// Entries where both |analytic| and |numeric| fall below this are compared
/// against it instead of their own magnitude.
inline constexpr double kGradCheckFloor = 1e-6;

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t probes = 0;
  std::string worst_entry;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

/// |a - n| / max(|a|, |n|, kGradCheckFloor)
double relative_error(double analytic, double numeric);

using ScalarFn = std::function<Var(Tape&, const Var&)>;

/// Tape gradient of f at `point` against central differences. When
/// max_probes > 0 and smaller than the point, `seed` picks the probed subset.
GradCheckResult grad_check(const ScalarFn& f, const Tensor& point, std::uint64_t seed = 0,
                           std::size_t max_probes = 0);

using ParamFn = std::function<Var(const BoundParams&)>;

/// Same check over every tensor in a parameter store.
GradCheckResult grad_check_params(const ParamFn& f, const ParamStore& params, std::uint64_t seed = 0,
                                  std::size_t max_probes = 0);

}  // namespace latprune
