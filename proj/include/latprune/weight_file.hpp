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

// Binary weight file, all integers and reals little-endian:
//
//   "LPRW"  u32 version  u64 config digest  u64 parameter count
//   per parameter, in name order:
//     u32 name length, name bytes, u32 rank, u64 dims[rank], f64 values (row-major)

#pragma once

#include <cstdint>
#include <string>

#include "latprune/backbone.hpp"
#include "latprune/params.hpp"

namespace latprune {

inline constexpr std::uint32_t kWeightFileVersion = 1;

std::string encode_weights(const ArchConfig& config, const ParamStore& params);
/// Throws ValidationError on a malformed file or a digest that differs from
/// `config`.
ParamStore decode_weights(const std::string& bytes, const ArchConfig& config);

void save_weights(const std::string& path, const ArchConfig& config, const ParamStore& params);
ParamStore load_weights(const std::string& path, const ArchConfig& config);

}  // namespace latprune
