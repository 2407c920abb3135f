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

// Text configuration: one `key = value` per line, `#` starts a comment, lists
// are comma separated. An optional leading `preset = deit-t|deit-s|toy` line
// selects the base that later keys override.
//
//   blocks, embed_dim, heads, attn_dim, fc_dim, image_size, patch_size,
//   in_channels, num_classes      unsigned integers
//   selector_positions            list of block indices, may be empty
//   target_rates                  list of cumulative rates, may be empty
//   use_cls_token                 true | false
//   package_policy                concat_per_phase | merge_single
//   gumbel_tau                    positive real

#pragma once

#include <cstdint>
#include <string>

#include "latprune/backbone.hpp"

namespace latprune {

/// Throws ConfigError naming the offending key, or the line for syntax errors.
ArchConfig parse_config(const std::string& text);
ArchConfig load_config(const std::string& path);
/// Canonical text; parse_config(serialize_config(c)) == c.
std::string serialize_config(const ArchConfig& config);

/// deit-t, deit-s or toy; ConfigError otherwise.
ArchConfig preset_config(const std::string& name);
/// A preset name or a config file path.
ArchConfig resolve_config(const std::string& name_or_path);

/// FNV-1a 64 over the canonical text.
std::uint64_t config_digest(const ArchConfig& config);
std::string digest_hex(std::uint64_t digest);

}  // namespace latprune
