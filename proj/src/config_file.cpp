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

#include "latprune/config_file.hpp"

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <vector>

#include "latprune/errors.hpp"

namespace latprune {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

std::size_t to_size(const std::string& key, const std::string& v) {
  const std::string t = trim(v);
  if (t.empty() || t.find_first_not_of("0123456789") != std::string::npos) {
    throw ConfigError(key + ": expected an unsigned integer, got '" + t + "'");
  }
  try {
    return static_cast<std::size_t>(std::stoull(t));
  } catch (const std::exception&) {
    throw ConfigError(key + ": integer out of range");
  }
}

double to_double(const std::string& key, const std::string& v) {
  const std::string t = trim(v);
  std::size_t used = 0;
  double d = 0;
  try {
    d = std::stod(t, &used);
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected a number, got '" + t + "'");
  }
  if (used != t.size() || !std::isfinite(d)) throw ConfigError(key + ": expected a number, got '" + t + "'");
  return d;
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  const std::string t = trim(v);
  if (t.empty()) return out;
  std::stringstream ss(t);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(item);
  return out;
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

using Setter = std::function<void(ArchConfig&, const std::string& key, const std::string& value)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = [] {
    std::map<std::string, Setter> m;
    auto size_field = [](std::size_t ArchConfig::*f) {
      return [f](ArchConfig& c, const std::string& k, const std::string& v) { c.*f = to_size(k, v); };
    };
    m["blocks"] = size_field(&ArchConfig::blocks);
    m["embed_dim"] = size_field(&ArchConfig::embed_dim);
    m["heads"] = size_field(&ArchConfig::heads);
    m["attn_dim"] = size_field(&ArchConfig::attn_dim);
    m["fc_dim"] = size_field(&ArchConfig::fc_dim);
    m["image_size"] = size_field(&ArchConfig::image_size);
    m["patch_size"] = size_field(&ArchConfig::patch_size);
    m["in_channels"] = size_field(&ArchConfig::in_channels);
    m["num_classes"] = size_field(&ArchConfig::num_classes);
    m["selector_positions"] = [](ArchConfig& c, const std::string& k, const std::string& v) {
      c.selector_positions.clear();
      for (const auto& item : split_list(v)) c.selector_positions.push_back(to_size(k, item));
    };
    m["target_rates"] = [](ArchConfig& c, const std::string& k, const std::string& v) {
      c.target_rates.clear();
      for (const auto& item : split_list(v)) c.target_rates.push_back(to_double(k, item));
    };
    m["use_cls_token"] = [](ArchConfig& c, const std::string& k, const std::string& v) {
      const std::string t = trim(v);
      if (t != "true" && t != "false") throw ConfigError(k + ": expected true or false");
      c.use_cls_token = t == "true";
    };
    m["package_policy"] = [](ArchConfig& c, const std::string& k, const std::string& v) {
      try {
        c.package_policy = package_policy_from_string(trim(v));
      } catch (const Error& e) {
        throw ConfigError(k + ": " + e.what());
      }
    };
    m["gumbel_tau"] = [](ArchConfig& c, const std::string& k, const std::string& v) {
      c.gumbel_tau = to_double(k, v);
    };
    return m;
  }();
  return table;
}

}  // namespace

ArchConfig preset_config(const std::string& name) {
  if (name == "deit-t") return ArchConfig::deit_tiny();
  if (name == "deit-s") return ArchConfig::deit_small();
  if (name == "toy") return ArchConfig::toy();
  throw ConfigError("preset: unknown preset '" + name + "' (deit-t, deit-s, toy)");
}

ArchConfig parse_config(const std::string& text) {
  ArchConfig c;
  std::istringstream in(text);
  std::string line;
  std::set<std::string> seen;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq)), value = line.substr(eq + 1);
    if (!seen.insert(key).second) throw ConfigError(key + ": duplicate key");
    if (key == "preset") {
      if (seen.size() != 1) throw ConfigError("preset: must come before other keys");
      c = preset_config(trim(value));
      continue;
    }
    const auto it = setters().find(key);
    if (it == setters().end()) throw ConfigError(key + ": unknown key");
    it->second(c, key, value);
  }
  c.validate();
  return c;
}

ArchConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

ArchConfig resolve_config(const std::string& name_or_path) {
  if (name_or_path == "deit-t" || name_or_path == "deit-s" || name_or_path == "toy") {
    return preset_config(name_or_path);
  }
  return load_config(name_or_path);
}

std::string serialize_config(const ArchConfig& c) {
  std::string out;
  auto line = [&out](const char* key, const std::string& value) { out += std::string(key) + " = " + value + "\n"; };
  line("blocks", std::to_string(c.blocks));
  line("embed_dim", std::to_string(c.embed_dim));
  line("heads", std::to_string(c.heads));
  line("attn_dim", std::to_string(c.attn_dim));
  line("fc_dim", std::to_string(c.fc_dim));
  line("image_size", std::to_string(c.image_size));
  line("patch_size", std::to_string(c.patch_size));
  line("in_channels", std::to_string(c.in_channels));
  line("num_classes", std::to_string(c.num_classes));
  std::string pos, rates;
  for (std::size_t i = 0; i < c.selector_positions.size(); ++i) {
    pos += (i ? ", " : "") + std::to_string(c.selector_positions[i]);
  }
  for (std::size_t i = 0; i < c.target_rates.size(); ++i) rates += (i ? ", " : "") + fmt_double(c.target_rates[i]);
  line("selector_positions", pos);
  line("target_rates", rates);
  line("use_cls_token", c.use_cls_token ? "true" : "false");
  line("package_policy", to_string(c.package_policy));
  line("gumbel_tau", fmt_double(c.gumbel_tau));
  return out;
}

std::uint64_t config_digest(const ArchConfig& config) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : serialize_config(config)) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string digest_hex(std::uint64_t digest) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016" PRIx64, digest);
  return buf;
}

}  // namespace latprune
