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

#include "latprune/weight_file.hpp"

#include <bit>
#include <fstream>
#include <sstream>

#include "latprune/config_file.hpp"
#include "latprune/errors.hpp"

namespace latprune {
namespace {

constexpr char kMagic[4] = {'L', 'P', 'R', 'W'};

template <typename T>
void put(std::string& out, T v) {
  auto u = std::bit_cast<std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>>(v);
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((u >> (8 * i)) & 0xFF));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
    need(sizeof(T));
    U u = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) u |= static_cast<U>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += sizeof(T);
    return std::bit_cast<T>(u);
  }

  std::string take(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw ValidationError("weight file truncated");
  }
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode_weights(const ArchConfig& config, const ParamStore& params) {
  std::string out(kMagic, 4);
  put<std::uint32_t>(out, kWeightFileVersion);
  put<std::uint64_t>(out, config_digest(config));
  put<std::uint64_t>(out, params.size());
  for (const auto& [name, t] : params) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) put<std::uint64_t>(out, d);
    for (double v : t.values()) put<double>(out, v);
  }
  return out;
}

ParamStore decode_weights(const std::string& bytes, const ArchConfig& config) {
  Reader r(bytes);
  if (r.take(4) != std::string(kMagic, 4)) throw ValidationError("not a weight file (bad magic)");
  const auto version = r.get<std::uint32_t>();
  if (version != kWeightFileVersion) throw ValidationError("unsupported weight file version " + std::to_string(version));
  const auto digest = r.get<std::uint64_t>();
  if (digest != config_digest(config)) {
    throw ValidationError("weight file digest " + digest_hex(digest) + " does not match config digest " +
                          digest_hex(config_digest(config)));
  }
  const auto count = r.get<std::uint64_t>();
  ParamStore params;
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::string name = r.take(r.get<std::uint32_t>());
    const auto rank = r.get<std::uint32_t>();
    if (rank > 8) throw ValidationError("weight file: implausible rank for " + name);
    Shape shape;
    for (std::uint32_t d = 0; d < rank; ++d) shape.push_back(r.get<std::uint64_t>());
    const std::size_t n = shape_numel(shape);
    if (n > bytes.size() / 8) throw ValidationError("weight file: implausible extent for " + name);
    std::vector<double> data(n);
    for (auto& v : data) v = r.get<double>();
    params.set(name, Tensor(std::move(shape), std::move(data)));
  }
  if (!r.done()) throw ValidationError("weight file: trailing bytes");
  return params;
}

void save_weights(const std::string& path, const ArchConfig& config, const ParamStore& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write " + path);
  const std::string bytes = encode_weights(config, params);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ValidationError("write failed for " + path);
}

ParamStore load_weights(const std::string& path, const ArchConfig& config) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open weight file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return decode_weights(ss.str(), config);
}

}  // namespace latprune
