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

#include "latprune/data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <string>

#include "latprune/errors.hpp"

namespace latprune {

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  Shape s = images.shape();
  const std::size_t per = images.size() / std::max<std::size_t>(1, s[0]);
  s[0] = indices.size();
  std::vector<double> data;
  data.reserve(per * indices.size());
  Dataset out;
  for (std::size_t i : indices) {
    if (i >= size()) throw DimensionError("dataset index " + std::to_string(i) + " out of range");
    const auto* src = images.values().data() + i * per;
    data.insert(data.end(), src, src + per);
    out.labels.push_back(labels[i]);
  }
  out.images = Tensor(s, std::move(data));
  return out;
}

Dataset Dataset::slice(std::size_t begin, std::size_t end) const {
  std::vector<std::size_t> idx;
  for (std::size_t i = begin; i < end && i < size(); ++i) idx.push_back(i);
  return subset(idx);
}

Dataset make_blobs(const BlobSpec& spec) {
  if (spec.classes < 2) throw ConfigError("classes must be at least 2");
  if (spec.image_size < 2) throw ConfigError("image_size must be at least 2");
  if (spec.noise < 0.0) throw ConfigError("noise must be nonnegative");
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const std::size_t S = spec.image_size;
  const double mid = 0.5 * static_cast<double>(S) - 0.5;
  const double radius = static_cast<double>(S) / 4.0;
  Dataset d;
  d.images = Tensor({spec.samples, S, S, 1});
  d.labels.resize(spec.samples);
  for (std::size_t i = 0; i < spec.samples; ++i) {
    const int c = static_cast<int>(i % spec.classes);
    d.labels[i] = c;
    const double angle = 2.0 * std::numbers::pi * c / static_cast<double>(spec.classes) + std::numbers::pi / 4.0;
    const double cy = mid + radius * std::sin(angle) + spec.jitter * normal(rng);
    const double cx = mid + radius * std::cos(angle) + spec.jitter * normal(rng);
    for (std::size_t y = 0; y < S; ++y) {
      for (std::size_t x = 0; x < S; ++x) {
        const double dy = static_cast<double>(y) - cy, dx = static_cast<double>(x) - cx;
        const double v = std::exp(-(dx * dx + dy * dy) / (2.0 * spec.blob_sigma * spec.blob_sigma));
        d.images[(i * S + y) * S + x] = v + spec.noise * normal(rng);
      }
    }
  }
  return d;
}

Tensor read_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open image " + path);
  auto token = [&]() {
    std::string t;
    char ch;
    while (in.get(ch)) {
      if (ch == '#') {
        std::string skip;
        std::getline(in, skip);
        continue;
      }
      if (std::isspace(static_cast<unsigned char>(ch))) {
        if (!t.empty()) break;
        continue;
      }
      t.push_back(ch);
    }
    return t;
  };
  const std::string magic = token();
  if (magic != "P5" && magic != "P2") throw ValidationError(path + ": not a portable graymap");
  std::size_t w = 0, h = 0;
  double maxval = 0;
  try {
    w = std::stoul(token());
    h = std::stoul(token());
    maxval = std::stod(token());
  } catch (const std::exception&) {
    throw ValidationError(path + ": malformed graymap header");
  }
  if (w == 0 || h == 0 || maxval <= 0 || maxval > 65535) throw ValidationError(path + ": bad graymap header");
  Tensor img({1, h, w, 1});
  for (std::size_t i = 0; i < w * h; ++i) {
    double v = 0;
    if (magic == "P2") {
      const std::string t = token();
      if (t.empty()) throw ValidationError(path + ": truncated graymap");
      v = std::stod(t);
    } else if (maxval < 256) {
      char b;
      if (!in.get(b)) throw ValidationError(path + ": truncated graymap");
      v = static_cast<unsigned char>(b);
    } else {
      char b[2];
      if (!in.read(b, 2)) throw ValidationError(path + ": truncated graymap");
      v = static_cast<unsigned char>(b[0]) * 256.0 + static_cast<unsigned char>(b[1]);
    }
    img[i] = v / maxval;
  }
  return img;
}

}  // namespace latprune
