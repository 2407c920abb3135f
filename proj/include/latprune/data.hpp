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

// Synthetic image classification data.
//
// Class c owns a blob center on a ring of radius image_size / 4 around the
// image center, at angle 2 pi c / classes + pi / 4. Each sample draws its
// center with N(0, jitter) pixel offsets, renders a unit Gaussian blob of
// width blob_sigma, then adds N(0, noise) per pixel. For two classes the
// centers sit in opposite quadrants.

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "latprune/tensor.hpp"

namespace latprune {

struct BlobSpec {
  std::size_t classes = 2;
  std::size_t samples = 1000;
  std::size_t image_size = 8;
  double noise = 0.3;
  std::uint64_t seed = 0;
  double jitter = 0.75;
  double blob_sigma = 1.2;
};

struct Dataset {
  Tensor images;  // [n, H, W, 1]
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
  Dataset subset(std::span<const std::size_t> indices) const;
  Dataset slice(std::size_t begin, std::size_t end) const;
};

Dataset make_blobs(const BlobSpec& spec);

/// Reads a binary (P5) or ASCII (P2) portable graymap as a [1, H, W, 1] image
/// scaled to [0, 1].
Tensor read_pgm(const std::string& path);

}  // namespace latprune
