/*
 * Copyright 2026 The fedtopo Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Dataset loading (IDX, CIFAR-10 binary), mean-std normalisation and the
// synthetic disk/annulus generator.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace fedtopo::data {

// Parse failure with the byte offset at which the file stopped making sense.
struct FormatError : std::runtime_error {
  FormatError(const std::string& file, std::size_t offset, const std::string& what);
  std::size_t offset;
};

struct Normalization {
  std::vector<double> mean;  // per channel
  std::vector<double> std;
};

struct Dataset {
  std::size_t count = 0, channels = 0, height = 0, width = 0;
  std::size_t num_classes = 0;
  std::vector<double> images;  // count x channels x height x width
  std::vector<int> labels;
  Normalization norm;          // applied to `images`; empty = raw [0, 1]
  std::string split = "train";

  std::size_t sample_size() const { return channels * height * width; }
  std::span<const double> sample(std::size_t i) const {
    return {images.data() + i * sample_size(), sample_size()};
  }
  // Throws std::invalid_argument when sizes or labels are inconsistent.
  void validate() const;
};

// Raw IDX contents. Accepts gzip or uncompressed files.
struct IdxImages {
  std::size_t count = 0, rows = 0, cols = 0;
  std::vector<std::uint8_t> pixels;
};
IdxImages read_idx_images(const std::filesystem::path& path);
std::vector<std::uint8_t> read_idx_labels(const std::filesystem::path& path);

// Pixels scaled to [0, 1] and normalised. Without `stats` the statistics are
// fitted on this split (use for train; pass train's stats for test).
Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                 const std::optional<Normalization>& stats = std::nullopt);
// Concatenates CIFAR-10 binary batches (records of 1 label + 3072 bytes).
Dataset load_cifar10(std::span<const std::filesystem::path> batches,
                     const std::optional<Normalization>& stats = std::nullopt);

Normalization fit_normalization(const Dataset& raw);
// In place; `ds` must be raw.
void normalize(Dataset& ds, const Normalization& stats);
// In place; back to raw [0, 1] scale.
void denormalize(Dataset& ds);

// The selected samples in the given order.
Dataset subset(const Dataset& ds, std::span<const std::size_t> indices);
// First `count / K` samples of every class in dataset order (the first
// `count % K` classes take one more), kept in dataset order.
Dataset stratified_subsample(const Dataset& ds, std::size_t count);

struct Range {
  double lo, hi;
};

// Bright shapes on a dark background: label 0 is a filled disk, label 1 an
// annulus. Samples alternate disk/annulus.
struct SyntheticSpec {
  std::size_t image_size = 28;
  std::size_t count_per_class = 100;
  Range disk_radius{5.0, 10.0};
  Range annulus_outer{8.0, 11.0};
  Range annulus_width{2.5, 4.0};  // outer minus inner radius
  double noise = 0.0;             // std of additive Gaussian noise
  std::uint64_t seed = 0;
  bool normalize = true;

  // Throws std::invalid_argument when a shape cannot fit or radii are empty.
  void validate() const;
};
Dataset gen_synthetic(const SyntheticSpec& spec);

}  // namespace fedtopo::data
