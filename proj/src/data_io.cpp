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

#include "fedtopo/data_io.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "fedtopo/rng.hpp"

namespace fedtopo::data {

namespace {

constexpr std::uint32_t kImagesMagic = 0x00000803;
constexpr std::uint32_t kLabelsMagic = 0x00000801;
constexpr std::size_t kCifarRecord = 1 + 3 * 32 * 32;

// Whole file, transparently gunzipped.
std::vector<std::uint8_t> slurp(const std::filesystem::path& path) {
  gzFile f = gzopen(path.string().c_str(), "rb");
  if (!f) throw std::runtime_error("cannot open " + path.string());
  std::vector<std::uint8_t> out;
  std::uint8_t buf[1 << 16];
  for (;;) {
    const int n = gzread(f, buf, sizeof buf);
    if (n < 0) {
      int code = 0;
      std::string msg = gzerror(f, &code);
      gzclose(f);
      throw FormatError(path.string(), out.size(), "decompression failed: " + msg);
    }
    if (n == 0) break;
    out.insert(out.end(), buf, buf + n);
  }
  gzclose(f);
  return out;
}

std::uint32_t be32(const std::vector<std::uint8_t>& b, std::size_t off, const std::string& file) {
  if (off + 4 > b.size()) throw FormatError(file, b.size(), "truncated header");
  return (std::uint32_t{b[off]} << 24) | (std::uint32_t{b[off + 1]} << 16) | (std::uint32_t{b[off + 2]} << 8) |
         std::uint32_t{b[off + 3]};
}

std::string hex(std::uint32_t v) {
  char s[16];
  std::snprintf(s, sizeof s, "0x%08x", v);
  return s;
}

void check_magic(std::uint32_t got, std::uint32_t want, const std::string& file) {
  if (got == want) return;
  std::string hint;
  if (got == kImagesMagic) hint = " (this is an image file)";
  if (got == kLabelsMagic) hint = " (this is a label file)";
  throw FormatError(file, 0, "bad magic " + hex(got) + ", expected " + hex(want) + hint);
}

Dataset finish(Dataset ds, const std::optional<Normalization>& stats) {
  ds.validate();
  normalize(ds, stats ? *stats : fit_normalization(ds));
  return ds;
}

}  // namespace

FormatError::FormatError(const std::string& file, std::size_t off, const std::string& what)
    : std::runtime_error(file + ": byte " + std::to_string(off) + ": " + what), offset(off) {}

void Dataset::validate() const {
  if (images.size() != count * sample_size()) throw std::invalid_argument("dataset: image buffer size mismatch");
  if (labels.size() != count) throw std::invalid_argument("dataset: label count mismatch");
  for (int l : labels)
    if (l < 0 || static_cast<std::size_t>(l) >= num_classes)
      throw std::invalid_argument("dataset: label " + std::to_string(l) + " outside [0, " +
                                  std::to_string(num_classes) + ")");
}

IdxImages read_idx_images(const std::filesystem::path& path) {
  const std::string file = path.string();
  const auto b = slurp(path);
  check_magic(be32(b, 0, file), kImagesMagic, file);
  IdxImages out;
  out.count = be32(b, 4, file);
  out.rows = be32(b, 8, file);
  out.cols = be32(b, 12, file);
  if (out.rows == 0 || out.cols == 0) throw FormatError(file, 8, "zero image extent");
  const std::size_t need = 16 + out.count * out.rows * out.cols;
  if (b.size() < need)
    throw FormatError(file, b.size(), "truncated payload, expected " + std::to_string(need) + " bytes");
  if (b.size() > need) throw FormatError(file, need, "trailing bytes after payload");
  out.pixels.assign(b.begin() + 16, b.end());
  return out;
}

std::vector<std::uint8_t> read_idx_labels(const std::filesystem::path& path) {
  const std::string file = path.string();
  const auto b = slurp(path);
  check_magic(be32(b, 0, file), kLabelsMagic, file);
  const std::size_t count = be32(b, 4, file);
  if (b.size() < 8 + count)
    throw FormatError(file, b.size(), "truncated payload, expected " + std::to_string(8 + count) + " bytes");
  if (b.size() > 8 + count) throw FormatError(file, 8 + count, "trailing bytes after payload");
  return {b.begin() + 8, b.end()};
}

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                 const std::optional<Normalization>& stats) {
  const auto img = read_idx_images(images);
  const auto lab = read_idx_labels(labels);
  if (img.count != lab.size()) {
    throw FormatError(labels.string(), 4,
                      "label count " + std::to_string(lab.size()) + " does not match image count " +
                          std::to_string(img.count));
  }
  Dataset ds;
  ds.count = img.count;
  ds.channels = 1;
  ds.height = img.rows;
  ds.width = img.cols;
  ds.num_classes = 10;
  ds.images.resize(img.pixels.size());
  for (std::size_t i = 0; i < img.pixels.size(); ++i) ds.images[i] = img.pixels[i] / 255.0;
  for (std::size_t i = 0; i < lab.size(); ++i) {
    if (lab[i] >= ds.num_classes) throw FormatError(labels.string(), 8 + i, "label " + std::to_string(lab[i]) + " >= 10");
    ds.labels.push_back(lab[i]);
  }
  return finish(std::move(ds), stats);
}

Dataset load_cifar10(std::span<const std::filesystem::path> batches, const std::optional<Normalization>& stats) {
  Dataset ds;
  ds.channels = 3;
  ds.height = ds.width = 32;
  ds.num_classes = 10;
  for (const auto& path : batches) {
    const auto b = slurp(path);
    if (b.size() % kCifarRecord != 0) {
      throw FormatError(path.string(), b.size() - b.size() % kCifarRecord,
                        "length " + std::to_string(b.size()) + " is not a multiple of 3073");
    }
    for (std::size_t off = 0; off < b.size(); off += kCifarRecord) {
      if (b[off] >= 10) throw FormatError(path.string(), off, "label " + std::to_string(b[off]) + " >= 10");
      ds.labels.push_back(b[off]);
      for (std::size_t i = 1; i < kCifarRecord; ++i) ds.images.push_back(b[off + i] / 255.0);
      ++ds.count;
    }
  }
  return finish(std::move(ds), stats);
}

Normalization fit_normalization(const Dataset& raw) {
  Normalization n;
  const std::size_t plane = raw.height * raw.width;
  for (std::size_t c = 0; c < raw.channels; ++c) {
    double s = 0.0, s2 = 0.0;
    for (std::size_t i = 0; i < raw.count; ++i) {
      const double* p = raw.images.data() + (i * raw.channels + c) * plane;
      for (std::size_t k = 0; k < plane; ++k) {
        s += p[k];
        s2 += p[k] * p[k];
      }
    }
    const double m = static_cast<double>(raw.count * plane);
    const double mean = m > 0 ? s / m : 0.0;
    const double var = m > 0 ? std::max(0.0, s2 / m - mean * mean) : 0.0;
    n.mean.push_back(mean);
    n.std.push_back(var > 0.0 ? std::sqrt(var) : 1.0);
  }
  return n;
}

void normalize(Dataset& ds, const Normalization& stats) {
  if (!ds.norm.mean.empty()) throw std::logic_error("normalize: dataset is already normalised");
  if (stats.mean.size() != ds.channels || stats.std.size() != ds.channels)
    throw std::invalid_argument("normalize: statistics have the wrong channel count");
  const std::size_t plane = ds.height * ds.width;
  for (std::size_t i = 0; i < ds.count; ++i)
    for (std::size_t c = 0; c < ds.channels; ++c) {
      double* p = ds.images.data() + (i * ds.channels + c) * plane;
      for (std::size_t k = 0; k < plane; ++k) p[k] = (p[k] - stats.mean[c]) / stats.std[c];
    }
  ds.norm = stats;
}

void denormalize(Dataset& ds) {
  if (ds.norm.mean.empty()) return;
  const std::size_t plane = ds.height * ds.width;
  for (std::size_t i = 0; i < ds.count; ++i)
    for (std::size_t c = 0; c < ds.channels; ++c) {
      double* p = ds.images.data() + (i * ds.channels + c) * plane;
      for (std::size_t k = 0; k < plane; ++k) p[k] = p[k] * ds.norm.std[c] + ds.norm.mean[c];
    }
  ds.norm = {};
}

Dataset subset(const Dataset& ds, std::span<const std::size_t> indices) {
  Dataset out = ds;
  out.count = indices.size();
  out.images.clear();
  out.labels.clear();
  out.images.reserve(indices.size() * ds.sample_size());
  for (std::size_t i : indices) {
    if (i >= ds.count) throw std::out_of_range("subset: index " + std::to_string(i) + " out of range");
    auto s = ds.sample(i);
    out.images.insert(out.images.end(), s.begin(), s.end());
    out.labels.push_back(ds.labels[i]);
  }
  return out;
}

Dataset stratified_subsample(const Dataset& ds, std::size_t count) {
  const std::size_t k = ds.num_classes;
  std::vector<std::size_t> quota(k, count / k), taken(k, 0);
  for (std::size_t c = 0; c < count % k; ++c) ++quota[c];
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < ds.count; ++i) {
    const auto c = static_cast<std::size_t>(ds.labels[i]);
    if (taken[c] < quota[c]) {
      ++taken[c];
      keep.push_back(i);
    }
  }
  for (std::size_t c = 0; c < k; ++c)
    if (taken[c] < quota[c])
      throw std::invalid_argument("stratified_subsample: class " + std::to_string(c) + " has only " +
                                  std::to_string(taken[c]) + " samples");
  return subset(ds, keep);
}

void SyntheticSpec::validate() const {
  auto ok = [](Range r) { return r.lo > 0.0 && r.hi >= r.lo; };
  if (image_size < 4) throw std::invalid_argument("synthetic: image_size must be at least 4");
  if (!ok(disk_radius) || !ok(annulus_outer) || !ok(annulus_width))
    throw std::invalid_argument("synthetic: radius ranges must be positive with lo <= hi");
  if (annulus_outer.lo - annulus_width.hi < 1.0)
    throw std::invalid_argument("synthetic: annulus inner radius must stay >= 1 (outer.lo - width.hi)");
  // Centre range [R + 1, size - 2 - R] must be non-empty.
  const double fit = (static_cast<double>(image_size) - 3.0) / 2.0;
  if (disk_radius.hi > fit || annulus_outer.hi > fit)
    throw std::invalid_argument("synthetic: shapes do not fit in the image");
  if (!(noise >= 0.0)) throw std::invalid_argument("synthetic: noise must be non-negative");
  if (count_per_class == 0) throw std::invalid_argument("synthetic: count_per_class must be positive");
}

Dataset gen_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  Dataset ds;
  ds.channels = 1;
  ds.height = ds.width = spec.image_size;
  ds.num_classes = 2;
  ds.count = 2 * spec.count_per_class;
  ds.images.assign(ds.count * ds.sample_size(), 0.0);
  Rng rng = Rng(spec.seed).substream("synthetic");
  const auto n = static_cast<double>(spec.image_size);
  auto draw = [&](Range r) { return r.lo + (r.hi - r.lo) * rng.uniform(); };
  for (std::size_t i = 0; i < ds.count; ++i) {
    const int label = static_cast<int>(i % 2);
    ds.labels.push_back(label);
    const double outer = label == 0 ? draw(spec.disk_radius) : draw(spec.annulus_outer);
    const double inner = label == 0 ? -1.0 : outer - draw(spec.annulus_width);
    const double lo = outer + 1.0, hi = n - 2.0 - outer;
    const double cy = draw({lo, hi}), cx = draw({lo, hi});
    double* img = ds.images.data() + i * ds.sample_size();
    for (std::size_t r = 0; r < spec.image_size; ++r)
      for (std::size_t c = 0; c < spec.image_size; ++c) {
        const double d = std::hypot(static_cast<double>(r) - cy, static_cast<double>(c) - cx);
        img[r * spec.image_size + c] = (d <= outer && d >= inner) ? 1.0 : 0.0;
      }
    if (spec.noise > 0.0)
      for (std::size_t k = 0; k < ds.sample_size(); ++k) img[k] += spec.noise * rng.normal();
  }
  if (spec.normalize) normalize(ds, fit_normalization(ds));
  return ds;
}

}  // namespace fedtopo::data
