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

#include <zlib.h>

#include <cmath>
#include <cstdlib>
#include <fstream>

#include "doctest.h"
#include "fedtopo/data_io.hpp"
#include "fedtopo/grid_ph.hpp"

using namespace fedtopo;
using namespace fedtopo::data;
namespace fs = std::filesystem;

namespace {

using Bytes = std::vector<std::uint8_t>;

void put32(Bytes& b, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) b.push_back(static_cast<std::uint8_t>(v >> s));
}

Bytes idx_images(std::uint32_t count, std::uint32_t rows, std::uint32_t cols, const Bytes& pixels) {
  Bytes b;
  put32(b, 0x803);
  put32(b, count);
  put32(b, rows);
  put32(b, cols);
  b.insert(b.end(), pixels.begin(), pixels.end());
  return b;
}

Bytes idx_labels(const Bytes& labels) {
  Bytes b;
  put32(b, 0x801);
  put32(b, static_cast<std::uint32_t>(labels.size()));
  b.insert(b.end(), labels.begin(), labels.end());
  return b;
}

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("fedtopo_data_" + std::to_string(reinterpret_cast<std::uintptr_t>(this)));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  fs::path write(const std::string& name, const Bytes& b, bool gz = false) const {
    const fs::path p = path / name;
    if (gz) {
      gzFile f = gzopen(p.string().c_str(), "wb");
      gzwrite(f, b.data(), static_cast<unsigned>(b.size()));
      gzclose(f);
    } else {
      std::ofstream out(p, std::ios::binary);
      out.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
    }
    return p;
  }
};

Bytes two_images() {
  Bytes px(32);
  for (std::size_t i = 0; i < 32; ++i) px[i] = static_cast<std::uint8_t>(i * 8 + 1);
  return px;
}

}  // namespace

TEST_CASE("IDX fixture round trip") {
  TempDir dir;
  const Bytes px = two_images();
  for (bool gz : {false, true}) {
    auto img = dir.write(gz ? "i.gz" : "i", idx_images(2, 4, 4, px), gz);
    auto lab = dir.write(gz ? "l.gz" : "l", idx_labels({3, 7}), gz);
    auto raw = read_idx_images(img);
    CHECK(raw.count == 2);
    CHECK(raw.rows == 4);
    CHECK(raw.cols == 4);
    CHECK(raw.pixels == px);
    CHECK(read_idx_labels(lab) == Bytes{3, 7});

    auto ds = load_idx(img, lab);
    CHECK(ds.count == 2);
    CHECK(ds.labels == std::vector<int>{3, 7});
    CHECK(ds.norm.mean.size() == 1);
    denormalize(ds);
    for (std::size_t i = 0; i < 32; ++i) CHECK(std::abs(ds.images[i] - px[i] / 255.0) <= 1e-12);
  }
}

TEST_CASE("IDX rejects wrong magic, truncation and count mismatch") {
  TempDir dir;
  auto img = dir.write("i", idx_images(2, 4, 4, two_images()));
  auto lab = dir.write("l", idx_labels({3, 7}));
  CHECK_THROWS_AS(read_idx_images(lab), FormatError);
  CHECK_THROWS_AS(read_idx_labels(img), FormatError);

  Bytes cut = idx_images(2, 4, 4, two_images());
  cut.resize(cut.size() - 1);
  try {
    read_idx_images(dir.write("cut", cut));
    FAIL("truncated file accepted");
  } catch (const FormatError& e) {
    CHECK(e.offset == cut.size());
  }
  auto lab3 = dir.write("l3", idx_labels({1, 2, 3}));
  CHECK_THROWS_AS(load_idx(img, lab3), FormatError);
  auto bad_label = dir.write("l10", idx_labels({1, 10}));
  CHECK_THROWS_AS(load_idx(img, bad_label), FormatError);
  CHECK_THROWS_AS(read_idx_images(dir.path / "missing"), std::runtime_error);
}

TEST_CASE("IDX loader rejects every single-byte header mutation") {
  TempDir dir;
  const Bytes images = idx_images(2, 4, 4, two_images()), labels = idx_labels({3, 7});
  for (std::size_t pos = 0; pos < 16; ++pos)
    for (int delta : {1, 2, 0x10, 0x80, 0xff}) {
      Bytes m = images;
      m[pos] = static_cast<std::uint8_t>(m[pos] + delta);
      CHECK_THROWS_AS(read_idx_images(dir.write("m", m)), FormatError);
    }
  for (std::size_t pos = 0; pos < 8; ++pos)
    for (int delta : {1, 2, 0x10, 0x80, 0xff}) {
      Bytes m = labels;
      m[pos] = static_cast<std::uint8_t>(m[pos] + delta);
      CHECK_THROWS_AS(read_idx_labels(dir.write("m", m)), FormatError);
    }
}

TEST_CASE("committed Fashion-MNIST subset") {
  const fs::path root = FEDTOPO_DATA_DIR "/fashion-mnist";
  auto train = load_idx(root / "train-images-idx3-ubyte.gz", root / "train-labels-idx1-ubyte.gz");
  auto test = load_idx(root / "t10k-images-idx3-ubyte.gz", root / "t10k-labels-idx1-ubyte.gz", train.norm);
  CHECK(train.count == 2000);
  CHECK(test.count == 1000);
  CHECK(train.height == 28);
  CHECK(train.width == 28);
  std::vector<int> hist(10, 0);
  for (int l : train.labels) ++hist[l];
  for (int h : hist) CHECK(h == 200);
  // Normalised with train statistics: train has mean 0, unit variance.
  double s = 0.0, s2 = 0.0;
  for (double x : train.images) {
    s += x;
    s2 += x * x;
  }
  const double n = static_cast<double>(train.images.size());
  CHECK(std::abs(s / n) <= 1e-9);
  CHECK(std::abs(s2 / n - 1.0) <= 1e-9);
  CHECK(test.norm.mean == train.norm.mean);
}

TEST_CASE("full Fashion-MNIST files when available") {
  const char* dir = std::getenv("FEDTOPO_FMNIST_DIR");
  if (!dir) {
    MESSAGE("FEDTOPO_FMNIST_DIR not set; skipping the full-size check");
    return;
  }
  const fs::path root = dir;
  auto train = load_idx(root / "train-images-idx3-ubyte.gz", root / "train-labels-idx1-ubyte.gz");
  CHECK(train.count == 60000);
  CHECK(train.height == 28);
  for (int l : train.labels) CHECK((l >= 0 && l < 10));
}

TEST_CASE("CIFAR-10 binary batches") {
  TempDir dir;
  Bytes rec(3073);
  rec[0] = 6;
  for (std::size_t i = 1; i < rec.size(); ++i) rec[i] = static_cast<std::uint8_t>((i * 37) % 256);
  const fs::path one[] = {dir.write("one.bin", rec)};
  auto ds = load_cifar10(one);
  CHECK(ds.count == 1);
  CHECK(ds.labels == std::vector<int>{6});
  CHECK(ds.channels == 3);
  denormalize(ds);
  for (std::size_t i = 0; i < 3072; ++i) CHECK(std::abs(ds.images[i] - rec[i + 1] / 255.0) <= 1e-12);

  const fs::path empty[] = {dir.write("empty.bin", {})};
  auto e = load_cifar10(empty);
  CHECK(e.count == 0);
  CHECK_NOTHROW(e.validate());

  Bytes bad = rec;
  bad.push_back(0);
  const fs::path odd[] = {dir.write("odd.bin", bad)};
  CHECK_THROWS_AS(load_cifar10(odd), FormatError);
}

TEST_CASE("normalisation round trip and subsampling") {
  SyntheticSpec spec;
  spec.count_per_class = 20;
  spec.noise = 0.3;
  spec.normalize = false;
  auto raw = gen_synthetic(spec);
  auto ds = raw;
  normalize(ds, fit_normalization(ds));
  CHECK_THROWS_AS(normalize(ds, ds.norm), std::logic_error);
  denormalize(ds);
  for (std::size_t i = 0; i < raw.images.size(); ++i) CHECK(std::abs(ds.images[i] - raw.images[i]) <= 1e-12);

  auto sub = stratified_subsample(raw, 11);
  CHECK(sub.count == 11);
  int zeros = 0;
  for (int l : sub.labels) zeros += l == 0;
  CHECK(zeros == 6);
  CHECK_THROWS_AS(stratified_subsample(raw, 100), std::invalid_argument);
}

TEST_CASE("synthetic disks and annuli") {
  SyntheticSpec spec;
  spec.count_per_class = 10;
  spec.normalize = false;
  auto ds = gen_synthetic(spec);
  CHECK(ds.count == 20);
  int annuli = 0;
  for (std::size_t i = 0; i < ds.count; ++i) {
    annuli += ds.labels[i];
    // Invert so the bright shape is low and the ring encloses a high hole.
    std::vector<double> inv(ds.sample(i).begin(), ds.sample(i).end());
    for (auto& x : inv) x = 1.0 - x;
    auto diagram = ph::compute_diagram(ph::ScalarField(28, 28, inv));
    int strong = 0, weak = 0;
    for (const auto& p : diagram.pairs) {
      if (p.dim != 1) continue;
      strong += p.persistence() > 0.5;
      weak += p.persistence() > 0.1;
    }
    if (ds.labels[i] == 1) {
      CHECK(strong == 1);
    } else {
      CHECK(weak == 0);
    }
  }
  CHECK(annuli == 10);

  auto again = gen_synthetic(spec);
  CHECK(again.images == ds.images);
  spec.seed = 1;
  CHECK(gen_synthetic(spec).images != ds.images);

  SyntheticSpec bad;
  bad.annulus_width = {2.0, 9.0};
  CHECK_THROWS_AS(gen_synthetic(bad), std::invalid_argument);
  bad = SyntheticSpec{};
  bad.disk_radius = {5.0, 14.0};
  CHECK_THROWS_AS(gen_synthetic(bad), std::invalid_argument);
}
