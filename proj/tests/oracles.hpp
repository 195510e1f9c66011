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

// Test-only reference computations. Nothing in here calls into the library
// code paths it is used to check.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <tuple>
#include <vector>

namespace oracle {

using Triple = std::tuple<int, double, double>;  // (dim, birth, death)

// Full boundary-matrix reduction without clearing on the cubical complex of
// an h x w vertex grid. Ties among equal-value cells of equal dimension are
// broken by a shuffled key drawn from `tie_seed`, so agreement with the
// library also checks independence of the tie-breaking rule.
inline std::vector<Triple> naive_persistence(int h, int w, const std::vector<double>& f, unsigned tie_seed = 1) {
  struct C {
    int dim;
    double value;
    std::vector<int> vertices;  // flat pixel indices
    std::vector<int> facets;    // indices into cells
  };
  std::vector<C> cells;
  std::vector<int> vid(h * w), hid(h * w, -1), vvid(h * w, -1);
  for (int i = 0; i < h * w; ++i) {
    vid[i] = static_cast<int>(cells.size());
    cells.push_back({0, f[i], {i}, {}});
  }
  for (int r = 0; r < h; ++r)
    for (int c = 0; c + 1 < w; ++c) {
      int a = r * w + c, b = a + 1;
      hid[a] = static_cast<int>(cells.size());
      cells.push_back({1, std::max(f[a], f[b]), {a, b}, {vid[a], vid[b]}});
    }
  for (int r = 0; r + 1 < h; ++r)
    for (int c = 0; c < w; ++c) {
      int a = r * w + c, b = a + w;
      vvid[a] = static_cast<int>(cells.size());
      cells.push_back({1, std::max(f[a], f[b]), {a, b}, {vid[a], vid[b]}});
    }
  for (int r = 0; r + 1 < h; ++r)
    for (int c = 0; c + 1 < w; ++c) {
      int a = r * w + c;
      double v = std::max({f[a], f[a + 1], f[a + w], f[a + w + 1]});
      cells.push_back({2, v, {a, a + 1, a + w, a + w + 1}, {hid[a], hid[a + w], vvid[a], vvid[a + 1]}});
    }
  const int n = static_cast<int>(cells.size());
  std::vector<int> key(n);
  std::iota(key.begin(), key.end(), 0);
  std::mt19937 gen(tie_seed);
  std::shuffle(key.begin(), key.end(), gen);
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    return std::tie(cells[a].value, cells[a].dim, key[a]) < std::tie(cells[b].value, cells[b].dim, key[b]);
  });
  std::vector<int> pos(n);
  for (int i = 0; i < n; ++i) pos[order[i]] = i;

  // Dense Z/2 columns in filtration order.
  std::vector<std::vector<char>> col(n, std::vector<char>(n, 0));
  for (int j = 0; j < n; ++j)
    for (int fct : cells[order[j]].facets) col[j][pos[fct]] = 1;
  auto low = [&](int j) {
    for (int i = n - 1; i >= 0; --i)
      if (col[j][i]) return i;
    return -1;
  };
  std::vector<int> low_of(n, -1);
  std::vector<int> owner(n, -1);
  for (int j = 0; j < n; ++j) {
    int l = low(j);
    while (l >= 0 && owner[l] >= 0) {
      for (int i = 0; i < n; ++i) col[j][i] ^= col[owner[l]][i];
      l = low(j);
    }
    low_of[j] = l;
    if (l >= 0) owner[l] = j;
  }
  std::vector<Triple> out;
  std::vector<char> is_birth_paired(n, 0);
  for (int j = 0; j < n; ++j) {
    if (low_of[j] < 0) continue;
    is_birth_paired[low_of[j]] = 1;
    const C& b = cells[order[low_of[j]]];
    const C& d = cells[order[j]];
    if (d.value > b.value) out.emplace_back(b.dim, b.value, d.value);
  }
  for (int j = 0; j < n; ++j) {
    if (low_of[j] < 0 && !is_birth_paired[j]) {
      const C& b = cells[order[j]];
      out.emplace_back(b.dim, b.value, std::numeric_limits<double>::infinity());
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}


struct Pt {
  double b, d;
};

// Exhaustive search over every partial matching of a into b; points left
// unmatched go to the diagonal. Returns {bottleneck, sum of p-th powers}
// where the point-to-point cost is L-inf (bottleneck) or L2 (Wasserstein).
inline std::pair<double, double> brute_force_matching(const std::vector<Pt>& a, const std::vector<Pt>& b, double p) {
  const int n = static_cast<int>(a.size()), m = static_cast<int>(b.size());
  double best_bn = std::numeric_limits<double>::infinity();
  double best_w = std::numeric_limits<double>::infinity();
  std::vector<int> assign(n, -1);  // -1: diagonal
  std::vector<char> used(m, 0);
  auto finish = [&]() {
    double bn = 0.0, w = 0.0;
    for (int i = 0; i < n; ++i) {
      if (assign[i] < 0) {
        const double pers = a[i].d - a[i].b;
        bn = std::max(bn, pers / 2);
        w += std::pow(pers / std::sqrt(2.0), p);
      } else {
        const Pt& y = b[assign[i]];
        bn = std::max(bn, std::max(std::abs(a[i].b - y.b), std::abs(a[i].d - y.d)));
        w += std::pow(std::sqrt((a[i].b - y.b) * (a[i].b - y.b) + (a[i].d - y.d) * (a[i].d - y.d)), p);
      }
    }
    for (int j = 0; j < m; ++j) {
      if (used[j]) continue;
      const double pers = b[j].d - b[j].b;
      bn = std::max(bn, pers / 2);
      w += std::pow(pers / std::sqrt(2.0), p);
    }
    best_bn = std::min(best_bn, bn);
    best_w = std::min(best_w, w);
  };
  auto rec = [&](auto&& self, int i) -> void {
    if (i == n) {
      finish();
      return;
    }
    assign[i] = -1;
    self(self, i + 1);
    for (int j = 0; j < m; ++j) {
      if (used[j]) continue;
      used[j] = 1;
      assign[i] = j;
      self(self, i + 1);
      used[j] = 0;
    }
    assign[i] = -1;
  };
  rec(rec, 0);
  return {best_bn, best_w};
}

}  // namespace oracle
