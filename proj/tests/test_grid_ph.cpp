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

#include <cmath>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "doctest.h"
#include "fedtopo/grid_ph.hpp"
#include "oracles.hpp"

using namespace fedtopo::ph;

namespace {

std::vector<oracle::Triple> triples(const PersistenceDiagram& d, int only_dim = -1) {
  std::vector<oracle::Triple> out;
  for (const auto& p : d.pairs) {
    if (only_dim < 0 || p.dim == only_dim) out.emplace_back(p.dim, p.birth, p.death);
  }
  std::sort(out.begin(), out.end());
  return out;
}

ScalarField random_field(std::mt19937& gen, int h, int w, bool integer_values) {
  std::vector<double> v(h * w);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> k(0, 4);
  for (auto& x : v) x = integer_values ? k(gen) : u(gen);
  return ScalarField(h, w, v);
}

ScalarField ring() { return ScalarField::from_rows({{0, 0, 0}, {0, 1, 0}, {0, 0, 0}}); }

}  // namespace

TEST_CASE("cell_count follows the vertex/edge/square census") {
  CHECK(cell_count(8, 8) == 225);
  CHECK(cell_count(1, 1) == 1);
  CHECK(cell_count(16, 16) == 961);
  for (std::size_t h = 2; h <= 64; ++h) {
    for (std::size_t w = 2; w <= 64; ++w) {
      const std::size_t v = h * w, e = h * (w - 1) + w * (h - 1), f = (h - 1) * (w - 1);
      REQUIRE(cell_count(h, w) == v + e + f);
      REQUIRE(v - e + f == 1);
    }
  }
}

TEST_CASE("build_lower_star examples") {
  SUBCASE("2x2 checkerboard") {
    auto cx = build_lower_star(ScalarField::from_rows({{0, 1}, {1, 0}}));
    REQUIRE(cx.cells.size() == 9);
    std::multiset<double> vertices, edges, squares;
    for (const auto& c : cx.cells) {
      (c.dim == 0 ? vertices : c.dim == 1 ? edges : squares).insert(c.value);
    }
    CHECK(vertices == std::multiset<double>{0, 0, 1, 1});
    CHECK(edges == std::multiset<double>{1, 1, 1, 1});
    CHECK(squares == std::multiset<double>{1});
  }
  SUBCASE("1x3 constant row") {
    auto cx = build_lower_star(ScalarField::from_rows({{5, 5, 5}}));
    REQUIRE(cx.cells.size() == 5);
    int v = 0, e = 0, s = 0;
    for (const auto& c : cx.cells) {
      CHECK(c.value == 5);
      (c.dim == 0 ? v : c.dim == 1 ? e : s)++;
    }
    CHECK(v == 3);
    CHECK(e == 2);
    CHECK(s == 0);
  }
  SUBCASE("3x3 ring") {
    auto cx = build_lower_star(ring());
    int boundary_edges_at_zero = 0;
    for (const auto& c : cx.cells) {
      if (c.dim == 2) CHECK(c.value == 1);
      const bool on_border = c.row == 0 || c.row == 4 || c.col == 0 || c.col == 4;
      if (c.dim == 1 && on_border) {
        CHECK(c.value == 0);
        ++boundary_edges_at_zero;
      }
    }
    CHECK(boundary_edges_at_zero == 8);
  }
}

TEST_CASE("lower-star complex invariants on random grids") {
  std::mt19937 gen(11);
  for (int trial = 0; trial < 30; ++trial) {
    const int h = 1 + trial % 7, w = 1 + (trial * 3) % 8;
    auto f = random_field(gen, h, w, trial % 2 == 0);
    auto cx = build_lower_star(f);
    REQUIRE(cx.cells.size() == cell_count(h, w));
    REQUIRE_NOTHROW(cx.validate());
    for (std::size_t id = 0; id < cx.cells.size(); ++id) {
      const auto& c = cx.cells[id];
      // Lower-star: the value of every cell is the max over its vertices.
      double m = -1e300;
      for (std::uint32_t r = c.row / 2; r <= (c.row + 1) / 2; ++r)
        for (std::uint32_t col = c.col / 2; col <= (c.col + 1) / 2; ++col) m = std::max(m, f.at(r, col));
      CHECK(c.value == m);
      CHECK(f[c.max_vertex] == m);
    }
  }
}

TEST_CASE("non-finite values are rejected with a location") {
  std::vector<double> v{0, 1, NAN, 2};
  try {
    ScalarField f(2, 2, v);
    FAIL("expected rejection");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("row 1, column 0") != std::string::npos);
  }
  CHECK_THROWS_AS(ScalarField(2, 2, {0, 1, INFINITY, 2}), std::invalid_argument);
  CHECK_THROWS_AS(ScalarField(0, 2, {}), std::invalid_argument);
  CHECK_THROWS_AS(ScalarField(2, 2, {0, 1, 2}), std::invalid_argument);
}

TEST_CASE("compute_persistence examples") {
  SUBCASE("constant field") {
    auto d = compute_persistence(build_lower_star(ScalarField(3, 3, std::vector<double>(9, 0.0))));
    CHECK(triples(d) == std::vector<oracle::Triple>{{0, 0.0, INFINITY}});
  }
  SUBCASE("ring") {
    auto d = compute_persistence(build_lower_star(ring()));
    CHECK(triples(d) == std::vector<oracle::Triple>{{0, 0.0, INFINITY}, {1, 0.0, 1.0}});
  }
  SUBCASE("checkerboard: components merge at 1, the loop has zero persistence") {
    auto d = compute_persistence(build_lower_star(ScalarField::from_rows({{0, 1}, {1, 0}})));
    CHECK(triples(d) == std::vector<oracle::Triple>{{0, 0.0, 1.0}, {0, 0.0, INFINITY}});
  }
}

TEST_CASE("malformed boundary is rejected") {
  auto cx = build_lower_star(ring());
  // Move the first square to the front of the order: its facets now follow it.
  auto it = std::find_if(cx.order.begin(), cx.order.end(), [&](auto id) { return cx.cells[id].dim == 2; });
  std::rotate(cx.order.begin(), it, it + 1);
  CHECK_THROWS_AS(compute_persistence(cx), std::invalid_argument);
}

TEST_CASE("reduction with clearing matches the naive full reduction oracle") {
  std::mt19937 gen(2024);
  for (int trial = 0; trial < 120; ++trial) {
    const int h = 1 + static_cast<int>(gen() % 8), w = 1 + static_cast<int>(gen() % 8);
    auto f = random_field(gen, h, w, trial % 3 == 0);
    std::vector<double> raw(f.values().begin(), f.values().end());
    auto expected = oracle::naive_persistence(h, w, raw, trial + 1);
    auto d = compute_persistence(build_lower_star(f));
    REQUIRE(triples(d) == expected);
    REQUIRE(triples(compute_diagram(f)) == expected);
  }
}

TEST_CASE("diagram invariants: one essential class, Euler relation") {
  std::mt19937 gen(5);
  for (int trial = 0; trial < 50; ++trial) {
    const int h = 2 + trial % 6, w = 2 + trial % 5;
    auto d = compute_persistence(build_lower_star(random_field(gen, h, w, trial % 2 == 1)));
    CHECK(d.essential_count(0) == 1);
    CHECK(d.essential_count(1) == 0);
    for (const auto& p : d.pairs) CHECK(p.death > p.birth);
  }
}

TEST_CASE("compute_h0_fast") {
  SUBCASE("hand trace with the elder rule") {
    auto d = compute_h0_fast(ScalarField::from_rows({{0, 2, 1, 3}}));
    CHECK(triples(d) == std::vector<oracle::Triple>{{0, 0.0, INFINITY}, {0, 1.0, 2.0}});
  }
  SUBCASE("constant field") {
    auto d = compute_h0_fast(ScalarField(4, 4, std::vector<double>(16, 3.0)));
    CHECK(triples(d) == std::vector<oracle::Triple>{{0, 3.0, INFINITY}});
  }
  SUBCASE("matches H0 of the reduction on 100 random 8x8 fields") {
    std::mt19937 gen(77);
    for (int trial = 0; trial < 100; ++trial) {
      auto f = random_field(gen, 8, 8, trial % 2 == 0);
      REQUIRE(triples(compute_h0_fast(f)) == triples(compute_persistence(build_lower_star(f)), 0));
    }
  }
}

TEST_CASE("compute_diagram reproduces reduction provenance") {
  std::mt19937 gen(9);
  for (int trial = 0; trial < 40; ++trial) {
    auto f = random_field(gen, 2 + trial % 7, 2 + trial % 6, trial % 2 == 0);
    auto a = compute_persistence(build_lower_star(f));
    auto b = compute_diagram(f);
    auto key = [](const PersistencePair& p) {
      return std::make_tuple(p.dim, *p.birth_cell, p.death_cell.value_or(UINT32_MAX), *p.birth_vertex,
                             p.death_vertex.value_or(UINT32_MAX));
    };
    std::vector<decltype(key(a.pairs[0]))> ka, kb;
    for (const auto& p : a.pairs) ka.push_back(key(p));
    for (const auto& p : b.pairs) kb.push_back(key(p));
    std::sort(ka.begin(), ka.end());
    std::sort(kb.begin(), kb.end());
    REQUIRE(ka == kb);
  }
}

TEST_CASE("strictly increasing reparameterisation maps pairs pointwise") {
  std::mt19937 gen(31);
  auto phi = [](double x) { return std::exp(2.0 * x) + x * x * x; };
  for (int trial = 0; trial < 25; ++trial) {
    auto f = random_field(gen, 6, 7, trial % 2 == 0);
    std::vector<double> g(f.values().begin(), f.values().end());
    for (auto& x : g) x = phi(x);
    auto a = compute_diagram(f);
    auto b = compute_diagram(ScalarField(6, 7, g));
    REQUIRE(a.pairs.size() == b.pairs.size());
    for (std::size_t i = 0; i < a.pairs.size(); ++i) {
      CHECK(a.pairs[i].birth_cell == b.pairs[i].birth_cell);
      CHECK(a.pairs[i].death_cell == b.pairs[i].death_cell);
      CHECK(b.pairs[i].birth == phi(a.pairs[i].birth));
      if (!a.pairs[i].essential()) CHECK(b.pairs[i].death == phi(a.pairs[i].death));
    }
  }
}

TEST_CASE("pd_backward") {
  SUBCASE("zero gradients give a zero field") {
    auto d = compute_diagram(ring());
    std::vector<PairGradient> g(d.pairs.size());
    auto out = pd_backward(d, g);
    for (double x : out.values()) CHECK(x == 0.0);
  }
  SUBCASE("ring: death gradient lands on the centre") {
    auto d = compute_diagram(ring());
    std::vector<PairGradient> g(d.pairs.size());
    for (std::size_t i = 0; i < d.pairs.size(); ++i)
      if (d.pairs[i].dim == 1) g[i].d_death = 1.0;
    auto out = pd_backward(d, g);
    for (std::size_t i = 0; i < 9; ++i) CHECK(out[i] == (i == 4 ? 1.0 : 0.0));
  }
  SUBCASE("essential death carries nothing") {
    auto d = compute_diagram(ring());
    std::vector<PairGradient> g(d.pairs.size(), PairGradient{0.0, 5.0});
    for (std::size_t i = 0; i < d.pairs.size(); ++i)
      if (d.pairs[i].dim == 1) g[i].d_death = 0.0;
    auto out = pd_backward(d, g);
    for (double x : out.values()) CHECK(x == 0.0);
  }
  SUBCASE("missing provenance is rejected") {
    std::stringstream ss("dim,birth,death\n0,0,inf\n1,0,1\n");
    auto d = read_diagram_csv(ss);
    d.height = d.width = 3;
    std::vector<PairGradient> g(d.pairs.size());
    CHECK_THROWS_AS(pd_backward(d, g), std::invalid_argument);
  }
  SUBCASE("matches central finite differences on distinct-valued 5x5 fields") {
    std::mt19937 gen(123);
    std::normal_distribution<double> nd(0.0, 1.0);
    for (int trial = 0; trial < 20; ++trial) {
      auto f = random_field(gen, 5, 5, false);
      auto d = compute_diagram(f);
      // Coefficients keyed by critical cells so the loss stays well defined
      // while pairs reorder under perturbation.
      std::map<std::pair<std::uint32_t, std::uint32_t>, PairGradient> coef;
      std::vector<PairGradient> g(d.pairs.size());
      for (std::size_t i = 0; i < d.pairs.size(); ++i) {
        g[i] = {nd(gen), nd(gen)};
        coef[{*d.pairs[i].birth_cell, d.pairs[i].death_cell.value_or(UINT32_MAX)}] = g[i];
      }
      auto loss = [&](const ScalarField& x) {
        double s = 0.0;
        for (const auto& p : compute_diagram(x).pairs) {
          auto it = coef.find({*p.birth_cell, p.death_cell.value_or(UINT32_MAX)});
          REQUIRE(it != coef.end());
          s += it->second.d_birth * p.birth + (p.essential() ? 0.0 : it->second.d_death * p.death);
        }
        return s;
      };
      auto analytic = pd_backward(d, g);
      const double h = 1e-6;
      for (std::size_t j = 0; j < 25; ++j) {
        std::vector<double> up(f.values().begin(), f.values().end()), dn = up;
        up[j] += h;
        dn[j] -= h;
        const double fd = (loss(ScalarField(5, 5, up)) - loss(ScalarField(5, 5, dn))) / (2 * h);
        CHECK(std::abs(fd - analytic[j]) <= 1e-5 * std::max(1.0, std::abs(analytic[j])));
      }
    }
  }
}

TEST_CASE("diagram csv") {
  auto d = compute_diagram(ring());
  std::stringstream ss;
  write_diagram_csv(ss, d);
  const std::string text = ss.str();
  CHECK(text.rfind("dim,birth,death\n", 0) == 0);
  CHECK(text.find("0,0,inf\n") != std::string::npos);
  CHECK(text.find("1,0,1\n") != std::string::npos);
  auto back = read_diagram_csv(ss);
  CHECK(triples(back) == triples(d));
  std::stringstream bad("dim,birth,death\n0,zero,1\n");
  CHECK_THROWS_AS(read_diagram_csv(bad), std::invalid_argument);
}
