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
#include <random>
#include <sstream>

#include "doctest.h"
#include "fedtopo/matching.hpp"
#include "fedtopo/topo_vec.hpp"
#include "gradcheck.hpp"
#include "oracles.hpp"

using namespace fedtopo;
using namespace fedtopo::topo;

namespace {

ph::ScalarField ring() { return ph::ScalarField::from_rows({{0, 0, 0}, {0, 1, 0}, {0, 0, 0}}); }

ph::PersistenceDiagram diagram_of(std::vector<std::tuple<int, double, double>> pts) {
  ph::PersistenceDiagram d;
  for (auto [dim, b, de] : pts) {
    ph::PersistencePair p;
    p.dim = dim;
    p.birth = b;
    p.death = de;
    d.pairs.push_back(p);
  }
  return d;
}

std::vector<double> uniform_values(std::mt19937& gen, std::size_t n) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = u(gen);
  return v;
}

// Diagram with one essential H0 point and up to `max_points` finite points
// spread over H0/H1.
ph::PersistenceDiagram random_small_diagram(std::mt19937& gen, int max_points) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> count(0, max_points), dimd(0, 1);
  std::vector<std::tuple<int, double, double>> pts{{0, u(gen) * 0.2, INFINITY}};
  const int n = count(gen);
  for (int i = 0; i < n; ++i) {
    const double b = u(gen), pers = u(gen);
    pts.emplace_back(dimd(gen), b, b + pers);
  }
  return diagram_of(pts);
}

std::vector<oracle::Pt> finite_points(const ph::PersistenceDiagram& d, int dim) {
  std::vector<oracle::Pt> out;
  for (const auto& p : d.pairs)
    if (p.dim == dim && !p.essential()) out.push_back({p.birth, p.death});
  return out;
}

}  // namespace

TEST_CASE("to_birth_persistence") {
  auto split = to_birth_persistence(diagram_of({{0, 0.0, 1.0}}));
  REQUIRE(split[0].size() == 1);
  CHECK(split[0][0].birth == 0.0);
  CHECK(split[0][0].persistence == 1.0);
  CHECK_FALSE(split[0][0].essential);

  split = to_birth_persistence(diagram_of({{0, 0.0, INFINITY}}));
  REQUIRE(split[0].size() == 1);
  CHECK(split[0][0].essential);
  CHECK(std::isinf(split[0][0].persistence));

  split = to_birth_persistence(ph::compute_diagram(ring()));
  REQUIRE(split[1].size() == 1);
  CHECK(split[1][0].birth == 0.0);
  CHECK(split[1][0].persistence == 1.0);
}

TEST_CASE("PIConfig validation") {
  PIConfig c;
  CHECK_NOTHROW(c.validate());
  CHECK(c.size() == 64);
  c.sigma = 0.0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = PIConfig{};
  c.birth_range = {1.0, 1.0};
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}

TEST_CASE("rasterize_pi") {
  PIConfig cfg;
  SUBCASE("empty diagram gives a zero image") {
    auto img = rasterize_pi({}, cfg);
    REQUIRE(img.values.size() == 64);
    for (double x : img.values) CHECK(x == 0.0);
  }
  SUBCASE("a point on a pixel centre gives exactly 1 there") {
    BirthPersistence pt{cfg.birth_center(3), cfg.persistence_center(5), false, 0, 0};
    auto img = rasterize_pi(std::vector{pt}, cfg);
    CHECK(img.values[3 * 8 + 5] == 1.0);
    for (double x : img.values) CHECK(x <= 1.0);
  }
  SUBCASE("duplicated point doubles the image") {
    BirthPersistence pt{0.31, 0.27, false, 0, 0};
    auto one = rasterize_pi(std::vector{pt}, cfg);
    auto two = rasterize_pi(std::vector{pt, pt}, cfg);
    for (std::size_t i = 0; i < 64; ++i) CHECK(two.values[i] == 2.0 * one.values[i]);
  }
  SUBCASE("linearity over disjoint multisets") {
    std::mt19937 gen(3);
    std::uniform_real_distribution<double> u(-0.2, 1.2);
    std::vector<BirthPersistence> a, b;
    for (int i = 0; i < 5; ++i) a.push_back({u(gen), u(gen), false, 0, 0});
    for (int i = 0; i < 4; ++i) b.push_back({u(gen), u(gen), false, 1, 0});
    auto ab = a;
    ab.insert(ab.end(), b.begin(), b.end());
    auto ia = rasterize_pi(a, cfg), ib = rasterize_pi(b, cfg), iab = rasterize_pi(ab, cfg);
    for (std::size_t i = 0; i < 64; ++i) CHECK(iab.values[i] == doctest::Approx(ia.values[i] + ib.values[i]).epsilon(1e-14));
  }
  SUBCASE("essential points only with include_essential, clamped to the range top") {
    BirthPersistence ess{0.0625, INFINITY, true, 0, 0};
    auto off = rasterize_pi(std::vector{ess}, cfg);
    for (double x : off.values) CHECK(x == 0.0);
    cfg.include_essential = true;
    auto on = rasterize_pi(std::vector{ess}, cfg);
    BirthPersistence clamped{0.0625, 1.0, false, 0, 0};
    auto ref = rasterize_pi(std::vector{clamped}, cfg);
    for (std::size_t i = 0; i < 64; ++i) CHECK(on.values[i] == ref.values[i]);
  }
}

TEST_CASE("topo_embedding") {
  PIConfig cfg;
  auto d = ph::compute_diagram(ring());
  auto single = rasterize_pi(pooled_points(d), cfg);
  SUBCASE("identical channels give the single-channel image") {
    std::vector<ph::PersistenceDiagram> ds(3, d);
    auto te = topo_embedding(ds, cfg);
    CHECK(te.channel_count == 3);
    for (std::size_t i = 0; i < 64; ++i) CHECK(te.values[i] == doctest::Approx(single.values[i]).epsilon(1e-15));
  }
  SUBCASE("an empty channel halves the other") {
    std::vector<ph::PersistenceDiagram> ds{d, ph::PersistenceDiagram{}};
    auto te = topo_embedding(ds, cfg);
    for (std::size_t i = 0; i < 64; ++i) CHECK(te.values[i] == 0.5 * single.values[i]);
  }
  SUBCASE("no channels is rejected") {
    CHECK_THROWS_AS(topo_embedding({}, cfg), std::invalid_argument);
  }
  SUBCASE("channel selection") {
    std::vector<ph::PersistenceDiagram> ds{ph::PersistenceDiagram{}, d};
    const std::size_t pick[] = {1};
    auto te = topo_embedding(ds, cfg, pick);
    CHECK(te.channel_count == 1);
    for (std::size_t i = 0; i < 64; ++i) CHECK(te.values[i] == single.values[i]);
  }
  SUBCASE("random 2-channel 6x6 fields agree with an independent recomputation") {
    std::mt19937 gen(17);
    for (int trial = 0; trial < 10; ++trial) {
      std::vector<ph::PersistenceDiagram> ds;
      std::vector<double> expected(64, 0.0);
      for (int c = 0; c < 2; ++c) {
        auto nf = minmax_normalize(ph::ScalarField(6, 6, uniform_values(gen, 36)));
        ds.push_back(ph::compute_diagram(nf.field));
        // Literal Gaussian sum, no separable factorisation.
        for (const auto& p : ds.back().pairs) {
          if (p.essential()) continue;
          const double b = p.birth, q = p.death - p.birth;
          for (int u = 0; u < 8; ++u)
            for (int v = 0; v < 8; ++v) {
              const double x = (u + 0.5) / 8, y = (v + 0.5) / 8;
              expected[u * 8 + v] += 0.5 * std::exp(-((x - b) * (x - b) + (y - q) * (y - q)) / (2 * 0.05 * 0.05));
            }
        }
      }
      auto te = topo_embedding(ds, cfg);
      for (std::size_t i = 0; i < 64; ++i) CHECK(std::abs(te.values[i] - expected[i]) <= 1e-12);
    }
  }
}

TEST_CASE("pi_backward") {
  PIConfig cfg;
  SUBCASE("zero upstream gradient") {
    std::vector<BirthPersistence> pts{{0.2, 0.3, false, 0, 0}, {0.5, 0.1, false, 1, 1}};
    std::vector<double> g(64, 0.0);
    for (const auto& pg : pi_backward(pts, cfg, g)) {
      CHECK(pg.d_birth == 0.0);
      CHECK(pg.d_persistence == 0.0);
    }
  }
  SUBCASE("point at a pixel centre, gradient on that pixel only") {
    std::vector<BirthPersistence> pts{{cfg.birth_center(2), cfg.persistence_center(6), false, 0, 0}};
    std::vector<double> g(64, 0.0);
    g[2 * 8 + 6] = 1.0;
    auto pg = pi_backward(pts, cfg, g);
    CHECK(pg[0].d_birth == 0.0);
    CHECK(pg[0].d_persistence == 0.0);
  }
  SUBCASE("matches central finite differences") {
    std::mt19937 gen(5);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::normal_distribution<double> nd(0.0, 1.0);
    for (int trial = 0; trial < 10; ++trial) {
      std::vector<BirthPersistence> pts;
      for (int i = 0; i < 4; ++i) pts.push_back({u(gen), u(gen), false, 0, static_cast<std::size_t>(i)});
      std::vector<double> g(64);
      for (auto& x : g) x = nd(gen);
      auto analytic = pi_backward(pts, cfg, g);
      std::vector<double> x0, an;
      for (std::size_t i = 0; i < pts.size(); ++i) {
        x0.push_back(pts[i].birth);
        x0.push_back(pts[i].persistence);
        an.push_back(analytic[i].d_birth);
        an.push_back(analytic[i].d_persistence);
      }
      auto loss = [&](const std::vector<double>& x) {
        auto q = pts;
        for (std::size_t i = 0; i < q.size(); ++i) {
          q[i].birth = x[2 * i];
          q[i].persistence = x[2 * i + 1];
        }
        auto img = rasterize_pi(q, cfg);
        double s = 0.0;
        for (std::size_t k = 0; k < 64; ++k) s += g[k] * img.values[k];
        return s;
      };
      auto fd = gradcheck::central_differences(loss, x0, 1e-6);
      CHECK(gradcheck::max_rel_error(fd, an) <= 1e-6);
    }
  }
  SUBCASE("essential points get no persistence gradient") {
    cfg.include_essential = true;
    std::vector<BirthPersistence> pts{{0.1, INFINITY, true, 0, 0}};
    std::vector<double> g(64, 1.0);
    auto pg = pi_backward(pts, cfg, g);
    CHECK(pg[0].d_persistence == 0.0);
    CHECK(pg[0].d_birth != 0.0);
  }
}

TEST_CASE("minmax normalisation") {
  auto nf = minmax_normalize(ph::ScalarField::from_rows({{2, 4}, {3, 6}}));
  CHECK(nf.field[0] == 0.0);
  CHECK(nf.field[3] == 1.0);
  CHECK(nf.field[1] == 0.5);
  auto flat = minmax_normalize(ph::ScalarField(2, 2, {7, 7, 7, 7}));
  CHECK(flat.range == 0.0);
  for (double x : flat.field.values()) CHECK(x == 0.0);
  std::vector<double> g{1, 2, 3, 4};
  for (double x : minmax_backward(flat, g)) CHECK(x == 0.0);
}

TEST_CASE("TE gradient composes through PI, diagram and normalisation") {
  // d||TE||^2 / d(field) for a 2-channel stack, against finite differences.
  PIConfig cfg;
  std::mt19937 gen(8);
  for (int trial = 0; trial < 5; ++trial) {
    const std::size_t h = 5, w = 5, k = 2;
    auto x0 = uniform_values(gen, k * h * w);
    auto te_of = [&](const std::vector<double>& x, std::vector<std::vector<double>>* grads) {
      std::vector<ph::PersistenceDiagram> ds;
      std::vector<NormalizedField> nfs;
      for (std::size_t c = 0; c < k; ++c) {
        nfs.push_back(minmax_normalize(
            ph::ScalarField(h, w, std::vector<double>(x.begin() + c * h * w, x.begin() + (c + 1) * h * w))));
        ds.push_back(ph::compute_diagram(nfs.back().field));
      }
      auto te = topo_embedding(ds, cfg);
      double loss = 0.0;
      for (double v : te.values) loss += v * v;
      if (grads) {
        std::vector<double> g_img(te.values.size());
        for (std::size_t i = 0; i < g_img.size(); ++i) g_img[i] = 2.0 * te.values[i] / static_cast<double>(k);
        for (std::size_t c = 0; c < k; ++c) {
          auto pts = pooled_points(ds[c]);
          auto pg = pi_backward(pts, cfg, g_img);
          auto field_grad = ph::pd_backward(ds[c], to_pair_gradients(ds[c], pts, pg));
          grads->push_back(minmax_backward(nfs[c], field_grad.values()));
        }
      }
      return loss;
    };
    std::vector<std::vector<double>> per_channel;
    te_of(x0, &per_channel);
    std::vector<double> analytic;
    for (auto& g : per_channel) analytic.insert(analytic.end(), g.begin(), g.end());
    auto fd = gradcheck::central_differences([&](const std::vector<double>& x) { return te_of(x, nullptr); }, x0);
    CHECK(gradcheck::max_rel_error(fd, analytic) <= 1e-4);
  }
}

TEST_CASE("bottleneck distance examples") {
  auto d1 = diagram_of({{0, 0.0, 2.0}});
  CHECK(bottleneck_distance(d1, d1) == 0.0);
  CHECK(bottleneck_distance(d1, diagram_of({})) == 1.0);
  CHECK(bottleneck_distance(d1, diagram_of({{0, 0.0, 3.0}})) == 1.0);
  // Essential classes only match each other.
  CHECK(std::isinf(bottleneck_distance(diagram_of({{0, 0.0, INFINITY}}), diagram_of({}))));
  CHECK(bottleneck_distance(diagram_of({{0, 0.0, INFINITY}}), diagram_of({{0, 0.25, INFINITY}})) == 0.25);
  // Dimensions never mix.
  CHECK(bottleneck_distance(diagram_of({{0, 0.0, 2.0}}), diagram_of({{1, 0.0, 2.0}})) == 1.0);
}

TEST_CASE("wasserstein distance examples") {
  auto d1 = diagram_of({{0, 0.0, 2.0}});
  CHECK(wasserstein_distance(d1, d1, 2.0) == 0.0);
  CHECK(wasserstein_distance(d1, d1, 1.0) == 0.0);
  CHECK(wasserstein_distance(d1, diagram_of({}), 2.0) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-14));
  CHECK_THROWS_AS(wasserstein_distance(d1, d1, 0.5), std::invalid_argument);
}

TEST_CASE("distances equal exhaustive matching on diagrams with at most 3 points") {
  std::mt19937 gen(99);
  for (int trial = 0; trial < 100; ++trial) {
    auto a = random_small_diagram(gen, 3), b = random_small_diagram(gen, 3);
    double bn = 0.0, w1 = 0.0, w2 = 0.0;
    for (int dim = 0; dim < 2; ++dim) {
      auto [bn1, s1] = oracle::brute_force_matching(finite_points(a, dim), finite_points(b, dim), 1.0);
      auto [bn2, s2] = oracle::brute_force_matching(finite_points(a, dim), finite_points(b, dim), 2.0);
      (void)bn2;
      bn = std::max(bn, bn1);
      w1 += s1;
      w2 += s2;
    }
    const double ess = std::abs(a.pairs[0].birth - b.pairs[0].birth);
    bn = std::max(bn, ess);
    w1 += ess;
    w2 += ess * ess;
    CHECK(std::abs(bottleneck_distance(a, b) - bn) <= 1e-9);
    CHECK(std::abs(wasserstein_distance(a, b, 1.0) - w1) <= 1e-9);
    CHECK(std::abs(wasserstein_distance(a, b, 2.0) - std::sqrt(w2)) <= 1e-9);
  }
}

TEST_CASE("metric axioms on small random diagrams") {
  std::mt19937 gen(4);
  for (int trial = 0; trial < 60; ++trial) {
    auto a = random_small_diagram(gen, 3), b = random_small_diagram(gen, 3), c = random_small_diagram(gen, 3);
    CHECK(bottleneck_distance(a, b) == bottleneck_distance(b, a));
    CHECK(std::abs(wasserstein_distance(a, b, 2.0) - wasserstein_distance(b, a, 2.0)) <= 1e-12);
    CHECK(bottleneck_distance(a, c) <= bottleneck_distance(a, b) + bottleneck_distance(b, c) + 1e-12);
    for (double p : {1.0, 2.0}) {
      CHECK(wasserstein_distance(a, c, p) <= wasserstein_distance(a, b, p) + wasserstein_distance(b, c, p) + 1e-12);
    }
  }
}

TEST_CASE("bottleneck stability under sup-norm perturbations") {
  std::mt19937 gen(2718);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t h = 2 + trial % 7, w = 2 + (trial / 7) % 7;
    auto f = uniform_values(gen, h * w);
    const double eps = std::pow(10.0, -3.0 * u(gen));
    auto g = f;
    double sup = 0.0;
    for (auto& x : g) {
      const double delta = eps * (2 * u(gen) - 1);
      x += delta;
      sup = std::max(sup, std::abs(delta));
    }
    auto df = ph::compute_diagram(ph::ScalarField(h, w, f));
    auto dg = ph::compute_diagram(ph::ScalarField(h, w, g));
    CHECK(bottleneck_distance(df, dg) <= sup + 1e-9);
  }
}

TEST_CASE("PI change stays proportional to bottleneck change as perturbations shrink") {
  // For a fixed configuration the ratio ||PI(f) - PI(g)||_2 / d_B is bounded;
  // the bound below was measured on this corpus and holds with margin.
  PIConfig cfg;
  constexpr double kRecordedBound = 100.0;
  std::mt19937 gen(161);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> worst_by_scale;
  for (double scale : {1e-3, 1e-5, 1e-7, 1e-9}) {
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
      auto f = uniform_values(gen, 36);
      auto g = f;
      for (auto& x : g) x += scale * (2 * u(gen) - 1);
      auto df = ph::compute_diagram(ph::ScalarField(6, 6, f));
      auto dg = ph::compute_diagram(ph::ScalarField(6, 6, g));
      auto pf = rasterize_pi(pooled_points(df), cfg), pg = rasterize_pi(pooled_points(dg), cfg);
      const double num = vector_distance(pf.values, pg.values, VectorMetric::euclidean);
      const double den = std::max(bottleneck_distance(df, dg), 1e-15);
      worst = std::max(worst, num / den);
    }
    MESSAGE("scale " << scale << " worst ratio " << worst);
    worst_by_scale.push_back(worst);
  }
  for (double r : worst_by_scale) CHECK(r <= kRecordedBound);
  CHECK(worst_by_scale.back() <= 2.0 * worst_by_scale[worst_by_scale.size() - 2]);
}

TEST_CASE("vector distances") {
  std::vector<double> v{1.0, -2.0, 0.5}, v2{2.0, -4.0, 1.0}, z(3, 0.0);
  CHECK(vector_distance(v, v, VectorMetric::euclidean) == 0.0);
  CHECK(std::abs(vector_distance(v, v2, VectorMetric::cosine)) <= 1e-15);
  std::vector<double> e1{1.0, 0.0}, e2{0.0, 1.0};
  CHECK(vector_distance(e1, e2, VectorMetric::euclidean) == doctest::Approx(std::sqrt(2.0)));
  CHECK(vector_distance(v, z, VectorMetric::cosine) == 1.0);
  CHECK(vector_distance(z, z, VectorMetric::cosine) == 0.0);
  CHECK_THROWS_AS(vector_distance(v, e1, VectorMetric::euclidean), std::invalid_argument);
}

TEST_CASE("hungarian and maximum matching on tiny instances") {
  std::vector<double> cost{4, 1, 3, 2, 0, 5, 3, 2, 2};
  auto a = matching::hungarian(cost, 3);
  double total = 0.0;
  for (std::size_t i = 0; i < 3; ++i) total += cost[i * 3 + a[i]];
  CHECK(total == 5.0);
  std::vector<std::vector<std::size_t>> adj{{0, 1}, {0}, {1, 2}};
  CHECK(matching::maximum_matching(adj, 3) == 3);
  std::vector<std::vector<std::size_t>> adj2{{0}, {0}, {0}};
  CHECK(matching::maximum_matching(adj2, 1) == 1);
}

TEST_CASE("vector csv export") {
  std::ostringstream out;
  std::vector<std::string> ids{"a", "b"};
  std::vector<std::vector<double>> vs{{0.5, 1.0}, {0.0, 2.0}};
  write_vectors_csv(out, ids, vs);
  CHECK(out.str() == "id,v0,v1\na,0.5,1\nb,0,2\n");
}
