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

#include "fedtopo/topo_vec.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>

#include "fedtopo/matching.hpp"
#include "fedtopo/text_io.hpp"

namespace fedtopo::topo {

void PIConfig::validate() const {
  if (resolution == 0) throw std::invalid_argument("PIConfig: resolution must be positive");
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw std::invalid_argument("PIConfig: sigma must be positive");
  if (!(birth_range.hi > birth_range.lo)) throw std::invalid_argument("PIConfig: empty birth range");
  if (!(persistence_range.hi > persistence_range.lo)) {
    throw std::invalid_argument("PIConfig: empty persistence range");
  }
}

double PIConfig::birth_center(std::size_t u) const {
  return birth_range.lo + (static_cast<double>(u) + 0.5) * (birth_range.hi - birth_range.lo) /
                              static_cast<double>(resolution);
}

double PIConfig::persistence_center(std::size_t v) const {
  return persistence_range.lo + (static_cast<double>(v) + 0.5) * (persistence_range.hi - persistence_range.lo) /
                                    static_cast<double>(resolution);
}

std::array<std::vector<BirthPersistence>, 2> to_birth_persistence(const ph::PersistenceDiagram& diagram) {
  std::array<std::vector<BirthPersistence>, 2> out;
  for (std::size_t i = 0; i < diagram.pairs.size(); ++i) {
    const auto& p = diagram.pairs[i];
    if (p.dim < 0 || p.dim > 1) continue;
    BirthPersistence bp;
    bp.birth = p.birth;
    bp.essential = p.essential();
    bp.persistence = bp.essential ? ph::kInfinity : p.death - p.birth;
    bp.dim = p.dim;
    bp.pair_index = i;
    out[static_cast<std::size_t>(p.dim)].push_back(bp);
  }
  return out;
}

std::vector<BirthPersistence> pooled_points(const ph::PersistenceDiagram& diagram) {
  auto split = to_birth_persistence(diagram);
  auto out = std::move(split[0]);
  out.insert(out.end(), split[1].begin(), split[1].end());
  return out;
}

namespace {

// Effective persistence coordinate, or false when the point is left out.
bool effective_persistence(const BirthPersistence& pt, const PIConfig& cfg, double& p) {
  if (pt.essential) {
    if (!cfg.include_essential) return false;
    p = cfg.persistence_range.hi;
    return true;
  }
  p = pt.persistence;
  return true;
}

void gaussian_profiles(const BirthPersistence& pt, double p, const PIConfig& cfg, std::vector<double>& gx,
                       std::vector<double>& gy) {
  const double inv = 1.0 / (2.0 * cfg.sigma * cfg.sigma);
  for (std::size_t u = 0; u < cfg.resolution; ++u) {
    const double dx = cfg.birth_center(u) - pt.birth;
    gx[u] = std::exp(-dx * dx * inv);
  }
  for (std::size_t v = 0; v < cfg.resolution; ++v) {
    const double dy = cfg.persistence_center(v) - p;
    gy[v] = std::exp(-dy * dy * inv);
  }
}

}  // namespace

PersistenceImage rasterize_pi(std::span<const BirthPersistence> points, const PIConfig& config) {
  config.validate();
  const std::size_t r = config.resolution;
  PersistenceImage img{std::vector<double>(config.size(), 0.0), config};
  std::vector<double> gx(r), gy(r);
  for (const auto& pt : points) {
    double p = 0.0;
    if (!effective_persistence(pt, config, p)) continue;
    gaussian_profiles(pt, p, config, gx, gy);
    for (std::size_t u = 0; u < r; ++u) {
      for (std::size_t v = 0; v < r; ++v) img.values[u * r + v] += gx[u] * gy[v];
    }
  }
  return img;
}

TopoEmbedding topo_embedding(std::span<const ph::PersistenceDiagram> diagrams, const PIConfig& config,
                             std::span<const std::size_t> channels) {
  std::vector<std::size_t> selected(channels.begin(), channels.end());
  if (selected.empty()) {
    for (std::size_t c = 0; c < diagrams.size(); ++c) selected.push_back(c);
  }
  if (selected.empty()) throw std::invalid_argument("topo_embedding: no channels");
  TopoEmbedding te{std::vector<double>(config.size(), 0.0), selected.size()};
  for (std::size_t c : selected) {
    if (c >= diagrams.size()) throw std::invalid_argument("topo_embedding: channel index out of range");
    const auto pts = pooled_points(diagrams[c]);
    const auto img = rasterize_pi(pts, config);
    for (std::size_t i = 0; i < te.values.size(); ++i) te.values[i] += img.values[i];
  }
  const double k = static_cast<double>(selected.size());
  for (auto& x : te.values) x /= k;
  return te;
}

std::vector<PointGradient> pi_backward(std::span<const BirthPersistence> points, const PIConfig& config,
                                       std::span<const double> grad_image) {
  config.validate();
  if (grad_image.size() != config.size()) throw std::invalid_argument("pi_backward: gradient size mismatch");
  const std::size_t r = config.resolution;
  const double inv_var = 1.0 / (config.sigma * config.sigma);
  std::vector<PointGradient> out(points.size());
  std::vector<double> gx(r), gy(r);
  for (std::size_t i = 0; i < points.size(); ++i) {
    double p = 0.0;
    if (!effective_persistence(points[i], config, p)) continue;
    gaussian_profiles(points[i], p, config, gx, gy);
    double db = 0.0, dp = 0.0;
    for (std::size_t u = 0; u < r; ++u) {
      const double ox = (config.birth_center(u) - points[i].birth) * inv_var;
      for (std::size_t v = 0; v < r; ++v) {
        const double w = grad_image[u * r + v] * gx[u] * gy[v];
        db += w * ox;
        dp += w * (config.persistence_center(v) - p) * inv_var;
      }
    }
    out[i].d_birth = db;
    // The clamped persistence of an essential point is a constant.
    out[i].d_persistence = points[i].essential ? 0.0 : dp;
  }
  return out;
}

std::vector<ph::PairGradient> to_pair_gradients(const ph::PersistenceDiagram& diagram,
                                                std::span<const BirthPersistence> points,
                                                std::span<const PointGradient> grads) {
  if (points.size() != grads.size()) throw std::invalid_argument("to_pair_gradients: size mismatch");
  std::vector<ph::PairGradient> out(diagram.pairs.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    auto& g = out.at(points[i].pair_index);
    if (points[i].essential) {
      g.d_birth += grads[i].d_birth;
    } else {
      g.d_birth += grads[i].d_birth - grads[i].d_persistence;
      g.d_death += grads[i].d_persistence;
    }
  }
  return out;
}

NormalizedField minmax_normalize(const ph::ScalarField& field) {
  const auto v = field.values();
  NormalizedField out;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] < v[out.argmin]) out.argmin = i;
    if (v[i] > v[out.argmax]) out.argmax = i;
  }
  out.range = v[out.argmax] - v[out.argmin];
  std::vector<double> y(v.size(), 0.0);
  if (out.range > 0.0) {
    const double lo = v[out.argmin];
    for (std::size_t i = 0; i < v.size(); ++i) y[i] = (v[i] - lo) / out.range;
  }
  out.field = ph::ScalarField(field.height(), field.width(), std::move(y));
  return out;
}

std::vector<double> minmax_backward(const NormalizedField& nf, std::span<const double> grad) {
  const auto y = nf.field.values();
  if (grad.size() != y.size()) throw std::invalid_argument("minmax_backward: size mismatch");
  std::vector<double> out(y.size(), 0.0);
  if (!(nf.range > 0.0)) return out;
  const double inv = 1.0 / nf.range;
  double via_min = 0.0, via_max = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    out[i] = grad[i] * inv;
    via_min += grad[i] * (y[i] - 1.0) * inv;
    via_max -= grad[i] * y[i] * inv;
  }
  out[nf.argmin] += via_min;
  out[nf.argmax] += via_max;
  return out;
}

namespace {

struct Point {
  double birth, death;
};

struct Split {
  std::vector<Point> finite;
  std::vector<double> essential_births;
};

Split split_dimension(const ph::PersistenceDiagram& d, int dim) {
  Split s;
  for (const auto& p : d.pairs) {
    if (p.dim != dim) continue;
    if (p.essential()) {
      s.essential_births.push_back(p.birth);
    } else {
      s.finite.push_back({p.birth, p.death});
    }
  }
  std::sort(s.essential_births.begin(), s.essential_births.end());
  return s;
}

double linf(const Point& a, const Point& b) { return std::max(std::abs(a.birth - b.birth), std::abs(a.death - b.death)); }
double half_persistence(const Point& a) { return (a.death - a.birth) / 2.0; }

bool bottleneck_feasible(const std::vector<Point>& a, const std::vector<Point>& b, double delta) {
  const std::size_t n = a.size(), m = b.size();
  // Left: a_0..a_{n-1}, then diagonal copies of b. Right: b_0..b_{m-1}, then
  // diagonal copies of a.
  std::vector<std::vector<std::size_t>> adj(n + m);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      if (linf(a[i], b[j]) <= delta) adj[i].push_back(j);
    }
    if (half_persistence(a[i]) <= delta) adj[i].push_back(m + i);
  }
  for (std::size_t j = 0; j < m; ++j) {
    if (half_persistence(b[j]) <= delta) adj[n + j].push_back(j);
    for (std::size_t i = 0; i < n; ++i) adj[n + j].push_back(m + i);
  }
  return matching::maximum_matching(adj, n + m) == n + m;
}

double bottleneck_finite(const std::vector<Point>& a, const std::vector<Point>& b) {
  if (a.empty() && b.empty()) return 0.0;
  std::vector<double> candidates;
  candidates.reserve(a.size() * b.size() + a.size() + b.size());
  for (const auto& x : a) {
    candidates.push_back(half_persistence(x));
    for (const auto& y : b) candidates.push_back(linf(x, y));
  }
  for (const auto& y : b) candidates.push_back(half_persistence(y));
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
  std::size_t lo = 0, hi = candidates.size() - 1;  // hi is always feasible
  while (lo < hi) {
    const std::size_t mid = lo + (hi - lo) / 2;
    if (bottleneck_feasible(a, b, candidates[mid])) {
      hi = mid;
    } else {
      lo = mid + 1;
    }
  }
  return candidates[lo];
}

double wasserstein_finite_power(const std::vector<Point>& a, const std::vector<Point>& b, double p) {
  const std::size_t n = a.size(), m = b.size(), N = n + m;
  if (N == 0) return 0.0;
  std::vector<double> cost(N * N, matching::kForbidden);
  auto diag = [p](const Point& x) { return std::pow((x.death - x.birth) / std::sqrt(2.0), p); };
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      cost[i * N + j] = std::pow(std::hypot(a[i].birth - b[j].birth, a[i].death - b[j].death), p);
    }
    cost[i * N + m + i] = diag(a[i]);
  }
  for (std::size_t k = 0; k < m; ++k) {
    cost[(n + k) * N + k] = diag(b[k]);
    for (std::size_t l = 0; l < n; ++l) cost[(n + k) * N + m + l] = 0.0;
  }
  const auto assignment = matching::hungarian(cost, N);
  double total = 0.0;
  for (std::size_t i = 0; i < N; ++i) total += cost[i * N + assignment[i]];
  return total;
}

}  // namespace

double bottleneck_distance(const ph::PersistenceDiagram& a, const ph::PersistenceDiagram& b, int dim) {
  const auto sa = split_dimension(a, dim), sb = split_dimension(b, dim);
  if (sa.essential_births.size() != sb.essential_births.size()) return ph::kInfinity;
  double ess = 0.0;
  for (std::size_t i = 0; i < sa.essential_births.size(); ++i) {
    ess = std::max(ess, std::abs(sa.essential_births[i] - sb.essential_births[i]));
  }
  return std::max(ess, bottleneck_finite(sa.finite, sb.finite));
}

double bottleneck_distance(const ph::PersistenceDiagram& a, const ph::PersistenceDiagram& b) {
  return std::max(bottleneck_distance(a, b, 0), bottleneck_distance(a, b, 1));
}

namespace {

double wasserstein_power(const ph::PersistenceDiagram& a, const ph::PersistenceDiagram& b, double p, int dim) {
  const auto sa = split_dimension(a, dim), sb = split_dimension(b, dim);
  if (sa.essential_births.size() != sb.essential_births.size()) return ph::kInfinity;
  double total = 0.0;
  for (std::size_t i = 0; i < sa.essential_births.size(); ++i) {
    total += std::pow(std::abs(sa.essential_births[i] - sb.essential_births[i]), p);
  }
  return total + wasserstein_finite_power(sa.finite, sb.finite, p);
}

void check_order(double p) {
  if (!(p >= 1.0) || !std::isfinite(p)) throw std::invalid_argument("wasserstein_distance: p must be >= 1");
}

}  // namespace

double wasserstein_distance(const ph::PersistenceDiagram& a, const ph::PersistenceDiagram& b, double p, int dim) {
  check_order(p);
  return std::pow(wasserstein_power(a, b, p, dim), 1.0 / p);
}

double wasserstein_distance(const ph::PersistenceDiagram& a, const ph::PersistenceDiagram& b, double p) {
  check_order(p);
  return std::pow(wasserstein_power(a, b, p, 0) + wasserstein_power(a, b, p, 1), 1.0 / p);
}

double vector_distance(std::span<const double> a, std::span<const double> b, VectorMetric kind) {
  if (a.size() != b.size()) throw std::invalid_argument("vector_distance: length mismatch");
  if (kind == VectorMetric::euclidean) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(s);
  }
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 && nb == 0.0) return 0.0;
  if (na == 0.0 || nb == 0.0) return 1.0;
  return 1.0 - dot / (std::sqrt(na) * std::sqrt(nb));
}

void write_vectors_csv(std::ostream& out, std::span<const std::string> ids,
                       std::span<const std::vector<double>> vectors) {
  if (ids.size() != vectors.size()) throw std::invalid_argument("write_vectors_csv: ids/vectors mismatch");
  const std::size_t m = vectors.empty() ? 0 : vectors.front().size();
  out << "id";
  for (std::size_t i = 0; i < m; ++i) out << ",v" << i;
  out << '\n';
  for (std::size_t k = 0; k < vectors.size(); ++k) {
    if (vectors[k].size() != m) throw std::invalid_argument("write_vectors_csv: ragged vectors");
    out << ids[k];
    for (double x : vectors[k]) out << ',' << format_double(x);
    out << '\n';
  }
}

}  // namespace fedtopo::topo
