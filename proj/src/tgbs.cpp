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

#include "fedtopo/tgbs.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "fedtopo/rng.hpp"
#include "fedtopo/text_io.hpp"

namespace fedtopo::tgbs {

namespace {

// Eigenvalues below this fraction of the largest are treated as zero.
constexpr double kRankTol = 1e-10;

}  // namespace

Pca dim_reduce(const Activations& a, std::size_t k) {
  const std::size_t c = a.channels, plane = a.plane();
  if (k == 0 || k > c)
    throw std::invalid_argument("dim_reduce: k = " + std::to_string(k) + " outside [1, " + std::to_string(c) + "]");
  if (a.count < 2) throw std::invalid_argument("dim_reduce: need at least two samples");
  if (a.values.size() != a.count * c * plane) throw std::invalid_argument("dim_reduce: activation size mismatch");

  Pca out;
  out.mean.assign(c, 0.0);
  const double obs = static_cast<double>(a.count * plane);
  for (std::size_t n = 0; n < a.count; ++n)
    for (std::size_t ch = 0; ch < c; ++ch) {
      const double* p = a.channel(n, ch);
      for (std::size_t i = 0; i < plane; ++i) out.mean[ch] += p[i];
    }
  for (auto& m : out.mean) m /= obs;

  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(c));
  std::vector<double> centred(c);
  for (std::size_t n = 0; n < a.count; ++n)
    for (std::size_t i = 0; i < plane; ++i) {
      for (std::size_t ch = 0; ch < c; ++ch) centred[ch] = a.channel(n, ch)[i] - out.mean[ch];
      for (std::size_t r = 0; r < c; ++r)
        for (std::size_t s = r; s < c; ++s) cov(r, s) += centred[r] * centred[s];
    }
  for (std::size_t r = 0; r < c; ++r)
    for (std::size_t s = 0; s < r; ++s) cov(r, s) = cov(s, r);
  cov /= std::max(1.0, obs - 1.0);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  if (eig.info() != Eigen::Success) throw std::runtime_error("dim_reduce: eigendecomposition failed");
  // Eigen sorts ascending.
  const auto& vals = eig.eigenvalues();
  const auto& vecs = eig.eigenvectors();
  double total = 0.0;
  for (std::size_t i = 0; i < c; ++i) {
    const double v = std::max(0.0, vals(static_cast<Eigen::Index>(c - 1 - i)));
    out.eigenvalues.push_back(v);
    total += v;
  }
  const double top = out.eigenvalues.empty() ? 0.0 : out.eigenvalues[0];
  std::size_t kept = 0;
  while (kept < k && top > 0.0 && out.eigenvalues[kept] > kRankTol * top) ++kept;

  out.components.assign(kept * c, 0.0);
  for (std::size_t j = 0; j < kept; ++j) {
    const auto col = static_cast<Eigen::Index>(c - 1 - j);
    std::size_t arg = 0;
    for (std::size_t ch = 1; ch < c; ++ch)
      if (std::abs(vecs(static_cast<Eigen::Index>(ch), col)) > std::abs(vecs(static_cast<Eigen::Index>(arg), col)))
        arg = ch;
    const double sign = vecs(static_cast<Eigen::Index>(arg), col) < 0 ? -1.0 : 1.0;
    for (std::size_t ch = 0; ch < c; ++ch) out.components[j * c + ch] = sign * vecs(static_cast<Eigen::Index>(ch), col);
    out.explained.push_back(out.eigenvalues[j] / total);
  }

  Activations& r = out.reduced;
  r.count = a.count;
  r.channels = kept;
  r.height = a.height;
  r.width = a.width;
  r.values.assign(a.count * kept * plane, 0.0);
  for (std::size_t n = 0; n < a.count; ++n)
    for (std::size_t j = 0; j < kept; ++j) {
      double* dst = r.values.data() + (n * kept + j) * plane;
      for (std::size_t ch = 0; ch < c; ++ch) {
        const double w = out.components[j * c + ch];
        const double* src = a.channel(n, ch);
        for (std::size_t i = 0; i < plane; ++i) dst[i] += w * (src[i] - out.mean[ch]);
      }
    }
  return out;
}

double roc_auc(std::span<const std::pair<double, bool>> scored) {
  std::vector<std::pair<double, bool>> v(scored.begin(), scored.end());
  std::sort(v.begin(), v.end(), [](const auto& x, const auto& y) { return x.first < y.first; });
  double rank_sum = 0.0;
  std::size_t pos = 0, neg = 0;
  for (std::size_t i = 0; i < v.size();) {
    std::size_t j = i;
    while (j < v.size() && v[j].first == v[i].first) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // mean of ranks i+1..j
    for (std::size_t t = i; t < j; ++t) {
      if (v[t].second) {
        rank_sum += avg_rank;
        ++pos;
      } else {
        ++neg;
      }
    }
    i = j;
  }
  if (pos == 0 || neg == 0) throw std::invalid_argument("roc_auc: need both within- and between-class scores");
  const double p = static_cast<double>(pos), q = static_cast<double>(neg);
  return (rank_sum - p * (p + 1.0) / 2.0) / (p * q);
}

std::string to_string(Metric m) {
  switch (m) {
    case Metric::bottleneck: return "bottleneck";
    case Metric::wasserstein2: return "wasserstein2";
    case Metric::pi_euclidean: return "pi_euclidean";
    case Metric::pi_cosine: return "pi_cosine";
  }
  return "?";
}

Metric metric_from_string(const std::string& name) {
  for (Metric m : all_metrics())
    if (to_string(m) == name) return m;
  throw std::invalid_argument("unknown metric '" + name + "'");
}

std::vector<Metric> all_metrics() {
  return {Metric::bottleneck, Metric::wasserstein2, Metric::pi_euclidean, Metric::pi_cosine};
}

std::vector<PairSample> sample_pairs(std::span<const int> labels, std::size_t n_pairs, std::uint64_t seed) {
  std::vector<PairSample> within, between;
  for (std::size_t a = 0; a < labels.size(); ++a)
    for (std::size_t b = a + 1; b < labels.size(); ++b)
      (labels[a] == labels[b] ? within : between).push_back({a, b, labels[a] == labels[b], 0.0});
  Rng rng = Rng(seed).substream("pairs");
  auto draw = [&](std::vector<PairSample>& pool, Rng r) {
    // Partial Fisher-Yates: the first m entries are a uniform sample.
    const std::size_t m = std::min(n_pairs, pool.size());
    for (std::size_t i = 0; i < m; ++i) std::swap(pool[i], pool[i + r.below(pool.size() - i)]);
    pool.resize(m);
  };
  draw(within, rng.substream("within"));
  draw(between, rng.substream("between"));
  within.insert(within.end(), between.begin(), between.end());
  return within;
}

BlockTopology block_topology(const Activations& reduced, const topo::PIConfig& pi) {
  BlockTopology t;
  t.channels = reduced.channels;
  t.diagrams.resize(reduced.count);
  t.images.resize(reduced.count);
  const std::size_t plane = reduced.plane();
  for (std::size_t n = 0; n < reduced.count; ++n)
    for (std::size_t c = 0; c < reduced.channels; ++c) {
      const double* p = reduced.channel(n, c);
      auto nf = topo::minmax_normalize(ph::ScalarField(reduced.height, reduced.width, std::vector<double>(p, p + plane)));
      auto d = ph::compute_diagram(nf.field);
      t.images[n].push_back(topo::rasterize_pi(topo::pooled_points(d), pi).values);
      t.diagrams[n].push_back(std::move(d));
    }
  return t;
}

double sample_distance(const BlockTopology& t, std::size_t a, std::size_t b, Metric m) {
  double total = 0.0;
  for (std::size_t c = 0; c < t.channels; ++c) {
    const auto& da = t.diagrams[a][c];
    const auto& db = t.diagrams[b][c];
    switch (m) {
      case Metric::bottleneck:
        total += topo::bottleneck_distance(da, db, 0) + topo::bottleneck_distance(da, db, 1);
        break;
      case Metric::wasserstein2:
        total += topo::wasserstein_distance(da, db, 2.0, 0) + topo::wasserstein_distance(da, db, 2.0, 1);
        break;
      case Metric::pi_euclidean:
        total += topo::vector_distance(t.images[a][c], t.images[b][c], topo::VectorMetric::euclidean);
        break;
      case Metric::pi_cosine:
        total += topo::vector_distance(t.images[a][c], t.images[b][c], topo::VectorMetric::cosine);
        break;
    }
  }
  return total / static_cast<double>(t.channels);
}

ScreenResult screen_blocks(std::span<const Block> blocks, std::span<const int> labels, const ScreenConfig& config) {
  if (blocks.empty()) throw std::invalid_argument("screen_blocks: no candidate blocks");
  if (config.metrics.empty()) throw std::invalid_argument("screen_blocks: no metrics");
  config.pi.validate();
  auto pairs = sample_pairs(labels, config.n_pairs, config.seed);
  const bool has_within = std::any_of(pairs.begin(), pairs.end(), [](const auto& p) { return p.within; });
  const bool has_between = std::any_of(pairs.begin(), pairs.end(), [](const auto& p) { return !p.within; });
  if (!has_within || !has_between)
    throw std::invalid_argument("screen_blocks: need at least two classes and a class with two samples");

  ScreenResult result;
  double best = -1.0;
  for (const Block& block : blocks) {
    const Activations& act = block.activations;
    if (act.count != labels.size())
      throw std::invalid_argument("screen_blocks: block '" + block.name + "' has " + std::to_string(act.count) +
                                  " samples for " + std::to_string(labels.size()) + " labels");
    if (act.height < 2 || act.width < 2) {
      result.warnings.push_back("block '" + block.name + "' has no spatial extent (" + std::to_string(act.height) +
                                "x" + std::to_string(act.width) + "), skipped");
      continue;
    }
    auto pca = dim_reduce(act, std::min(config.pca_k, act.channels));
    if (pca.reduced.channels == 0) {
      result.warnings.push_back("block '" + block.name + "' has constant activations, skipped");
      continue;
    }
    const auto topo_cache = block_topology(pca.reduced, config.pi);
    BlockScore score;
    score.block = block.name;
    double sum = 0.0;
    for (Metric m : config.metrics) {
      std::vector<std::pair<double, bool>> scored;
      scored.reserve(pairs.size());
      for (const auto& p : pairs) scored.emplace_back(-sample_distance(topo_cache, p.a, p.b, m), p.within);
      const double auc = roc_auc(scored);
      score.auc.emplace_back(m, auc);
      sum += auc;
    }
    score.mean_auc = sum / static_cast<double>(config.metrics.size());
    if (score.mean_auc > best) {
      best = score.mean_auc;
      result.best = block.name;
    }
    result.scores.push_back(std::move(score));
  }
  if (result.scores.empty()) throw std::invalid_argument("screen_blocks: no block could be screened");
  return result;
}

Activations extract_block(nn::Model<double>& model, const data::Dataset& ds, const std::string& block,
                          std::size_t batch) {
  Activations out;
  out.count = ds.count;
  const std::size_t in = ds.sample_size();
  for (std::size_t start = 0; start < ds.count; start += batch) {
    const std::size_t m = std::min(batch, ds.count - start);
    nn::Graph<double> g;
    nn::Tensor<double> x({m, ds.channels, ds.height, ds.width},
                         std::vector<double>(ds.images.begin() + start * in, ds.images.begin() + (start + m) * in));
    auto r = model.forward(g, g.input(std::move(x)), block);
    const auto& v = g.value(r.logits);
    if (v.rank() == 4) {
      out.channels = v.dim(1);
      out.height = v.dim(2);
      out.width = v.dim(3);
    } else {
      out.channels = v.size() / m;
      out.height = out.width = 1;
    }
    out.values.insert(out.values.end(), v.data.begin(), v.data.end());
  }
  return out;
}

Activations input_block(const data::Dataset& ds, bool inverted) {
  Activations a{ds.count, ds.channels, ds.height, ds.width, ds.images};
  if (inverted)
    for (double& v : a.values) v = -v;
  return a;
}

Activations spatially_permuted(const Activations& a, std::uint64_t seed) {
  std::vector<std::size_t> perm(a.plane());
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng = Rng(seed).substream("permute");
  rng.shuffle(perm);
  Activations out = a;
  for (std::size_t n = 0; n < a.count; ++n)
    for (std::size_t c = 0; c < a.channels; ++c) {
      const double* src = a.channel(n, c);
      double* dst = out.values.data() + (n * a.channels + c) * a.plane();
      for (std::size_t i = 0; i < a.plane(); ++i) dst[i] = src[perm[i]];
    }
  return out;
}

std::string scores_csv(const ScreenResult& r) {
  std::ostringstream out;
  out << "block,metric,auc\n";
  for (const auto& s : r.scores)
    for (const auto& [m, auc] : s.auc) out << s.block << ',' << to_string(m) << ',' << format_double(auc) << '\n';
  for (const auto& s : r.scores)
    if (s.block == r.best) out << "winner," << s.block << ',' << format_double(s.mean_auc) << '\n';
  return out.str();
}

}  // namespace fedtopo::tgbs
