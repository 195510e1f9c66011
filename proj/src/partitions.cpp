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

#include "fedtopo/partitions.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "fedtopo/rng.hpp"
#include "fedtopo/text_io.hpp"

namespace fedtopo::part {

namespace {

using json = nlohmann::json;

// Floor of each cumulative boundary; the final boundary is pinned to `count`.
std::vector<std::size_t> cut_points(const std::vector<double>& shares, std::size_t count) {
  std::vector<std::size_t> cuts(shares.size() + 1, 0);
  double cum = 0.0;
  for (std::size_t j = 0; j + 1 < shares.size(); ++j) {
    cum += shares[j];
    auto c = static_cast<std::size_t>(std::floor(cum * static_cast<double>(count)));
    cuts[j + 1] = std::clamp(c, cuts[j], count);
  }
  cuts.back() = count;
  return cuts;
}

std::size_t class_count(std::span<const int> labels) {
  int top = -1;
  for (int l : labels) {
    if (l < 0) throw std::invalid_argument("negative label");
    top = std::max(top, l);
  }
  return static_cast<std::size_t>(top + 1);
}

std::vector<std::vector<std::size_t>> indices_by_class(std::span<const int> labels, std::size_t k) {
  std::vector<std::vector<std::size_t>> by(k);
  for (std::size_t i = 0; i < labels.size(); ++i) by[static_cast<std::size_t>(labels[i])].push_back(i);
  return by;
}

}  // namespace

std::string to_string(Scheme s) {
  switch (s) {
    case Scheme::q_skew: return "q_skew";
    case Scheme::l_skew: return "l_skew";
    case Scheme::fixed_k: return "fixed_k";
    case Scheme::n_skew: return "n_skew";
  }
  return "?";
}

Scheme scheme_from_string(const std::string& name) {
  if (name == "q_skew") return Scheme::q_skew;
  if (name == "l_skew") return Scheme::l_skew;
  if (name == "fixed_k") return Scheme::fixed_k;
  if (name == "n_skew") return Scheme::n_skew;
  throw std::invalid_argument("unknown partition scheme '" + name + "'");
}

Partition q_skew(std::size_t total, std::size_t n, double alpha, std::uint64_t seed) {
  if (n == 0 || total < n) throw std::invalid_argument("q_skew: need total >= n >= 1");
  if (!(alpha > 0.0)) throw std::invalid_argument("q_skew: alpha must be positive");
  Rng rng = Rng(seed).substream("q_skew");
  auto shares = rng.dirichlet(alpha, n);
  // The draw is already on the simplex; renormalising guards against rounding.
  const double s = std::accumulate(shares.begin(), shares.end(), 0.0);
  for (auto& x : shares) x /= s;
  auto cuts = cut_points(shares, total);

  Partition p;
  p.scheme = Scheme::q_skew;
  p.seed = seed;
  p.total = total;
  p.alpha = alpha;
  p.clients.resize(n);
  for (std::size_t j = 0; j < n; ++j) {
    p.clients[j].resize(cuts[j + 1] - cuts[j]);
    std::iota(p.clients[j].begin(), p.clients[j].end(), cuts[j]);
  }
  return p;
}

Partition l_skew(std::span<const int> labels, std::size_t n, double alpha, std::uint64_t seed) {
  if (n == 0) throw std::invalid_argument("l_skew: need at least one client");
  if (!(alpha > 0.0)) throw std::invalid_argument("l_skew: alpha must be positive");
  const std::size_t k = class_count(labels);
  auto by = indices_by_class(labels, k);
  Rng base = Rng(seed).substream("l_skew");

  Partition p;
  p.scheme = Scheme::l_skew;
  p.seed = seed;
  p.total = labels.size();
  p.alpha = alpha;
  p.clients.resize(n);
  for (std::size_t c = 0; c < k; ++c) {
    if (by[c].empty()) throw std::invalid_argument("l_skew: class " + std::to_string(c) + " has no samples");
    Rng rng = base.substream(static_cast<std::uint64_t>(c));
    auto cuts = cut_points(rng.dirichlet(alpha, n), by[c].size());
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t i = cuts[j]; i < cuts[j + 1]; ++i) p.clients[j].push_back(by[c][i]);
  }
  for (auto& idx : p.clients) std::sort(idx.begin(), idx.end());
  return p;
}

Partition fixed_k_skew(std::span<const int> labels, std::size_t n, std::size_t k, std::uint64_t seed) {
  const std::size_t num_classes = class_count(labels);
  if (k < 1 || k > num_classes) throw std::invalid_argument("fixed_k: need 1 <= k <= number of classes");
  if (n * k < num_classes) throw std::invalid_argument("fixed_k: n*k < K, some label would be left uncovered");
  auto by = indices_by_class(labels, num_classes);

  std::vector<std::size_t> perm(num_classes);
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng = Rng(seed).substream("fixed_k");
  rng.shuffle(perm);

  std::vector<std::vector<std::size_t>> owners(num_classes);
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t t = 0; t < k; ++t) owners[perm[(j * k + t) % num_classes]].push_back(j);

  Partition p;
  p.scheme = Scheme::fixed_k;
  p.seed = seed;
  p.total = labels.size();
  p.k = k;
  p.clients.resize(n);
  for (std::size_t c = 0; c < num_classes; ++c) {
    const auto& own = owners[c];
    const std::size_t m = own.size(), size = by[c].size();
    if (size < m) {
      throw std::invalid_argument("fixed_k: class " + std::to_string(c) + " has " + std::to_string(size) +
                                  " samples for " + std::to_string(m) + " owners");
    }
    for (std::size_t s = 0; s < m; ++s) {
      const std::size_t lo = s * size / m, hi = (s + 1) * size / m;
      for (std::size_t i = lo; i < hi; ++i) p.clients[own[s]].push_back(by[c][i]);
    }
  }
  for (auto& idx : p.clients) std::sort(idx.begin(), idx.end());
  return p;
}

Partition n_skew(std::size_t total, std::size_t n, double sigma_bar, std::uint64_t seed) {
  if (n < 2) throw std::invalid_argument("n_skew: need at least two clients");
  if (!(sigma_bar >= 0.0)) throw std::invalid_argument("n_skew: sigma_bar must be non-negative");
  Partition p;
  p.scheme = Scheme::n_skew;
  p.seed = seed;
  p.total = total;
  p.sigma_bar = sigma_bar;
  std::vector<std::size_t> all(total);
  std::iota(all.begin(), all.end(), 0);
  p.clients.assign(n, all);
  p.sigma.resize(n);
  for (std::size_t j = 0; j < n; ++j) p.sigma[j] = static_cast<double>(j) / static_cast<double>(n - 1) * sigma_bar;
  return p;
}

std::vector<double> noisy_copy(const Partition& p, std::size_t client, std::span<const double> inputs) {
  if (p.scheme != Scheme::n_skew) throw std::invalid_argument("noisy_copy: not an n_skew partition");
  if (client >= p.sigma.size()) throw std::out_of_range("noisy_copy: client out of range");
  std::vector<double> out(inputs.begin(), inputs.end());
  const double s = p.sigma[client];
  if (s == 0.0) return out;
  Rng rng = Rng(p.seed).substream("n_skew").substream(static_cast<std::uint64_t>(client));
  for (auto& x : out) x += s * rng.normal();
  return out;
}

std::vector<std::size_t> label_histogram(std::span<const int> labels, std::span<const std::size_t> indices,
                                         std::size_t num_classes) {
  std::vector<std::size_t> h(num_classes, 0);
  for (std::size_t i : indices) {
    const int l = labels[i];
    if (l < 0 || static_cast<std::size_t>(l) >= num_classes) throw std::out_of_range("label out of range");
    ++h[static_cast<std::size_t>(l)];
  }
  return h;
}

void check_exact_cover(const Partition& p) {
  if (p.scheme == Scheme::n_skew) return;
  std::vector<char> seen(p.total, 0);
  std::size_t count = 0;
  for (const auto& idx : p.clients) {
    for (std::size_t i : idx) {
      if (i >= p.total) throw std::invalid_argument("partition index " + std::to_string(i) + " out of range");
      if (seen[i]) throw std::invalid_argument("partition index " + std::to_string(i) + " assigned twice");
      seen[i] = 1;
      ++count;
    }
  }
  if (count != p.total) throw std::invalid_argument("partition leaves " + std::to_string(p.total - count) + " indices unassigned");
}

std::string to_json(const Partition& p) {
  json params = {{"total", p.total}};
  switch (p.scheme) {
    case Scheme::q_skew:
    case Scheme::l_skew: params["alpha"] = p.alpha; break;
    case Scheme::fixed_k: params["k"] = p.k; break;
    case Scheme::n_skew: params["sigma_bar"] = p.sigma_bar; break;
  }
  json clients = json::array();
  for (std::size_t j = 0; j < p.clients.size(); ++j) {
    json c = {{"id", j}};
    if (p.scheme == Scheme::n_skew) {
      c["sigma"] = p.sigma[j];
    } else {
      c["indices"] = p.clients[j];
    }
    clients.push_back(std::move(c));
  }
  json doc = {{"scheme", to_string(p.scheme)}, {"params", params}, {"seed", p.seed}, {"clients", clients}};
  return doc.dump(1) + "\n";
}

Partition from_json(const std::string& text) {
  Partition p;
  try {
    const json doc = json::parse(text);
    p.scheme = scheme_from_string(doc.at("scheme").get<std::string>());
    p.seed = doc.at("seed").get<std::uint64_t>();
    const json& params = doc.at("params");
    p.total = params.at("total").get<std::size_t>();
    if (params.contains("alpha")) p.alpha = params["alpha"].get<double>();
    if (params.contains("k")) p.k = params["k"].get<std::size_t>();
    if (params.contains("sigma_bar")) p.sigma_bar = params["sigma_bar"].get<double>();
    const json& clients = doc.at("clients");
    for (std::size_t j = 0; j < clients.size(); ++j) {
      if (clients[j].at("id").get<std::size_t>() != j) throw std::invalid_argument("client ids must be 0..n-1 in order");
      if (p.scheme == Scheme::n_skew) {
        p.sigma.push_back(clients[j].at("sigma").get<double>());
        std::vector<std::size_t> all(p.total);
        std::iota(all.begin(), all.end(), 0);
        p.clients.push_back(std::move(all));
      } else {
        p.clients.push_back(clients[j].at("indices").get<std::vector<std::size_t>>());
      }
    }
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("partition json: ") + e.what());
  }
  check_exact_cover(p);
  return p;
}

std::string summary_csv(const Partition& p, std::span<const int> labels, std::size_t num_classes) {
  std::ostringstream out;
  out << "client,count";
  for (std::size_t c = 0; c < num_classes; ++c) out << ",h" << c;
  out << '\n';
  for (std::size_t j = 0; j < p.clients.size(); ++j) {
    out << j << ',' << p.clients[j].size();
    for (std::size_t v : label_histogram(labels, p.clients[j], num_classes)) out << ',' << v;
    out << '\n';
  }
  return out.str();
}

}  // namespace fedtopo::part
