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

#include "fedtopo/matching.hpp"

#include <limits>
#include <queue>
#include <stdexcept>

namespace fedtopo::matching {

std::vector<std::size_t> hungarian(const std::vector<double>& cost, std::size_t n) {
  if (cost.size() != n * n) throw std::invalid_argument("hungarian: cost matrix is not n x n");
  if (n == 0) return {};
  constexpr double inf = std::numeric_limits<double>::infinity();
  // Potentials formulation with 1-based sentinel row/column 0.
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<std::size_t> assignment(n);
  for (std::size_t j = 1; j <= n; ++j) assignment[p[j] - 1] = j - 1;
  return assignment;
}

std::size_t maximum_matching(const std::vector<std::vector<std::size_t>>& adj, std::size_t right_count) {
  const std::size_t left_count = adj.size();
  constexpr std::size_t kFree = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> match_left(left_count, kFree), match_right(right_count, kFree);
  std::vector<std::size_t> dist(left_count);
  std::size_t matched = 0;

  auto bfs = [&]() {
    std::queue<std::size_t> q;
    bool found = false;
    for (std::size_t l = 0; l < left_count; ++l) {
      if (match_left[l] == kFree) {
        dist[l] = 0;
        q.push(l);
      } else {
        dist[l] = kFree;
      }
    }
    while (!q.empty()) {
      const std::size_t l = q.front();
      q.pop();
      for (std::size_t r : adj[l]) {
        const std::size_t next = match_right[r];
        if (next == kFree) {
          found = true;
        } else if (dist[next] == kFree) {
          dist[next] = dist[l] + 1;
          q.push(next);
        }
      }
    }
    return found;
  };

  // Iterative DFS along the BFS layering.
  std::vector<std::size_t> edge_it(left_count);
  auto dfs = [&](std::size_t root) {
    std::vector<std::size_t> stack{root};
    while (!stack.empty()) {
      const std::size_t l = stack.back();
      bool advanced = false;
      while (edge_it[l] < adj[l].size()) {
        const std::size_t r = adj[l][edge_it[l]];
        const std::size_t next = match_right[r];
        if (next == kFree) {
          // Flip the augmenting path recorded on the stack.
          std::size_t right = r;
          for (std::size_t k = stack.size(); k-- > 0;) {
            const std::size_t left = stack[k];
            const std::size_t prev = match_left[left];
            match_left[left] = right;
            match_right[right] = left;
            right = prev;
          }
          return true;
        }
        if (dist[next] == dist[l] + 1) {
          stack.push_back(next);
          advanced = true;
          break;
        }
        ++edge_it[l];
      }
      if (!advanced) {
        dist[l] = kFree;
        stack.pop_back();
        if (!stack.empty()) ++edge_it[stack.back()];
      }
    }
    return false;
  };

  while (bfs()) {
    std::fill(edge_it.begin(), edge_it.end(), 0);
    for (std::size_t l = 0; l < left_count; ++l) {
      if (match_left[l] == kFree && dfs(l)) ++matched;
    }
  }
  return matched;
}

}  // namespace fedtopo::matching
