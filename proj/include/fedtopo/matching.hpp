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

#pragma once

#include <cstddef>
#include <vector>

namespace fedtopo::matching {

// Cost entries at or above this value are treated as forbidden.
inline constexpr double kForbidden = 1e300;

// Minimum-cost perfect matching on a square cost matrix (row-major, n x n).
// Returns the column assigned to each row. O(n^3).
std::vector<std::size_t> hungarian(const std::vector<double>& cost, std::size_t n);

// Size of a maximum matching in a bipartite graph given as adjacency lists
// from left vertices to right vertices (Hopcroft-Karp).
std::size_t maximum_matching(const std::vector<std::vector<std::size_t>>& adjacency, std::size_t right_count);

}  // namespace fedtopo::matching
