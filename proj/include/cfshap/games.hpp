/*
 * Copyright 2026 The cfshap Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Table-backed games and random game generators for axiom suites and
// benchmarks.

#pragma once

#include <cstdint>
#include <random>
#include <utility>
#include <vector>

#include "cfshap/shapley.hpp"

namespace cfshap {

// A game stored as its full value table, indexed by coalition mask.
struct TableGame {
  int num_players = 0;
  Vector values;

  double operator()(Coalition s) const { return values[s.mask()]; }
  Game as_game() const {
    return {num_players, [t = *this](Coalition s) { return t.values[s.mask()]; }};
  }
};

// Values are multiples of 1/64 in [-16, 16], so sums and differences of a
// few values are exact in double precision.
inline TableGame random_dyadic_game(int m, std::mt19937_64& rng) {
  internal::check_player_count(m);
  std::uniform_int_distribution<int> k(-1024, 1024);
  TableGame g{m, Vector(std::size_t{1} << m)};
  for (double& v : g.values) v = k(rng) / 64.0;
  return g;
}

inline TableGame random_game(int m, std::mt19937_64& rng) {
  internal::check_player_count(m);
  std::normal_distribution<double> n(0.0, 1.0);
  TableGame g{m, Vector(std::size_t{1} << m)};
  for (double& v : g.values) v = n(rng);
  return g;
}

// v(S) = sigmoid(b + sum_{i in S} w_i + sum_{i<j in S} w_ij): values in
// (0, 1) with pairwise interactions, shaped like a classifier score.
inline TableGame random_logistic_game(int m, std::mt19937_64& rng) {
  internal::check_player_count(m);
  std::normal_distribution<double> main(0.0, 1.0);
  std::normal_distribution<double> pair(0.0, 0.5);
  const double b = main(rng);
  Vector w(static_cast<std::size_t>(m));
  for (double& x : w) x = main(rng);
  Matrix wij(static_cast<std::size_t>(m), static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i)
    for (int j = i + 1; j < m; ++j) wij(i, j) = pair(rng);
  TableGame g{m, Vector(std::size_t{1} << m)};
  for (std::uint32_t mask = 0; mask < g.values.size(); ++mask) {
    double logit = b;
    for (int i = 0; i < m; ++i) {
      if (!(mask & (1u << i))) continue;
      logit += w[static_cast<std::size_t>(i)];
      for (int j = i + 1; j < m; ++j)
        if (mask & (1u << j)) logit += wij(i, j);
    }
    g.values[mask] = sigmoid(logit);
  }
  return g;
}

// v(S) = sum_{i in S} c_i
inline TableGame additive_game(const Vector& c) {
  const int m = static_cast<int>(c.size());
  internal::check_player_count(m);
  TableGame g{m, Vector(std::size_t{1} << m, 0.0)};
  for (std::uint32_t mask = 0; mask < g.values.size(); ++mask) {
    double s = 0.0;
    for (int i = 0; i < m; ++i)
      if (mask & (1u << i)) s += c[static_cast<std::size_t>(i)];
    g.values[mask] = s;
  }
  return g;
}

// Makes `player` null: v(S) := v(S \ {player}).
inline TableGame with_null_player(TableGame g, int player) {
  const std::uint32_t bit = 1u << player;
  for (std::uint32_t mask = 0; mask < g.values.size(); ++mask)
    if (mask & bit) g.values[mask] = g.values[mask & ~bit];
  return g;
}

// Makes players i and j exchangeable: v(S) := v(swap_ij(S)) on the half of
// the table where exactly one of them is present.
inline TableGame with_symmetric_pair(TableGame g, int i, int j) {
  const std::uint32_t bi = 1u << i;
  const std::uint32_t bj = 1u << j;
  for (std::uint32_t mask = 0; mask < g.values.size(); ++mask)
    if ((mask & bi) && !(mask & bj)) g.values[(mask & ~bi) | bj] = g.values[mask];
  return g;
}

inline TableGame sum_games(const TableGame& a, const TableGame& b) {
  TableGame g = a;
  for (std::size_t k = 0; k < g.values.size(); ++k) g.values[k] += b.values[k];
  return g;
}

}  // namespace cfshap
