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

// Randomized efficiency / null / symmetry / linearity checks of exact
// Shapley values.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>

#include "cfshap/games.hpp"
#include "cfshap/shapley.hpp"

namespace cfshap {

struct AxiomSuiteConfig {
  std::uint64_t seed = 2024;
  int min_players = 1;
  int max_players = 10;
  int games = 1000;
  // Negative control: replaces the Shapley coefficient with 2^-(m-1).
  bool broken_weights = false;
};

struct AxiomSuiteResult {
  int games = 0;
  double max_efficiency = 0.0;
  double max_null = 0.0;
  double max_symmetry = 0.0;
  double max_linearity = 0.0;
  int planted_nulls = 0;
  int detected_nulls = 0;
  int planted_pairs = 0;
  int detected_pairs = 0;

  static constexpr double kEfficiencyTolerance = 1e-9;
  static constexpr double kNullTolerance = 1e-12;
  static constexpr double kSymmetryTolerance = 1e-9;
  static constexpr double kLinearityTolerance = 1e-9;

  bool efficiency_ok() const { return max_efficiency < kEfficiencyTolerance; }
  bool null_ok() const { return max_null < kNullTolerance && detected_nulls == planted_nulls; }
  bool symmetry_ok() const {
    return max_symmetry < kSymmetryTolerance && detected_pairs == planted_pairs;
  }
  bool linearity_ok() const { return max_linearity < kLinearityTolerance; }
  bool ok() const { return efficiency_ok() && null_ok() && symmetry_ok() && linearity_ok(); }
};

inline AxiomSuiteResult run_axiom_suite(const AxiomSuiteConfig& config) {
  if (config.min_players < 1 || config.max_players > kMaxAxiomPlayers ||
      config.min_players > config.max_players)
    throw DomainError("axiom suite: player range must lie within [1, 20]");
  std::mt19937_64 rng(config.seed);
  std::uniform_int_distribution<int> pick_m(config.min_players, config.max_players);

  auto solve = [&](int m, const TableGame& g) {
    if (config.broken_weights)
      return shapley_exact_with_weights(m, g, [](int mm, int) { return std::ldexp(1.0, 1 - mm); });
    return shapley_exact(m, g);
  };

  AxiomSuiteResult r;
  for (int k = 0; k < config.games; ++k) {
    const int m = pick_m(rng);
    TableGame g = random_game(m, rng);
    int null_player = -1;
    int pi = -1;
    int pj = -1;
    std::vector<int> players(static_cast<std::size_t>(m));
    std::iota(players.begin(), players.end(), 0);
    std::shuffle(players.begin(), players.end(), rng);
    if (m >= 3) {
      pi = players[0];
      pj = players[1];
      null_player = players[2];
    } else if (m == 2) {
      if (k % 2 == 0) {
        pi = players[0];
        pj = players[1];
      } else {
        null_player = players[0];
      }
    } else {
      null_player = 0;
    }
    if (pi >= 0) g = with_symmetric_pair(std::move(g), pi, pj);
    if (null_player >= 0) g = with_null_player(std::move(g), null_player);

    const Attribution a = solve(m, g);
    const AxiomReport report = check_axioms(m, g, a);
    r.max_efficiency = std::max(r.max_efficiency, report.efficiency_residual);
    r.max_null = std::max(r.max_null, report.max_null_phi());
    r.max_symmetry = std::max(r.max_symmetry, report.max_symmetry_gap());
    if (null_player >= 0) {
      ++r.planted_nulls;
      for (const auto& n : report.null_players) r.detected_nulls += n.player == null_player;
    }
    if (pi >= 0) {
      ++r.planted_pairs;
      for (const auto& p : report.symmetric_pairs)
        r.detected_pairs += (p.i == std::min(pi, pj) && p.j == std::max(pi, pj));
    }

    const TableGame h = random_game(m, rng);
    const Attribution ah = solve(m, h);
    const Attribution asum = solve(m, sum_games(g, h));
    for (int i = 0; i < m; ++i)
      r.max_linearity = std::max(r.max_linearity, std::abs(asum.phi[i] - (a.phi[i] + ah.phi[i])));
    ++r.games;
  }
  return r;
}

}  // namespace cfshap
