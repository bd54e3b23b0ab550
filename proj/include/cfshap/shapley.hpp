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

// Cooperative games over at most 30 players, exact Shapley values by full
// enumeration, a permutation-sampling estimator and executable axiom checks.
//
// Value functions are any callable `double(Coalition)`. The engine evaluates
// serially; a value function does not need to be thread-safe.

#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "cfshap/errors.hpp"
#include "cfshap/numerics.hpp"

namespace cfshap {

inline constexpr int kMaxPlayers = 30;
// Exhaustive symmetry/null detection is refused above this size.
inline constexpr int kMaxAxiomPlayers = 20;
inline constexpr double kExactTolerance = 1e-12;

class Coalition {
 public:
  Coalition(std::uint32_t mask, int num_players)
      : mask_(mask), num_players_(num_players) {
    if (num_players < 1 || num_players > kMaxPlayers)
      throw DomainError("Coalition: player count " + std::to_string(num_players) +
                        " outside [1, 30]");
    if (mask >= (std::uint32_t{1} << num_players))
      throw DomainError("Coalition: mask out of range");
  }

  static Coalition empty(int m) { return {0, m}; }
  static Coalition grand(int m) { return {(std::uint32_t{1} << m) - 1, m}; }

  std::uint32_t mask() const { return mask_; }
  int num_players() const { return num_players_; }
  int size() const { return std::popcount(mask_); }
  bool contains(int player) const { return (mask_ >> player) & 1u; }
  Coalition with(int player) const { return {mask_ | (1u << player), num_players_}; }
  Coalition without(int player) const { return {mask_ & ~(1u << player), num_players_}; }

  bool operator==(const Coalition&) const = default;

 private:
  std::uint32_t mask_;
  int num_players_;
};

struct Game {
  int num_players = 0;
  std::function<double(Coalition)> value;

  double operator()(Coalition s) const { return value(s); }
};

enum class ShapleyMethod { kExact, kSampled };

struct Attribution {
  Vector phi;
  double v_empty = 0.0;
  double v_grand = 0.0;
  ShapleyMethod method = ShapleyMethod::kExact;
  std::uint64_t permutations = 0;  // sampled only
  std::uint64_t seed = 0;          // sampled only
  std::uint64_t evaluations = 0;   // value-function calls issued

  double phi_sum() const { return std::accumulate(phi.begin(), phi.end(), 0.0); }
  double efficiency_residual() const {
    return std::abs(phi_sum() - (v_grand - v_empty));
  }
};

// |S|!(m-|S|-1)!/m!, computed as 1 / (m * C(m-1, s)).
inline double shapley_weight(int m, int s) {
  if (m < 1) throw DomainError("shapley_weight: m must be >= 1");
  if (s < 0 || s > m - 1)
    throw DomainError("shapley_weight: coalition size " + std::to_string(s) +
                      " outside [0, " + std::to_string(m - 1) + "]");
  const int k = std::min(s, m - 1 - s);
  double binom = 1.0;
  for (int j = 1; j <= k; ++j) binom = binom * (m - 1 - k + j) / j;
  return 1.0 / (static_cast<double>(m) * std::round(binom));
}

namespace internal {

inline void check_player_count(int m) {
  if (m < 1 || m > kMaxPlayers)
    throw DomainError("player count " + std::to_string(m) + " outside [1, 30]");
}

// Evaluates the value function once per coalition, indexed by mask.
template <class ValueFn>
Vector enumerate_values(int m, ValueFn&& value) {
  check_player_count(m);
  const std::uint32_t count = std::uint32_t{1} << m;
  Vector table(count);
  for (std::uint32_t mask = 0; mask < count; ++mask) {
    table[mask] = value(Coalition(mask, m));
  }
  return table;
}

template <class WeightFn>
Vector shapley_from_table(int m, const Vector& table, WeightFn&& weight) {
  Vector w(m);
  for (int s = 0; s < m; ++s) w[s] = weight(m, s);
  Vector phi(m, 0.0);
  const std::uint32_t count = std::uint32_t{1} << m;
  for (int i = 0; i < m; ++i) {
    const std::uint32_t bit = 1u << i;
    double acc = 0.0;
    for (std::uint32_t mask = 0; mask < count; ++mask) {
      if (mask & bit) continue;
      acc += w[std::popcount(mask)] * (table[mask | bit] - table[mask]);
    }
    phi[i] = acc;
  }
  return phi;
}

}  // namespace internal

// Exact Shapley values from a precomputed value table (length 2^m).
inline Attribution shapley_from_values(int m, const Vector& table) {
  internal::check_player_count(m);
  if (table.size() != (std::size_t{1} << m))
    throw ShapeError("shapley_from_values: table must have 2^m entries");
  Attribution a;
  a.phi = internal::shapley_from_table(m, table, shapley_weight);
  a.v_empty = table.front();
  a.v_grand = table.back();
  a.method = ShapleyMethod::kExact;
  return a;
}

// Full enumeration. Issues exactly 2^m value calls.
template <class ValueFn>
Attribution shapley_exact(int m, ValueFn&& value) {
  Vector table = internal::enumerate_values(m, value);
  Attribution a = shapley_from_values(m, table);
  a.evaluations = table.size();
  return a;
}

inline Attribution shapley_exact(const Game& game) {
  return shapley_exact(game.num_players, game.value);
}

// Enumeration with a caller-supplied coefficient. Only useful as a negative
// control for the axiom checks.
template <class ValueFn, class WeightFn>
Attribution shapley_exact_with_weights(int m, ValueFn&& value, WeightFn&& weight) {
  Vector table = internal::enumerate_values(m, value);
  Attribution a;
  a.phi = internal::shapley_from_table(m, table, weight);
  a.v_empty = table.front();
  a.v_grand = table.back();
  a.evaluations = table.size();
  return a;
}

// Mean marginal contribution over uniformly drawn permutations.
template <class ValueFn>
Attribution shapley_sampled(int m, ValueFn&& value, std::uint64_t permutations,
                            std::uint64_t seed) {
  internal::check_player_count(m);
  if (permutations < 1) throw DomainError("shapley_sampled: permutations must be >= 1");
  std::mt19937_64 rng(seed);
  std::vector<int> order(m);
  std::iota(order.begin(), order.end(), 0);

  Attribution a;
  a.method = ShapleyMethod::kSampled;
  a.permutations = permutations;
  a.seed = seed;
  a.phi.assign(m, 0.0);
  a.v_empty = value(Coalition::empty(m));
  a.evaluations = 1;
  double grand = a.v_empty;
  for (std::uint64_t p = 0; p < permutations; ++p) {
    std::shuffle(order.begin(), order.end(), rng);
    Coalition prefix = Coalition::empty(m);
    double prev = a.v_empty;
    for (int player : order) {
      prefix = prefix.with(player);
      const double cur = value(prefix);
      ++a.evaluations;
      a.phi[player] += cur - prev;
      prev = cur;
    }
    grand = prev;
  }
  const double n = static_cast<double>(permutations);
  for (double& x : a.phi) x /= n;
  a.v_grand = grand;
  return a;
}

inline Attribution shapley_sampled(const Game& game, std::uint64_t permutations,
                                   std::uint64_t seed) {
  return shapley_sampled(game.num_players, game.value, permutations, seed);
}

// ---------------------------------------------------------------------------
// Axiom checks.

struct SymmetricPair {
  int i = 0;
  int j = 0;
  double phi_gap = 0.0;  // |phi_i - phi_j|
};

struct NullPlayer {
  int player = 0;
  double abs_phi = 0.0;
};

struct AxiomReport {
  double efficiency_residual = 0.0;
  bool exhaustive_checked = false;  // false when m > kMaxAxiomPlayers
  std::vector<SymmetricPair> symmetric_pairs;
  std::vector<NullPlayer> null_players;

  double max_symmetry_gap() const {
    double g = 0.0;
    for (const auto& p : symmetric_pairs) g = std::max(g, p.phi_gap);
    return g;
  }
  double max_null_phi() const {
    double g = 0.0;
    for (const auto& p : null_players) g = std::max(g, p.abs_phi);
    return g;
  }
};

template <class ValueFn>
AxiomReport check_axioms(int m, ValueFn&& value, const Attribution& attribution) {
  internal::check_player_count(m);
  require_size(attribution.phi, static_cast<std::size_t>(m), "check_axioms phi");
  AxiomReport report;
  report.efficiency_residual = attribution.efficiency_residual();
  if (m > kMaxAxiomPlayers) return report;

  const Vector table = internal::enumerate_values(m, value);
  const std::uint32_t count = std::uint32_t{1} << m;
  report.exhaustive_checked = true;

  for (int i = 0; i < m; ++i) {
    const std::uint32_t bi = 1u << i;
    bool null = true;
    for (std::uint32_t s = 0; s < count && null; ++s) {
      if (s & bi) continue;
      null = std::abs(table[s | bi] - table[s]) <= kExactTolerance;
    }
    if (null) report.null_players.push_back({i, std::abs(attribution.phi[i])});
  }
  for (int i = 0; i < m; ++i) {
    for (int j = i + 1; j < m; ++j) {
      const std::uint32_t bi = 1u << i;
      const std::uint32_t bj = 1u << j;
      bool symmetric = true;
      for (std::uint32_t s = 0; s < count && symmetric; ++s) {
        if (s & (bi | bj)) continue;
        symmetric = std::abs(table[s | bi] - table[s | bj]) <= kExactTolerance;
      }
      if (symmetric)
        report.symmetric_pairs.push_back(
            {i, j, std::abs(attribution.phi[i] - attribution.phi[j])});
    }
  }
  return report;
}

inline AxiomReport check_axioms(const Game& game, const Attribution& attribution) {
  return check_axioms(game.num_players, game.value, attribution);
}

}  // namespace cfshap
