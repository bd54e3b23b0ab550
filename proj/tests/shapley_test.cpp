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

#include <gtest/gtest.h>

#include <bit>
#include <cmath>
#include <random>
#include <set>

#include "cfshap/axiom_suite.hpp"
#include "cfshap/games.hpp"
#include "cfshap/shapley.hpp"

namespace cfshap {
namespace {

// Brute-force Shapley value as the average marginal contribution over all
// m! orderings. Independent of the subset-weight formula.
Vector shapley_by_orderings(const TableGame& g) {
  const int m = g.num_players;
  std::vector<int> order(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) order[static_cast<std::size_t>(i)] = i;
  Vector phi(static_cast<std::size_t>(m), 0.0);
  double count = 0.0;
  do {
    std::uint32_t mask = 0;
    for (int p : order) {
      const double before = g.values[mask];
      mask |= 1u << p;
      phi[static_cast<std::size_t>(p)] += g.values[mask] - before;
    }
    count += 1.0;
  } while (std::next_permutation(order.begin(), order.end()));
  for (double& x : phi) x /= count;
  return phi;
}

TEST(Coalition, Basics) {
  const Coalition s(0b101, 3);
  EXPECT_EQ(s.size(), 2);
  EXPECT_TRUE(s.contains(0));
  EXPECT_FALSE(s.contains(1));
  EXPECT_EQ(s.with(1), Coalition::grand(3));
  EXPECT_EQ(s.without(0).without(2), Coalition::empty(3));
  EXPECT_THROW(Coalition(8, 3), DomainError);
  EXPECT_THROW(Coalition(0, 0), DomainError);
  EXPECT_THROW(Coalition(0, 31), DomainError);
}

TEST(ShapleyWeight, Examples) {
  EXPECT_DOUBLE_EQ(shapley_weight(1, 0), 1.0);
  EXPECT_DOUBLE_EQ(shapley_weight(5, 0), 0.2);        // 0! 4! / 5! = 24/120
  EXPECT_NEAR(shapley_weight(5, 2), 1.0 / 30.0, 1e-15);  // 2! 2! / 5! = 4/120
  EXPECT_THROW(shapley_weight(5, 5), DomainError);
  EXPECT_THROW(shapley_weight(5, -1), DomainError);
}

TEST(ShapleyWeight, SumsToOneOverSubsetsWithoutPlayer) {
  for (int m = 1; m <= 20; ++m) {
    double total = 0.0;
    double binom = 1.0;
    for (int s = 0; s < m; ++s) {
      total += binom * shapley_weight(m, s);
      binom = binom * (m - 1 - s) / (s + 1);
    }
    EXPECT_NEAR(total, 1.0, 1e-12) << "m=" << m;
  }
}

TEST(ShapleyExact, AdditiveGame) {
  const Attribution a = shapley_exact(3, additive_game({1.0, 2.0, 3.0}));
  EXPECT_NEAR(a.phi[0], 1.0, 1e-12);
  EXPECT_NEAR(a.phi[1], 2.0, 1e-12);
  EXPECT_NEAR(a.phi[2], 3.0, 1e-12);
}

TEST(ShapleyExact, TwoPlayerHandEnumeration) {
  // phi_1 = 1/2 (1 - 0) + 1/2 (4 - 2), phi_2 = 1/2 (2 - 0) + 1/2 (4 - 1)
  const TableGame g{2, {0.0, 1.0, 2.0, 4.0}};
  const Attribution a = shapley_exact(2, g);
  EXPECT_EQ(a.phi[0], 1.5);
  EXPECT_EQ(a.phi[1], 2.5);
}

TEST(ShapleyExact, MatchesOrderingAverage) {
  std::mt19937_64 rng(8);
  for (int m = 1; m <= 7; ++m) {
    const TableGame g = random_game(m, rng);
    const Attribution a = shapley_exact(m, g);
    const Vector ref = shapley_by_orderings(g);
    for (int i = 0; i < m; ++i) EXPECT_NEAR(a.phi[i], ref[i], 1e-12) << "m=" << m;
  }
}

TEST(ShapleyExact, NullPlayerGetsZero) {
  std::mt19937_64 rng(9);
  const TableGame g = with_null_player(random_game(5, rng), 3);
  EXPECT_LT(std::abs(shapley_exact(5, g).phi[3]), 1e-12);
}

TEST(ShapleyExact, IssuesExactly2ToTheMCalls) {
  for (int m = 1; m <= 12; ++m) {
    std::uint64_t calls = 0;
    std::set<std::uint32_t> seen;
    const Attribution a = shapley_exact(m, [&](Coalition s) {
      ++calls;
      seen.insert(s.mask());
      return static_cast<double>(s.size());
    });
    EXPECT_EQ(calls, std::uint64_t{1} << m);
    EXPECT_EQ(seen.size(), std::size_t{1} << m);
    EXPECT_EQ(a.evaluations, calls);
  }
}

TEST(ShapleyExact, PropagatesValueFailure) {
  auto failing = [](Coalition s) -> double {
    if (s.size() == 2) throw EvaluationError("boom");
    return 0.0;
  };
  EXPECT_THROW(shapley_exact(3, failing), EvaluationError);
}

TEST(ShapleySampled, AdditiveGameIsExactForAnyPermutationCount) {
  const TableGame g = additive_game({0.5, -1.25, 2.0, 3.0});
  for (std::uint64_t perms : {1u, 3u, 50u}) {
    const Attribution a = shapley_sampled(4, g, perms, 17);
    EXPECT_NEAR(a.phi[0], 0.5, 1e-12);
    EXPECT_NEAR(a.phi[1], -1.25, 1e-12);
    EXPECT_NEAR(a.phi[2], 2.0, 1e-12);
    EXPECT_NEAR(a.phi[3], 3.0, 1e-12);
  }
}

TEST(ShapleySampled, TwentyThousandPermutationsWithinOneHundredth) {
  std::mt19937_64 rng(42);
  const TableGame g = random_logistic_game(8, rng);
  const Attribution exact = shapley_exact(8, g);
  const Attribution est = shapley_sampled(8, g, 20000, 7);
  double worst = 0.0;
  for (int i = 0; i < 8; ++i) worst = std::max(worst, std::abs(est.phi[i] - exact.phi[i]));
  EXPECT_LT(worst, 0.01);
  EXPECT_EQ(est.evaluations, 1u + 20000u * 8u);
}

// On a rough game the error follows the Monte Carlo rate: each phi_i is a
// mean of P draws of the marginal contribution, whose exact variance is
// sum_S w(S) (v(S+i) - v(S))^2 - phi_i^2.
TEST(ShapleySampled, ErrorWithinFiveStandardErrorsOnGaussianGame) {
  std::mt19937_64 rng(42);
  const int m = 8;
  const std::uint64_t perms = 20000;
  const TableGame g = random_game(m, rng);
  const Attribution exact = shapley_exact(m, g);
  const Attribution est = shapley_sampled(m, g, perms, 7);
  for (int i = 0; i < m; ++i) {
    const std::uint32_t bi = 1u << i;
    double second = 0.0;
    for (std::uint32_t s = 0; s < g.values.size(); ++s) {
      if (s & bi) continue;
      const double d = g.values[s | bi] - g.values[s];
      second += shapley_weight(m, std::popcount(s)) * d * d;
    }
    const double var = second - exact.phi[i] * exact.phi[i];
    EXPECT_LT(std::abs(est.phi[i] - exact.phi[i]), 5.0 * std::sqrt(var / perms)) << i;
  }
}

TEST(ShapleySampled, SinglePermutationTelescopesExactly) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const int m = 1 + trial % 10;
    const TableGame g = random_dyadic_game(m, rng);
    const Attribution a = shapley_sampled(m, g, 1, static_cast<std::uint64_t>(trial));
    // Every phi is a difference of two table entries, and the order of the
    // permutation is recoverable by replaying the seed.
    std::mt19937_64 replay(static_cast<std::uint64_t>(trial));
    std::vector<int> order(static_cast<std::size_t>(m));
    for (int i = 0; i < m; ++i) order[static_cast<std::size_t>(i)] = i;
    std::shuffle(order.begin(), order.end(), replay);
    std::uint32_t mask = 0;
    for (int p : order) {
      const double before = g.values[mask];
      mask |= 1u << p;
      EXPECT_EQ(a.phi[static_cast<std::size_t>(p)], g.values[mask] - before);
    }
    EXPECT_EQ(a.phi_sum(), g.values.back() - g.values.front());
  }
}

TEST(ShapleySampled, UnbiasedAcrossSeeds) {
  std::mt19937_64 rng(77);
  const int m = 6;
  const TableGame g = random_game(m, rng);
  const Attribution exact = shapley_exact(m, g);
  const int seeds = 30;
  Vector mean(m, 0.0);
  Vector sq(m, 0.0);
  for (int s = 0; s < seeds; ++s) {
    const Attribution a = shapley_sampled(m, g, 200, 1000 + static_cast<std::uint64_t>(s));
    for (int i = 0; i < m; ++i) {
      mean[i] += a.phi[i];
      sq[i] += a.phi[i] * a.phi[i];
    }
  }
  for (int i = 0; i < m; ++i) {
    mean[i] /= seeds;
    const double var = (sq[i] / seeds - mean[i] * mean[i]) * seeds / (seeds - 1);
    const double se = std::sqrt(var / seeds);
    EXPECT_LT(std::abs(mean[i] - exact.phi[i]), 3.0 * se + 1e-12) << "player " << i;
  }
}

TEST(ShapleySampled, RejectsZeroPermutations) {
  EXPECT_THROW(shapley_sampled(3, additive_game({1, 2, 3}), 0, 1), DomainError);
}

TEST(Axioms, SymmetricGameDependingOnlyOnSize) {
  const int m = 5;
  auto v = [](Coalition s) { return std::pow(static_cast<double>(s.size()), 1.5); };
  const Attribution a = shapley_exact(m, v);
  const AxiomReport r = check_axioms(m, v, a);
  EXPECT_LT(r.efficiency_residual, 1e-9);
  EXPECT_EQ(r.symmetric_pairs.size(), 10u);
  EXPECT_LT(r.max_symmetry_gap(), 1e-9);
  EXPECT_TRUE(r.null_players.empty());
  EXPECT_TRUE(r.exhaustive_checked);
}

TEST(Axioms, DetectsPlantedNullAndPair) {
  std::mt19937_64 rng(6);
  TableGame g = with_symmetric_pair(random_game(6, rng), 1, 4);
  g = with_null_player(std::move(g), 2);
  const Attribution a = shapley_exact(6, g);
  const AxiomReport r = check_axioms(6, g, a);
  ASSERT_EQ(r.null_players.size(), 1u);
  EXPECT_EQ(r.null_players[0].player, 2);
  EXPECT_LT(r.max_null_phi(), 1e-12);
  ASSERT_EQ(r.symmetric_pairs.size(), 1u);
  EXPECT_EQ(r.symmetric_pairs[0].i, 1);
  EXPECT_EQ(r.symmetric_pairs[0].j, 4);
  EXPECT_LT(r.max_symmetry_gap(), 1e-9);
}

TEST(Axioms, RefusesExhaustiveDetectionAboveTwenty) {
  const int m = 21;
  auto v = [](Coalition s) { return static_cast<double>(s.size()); };
  Attribution a;
  a.phi.assign(m, 1.0);
  a.v_empty = 0.0;
  a.v_grand = m;
  const AxiomReport r = check_axioms(m, v, a);
  EXPECT_FALSE(r.exhaustive_checked);
  EXPECT_EQ(r.efficiency_residual, 0.0);
}

TEST(AxiomSuite, PassesWithShapleyWeights) {
  AxiomSuiteConfig c;
  c.games = 200;
  const AxiomSuiteResult r = run_axiom_suite(c);
  EXPECT_TRUE(r.ok());
  EXPECT_GT(r.planted_nulls, 0);
  EXPECT_GT(r.planted_pairs, 0);
}

TEST(AxiomSuite, BrokenWeightsViolateEfficiency) {
  AxiomSuiteConfig c;
  c.games = 50;
  c.min_players = 3;
  c.broken_weights = true;
  const AxiomSuiteResult r = run_axiom_suite(c);
  EXPECT_FALSE(r.efficiency_ok());
  EXPECT_FALSE(r.ok());
}

}  // namespace
}  // namespace cfshap
