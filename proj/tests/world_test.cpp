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

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>

#include "cfshap/world.hpp"

namespace cfshap {
namespace {

Vector random_vector(std::mt19937_64& rng, std::size_t n) {
  std::normal_distribution<double> d(0.0, 1.0);
  Vector v(n);
  for (double& x : v) x = d(rng);
  return v;
}

class WorldTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() { bundle_ = new WorldBundle(world_create(16, 32, 5, 7)); }
  static void TearDownTestSuite() {
    delete bundle_;
    bundle_ = nullptr;
  }
  const SyntheticWorld& world() const { return bundle_->world; }
  const GroundTruth& truth() const { return bundle_->truth; }

  static WorldBundle* bundle_;
};
WorldBundle* WorldTest::bundle_ = nullptr;

TEST_F(WorldTest, DeterministicForSeed) {
  const WorldBundle again = world_create(16, 32, 5, 7);
  EXPECT_EQ(again.world, world());
  EXPECT_NE(world_create(16, 32, 5, 8).world, world());
}

TEST_F(WorldTest, InvariantsHold) {
  EXPECT_NO_THROW(validate_world(world()));
  for (int i = 0; i < 5; ++i)
    EXPECT_NEAR(norm2(world().attr_directions.row(static_cast<std::size_t>(i))), 1.0, 1e-12);
  EXPECT_GT(min_singular_value(world().generator), 1e-6);
  // Rows are mutually orthogonal.
  const Matrix g = world().attr_directions.transposed().gram();
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 5; ++j) EXPECT_NEAR(g(i, j), i == j ? 1.0 : 0.0, 1e-12);
}

TEST_F(WorldTest, TargetWeightsUseOnlyRelevantAttributes) {
  ASSERT_FALSE(world().relevant_attrs.empty());
  ASSERT_LT(world().relevant_attrs.size(), 5u);
  // Project w onto the attribute rows; irrelevant rows carry nothing.
  for (int i = 0; i < 5; ++i) {
    const double c = dot(world().target_weights, world().attr_directions.row(static_cast<std::size_t>(i)));
    const bool relevant = std::find(world().relevant_attrs.begin(), world().relevant_attrs.end(),
                                    i) != world().relevant_attrs.end();
    if (relevant) {
      EXPECT_GT(std::abs(c), 0.5) << i;
    } else {
      EXPECT_LT(std::abs(c), 1e-12) << i;
    }
  }
}

TEST_F(WorldTest, RejectsBadDimensions) {
  EXPECT_THROW(world_create(4, 32, 5, 1), DomainError);
  EXPECT_THROW(world_create(16, 4, 5, 1), DomainError);
}

TEST_F(WorldTest, GenerateBasics) {
  const Vector zero = generate(world(), Vector(16, 0.0));
  for (double x : zero) EXPECT_EQ(x, 0.0);
  Vector e1(16, 0.0);
  e1[0] = 1.0;
  EXPECT_EQ(generate(world(), e1), world().generator.column(0));
  EXPECT_THROW(generate(world(), Vector(15, 0.0)), ShapeError);
}

TEST_F(WorldTest, GenerateJacobianIsGenerator) {
  std::mt19937_64 rng(1);
  const Vector z = random_vector(rng, 16);
  for (std::size_t r = 0; r < 32; ++r) {
    const Vector fd = finite_difference_gradient(
        [&](std::span<const double> zz) { return generate(world(), zz)[r]; }, z, 1e-5);
    for (std::size_t c = 0; c < 16; ++c) EXPECT_NEAR(fd[c], world().generator(r, c), 1e-8);
  }
}

TEST_F(WorldTest, ClassifierBasics) {
  // x = -c_i a_i puts attribute i exactly on its boundary.
  for (int i = 0; i < 5; ++i) {
    const auto row = world().attr_directions.row(static_cast<std::size_t>(i));
    const Vector x = scaled(row, -world().attr_offsets[static_cast<std::size_t>(i)]);
    EXPECT_NEAR(predict_attrs(world(), x)[static_cast<std::size_t>(i)], 0.5, 1e-15);
    const Vector far = scaled(row, 60.0);
    EXPECT_GT(predict_attrs(world(), far)[static_cast<std::size_t>(i)], 1.0 - 1e-12);
  }
  EXPECT_THROW(predict_attrs(world(), Vector(31, 0.0)), ShapeError);
}

TEST_F(WorldTest, TargetBasics) {
  SyntheticWorld flat = world();
  std::fill(flat.target_weights.begin(), flat.target_weights.end(), 0.0);
  flat.target_offset = 0.0;
  std::mt19937_64 rng(2);
  for (int k = 0; k < 10; ++k) EXPECT_EQ(predict_target(flat, random_vector(rng, 32)), 0.5);

  double prev = -1.0;
  for (double t : {-3.0, -1.0, 0.0, 0.5, 1.0, 2.0, 4.0}) {
    const double y = predict_target(world(), scaled(world().target_weights, t));
    EXPECT_GT(y, prev);
    prev = y;
  }
  EXPECT_THROW(predict_target(world(), Vector(5, 0.0)), ShapeError);
}

TEST_F(WorldTest, ClassifierAndTargetGradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(3);
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const Vector x = scaled(random_vector(rng, 32), 0.3);
    const Vector head = random_vector(rng, 5);
    const Vector ga = predict_attrs_vjp(world(), x, head);
    const Vector gn = finite_difference_gradient(
        [&](std::span<const double> xx) { return dot(predict_attrs(world(), xx), head); }, x,
        1e-6);
    const Vector ta = predict_target_gradient(world(), x);
    const Vector tn = finite_difference_gradient(
        [&](std::span<const double> xx) { return predict_target(world(), xx); }, x, 1e-6);
    for (std::size_t k = 0; k < 32; ++k) {
      worst = std::max(worst, std::abs(ga[k] - gn[k]) / std::max(1e-3, std::abs(gn[k])));
      worst = std::max(worst, std::abs(ta[k] - tn[k]) / std::max(1e-3, std::abs(tn[k])));
    }
  }
  EXPECT_LT(worst, 1e-5);
}

TEST_F(WorldTest, GroundTruthDirectionsControlAttributes) {
  std::mt19937_64 rng(4);
  for (int k = 0; k < 100; ++k) {
    const Vector z = random_vector(rng, 16);
    for (int i = 0; i < 5; ++i) {
      const Vector& u = truth().directions[static_cast<std::size_t>(i)];
      const std::size_t ii = static_cast<std::size_t>(i);
      const double y0 = predict_attrs(world(), generate(world(), z))[ii];
      double prev = y0;
      for (double t : {0.25, 0.5, 1.0}) {
        const double y = predict_attrs(world(), generate(world(), add(z, scaled(u, t))))[ii];
        EXPECT_GT(y, prev);
        prev = y;
      }
      EXPECT_LT(predict_attrs(world(), generate(world(), subtract(z, u)))[ii], y0);
    }
  }
}

TEST_F(WorldTest, PullbackMapsToAttributeRow) {
  // G(u_i) has unit response along a_i and none along the other rows.
  for (int i = 0; i < 5; ++i) {
    const Vector x = generate(world(), truth().directions[static_cast<std::size_t>(i)]);
    for (int j = 0; j < 5; ++j)
      EXPECT_NEAR(dot(world().attr_directions.row(static_cast<std::size_t>(j)), x),
                  i == j ? 1.0 : 0.0, 1e-12);
  }
}

TEST_F(WorldTest, OrthogonalPerturbationLeavesTargetUnchanged) {
  std::mt19937_64 rng(5);
  for (int k = 0; k < 50; ++k) {
    const Vector z = random_vector(rng, 16);
    Vector p = random_vector(rng, 16);
    // Project out the relevant pullbacks (Gram-Schmidt against them).
    std::vector<Vector> basis;
    for (int i : world().relevant_attrs) {
      Vector u = truth().directions[static_cast<std::size_t>(i)];
      for (const Vector& b : basis) u = subtract(u, scaled(b, dot(u, b)));
      basis.push_back(scaled(u, 1.0 / norm2(u)));
    }
    for (const Vector& b : basis) p = subtract(p, scaled(b, dot(p, b)));
    const double y0 = predict_target(world(), generate(world(), z));
    const double y1 = predict_target(world(), generate(world(), add(z, scaled(p, 3.0))));
    EXPECT_LT(std::abs(y1 - y0), 1e-10);
  }
}

TEST_F(WorldTest, IrrelevantDirectionLeavesTargetUnchanged) {
  std::mt19937_64 rng(6);
  const Vector z = random_vector(rng, 16);
  const double y0 = predict_target(world(), generate(world(), z));
  const auto& rel = world().relevant_attrs;
  int checked = 0;
  for (int i = 0; i < 5; ++i) {
    if (std::find(rel.begin(), rel.end(), i) != rel.end()) continue;
    const Vector moved = add(z, scaled(truth().directions[static_cast<std::size_t>(i)], 5.0));
    EXPECT_LT(std::abs(predict_target(world(), generate(world(), moved)) - y0), 1e-10) << i;
    ++checked;
  }
  EXPECT_EQ(checked, 2);
}

TEST_F(WorldTest, SerializationRoundTripIsBitExact) {
  const std::string text = world_to_json(world()).dump(2);
  const SyntheticWorld back = world_from_json(nlohmann::json::parse(text));
  EXPECT_EQ(back, world());
  EXPECT_EQ(world_to_json(back).dump(2), text);

  const auto path = std::filesystem::temp_directory_path() / "cfshap_world_test.json";
  save_world(world(), path.string());
  EXPECT_EQ(load_world(path.string()), world());
  std::filesystem::remove(path);
}

TEST_F(WorldTest, DeserializationRejectsBadInput) {
  nlohmann::json j = world_to_json(world());
  j["format"] = "something-else";
  EXPECT_THROW(world_from_json(j), FormatError);
  nlohmann::json k = world_to_json(world());
  k.erase("generator");
  EXPECT_THROW(world_from_json(k), FormatError);
  EXPECT_THROW(parse_json_text("{not json", "test"), FormatError);
  EXPECT_THROW(load_world("/nonexistent/cfshap/world.json"), FormatError);
}

}  // namespace
}  // namespace cfshap
