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

#include <cmath>
#include <filesystem>
#include <random>

#include "cfshap/shift.hpp"

namespace cfshap {
namespace {

const WorldBundle& bundle() {
  static const WorldBundle b = world_create(16, 32, 5, 7);
  return b;
}
const SyntheticWorld& world() { return bundle().world; }

ShiftPredictorParams zero_predictor() {
  ShiftPredictorParams p = init_shift_predictor(16, 5, 8, 1, 3);
  for (auto& l : p.net.layers) {
    std::fill(l.weight.data().begin(), l.weight.data().end(), 0.0);
    std::fill(l.bias.begin(), l.bias.end(), 0.0);
  }
  return p;
}

ShiftPredictorParams random_predictor(std::mt19937_64& rng, double scale) {
  ShiftPredictorParams p = init_shift_predictor(16, 5, 12, 2, 1);
  std::normal_distribution<double> n(0.0, scale);
  Vector flat(p.net.parameter_count());
  for (double& x : flat) x = n(rng);
  assign_flat(p.net, flat);
  return p;
}

TEST(DirectionSpec, ParseAndValidate) {
  const DirectionSpec s = DirectionSpec::parse("+1, -1,0,1");
  EXPECT_EQ(s.entries(), (Vector{1, -1, 0, 1}));
  EXPECT_EQ(s.to_string(), "+1,-1,0,+1");
  EXPECT_THROW(DirectionSpec(Vector{0.5}), DomainError);
  EXPECT_THROW(DirectionSpec::parse("+1,2"), DomainError);
  EXPECT_TRUE(DirectionSpec::zeros(3).is_zero());
}

TEST(ShiftInfer, ZeroNetworkIsIdentity) {
  const ShiftPredictorParams p = zero_predictor();
  std::mt19937_64 rng(1);
  for (int k = 0; k < 10; ++k) {
    const Vector z = sample_latent(rng, 16);
    EXPECT_EQ(shift_infer(p, z, sample_training_spec(rng, 5, 0.5)), z);
  }
}

TEST(ShiftInfer, FreshPredictorIsIdentity) {
  // Hidden layers are random but the output layer starts at zero.
  const ShiftPredictorParams p = init_shift_predictor(16, 5, 64, 2, 9);
  std::mt19937_64 rng(2);
  const Vector z = sample_latent(rng, 16);
  EXPECT_EQ(shift_infer(p, z, DirectionSpec::parse("+1,-1,0,0,+1")), z);
}

TEST(ShiftInfer, ShapeErrors) {
  const ShiftPredictorParams p = zero_predictor();
  EXPECT_THROW(shift_infer(p, Vector(15, 0.0), DirectionSpec::zeros(5)), ShapeError);
  EXPECT_THROW(shift_infer(p, Vector(16, 0.0), DirectionSpec::zeros(4)), ShapeError);
}

TEST(ShiftLoss, EmptySpecIsPureFaithfulness) {
  std::mt19937_64 rng(3);
  const ShiftPredictorParams p = random_predictor(rng, 0.2);
  const Vector z = sample_latent(rng, 16);
  const DirectionSpec zero = DirectionSpec::zeros(5);
  const ShiftLoss l = shift_loss(world(), p, z, zero, 0.09);
  const double expected = norm2(subtract(shift_infer(p, z, zero), z));
  EXPECT_EQ(l.attr_loss, 0.0);
  EXPECT_NEAR(l.faith_loss, expected, 1e-15);
  EXPECT_NEAR(l.loss, 0.09 * expected, 1e-15);
}

TEST(ShiftLoss, BoundaryClassifierGivesLnTwo) {
  const ShiftPredictorParams p = zero_predictor();
  // z = -c_0 u_0 puts attribute 0 on its decision boundary.
  const Vector z = scaled(bundle().truth.directions[0], -world().attr_offsets[0]);
  ASSERT_NEAR(predict_attrs(world(), generate(world(), z))[0], 0.5, 1e-15);
  const ShiftLoss l = shift_loss(world(), p, z, DirectionSpec::parse("+1,0,0,0,0"), 0.09);
  EXPECT_NEAR(l.attr_loss, std::log(2.0), 1e-12);
  EXPECT_EQ(l.faith_loss, 0.0);
  EXPECT_NEAR(l.loss, std::log(2.0), 1e-12);
}

TEST(ShiftLoss, GammaZeroIsAttributeLossOnly) {
  std::mt19937_64 rng(4);
  const ShiftPredictorParams p = random_predictor(rng, 0.2);
  const Vector z = sample_latent(rng, 16);
  const ShiftLoss l = shift_loss(world(), p, z, DirectionSpec::parse("+1,-1,0,+1,0"), 0.0);
  EXPECT_GT(l.faith_loss, 0.0);
  EXPECT_EQ(l.loss, l.attr_loss);
}

TEST(ShiftLoss, OnlyConditionedAttributesContribute) {
  std::mt19937_64 rng(5);
  const ShiftPredictorParams p = random_predictor(rng, 0.2);
  const Vector z = sample_latent(rng, 16);
  const DirectionSpec spec = DirectionSpec::parse("+1,0,-1,0,0");
  const ShiftLoss l = shift_loss(world(), p, z, spec, 0.5, false);
  const Vector y = predict_attrs(world(), generate(world(), shift_infer(p, z, spec)));
  EXPECT_NEAR(l.attr_loss, -std::log(y[0]) - std::log(1.0 - y[2]), 1e-12);
  EXPECT_TRUE(l.gradients.weights.empty());
}

TEST(ShiftLoss, RejectsBadInputs) {
  const ShiftPredictorParams p = zero_predictor();
  const Vector z(16, 0.0);
  EXPECT_THROW(shift_loss(world(), p, z, DirectionSpec::zeros(5), -1.0), DomainError);
  EXPECT_THROW(shift_loss(world(), p, z, DirectionSpec::zeros(4), 0.1), ShapeError);
}

// Analytic gradient through M, G and C against central differences.
TEST(ShiftLoss, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(6);
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const ShiftPredictorParams p = random_predictor(rng, 0.25);
    const Vector z = sample_latent(rng, 16);
    const DirectionSpec spec = sample_training_spec(rng, 5, 0.6);
    const double gamma = trial % 3 == 0 ? 0.0 : 0.09 * trial;
    const ShiftLoss l = shift_loss(world(), p, z, spec, gamma);
    auto f = [&](std::span<const double> flat) {
      ShiftPredictorParams q = p;
      assign_flat(q.net, flat);
      return shift_loss(world(), q, z, spec, gamma, false).loss;
    };
    const Vector ga = flatten(l.gradients);
    const Vector gn = finite_difference_gradient(f, flatten(p.net), 1e-6);
    worst = std::max(worst, norm2(subtract(ga, gn)) / norm2(gn));
  }
  EXPECT_LT(worst, 1e-4);
}

TEST(ShiftTrain, ZeroEpochsReturnsInitialization) {
  TrainingConfig c;
  c.epochs = 0;
  c.seed = 12;
  const TrainResult r = shift_train(world(), c);
  EXPECT_TRUE(r.log.empty());
  EXPECT_EQ(r.params.net, init_shift_predictor(16, 5, c.hidden_width, c.hidden_layers, 12).net);
}

TEST(ShiftTrain, DeterministicAndLearns) {
  TrainingConfig c;
  c.epochs = 3;
  c.steps_per_epoch = 50;
  c.batch_size = 16;
  const TrainResult a = shift_train(world(), c);
  const TrainResult b = shift_train(world(), c);
  EXPECT_EQ(a.params, b.params);
  ASSERT_EQ(a.log.size(), 3u);
  EXPECT_LT(a.log.back().mean_attr_loss, a.log.front().mean_attr_loss);
  c.seed = 2;
  EXPECT_NE(shift_train(world(), c).params, a.params);
}

TEST(ShiftTrain, DivergenceNamesTheStep) {
  TrainingConfig c;
  c.epochs = 2;
  c.steps_per_epoch = 20;
  c.learning_rate = 1e200;
  c.final_learning_rate = 1e200;
  try {
    shift_train(world(), c);
    FAIL() << "expected TrainingError";
  } catch (const TrainingError& e) {
    EXPECT_NE(std::string(e.what()).find("step"), std::string::npos);
  }
}

TEST(ShiftTrain, RejectsBadConfig) {
  TrainingConfig c;
  c.p_cond = 0.0;
  EXPECT_THROW(shift_train(world(), c), DomainError);
}

TEST(TrainingSpec, NeverAllZero) {
  std::mt19937_64 rng(7);
  for (int k = 0; k < 2000; ++k) EXPECT_FALSE(sample_training_spec(rng, 5, 0.05).is_zero());
}

TEST(EvalShift, UntrainedAgreementIsBaseRate) {
  const ShiftPredictorParams p = zero_predictor();
  const ShiftMetrics m = eval_shift_predictor(world(), p, 400, 5);
  EXPECT_EQ(m.mean_shift_norm, 0.0);
  EXPECT_EQ(m.mean_empty_drift, 0.0);
  // Identity shift: agreement is how often the commanded side already holds.
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> pick(0, 4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int agree = 0;
  for (int s = 0; s < 400; ++s) {
    const Vector z = sample_latent(rng, 16);
    const int attr = pick(rng);
    const bool up = !(u(rng) < 0.5);
    const double y = predict_attrs(world(), generate(world(), z))[static_cast<std::size_t>(attr)];
    agree += up ? y > 0.5 : y < 0.5;
  }
  EXPECT_DOUBLE_EQ(m.flip_agreement, agree / 400.0);
  EXPECT_GT(m.flip_agreement, 0.2);
  EXPECT_LT(m.flip_agreement, 0.8);
}

TEST(ShiftSerialization, RoundTripIsBitExact) {
  std::mt19937_64 rng(8);
  ShiftPredictorParams p = random_predictor(rng, 0.3);
  p.gamma = 0.09;
  p.epochs = 7;
  p.final_attr_loss = 0.123456789012345;
  const std::string text = shift_to_json(p).dump(2);
  const ShiftPredictorParams back = shift_from_json(nlohmann::json::parse(text));
  EXPECT_EQ(back, p);
  EXPECT_EQ(shift_to_json(back).dump(2), text);

  const auto path = std::filesystem::temp_directory_path() / "cfshap_shift_test.json";
  save_shift(p, path.string());
  EXPECT_EQ(load_shift(path.string()), p);
  std::filesystem::remove(path);
}

TEST(ShiftSerialization, RejectsMalformed) {
  nlohmann::json j = shift_to_json(zero_predictor());
  j["layers"][0]["weight"].erase(0);
  EXPECT_THROW(shift_from_json(j), FormatError);
  nlohmann::json k = shift_to_json(zero_predictor());
  k["format"] = "cfshap-shift/0";
  EXPECT_THROW(shift_from_json(k), FormatError);
}

}  // namespace
}  // namespace cfshap
