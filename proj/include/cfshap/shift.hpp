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

// Shift predictor: z_hat = z + MLP([z, spec]). Trained against the attribute
// classifier of a differentiable world with
//
//   loss = sum_{i : spec_i != 0} BCE(t_i, y_i(G(z_hat))) + gamma * ||z_hat - z||_2
//
// where t_i = 1 for spec_i = +1 and 0 for spec_i = -1. Unconditioned
// attributes contribute nothing to the attribute term.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "cfshap/errors.hpp"
#include "cfshap/numerics.hpp"
#include "cfshap/world.hpp"
#include "json.hpp"

namespace cfshap {

inline constexpr const char* kShiftFormat = "cfshap-shift/1";
inline constexpr double kDefaultGamma = 0.09;
inline constexpr double kProbabilityClamp = 1e-7;

// Per-attribute command in {-1, 0, +1}: decrease, leave alone, increase.
class DirectionSpec {
 public:
  DirectionSpec() = default;
  explicit DirectionSpec(Vector entries) : entries_(std::move(entries)) {
    for (double e : entries_) {
      if (e != -1.0 && e != 0.0 && e != 1.0)
        throw DomainError("DirectionSpec: entries must be -1, 0 or +1");
    }
  }

  static DirectionSpec zeros(std::size_t m) { return DirectionSpec(Vector(m, 0.0)); }

  // "+1,-1,0,..." (whitespace tolerated).
  static DirectionSpec parse(std::string_view text) {
    Vector out;
    std::string token;
    std::istringstream in{std::string(text)};
    while (std::getline(in, token, ',')) {
      token.erase(std::remove_if(token.begin(), token.end(), ::isspace), token.end());
      if (token == "+1" || token == "1") {
        out.push_back(1.0);
      } else if (token == "-1") {
        out.push_back(-1.0);
      } else if (token == "0" || token == "+0" || token == "-0") {
        out.push_back(0.0);
      } else {
        throw DomainError("DirectionSpec: cannot parse entry '" + token + "'");
      }
    }
    if (out.empty()) throw DomainError("DirectionSpec: empty direction string");
    return DirectionSpec(std::move(out));
  }

  std::string to_string() const {
    std::string s;
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      if (i) s += ',';
      s += entries_[i] > 0 ? "+1" : entries_[i] < 0 ? "-1" : "0";
    }
    return s;
  }

  const Vector& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  double operator[](std::size_t i) const { return entries_[i]; }
  bool is_zero() const {
    return std::all_of(entries_.begin(), entries_.end(), [](double e) { return e == 0.0; });
  }
  bool operator==(const DirectionSpec&) const = default;

 private:
  Vector entries_;
};

struct ShiftPredictorParams {
  MlpParams net;  // input d + m, output d
  int latent_dim = 0;
  int num_attrs = 0;
  // Training metadata.
  double gamma = kDefaultGamma;
  int epochs = 0;
  std::uint64_t seed = 0;
  double final_attr_loss = 0.0;
  double final_faith_loss = 0.0;

  void validate() const {
    net.validate();
    if (latent_dim < 1 || num_attrs < 1)
      throw ShapeError("shift predictor: dimensions must be positive");
    if (net.input_dim() != static_cast<std::size_t>(latent_dim + num_attrs) ||
        net.output_dim() != static_cast<std::size_t>(latent_dim))
      throw ShapeError("shift predictor: network must map d + m -> d");
    if (!(gamma >= 0.0)) throw DomainError("shift predictor: gamma must be >= 0");
  }

  bool operator==(const ShiftPredictorParams&) const = default;
};

struct TrainingConfig {
  double gamma = kDefaultGamma;
  int epochs = 100;
  int steps_per_epoch = 200;
  int batch_size = 64;
  double learning_rate = 3e-3;
  // Cosine-annealed towards this value over the run.
  double final_learning_rate = 3e-5;
  double p_cond = 0.5;
  int hidden_width = 64;
  int hidden_layers = 2;
  std::uint64_t seed = 1;

  void validate() const {
    if (!(gamma >= 0.0)) throw DomainError("TrainingConfig: gamma must be >= 0");
    if (!(p_cond > 0.0 && p_cond <= 1.0)) throw DomainError("TrainingConfig: p_cond must be in (0, 1]");
    if (epochs < 0 || steps_per_epoch < 1 || batch_size < 1)
      throw DomainError("TrainingConfig: epochs >= 0, steps_per_epoch >= 1, batch_size >= 1");
    if (!(learning_rate > 0.0) || !(final_learning_rate > 0.0))
      throw DomainError("TrainingConfig: learning rates must be > 0");
    if (hidden_width < 1 || hidden_layers < 0)
      throw DomainError("TrainingConfig: bad architecture");
  }
};

// tanh hidden layers with Glorot-uniform weights; the output layer starts at
// zero so the untrained predictor is the identity.
inline ShiftPredictorParams init_shift_predictor(int d, int m, int hidden_width,
                                                 int hidden_layers, std::uint64_t seed) {
  if (d < 1 || m < 1 || hidden_width < 1 || hidden_layers < 0)
    throw DomainError("init_shift_predictor: bad dimensions");
  std::vector<std::size_t> widths{static_cast<std::size_t>(d + m)};
  std::vector<Activation> acts;
  for (int k = 0; k < hidden_layers; ++k) {
    widths.push_back(static_cast<std::size_t>(hidden_width));
    acts.push_back(Activation::kTanh);
  }
  widths.push_back(static_cast<std::size_t>(d));
  acts.push_back(Activation::kIdentity);

  ShiftPredictorParams p;
  p.net = make_mlp(widths, acts);
  p.latent_dim = d;
  p.num_attrs = m;
  p.seed = seed;
  std::mt19937_64 rng(seed);
  for (std::size_t k = 0; k + 1 < p.net.layers.size(); ++k) {
    Matrix& w = p.net.layers[k].weight;
    const double limit = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
    std::uniform_real_distribution<double> u(-limit, limit);
    for (double& x : w.data()) x = u(rng);
  }
  return p;
}

inline Vector shift_input(std::span<const double> z, const DirectionSpec& spec) {
  Vector in(z.begin(), z.end());
  in.insert(in.end(), spec.entries().begin(), spec.entries().end());
  return in;
}

inline void check_shift_shapes(const ShiftPredictorParams& p, std::span<const double> z,
                               const DirectionSpec& spec) {
  require_size(z, static_cast<std::size_t>(p.latent_dim), "shift z");
  if (spec.size() != static_cast<std::size_t>(p.num_attrs))
    throw ShapeError("shift: spec length " + std::to_string(spec.size()) +
                     " != num_attrs " + std::to_string(p.num_attrs));
}

inline Vector shift_infer(const ShiftPredictorParams& p, std::span<const double> z,
                          const DirectionSpec& spec) {
  check_shift_shapes(p, z, spec);
  const ForwardResult f = mlp_forward(p.net, shift_input(z, spec));
  return add(z, f.output);
}

struct ShiftLoss {
  double loss = 0.0;
  double attr_loss = 0.0;   // L_a
  double faith_loss = 0.0;  // L_f = ||z_hat - z||_2
  MlpGradients gradients;   // d loss / d params; empty unless requested
};

// Binary cross-entropy of one conditioned attribute with clamped probability.
inline double conditioned_bce(double target_bit, double y) {
  const double yc = std::clamp(y, kProbabilityClamp, 1.0 - kProbabilityClamp);
  return -(target_bit * std::log(yc) + (1.0 - target_bit) * std::log(1.0 - yc));
}

inline ShiftLoss shift_loss(const SyntheticWorld& world, const ShiftPredictorParams& p,
                            std::span<const double> z, const DirectionSpec& spec,
                            double gamma, bool with_gradients = true) {
  check_shift_shapes(p, z, spec);
  if (world.latent_dim != p.latent_dim || world.num_attrs != p.num_attrs)
    throw ShapeError("shift_loss: world and shift predictor dimensions differ");
  if (!(gamma >= 0.0)) throw DomainError("shift_loss: gamma must be >= 0");

  const ForwardResult f = mlp_forward(p.net, shift_input(z, spec));
  const Vector& delta = f.output;
  const Vector z_hat = add(z, delta);
  const Vector x = generate(world, z_hat);
  const Vector y = predict_attrs(world, x);

  ShiftLoss r;
  Vector grad_y(y.size(), 0.0);
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (spec[i] == 0.0) continue;
    const double t = spec[i] > 0 ? 1.0 : 0.0;
    r.attr_loss += conditioned_bce(t, y[i]);
    const bool clamped = y[i] < kProbabilityClamp || y[i] > 1.0 - kProbabilityClamp;
    if (!clamped) grad_y[i] = -t / y[i] + (1.0 - t) / (1.0 - y[i]);
  }
  r.faith_loss = norm2(delta);
  r.loss = r.attr_loss + gamma * r.faith_loss;
  if (!std::isfinite(r.loss)) throw NumericError("shift_loss: non-finite loss");
  if (!with_gradients) return r;

  // d loss / d delta = d L_a / d z_hat + gamma * delta / ||delta||
  Vector grad_delta = generate_vjp(world, predict_attrs_vjp(world, x, grad_y));
  if (r.faith_loss > 0.0) {
    for (std::size_t k = 0; k < grad_delta.size(); ++k)
      grad_delta[k] += gamma * delta[k] / r.faith_loss;
  }
  r.gradients = mlp_backward(p.net, f.tape, grad_delta).params;
  return r;
}

struct EpochLog {
  int epoch = 0;
  double mean_attr_loss = 0.0;
  double mean_faith_loss = 0.0;
};

struct TrainResult {
  ShiftPredictorParams params;
  std::vector<EpochLog> log;
};

// Each attribute is conditioned with probability p_cond and given a uniform
// sign; all-zero draws are rejected.
inline DirectionSpec sample_training_spec(std::mt19937_64& rng, int m, double p_cond) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Vector e(static_cast<std::size_t>(m), 0.0);
  for (;;) {
    bool any = false;
    for (double& v : e) {
      v = 0.0;
      if (u(rng) < p_cond) {
        v = u(rng) < 0.5 ? -1.0 : 1.0;
        any = true;
      }
    }
    if (any) return DirectionSpec(e);
  }
}

inline Vector sample_latent(std::mt19937_64& rng, int d) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector z(static_cast<std::size_t>(d));
  for (double& v : z) v = normal(rng);
  return z;
}

inline TrainResult shift_train(const SyntheticWorld& world, const TrainingConfig& config) {
  config.validate();
  validate_world(world);
  TrainResult result;
  result.params = init_shift_predictor(world.latent_dim, world.num_attrs,
                                       config.hidden_width, config.hidden_layers,
                                       config.seed);
  ShiftPredictorParams& p = result.params;
  p.gamma = config.gamma;
  p.epochs = config.epochs;
  if (config.epochs == 0) return result;

  // Separate stream from the initializer.
  std::mt19937_64 rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  AdamState opt = AdamState::for_params(p.net, config.learning_rate);
  const double total_steps =
      static_cast<double>(config.epochs) * static_cast<double>(config.steps_per_epoch);
  const double pi = std::acos(-1.0);
  std::uint64_t step = 0;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    double sum_a = 0.0;
    double sum_f = 0.0;
    for (int s = 0; s < config.steps_per_epoch; ++s, ++step) {
      const double progress = static_cast<double>(step) / total_steps;
      opt.learning_rate = config.final_learning_rate +
                          0.5 * (config.learning_rate - config.final_learning_rate) *
                              (1.0 + std::cos(pi * progress));
      MlpGradients grad = MlpGradients::zeros_like(p.net);
      for (int b = 0; b < config.batch_size; ++b) {
        const Vector z = sample_latent(rng, world.latent_dim);
        const DirectionSpec spec = sample_training_spec(rng, world.num_attrs, config.p_cond);
        ShiftLoss l;
        try {
          l = shift_loss(world, p, z, spec, config.gamma);
        } catch (const NumericError& e) {
          throw TrainingError("training diverged at step " + std::to_string(step) +
                              " (epoch " + std::to_string(epoch) + "): " + e.what());
        }
        grad.add(l.gradients);
        sum_a += l.attr_loss;
        sum_f += l.faith_loss;
      }
      grad.scale(1.0 / config.batch_size);
      optimizer_step(opt, p.net, grad);
      if (!all_finite(flatten(p.net)))
        throw TrainingError("training diverged at step " + std::to_string(step) +
                            ": non-finite parameters");
    }
    const double n = static_cast<double>(config.steps_per_epoch) * config.batch_size;
    result.log.push_back({epoch, sum_a / n, sum_f / n});
  }
  p.final_attr_loss = result.log.back().mean_attr_loss;
  p.final_faith_loss = result.log.back().mean_faith_loss;
  return result;
}

// ---------------------------------------------------------------------------
// Evaluation.

struct AttributeShiftMetrics {
  int samples = 0;
  int agreements = 0;
  double agreement_rate() const {
    return samples ? static_cast<double>(agreements) / samples : 0.0;
  }
};

struct ShiftMetrics {
  int samples = 0;
  double flip_agreement = 0.0;   // fraction on the commanded side of 0.5
  double mean_shift_norm = 0.0;  // single-attribute specs
  double mean_empty_drift = 0.0; // all-zero spec
  double max_empty_drift = 0.0;
  std::vector<AttributeShiftMetrics> per_attribute;
};

// Each sample draws z ~ N(0, I), one attribute and a sign.
inline ShiftMetrics eval_shift_predictor(const SyntheticWorld& world,
                                         const ShiftPredictorParams& p, int num_samples,
                                         std::uint64_t seed) {
  if (num_samples < 1) throw DomainError("eval_shift_predictor: num_samples must be >= 1");
  if (world.latent_dim != p.latent_dim || world.num_attrs != p.num_attrs)
    throw ShapeError("eval_shift_predictor: world and shift predictor dimensions differ");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> pick(0, world.num_attrs - 1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  ShiftMetrics out;
  out.samples = num_samples;
  out.per_attribute.resize(static_cast<std::size_t>(world.num_attrs));
  int agree = 0;
  const DirectionSpec zero = DirectionSpec::zeros(static_cast<std::size_t>(world.num_attrs));
  for (int s = 0; s < num_samples; ++s) {
    const Vector z = sample_latent(rng, world.latent_dim);
    const int attr = pick(rng);
    const double sign = u(rng) < 0.5 ? -1.0 : 1.0;
    Vector e(static_cast<std::size_t>(world.num_attrs), 0.0);
    e[static_cast<std::size_t>(attr)] = sign;
    const Vector z_hat = shift_infer(p, z, DirectionSpec(e));
    const double y = predict_attrs(world, generate(world, z_hat))[static_cast<std::size_t>(attr)];
    const bool ok = sign > 0 ? y > 0.5 : y < 0.5;
    agree += ok;
    auto& pa = out.per_attribute[static_cast<std::size_t>(attr)];
    ++pa.samples;
    pa.agreements += ok;
    out.mean_shift_norm += norm2(subtract(z_hat, z));
    const double drift = norm2(subtract(shift_infer(p, z, zero), z));
    out.mean_empty_drift += drift;
    out.max_empty_drift = std::max(out.max_empty_drift, drift);
  }
  out.flip_agreement = static_cast<double>(agree) / num_samples;
  out.mean_shift_norm /= num_samples;
  out.mean_empty_drift /= num_samples;
  return out;
}

// ---------------------------------------------------------------------------
// Serialization.

inline nlohmann::json mlp_to_json(const MlpParams& p) {
  nlohmann::json layers = nlohmann::json::array();
  for (const DenseLayer& l : p.layers) {
    layers.push_back({{"input_dim", l.input_dim()},
                      {"output_dim", l.output_dim()},
                      {"activation", std::string(activation_name(l.activation))},
                      {"weight", l.weight.data()},
                      {"bias", l.bias}});
  }
  return layers;
}

inline MlpParams mlp_from_json(const nlohmann::json& j) {
  MlpParams p;
  for (const auto& l : j) {
    const auto in = l.at("input_dim").get<std::size_t>();
    const auto out = l.at("output_dim").get<std::size_t>();
    p.layers.push_back(DenseLayer{Matrix(out, in, l.at("weight").get<Vector>()),
                                  l.at("bias").get<Vector>(),
                                  parse_activation(l.at("activation").get<std::string>())});
  }
  p.validate();
  return p;
}

inline nlohmann::json shift_to_json(const ShiftPredictorParams& p) {
  return {{"format", kShiftFormat},
          {"latent_dim", p.latent_dim},
          {"num_attrs", p.num_attrs},
          {"residual", true},
          {"layers", mlp_to_json(p.net)},
          {"training",
           {{"gamma", p.gamma},
            {"epochs", p.epochs},
            {"seed", p.seed},
            {"final_attr_loss", p.final_attr_loss},
            {"final_faith_loss", p.final_faith_loss}}}};
}

inline ShiftPredictorParams shift_from_json(const nlohmann::json& j) {
  ShiftPredictorParams p;
  try {
    if (j.at("format").get<std::string>() != kShiftFormat)
      throw FormatError("shift predictor: unsupported format '" +
                        j.at("format").get<std::string>() + "'");
    if (!j.at("residual").get<bool>())
      throw FormatError("shift predictor: only residual predictors are supported");
    p.latent_dim = j.at("latent_dim").get<int>();
    p.num_attrs = j.at("num_attrs").get<int>();
    p.net = mlp_from_json(j.at("layers"));
    const auto& t = j.at("training");
    p.gamma = t.at("gamma").get<double>();
    p.epochs = t.at("epochs").get<int>();
    p.seed = t.at("seed").get<std::uint64_t>();
    p.final_attr_loss = t.at("final_attr_loss").get<double>();
    p.final_faith_loss = t.at("final_faith_loss").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("shift predictor: ") + e.what());  } catch (const ShapeError& e) {
    throw FormatError(std::string("shift predictor: ") + e.what());
  } catch (const NumericError& e) {
    throw FormatError(std::string("shift predictor: ") + e.what());
  } catch (const DomainError& e) {
    throw FormatError(std::string("shift predictor: ") + e.what());
  }
  p.validate();
  return p;
}

inline void save_shift(const ShiftPredictorParams& p, const std::string& path) {
  write_text_file(path, shift_to_json(p).dump(2) + "\n");
}

inline ShiftPredictorParams load_shift(const std::string& path) {
  return shift_from_json(parse_json_text(read_text_file(path), path));
}

}  // namespace cfshap
