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

// A synthetic, fully differentiable generator / attribute classifier /
// target model with known latent attribute directions.
//
//   generator     x = W_g z                      (n x d, full column rank)
//   attributes    y_i = sigmoid(a_i . x + c_i)   (rows a_i orthonormal)
//   target        t = sigmoid(w . x + b),  w = sum_{i in R} beta_i a_i
//
// W_g is a scaled random isometry and every a_i lies in its column space, so
// the pseudo-inverse pullback u_i = W_g^+ a_i moves attribute i alone, and the
// target gradient in latent space lies in span{u_i : i in R}. Attributes
// outside R are null players for the target.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "cfshap/errors.hpp"
#include "cfshap/numerics.hpp"
#include "json.hpp"

namespace cfshap {

inline constexpr const char* kWorldFormat = "cfshap-world/1";

struct SyntheticWorld {
  int latent_dim = 0;  // d
  int image_dim = 0;   // n
  int num_attrs = 0;   // m
  Matrix generator;        // n x d
  Matrix attr_directions;  // m x n
  Vector attr_offsets;     // m
  Vector target_weights;   // n
  double target_offset = 0.0;
  std::vector<int> relevant_attrs;  // attributes spanning target_weights
  std::uint64_t seed = 0;

  bool operator==(const SyntheticWorld&) const = default;
};

struct GroundTruth {
  std::vector<Vector> directions;  // u_i = W_g^+ a_i, one per attribute
  std::vector<int> relevant_attrs;
  Vector target_coefficients;      // beta_i = a_i . w
};

struct WorldBundle {
  SyntheticWorld world;
  GroundTruth truth;
};

namespace world_internal {

inline constexpr double kUnitNormTolerance = 1e-9;
inline constexpr double kSpanTolerance = 1e-9;
inline constexpr double kMinSingularValue = 1e-6;
inline constexpr int kMaxRedraws = 10;

}  // namespace world_internal

// Throws ShapeError / ConstructionError when an invariant does not hold.
inline void validate_world(const SyntheticWorld& w) {
  using namespace world_internal;
  if (w.latent_dim < 1 || w.image_dim < 1 || w.num_attrs < 1)
    throw ShapeError("world: dimensions must be positive");
  const auto d = static_cast<std::size_t>(w.latent_dim);
  const auto n = static_cast<std::size_t>(w.image_dim);
  const auto m = static_cast<std::size_t>(w.num_attrs);
  if (w.generator.rows() != n || w.generator.cols() != d)
    throw ShapeError("world: generator must be image_dim x latent_dim");
  if (w.attr_directions.rows() != m || w.attr_directions.cols() != n)
    throw ShapeError("world: attr_directions must be num_attrs x image_dim");
  require_size(w.attr_offsets, m, "world attr_offsets");
  require_size(w.target_weights, n, "world target_weights");
  require_finite(w.generator.data(), "world generator");
  require_finite(w.attr_directions.data(), "world attr_directions");
  require_finite(w.attr_offsets, "world attr_offsets");
  require_finite(w.target_weights, "world target_weights");
  if (!std::isfinite(w.target_offset)) throw NumericError("world: target_offset");

  for (std::size_t i = 0; i < m; ++i) {
    if (std::abs(norm2(w.attr_directions.row(i)) - 1.0) > kUnitNormTolerance)
      throw ConstructionError("world: attribute direction " + std::to_string(i) +
                              " is not unit norm");
  }
  if (min_singular_value(w.generator) <= kMinSingularValue)
    throw ConstructionError("world: generator is rank deficient");

  // w must equal its projection onto the relevant attribute rows.
  Vector residual = w.target_weights;
  for (int i : w.relevant_attrs) {
    if (i < 0 || static_cast<std::size_t>(i) >= m)
      throw ShapeError("world: relevant attribute index out of range");
  }
  for (int i : w.relevant_attrs) {
    auto a = w.attr_directions.row(i);
    const double beta = dot(a, w.target_weights);
    for (std::size_t k = 0; k < n; ++k) residual[k] -= beta * a[k];
  }
  if (norm2(residual) > kSpanTolerance * std::max(1.0, norm2(w.target_weights)))
    throw ConstructionError("world: target weights leave the relevant attribute span");
}

inline GroundTruth ground_truth(const SyntheticWorld& w) {
  GroundTruth gt;
  const Matrix gram = w.generator.gram();
  for (int i = 0; i < w.num_attrs; ++i) {
    const Vector rhs = w.generator.multiply_transposed(w.attr_directions.row(i));
    gt.directions.push_back(solve_spd(gram, rhs));
    gt.target_coefficients.push_back(dot(w.attr_directions.row(i), w.target_weights));
  }
  gt.relevant_attrs = w.relevant_attrs;
  return gt;
}

// Deterministic in (d, n, m, seed). Attribute i is target-relevant iff i is
// even, so every world with m >= 2 has at least one null attribute.
inline WorldBundle world_create(int d, int n, int m, std::uint64_t seed) {
  using namespace world_internal;
  if (d < 1 || n < 1 || m < 1) throw DomainError("world_create: dimensions must be positive");
  if (d < m) throw DomainError("world_create: latent_dim must be >= num_attrs");
  if (n < m) throw DomainError("world_create: image_dim must be >= num_attrs");

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);

  SyntheticWorld w;
  w.latent_dim = d;
  w.image_dim = n;
  w.num_attrs = m;
  w.seed = seed;

  const auto du = static_cast<std::size_t>(d);
  const auto nu = static_cast<std::size_t>(n);
  const auto mu = static_cast<std::size_t>(m);

  // Unit-variance pixels on average: ||W_g z||^2 = (n/d) ||z||^2.
  const double scale = std::sqrt(static_cast<double>(n) / d);
  bool ok = false;
  Matrix q;
  for (int attempt = 0; attempt < kMaxRedraws && !ok; ++attempt) {
    Matrix draw(nu, du);
    for (double& x : draw.data()) x = normal(rng);
    if (min_singular_value(draw) <= kMinSingularValue) continue;
    q = draw;
    const Vector rdiag = orthonormalize_columns(q);
    ok = *std::min_element(rdiag.begin(), rdiag.end()) > kMinSingularValue;
  }
  if (!ok) throw ConstructionError("world_create: generator rank deficient after 10 draws");
  w.generator = q;
  for (double& x : w.generator.data()) x *= scale;

  // Attribute rows: random combinations of generator columns, orthonormalized.
  ok = false;
  for (int attempt = 0; attempt < kMaxRedraws && !ok; ++attempt) {
    Matrix coeff(du, mu);
    for (double& x : coeff.data()) x = normal(rng);
    Matrix cols(nu, mu);
    for (std::size_t j = 0; j < mu; ++j) {
      const Vector c = q.multiply(coeff.column(j));
      for (std::size_t r = 0; r < nu; ++r) cols(r, j) = c[r];
    }
    const Vector rdiag = orthonormalize_columns(cols);
    if (*std::min_element(rdiag.begin(), rdiag.end()) <= kMinSingularValue) continue;
    w.attr_directions = cols.transposed();
    ok = true;
  }
  if (!ok) throw ConstructionError("world_create: attribute directions degenerate after 10 draws");

  w.attr_offsets.resize(mu);
  for (double& c : w.attr_offsets) c = uniform(rng) - 0.5;

  w.target_weights.assign(nu, 0.0);
  for (int i = 0; i < m; i += 2) {
    w.relevant_attrs.push_back(i);
    const double sign = uniform(rng) < 0.5 ? -1.0 : 1.0;
    const double beta = sign * (0.75 + 0.5 * uniform(rng));
    const auto a = w.attr_directions.row(i);
    for (std::size_t k = 0; k < nu; ++k) w.target_weights[k] += beta * a[k];
  }
  w.target_offset = 0.5 * uniform(rng) - 0.25;

  validate_world(w);
  GroundTruth gt = ground_truth(w);
  return {std::move(w), std::move(gt)};
}

// ---------------------------------------------------------------------------
// Forward maps and their vector-Jacobian products.

inline Vector generate(const SyntheticWorld& w, std::span<const double> z) {
  require_size(z, static_cast<std::size_t>(w.latent_dim), "generate z");
  return w.generator.multiply(z);
}

// grad_z = W_g^T grad_x
inline Vector generate_vjp(const SyntheticWorld& w, std::span<const double> grad_x) {
  require_size(grad_x, static_cast<std::size_t>(w.image_dim), "generate_vjp");
  return w.generator.multiply_transposed(grad_x);
}

inline Vector attr_logits(const SyntheticWorld& w, std::span<const double> x) {
  require_size(x, static_cast<std::size_t>(w.image_dim), "predict_attrs x");
  Vector l = w.attr_directions.multiply(x);
  for (std::size_t i = 0; i < l.size(); ++i) l[i] += w.attr_offsets[i];
  return l;
}

inline Vector predict_attrs(const SyntheticWorld& w, std::span<const double> x) {
  Vector y = attr_logits(w, x);
  for (double& v : y) v = sigmoid(v);
  return y;
}

// grad_x of sum_i grad_y[i] * y_i(x).
inline Vector predict_attrs_vjp(const SyntheticWorld& w, std::span<const double> x,
                                std::span<const double> grad_y) {
  require_size(grad_y, static_cast<std::size_t>(w.num_attrs), "predict_attrs_vjp");
  const Vector y = predict_attrs(w, x);
  Vector g(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) g[i] = grad_y[i] * y[i] * (1.0 - y[i]);
  return w.attr_directions.multiply_transposed(g);
}

inline double predict_target(const SyntheticWorld& w, std::span<const double> x) {
  require_size(x, static_cast<std::size_t>(w.image_dim), "predict_target x");
  return sigmoid(dot(w.target_weights, x) + w.target_offset);
}

inline Vector predict_target_gradient(const SyntheticWorld& w, std::span<const double> x) {
  const double t = predict_target(w, x);
  return scaled(w.target_weights, t * (1.0 - t));
}

// ---------------------------------------------------------------------------
// Serialization. Doubles are written in shortest round-trip form, so
// save/load is bit-exact.

inline nlohmann::json matrix_to_json(const Matrix& m) {
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", m.data()}};
}

inline Matrix matrix_from_json(const nlohmann::json& j) {
  return Matrix(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>(),
                j.at("data").get<Vector>());
}

inline nlohmann::json world_to_json(const SyntheticWorld& w) {
  return {{"format", kWorldFormat},
          {"latent_dim", w.latent_dim},
          {"image_dim", w.image_dim},
          {"num_attrs", w.num_attrs},
          {"seed", w.seed},
          {"generator", matrix_to_json(w.generator)},
          {"attr_directions", matrix_to_json(w.attr_directions)},
          {"attr_offsets", w.attr_offsets},
          {"target_weights", w.target_weights},
          {"target_offset", w.target_offset},
          {"relevant_attrs", w.relevant_attrs}};
}

inline SyntheticWorld world_from_json(const nlohmann::json& j) {
  SyntheticWorld w;
  try {
    if (j.at("format").get<std::string>() != kWorldFormat)
      throw FormatError("world: unsupported format '" + j.at("format").get<std::string>() + "'");
    w.latent_dim = j.at("latent_dim").get<int>();
    w.image_dim = j.at("image_dim").get<int>();
    w.num_attrs = j.at("num_attrs").get<int>();
    w.seed = j.at("seed").get<std::uint64_t>();
    w.generator = matrix_from_json(j.at("generator"));
    w.attr_directions = matrix_from_json(j.at("attr_directions"));
    w.attr_offsets = j.at("attr_offsets").get<Vector>();
    w.target_weights = j.at("target_weights").get<Vector>();
    w.target_offset = j.at("target_offset").get<double>();
    w.relevant_attrs = j.at("relevant_attrs").get<std::vector<int>>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("world: ") + e.what());
  } catch (const ShapeError& e) {
    throw FormatError(std::string("world: ") + e.what());
  } catch (const NumericError& e) {
    throw FormatError(std::string("world: ") + e.what());
  }
  validate_world(w);
  return w;
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open '" + path + "' for writing");
  out << text;
  if (!out) throw FormatError("write to '" + path + "' failed");
}

inline nlohmann::json parse_json_text(const std::string& text, const std::string& what) {
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(what + ": " + e.what());
  }
}

inline void save_world(const SyntheticWorld& w, const std::string& path) {
  write_text_file(path, world_to_json(w).dump(2) + "\n");
}

inline SyntheticWorld load_world(const std::string& path) {
  return world_from_json(parse_json_text(read_text_file(path), path));
}

}  // namespace cfshap
