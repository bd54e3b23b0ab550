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

// Dense f64 linear algebra, a small feed-forward network with hand-derived
// backpropagation, an adaptive-moment optimizer and a central-difference
// gradient oracle.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "cfshap/errors.hpp"

namespace cfshap {

using Vector = std::vector<double>;

inline bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(),
                     [](double x) { return std::isfinite(x); });
}

inline void require_finite(std::span<const double> v, std::string_view what) {
  if (!all_finite(v)) {
    throw NumericError(std::string(what) + ": non-finite value");
  }
}

inline void require_size(std::span<const double> v, std::size_t expected,
                         std::string_view what) {
  if (v.size() != expected) {
    throw ShapeError(std::string(what) + ": expected length " +
                     std::to_string(expected) + ", got " +
                     std::to_string(v.size()));
  }
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  require_size(b, a.size(), "dot");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

inline Vector add(std::span<const double> a, std::span<const double> b) {
  require_size(b, a.size(), "add");
  Vector out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  return out;
}

inline Vector subtract(std::span<const double> a, std::span<const double> b) {
  require_size(b, a.size(), "subtract");
  Vector out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
  return out;
}

inline Vector scaled(std::span<const double> a, double s) {
  Vector out(a.begin(), a.end());
  for (double& x : out) x *= s;
  return out;
}

// Row-major dense matrix.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, Vector data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
      throw ShapeError("Matrix: element count " + std::to_string(data_.size()) +
                       " != " + std::to_string(rows_) + "x" +
                       std::to_string(cols_));
    }
    require_finite(data_, "Matrix");
  }

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  const Vector& data() const { return data_; }
  Vector& data() { return data_; }

  double& operator()(std::size_t r, std::size_t c) {
    return data_[r * cols_ + c];
  }
  double operator()(std::size_t r, std::size_t c) const {
    return data_[r * cols_ + c];
  }

  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }
  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }

  Vector column(std::size_t c) const {
    Vector out(rows_);
    for (std::size_t r = 0; r < rows_; ++r) out[r] = (*this)(r, c);
    return out;
  }

  // y = A x
  Vector multiply(std::span<const double> x) const {
    require_size(x, cols_, "Matrix::multiply");
    Vector y(rows_, 0.0);
    for (std::size_t r = 0; r < rows_; ++r) {
      const double* a = data_.data() + r * cols_;
      double s = 0.0;
      for (std::size_t c = 0; c < cols_; ++c) s += a[c] * x[c];
      y[r] = s;
    }
    return y;
  }

  // y = A^T x
  Vector multiply_transposed(std::span<const double> x) const {
    require_size(x, rows_, "Matrix::multiply_transposed");
    Vector y(cols_, 0.0);
    for (std::size_t r = 0; r < rows_; ++r) {
      const double* a = data_.data() + r * cols_;
      const double xr = x[r];
      if (xr == 0.0) continue;
      for (std::size_t c = 0; c < cols_; ++c) y[c] += a[c] * xr;
    }
    return y;
  }

  // A += scale * u v^T
  void add_outer(std::span<const double> u, std::span<const double> v,
                 double scale = 1.0) {
    require_size(u, rows_, "Matrix::add_outer");
    require_size(v, cols_, "Matrix::add_outer");
    for (std::size_t r = 0; r < rows_; ++r) {
      const double ur = scale * u[r];
      if (ur == 0.0) continue;
      double* a = data_.data() + r * cols_;
      for (std::size_t c = 0; c < cols_; ++c) a[c] += ur * v[c];
    }
  }

  Matrix transposed() const {
    Matrix t(cols_, rows_);
    for (std::size_t r = 0; r < rows_; ++r)
      for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
    return t;
  }

  // A^T A
  Matrix gram() const {
    Matrix g(cols_, cols_);
    for (std::size_t i = 0; i < cols_; ++i)
      for (std::size_t j = i; j < cols_; ++j) {
        double s = 0.0;
        for (std::size_t r = 0; r < rows_; ++r) s += (*this)(r, i) * (*this)(r, j);
        g(i, j) = s;
        g(j, i) = s;
      }
    return g;
  }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  Vector data_;
};

// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending.
inline Vector symmetric_eigenvalues(Matrix a, int max_sweeps = 100) {
  if (a.rows() != a.cols()) throw ShapeError("symmetric_eigenvalues: not square");
  const std::size_t n = a.rows();
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    if (off < 1e-30) break;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        if (a(p, q) == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p);
          const double akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k);
          const double aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
      }
    }
  }
  Vector eig(n);
  for (std::size_t i = 0; i < n; ++i) eig[i] = a(i, i);
  std::sort(eig.begin(), eig.end());
  return eig;
}

// Smallest singular value, via the Gram matrix spectrum.
inline double min_singular_value(const Matrix& a) {
  const Vector eig = symmetric_eigenvalues(a.gram());
  return std::sqrt(std::max(0.0, eig.front()));
}

// Solves A x = b for symmetric positive definite A (Cholesky).
inline Vector solve_spd(const Matrix& a, std::span<const double> b) {
  if (a.rows() != a.cols()) throw ShapeError("solve_spd: not square");
  const std::size_t n = a.rows();
  require_size(b, n, "solve_spd rhs");
  Matrix l(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    double d = a(j, j);
    for (std::size_t k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
    if (!(d > 0.0)) throw NumericError("solve_spd: matrix not positive definite");
    l(j, j) = std::sqrt(d);
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      l(i, j) = s / l(j, j);
    }
  }
  Vector y(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = b[i];
    for (std::size_t k = 0; k < i; ++k) s -= l(i, k) * y[k];
    y[i] = s / l(i, i);
  }
  Vector x(n);
  for (std::size_t i = n; i-- > 0;) {
    double s = y[i];
    for (std::size_t k = i + 1; k < n; ++k) s -= l(k, i) * x[k];
    x[i] = s / l(i, i);
  }
  return x;
}

// Modified Gram-Schmidt on the columns of `a`, in place. Returns the norm of
// each column before normalization (the diagonal of R).
inline Vector orthonormalize_columns(Matrix& a) {
  Vector rdiag(a.cols());
  for (std::size_t j = 0; j < a.cols(); ++j) {
    for (std::size_t k = 0; k < j; ++k) {
      double proj = 0.0;
      for (std::size_t r = 0; r < a.rows(); ++r) proj += a(r, k) * a(r, j);
      for (std::size_t r = 0; r < a.rows(); ++r) a(r, j) -= proj * a(r, k);
    }
    double nrm = 0.0;
    for (std::size_t r = 0; r < a.rows(); ++r) nrm += a(r, j) * a(r, j);
    nrm = std::sqrt(nrm);
    rdiag[j] = nrm;
    if (nrm > 0.0) {
      for (std::size_t r = 0; r < a.rows(); ++r) a(r, j) /= nrm;
    }
  }
  return rdiag;
}

// ---------------------------------------------------------------------------
// Feed-forward network.

enum class Activation { kTanh, kIdentity, kSigmoid };

inline std::string_view activation_name(Activation a) {
  switch (a) {
    case Activation::kTanh:
      return "tanh";
    case Activation::kIdentity:
      return "identity";
    case Activation::kSigmoid:
      return "sigmoid";
  }
  return "identity";
}

inline Activation parse_activation(std::string_view name) {
  if (name == "tanh") return Activation::kTanh;
  if (name == "identity") return Activation::kIdentity;
  if (name == "sigmoid") return Activation::kSigmoid;
  throw FormatError("unknown activation '" + std::string(name) + "'");
}

inline double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double activate(Activation a, double x) {
  switch (a) {
    case Activation::kTanh:
      return std::tanh(x);
    case Activation::kSigmoid:
      return sigmoid(x);
    case Activation::kIdentity:
      return x;
  }
  return x;
}

// d activation / d pre-activation, expressed through the activation output.
inline double activation_slope(Activation a, double out) {
  switch (a) {
    case Activation::kTanh:
      return 1.0 - out * out;
    case Activation::kSigmoid:
      return out * (1.0 - out);
    case Activation::kIdentity:
      return 1.0;
  }
  return 1.0;
}

// weight is (output_dim x input_dim).
struct DenseLayer {
  Matrix weight;
  Vector bias;
  Activation activation = Activation::kIdentity;

  std::size_t input_dim() const { return weight.cols(); }
  std::size_t output_dim() const { return weight.rows(); }
  bool operator==(const DenseLayer&) const = default;
};

struct MlpParams {
  std::vector<DenseLayer> layers;

  std::size_t input_dim() const {
    return layers.empty() ? 0 : layers.front().input_dim();
  }
  std::size_t output_dim() const {
    return layers.empty() ? 0 : layers.back().output_dim();
  }

  // Throws ShapeError unless layer dimensions chain.
  void validate() const {
    if (layers.empty()) throw ShapeError("MlpParams: no layers");
    for (std::size_t k = 0; k < layers.size(); ++k) {
      const DenseLayer& l = layers[k];
      if (l.weight.rows() == 0 || l.weight.cols() == 0)
        throw ShapeError("MlpParams: empty weight in layer " + std::to_string(k));
      if (l.bias.size() != l.output_dim())
        throw ShapeError("MlpParams: bias length mismatch in layer " +
                         std::to_string(k));
      if (k > 0 && layers[k - 1].output_dim() != l.input_dim())
        throw ShapeError("MlpParams: layer " + std::to_string(k - 1) +
                         " output does not chain into layer " +
                         std::to_string(k));
    }
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const DenseLayer& l : layers) n += l.weight.data().size() + l.bias.size();
    return n;
  }

  bool operator==(const MlpParams&) const = default;
};

// All-zero parameters with the given layer widths.
inline MlpParams make_mlp(const std::vector<std::size_t>& widths,
                          const std::vector<Activation>& activations) {
  if (widths.size() < 2 || activations.size() != widths.size() - 1)
    throw ShapeError("make_mlp: need one activation per layer");
  MlpParams p;
  for (std::size_t k = 0; k + 1 < widths.size(); ++k) {
    p.layers.push_back(DenseLayer{Matrix(widths[k + 1], widths[k]),
                                  Vector(widths[k + 1], 0.0), activations[k]});
  }
  p.validate();
  return p;
}

// Per-layer record of one forward pass.
struct MlpTape {
  std::vector<Vector> inputs;           // input to layer k
  std::vector<Vector> pre_activations;  // W x + b
  std::vector<Vector> outputs;          // activation(pre)
};

struct ForwardResult {
  Vector output;
  MlpTape tape;
};

inline ForwardResult mlp_forward(const MlpParams& params,
                                 std::span<const double> input) {
  params.validate();
  require_size(input, params.input_dim(), "mlp_forward input");
  ForwardResult r;
  r.tape.inputs.reserve(params.layers.size());
  Vector x(input.begin(), input.end());
  for (const DenseLayer& l : params.layers) {
    Vector pre = l.weight.multiply(x);
    for (std::size_t i = 0; i < pre.size(); ++i) pre[i] += l.bias[i];
    Vector out(pre.size());
    for (std::size_t i = 0; i < pre.size(); ++i) out[i] = activate(l.activation, pre[i]);
    r.tape.inputs.push_back(std::move(x));
    r.tape.pre_activations.push_back(std::move(pre));
    x = out;
    r.tape.outputs.push_back(std::move(out));
  }
  require_finite(x, "mlp_forward output");
  r.output = std::move(x);
  return r;
}

// Gradients shaped like MlpParams (one weight/bias pair per layer).
struct MlpGradients {
  std::vector<Matrix> weights;
  std::vector<Vector> biases;

  static MlpGradients zeros_like(const MlpParams& p) {
    MlpGradients g;
    for (const DenseLayer& l : p.layers) {
      g.weights.emplace_back(l.weight.rows(), l.weight.cols());
      g.biases.emplace_back(l.bias.size(), 0.0);
    }
    return g;
  }

  void add(const MlpGradients& other, double scale = 1.0) {
    if (other.weights.size() != weights.size())
      throw ShapeError("MlpGradients::add: layer count mismatch");
    for (std::size_t k = 0; k < weights.size(); ++k) {
      auto& w = weights[k].data();
      const auto& ow = other.weights[k].data();
      require_size(ow, w.size(), "MlpGradients::add");
      for (std::size_t i = 0; i < w.size(); ++i) w[i] += scale * ow[i];
      require_size(other.biases[k], biases[k].size(), "MlpGradients::add");
      for (std::size_t i = 0; i < biases[k].size(); ++i)
        biases[k][i] += scale * other.biases[k][i];
    }
  }

  void scale(double s) {
    for (auto& w : weights)
      for (double& x : w.data()) x *= s;
    for (auto& b : biases)
      for (double& x : b) x *= s;
  }

  void check_matches(const MlpParams& p) const {
    if (weights.size() != p.layers.size() || biases.size() != p.layers.size())
      throw ShapeError("gradients: layer count does not match params");
    for (std::size_t k = 0; k < p.layers.size(); ++k) {
      if (weights[k].rows() != p.layers[k].weight.rows() ||
          weights[k].cols() != p.layers[k].weight.cols() ||
          biases[k].size() != p.layers[k].bias.size())
        throw ShapeError("gradients: shape mismatch in layer " + std::to_string(k));
    }
  }
};

struct BackwardResult {
  MlpGradients params;
  Vector input;
};

inline BackwardResult mlp_backward(const MlpParams& params, const MlpTape& tape,
                                   std::span<const double> output_gradient) {
  const std::size_t L = params.layers.size();
  if (tape.inputs.size() != L || tape.outputs.size() != L ||
      tape.pre_activations.size() != L)
    throw ShapeError("mlp_backward: tape has wrong layer count");
  for (std::size_t k = 0; k < L; ++k) {
    if (tape.inputs[k].size() != params.layers[k].input_dim() ||
        tape.outputs[k].size() != params.layers[k].output_dim())
      throw ShapeError("mlp_backward: tape does not match layer " +
                       std::to_string(k));
  }
  require_size(output_gradient, params.output_dim(), "mlp_backward gradient");

  BackwardResult r{MlpGradients::zeros_like(params), {}};
  Vector g(output_gradient.begin(), output_gradient.end());
  for (std::size_t k = L; k-- > 0;) {
    const DenseLayer& l = params.layers[k];
    const Vector& out = tape.outputs[k];
    for (std::size_t i = 0; i < g.size(); ++i) g[i] *= activation_slope(l.activation, out[i]);
    r.params.weights[k].add_outer(g, tape.inputs[k]);
    r.params.biases[k] = g;
    g = l.weight.multiply_transposed(g);
  }
  r.input = std::move(g);
  return r;
}

// Flattened parameter views, layer by layer: weights (row-major) then bias.
inline Vector flatten(const MlpParams& p) {
  Vector out;
  out.reserve(p.parameter_count());
  for (const DenseLayer& l : p.layers) {
    out.insert(out.end(), l.weight.data().begin(), l.weight.data().end());
    out.insert(out.end(), l.bias.begin(), l.bias.end());
  }
  return out;
}

inline Vector flatten(const MlpGradients& g) {
  Vector out;
  for (std::size_t k = 0; k < g.weights.size(); ++k) {
    out.insert(out.end(), g.weights[k].data().begin(), g.weights[k].data().end());
    out.insert(out.end(), g.biases[k].begin(), g.biases[k].end());
  }
  return out;
}

inline void assign_flat(MlpParams& p, std::span<const double> flat) {
  require_size(flat, p.parameter_count(), "assign_flat");
  std::size_t pos = 0;
  for (DenseLayer& l : p.layers) {
    for (double& w : l.weight.data()) w = flat[pos++];
    for (double& b : l.bias) b = flat[pos++];
  }
}

// Central differences (f(x + h e_i) - f(x - h e_i)) / 2h.
inline Vector finite_difference_gradient(
    const std::function<double(std::span<const double>)>& f,
    std::span<const double> point, double step) {
  if (!(step > 0.0)) throw DomainError("finite_difference_gradient: step must be > 0");
  Vector x(point.begin(), point.end());
  Vector grad(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = x[i];
    x[i] = orig + step;
    const double fp = f(x);
    x[i] = orig - step;
    const double fm = f(x);
    x[i] = orig;
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw NumericError("finite_difference_gradient: non-finite evaluation at coordinate " +
                         std::to_string(i));
    grad[i] = (fp - fm) / (2.0 * step);
  }
  return grad;
}

// ---------------------------------------------------------------------------
// Adaptive-moment optimizer (decays 0.9 / 0.999, epsilon 1e-8).

struct AdamState {
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEpsilon = 1e-8;

  double learning_rate = 1e-3;
  MlpGradients first_moment;
  MlpGradients second_moment;
  std::uint64_t step = 0;

  static AdamState for_params(const MlpParams& p, double learning_rate) {
    if (!(learning_rate > 0.0)) throw DomainError("AdamState: learning rate must be > 0");
    return AdamState{learning_rate, MlpGradients::zeros_like(p),
                     MlpGradients::zeros_like(p), 0};
  }
};

inline void optimizer_step(AdamState& state, MlpParams& params,
                           const MlpGradients& gradients) {
  gradients.check_matches(params);
  state.first_moment.check_matches(params);
  state.second_moment.check_matches(params);
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(AdamState::kBeta1, t);
  const double c2 = 1.0 - std::pow(AdamState::kBeta2, t);
  const double lr = state.learning_rate;

  auto update = [&](std::span<double> p, std::span<const double> g,
                    std::span<double> m, std::span<double> v) {
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = AdamState::kBeta1 * m[i] + (1.0 - AdamState::kBeta1) * g[i];
      v[i] = AdamState::kBeta2 * v[i] + (1.0 - AdamState::kBeta2) * g[i] * g[i];
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      p[i] -= lr * mhat / (std::sqrt(vhat) + AdamState::kEpsilon);
    }
  };
  for (std::size_t k = 0; k < params.layers.size(); ++k) {
    DenseLayer& l = params.layers[k];
    update(l.weight.data(), gradients.weights[k].data(),
           state.first_moment.weights[k].data(), state.second_moment.weights[k].data());
    update(l.bias, gradients.biases[k], state.first_moment.biases[k],
           state.second_moment.biases[k]);
  }
}

}  // namespace cfshap
