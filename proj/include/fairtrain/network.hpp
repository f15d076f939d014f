/*
 * Copyright 2026 The fairtrain Authors.
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

// Fully-connected binary classifier: d -> hidden1 (ReLU) -> hidden2 (ReLU) -> 1 logit.

#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>

#include <Eigen/Dense>

#include "fairtrain/error.hpp"

namespace fairtrain {

template <typename T>
using MatrixX = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using VectorX = Eigen::Matrix<T, Eigen::Dynamic, 1>;

struct MlpShape {
  std::size_t dim = 0;
  std::size_t hidden1 = 512;
  std::size_t hidden2 = 32;

  bool operator==(const MlpShape&) const = default;

  std::size_t parameter_count() const {
    return hidden1 * dim + hidden1 + hidden2 * hidden1 + hidden2 + hidden2 + 1;
  }
};

/// Weights are stored (fan_out x fan_in), row-major. The same type holds
/// gradients and optimizer moments.
template <typename T>
struct MlpParams {
  MatrixX<T> w1;
  VectorX<T> b1;
  MatrixX<T> w2;
  VectorX<T> b2;
  MatrixX<T> w3;  // 1 x hidden2
  VectorX<T> b3;  // size 1

  static MlpParams zeros(const MlpShape& s) {
    MlpParams p;
    p.w1 = MatrixX<T>::Zero(s.hidden1, s.dim);
    p.b1 = VectorX<T>::Zero(s.hidden1);
    p.w2 = MatrixX<T>::Zero(s.hidden2, s.hidden1);
    p.b2 = VectorX<T>::Zero(s.hidden2);
    p.w3 = MatrixX<T>::Zero(1, s.hidden2);
    p.b3 = VectorX<T>::Zero(1);
    return p;
  }

  MlpShape shape() const {
    return {static_cast<std::size_t>(w1.cols()), static_cast<std::size_t>(w1.rows()),
            static_cast<std::size_t>(w2.rows())};
  }

  /// Contiguous views over every parameter block, in serialization order.
  std::array<std::span<T>, 6> blocks() {
    return {span_of(w1), span_of(b1), span_of(w2), span_of(b2), span_of(w3), span_of(b3)};
  }
  std::array<std::span<const T>, 6> blocks() const {
    return {cspan_of(w1), cspan_of(b1), cspan_of(w2), cspan_of(b2), cspan_of(w3), cspan_of(b3)};
  }

  bool operator==(const MlpParams& other) const {
    const auto a = blocks();
    const auto b = other.blocks();
    if (shape() != other.shape()) return false;
    for (std::size_t k = 0; k < a.size(); ++k) {
      for (std::size_t i = 0; i < a[k].size(); ++i) {
        if (a[k][i] != b[k][i]) return false;
      }
    }
    return true;
  }

  bool all_finite() const {
    for (const auto& block : blocks()) {
      for (T v : block) {
        if (!std::isfinite(v)) return false;
      }
    }
    return true;
  }

 private:
  template <typename M>
  static std::span<T> span_of(M& m) {
    return {m.data(), static_cast<std::size_t>(m.size())};
  }
  template <typename M>
  static std::span<const T> cspan_of(const M& m) {
    return {m.data(), static_cast<std::size_t>(m.size())};
  }
};

template <typename T>
bool same_shape(const MlpParams<T>& a, const MlpParams<T>& b) {
  return a.shape() == b.shape();
}

/// He-style initialization: weights ~ N(0, 2 / fan_in), biases zero.
template <typename T>
MlpParams<T> init_params(const MlpShape& shape, std::uint64_t seed) {
  if (shape.dim == 0 || shape.hidden1 == 0 || shape.hidden2 == 0) {
    throw ConfigError("network widths must be positive");
  }
  auto p = MlpParams<T>::zeros(shape);
  std::mt19937_64 rng(seed);
  auto fill = [&rng](MatrixX<T>& w) {
    std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / static_cast<double>(w.cols())));
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = static_cast<T>(normal(rng));
  };
  fill(p.w1);
  fill(p.w2);
  fill(p.w3);
  return p;
}

template <typename T>
struct ForwardCache {
  MatrixX<T> input;  // n x d
  MatrixX<T> pre1;   // n x hidden1
  MatrixX<T> act1;
  MatrixX<T> pre2;   // n x hidden2
  MatrixX<T> act2;
  VectorX<T> logits;  // n

  Eigen::Index batch_size() const { return logits.size(); }
};

template <typename T>
ForwardCache<T> forward(const MlpParams<T>& p, const MatrixX<T>& batch) {
  if (batch.cols() != p.w1.cols()) {
    throw DataError("batch has " + std::to_string(batch.cols()) + " columns, network expects " +
                    std::to_string(p.w1.cols()));
  }
  if (!batch.allFinite()) throw DataError("non-finite value in input batch");
  ForwardCache<T> c;
  c.input = batch;
  c.pre1 = batch * p.w1.transpose();
  c.pre1.rowwise() += p.b1.transpose();
  c.act1 = c.pre1.cwiseMax(T{0});
  c.pre2 = c.act1 * p.w2.transpose();
  c.pre2.rowwise() += p.b2.transpose();
  c.act2 = c.pre2.cwiseMax(T{0});
  c.logits = c.act2 * p.w3.transpose();
  c.logits.array() += p.b3(0);
  return c;
}

template <typename T>
T logistic(T z) {
  if (z >= T{0}) return T{1} / (T{1} + std::exp(-z));
  const T e = std::exp(z);
  return e / (T{1} + e);
}

template <typename T>
struct LossAndGradient {
  T loss{};
  VectorX<T> grad;  // d loss / d logits
};

/// Mean binary cross-entropy in logit space:
/// max(z, 0) - y z + log1p(exp(-|z|)), gradient (sigmoid(z) - y) / n.
template <typename T>
LossAndGradient<T> bce_loss(const VectorX<T>& logits, std::span<const std::uint8_t> labels) {
  if (static_cast<std::size_t>(logits.size()) != labels.size()) {
    throw DataError("label count does not match batch size");
  }
  LossAndGradient<T> out;
  out.grad.resize(logits.size());
  const auto n = logits.size();
  if (n == 0) return out;
  const T inv_n = T{1} / static_cast<T>(n);
  T total{0};
  for (Eigen::Index i = 0; i < n; ++i) {
    const T z = logits(i);
    const T y = labels[static_cast<std::size_t>(i)] ? T{1} : T{0};
    total += std::max(z, T{0}) - y * z + std::log1p(std::exp(-std::abs(z)));
    out.grad(i) = (logistic(z) - y) * inv_n;
  }
  out.loss = total * inv_n;
  return out;
}

template <typename T>
LossAndGradient<T> bce_loss(const ForwardCache<T>& cache, std::span<const std::uint8_t> labels) {
  return bce_loss(cache.logits, labels);
}

/// Reverse-mode gradients of a scalar loss given dLoss/dLogits.
template <typename T>
MlpParams<T> backward(const MlpParams<T>& p, const ForwardCache<T>& c, const VectorX<T>& dlogits) {
  if (dlogits.size() != c.batch_size() || c.input.cols() != p.w1.cols() ||
      c.pre1.cols() != p.w1.rows() || c.pre2.cols() != p.w2.rows()) {
    throw DataError("backward: cache, parameters, and upstream gradient shapes disagree");
  }
  MlpParams<T> g;
  g.w3 = dlogits.transpose() * c.act2;
  g.b3 = VectorX<T>::Constant(1, dlogits.sum());
  MatrixX<T> d2 = dlogits * p.w3;
  d2 = d2.cwiseProduct((c.pre2.array() > T{0}).template cast<T>().matrix());
  g.w2 = d2.transpose() * c.act1;
  g.b2 = d2.colwise().sum().transpose();
  MatrixX<T> d1 = d2 * p.w2;
  d1 = d1.cwiseProduct((c.pre1.array() > T{0}).template cast<T>().matrix());
  g.w1 = d1.transpose() * c.input;
  g.b1 = d1.colwise().sum().transpose();
  return g;
}

template <typename T>
struct AdamState {
  MlpParams<T> m;
  MlpParams<T> v;
  std::uint64_t t = 0;
  double learning_rate = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  static AdamState fresh(const MlpShape& shape, double learning_rate = 5e-4) {
    AdamState s;
    s.m = MlpParams<T>::zeros(shape);
    s.v = MlpParams<T>::zeros(shape);
    s.learning_rate = learning_rate;
    return s;
  }
};

/// Bias-corrected Adam, applied elementwise in place.
template <typename T>
void adam_step(MlpParams<T>& p, AdamState<T>& s, const MlpParams<T>& g) {
  if (!same_shape(p, g) || !same_shape(p, s.m) || !same_shape(p, s.v)) {
    throw DataError("adam_step: parameter, gradient, and moment shapes disagree");
  }
  if (!g.all_finite()) throw NumericalError("adam_step: non-finite gradient");
  s.t += 1;
  const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.t));
  const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.t));
  const T b1 = static_cast<T>(s.beta1);
  const T b2 = static_cast<T>(s.beta2);
  const T step = static_cast<T>(s.learning_rate / c1);
  const T inv_c2 = static_cast<T>(1.0 / c2);
  const T eps = static_cast<T>(s.epsilon);
  auto pb = p.blocks();
  auto mb = s.m.blocks();
  auto vb = s.v.blocks();
  const auto gb = g.blocks();
  for (std::size_t k = 0; k < pb.size(); ++k) {
    for (std::size_t i = 0; i < pb[k].size(); ++i) {
      const T gi = gb[k][i];
      mb[k][i] = b1 * mb[k][i] + (T{1} - b1) * gi;
      vb[k][i] = b2 * vb[k][i] + (T{1} - b2) * gi * gi;
      pb[k][i] -= step * mb[k][i] / (std::sqrt(vb[k][i] * inv_c2) + eps);
    }
  }
}

}  // namespace fairtrain
