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

// Baseline and fairness-constrained training loops.
//
// The constrained loop is a two-player game. Per mini-batch the model player
// takes an Adam step on BCE + sum_j lambda_j * proxy_violation_j, where the
// proxy violations are hinge surrogates of the four worst-case group rate
// constraints. The constraint player then moves each multiplier by projected
// ascent on the exact (count-based) violation of the same batch.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <iostream>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "fairtrain/constraints.hpp"
#include "fairtrain/data_model.hpp"
#include "fairtrain/error.hpp"
#include "fairtrain/metrics.hpp"
#include "fairtrain/network.hpp"

namespace fairtrain {

using Scalar = float;
using Params = MlpParams<Scalar>;

struct TrainConfig {
  std::size_t epochs = 75;
  std::size_t batch_size = 128;
  double learning_rate = 5e-4;
  double multiplier_learning_rate = 0.01;
  std::optional<double> multiplier_cap = 10.0;
  std::optional<ConstraintConfig> constraint;
  std::uint64_t seed = 0;
  bool use_last_partial_batch = true;
  std::size_t hidden1 = 512;
  std::size_t hidden2 = 32;

  bool constrained() const { return constraint.has_value(); }

  void validate() const {
    if (epochs == 0) throw ConfigError("epochs must be positive");
    if (batch_size == 0) throw ConfigError("batch_size must be positive");
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
    if (!(multiplier_learning_rate > 0.0)) {
      throw ConfigError("multiplier_learning_rate must be positive");
    }
    if (multiplier_cap && !(*multiplier_cap > 0.0)) {
      throw ConfigError("multiplier_cap must be positive when set");
    }
    if (hidden1 == 0 || hidden2 == 0) throw ConfigError("hidden widths must be positive");
    if (constraint) constraint->validate();
  }
};

struct MultiplierState {
  std::array<double, kNumConstraints> lambda{};

  bool operator==(const MultiplierState&) const = default;

  void ascend(const std::array<std::optional<double>, kNumConstraints>& exact, double step,
              std::optional<double> cap) {
    for (std::size_t j = 0; j < kNumConstraints; ++j) {
      if (!exact[j]) continue;
      double next = std::max(0.0, lambda[j] + step * *exact[j]);
      if (cap) next = std::min(next, *cap);
      lambda[j] = next;
    }
  }
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double validation_f1 = 0.0;
  double validation_mcc = 0.0;
  std::optional<ViolationVector> validation_violations;
  MultiplierState multipliers;
  std::string checkpoint;
};

struct TrainedModel {
  Params params;
  std::size_t selected_epoch = 0;
  std::vector<EpochRecord> history;
  TrainConfig config;
  MultiplierState multipliers;
  std::vector<std::string> warnings;
};

/// Earliest 1-based epoch attaining the maximum validation F1.
inline std::size_t select_best_epoch(std::span<const EpochRecord> history) {
  if (history.empty()) throw ConfigError("select_best_epoch: empty history");
  std::size_t best = 0;
  for (std::size_t i = 1; i < history.size(); ++i) {
    if (history[i].validation_f1 > history[best].validation_f1) best = i;
  }
  return history[best].epoch;
}

inline MatrixX<Scalar> feature_matrix(const Dataset& ds, std::span<const std::size_t> indices) {
  MatrixX<Scalar> x(static_cast<Eigen::Index>(indices.size()), static_cast<Eigen::Index>(ds.dim));
  for (std::size_t r = 0; r < indices.size(); ++r) {
    const auto& f = ds.records.at(indices[r]).features;
    for (std::size_t k = 0; k < ds.dim; ++k) {
      x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k)) = f[k];
    }
  }
  return x;
}

inline std::vector<std::uint8_t> labels_of(const Dataset& ds, std::span<const std::size_t> indices) {
  std::vector<std::uint8_t> y;
  y.reserve(indices.size());
  for (auto i : indices) y.push_back(ds.records.at(i).label);
  return y;
}

/// One membership mask per named group, over `indices`.
inline std::vector<std::vector<std::uint8_t>> group_masks(const Dataset& ds,
                                                          std::span<const std::size_t> indices,
                                                          std::span<const std::string> names) {
  std::vector<std::vector<std::uint8_t>> masks;
  for (const auto& name : names) {
    const auto g = ds.group_index(name);
    std::vector<std::uint8_t> m;
    m.reserve(indices.size());
    for (auto i : indices) m.push_back(ds.records.at(i).groups[g]);
    masks.push_back(std::move(m));
  }
  return masks;
}

inline std::vector<std::uint8_t> threshold(const VectorX<Scalar>& logits) {
  std::vector<std::uint8_t> p(static_cast<std::size_t>(logits.size()));
  for (Eigen::Index i = 0; i < logits.size(); ++i) p[static_cast<std::size_t>(i)] = logits(i) >= 0;
  return p;
}

struct Prediction {
  std::vector<double> probabilities;
  std::vector<std::uint8_t> labels;
};

/// Group-blind inference: forward pass, logistic, threshold at 0.5.
inline Prediction predict(const Params& params, const MatrixX<Scalar>& features) {
  const auto cache = forward(params, features);
  Prediction out;
  out.probabilities.reserve(static_cast<std::size_t>(cache.logits.size()));
  for (Eigen::Index i = 0; i < cache.logits.size(); ++i) {
    out.probabilities.push_back(logistic(static_cast<double>(cache.logits(i))));
  }
  out.labels = threshold(cache.logits);
  return out;
}

inline Prediction predict(const TrainedModel& model, const MatrixX<Scalar>& features) {
  return predict(model.params, features);
}

/// The model player's batch objective and its gradient w.r.t. the logits,
/// together with the exact violations the constraint player ascends on.
/// Constraints with lambda_j == 0 or no group support in the batch add nothing.
template <typename T>
struct PlayerObjective {
  T objective{};
  T bce{};
  VectorX<T> dlogits;
  std::array<std::optional<double>, kNumConstraints> exact;
  std::array<std::optional<T>, kNumConstraints> proxy;
};

template <typename T>
PlayerObjective<T> model_player_objective(const VectorX<T>& logits,
                                          std::span<const std::uint8_t> labels,
                                          std::span<const std::vector<std::uint8_t>> masks,
                                          const std::optional<ConstraintConfig>& constraint,
                                          const MultiplierState& multipliers) {
  auto bce = bce_loss<T>(logits, labels);
  PlayerObjective<T> out;
  out.bce = bce.loss;
  out.objective = bce.loss;
  out.dlogits = std::move(bce.grad);
  if (!constraint) return out;
  std::vector<std::uint8_t> predictions(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    predictions[i] = logits(static_cast<Eigen::Index>(i)) >= T{0};
  }
  out.exact = extreme_violations(rate_snapshot(predictions, labels, masks), *constraint).exact;
  const auto proxies = proxy_violations<T>(logits, labels, masks, *constraint);
  for (std::size_t j = 0; j < kNumConstraints; ++j) {
    if (!proxies.terms[j]) continue;
    out.proxy[j] = proxies.terms[j]->value;
    const T lambda = static_cast<T>(multipliers.lambda[j]);
    if (lambda > T{0}) {
      out.objective += lambda * proxies.terms[j]->value;
      out.dlogits += lambda * proxies.terms[j]->grad;
    }
  }
  return out;
}

/// Observes every optimizer step; used for trajectory comparisons.
struct StepObserver {
  std::function<void(std::size_t epoch, std::size_t batch, const Params&, const MultiplierState&)>
      on_step;
};

inline TrainedModel train(const Dataset& ds, const SplitIndices& split, const TrainConfig& cfg,
                          const StepObserver& observer = {}) {
  cfg.validate();
  ds.validate();
  for (const auto* part : {&split.train, &split.validation, &split.test}) {
    for (auto i : *part) {
      if (i >= ds.size()) throw DataError("split index " + std::to_string(i) + " out of range");
    }
  }
  if (split.train.empty() || split.validation.empty()) {
    throw DataError("training and validation splits must be non-empty");
  }
  const auto train_labels = labels_of(ds, split.train);
  if (std::count(train_labels.begin(), train_labels.end(), 1) == 0 ||
      std::count(train_labels.begin(), train_labels.end(), 0) == 0) {
    throw DataError("training split must contain both classes");
  }
  std::vector<std::string> constraint_groups;
  if (cfg.constraint) {
    for (const auto& name : cfg.constraint->group_names) {
      if (std::find(ds.group_names.begin(), ds.group_names.end(), name) == ds.group_names.end()) {
        throw DataError("constraint group '" + name + "' is not in the dataset");
      }
    }
    constraint_groups = cfg.constraint->group_names;
  }

  const MlpShape shape{ds.dim, cfg.hidden1, cfg.hidden2};
  TrainedModel model;
  model.config = cfg;
  Params params = init_params<Scalar>(shape, cfg.seed);
  auto adam = AdamState<Scalar>::fresh(shape, cfg.learning_rate);
  MultiplierState multipliers;

  const auto x_train = feature_matrix(ds, split.train);
  const auto train_masks = group_masks(ds, split.train, constraint_groups);
  const auto x_val = feature_matrix(ds, split.validation);
  const auto y_val = labels_of(ds, split.validation);
  const auto val_masks = group_masks(ds, split.validation, constraint_groups);

  std::mt19937_64 shuffle_rng(cfg.seed ^ 0x9E3779B97F4A7C15ULL);
  std::vector<std::size_t> order(split.train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  Params best = params;
  double best_f1 = -1.0;
  const std::size_t n = order.size();
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double loss_sum = 0.0;
    std::size_t loss_count = 0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < n; start += cfg.batch_size, ++batch_index) {
      const std::size_t stop = std::min(n, start + cfg.batch_size);
      if (stop - start < cfg.batch_size && !cfg.use_last_partial_batch) break;
      const auto rows = std::span(order).subspan(start, stop - start);
      MatrixX<Scalar> xb(static_cast<Eigen::Index>(rows.size()), x_train.cols());
      std::vector<std::uint8_t> yb(rows.size());
      std::vector<std::vector<std::uint8_t>> mb(train_masks.size(),
                                                std::vector<std::uint8_t>(rows.size()));
      for (std::size_t r = 0; r < rows.size(); ++r) {
        xb.row(static_cast<Eigen::Index>(r)) = x_train.row(static_cast<Eigen::Index>(rows[r]));
        yb[r] = train_labels[rows[r]];
        for (std::size_t g = 0; g < train_masks.size(); ++g) mb[g][r] = train_masks[g][rows[r]];
      }

      const auto cache = forward(params, xb);
      const auto player =
          model_player_objective<Scalar>(cache.logits, yb, mb, cfg.constraint, multipliers);
      if (!std::isfinite(player.objective)) {
        throw NumericalError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                             std::to_string(batch_index));
      }
      loss_sum += static_cast<double>(player.bce) * static_cast<double>(rows.size());
      loss_count += rows.size();
      const auto grads = backward(params, cache, player.dlogits);
      try {
        adam_step(params, adam, grads);
      } catch (const NumericalError& e) {
        throw NumericalError(std::string(e.what()) + " at epoch " + std::to_string(epoch) +
                             ", batch " + std::to_string(batch_index));
      }
      if (cfg.constraint) {
        multipliers.ascend(player.exact, cfg.multiplier_learning_rate, cfg.multiplier_cap);
      }
      if (observer.on_step) observer.on_step(epoch, batch_index, params, multipliers);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_count > 0 ? loss_sum / static_cast<double>(loss_count) : 0.0;
    const auto val_logits = forward(params, x_val).logits;
    const auto val_pred = threshold(val_logits);
    const auto counts = confusion(val_pred, y_val);
    rec.validation_f1 = f1_precision_recall(counts).f1;
    rec.validation_mcc = mcc(counts);
    if (cfg.constraint) {
      auto vv = extreme_violations(rate_snapshot(val_pred, y_val, val_masks), *cfg.constraint);
      const auto proxies = proxy_violations<Scalar>(val_logits, y_val, val_masks, *cfg.constraint);
      for (std::size_t j = 0; j < kNumConstraints; ++j) {
        if (proxies.terms[j]) vv.proxy[j] = static_cast<double>(proxies.terms[j]->value);
      }
      rec.validation_violations = std::move(vv);
    }
    rec.multipliers = multipliers;
    rec.checkpoint = "epoch-" + std::to_string(epoch);
    if (rec.validation_f1 > best_f1) {
      best_f1 = rec.validation_f1;
      best = params;
    }
    model.history.push_back(std::move(rec));
  }

  model.selected_epoch = select_best_epoch(model.history);
  model.params = std::move(best);
  model.multipliers = multipliers;

  const auto chosen = predict(model.params, x_val).labels;
  if (std::all_of(chosen.begin(), chosen.end(), [&](auto p) { return p == chosen.front(); })) {
    model.warnings.push_back(
        "selected model predicts a single class on the whole validation split; the constraints "
        "may be too tight (convergence to a trivial unbiased solution)");
    std::cerr << "warning: " << model.warnings.back() << '\n';
  }
  return model;
}

}  // namespace fairtrain
