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

// Group error rates (exact and hinge proxy) and the group-deviation
// constraint sets: the 2N per-group form and the equivalent 4-constraint
// worst-case form used during training.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fairtrain/error.hpp"

namespace fairtrain {

enum class RateKind { fnr, fpr };

using Mask = std::span<const std::uint8_t>;

struct ConstraintConfig {
  double tau_fnr = 0.0;
  double tau_fpr = 0.0;
  std::vector<std::string> group_names;
  /// A group rate enters the max/min only when its denominator count reaches this.
  std::size_t min_group_support = 1;

  bool operator==(const ConstraintConfig&) const = default;

  void validate() const {
    if (!(tau_fnr >= 0.0 && tau_fnr <= 1.0) || !(tau_fpr >= 0.0 && tau_fpr <= 1.0)) {
      throw ConfigError("constraint taus must lie in [0,1]");
    }
    if (group_names.empty()) throw ConfigError("constraint group list is empty");
    if (min_group_support == 0) throw ConfigError("min_group_support must be at least 1");
  }
};

namespace detail {

inline void check_lengths(std::size_t a, std::size_t b, std::size_t c) {
  if (a != b || b != c) throw DataError("rate inputs have mismatched lengths");
}

/// Rate-kind specific filter: FNR is measured over actual positives, FPR over actual negatives.
inline bool in_denominator(std::uint8_t label, RateKind kind) {
  return kind == RateKind::fnr ? label == 1 : label == 0;
}

}  // namespace detail

/// FNR = FN / (FN + TP), FPR = FP / (FP + TN) over masked examples; nullopt on an empty denominator.
inline std::optional<double> exact_rate(std::span<const std::uint8_t> predictions,
                                        std::span<const std::uint8_t> labels, Mask mask,
                                        RateKind kind) {
  detail::check_lengths(predictions.size(), labels.size(), mask.size());
  std::size_t errors = 0;
  std::size_t support = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (!mask[i] || !detail::in_denominator(labels[i], kind)) continue;
    ++support;
    if ((predictions[i] != 0) != (labels[i] != 0)) ++errors;
  }
  if (support == 0) return std::nullopt;
  return static_cast<double>(errors) / static_cast<double>(support);
}

template <typename T>
struct ProxyRate {
  T value{};
  Eigen::Matrix<T, Eigen::Dynamic, 1> grad;  // d value / d logits
};

/// Hinge upper bound on a rate: mean of max(0, 1 - z) over masked positives
/// (FNR) or max(0, 1 + z) over masked negatives (FPR). Subgradient 0 at the
/// kink. nullopt means the constraint is inactive for this batch.
template <typename T>
std::optional<ProxyRate<T>> proxy_rate(const Eigen::Matrix<T, Eigen::Dynamic, 1>& logits,
                                       std::span<const std::uint8_t> labels, Mask mask,
                                       RateKind kind) {
  detail::check_lengths(static_cast<std::size_t>(logits.size()), labels.size(), mask.size());
  std::size_t support = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (mask[i] && detail::in_denominator(labels[i], kind)) ++support;
  }
  if (support == 0) return std::nullopt;
  ProxyRate<T> out;
  out.grad = Eigen::Matrix<T, Eigen::Dynamic, 1>::Zero(logits.size());
  const T inv = T{1} / static_cast<T>(support);
  const T sign = kind == RateKind::fnr ? T{-1} : T{1};
  T total{0};
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (!mask[i] || !detail::in_denominator(labels[i], kind)) continue;
    const T margin = T{1} + sign * logits(static_cast<Eigen::Index>(i));
    if (margin > T{0}) {
      total += margin;
      out.grad(static_cast<Eigen::Index>(i)) = sign * inv;
    }
  }
  out.value = total * inv;
  return out;
}

/// Overall and per-group exact rates for one set of predictions.
struct RateSnapshot {
  std::optional<double> overall_fnr;
  std::optional<double> overall_fpr;
  std::vector<std::optional<double>> group_fnr;
  std::vector<std::optional<double>> group_fpr;
  std::vector<std::size_t> group_positives;
  std::vector<std::size_t> group_negatives;

  std::size_t num_groups() const { return group_fnr.size(); }
  const std::vector<std::optional<double>>& group_rates(RateKind k) const {
    return k == RateKind::fnr ? group_fnr : group_fpr;
  }
  const std::optional<double>& overall(RateKind k) const {
    return k == RateKind::fnr ? overall_fnr : overall_fpr;
  }
  std::size_t group_support(RateKind k, std::size_t g) const {
    return k == RateKind::fnr ? group_positives[g] : group_negatives[g];
  }
  /// Group rates with those below `min_support` masked out.
  std::vector<std::optional<double>> supported_group_rates(RateKind k,
                                                           std::size_t min_support) const {
    auto rates = group_rates(k);
    for (std::size_t g = 0; g < rates.size(); ++g) {
      if (g < group_positives.size() && group_support(k, g) < min_support) rates[g].reset();
    }
    return rates;
  }
};

inline RateSnapshot rate_snapshot(std::span<const std::uint8_t> predictions,
                                  std::span<const std::uint8_t> labels,
                                  std::span<const std::vector<std::uint8_t>> group_masks) {
  const std::vector<std::uint8_t> all(labels.size(), 1);
  RateSnapshot s;
  s.overall_fnr = exact_rate(predictions, labels, all, RateKind::fnr);
  s.overall_fpr = exact_rate(predictions, labels, all, RateKind::fpr);
  for (const auto& mask : group_masks) {
    s.group_fnr.push_back(exact_rate(predictions, labels, mask, RateKind::fnr));
    s.group_fpr.push_back(exact_rate(predictions, labels, mask, RateKind::fpr));
    std::size_t pos = 0;
    std::size_t neg = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (!mask[i]) continue;
      labels[i] ? ++pos : ++neg;
    }
    s.group_positives.push_back(pos);
    s.group_negatives.push_back(neg);
  }
  return s;
}

/// Index into the four worst-case constraints.
enum ConstraintIndex : std::size_t {
  kMaxFnrExcess = 0,
  kMinFnrShortfall = 1,
  kMaxFprExcess = 2,
  kMinFprShortfall = 3,
};
inline constexpr std::size_t kNumConstraints = 4;

/// Worst-case violations; negative values are slack, nullopt is inactive.
struct ViolationVector {
  std::array<std::optional<double>, kNumConstraints> exact;
  std::array<std::optional<double>, kNumConstraints> proxy;
  double tau_fnr = 0.0;
  double tau_fpr = 0.0;
};

namespace detail {

/// Lowest index attaining the max (or min) among defined entries.
template <typename Rates, typename Better>
std::optional<std::size_t> extreme_index(const Rates& rates, Better better) {
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < rates.size(); ++i) {
    if (!rates[i]) continue;
    if (!best || better(*rates[i], *rates[*best])) best = i;
  }
  return best;
}

}  // namespace detail

/// max_i R_Gi - R - tau and R - min_i R_Gi - tau for R in {FNR, FPR}.
inline ViolationVector extreme_violations(const RateSnapshot& s, const ConstraintConfig& cfg) {
  ViolationVector v;
  v.tau_fnr = cfg.tau_fnr;
  v.tau_fpr = cfg.tau_fpr;
  for (RateKind kind : {RateKind::fnr, RateKind::fpr}) {
    const auto& overall = s.overall(kind);
    const double tau = kind == RateKind::fnr ? cfg.tau_fnr : cfg.tau_fpr;
    const std::size_t hi = kind == RateKind::fnr ? kMaxFnrExcess : kMaxFprExcess;
    const auto rates = s.supported_group_rates(kind, cfg.min_group_support);
    const auto imax = detail::extreme_index(rates, [](double a, double b) { return a > b; });
    const auto imin = detail::extreme_index(rates, [](double a, double b) { return a < b; });
    if (!overall || !imax) continue;
    v.exact[hi] = (*rates[*imax] - *overall) - tau;
    v.exact[hi + 1] = (*overall - *rates[*imin]) - tau;
  }
  return v;
}

/// Per group i: |FNR - FNR_Gi| - tau_fnr and |FPR - FPR_Gi| - tau_fpr, interleaved
/// (FNR_G1, FPR_G1, FNR_G2, ...). Entries with an undefined rate are nullopt.
inline std::vector<std::optional<double>> per_group_violations(const RateSnapshot& s,
                                                         const ConstraintConfig& cfg) {
  std::vector<std::optional<double>> out;
  out.reserve(2 * s.num_groups());
  for (std::size_t i = 0; i < s.num_groups(); ++i) {
    for (RateKind kind : {RateKind::fnr, RateKind::fpr}) {
      const auto& overall = s.overall(kind);
      const auto& group = s.group_rates(kind)[i];
      const bool supported =
          i >= s.group_positives.size() || s.group_support(kind, i) >= cfg.min_group_support;
      const double tau = kind == RateKind::fnr ? cfg.tau_fnr : cfg.tau_fpr;
      if (overall && group && supported) {
        out.emplace_back(std::abs(*overall - *group) - tau);
      } else {
        out.emplace_back(std::nullopt);
      }
    }
  }
  return out;
}

/// Hinge lower bound on a rate: 1 minus the hinge upper bound of its
/// complement (TPR = 1 - FNR over positives, TNR = 1 - FPR over negatives).
template <typename T>
std::optional<ProxyRate<T>> proxy_rate_lower_bound(
    const Eigen::Matrix<T, Eigen::Dynamic, 1>& logits, std::span<const std::uint8_t> labels,
    Mask mask, RateKind kind) {
  detail::check_lengths(static_cast<std::size_t>(logits.size()), labels.size(), mask.size());
  std::size_t support = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (mask[i] && detail::in_denominator(labels[i], kind)) ++support;
  }
  if (support == 0) return std::nullopt;
  ProxyRate<T> out;
  out.grad = Eigen::Matrix<T, Eigen::Dynamic, 1>::Zero(logits.size());
  const T inv = T{1} / static_cast<T>(support);
  // Correct decisions: z >= 0 on positives, z < 0 on negatives.
  const T sign = kind == RateKind::fnr ? T{1} : T{-1};
  T total{0};
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (!mask[i] || !detail::in_denominator(labels[i], kind)) continue;
    const T margin = T{1} + sign * logits(static_cast<Eigen::Index>(i));
    if (margin > T{0}) {
      total += margin;
      out.grad(static_cast<Eigen::Index>(i)) = -sign * inv;
    }
  }
  out.value = T{1} - total * inv;
  return out;
}

/// Differentiable counterpart of extreme_violations on one batch. Each term
/// upper-bounds its exact violation: the rate entering with a plus sign uses
/// the hinge upper bound, the one entering with a minus sign uses the hinge
/// lower bound. The extreme group is picked by its bound (lowest index on
/// ties) and receives the whole gradient.
template <typename T>
struct ProxyViolations {
  std::array<std::optional<ProxyRate<T>>, kNumConstraints> terms;
};

template <typename T>
ProxyViolations<T> proxy_violations(const Eigen::Matrix<T, Eigen::Dynamic, 1>& logits,
                                    std::span<const std::uint8_t> labels,
                                    std::span<const std::vector<std::uint8_t>> group_masks,
                                    const ConstraintConfig& cfg) {
  ProxyViolations<T> out;
  const std::vector<std::uint8_t> all(labels.size(), 1);
  for (RateKind kind : {RateKind::fnr, RateKind::fpr}) {
    const std::size_t hi = kind == RateKind::fnr ? kMaxFnrExcess : kMaxFprExcess;
    const T tau = static_cast<T>(kind == RateKind::fnr ? cfg.tau_fnr : cfg.tau_fpr);
    const auto overall_upper = proxy_rate<T>(logits, labels, all, kind);
    const auto overall_lower = proxy_rate_lower_bound<T>(logits, labels, all, kind);
    if (!overall_upper) continue;
    std::vector<std::optional<ProxyRate<T>>> upper;
    std::vector<std::optional<ProxyRate<T>>> lower;
    std::vector<std::optional<T>> upper_values;
    std::vector<std::optional<T>> lower_values;
    for (const auto& mask : group_masks) {
      std::size_t support = 0;
      for (std::size_t i = 0; i < labels.size(); ++i) {
        if (mask[i] && detail::in_denominator(labels[i], kind)) ++support;
      }
      if (support < cfg.min_group_support) {
        upper.emplace_back(std::nullopt);
        lower.emplace_back(std::nullopt);
      } else {
        upper.push_back(proxy_rate<T>(logits, labels, mask, kind));
        lower.push_back(proxy_rate_lower_bound<T>(logits, labels, mask, kind));
      }
      upper_values.push_back(upper.back() ? std::optional<T>(upper.back()->value) : std::nullopt);
      lower_values.push_back(lower.back() ? std::optional<T>(lower.back()->value) : std::nullopt);
    }
    const auto imax = detail::extreme_index(upper_values, [](T a, T b) { return a > b; });
    const auto imin = detail::extreme_index(lower_values, [](T a, T b) { return a < b; });
    if (!imax) continue;
    ProxyRate<T> excess;
    excess.value = (upper[*imax]->value - overall_lower->value) - tau;
    excess.grad = upper[*imax]->grad - overall_lower->grad;
    ProxyRate<T> shortfall;
    shortfall.value = (overall_upper->value - lower[*imin]->value) - tau;
    shortfall.grad = overall_upper->grad - lower[*imin]->grad;
    out.terms[hi] = std::move(excess);
    out.terms[hi + 1] = std::move(shortfall);
  }
  return out;
}

}  // namespace fairtrain
