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

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fairtrain/constraints.hpp"
#include "fairtrain/error.hpp"

namespace fairtrain {

struct ConfusionCounts {
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t tn = 0;
  std::uint64_t fn = 0;

  bool operator==(const ConfusionCounts&) const = default;
  std::uint64_t total() const { return tp + fp + tn + fn; }
};

inline ConfusionCounts confusion(std::span<const std::uint8_t> predictions,
                                 std::span<const std::uint8_t> labels,
                                 std::span<const std::uint8_t> mask = {}) {
  if (predictions.size() != labels.size() || (!mask.empty() && mask.size() != labels.size())) {
    throw DataError("confusion: predictions, labels, and mask lengths differ");
  }
  ConfusionCounts c;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (!mask.empty() && !mask[i]) continue;
    const bool p = predictions[i] != 0;
    const bool y = labels[i] != 0;
    if (p && y) ++c.tp;
    else if (p) ++c.fp;
    else if (y) ++c.fn;
    else ++c.tn;
  }
  return c;
}

struct PrecisionRecallF1 {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

/// Any ratio whose denominator is zero is reported as 0.
inline PrecisionRecallF1 f1_precision_recall(const ConfusionCounts& c) {
  auto ratio = [](double num, double den) { return den > 0.0 ? num / den : 0.0; };
  PrecisionRecallF1 r;
  r.precision = ratio(static_cast<double>(c.tp), static_cast<double>(c.tp + c.fp));
  r.recall = ratio(static_cast<double>(c.tp), static_cast<double>(c.tp + c.fn));
  r.f1 = ratio(2.0 * r.precision * r.recall, r.precision + r.recall);
  return r;
}

/// Matthews correlation coefficient; 0 when any marginal is empty.
inline double mcc(const ConfusionCounts& c) {
  using wide = long double;
  const wide tp = c.tp, fp = c.fp, tn = c.tn, fn = c.fn;
  const wide den = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn);
  if (den <= 0) return 0.0;
  const wide value = (tp * tn - fp * fn) / std::sqrt(den);
  return static_cast<double>(std::clamp(value, wide{-1}, wide{1}));
}

struct OverallMetrics {
  double f1 = 0.0;
  double mcc = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  std::optional<double> fnr;
  std::optional<double> fpr;
  ConfusionCounts counts;
};

struct GroupMetrics {
  std::string name;
  std::optional<double> fnr;
  std::optional<double> fpr;
  double mcc = 0.0;
  std::uint64_t positives = 0;
  std::uint64_t negatives = 0;
};

/// One audited model: overall metrics, per-group rates, and the equality differences.
struct BiasReport {
  OverallMetrics overall;
  std::vector<GroupMetrics> groups;
  double fned = 0.0;
  double fped = 0.0;
  double total_bias = 0.0;
};

/// FNED = sum_i |FNR - FNR_Gi| (FPED analogous), skipping groups whose rate is undefined.
inline BiasReport bias_report(std::span<const std::uint8_t> predictions,
                              std::span<const std::uint8_t> labels,
                              std::span<const std::string> group_names,
                              std::span<const std::vector<std::uint8_t>> group_masks) {
  if (predictions.size() != labels.size()) throw DataError("bias_report: length mismatch");
  if (group_names.size() != group_masks.size()) {
    throw DataError("bias_report: group names and masks differ in count");
  }
  for (const auto& m : group_masks) {
    if (m.size() != labels.size()) throw DataError("bias_report: group mask length mismatch");
  }
  BiasReport r;
  r.overall.counts = confusion(predictions, labels);
  const auto prf = f1_precision_recall(r.overall.counts);
  r.overall.f1 = prf.f1;
  r.overall.precision = prf.precision;
  r.overall.recall = prf.recall;
  r.overall.mcc = mcc(r.overall.counts);
  const auto snap = rate_snapshot(predictions, labels, group_masks);
  r.overall.fnr = snap.overall_fnr;
  r.overall.fpr = snap.overall_fpr;
  for (std::size_t g = 0; g < group_names.size(); ++g) {
    GroupMetrics gm;
    gm.name = group_names[g];
    gm.fnr = snap.group_fnr[g];
    gm.fpr = snap.group_fpr[g];
    gm.mcc = mcc(confusion(predictions, labels, group_masks[g]));
    gm.positives = snap.group_positives[g];
    gm.negatives = snap.group_negatives[g];
    if (gm.fnr && r.overall.fnr) r.fned += std::abs(*r.overall.fnr - *gm.fnr);
    if (gm.fpr && r.overall.fpr) r.fped += std::abs(*r.overall.fpr - *gm.fpr);
    r.groups.push_back(std::move(gm));
  }
  r.total_bias = r.fned + r.fped;
  return r;
}

/// Percentage decrease of total bias; nullopt (not applicable) when the baseline is 0.
inline std::optional<double> bias_decrease(double baseline_total, double constrained_total) {
  if (!(baseline_total > 0.0)) return std::nullopt;
  return 100.0 * (1.0 - constrained_total / baseline_total);
}

/// Upper tail of the chi-squared distribution with one degree of freedom.
inline double chi2_sf_1df(double statistic) {
  if (!(statistic > 0.0)) return 1.0;
  return std::erfc(std::sqrt(statistic / 2.0));
}

enum class McNemarVariant { chi2_corrected, exact_binomial };

struct McNemarResult {
  std::uint64_t both_correct = 0;
  std::uint64_t only_a_correct = 0;
  std::uint64_t only_b_correct = 0;
  std::uint64_t both_wrong = 0;
  double statistic = 0.0;
  double p_value = 1.0;
  McNemarVariant variant = McNemarVariant::chi2_corrected;

  std::uint64_t total() const { return both_correct + only_a_correct + only_b_correct + both_wrong; }
};

namespace detail {

/// Two-sided exact binomial p-value for the discordant pairs, p = 0.5.
inline double mcnemar_exact_p(std::uint64_t b, std::uint64_t c) {
  const std::uint64_t n = b + c;
  const std::uint64_t k = std::min(b, c);
  const double log_half_n = static_cast<double>(n) * std::log(0.5);
  const double lgn = std::lgamma(static_cast<double>(n) + 1.0);
  double tail = 0.0;
  for (std::uint64_t i = 0; i <= k; ++i) {
    const double x = static_cast<double>(i);
    tail += std::exp(lgn - std::lgamma(x + 1.0) - std::lgamma(static_cast<double>(n) - x + 1.0) +
                     log_half_n);
  }
  return std::min(1.0, 2.0 * tail);
}

}  // namespace detail

/// McNemar's test from the four contingency cells. The default is the
/// continuity-corrected chi-squared statistic (|b - c| - 1)^2 / (b + c).
inline McNemarResult mcnemar_from_table(std::uint64_t both_correct, std::uint64_t only_a_correct,
                                        std::uint64_t only_b_correct, std::uint64_t both_wrong,
                                        McNemarVariant variant = McNemarVariant::chi2_corrected) {
  McNemarResult r{both_correct, only_a_correct, only_b_correct, both_wrong, 0.0, 1.0, variant};
  const std::uint64_t b = only_a_correct;
  const std::uint64_t c = only_b_correct;
  if (b + c == 0) return r;
  const double diff = std::abs(static_cast<double>(b) - static_cast<double>(c)) - 1.0;
  r.statistic = std::max(diff, 0.0) * std::max(diff, 0.0) / static_cast<double>(b + c);
  r.p_value = variant == McNemarVariant::chi2_corrected ? chi2_sf_1df(r.statistic)
                                                        : detail::mcnemar_exact_p(b, c);
  return r;
}

inline McNemarResult mcnemar(std::span<const std::uint8_t> predictions_a,
                             std::span<const std::uint8_t> predictions_b,
                             std::span<const std::uint8_t> labels,
                             McNemarVariant variant = McNemarVariant::chi2_corrected) {
  if (predictions_a.size() != labels.size() || predictions_b.size() != labels.size()) {
    throw DataError("mcnemar: prediction and label lengths differ");
  }
  if (labels.empty()) throw DataError("mcnemar: empty evaluation set");
  std::uint64_t cells[2][2] = {{0, 0}, {0, 0}};
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool a_ok = (predictions_a[i] != 0) == (labels[i] != 0);
    const bool b_ok = (predictions_b[i] != 0) == (labels[i] != 0);
    ++cells[a_ok ? 0 : 1][b_ok ? 0 : 1];
  }
  return mcnemar_from_table(cells[0][0], cells[0][1], cells[1][0], cells[1][1], variant);
}

}  // namespace fairtrain
