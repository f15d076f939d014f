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

#include "fairtrain/constraints.hpp"
#include "fairtrain/network.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

namespace fairtrain {
namespace {

using U8 = std::vector<std::uint8_t>;

VectorX<double> vec(std::initializer_list<double> v) {
  VectorX<double> out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

U8 thresholded(const VectorX<double>& z) {
  U8 p(static_cast<std::size_t>(z.size()));
  for (Eigen::Index i = 0; i < z.size(); ++i) p[static_cast<std::size_t>(i)] = z(i) >= 0.0;
  return p;
}

ConstraintConfig two_groups(double tau_fnr, double tau_fpr) {
  ConstraintConfig c;
  c.tau_fnr = tau_fnr;
  c.tau_fpr = tau_fpr;
  c.group_names = {"a", "b"};
  return c;
}

TEST(ExactRate, HandCountedCells) {
  const U8 labels{1, 1, 0, 0}, preds{0, 1, 1, 0}, all{1, 1, 1, 1};
  EXPECT_DOUBLE_EQ(*exact_rate(preds, labels, all, RateKind::fnr), 0.5);
  EXPECT_DOUBLE_EQ(*exact_rate(preds, labels, all, RateKind::fpr), 0.5);
  EXPECT_EQ(*exact_rate(labels, labels, all, RateKind::fnr), 0.0);
  EXPECT_EQ(*exact_rate(labels, labels, all, RateKind::fpr), 0.0);
}

TEST(ExactRate, EmptyDenominatorIsUndefined) {
  const U8 labels{1, 1, 0, 0}, preds{0, 1, 1, 0}, negatives{0, 0, 1, 1};
  EXPECT_FALSE(exact_rate(preds, labels, negatives, RateKind::fnr).has_value());
  EXPECT_DOUBLE_EQ(*exact_rate(preds, labels, negatives, RateKind::fpr), 0.5);
  EXPECT_THROW(exact_rate(preds, labels, U8{1, 1}, RateKind::fnr), DataError);
}

TEST(ExactRate, InvariantToUnmaskedRelabeling) {
  std::mt19937_64 rng(3);
  std::bernoulli_distribution coin(0.5);
  for (int t = 0; t < 200; ++t) {
    U8 labels(30), preds(30), mask(30);
    for (std::size_t i = 0; i < 30; ++i) {
      labels[i] = coin(rng);
      preds[i] = coin(rng);
      mask[i] = coin(rng);
    }
    const auto before = exact_rate(preds, labels, mask, RateKind::fnr);
    for (std::size_t i = 0; i < 30; ++i) {
      if (!mask[i]) {
        labels[i] = coin(rng);
        preds[i] = coin(rng);
      }
    }
    EXPECT_EQ(before, exact_rate(preds, labels, mask, RateKind::fnr));
  }
}

TEST(ProxyRate, DeadZoneAndMargin) {
  const U8 pos{1, 1, 1}, all{1, 1, 1};
  EXPECT_EQ(proxy_rate<double>(vec({1.0, 2.0, 5.0}), pos, all, RateKind::fnr)->value, 0.0);
  const auto at_margin = proxy_rate<double>(vec({0.0}), U8{1}, U8{1}, RateKind::fnr);
  EXPECT_EQ(at_margin->value, 1.0);
  EXPECT_EQ(at_margin->grad(0), -1.0);
  const auto fpr = proxy_rate<double>(vec({-2.0, 0.5, 3.0}), U8{0, 0, 1}, all, RateKind::fpr);
  EXPECT_DOUBLE_EQ(fpr->value, 0.75);  // (0 + 1.5) / 2
  EXPECT_EQ(fpr->grad(0), 0.0);
  EXPECT_EQ(fpr->grad(1), 0.5);
  EXPECT_EQ(fpr->grad(2), 0.0);
  EXPECT_FALSE(proxy_rate<double>(vec({1.0}), U8{0}, U8{1}, RateKind::fnr).has_value());
}

TEST(ProxyRate, SubgradientAtKinkIsZero) {
  const auto r = proxy_rate<double>(vec({1.0, -1.0}), U8{1, 0}, U8{1, 1}, RateKind::fnr);
  EXPECT_EQ(r->grad(0), 0.0);
  const auto f = proxy_rate<double>(vec({1.0, -1.0}), U8{1, 0}, U8{1, 1}, RateKind::fpr);
  EXPECT_EQ(f->grad(1), 0.0);
}

TEST(ProxyRate, BoundsSandwichExactRate) {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> normal(0.0, 2.0);
  std::bernoulli_distribution coin(0.5);
  for (int t = 0; t < 2000; ++t) {
    const std::size_t n = 1 + t % 40;
    VectorX<double> z(static_cast<Eigen::Index>(n));
    U8 labels(n), mask(n);
    for (std::size_t i = 0; i < n; ++i) {
      z(static_cast<Eigen::Index>(i)) = t % 7 == 0 ? std::round(normal(rng)) : normal(rng);
      labels[i] = coin(rng);
      mask[i] = coin(rng);
    }
    const auto preds = thresholded(z);
    for (RateKind kind : {RateKind::fnr, RateKind::fpr}) {
      const auto exact = exact_rate(preds, labels, mask, kind);
      const auto upper = proxy_rate<double>(z, labels, mask, kind);
      const auto lower = proxy_rate_lower_bound<double>(z, labels, mask, kind);
      ASSERT_EQ(exact.has_value(), upper.has_value());
      ASSERT_EQ(exact.has_value(), lower.has_value());
      if (!exact) continue;
      EXPECT_GE(upper->value, *exact - 1e-12);
      EXPECT_LE(lower->value, *exact + 1e-12);
    }
  }
}

TEST(ProxyRate, SaturatedLimitMatchesExactWithoutMisses) {
  // With the unit-margin hinge, a missed positive keeps contributing 1 + c|z|,
  // so the bound tightens as c grows only when every masked positive is hit.
  std::mt19937_64 rng(5);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int t = 0; t < 200; ++t) {
    VectorX<double> z(20);
    U8 labels(20), all(20, 1);
    for (Eigen::Index i = 0; i < 20; ++i) {
      labels[static_cast<std::size_t>(i)] = i % 2;
      double v = normal(rng);
      if (std::abs(v) < 1e-3) v = 1e-3;
      z(i) = labels[static_cast<std::size_t>(i)] ? std::abs(v) : v;
    }
    const VectorX<double> scaled = 1e3 * z;
    const auto exact = exact_rate(thresholded(scaled), labels, all, RateKind::fnr);
    EXPECT_NEAR(proxy_rate<double>(scaled, labels, all, RateKind::fnr)->value, *exact, 1e-9);
  }
}

TEST(ProxyRate, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(17);
  std::normal_distribution<double> normal(0.0, 1.5);
  std::bernoulli_distribution coin(0.5);
  const double h = 1e-6;
  for (int t = 0; t < 300; ++t) {
    VectorX<double> z(12);
    U8 labels(12), mask(12);
    for (Eigen::Index i = 0; i < 12; ++i) {
      double v = normal(rng);
      while (std::abs(1.0 - v) < 1e-3 || std::abs(1.0 + v) < 1e-3) v = normal(rng);
      z(i) = v;
      labels[static_cast<std::size_t>(i)] = coin(rng);
      mask[static_cast<std::size_t>(i)] = coin(rng);
    }
    for (RateKind kind : {RateKind::fnr, RateKind::fpr}) {
      for (bool upper : {true, false}) {
        auto eval = [&](const VectorX<double>& x) {
          return upper ? proxy_rate<double>(x, labels, mask, kind)
                       : proxy_rate_lower_bound<double>(x, labels, mask, kind);
        };
        const auto r = eval(z);
        if (!r) continue;
        for (Eigen::Index i = 0; i < z.size(); ++i) {
          VectorX<double> zp = z, zm = z;
          zp(i) += h;
          zm(i) -= h;
          const double fd = (eval(zp)->value - eval(zm)->value) / (2 * h);
          EXPECT_NEAR(r->grad(i), fd, 1e-6);
        }
      }
    }
  }
}

RateSnapshot hand_snapshot() {
  RateSnapshot s;
  s.overall_fnr = 0.2;
  s.overall_fpr = 0.1;
  s.group_fnr = {0.3, 0.1};
  s.group_fpr = {0.1, 0.1};
  s.group_positives = {10, 10};
  s.group_negatives = {10, 10};
  return s;
}

TEST(ExtremeViolations, HandArithmetic) {
  const auto v = extreme_violations(hand_snapshot(), two_groups(0.05, 0.0));
  EXPECT_NEAR(*v.exact[kMaxFnrExcess], 0.05, 1e-15);
  EXPECT_NEAR(*v.exact[kMinFnrShortfall], 0.05, 1e-15);
  EXPECT_EQ(*v.exact[kMaxFprExcess], 0.0);
  EXPECT_EQ(*v.exact[kMinFprShortfall], 0.0);
  const auto g = per_group_violations(hand_snapshot(), two_groups(0.05, 0.0));
  ASSERT_EQ(g.size(), 4u);
  EXPECT_NEAR(*g[0], 0.05, 1e-15);  // FNR, group a
  EXPECT_NEAR(*g[2], 0.05, 1e-15);  // FNR, group b
}

TEST(ExtremeViolations, EqualRatesArePureSlackAndTausAreEchoed) {
  auto s = hand_snapshot();
  s.group_fnr = {0.2, 0.2};
  const auto v = extreme_violations(s, two_groups(0.02, 0.03));
  EXPECT_EQ(v.tau_fnr, 0.02);
  EXPECT_EQ(v.tau_fpr, 0.03);
  EXPECT_DOUBLE_EQ(*v.exact[kMaxFnrExcess], -0.02);
  EXPECT_DOUBLE_EQ(*v.exact[kMinFnrShortfall], -0.02);
  EXPECT_DOUBLE_EQ(*v.exact[kMaxFprExcess], -0.03);
  EXPECT_DOUBLE_EQ(*v.exact[kMinFprShortfall], -0.03);
  for (const auto& e : per_group_violations(s, two_groups(0.0, 0.0))) EXPECT_EQ(*e, 0.0);
}

TEST(ExtremeViolations, UndefinedGroupRatesAreSkippedOrDeactivate) {
  auto s = hand_snapshot();
  s.group_fnr = {std::nullopt, 0.1};
  s.group_positives = {0, 10};
  auto v = extreme_violations(s, two_groups(0.0, 0.0));
  EXPECT_NEAR(*v.exact[kMaxFnrExcess], -0.1, 1e-15);
  EXPECT_NEAR(*v.exact[kMinFnrShortfall], 0.1, 1e-15);
  s.group_fnr = {std::nullopt, std::nullopt};
  v = extreme_violations(s, two_groups(0.0, 0.0));
  EXPECT_FALSE(v.exact[kMaxFnrExcess].has_value());
  EXPECT_FALSE(v.exact[kMinFnrShortfall].has_value());
  EXPECT_TRUE(v.exact[kMaxFprExcess].has_value());
  const auto g = per_group_violations(s, two_groups(0.0, 0.0));
  EXPECT_FALSE(g[0].has_value());
  EXPECT_TRUE(g[1].has_value());
}

TEST(ExtremeViolations, MinimumSupportExcludesSmallGroups) {
  auto s = hand_snapshot();
  s.group_positives = {3, 10};
  auto cfg = two_groups(0.0, 0.0);
  cfg.min_group_support = 5;
  const auto v = extreme_violations(s, cfg);
  EXPECT_NEAR(*v.exact[kMaxFnrExcess], -0.1, 1e-15);  // only group b (0.1) remains
  const auto g = per_group_violations(s, cfg);
  EXPECT_FALSE(g[0].has_value());
  EXPECT_TRUE(g[1].has_value());
}

TEST(ExtremeViolations, MatchesPerGroupFormOnRandomSnapshots) {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> groups(1, 6);
  for (int t = 0; t < 5000; ++t) {
    RateSnapshot s;
    s.overall_fnr = unit(rng);
    s.overall_fpr = unit(rng);
    const int n = groups(rng);
    for (int g = 0; g < n; ++g) {
      s.group_fnr.push_back(unit(rng) < 0.15 ? std::nullopt : std::optional(unit(rng)));
      s.group_fpr.push_back(unit(rng) < 0.15 ? std::nullopt : std::optional(unit(rng)));
      s.group_positives.push_back(s.group_fnr.back() ? 5 : 0);
      s.group_negatives.push_back(s.group_fpr.back() ? 5 : 0);
    }
    const auto cfg = ConstraintConfig{0.2 * unit(rng), 0.2 * unit(rng), {"g"}, 1};
    const auto v = extreme_violations(s, cfg);
    const auto per = per_group_violations(s, cfg);
    for (std::size_t k = 0; k < 2; ++k) {
      std::optional<double> worst;
      for (std::size_t i = k; i < per.size(); i += 2) {
        if (per[i]) worst = worst ? std::max(*worst, *per[i]) : *per[i];
      }
      const std::size_t hi = k == 0 ? kMaxFnrExcess : kMaxFprExcess;
      ASSERT_EQ(worst.has_value(), v.exact[hi].has_value());
      if (worst) {
        EXPECT_EQ(*worst, std::max(*v.exact[hi], *v.exact[hi + 1]));
      }
    }
  }
}

TEST(ProxyViolations, UpperBoundExactViolations) {
  std::mt19937_64 rng(23);
  std::normal_distribution<double> normal(0.0, 1.5);
  std::bernoulli_distribution coin(0.5);
  std::size_t active = 0;
  for (int t = 0; t < 2000; ++t) {
    const std::size_t n = 4 + t % 60;
    VectorX<double> z(static_cast<Eigen::Index>(n));
    U8 labels(n);
    std::vector<U8> masks(3, U8(n));
    for (std::size_t i = 0; i < n; ++i) {
      z(static_cast<Eigen::Index>(i)) = normal(rng);
      labels[i] = coin(rng);
      for (auto& m : masks) m[i] = coin(rng);
    }
    auto cfg = two_groups(0.02, 0.03);
    cfg.min_group_support = 1 + t % 3;
    const auto exact = extreme_violations(rate_snapshot(thresholded(z), labels, masks), cfg);
    const auto proxy = proxy_violations<double>(z, labels, masks, cfg);
    for (std::size_t j = 0; j < kNumConstraints; ++j) {
      ASSERT_EQ(exact.exact[j].has_value(), proxy.terms[j].has_value());
      if (!exact.exact[j]) continue;
      ++active;
      EXPECT_GE(proxy.terms[j]->value, *exact.exact[j] - 1e-12);
    }
  }
  EXPECT_GT(active, 4000u);
}

TEST(ProxyViolations, GradientRoutesToExtremeGroup) {
  // Group 0 holds the worse positive, so only its members and the overall
  // lower bound receive gradient in the FNR excess term.
  const VectorX<double> z = vec({-0.5, 0.5, 2.0, -3.0});
  const U8 labels{1, 1, 1, 0};
  const std::vector<U8> masks{{1, 0, 0, 1}, {0, 1, 1, 1}};
  const auto p = proxy_violations<double>(z, labels, masks, two_groups(0.0, 0.0));
  const auto& excess = *p.terms[kMaxFnrExcess];
  // Upper bound of group 0: 1.5. Overall lower bound: 1 - (0.5 + 1.5 + 3) / 3.
  EXPECT_NEAR(excess.value, 1.5 - (1.0 - 5.0 / 3.0), 1e-12);
  EXPECT_NEAR(excess.grad(0), -1.0 + 1.0 / 3.0, 1e-12);
  EXPECT_NEAR(excess.grad(1), 1.0 / 3.0, 1e-12);
  EXPECT_NEAR(excess.grad(2), 1.0 / 3.0, 1e-12);
  EXPECT_EQ(excess.grad(3), 0.0);
}

TEST(ProxyViolations, TiesGoToLowestGroupIndex) {
  const VectorX<double> z = vec({0.0, 0.0, -2.0});
  const U8 labels{1, 1, 0};
  const std::vector<U8> masks{{1, 0, 1}, {0, 1, 1}};
  const auto p = proxy_violations<double>(z, labels, masks, two_groups(0.0, 0.0));
  EXPECT_NE(p.terms[kMaxFnrExcess]->grad(0), p.terms[kMaxFnrExcess]->grad(1));
  EXPECT_LT(p.terms[kMaxFnrExcess]->grad(0), p.terms[kMaxFnrExcess]->grad(1));
}

TEST(ConstraintConfig, Validation) {
  EXPECT_NO_THROW(two_groups(0.02, 0.03).validate());
  EXPECT_THROW(two_groups(-0.1, 0.0).validate(), ConfigError);
  EXPECT_THROW(two_groups(0.0, 1.5).validate(), ConfigError);
  ConstraintConfig empty;
  EXPECT_THROW(empty.validate(), ConfigError);
  auto zero_support = two_groups(0.0, 0.0);
  zero_support.min_group_support = 0;
  EXPECT_THROW(zero_support.validate(), ConfigError);
}

}  // namespace
}  // namespace fairtrain
