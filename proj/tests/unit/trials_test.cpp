// Copyright 2026 The pce-cal Authors
// SPDX-License-Identifier: Apache-2.0

#include "pcecal/trials.hpp"

#include <cmath>

#include "doctest.h"
#include "pcecal/error.hpp"
#include "pcecal/metrics.hpp"
#include "test_support.hpp"

using namespace pcecal;

TEST_CASE("paired t-test example") {
  const std::vector<double> a{0.11, 0.22, 0.33};
  const std::vector<double> b{0.10, 0.20, 0.30};
  const auto t = paired_t_test(a, b);
  CHECK(t.n == 3);
  CHECK(t.mean_difference == doctest::Approx(0.02));
  CHECK(t.std_difference == doctest::Approx(0.01));
  REQUIRE(t.t_statistic.has_value());
  CHECK(*t.t_statistic == doctest::Approx(2.0 * std::sqrt(3.0)).epsilon(1e-9));
  // Two-sided p for t = 2 sqrt(3) with 2 dof: 1 - t / sqrt(t^2 + 2).
  const double tv = 2.0 * std::sqrt(3.0);
  CHECK(*t.p_value == doctest::Approx(1.0 - tv / std::sqrt(tv * tv + 2.0)).epsilon(1e-9));
  CHECK(!t.degenerate);
}

TEST_CASE("student t p-value against the one-dof closed form") {
  // With one degree of freedom the t distribution is Cauchy.
  const std::vector<double> a{1.0, 3.0};
  const std::vector<double> b{0.0, 0.0};
  const auto t = paired_t_test(a, b);
  const double tv = *t.t_statistic;
  CHECK(tv == doctest::Approx(2.0 / (std::sqrt(2.0) / std::sqrt(2.0))));
  CHECK(*t.p_value == doctest::Approx(1.0 - 2.0 / M_PI * std::atan(tv)).epsilon(1e-9));
}

TEST_CASE("zero variance differences are degenerate") {
  const std::vector<double> a{1.0, 2.0, 3.0};
  const auto same = paired_t_test(a, a);
  CHECK(same.degenerate);
  CHECK(!same.t_statistic);
  CHECK(!same.p_value);
  const std::vector<double> shifted{2.0, 3.0, 4.0};
  CHECK(paired_t_test(shifted, a).degenerate);
  CHECK(paired_t_test(shifted, a).mean_difference == 1.0);
}

TEST_CASE("paired t-test input errors") {
  const std::vector<double> one{1.0};
  CHECK_THROWS_AS(paired_t_test(one, one), Error);
  const std::vector<double> two{1.0, 2.0};
  const std::vector<double> three{1.0, 2.0, 3.0};
  CHECK_THROWS_AS(paired_t_test(two, three), Error);
}

TEST_CASE("mean and sample std") {
  const std::vector<double> v{2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0};
  CHECK(mean(v) == 5.0);
  CHECK(sample_std(v) == doctest::Approx(std::sqrt(32.0 / 7.0)));
}

TEST_CASE("repeated trials") {
  std::mt19937_64 rng(3);
  const Matrix pa = testing::random_probs(rng, 500, 3);
  const Matrix pb = testing::random_probs(rng, 500, 3);
  const LabelVector y = testing::random_labels(rng, 500, 3);
  const ScalarMetric metric = [](const Matrix& p, const LabelVector& l) { return brier(p, l); };
  const auto s = repeated_trials(pa, pb, y, metric, 10, 0.5, 9);
  CHECK(s.metric_a.size() == 10);
  CHECK(s.test.n == 10);
  CHECK(s.mean_a == doctest::Approx(mean(s.metric_a)));
  const auto again = repeated_trials(pa, pb, y, metric, 10, 0.5, 9);
  CHECK(again.metric_a == s.metric_a);
  // Full-sample trials all score the same subset.
  const auto full = repeated_trials(pa, pb, y, metric, 3, 1.0, 9);
  CHECK(full.metric_a[0] == doctest::Approx(brier(pa, y)));
  CHECK(full.std_a == doctest::Approx(0.0));
  CHECK_THROWS_AS(repeated_trials(pa, pb, y, metric, 1, 0.5, 9), Error);
}
