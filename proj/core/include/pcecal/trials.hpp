// Copyright 2026 The pce-cal Authors
// SPDX-License-Identifier: Apache-2.0

// Paired comparison of two calibration methods over repeated test resamples.

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "pcecal/tensor.hpp"

namespace pcecal {

struct PairedTTest {
  std::size_t n = 0;
  double mean_difference = 0.0;  // mean of a - b
  double std_difference = 0.0;   // sample standard deviation (n - 1)
  /// Empty when the differences have zero variance.
  std::optional<double> t_statistic;
  std::optional<double> p_value;  // two-sided, Student t with n - 1 dof
  bool degenerate = false;
};

/// Throws kInvalidInput for fewer than 2 pairs or mismatched lengths.
PairedTTest paired_t_test(std::span<const double> a, std::span<const double> b);

using ScalarMetric = std::function<double(const Matrix& probs, const LabelVector& labels)>;

struct TrialSummary {
  std::vector<double> metric_a;
  std::vector<double> metric_b;
  double mean_a = 0.0;
  double std_a = 0.0;
  double mean_b = 0.0;
  double std_b = 0.0;
  PairedTTest test;
};

/// Each trial draws `fraction` of the rows without replacement and scores both
/// methods on the same subset.
TrialSummary repeated_trials(const Matrix& probs_a, const Matrix& probs_b,
                             const LabelVector& labels, const ScalarMetric& metric,
                             std::size_t trials, double fraction, std::uint64_t seed);

double mean(std::span<const double> v);
double sample_std(std::span<const double> v);

}  // namespace pcecal
