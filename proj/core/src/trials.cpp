// Copyright 2026 The pce-cal Authors
// SPDX-License-Identifier: Apache-2.0

#include "pcecal/trials.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include <boost/math/distributions/students_t.hpp>

#include "pcecal/error.hpp"

namespace pcecal {

double mean(std::span<const double> v) {
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sample_std(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  const double mu = mean(v);
  double ss = 0.0;
  for (double x : v) ss += (x - mu) * (x - mu);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

PairedTTest paired_t_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw Error(ErrorKind::kDimension, "paired t-test: sample sizes differ");
  }
  if (a.size() < 2) throw Error(ErrorKind::kInvalidInput, "paired t-test needs at least 2 pairs");
  std::vector<double> d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
  PairedTTest out;
  out.n = d.size();
  out.mean_difference = mean(d);
  out.std_difference = sample_std(d);
  if (out.std_difference == 0.0) {
    out.degenerate = true;
    return out;
  }
  const double t = out.mean_difference / (out.std_difference / std::sqrt(static_cast<double>(out.n)));
  out.t_statistic = t;
  const boost::math::students_t dist(static_cast<double>(out.n - 1));
  out.p_value = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
  return out;
}

TrialSummary repeated_trials(const Matrix& probs_a, const Matrix& probs_b,
                             const LabelVector& labels, const ScalarMetric& metric,
                             std::size_t trials, double fraction, std::uint64_t seed) {
  if (trials < 2) throw Error(ErrorKind::kInvalidInput, "repeated trials need at least 2 trials");
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw Error(ErrorKind::kRange, "trial fraction must be in (0, 1]");
  }
  if (probs_a.rows() != labels.size() || probs_b.rows() != labels.size() ||
      probs_a.cols() != probs_b.cols()) {
    throw Error(ErrorKind::kDimension, "repeated trials: probability matrices and labels disagree");
  }
  const std::size_t n = labels.size();
  const auto take = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n))));
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> order(n);
  TrialSummary out;
  for (std::size_t t = 0; t < trials; ++t) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    // Partial Fisher-Yates: the first `take` slots are the sample.
    for (std::size_t i = 0; i < std::min(take, n); ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, n - 1);
      std::swap(order[i], order[pick(rng)]);
    }
    const std::span<const std::size_t> rows(order.data(), std::min(take, n));
    const LabelVector sub_labels = labels.select(rows);
    out.metric_a.push_back(metric(probs_a.select_rows(rows), sub_labels));
    out.metric_b.push_back(metric(probs_b.select_rows(rows), sub_labels));
  }
  out.mean_a = mean(out.metric_a);
  out.std_a = sample_std(out.metric_a);
  out.mean_b = mean(out.metric_b);
  out.std_b = sample_std(out.metric_b);
  out.test = paired_t_test(out.metric_a, out.metric_b);
  return out;
}

}  // namespace pcecal
