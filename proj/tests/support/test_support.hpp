// Copyright 2026 The pce-cal Authors
// SPDX-License-Identifier: Apache-2.0

// Random instance generators and brute-force oracles for the test suites.
// Oracles here are written as direct loops over the textbook definitions and
// deliberately share no code with the library paths they check.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "pcecal/tensor.hpp"

namespace pcecal::testing {

inline Matrix random_matrix(std::mt19937_64& rng, std::size_t rows, std::size_t cols,
                            double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  Matrix m(rows, cols);
  for (double& v : m.data()) v = normal(rng);
  return m;
}

inline LabelVector random_labels(std::mt19937_64& rng, std::size_t n, std::size_t classes) {
  std::uniform_int_distribution<std::uint32_t> pick(0, static_cast<std::uint32_t>(classes - 1));
  std::vector<Label> out(n);
  for (auto& l : out) l = pick(rng);
  return LabelVector(std::move(out));
}

/// Rows drawn from a Dirichlet(1,...,1) via normalized exponentials.
inline Matrix random_probs(std::mt19937_64& rng, std::size_t rows, std::size_t cols) {
  std::exponential_distribution<double> ex(1.0);
  Matrix m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    double total = 0.0;
    for (std::size_t c = 0; c < cols; ++c) total += (m(r, c) = ex(rng));
    for (std::size_t c = 0; c < cols; ++c) m(r, c) /= total;
  }
  return m;
}

/// Naive softmax of one row, computed in long double without max subtraction
/// (valid for modest logits).
inline std::vector<double> naive_softmax(std::span<const double> row, double tau = 1.0) {
  long double total = 0.0L;
  std::vector<long double> e(row.size());
  for (std::size_t j = 0; j < row.size(); ++j) total += (e[j] = std::exp(static_cast<long double>(row[j]) / tau));
  std::vector<double> out(row.size());
  for (std::size_t j = 0; j < row.size(); ++j) out[j] = static_cast<double>(e[j] / total);
  return out;
}

inline std::size_t naive_bin(double score, std::size_t bins) {
  // Linear scan over bin edges [b/B, (b+1)/B); last bin closed.
  for (std::size_t b = 0; b + 1 < bins; ++b) {
    if (score < static_cast<double>(b + 1) / static_cast<double>(bins)) return b;
  }
  return bins - 1;
}

/// Top-label ECE by enumerating bins one at a time.
inline double oracle_top_label_ece(const Matrix& probs, const LabelVector& labels, std::size_t bins) {
  double ece = 0.0;
  const auto n = static_cast<double>(probs.rows());
  for (std::size_t b = 0; b < bins; ++b) {
    double conf = 0.0, acc = 0.0, count = 0.0;
    for (std::size_t i = 0; i < probs.rows(); ++i) {
      std::size_t best = 0;
      for (std::size_t c = 1; c < probs.cols(); ++c) {
        if (probs(i, c) > probs(i, best)) best = c;
      }
      if (naive_bin(probs(i, best), bins) != b) continue;
      conf += probs(i, best);
      acc += labels[i] == best ? 1.0 : 0.0;
      count += 1.0;
    }
    if (count > 0) ece += count / n * std::abs(conf / count - acc / count);
  }
  return ece;
}

/// Classwise ECE by enumerating (class, bin) pairs.
inline double oracle_classwise_ece(const Matrix& probs, const LabelVector& labels, std::size_t bins) {
  double total = 0.0;
  const auto n = static_cast<double>(probs.rows());
  for (std::size_t u = 0; u < probs.cols(); ++u) {
    for (std::size_t b = 0; b < bins; ++b) {
      double conf = 0.0, freq = 0.0, count = 0.0;
      for (std::size_t i = 0; i < probs.rows(); ++i) {
        if (naive_bin(probs(i, u), bins) != b) continue;
        conf += probs(i, u);
        freq += labels[i] == u ? 1.0 : 0.0;
        count += 1.0;
      }
      if (count > 0) total += count / n * std::abs(conf / count - freq / count);
    }
  }
  return total / static_cast<double>(probs.cols());
}

/// Mean NLL of softmax(o / tau) with a plain loop.
inline double oracle_temperature_nll(const Matrix& logits, const LabelVector& labels, double tau) {
  double total = 0.0;
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    double hi = -INFINITY;
    for (double v : logits.row(i)) hi = std::max(hi, v / tau);
    double s = 0.0;
    for (double v : logits.row(i)) s += std::exp(v / tau - hi);
    total += hi + std::log(s) - logits(i, labels[i]) / tau;
  }
  return total / static_cast<double>(logits.rows());
}

/// Coarse-to-fine grid search for tau in [lo, hi]; final resolution `resolution`.
inline double oracle_grid_temperature(const Matrix& logits, const LabelVector& labels, double lo,
                                      double hi, double resolution) {
  double best = lo;
  double best_v = oracle_temperature_nll(logits, labels, lo);
  double step = 1e-2;
  double a = lo, b = hi;
  while (true) {
    for (double t = a; t <= b + 1e-15; t += step) {
      const double v = oracle_temperature_nll(logits, labels, t);
      if (v < best_v) {
        best_v = v;
        best = t;
      }
    }
    if (step <= resolution) break;
    a = std::max(lo, best - step);
    b = std::min(hi, best + step);
    step /= 10.0;
  }
  return best;
}

}  // namespace pcecal::testing
