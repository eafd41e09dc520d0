// Copyright 2026 The pce-cal Authors
// SPDX-License-Identifier: Apache-2.0

// Partitioned calibration error and the binning metrics it generalizes.
//
// Every metric here is a weighted sum over groups of a partition of the rows:
//
//   PCE = sum_P p(P) sum_G (|G| / N) L(S(G), S(f(G)))
//
// ECE, classwise-ECE and top-label ECE differ only in how rows are grouped
// and in which statistic S is averaged inside a group.

#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "pcecal/tensor.hpp"

namespace pcecal {

enum class BinMode { kEqualWidth, kEqualMass };

struct BinningScheme {
  std::size_t num_bins = 15;
  BinMode mode = BinMode::kEqualWidth;
};

/// One group id per row. Empty groups are allowed and simply contribute zero.
struct Partition {
  std::vector<std::size_t> group_ids;
  std::size_t num_groups = 0;

  std::vector<std::size_t> group_sizes() const;
  std::size_t num_nonempty() const;
  /// Throws kRange when any id is >= num_groups.
  void validate() const;
};

Partition constant_partition(std::size_t rows);
Partition bijective_partition(std::size_t rows);

struct GroupRecord {
  std::size_t partition = 0;  // index into the partition list
  std::size_t group = 0;
  std::size_t size = 0;
  std::vector<double> prediction_stat;  // S(f(G)); one entry for scalar statistics
  std::vector<double> label_stat;       // S(G)
  double gap = 0.0;                     // L(S(G), S(f(G)))
};

struct MetricReport {
  std::string metric;
  double value = 0.0;
  std::vector<GroupRecord> groups;
};

enum class GroupStatistic {
  kMeanVector,  // mean probability vector vs mean one-hot label
  kTopLabel,    // mean max-confidence vs accuracy of the argmax
};

enum class GapLoss { kL1, kL2 };

enum class EceVariant { kFullVector, kTopLabel };

/// Assigns each score to a bin. Equal-width bin i covers [i/B, (i+1)/B) with
/// the last bin closed on the right. Equal-mass bins split the sorted scores
/// into B runs of near-equal length, never splitting a run of equal scores.
Partition partition_from_bins(std::span<const double> scores, const BinningScheme& scheme);

MetricReport pce(const Matrix& probs, const LabelVector& labels,
                 std::span<const Partition> partitions, std::span<const double> partition_weights,
                 GroupStatistic statistic, GapLoss loss);

MetricReport ece(const Matrix& probs, const LabelVector& labels, const BinningScheme& scheme,
                 EceVariant variant);

MetricReport classwise_ece(const Matrix& probs, const LabelVector& labels,
                           const BinningScheme& scheme);

/// Mean negative log-likelihood computed from logits.
double nll(const Matrix& logits, const LabelVector& labels);
/// Mean negative log-likelihood computed from probabilities (floored at 1e-300).
double nll_from_probs(const Matrix& probs, const LabelVector& labels);
double brier(const Matrix& probs, const LabelVector& labels);
double accuracy(const Matrix& scores, const LabelVector& labels);

/// Throws kInvalidInput naming the first row that is not a probability vector.
void require_normalized(const Matrix& probs, double tolerance = 1e-6);

/// Max-class confidence per row.
std::vector<double> top_confidence(const Matrix& probs);

struct ReliabilityBin {
  double center = 0.0;
  double mean_confidence = 0.0;
  double accuracy = 0.0;
  std::size_t count = 0;
};

/// Equal-width reliability diagram data; one entry per bin, empty bins included.
std::vector<ReliabilityBin> reliability_bins(const Matrix& probs, const LabelVector& labels,
                                             std::size_t num_bins);

}  // namespace pcecal
