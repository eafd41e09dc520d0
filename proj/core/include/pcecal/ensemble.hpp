// Copyright 2026 The pce-cal Authors
// SPDX-License-Identifier: Apache-2.0

// Group calibration end to end: U grouping functions trained on the
// validation split, per-group base calibrators refitted on the holdout split
// with hard membership, and an equal-weight average over the U partitions at
// prediction time.

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "pcecal/calibrators.hpp"
#include "pcecal/dataset_io.hpp"
#include "pcecal/grouping.hpp"
#include "pcecal/metrics.hpp"

namespace pcecal {

struct EnsembleConfig {
  GcTrainConfig train;
  std::size_t num_partitions = 20;
  CalibratorTag base = CalibratorTag::kTS;
  /// Groups with fewer holdout rows use the global fallback calibrator.
  std::size_t min_group_size = 10;
  /// Worker threads for member training and application; results do not depend on it.
  std::size_t jobs = 1;
};

struct EnsembleMember {
  GroupingModel grouping;
  GroupTemperatures validation_taus;  // from joint training; informational only
  double train_loss = 0.0;
  bool converged = false;
  std::vector<Calibrator> group_calibrators;  // exactly K entries
  std::vector<std::size_t> holdout_group_sizes;
  std::vector<bool> uses_fallback;
};

struct PartitionEnsemble {
  std::vector<EnsembleMember> members;
  Calibrator fallback;  // fitted on the whole holdout split
  CalibratorTag base = CalibratorTag::kTS;
  std::size_t num_groups = 0;
  double lambda = 0.0;
  std::uint64_t seed = 0;
  std::size_t num_classes = 0;
  std::size_t feature_dim = 0;
  std::size_t min_group_size = 10;
};

/// Member u trains its grouping with seed cfg.train.seed + u.
PartitionEnsemble fit_ensemble(const Dataset& d_val, const Dataset& d_ho,
                               const EnsembleConfig& cfg);

/// Calibrated N x M probabilities for one member.
Matrix calibrate_member(const PartitionEnsemble& ensemble, std::size_t member,
                        const Dataset& data);

/// Mean of the member outputs with equal weights 1/U.
Matrix calibrate(const PartitionEnsemble& ensemble, const Dataset& data, std::size_t jobs = 1);

/// Hard test-time partitions of every member, in member order.
std::vector<Partition> member_partitions(const PartitionEnsemble& ensemble, const Matrix& features);

enum class MetricKind {
  kEceTopLabel,
  kEceFullVector,
  kClasswiseEce,
  kNll,
  kBrier,
  kAccuracy,
  kPceLearned,  // top-label PCE over the ensemble's own partitions
};

std::string_view to_string(MetricKind kind) noexcept;
MetricKind parse_metric_kind(std::string_view name);

struct EvaluationOptions {
  std::vector<MetricKind> metrics;
  BinningScheme scheme;
};

struct Evaluation {
  std::vector<MetricReport> before;  // softmax of the raw logits
  std::vector<MetricReport> after;
  double accuracy_before = 0.0;
  double accuracy_after = 0.0;
  std::size_t argmax_changes = 0;
};

/// Scores `probs` against the labeled split, alongside the uncalibrated
/// softmax of its logits. kPceLearned needs `partitions`; it is skipped
/// when none are given.
Evaluation evaluate(const Matrix& probs, const Dataset& data, const EvaluationOptions& options,
                    const std::vector<Partition>& partitions = {});

Evaluation evaluate(const PartitionEnsemble& ensemble, const Dataset& data,
                    const EvaluationOptions& options);

}  // namespace pcecal
