// Copyright 2026 The pce-cal Authors
// SPDX-License-Identifier: Apache-2.0

// Synthetic datasets with latent groups that are miscalibrated in different
// directions. Each row belongs to one latent group; its features are drawn
// around that group's cluster center, and its observed logits are the true
// logits multiplied by the group's distortion factor (> 1 overconfident,
// < 1 underconfident). Labels are sampled from softmax of the true logits,
// so a per-group temperature equal to the factor recalibrates exactly.

#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "pcecal/dataset_io.hpp"
#include "pcecal/metrics.hpp"

namespace pcecal {

struct SyntheticSpec {
  std::size_t n_validation = 5000;
  std::size_t n_holdout = 5000;
  std::size_t n_test = 10000;
  std::size_t num_classes = 5;
  std::size_t feature_dim = 10;
  std::vector<double> distortions{2.0, 0.5};  // one per latent group
  double cluster_separation = 6.0;            // distance between group centers
  double logit_scale = 2.0;                   // true-class margin; noise sd is half of it
  std::uint64_t seed = 0;
};

struct SyntheticData {
  Dataset validation;
  Dataset holdout;
  Dataset test;
  Partition latent_validation;
  Partition latent_holdout;
  Partition latent_test;
};

/// Throws kInvalidInput for empty splits, fewer than 2 classes, non-positive
/// distortions, or more latent groups than feature dimensions.
SyntheticData generate_synthetic(const SyntheticSpec& spec);

}  // namespace pcecal
