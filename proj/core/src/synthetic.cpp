// Copyright 2026 The pce-cal Authors
// SPDX-License-Identifier: Apache-2.0

#include "pcecal/synthetic.hpp"

#include <cmath>
#include <random>
#include <string>

#include "pcecal/error.hpp"

namespace pcecal {
namespace {

void validate(const SyntheticSpec& spec) {
  auto fail = [](const std::string& msg) { throw Error(ErrorKind::kInvalidInput, "synthetic: " + msg); };
  if (spec.n_validation == 0 || spec.n_holdout == 0 || spec.n_test == 0) {
    fail("every split needs at least one row");
  }
  if (spec.num_classes < 2) fail("need at least 2 classes");
  if (spec.feature_dim < 1) fail("need at least 1 feature");
  if (spec.distortions.empty()) fail("need at least one latent group");
  if (spec.distortions.size() > spec.feature_dim) {
    fail("latent group count exceeds feature dimension");
  }
  for (double d : spec.distortions) {
    if (!(d > 0.0) || !std::isfinite(d)) fail("distortion factors must be positive");
  }
  if (!(spec.cluster_separation >= 0.0) || !(spec.logit_scale >= 0.0)) {
    fail("separation and logit scale must be non-negative");
  }
}

// Group centers at pairwise distance `separation`: scaled orthonormal
// directions obtained by Gram-Schmidt on Gaussian draws.
std::vector<std::vector<double>> group_centers(std::size_t groups, std::size_t dim,
                                               double separation, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<std::vector<double>> basis;
  while (basis.size() < groups) {
    std::vector<double> v(dim);
    for (double& x : v) x = normal(rng);
    for (const auto& b : basis) {
      double proj = 0.0;
      for (std::size_t d = 0; d < dim; ++d) proj += v[d] * b[d];
      for (std::size_t d = 0; d < dim; ++d) v[d] -= proj * b[d];
    }
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    if (norm < 1e-8) continue;
    for (double& x : v) x /= norm;
    basis.push_back(std::move(v));
  }
  if (groups == 2) {
    // Symmetric about the origin along one axis.
    for (std::size_t d = 0; d < dim; ++d) {
      basis[1][d] = -0.5 * separation * basis[0][d];
      basis[0][d] = 0.5 * separation * basis[0][d];
    }
    return basis;
  }
  const double radius = groups == 1 ? 0.0 : separation / std::sqrt(2.0);
  for (auto& b : basis) {
    for (double& x : b) x *= radius;
  }
  return basis;
}

struct Split {
  Dataset data;
  Partition latent;
};

Split draw_split(const SyntheticSpec& spec, std::size_t n, SplitRole role,
                 const std::vector<std::vector<double>>& centers, std::mt19937_64& rng) {
  const std::size_t groups = spec.distortions.size();
  const std::size_t m = spec.num_classes;
  const std::size_t dz = spec.feature_dim;
  std::uniform_int_distribution<std::size_t> pick_group(0, groups - 1);
  std::uniform_int_distribution<std::size_t> pick_class(0, m - 1);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  Matrix features(n, dz);
  Matrix logits(n, m);
  std::vector<Label> labels(n);
  Partition latent{std::vector<std::size_t>(n), groups};
  std::vector<double> truth(m);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t g = pick_group(rng);
    latent.group_ids[i] = g;
    for (std::size_t d = 0; d < dz; ++d) features(i, d) = centers[g][d] + normal(rng);
    const std::size_t cls = pick_class(rng);
    for (std::size_t j = 0; j < m; ++j) {
      truth[j] = 0.5 * spec.logit_scale * normal(rng) + (j == cls ? spec.logit_scale : 0.0);
    }
    for (std::size_t j = 0; j < m; ++j) logits(i, j) = truth[j] * spec.distortions[g];
    softmax_inplace(truth);
    const double u = unit(rng);
    double cum = 0.0;
    std::size_t y = m - 1;
    for (std::size_t j = 0; j < m; ++j) {
      cum += truth[j];
      if (u < cum) {
        y = j;
        break;
      }
    }
    labels[i] = static_cast<Label>(y);
  }
  return {make_dataset(std::move(features), std::move(logits), LabelVector(std::move(labels)), role),
          std::move(latent)};
}

}  // namespace

SyntheticData generate_synthetic(const SyntheticSpec& spec) {
  validate(spec);
  std::mt19937_64 rng(spec.seed);
  const auto centers =
      group_centers(spec.distortions.size(), spec.feature_dim, spec.cluster_separation, rng);
  Split val = draw_split(spec, spec.n_validation, SplitRole::kValidation, centers, rng);
  Split ho = draw_split(spec, spec.n_holdout, SplitRole::kHoldout, centers, rng);
  Split test = draw_split(spec, spec.n_test, SplitRole::kTest, centers, rng);
  return {std::move(val.data), std::move(ho.data), std::move(test.data),
          std::move(val.latent), std::move(ho.latent), std::move(test.latent)};
}

}  // namespace pcecal
