// Copyright 2026 The pce-cal Authors
// SPDX-License-Identifier: Apache-2.0

// Learned soft grouping over fixed deep features, trained jointly with one
// temperature per group.
//
// The gate is g(z) = softmax(((z - mean) / scale) W + b) with W of shape
// d_z x K. Training minimizes the negated mixture log-likelihood
//
//   loss = -(1/N) sum_n log sum_i g(z_n)_i softmax(o_n / tau_i)[y_n]
//          + lambda ||W||_F^2
//
// over (W, b, log tau). The bias is not regularized.

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "pcecal/dataset_io.hpp"
#include "pcecal/metrics.hpp"
#include "pcecal/optimizer.hpp"
#include "pcecal/tensor.hpp"

namespace pcecal {

inline constexpr double kFeatureScaleFloor = 1e-8;

struct GroupingModel {
  Matrix weights;                     // d_z x K
  std::vector<double> bias;           // K
  std::vector<double> feature_mean;   // d_z
  std::vector<double> feature_scale;  // d_z, strictly positive

  std::size_t num_groups() const noexcept { return bias.size(); }
  std::size_t feature_dim() const noexcept { return feature_mean.size(); }
};

struct GroupTemperatures {
  std::vector<double> log_taus;
};

struct GcTrainConfig {
  std::size_t num_groups = 2;
  double lambda = 0.1;
  std::uint64_t seed = 0;
  double init_scale = 0.01;
  OptimizerConfig optimizer;
};

/// Column means and population standard deviations, floored at kFeatureScaleFloor.
void fit_standardization(const Matrix& features, GroupingModel& model);

/// Zero weights and bias with standardization fitted on `features`.
GroupingModel make_grouping_model(const Matrix& features, std::size_t num_groups);

Matrix soft_assign(const GroupingModel& model, const Matrix& features);
Partition hard_assign(const GroupingModel& model, const Matrix& features);

/// Parameter layout used by the loss: W row-major, then b, then log taus.
std::size_t gc_parameter_count(std::size_t feature_dim, std::size_t num_groups);
std::vector<double> pack_parameters(const GroupingModel& model, const GroupTemperatures& taus);
void unpack_parameters(std::span<const double> params, GroupingModel& model,
                       GroupTemperatures& taus);

struct LossAndGradient {
  double loss = 0.0;
  std::vector<double> gradient;
};

/// Loss and analytic gradient over the packed parameters. Log temperatures
/// outside [ln 1e-2, ln 1e2] are clamped, with zero gradient beyond the box.
LossAndGradient gc_ts_loss(const GroupingModel& model, const GroupTemperatures& taus,
                           const Matrix& features, const Matrix& logits,
                           const LabelVector& labels, double lambda);

/// Objective bound to one dataset. Standardization comes from `model`; the
/// packed vector supplies W, b and log taus.
ObjectiveFunction gc_ts_objective(const GroupingModel& model, const Matrix& features,
                                  const Matrix& logits, const LabelVector& labels, double lambda);

struct GroupingFit {
  GroupingModel model;
  GroupTemperatures taus;
  double final_loss = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
};

/// Random N(0, init_scale^2) start for W and b, log taus at 0, then L-BFGS.
GroupingFit train_grouping(const Dataset& d_val, const GcTrainConfig& cfg);

}  // namespace pcecal
