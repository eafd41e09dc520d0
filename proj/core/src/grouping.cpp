// Copyright 2026 The pce-cal Authors
// SPDX-License-Identifier: Apache-2.0

#include "pcecal/grouping.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <random>
#include <string>

#include "pcecal/calibrators.hpp"
#include "pcecal/error.hpp"

namespace pcecal {
namespace {

const double kLogTauLo = std::log(kMinTemperature);
const double kLogTauHi = std::log(kMaxTemperature);

void require_feature_dim(const GroupingModel& model, const Matrix& features) {
  if (features.cols() != model.feature_dim()) {
    throw Error(ErrorKind::kDimension, "grouping expects " + std::to_string(model.feature_dim()) +
                                           " feature columns, got " +
                                           std::to_string(features.cols()));
  }
}

Matrix standardize(const GroupingModel& model, const Matrix& features) {
  require_feature_dim(model, features);
  Matrix out = features;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    for (std::size_t d = 0; d < row.size(); ++d) {
      row[d] = (row[d] - model.feature_mean[d]) / model.feature_scale[d];
    }
  }
  return out;
}

// Gate logits z W + b for one standardized row.
void gate_logits(const Matrix& weights, std::span<const double> bias,
                 std::span<const double> z, std::span<double> out) {
  std::copy(bias.begin(), bias.end(), out.begin());
  for (std::size_t d = 0; d < z.size(); ++d) {
    const double zd = z[d];
    if (zd == 0.0) continue;
    auto w = weights.row(d);
    for (std::size_t k = 0; k < out.size(); ++k) out[k] += zd * w[k];
  }
}

// Core evaluation over pre-standardized features. `params` is the packed
// (W, b, log tau) vector; the gradient has the same layout.
double evaluate_packed(std::span<const double> params, const Matrix& z, const Matrix& logits,
                       const LabelVector& labels, double lambda, std::size_t num_groups,
                       std::span<double> grad) {
  const std::size_t n = logits.rows();
  const std::size_t dz = z.cols();
  const std::size_t k_groups = num_groups;
  const std::size_t m = logits.cols();
  const std::size_t w_count = dz * k_groups;
  const auto w_params = params.subspan(0, w_count);
  const auto b_params = params.subspan(w_count, k_groups);
  const auto x_params = params.subspan(w_count + k_groups, k_groups);

  Matrix weights(dz, k_groups, std::vector<double>(w_params.begin(), w_params.end()));
  std::vector<double> inv_tau(k_groups);
  std::vector<bool> inside(k_groups);
  for (std::size_t k = 0; k < k_groups; ++k) {
    const double x = std::clamp(x_params[k], kLogTauLo, kLogTauHi);
    inside[k] = x_params[k] >= kLogTauLo && x_params[k] <= kLogTauHi;
    inv_tau[k] = std::exp(-x);
  }

  std::fill(grad.begin(), grad.end(), 0.0);
  auto g_w = grad.subspan(0, w_count);
  auto g_b = grad.subspan(w_count, k_groups);
  auto g_x = grad.subspan(w_count + k_groups, k_groups);

  std::vector<double> gate(k_groups);
  std::vector<double> joint(k_groups);     // log g_i + log p_i(y)
  std::vector<double> dcomp(k_groups);     // d log p_i(y) / d log tau_i
  std::vector<double> scaled(m);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    auto zi = z.row(i);
    auto oi = logits.row(i);
    const Label y = labels[i];
    gate_logits(weights, b_params, zi, gate);
    const double gate_lse = log_sum_exp(gate);
    for (std::size_t k = 0; k < k_groups; ++k) {
      for (std::size_t j = 0; j < m; ++j) scaled[j] = oi[j] * inv_tau[k];
      const double lse = log_sum_exp(scaled);
      double expected = 0.0;
      for (std::size_t j = 0; j < m; ++j) expected += std::exp(scaled[j] - lse) * scaled[j];
      const double log_gate = gate[k] - gate_lse;
      joint[k] = log_gate + scaled[y] - lse;
      dcomp[k] = expected - scaled[y];
      gate[k] = std::exp(log_gate);
    }
    const double mix = log_sum_exp(joint);
    if (!std::isfinite(mix)) {
      throw Error(ErrorKind::kNumeric,
                  "gc_ts_loss: non-finite mixture likelihood at sample " + std::to_string(i));
    }
    total -= mix;
    for (std::size_t k = 0; k < k_groups; ++k) {
      const double resp = std::exp(joint[k] - mix);
      const double d_gate = resp - gate[k];
      g_b[k] -= d_gate;
      for (std::size_t d = 0; d < dz; ++d) g_w[d * k_groups + k] -= zi[d] * d_gate;
      if (inside[k]) g_x[k] -= resp * dcomp[k];
    }
  }
  const double inv_n = n ? 1.0 / static_cast<double>(n) : 0.0;
  double penalty = 0.0;
  for (std::size_t j = 0; j < grad.size(); ++j) grad[j] *= inv_n;
  for (std::size_t j = 0; j < w_count; ++j) {
    penalty += w_params[j] * w_params[j];
    g_w[j] += 2.0 * lambda * w_params[j];
  }
  return total * inv_n + lambda * penalty;
}

void require_loss_inputs(const GroupingModel& model, const Matrix& features, const Matrix& logits,
                         const LabelVector& labels) {
  require_feature_dim(model, features);
  if (features.rows() != logits.rows() || logits.rows() != labels.size()) {
    throw Error(ErrorKind::kDimension, "gc_ts_loss: row counts disagree (features " +
                                           std::to_string(features.rows()) + ", logits " +
                                           std::to_string(logits.rows()) + ", labels " +
                                           std::to_string(labels.size()) + ")");
  }
  labels.validate(logits.cols());
}

}  // namespace

void fit_standardization(const Matrix& features, GroupingModel& model) {
  const std::size_t dz = features.cols();
  const std::size_t n = features.rows();
  model.feature_mean.assign(dz, 0.0);
  model.feature_scale.assign(dz, 1.0);
  if (n == 0) return;
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t d = 0; d < dz; ++d) model.feature_mean[d] += features(r, d);
  }
  for (auto& v : model.feature_mean) v /= static_cast<double>(n);
  std::vector<double> var(dz, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t d = 0; d < dz; ++d) {
      const double c = features(r, d) - model.feature_mean[d];
      var[d] += c * c;
    }
  }
  for (std::size_t d = 0; d < dz; ++d) {
    model.feature_scale[d] = std::max(std::sqrt(var[d] / static_cast<double>(n)), kFeatureScaleFloor);
  }
}

GroupingModel make_grouping_model(const Matrix& features, std::size_t num_groups) {
  if (num_groups == 0) throw Error(ErrorKind::kRange, "grouping needs at least one group");
  GroupingModel model;
  model.weights = Matrix(features.cols(), num_groups, 0.0);
  model.bias.assign(num_groups, 0.0);
  fit_standardization(features, model);
  return model;
}

Matrix soft_assign(const GroupingModel& model, const Matrix& features) {
  const Matrix z = standardize(model, features);
  Matrix out(z.rows(), model.num_groups());
  for (std::size_t r = 0; r < z.rows(); ++r) {
    auto row = out.row(r);
    gate_logits(model.weights, model.bias, z.row(r), row);
    softmax_inplace(row);
  }
  return out;
}

Partition hard_assign(const GroupingModel& model, const Matrix& features) {
  return Partition{argmax_rows(soft_assign(model, features)), model.num_groups()};
}

std::size_t gc_parameter_count(std::size_t feature_dim, std::size_t num_groups) {
  return feature_dim * num_groups + 2 * num_groups;
}

std::vector<double> pack_parameters(const GroupingModel& model, const GroupTemperatures& taus) {
  const std::size_t k = model.num_groups();
  if (taus.log_taus.size() != k) {
    throw Error(ErrorKind::kDimension, "expected " + std::to_string(k) + " temperatures, got " +
                                           std::to_string(taus.log_taus.size()));
  }
  std::vector<double> out;
  out.reserve(gc_parameter_count(model.feature_dim(), k));
  out.insert(out.end(), model.weights.data().begin(), model.weights.data().end());
  out.insert(out.end(), model.bias.begin(), model.bias.end());
  out.insert(out.end(), taus.log_taus.begin(), taus.log_taus.end());
  return out;
}

void unpack_parameters(std::span<const double> params, GroupingModel& model,
                       GroupTemperatures& taus) {
  const std::size_t k = model.num_groups();
  const std::size_t dz = model.feature_dim();
  if (params.size() != gc_parameter_count(dz, k)) {
    throw Error(ErrorKind::kDimension, "packed parameter length mismatch");
  }
  const std::size_t w_count = dz * k;
  model.weights = Matrix(dz, k, std::vector<double>(params.begin(), params.begin() + w_count));
  model.bias.assign(params.begin() + w_count, params.begin() + w_count + k);
  taus.log_taus.assign(params.begin() + w_count + k, params.end());
}

LossAndGradient gc_ts_loss(const GroupingModel& model, const GroupTemperatures& taus,
                           const Matrix& features, const Matrix& logits,
                           const LabelVector& labels, double lambda) {
  require_loss_inputs(model, features, logits, labels);
  const std::vector<double> params = pack_parameters(model, taus);
  const Matrix z = standardize(model, features);
  LossAndGradient out;
  out.gradient.resize(params.size());
  out.loss = evaluate_packed(params, z, logits, labels, lambda, model.num_groups(), out.gradient);
  return out;
}

ObjectiveFunction gc_ts_objective(const GroupingModel& model, const Matrix& features,
                                  const Matrix& logits, const LabelVector& labels, double lambda) {
  require_loss_inputs(model, features, logits, labels);
  auto z = std::make_shared<const Matrix>(standardize(model, features));
  const std::size_t k = model.num_groups();
  return ObjectiveFunction{
      [z, &logits, &labels, lambda, k](std::span<const double> x, std::span<double> g) {
        // A non-finite trial point makes the line search backtrack.
        try {
          return evaluate_packed(x, *z, logits, labels, lambda, k, g);
        } catch (const Error& e) {
          if (e.kind() != ErrorKind::kNumeric) throw;
          return std::numeric_limits<double>::infinity();
        }
      },
      gc_parameter_count(model.feature_dim(), k)};
}

GroupingFit train_grouping(const Dataset& d_val, const GcTrainConfig& cfg) {
  if (d_val.role != SplitRole::kValidation) {
    throw Error(ErrorKind::kInvalidInput, "train_grouping expects the validation split");
  }
  const LabelVector& labels = d_val.require_labels();
  if (d_val.size() == 0) throw Error(ErrorKind::kFit, "train_grouping: validation split is empty");
  if (cfg.lambda < 0.0) throw Error(ErrorKind::kRange, "lambda must be non-negative");

  GroupingFit fit;
  fit.model = make_grouping_model(d_val.features, cfg.num_groups);
  fit.taus.log_taus.assign(cfg.num_groups, 0.0);

  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> init(0.0, cfg.init_scale);
  for (double& w : fit.model.weights.data()) w = init(rng);
  for (double& b : fit.model.bias) b = init(rng);

  const ObjectiveFunction f =
      gc_ts_objective(fit.model, d_val.features, d_val.logits, labels, cfg.lambda);
  MinimizeResult r;
  try {
    r = minimize(f, pack_parameters(fit.model, fit.taus), cfg.optimizer);
  } catch (const Error& e) {
    throw Error(ErrorKind::kNumeric, "grouping training failed for seed " +
                                         std::to_string(cfg.seed) + ": " + e.what());
  }
  if (!std::isfinite(r.loss)) {
    throw Error(ErrorKind::kNumeric,
                "grouping training produced a non-finite loss for seed " + std::to_string(cfg.seed));
  }
  unpack_parameters(r.x, fit.model, fit.taus);
  for (double& x : fit.taus.log_taus) x = std::clamp(x, kLogTauLo, kLogTauHi);
  fit.final_loss = r.loss;
  fit.iterations = r.iterations;
  fit.converged = r.converged;
  return fit;
}

}  // namespace pcecal
