// Copyright 2026 The pce-cal Authors
// SPDX-License-Identifier: Apache-2.0

#include "pcecal/ensemble.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <string>
#include <thread>

#include "pcecal/error.hpp"

namespace pcecal {
namespace {

// Runs body(i) for i in [0, count) on up to `jobs` threads. The first
// exception by index is rethrown after all workers finish.
template <typename Body>
void parallel_for(std::size_t count, std::size_t jobs, Body body) {
  jobs = std::max<std::size_t>(1, std::min(jobs, count));
  std::vector<std::exception_ptr> errors(count);
  if (jobs == 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> workers;
  workers.reserve(jobs);
  for (std::size_t w = 0; w < jobs; ++w) {
    workers.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) {
        try {
          body(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (auto& t : workers) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

void require_compatible(const PartitionEnsemble& ensemble, const Dataset& data) {
  if (data.num_classes() != ensemble.num_classes || data.feature_dim() != ensemble.feature_dim) {
    throw Error(ErrorKind::kDimension,
                "dataset has " + std::to_string(data.num_classes()) + " classes and " +
                    std::to_string(data.feature_dim()) + " features; model expects " +
                    std::to_string(ensemble.num_classes) + " and " +
                    std::to_string(ensemble.feature_dim));
  }
}

std::vector<std::vector<std::size_t>> rows_by_group(const Partition& part) {
  std::vector<std::vector<std::size_t>> rows(part.num_groups);
  for (std::size_t i = 0; i < part.group_ids.size(); ++i) rows[part.group_ids[i]].push_back(i);
  return rows;
}

MetricReport scalar_report(std::string name, double value) {
  MetricReport r;
  r.metric = std::move(name);
  r.value = value;
  return r;
}

std::vector<MetricReport> compute_metrics(const Matrix& probs, const LabelVector& labels,
                                          const EvaluationOptions& options,
                                          const std::vector<Partition>& partitions) {
  std::vector<MetricReport> out;
  for (MetricKind kind : options.metrics) {
    const std::size_t before = out.size();
    switch (kind) {
      case MetricKind::kEceTopLabel:
        out.push_back(ece(probs, labels, options.scheme, EceVariant::kTopLabel));
        break;
      case MetricKind::kEceFullVector:
        out.push_back(ece(probs, labels, options.scheme, EceVariant::kFullVector));
        break;
      case MetricKind::kClasswiseEce:
        out.push_back(classwise_ece(probs, labels, options.scheme));
        break;
      case MetricKind::kNll:
        out.push_back(scalar_report("nll", nll_from_probs(probs, labels)));
        break;
      case MetricKind::kBrier:
        out.push_back(scalar_report("brier", brier(probs, labels)));
        break;
      case MetricKind::kAccuracy:
        out.push_back(scalar_report("accuracy", accuracy(probs, labels)));
        break;
      case MetricKind::kPceLearned: {
        if (partitions.empty()) break;
        const std::vector<double> weights(partitions.size(),
                                          1.0 / static_cast<double>(partitions.size()));
        MetricReport r = pce(probs, labels, partitions, weights, GroupStatistic::kTopLabel,
                             GapLoss::kL1);
        out.push_back(std::move(r));
        break;
      }
    }
    if (out.size() > before) out.back().metric = std::string(to_string(kind));
  }
  return out;
}

}  // namespace

PartitionEnsemble fit_ensemble(const Dataset& d_val, const Dataset& d_ho,
                               const EnsembleConfig& cfg) {
  if (cfg.base == CalibratorTag::kHB) {
    throw Error(ErrorKind::kInvalidInput,
                "group calibration needs an accuracy-preserving base method (TS or ETS)");
  }
  if (cfg.num_partitions == 0) throw Error(ErrorKind::kRange, "number of partitions must be >= 1");
  if (cfg.train.num_groups == 0) throw Error(ErrorKind::kRange, "number of groups must be >= 1");
  const LabelVector& ho_labels = d_ho.require_labels();
  d_val.require_labels();
  if (d_ho.size() == 0) throw Error(ErrorKind::kFit, "holdout split is empty");
  if (d_val.num_classes() != d_ho.num_classes() || d_val.feature_dim() != d_ho.feature_dim()) {
    throw Error(ErrorKind::kDimension, "validation and holdout splits disagree on class count or "
                                       "feature dimension");
  }

  PartitionEnsemble ens;
  ens.base = cfg.base;
  ens.num_groups = cfg.train.num_groups;
  ens.lambda = cfg.train.lambda;
  ens.seed = cfg.train.seed;
  ens.num_classes = d_val.num_classes();
  ens.feature_dim = d_val.feature_dim();
  ens.min_group_size = cfg.min_group_size;
  ens.fallback = fit_calibrator(cfg.base, d_ho.logits, ho_labels, cfg.train.optimizer);
  ens.members.resize(cfg.num_partitions);

  parallel_for(cfg.num_partitions, cfg.jobs, [&](std::size_t u) {
    GcTrainConfig member_cfg = cfg.train;
    member_cfg.seed = cfg.train.seed + u;
    GroupingFit fit = train_grouping(d_val, member_cfg);

    EnsembleMember& member = ens.members[u];
    member.grouping = std::move(fit.model);
    member.validation_taus = std::move(fit.taus);
    member.train_loss = fit.final_loss;
    member.converged = fit.converged;

    const auto groups = rows_by_group(hard_assign(member.grouping, d_ho.features));
    for (const auto& rows : groups) {
      member.holdout_group_sizes.push_back(rows.size());
      if (rows.size() < cfg.min_group_size) {
        member.group_calibrators.push_back(ens.fallback);
        member.uses_fallback.push_back(true);
        continue;
      }
      member.group_calibrators.push_back(fit_calibrator(cfg.base, d_ho.logits.select_rows(rows),
                                                        ho_labels.select(rows),
                                                        cfg.train.optimizer));
      member.uses_fallback.push_back(false);
    }
  });
  return ens;
}

Matrix calibrate_member(const PartitionEnsemble& ensemble, std::size_t member,
                        const Dataset& data) {
  require_compatible(ensemble, data);
  const EnsembleMember& m = ensemble.members.at(member);
  Matrix out(data.size(), ensemble.num_classes);
  const auto groups = rows_by_group(hard_assign(m.grouping, data.features));
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const auto& rows = groups[g];
    if (rows.empty()) continue;
    const Matrix probs = m.group_calibrators[g].apply(data.logits.select_rows(rows));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      auto src = probs.row(i);
      std::copy(src.begin(), src.end(), out.row(rows[i]).begin());
    }
  }
  return out;
}

Matrix calibrate(const PartitionEnsemble& ensemble, const Dataset& data, std::size_t jobs) {
  require_compatible(ensemble, data);
  const std::size_t u_count = ensemble.members.size();
  if (u_count == 0) throw Error(ErrorKind::kInvalidInput, "ensemble has no members");
  std::vector<Matrix> outputs(u_count);
  parallel_for(u_count, jobs, [&](std::size_t u) { outputs[u] = calibrate_member(ensemble, u, data); });
  Matrix total(data.size(), ensemble.num_classes, 0.0);
  for (const Matrix& o : outputs) {
    for (std::size_t i = 0; i < total.size(); ++i) total.data()[i] += o.data()[i];
  }
  const double inv_u = 1.0 / static_cast<double>(u_count);
  for (double& v : total.data()) v *= inv_u;
  return total;
}

std::vector<Partition> member_partitions(const PartitionEnsemble& ensemble,
                                         const Matrix& features) {
  std::vector<Partition> out;
  out.reserve(ensemble.members.size());
  for (const auto& m : ensemble.members) out.push_back(hard_assign(m.grouping, features));
  return out;
}

std::string_view to_string(MetricKind kind) noexcept {
  switch (kind) {
    case MetricKind::kEceTopLabel: return "ece";
    case MetricKind::kEceFullVector: return "ece_full";
    case MetricKind::kClasswiseEce: return "classwise_ece";
    case MetricKind::kNll: return "nll";
    case MetricKind::kBrier: return "brier";
    case MetricKind::kAccuracy: return "accuracy";
    case MetricKind::kPceLearned: return "pce";
  }
  return "?";
}

MetricKind parse_metric_kind(std::string_view name) {
  for (MetricKind k : {MetricKind::kEceTopLabel, MetricKind::kEceFullVector,
                       MetricKind::kClasswiseEce, MetricKind::kNll, MetricKind::kBrier,
                       MetricKind::kAccuracy, MetricKind::kPceLearned}) {
    if (to_string(k) == name) return k;
  }
  throw Error(ErrorKind::kInvalidInput, "unknown metric '" + std::string(name) + "'");
}

Evaluation evaluate(const Matrix& probs, const Dataset& data, const EvaluationOptions& options,
                    const std::vector<Partition>& partitions) {
  const LabelVector& labels = data.require_labels();
  if (probs.rows() != data.size() || probs.cols() != data.num_classes()) {
    throw Error(ErrorKind::kDimension, "probabilities are " + std::to_string(probs.rows()) + "x" +
                                           std::to_string(probs.cols()) + ", dataset is " +
                                           std::to_string(data.size()) + "x" +
                                           std::to_string(data.num_classes()));
  }
  const Matrix raw = softmax_rows(data.logits);
  Evaluation ev;
  ev.before = compute_metrics(raw, labels, options, partitions);
  ev.after = compute_metrics(probs, labels, options, partitions);
  ev.accuracy_before = accuracy(raw, labels);
  ev.accuracy_after = accuracy(probs, labels);
  const auto a = argmax_rows(data.logits);
  const auto b = argmax_rows(probs);
  for (std::size_t i = 0; i < a.size(); ++i) ev.argmax_changes += a[i] != b[i];
  return ev;
}

Evaluation evaluate(const PartitionEnsemble& ensemble, const Dataset& data,
                    const EvaluationOptions& options) {
  return evaluate(calibrate(ensemble, data), data, options,
                  member_partitions(ensemble, data.features));
}

}  // namespace pcecal
