// Copyright 2026 The pce-cal Authors
// SPDX-License-Identifier: Apache-2.0

#include "pcecal/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "pcecal/error.hpp"

namespace pcecal {
namespace {

void require_aligned(const Matrix& m, const LabelVector& labels, const char* what) {
  if (m.rows() != labels.size()) {
    throw Error(ErrorKind::kDimension, std::string(what) + ": " + std::to_string(m.rows()) +
                                           " rows but " + std::to_string(labels.size()) +
                                           " labels");
  }
  labels.validate(m.cols());
}

double gap_of(double a, double b, GapLoss loss) {
  const double d = a - b;
  return loss == GapLoss::kL1 ? std::abs(d) : d * d;
}

// Sum over groups of (|G|/N) |mean score - mean hit| for one scalar statistic.
// Shared by the per-class ECE variants.
double binned_gap(std::span<const double> scores, std::span<const double> hits,
                  const Partition& part, std::size_t partition_index,
                  std::vector<GroupRecord>* records) {
  const std::size_t n = scores.size();
  std::vector<double> score_sum(part.num_groups, 0.0);
  std::vector<double> hit_sum(part.num_groups, 0.0);
  std::vector<std::size_t> size(part.num_groups, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t g = part.group_ids[i];
    score_sum[g] += scores[i];
    hit_sum[g] += hits[i];
    ++size[g];
  }
  double total = 0.0;
  for (std::size_t g = 0; g < part.num_groups; ++g) {
    if (size[g] == 0) continue;
    const double conf = score_sum[g] / static_cast<double>(size[g]);
    const double freq = hit_sum[g] / static_cast<double>(size[g]);
    const double gap = std::abs(conf - freq);
    total += static_cast<double>(size[g]) / static_cast<double>(n) * gap;
    if (records) records->push_back({partition_index, g, size[g], {conf}, {freq}, gap});
  }
  return total;
}

// Per-class binning: partition u groups rows by Bin(f(x)_u) and compares the
// mean of f(x)_u against the frequency of class u.
double per_class_gap_sum(const Matrix& probs, const LabelVector& labels,
                         const BinningScheme& scheme, std::vector<GroupRecord>* records) {
  const std::size_t n = probs.rows();
  std::vector<double> scores(n);
  std::vector<double> hits(n);
  double total = 0.0;
  for (std::size_t u = 0; u < probs.cols(); ++u) {
    for (std::size_t i = 0; i < n; ++i) {
      scores[i] = probs(i, u);
      hits[i] = labels[i] == u ? 1.0 : 0.0;
    }
    total += binned_gap(scores, hits, partition_from_bins(scores, scheme), u, records);
  }
  return total;
}

}  // namespace

std::vector<std::size_t> Partition::group_sizes() const {
  std::vector<std::size_t> sizes(num_groups, 0);
  for (auto g : group_ids) ++sizes[g];
  return sizes;
}

std::size_t Partition::num_nonempty() const {
  const auto sizes = group_sizes();
  return static_cast<std::size_t>(
      std::count_if(sizes.begin(), sizes.end(), [](std::size_t s) { return s > 0; }));
}

void Partition::validate() const {
  for (std::size_t i = 0; i < group_ids.size(); ++i) {
    if (group_ids[i] >= num_groups) {
      throw Error(ErrorKind::kRange, "group id " + std::to_string(group_ids[i]) + " at row " +
                                         std::to_string(i) + " is not below group count " +
                                         std::to_string(num_groups));
    }
  }
}

Partition constant_partition(std::size_t rows) {
  return Partition{std::vector<std::size_t>(rows, 0), 1};
}

Partition bijective_partition(std::size_t rows) {
  Partition p{std::vector<std::size_t>(rows), rows};
  std::iota(p.group_ids.begin(), p.group_ids.end(), std::size_t{0});
  return p;
}

Partition partition_from_bins(std::span<const double> scores, const BinningScheme& scheme) {
  if (scheme.num_bins == 0) throw Error(ErrorKind::kRange, "binning needs at least one bin");
  const std::size_t bins = scheme.num_bins;
  const std::size_t n = scores.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (!(scores[i] >= 0.0 && scores[i] <= 1.0)) {
      throw Error(ErrorKind::kRange, "score " + std::to_string(scores[i]) + " at row " +
                                         std::to_string(i) + " is outside [0, 1]");
    }
  }
  Partition out{std::vector<std::size_t>(n, 0), bins};
  if (scheme.mode == BinMode::kEqualWidth) {
    for (std::size_t i = 0; i < n; ++i) {
      const auto b = static_cast<std::size_t>(scores[i] * static_cast<double>(bins));
      out.group_ids[i] = std::min(b, bins - 1);
    }
    return out;
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  std::size_t run_bin = 0;
  for (std::size_t rank = 0; rank < n; ++rank) {
    const std::size_t i = order[rank];
    if (rank == 0 || scores[i] != scores[order[rank - 1]]) run_bin = rank * bins / n;
    out.group_ids[i] = run_bin;
  }
  return out;
}

void require_normalized(const Matrix& probs, double tolerance) {
  for (std::size_t r = 0; r < probs.rows(); ++r) {
    double total = 0.0;
    bool ok = true;
    for (double v : probs.row(r)) {
      if (!(v >= 0.0) || !std::isfinite(v)) ok = false;
      total += v;
    }
    if (!ok || std::abs(total - 1.0) > tolerance) {
      throw Error(ErrorKind::kInvalidInput,
                  "row " + std::to_string(r) + " is not a probability vector (sum " +
                      std::to_string(total) + ")");
    }
  }
}

std::vector<double> top_confidence(const Matrix& probs) {
  std::vector<double> out(probs.rows());
  for (std::size_t r = 0; r < probs.rows(); ++r) {
    auto row = probs.row(r);
    // Sums of convex combinations can overshoot 1 by an ulp.
    out[r] = std::min(1.0, *std::max_element(row.begin(), row.end()));
  }
  return out;
}

MetricReport pce(const Matrix& probs, const LabelVector& labels,
                 std::span<const Partition> partitions, std::span<const double> partition_weights,
                 GroupStatistic statistic, GapLoss loss) {
  if (partitions.empty()) throw Error(ErrorKind::kInvalidInput, "pce: empty partition list");
  if (partitions.size() != partition_weights.size()) {
    throw Error(ErrorKind::kDimension, "pce: " + std::to_string(partitions.size()) +
                                           " partitions but " +
                                           std::to_string(partition_weights.size()) + " weights");
  }
  const double weight_total =
      std::accumulate(partition_weights.begin(), partition_weights.end(), 0.0);
  if (std::abs(weight_total - 1.0) > 1e-9) {
    throw Error(ErrorKind::kInvalidInput, "pce: partition weights sum to " +
                                              std::to_string(weight_total) + ", expected 1");
  }
  require_aligned(probs, labels, "pce");
  const std::size_t n = probs.rows();
  const std::size_t m = probs.cols();
  const std::size_t width = statistic == GroupStatistic::kMeanVector ? m : 1;

  // Per-row statistics, computed once and shared by every partition.
  std::vector<double> pred_stat(n * width);
  std::vector<double> label_stat(n * width, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    auto row = probs.row(i);
    if (statistic == GroupStatistic::kMeanVector) {
      std::copy(row.begin(), row.end(), pred_stat.begin() + static_cast<std::ptrdiff_t>(i * m));
      label_stat[i * m + labels[i]] = 1.0;
    } else {
      const std::size_t top = argmax(row);
      pred_stat[i] = std::min(1.0, row[top]);
      label_stat[i] = labels[i] == top ? 1.0 : 0.0;
    }
  }

  MetricReport report;
  report.metric = "pce";
  for (std::size_t p = 0; p < partitions.size(); ++p) {
    const Partition& part = partitions[p];
    if (part.group_ids.size() != n) {
      throw Error(ErrorKind::kDimension, "pce: partition " + std::to_string(p) + " has " +
                                             std::to_string(part.group_ids.size()) +
                                             " rows, expected " + std::to_string(n));
    }
    part.validate();
    std::vector<double> pred_sum(part.num_groups * width, 0.0);
    std::vector<double> label_sum(part.num_groups * width, 0.0);
    std::vector<std::size_t> size(part.num_groups, 0);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t g = part.group_ids[i];
      for (std::size_t c = 0; c < width; ++c) {
        pred_sum[g * width + c] += pred_stat[i * width + c];
        label_sum[g * width + c] += label_stat[i * width + c];
      }
      ++size[g];
    }
    double inner = 0.0;
    for (std::size_t g = 0; g < part.num_groups; ++g) {
      if (size[g] == 0) continue;
      GroupRecord rec{p, g, size[g], std::vector<double>(width), std::vector<double>(width), 0.0};
      for (std::size_t c = 0; c < width; ++c) {
        rec.prediction_stat[c] = pred_sum[g * width + c] / static_cast<double>(size[g]);
        rec.label_stat[c] = label_sum[g * width + c] / static_cast<double>(size[g]);
        rec.gap += gap_of(rec.prediction_stat[c], rec.label_stat[c], loss);
      }
      inner += static_cast<double>(size[g]) / static_cast<double>(n) * rec.gap;
      report.groups.push_back(std::move(rec));
    }
    report.value += partition_weights[p] * inner;
  }
  return report;
}

MetricReport ece(const Matrix& probs, const LabelVector& labels, const BinningScheme& scheme,
                 EceVariant variant) {
  require_aligned(probs, labels, "ece");
  require_normalized(probs);
  MetricReport report;
  if (variant == EceVariant::kFullVector) {
    report.metric = "ece_full_vector";
    report.value = per_class_gap_sum(probs, labels, scheme, &report.groups);
    return report;
  }
  report.metric = "ece_top_label";
  const std::size_t n = probs.rows();
  std::vector<double> conf(n);
  std::vector<double> correct(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto row = probs.row(i);
    const std::size_t top = argmax(row);
    conf[i] = std::min(1.0, row[top]);
    correct[i] = labels[i] == top ? 1.0 : 0.0;
  }
  report.value = binned_gap(conf, correct, partition_from_bins(conf, scheme), 0, &report.groups);
  return report;
}

MetricReport classwise_ece(const Matrix& probs, const LabelVector& labels,
                           const BinningScheme& scheme) {
  require_aligned(probs, labels, "classwise_ece");
  require_normalized(probs);
  MetricReport report;
  report.metric = "classwise_ece";
  const double total = per_class_gap_sum(probs, labels, scheme, &report.groups);
  report.value = probs.cols() == 0 ? 0.0 : total / static_cast<double>(probs.cols());
  return report;
}

double nll(const Matrix& logits, const LabelVector& labels) {
  require_aligned(logits, labels, "nll");
  if (logits.rows() == 0) return 0.0;
  const auto lse = log_sum_exp_rows(logits);
  double total = 0.0;
  for (std::size_t i = 0; i < logits.rows(); ++i) total += lse[i] - logits(i, labels[i]);
  return total / static_cast<double>(logits.rows());
}

double nll_from_probs(const Matrix& probs, const LabelVector& labels) {
  require_aligned(probs, labels, "nll");
  if (probs.rows() == 0) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    total -= std::log(std::max(probs(i, labels[i]), 1e-300));
  }
  return total / static_cast<double>(probs.rows());
}

double brier(const Matrix& probs, const LabelVector& labels) {
  require_aligned(probs, labels, "brier");
  if (probs.rows() == 0) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    for (std::size_t c = 0; c < probs.cols(); ++c) {
      const double d = probs(i, c) - (labels[i] == c ? 1.0 : 0.0);
      total += d * d;
    }
  }
  return total / static_cast<double>(probs.rows());
}

double accuracy(const Matrix& scores, const LabelVector& labels) {
  require_aligned(scores, labels, "accuracy");
  if (scores.rows() == 0) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < scores.rows(); ++i) hits += argmax(scores.row(i)) == labels[i];
  return static_cast<double>(hits) / static_cast<double>(scores.rows());
}

std::vector<ReliabilityBin> reliability_bins(const Matrix& probs, const LabelVector& labels,
                                             std::size_t num_bins) {
  require_aligned(probs, labels, "reliability_bins");
  const auto conf = top_confidence(probs);
  const Partition part = partition_from_bins(conf, {num_bins, BinMode::kEqualWidth});
  std::vector<ReliabilityBin> bins(num_bins);
  for (std::size_t b = 0; b < num_bins; ++b) {
    bins[b].center = (static_cast<double>(b) + 0.5) / static_cast<double>(num_bins);
  }
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    auto& bin = bins[part.group_ids[i]];
    bin.mean_confidence += conf[i];
    bin.accuracy += argmax(probs.row(i)) == labels[i] ? 1.0 : 0.0;
    ++bin.count;
  }
  for (auto& bin : bins) {
    if (bin.count == 0) continue;
    bin.mean_confidence /= static_cast<double>(bin.count);
    bin.accuracy /= static_cast<double>(bin.count);
  }
  return bins;
}

}  // namespace pcecal
