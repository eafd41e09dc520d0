// Copyright 2026 The pce-cal Authors
// SPDX-License-Identifier: Apache-2.0

#include "pcecal/calibrators.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "pcecal/error.hpp"

namespace pcecal {
namespace {

const double kLogMinTemperature = std::log(kMinTemperature);
const double kLogMaxTemperature = std::log(kMaxTemperature);

void require_fit_input(const Matrix& logits, const LabelVector& labels, const char* what) {
  if (logits.rows() == 0) throw Error(ErrorKind::kFit, std::string(what) + ": no rows to fit");
  if (logits.rows() != labels.size()) {
    throw Error(ErrorKind::kDimension, std::string(what) + ": " + std::to_string(logits.rows()) +
                                           " rows but " + std::to_string(labels.size()) +
                                           " labels");
  }
  labels.validate(logits.cols());
  require_finite(logits, what);
}

// Mean NLL of softmax(o * exp(-x)) and its derivative in x = log tau.
double temperature_objective(const Matrix& logits, const LabelVector& labels, double log_tau,
                             double* grad) {
  const double inv_tau = std::exp(-log_tau);
  const std::size_t m = logits.cols();
  std::vector<double> scaled(m);
  double loss = 0.0;
  double d = 0.0;
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    auto row = logits.row(i);
    for (std::size_t j = 0; j < m; ++j) scaled[j] = row[j] * inv_tau;
    const double lse = log_sum_exp(scaled);
    double expected = 0.0;
    for (std::size_t j = 0; j < m; ++j) expected += std::exp(scaled[j] - lse) * scaled[j];
    const double target = scaled[labels[i]];
    loss += lse - target;
    d += target - expected;
  }
  const auto n = static_cast<double>(logits.rows());
  if (grad) *grad = d / n;
  return loss / n;
}

Matrix ets_combine(const Matrix& logits, double tau, const std::array<double, 3>& w) {
  const std::size_t m = logits.cols();
  Matrix tempered = softmax_rows(logits, tau);
  const Matrix raw = softmax_rows(logits);
  const double uniform = 1.0 / static_cast<double>(m);
  for (std::size_t i = 0; i < tempered.size(); ++i) {
    tempered.data()[i] = w[0] * tempered.data()[i] + w[1] * raw.data()[i] + w[2] * uniform;
  }
  return tempered;
}

std::array<double, 3> simplex_from_free(std::span<const double> a) {
  std::array<double, 3> w{a[0], a[1], a[2]};
  softmax_inplace(w);
  return w;
}

std::size_t hb_bin(const HistogramBinning& h, double conf) {
  const std::size_t bins = h.bin_values.size();
  if (h.scheme.mode == BinMode::kEqualWidth) {
    return std::min(static_cast<std::size_t>(conf * static_cast<double>(bins)), bins - 1);
  }
  // Equal-mass: bin_edges holds the upper edge of every bin but the last.
  std::size_t b = 0;
  while (b + 1 < bins && conf >= h.bin_edges[b]) ++b;
  return b;
}

}  // namespace

double TemperatureScaling::tau() const { return std::exp(log_tau); }
double EnsembleTemperatureScaling::tau() const { return std::exp(log_tau); }

std::string_view to_string(CalibratorTag tag) noexcept {
  switch (tag) {
    case CalibratorTag::kTS: return "TS";
    case CalibratorTag::kETS: return "ETS";
    case CalibratorTag::kHB: return "HB";
  }
  return "?";
}

CalibratorTag parse_calibrator_tag(std::string_view name) {
  if (name == "TS" || name == "ts") return CalibratorTag::kTS;
  if (name == "ETS" || name == "ets") return CalibratorTag::kETS;
  if (name == "HB" || name == "hb") return CalibratorTag::kHB;
  throw Error(ErrorKind::kInvalidInput, "unknown calibrator '" + std::string(name) + "'");
}

CalibratorTag Calibrator::tag() const noexcept {
  switch (params_.index()) {
    case 0: return CalibratorTag::kTS;
    case 1: return CalibratorTag::kETS;
    default: return CalibratorTag::kHB;
  }
}

Matrix Calibrator::apply(const Matrix& logits) const {
  return std::visit(
      [&](const auto& p) -> Matrix {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, TemperatureScaling>) {
          return apply_temperature(logits, p);
        } else if constexpr (std::is_same_v<T, EnsembleTemperatureScaling>) {
          return apply_ets(logits, p);
        } else {
          return apply_histogram_binning(softmax_rows(logits), p);
        }
      },
      params_);
}

double temperature_nll(const Matrix& logits, const LabelVector& labels, double log_tau) {
  return temperature_objective(logits, labels, log_tau, nullptr);
}

TemperatureScaling fit_temperature(const Matrix& logits, const LabelVector& labels,
                                   const OptimizerConfig& cfg) {
  require_fit_input(logits, labels, "fit_temperature");
  ObjectiveFunction f{[&](std::span<const double> x, std::span<double> g) {
                        return temperature_objective(logits, labels, x[0], &g[0]);
                      },
                      1};
  const MinimizeResult r = minimize(f, {0.0}, cfg);
  double best_x = std::clamp(r.x[0], kLogMinTemperature, kLogMaxTemperature);
  double best = temperature_nll(logits, labels, best_x);
  // NLL is unimodal in log tau, so the box minimum is the clamped stationary
  // point or one of the two ends. An end must win by more than rounding noise,
  // which keeps flat objectives (constant logits) at tau = 1.
  for (double end : {kLogMinTemperature, kLogMaxTemperature}) {
    const double v = temperature_nll(logits, labels, end);
    if (v < best - 1e-12 * std::max(1.0, std::abs(best))) {
      best = v;
      best_x = end;
    }
  }
  if (!std::isfinite(best)) {
    throw Error(ErrorKind::kNumeric, "fit_temperature: objective is not finite");
  }
  return TemperatureScaling{best_x};
}

Matrix apply_temperature(const Matrix& logits, const TemperatureScaling& t) {
  return softmax_rows(logits, t.tau());
}

double ets_nll(const Matrix& logits, const LabelVector& labels,
               const EnsembleTemperatureScaling& e) {
  return nll_from_probs(apply_ets(logits, e), labels);
}

EnsembleTemperatureScaling fit_ets(const Matrix& logits, const LabelVector& labels,
                                   const OptimizerConfig& cfg) {
  require_fit_input(logits, labels, "fit_ets");
  const TemperatureScaling ts = fit_temperature(logits, labels, cfg);
  const std::size_t n = logits.rows();

  // Likelihood of the true label under each of the three components.
  const Matrix tempered = apply_temperature(logits, ts);
  const Matrix raw = softmax_rows(logits);
  const double uniform = 1.0 / static_cast<double>(logits.cols());
  std::vector<std::array<double, 3>> comp(n);
  for (std::size_t i = 0; i < n; ++i) {
    comp[i] = {tempered(i, labels[i]), raw(i, labels[i]), uniform};
  }

  auto objective = [&](std::span<const double> a, std::span<double> g) {
    const auto w = simplex_from_free(a);
    std::array<double, 3> dw{0.0, 0.0, 0.0};
    double loss = 0.0;
    for (const auto& c : comp) {
      const double p = std::max(w[0] * c[0] + w[1] * c[1] + w[2] * c[2], 1e-300);
      loss -= std::log(p);
      for (int k = 0; k < 3; ++k) dw[k] -= c[k] / p;
    }
    const auto dn = static_cast<double>(n);
    double mean_dw = 0.0;
    for (int k = 0; k < 3; ++k) mean_dw += w[k] * dw[k] / dn;
    for (int k = 0; k < 3; ++k) g[k] = w[k] * (dw[k] / dn - mean_dw);
    return loss / dn;
  };
  ObjectiveFunction f{objective, 3};
  const MinimizeResult r = minimize(f, {0.0, 0.0, 0.0}, cfg);

  // The simplex corner of plain TS is only reachable in the limit; compare
  // against a point numerically on it so ETS never loses to TS.
  const std::vector<double> ts_corner{0.0, -40.0, -40.0};
  std::vector<double> scratch(3);
  const std::vector<double>& chosen = objective(ts_corner, scratch) < r.loss ? ts_corner : r.x;

  EnsembleTemperatureScaling out;
  out.log_tau = ts.log_tau;
  out.weights = simplex_from_free(chosen);
  return out;
}

Matrix apply_ets(const Matrix& logits, const EnsembleTemperatureScaling& e) {
  return ets_combine(logits, e.tau(), e.weights);
}

HistogramBinning fit_histogram_binning(const Matrix& probs, const LabelVector& labels,
                                       const BinningScheme& scheme) {
  if (probs.rows() != labels.size()) {
    throw Error(ErrorKind::kDimension, "fit_histogram_binning: row/label count mismatch");
  }
  labels.validate(probs.cols());
  const auto conf = top_confidence(probs);
  const Partition part = partition_from_bins(conf, scheme);
  const std::size_t bins = scheme.num_bins;
  std::vector<double> hits(bins, 0.0);
  std::vector<std::size_t> count(bins, 0);
  std::vector<double> lo(bins, std::numeric_limits<double>::infinity());
  std::vector<double> hi(bins, -std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    const std::size_t b = part.group_ids[i];
    hits[b] += argmax(probs.row(i)) == labels[i] ? 1.0 : 0.0;
    ++count[b];
    lo[b] = std::min(lo[b], conf[i]);
    hi[b] = std::max(hi[b], conf[i]);
  }
  HistogramBinning h{scheme, std::vector<double>(bins), {}};
  for (std::size_t b = 0; b < bins; ++b) {
    h.bin_values[b] = count[b] ? hits[b] / static_cast<double>(count[b])
                               : (static_cast<double>(b) + 0.5) / static_cast<double>(bins);
  }
  if (scheme.mode == BinMode::kEqualMass) {
    // Upper edge between bin b and the next non-empty bin: midpoint of the gap.
    h.bin_edges.assign(bins > 0 ? bins - 1 : 0, 1.0);
    double prev_edge = 0.0;
    for (std::size_t b = 0; b + 1 < bins; ++b) {
      std::size_t next = b + 1;
      while (next < bins && count[next] == 0) ++next;
      if (count[b] == 0 || next == bins) {
        h.bin_edges[b] = count[b] == 0 ? prev_edge : 1.0;
      } else {
        h.bin_edges[b] = 0.5 * (hi[b] + lo[next]);
      }
      prev_edge = h.bin_edges[b];
    }
  }
  return h;
}

Matrix apply_histogram_binning(const Matrix& probs, const HistogramBinning& h) {
  Matrix out = probs;
  for (std::size_t i = 0; i < out.rows(); ++i) {
    auto row = out.row(i);
    const std::size_t top = argmax(row);
    const double conf = std::min(1.0, std::max(0.0, row[top]));
    const double value = h.bin_values[hb_bin(h, conf)];
    const double rest = 1.0 - row[top];
    const std::size_t m = row.size();
    for (std::size_t j = 0; j < m; ++j) {
      if (j == top) continue;
      row[j] = rest > 0.0 ? row[j] / rest * (1.0 - value)
                          : (m > 1 ? (1.0 - value) / static_cast<double>(m - 1) : 0.0);
    }
    row[top] = value;
  }
  return out;
}

Calibrator fit_calibrator(CalibratorTag tag, const Matrix& logits, const LabelVector& labels,
                          const OptimizerConfig& cfg) {
  switch (tag) {
    case CalibratorTag::kTS: return fit_temperature(logits, labels, cfg);
    case CalibratorTag::kETS: return fit_ets(logits, labels, cfg);
    case CalibratorTag::kHB:
      require_fit_input(logits, labels, "fit_histogram_binning");
      return fit_histogram_binning(softmax_rows(logits), labels, BinningScheme{});
  }
  throw Error(ErrorKind::kInvalidInput, "unknown calibrator tag");
}

}  // namespace pcecal
