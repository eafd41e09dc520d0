// Copyright 2026 The pce-cal Authors
// SPDX-License-Identifier: Apache-2.0

// Base calibration maps applied per group: temperature scaling (TS),
// ensemble temperature scaling (ETS) and top-label histogram binning (HB).

#pragma once

#include <array>
#include <string_view>
#include <variant>
#include <vector>

#include "pcecal/metrics.hpp"
#include "pcecal/optimizer.hpp"
#include "pcecal/tensor.hpp"

namespace pcecal {

inline constexpr double kMinTemperature = 1e-2;
inline constexpr double kMaxTemperature = 1e2;

struct TemperatureScaling {
  double log_tau = 0.0;
  double tau() const;
};

struct EnsembleTemperatureScaling {
  double log_tau = 0.0;
  /// Weights of softmax(o / tau), softmax(o) and the uniform distribution.
  std::array<double, 3> weights{1.0, 0.0, 0.0};
  double tau() const;
};

struct HistogramBinning {
  BinningScheme scheme;
  std::vector<double> bin_values;
  /// Equal-mass only: upper edge of every bin except the last.
  std::vector<double> bin_edges;
};

enum class CalibratorTag { kTS, kETS, kHB };

std::string_view to_string(CalibratorTag tag) noexcept;
CalibratorTag parse_calibrator_tag(std::string_view name);

/// A fitted base calibrator. TS and ETS never change a row's argmax; HB can.
class Calibrator {
 public:
  using Params = std::variant<TemperatureScaling, EnsembleTemperatureScaling, HistogramBinning>;

  Calibrator() = default;
  Calibrator(TemperatureScaling p) : params_(p) {}
  Calibrator(EnsembleTemperatureScaling p) : params_(p) {}
  Calibrator(HistogramBinning p) : params_(std::move(p)) {}

  CalibratorTag tag() const noexcept;
  bool accuracy_preserving() const noexcept { return tag() != CalibratorTag::kHB; }
  const Params& params() const noexcept { return params_; }

  /// Logits in, probabilities out.
  Matrix apply(const Matrix& logits) const;

 private:
  Params params_;
};

/// Fits tau by minimizing the mean NLL of softmax(o / tau) over log tau,
/// restricted to [kMinTemperature, kMaxTemperature].
TemperatureScaling fit_temperature(const Matrix& logits, const LabelVector& labels,
                                   const OptimizerConfig& cfg = {});
Matrix apply_temperature(const Matrix& logits, const TemperatureScaling& t);

/// Mean NLL of softmax(o / tau); exposed for tests and diagnostics.
double temperature_nll(const Matrix& logits, const LabelVector& labels, double log_tau);

EnsembleTemperatureScaling fit_ets(const Matrix& logits, const LabelVector& labels,
                                   const OptimizerConfig& cfg = {});
Matrix apply_ets(const Matrix& logits, const EnsembleTemperatureScaling& e);
double ets_nll(const Matrix& logits, const LabelVector& labels,
               const EnsembleTemperatureScaling& e);

HistogramBinning fit_histogram_binning(const Matrix& probs, const LabelVector& labels,
                                       const BinningScheme& scheme);
/// Replaces the top-label confidence with its bin value and rescales the other
/// classes to share the remaining mass in their original proportions.
Matrix apply_histogram_binning(const Matrix& probs, const HistogramBinning& h);

/// Fits the requested base method on logits. HB is fitted on softmax(logits).
Calibrator fit_calibrator(CalibratorTag tag, const Matrix& logits, const LabelVector& labels,
                          const OptimizerConfig& cfg = {});

}  // namespace pcecal
