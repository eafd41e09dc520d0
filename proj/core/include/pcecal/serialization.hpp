// Copyright 2026 The pce-cal Authors
// SPDX-License-Identifier: Apache-2.0

// JSON documents: the versioned ensemble model file and metric reports.

#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "pcecal/ensemble.hpp"
#include "pcecal/metrics.hpp"

namespace pcecal {

inline constexpr std::string_view kModelSchema = "pce-cal/1";

std::string ensemble_to_json(const PartitionEnsemble& ensemble);
/// Throws kParse on malformed JSON, a wrong schema tag, or inconsistent shapes.
PartitionEnsemble ensemble_from_json(std::string_view text);

void save_ensemble(const PartitionEnsemble& ensemble, const std::filesystem::path& path);
PartitionEnsemble load_ensemble(const std::filesystem::path& path);

std::string calibrator_to_json(const Calibrator& calibrator);
Calibrator calibrator_from_json(std::string_view text);

std::string report_to_json(const MetricReport& report);
std::string reports_to_json(const std::vector<MetricReport>& reports);
std::string evaluation_to_json(const Evaluation& evaluation);

}  // namespace pcecal
