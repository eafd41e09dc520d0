// Copyright 2026 The pce-cal Authors
// SPDX-License-Identifier: Apache-2.0

// NPY v1.0 / CSV readers and writers, and the validated three-split dataset.
//
// NPY support covers what classifier exporters actually emit: little-endian
// float32, float64 and int64 arrays of rank 1 or 2 in C order. Everything is
// widened to double on load. Rank-1 arrays load as single-column matrices.

#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>

#include "pcecal/tensor.hpp"

namespace pcecal {

enum class SplitRole { kValidation, kHoldout, kTest };

std::string_view to_string(SplitRole role) noexcept;
/// Accepts "val"/"validation", "ho"/"holdout", "test".
SplitRole parse_split_role(std::string_view name);

struct Dataset {
  Matrix features;  // N x d_z
  Matrix logits;    // N x M
  std::optional<LabelVector> labels;
  SplitRole role = SplitRole::kValidation;

  std::size_t size() const noexcept { return logits.rows(); }
  std::size_t num_classes() const noexcept { return logits.cols(); }
  std::size_t feature_dim() const noexcept { return features.cols(); }
  bool labeled() const noexcept { return labels.has_value(); }
  /// Throws kFit when labels are absent.
  const LabelVector& require_labels() const;

  Dataset subset(std::span<const std::size_t> rows) const;
};

// In-memory NPY codec. decode_npy reports byte offsets in its errors.
std::string encode_npy(const Matrix& m);
Matrix decode_npy(std::string_view bytes);
std::string encode_npy_labels(const LabelVector& labels);
LabelVector decode_npy_labels(std::string_view bytes);

Matrix load_npy(const std::filesystem::path& path);
void save_npy(const Matrix& m, const std::filesystem::path& path);
void save_npy(const LabelVector& labels, const std::filesystem::path& path);

Matrix parse_csv(std::string_view text, bool has_header);
Matrix load_csv(const std::filesystem::path& path, bool has_header);

/// Dispatches on extension: ".csv" goes through load_csv (no header),
/// everything else through load_npy.
Matrix load_matrix(const std::filesystem::path& path);

/// Labels from int64 NPY, or float NPY/CSV whose values are whole numbers.
LabelVector load_labels(const std::filesystem::path& path);
/// Converts a single-column matrix of whole numbers into labels.
LabelVector labels_from_matrix(const Matrix& m);

/// Validates shapes and label range; labels may be absent only for kTest.
Dataset make_dataset(Matrix features, Matrix logits, std::optional<LabelVector> labels,
                     SplitRole role);

Dataset assemble_dataset(const std::filesystem::path& features_path,
                         const std::filesystem::path& logits_path,
                         const std::optional<std::filesystem::path>& labels_path,
                         SplitRole role);

}  // namespace pcecal
