// Copyright 2026 The pce-cal Authors
// SPDX-License-Identifier: Apache-2.0

// Dense row-major matrices and the softmax family of row kernels.

#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <vector>

namespace pcecal {

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }

  std::span<const double> data() const noexcept { return data_; }
  std::span<double> data() noexcept { return data_; }

  /// Rows selected by index, in the given order.
  Matrix select_rows(std::span<const std::size_t> indices) const;

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

using Label = std::uint32_t;

/// Class indices; expanded to one-hot only where a metric needs it.
class LabelVector {
 public:
  LabelVector() = default;
  explicit LabelVector(std::vector<Label> labels) : labels_(std::move(labels)) {}
  LabelVector(std::initializer_list<Label> labels) : labels_(labels) {}

  std::size_t size() const noexcept { return labels_.size(); }
  bool empty() const noexcept { return labels_.empty(); }
  Label operator[](std::size_t i) const { return labels_[i]; }
  std::span<const Label> values() const noexcept { return labels_; }

  LabelVector select(std::span<const std::size_t> indices) const;
  /// Throws kRange if any label is >= num_classes.
  void validate(std::size_t num_classes) const;

  bool operator==(const LabelVector&) const = default;

 private:
  std::vector<Label> labels_;
};

/// Throws kInvalidInput naming the first row holding a NaN or infinity.
void require_finite(const Matrix& m, const char* what);

/// Row-wise softmax with max subtraction.
Matrix softmax_rows(const Matrix& logits);

/// Row-wise softmax of logits / temperature.
Matrix softmax_rows(const Matrix& logits, double temperature);

std::vector<double> log_sum_exp_rows(const Matrix& logits);

/// Per-row argmax; ties go to the lowest index.
std::vector<std::size_t> argmax_rows(const Matrix& m);

// Single-row kernels shared by the calibrators and the grouping loss.
double log_sum_exp(std::span<const double> values) noexcept;
void softmax_inplace(std::span<double> values) noexcept;
std::size_t argmax(std::span<const double> values) noexcept;

}  // namespace pcecal
