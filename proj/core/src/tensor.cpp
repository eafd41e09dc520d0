// Copyright 2026 The pce-cal Authors
// SPDX-License-Identifier: Apache-2.0

#include "pcecal/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "pcecal/error.hpp"

namespace pcecal {

std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::kInvalidInput: return "invalid input";
    case ErrorKind::kParse: return "parse error";
    case ErrorKind::kDimension: return "dimension error";
    case ErrorKind::kRange: return "range error";
    case ErrorKind::kIo: return "i/o error";
    case ErrorKind::kFit: return "fit error";
    case ErrorKind::kNumeric: return "numeric error";
  }
  return "error";
}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw Error(ErrorKind::kDimension,
                "matrix data length " + std::to_string(data_.size()) + " != " +
                    std::to_string(rows_) + " x " + std::to_string(cols_));
  }
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows)
    : rows_(rows.size()), cols_(rows.size() ? rows.begin()->size() : 0) {
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw Error(ErrorKind::kDimension, "ragged matrix literal");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

Matrix Matrix::select_rows(std::span<const std::size_t> indices) const {
  Matrix out(indices.size(), cols_);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    auto src = row(indices[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

LabelVector LabelVector::select(std::span<const std::size_t> indices) const {
  std::vector<Label> out;
  out.reserve(indices.size());
  for (auto i : indices) out.push_back(labels_[i]);
  return LabelVector(std::move(out));
}

void LabelVector::validate(std::size_t num_classes) const {
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    if (labels_[i] >= num_classes) {
      throw Error(ErrorKind::kRange, "label " + std::to_string(labels_[i]) + " at row " +
                                         std::to_string(i) + " is not below class count " +
                                         std::to_string(num_classes));
    }
  }
}

void require_finite(const Matrix& m, const char* what) {
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (double v : m.row(r)) {
      if (!std::isfinite(v)) {
        throw Error(ErrorKind::kInvalidInput,
                    std::string(what) + ": non-finite value in row " + std::to_string(r));
      }
    }
  }
}

double log_sum_exp(std::span<const double> values) noexcept {
  if (values.empty()) return -INFINITY;
  const double hi = *std::max_element(values.begin(), values.end());
  double acc = 0.0;
  for (double v : values) acc += std::exp(v - hi);
  return hi + std::log(acc);
}

void softmax_inplace(std::span<double> values) noexcept {
  if (values.empty()) return;
  const double hi = *std::max_element(values.begin(), values.end());
  double total = 0.0;
  for (double& v : values) {
    v = std::exp(v - hi);
    total += v;
  }
  for (double& v : values) v /= total;
}

std::size_t argmax(std::span<const double> values) noexcept {
  std::size_t best = 0;
  for (std::size_t j = 1; j < values.size(); ++j) {
    if (values[j] > values[best]) best = j;
  }
  return best;
}

Matrix softmax_rows(const Matrix& logits) {
  require_finite(logits, "softmax_rows");
  Matrix out = logits;
  for (std::size_t r = 0; r < out.rows(); ++r) softmax_inplace(out.row(r));
  return out;
}

Matrix softmax_rows(const Matrix& logits, double temperature) {
  require_finite(logits, "softmax_rows");
  Matrix out = logits;
  for (double& v : out.data()) v /= temperature;
  for (std::size_t r = 0; r < out.rows(); ++r) softmax_inplace(out.row(r));
  return out;
}

std::vector<double> log_sum_exp_rows(const Matrix& logits) {
  require_finite(logits, "log_sum_exp_rows");
  std::vector<double> out(logits.rows());
  for (std::size_t r = 0; r < logits.rows(); ++r) out[r] = log_sum_exp(logits.row(r));
  return out;
}

std::vector<std::size_t> argmax_rows(const Matrix& m) {
  std::vector<std::size_t> out(m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r) out[r] = argmax(m.row(r));
  return out;
}

}  // namespace pcecal
