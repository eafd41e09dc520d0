// Copyright 2026 The pce-cal Authors
// SPDX-License-Identifier: Apache-2.0

#include "pcecal/dataset_io.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <vector>

#include "pcecal/error.hpp"

namespace pcecal {
namespace {

static_assert(std::endian::native == std::endian::little,
              "NPY payloads are read and written as host-order little-endian");

constexpr std::string_view kMagic = "\x93NUMPY";
constexpr std::size_t kPreambleSize = 10;  // magic + version + u16 header length
constexpr std::size_t kHeaderAlign = 64;

enum class DType { kF4, kF8, kI8 };

std::size_t dtype_size(DType t) { return t == DType::kF4 ? 4 : 8; }

struct NpyHeader {
  DType dtype;
  std::vector<std::size_t> shape;
  std::size_t payload_offset;
};

[[noreturn]] void parse_fail(std::size_t offset, const std::string& what) {
  throw Error(ErrorKind::kParse, "npy: " + what + " (byte offset " + std::to_string(offset) + ")");
}

std::string header_text(std::string_view descr, std::size_t rows, std::size_t cols, bool rank1) {
  std::string shape = rank1 ? "(" + std::to_string(rows) + ",)"
                            : "(" + std::to_string(rows) + ", " + std::to_string(cols) + ")";
  std::string dict = "{'descr': '" + std::string(descr) + "', 'fortran_order': False, 'shape': " +
                     shape + ", }";
  // Pad with spaces so preamble + dict + '\n' lands on a 64-byte boundary.
  const std::size_t unpadded = kPreambleSize + dict.size() + 1;
  const std::size_t total = (unpadded + kHeaderAlign - 1) / kHeaderAlign * kHeaderAlign;
  dict.append(total - unpadded, ' ');
  dict.push_back('\n');
  std::string out(kMagic);
  out.push_back('\x01');
  out.push_back('\x00');
  const auto len = static_cast<std::uint16_t>(dict.size());
  out.push_back(static_cast<char>(len & 0xff));
  out.push_back(static_cast<char>(len >> 8));
  out += dict;
  return out;
}

// Locates `'key':` inside the header dict and returns the offset just past it.
std::size_t find_key(std::string_view dict, std::string_view key, std::size_t base) {
  const std::string needle = "'" + std::string(key) + "'";
  auto pos = dict.find(needle);
  if (pos == std::string_view::npos) parse_fail(base, "header is missing key " + needle);
  pos = dict.find(':', pos + needle.size());
  if (pos == std::string_view::npos) parse_fail(base + pos, "malformed header dictionary");
  pos += 1;
  while (pos < dict.size() && dict[pos] == ' ') ++pos;
  return pos;
}

NpyHeader parse_header(std::string_view bytes) {
  if (bytes.size() < kPreambleSize) parse_fail(bytes.size(), "file shorter than NPY preamble");
  if (bytes.substr(0, kMagic.size()) != kMagic) parse_fail(0, "bad magic sequence");
  const auto major = static_cast<unsigned char>(bytes[6]);
  const auto minor = static_cast<unsigned char>(bytes[7]);
  if (major != 1 || minor != 0) {
    parse_fail(6, "unsupported NPY version " + std::to_string(major) + "." + std::to_string(minor));
  }
  const std::size_t hlen = static_cast<unsigned char>(bytes[8]) |
                           (static_cast<std::size_t>(static_cast<unsigned char>(bytes[9])) << 8);
  if (bytes.size() < kPreambleSize + hlen) parse_fail(bytes.size(), "truncated header");
  const std::string_view dict = bytes.substr(kPreambleSize, hlen);

  NpyHeader h{};
  h.payload_offset = kPreambleSize + hlen;

  std::size_t p = find_key(dict, "descr", kPreambleSize);
  if (p >= dict.size() || dict[p] != '\'') parse_fail(kPreambleSize + p, "descr is not a string");
  const auto end = dict.find('\'', p + 1);
  if (end == std::string_view::npos) parse_fail(kPreambleSize + p, "unterminated descr");
  const std::string_view descr = dict.substr(p + 1, end - p - 1);
  if (descr == "<f4") {
    h.dtype = DType::kF4;
  } else if (descr == "<f8") {
    h.dtype = DType::kF8;
  } else if (descr == "<i8") {
    h.dtype = DType::kI8;
  } else {
    parse_fail(kPreambleSize + p, "unsupported dtype '" + std::string(descr) + "'");
  }

  p = find_key(dict, "fortran_order", kPreambleSize);
  if (dict.substr(p, 4) == "True") {
    parse_fail(kPreambleSize + p, "fortran_order arrays are not supported");
  } else if (dict.substr(p, 5) != "False") {
    parse_fail(kPreambleSize + p, "fortran_order is not a boolean");
  }

  p = find_key(dict, "shape", kPreambleSize);
  if (p >= dict.size() || dict[p] != '(') parse_fail(kPreambleSize + p, "shape is not a tuple");
  const auto close = dict.find(')', p);
  if (close == std::string_view::npos) parse_fail(kPreambleSize + p, "unterminated shape");
  std::string_view tuple = dict.substr(p + 1, close - p - 1);
  while (!tuple.empty()) {
    while (!tuple.empty() && (tuple.front() == ' ' || tuple.front() == ',')) tuple.remove_prefix(1);
    if (tuple.empty()) break;
    std::size_t dim = 0;
    auto [ptr, ec] = std::from_chars(tuple.data(), tuple.data() + tuple.size(), dim);
    if (ec != std::errc()) parse_fail(kPreambleSize + p, "bad shape entry");
    h.shape.push_back(dim);
    tuple.remove_prefix(static_cast<std::size_t>(ptr - tuple.data()));
  }
  if (h.shape.empty() || h.shape.size() > 2) {
    parse_fail(kPreambleSize + p, "only rank-1 and rank-2 arrays are supported, got rank " +
                                      std::to_string(h.shape.size()));
  }
  return h;
}

std::pair<std::size_t, std::size_t> matrix_shape(const NpyHeader& h) {
  return {h.shape[0], h.shape.size() == 2 ? h.shape[1] : 1};
}

void check_payload(std::string_view bytes, const NpyHeader& h, std::size_t count) {
  const std::size_t need = h.payload_offset + count * dtype_size(h.dtype);
  if (bytes.size() < need) {
    parse_fail(bytes.size(), "truncated payload: expected " + std::to_string(need) + " bytes");
  }
}

template <typename T>
T read_at(std::string_view bytes, std::size_t offset) {
  T v;
  std::memcpy(&v, bytes.data() + offset, sizeof(T));
  return v;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return std::move(ss).str();
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::kIo, "cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorKind::kIo, "write failed for " + path.string());
}

Label whole_number_label(double v, std::size_t row) {
  if (!std::isfinite(v) || v < 0 || v != std::floor(v) || v > 4294967295.0) {
    throw Error(ErrorKind::kParse, "label at row " + std::to_string(row) +
                                       " is not a non-negative whole number");
  }
  return static_cast<Label>(v);
}

}  // namespace

std::string_view to_string(SplitRole role) noexcept {
  switch (role) {
    case SplitRole::kValidation: return "val";
    case SplitRole::kHoldout: return "ho";
    case SplitRole::kTest: return "test";
  }
  return "?";
}

SplitRole parse_split_role(std::string_view name) {
  if (name == "val" || name == "validation") return SplitRole::kValidation;
  if (name == "ho" || name == "holdout") return SplitRole::kHoldout;
  if (name == "test") return SplitRole::kTest;
  throw Error(ErrorKind::kInvalidInput, "unknown split role '" + std::string(name) + "'");
}

const LabelVector& Dataset::require_labels() const {
  if (!labels) {
    throw Error(ErrorKind::kFit,
                std::string("split '") + std::string(to_string(role)) + "' has no labels");
  }
  return *labels;
}

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
  Dataset out;
  out.features = features.select_rows(rows);
  out.logits = logits.select_rows(rows);
  if (labels) out.labels = labels->select(rows);
  out.role = role;
  return out;
}

std::string encode_npy(const Matrix& m) {
  std::string out = header_text("<f8", m.rows(), m.cols(), false);
  const auto data = m.data();
  const std::size_t at = out.size();
  out.resize(at + data.size() * sizeof(double));
  if (!data.empty()) std::memcpy(out.data() + at, data.data(), data.size() * sizeof(double));
  return out;
}

std::string encode_npy_labels(const LabelVector& labels) {
  std::string out = header_text("<i8", labels.size(), 1, true);
  for (Label l : labels.values()) {
    const auto v = static_cast<std::int64_t>(l);
    out.append(reinterpret_cast<const char*>(&v), sizeof v);
  }
  return out;
}

Matrix decode_npy(std::string_view bytes) {
  const NpyHeader h = parse_header(bytes);
  const auto [rows, cols] = matrix_shape(h);
  const std::size_t count = rows * cols;
  check_payload(bytes, h, count);
  std::vector<double> data(count);
  const std::size_t width = dtype_size(h.dtype);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t at = h.payload_offset + i * width;
    switch (h.dtype) {
      case DType::kF4: data[i] = read_at<float>(bytes, at); break;
      case DType::kF8: data[i] = read_at<double>(bytes, at); break;
      case DType::kI8: data[i] = static_cast<double>(read_at<std::int64_t>(bytes, at)); break;
    }
  }
  return Matrix(rows, cols, std::move(data));
}

LabelVector decode_npy_labels(std::string_view bytes) {
  const NpyHeader h = parse_header(bytes);
  const auto [rows, cols] = matrix_shape(h);
  if (cols != 1) {
    throw Error(ErrorKind::kDimension,
                "labels must be rank 1 or a single column, got " + std::to_string(cols) + " columns");
  }
  if (h.dtype != DType::kI8) return labels_from_matrix(decode_npy(bytes));
  check_payload(bytes, h, rows);
  std::vector<Label> out(rows);
  for (std::size_t i = 0; i < rows; ++i) {
    const auto v = read_at<std::int64_t>(bytes, h.payload_offset + i * 8);
    if (v < 0 || v > 4294967295LL) {
      throw Error(ErrorKind::kRange, "label at row " + std::to_string(i) + " is out of range");
    }
    out[i] = static_cast<Label>(v);
  }
  return LabelVector(std::move(out));
}

Matrix load_npy(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  try {
    return decode_npy(bytes);
  } catch (const Error& e) {
    throw Error(e.kind(), path.string() + ": " + e.what());
  }
}

void save_npy(const Matrix& m, const std::filesystem::path& path) {
  write_file(path, encode_npy(m));
}

void save_npy(const LabelVector& labels, const std::filesystem::path& path) {
  write_file(path, encode_npy_labels(labels));
}

Matrix parse_csv(std::string_view text, bool has_header) {
  std::vector<double> data;
  std::size_t cols = 0;
  std::size_t rows = 0;
  std::size_t line_no = 0;
  bool header_pending = has_header;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    if (header_pending) {
      header_pending = false;
      continue;
    }
    std::size_t fields = 0;
    while (true) {
      const auto comma = line.find(',');
      std::string_view cell = line.substr(0, comma);
      while (!cell.empty() && (cell.front() == ' ' || cell.front() == '\t')) cell.remove_prefix(1);
      while (!cell.empty() && (cell.back() == ' ' || cell.back() == '\t')) cell.remove_suffix(1);
      if (!cell.empty() && cell.front() == '+') cell.remove_prefix(1);
      double v = 0.0;
      auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (cell.empty() || ec != std::errc() || ptr != cell.data() + cell.size()) {
        throw Error(ErrorKind::kParse, "csv: non-numeric cell '" + std::string(cell) +
                                           "' at line " + std::to_string(line_no));
      }
      data.push_back(v);
      ++fields;
      if (comma == std::string_view::npos) break;
      line.remove_prefix(comma + 1);
    }
    if (rows == 0) {
      cols = fields;
    } else if (fields != cols) {
      throw Error(ErrorKind::kParse, "csv: ragged row at line " + std::to_string(line_no) +
                                         " (" + std::to_string(fields) + " fields, expected " +
                                         std::to_string(cols) + ")");
    }
    ++rows;
  }
  return Matrix(rows, cols, std::move(data));
}

Matrix load_csv(const std::filesystem::path& path, bool has_header) {
  try {
    return parse_csv(read_file(path), has_header);
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::kIo) throw;
    throw Error(e.kind(), path.string() + ": " + e.what());
  }
}

Matrix load_matrix(const std::filesystem::path& path) {
  if (path.extension() == ".csv") return load_csv(path, false);
  return load_npy(path);
}

LabelVector labels_from_matrix(const Matrix& m) {
  if (m.cols() != 1 && m.rows() != 0) {
    throw Error(ErrorKind::kDimension, "labels must be a single column, got " +
                                           std::to_string(m.cols()) + " columns");
  }
  std::vector<Label> out(m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i) out[i] = whole_number_label(m(i, 0), i);
  return LabelVector(std::move(out));
}

LabelVector load_labels(const std::filesystem::path& path) {
  try {
    if (path.extension() == ".csv") return labels_from_matrix(load_csv(path, false));
    return decode_npy_labels(read_file(path));
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::kIo) throw;
    throw Error(e.kind(), path.string() + ": " + e.what());
  }
}

Dataset make_dataset(Matrix features, Matrix logits, std::optional<LabelVector> labels,
                     SplitRole role) {
  const std::size_t n_labels = labels ? labels->size() : logits.rows();
  if (features.rows() != logits.rows() || n_labels != logits.rows()) {
    throw Error(ErrorKind::kDimension,
                "row counts disagree: features " + std::to_string(features.rows()) + ", logits " +
                    std::to_string(logits.rows()) + ", labels " +
                    (labels ? std::to_string(labels->size()) : std::string("absent")));
  }
  if (logits.cols() < 2) {
    throw Error(ErrorKind::kDimension, "logits need at least 2 classes, got " +
                                           std::to_string(logits.cols()));
  }
  if (features.cols() < 1) throw Error(ErrorKind::kDimension, "features need at least 1 column");
  if (!labels && role != SplitRole::kTest) {
    throw Error(ErrorKind::kInvalidInput,
                std::string("labels are required for split '") + std::string(to_string(role)) + "'");
  }
  require_finite(features, "features");
  require_finite(logits, "logits");
  if (labels) labels->validate(logits.cols());
  return Dataset{std::move(features), std::move(logits), std::move(labels), role};
}

Dataset assemble_dataset(const std::filesystem::path& features_path,
                         const std::filesystem::path& logits_path,
                         const std::optional<std::filesystem::path>& labels_path,
                         SplitRole role) {
  Matrix features = load_matrix(features_path);
  Matrix logits = load_matrix(logits_path);
  std::optional<LabelVector> labels;
  if (labels_path) labels = load_labels(*labels_path);
  return make_dataset(std::move(features), std::move(logits), std::move(labels), role);
}

}  // namespace pcecal
