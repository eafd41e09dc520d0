// Copyright 2026 The pce-cal Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace pcecal {

enum class ErrorKind {
  kInvalidInput,  // malformed values (non-finite logits, unnormalized rows)
  kParse,         // NPY/CSV/JSON decoding
  kDimension,     // shape disagreement between aligned arrays
  kRange,         // value outside its documented domain
  kIo,            // filesystem failure
  kFit,           // a fit could not start (empty split, missing labels)
  kNumeric,       // optimization produced non-finite values
};

std::string_view to_string(ErrorKind kind) noexcept;

/// Single exception type for the library. The kind is what callers branch on;
/// the message is for humans.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace pcecal
