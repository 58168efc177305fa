// Copyright 2026 The LMSeg Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace lmseg {

enum class ErrorCode {
  ParseError,
  UnsupportedFormat,
  EmptyMesh,
  DegenerateFace,
  OutOfRange,
  InvalidFeatureSpec,
  KTooLarge,
  ShapeMismatch,
  IndexOutOfRange,
  NonFiniteValue,
  NonFiniteGradient,
  NonFiniteLoss,
  InvalidLabel,
  AllZero,
  LengthMismatch,
  SpecMismatch,
  InvalidConfig,
  IoError,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::UnsupportedFormat: return "UnsupportedFormat";
    case ErrorCode::EmptyMesh: return "EmptyMesh";
    case ErrorCode::DegenerateFace: return "DegenerateFace";
    case ErrorCode::OutOfRange: return "OutOfRange";
    case ErrorCode::InvalidFeatureSpec: return "InvalidFeatureSpec";
    case ErrorCode::KTooLarge: return "KTooLarge";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::NonFiniteValue: return "NonFiniteValue";
    case ErrorCode::NonFiniteGradient: return "NonFiniteGradient";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::InvalidLabel: return "InvalidLabel";
    case ErrorCode::AllZero: return "AllZero";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::SpecMismatch: return "SpecMismatch";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

/// Library-wide exception. The code drives CLI exit statuses.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

}  // namespace lmseg
