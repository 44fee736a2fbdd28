// Copyright 2026 The distpriv Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>

namespace distpriv {

enum class ErrorCode {
  kInput,        // malformed or out-of-domain argument
  kConfig,       // experiment / pair-family configuration problem
  kParameter,    // privacy or noise parameter out of range
  kEstimation,   // not enough data to estimate a model
  kAssumption,   // modeling assumption of a mechanism does not hold
  kNumeric,      // singular or otherwise unusable matrix
  kParse,        // unparsable field in an input file
  kFormat,       // structurally wrong input file
  kSampling,     // not enough records to draw a subset
  kTraining,     // classifier cannot be trained on the given data
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInput: return "input error";
    case ErrorCode::kConfig: return "configuration error";
    case ErrorCode::kParameter: return "parameter error";
    case ErrorCode::kEstimation: return "estimation error";
    case ErrorCode::kAssumption: return "assumption violation";
    case ErrorCode::kNumeric: return "numeric error";
    case ErrorCode::kParse: return "parse error";
    case ErrorCode::kFormat: return "format error";
    case ErrorCode::kSampling: return "sampling error";
    case ErrorCode::kTraining: return "training error";
  }
  return "error";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code),
        message_(message) {}

  ErrorCode code() const noexcept { return code_; }
  // The message without the code prefix.
  const std::string& message() const noexcept { return message_; }

 private:
  ErrorCode code_;
  std::string message_;
};

// Raised when a mechanism's modeling assumption fails; carries the
// offending ordered pair (indices into the family catalog) when known.
class AssumptionViolation : public Error {
 public:
  AssumptionViolation(const std::string& message,
                      std::optional<std::pair<std::size_t, std::size_t>> pair =
                          std::nullopt)
      : Error(ErrorCode::kAssumption, message), pair_(pair) {}

  const std::optional<std::pair<std::size_t, std::size_t>>& pair() const {
    return pair_;
  }

 private:
  std::optional<std::pair<std::size_t, std::size_t>> pair_;
};

// Parse failure in a line-oriented input file.
class ParseError : public Error {
 public:
  ParseError(const std::string& message, std::size_t line)
      : Error(ErrorCode::kParse,
              message + " (line " + std::to_string(line) + ")"),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

namespace detail {

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

inline void require(bool condition, ErrorCode code, const std::string& message) {
  if (!condition) throw Error(code, message);
}

}  // namespace detail
}  // namespace distpriv
