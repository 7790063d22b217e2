// Copyright 2026 The hetcomm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace hetcomm {

// Every failure surfaced by the library carries one of these codes. The CLI
// maps them onto process exit codes (see exit_code_for).
enum class ErrorCode {
  kParseError,
  kValidationError,
  kRankOutOfRange,
  kAllocError,
  kCrossRankCopy,
  kWrongSpace,
  kQpClosed,
  kSizeMismatch,
  kMixedVendorGroup,
  kChannelClosed,
  kTimeout,
  kLengthMismatch,
  kPathMismatch,
  kSelfSend,
  kEmptyGroup,
  kShapeError,
  kRootNotInGroup,
  kGridMismatch,
  kHeterogeneityNotSupported,
  kInvalidPlan,
  kInfeasible,
  kDiverged,
  kIoError,
  kSpecError,
};

std::string_view error_code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] void raise(ErrorCode code, const std::string& what);

// Process exit code for an error class. 0 is reserved for success and 1 for
// unexpected (non-hetcomm) failures.
int exit_code_for(ErrorCode code);

// Warnings are routed through a replaceable sink (stderr by default).
using WarningSink = void (*)(std::string_view message);
void set_warning_sink(WarningSink sink);
void warn(std::string_view message);

}  // namespace hetcomm
