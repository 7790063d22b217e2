// Copyright 2026 The hetcomm Authors
// SPDX-License-Identifier: Apache-2.0

#include "hetcomm/error.h"

#include <atomic>
#include <iostream>

namespace hetcomm {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kParseError: return "ParseError";
    case ErrorCode::kValidationError: return "ValidationError";
    case ErrorCode::kRankOutOfRange: return "RankOutOfRange";
    case ErrorCode::kAllocError: return "AllocError";
    case ErrorCode::kCrossRankCopy: return "CrossRankCopy";
    case ErrorCode::kWrongSpace: return "WrongSpace";
    case ErrorCode::kQpClosed: return "QpClosed";
    case ErrorCode::kSizeMismatch: return "SizeMismatch";
    case ErrorCode::kMixedVendorGroup: return "MixedVendorGroup";
    case ErrorCode::kChannelClosed: return "ChannelClosed";
    case ErrorCode::kTimeout: return "Timeout";
    case ErrorCode::kLengthMismatch: return "LengthMismatch";
    case ErrorCode::kPathMismatch: return "PathMismatch";
    case ErrorCode::kSelfSend: return "SelfSend";
    case ErrorCode::kEmptyGroup: return "EmptyGroup";
    case ErrorCode::kShapeError: return "ShapeError";
    case ErrorCode::kRootNotInGroup: return "RootNotInGroup";
    case ErrorCode::kGridMismatch: return "GridMismatch";
    case ErrorCode::kHeterogeneityNotSupported: return "HeterogeneityNotSupported";
    case ErrorCode::kInvalidPlan: return "InvalidPlan";
    case ErrorCode::kInfeasible: return "Infeasible";
    case ErrorCode::kDiverged: return "DivergedError";
    case ErrorCode::kIoError: return "IoError";
    case ErrorCode::kSpecError: return "SpecError";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& what)
    : std::runtime_error(std::string(error_code_name(code)) + ": " + what),
      code_(code) {}

void raise(ErrorCode code, const std::string& what) { throw Error(code, what); }

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kParseError: return 2;
    case ErrorCode::kValidationError: return 3;
    case ErrorCode::kSpecError: return 4;
    case ErrorCode::kIoError: return 5;
    case ErrorCode::kGridMismatch:
    case ErrorCode::kHeterogeneityNotSupported: return 6;
    case ErrorCode::kInvalidPlan:
    case ErrorCode::kInfeasible: return 7;
    case ErrorCode::kDiverged: return 8;
    case ErrorCode::kTimeout: return 9;
    default: return 10;  // communication / runtime errors
  }
}

namespace {

void stderr_sink(std::string_view message) {
  std::cerr << "hetcomm: warning: " << message << '\n';
}

std::atomic<WarningSink> g_sink{&stderr_sink};

}  // namespace

void set_warning_sink(WarningSink sink) {
  g_sink.store(sink ? sink : &stderr_sink);
}

void warn(std::string_view message) { g_sink.load()(message); }

}  // namespace hetcomm
