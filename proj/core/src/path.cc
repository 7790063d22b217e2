// Copyright 2026 The hetcomm Authors
// SPDX-License-Identifier: Apache-2.0

#include "hetcomm/path.h"

#include "hetcomm/error.h"

namespace hetcomm {

std::string_view transfer_path_name(TransferPath path) {
  switch (path) {
    case TransferPath::kCpuForwarding: return "cpu_forwarding";
    case TransferPath::kDeviceDirect: return "device_direct";
  }
  return "unknown";
}

std::optional<TransferPath> parse_transfer_path(std::string_view text) {
  if (text == "cpu" || text == "cpu_forwarding") return TransferPath::kCpuForwarding;
  if (text == "direct" || text == "device_direct") return TransferPath::kDeviceDirect;
  return std::nullopt;
}

RecordPath record_path_for(TransferPath path) {
  return path == TransferPath::kCpuForwarding ? RecordPath::kCpuForwarding
                                              : RecordPath::kDeviceDirect;
}

void ChunkConfig::validate() const {
  if (chunk_size_bytes == 0) raise(ErrorCode::kValidationError, "chunk_size_bytes must be > 0");
  if (chunk_size_bytes > 0xFFFFFFFFu) {
    raise(ErrorCode::kValidationError, "chunk_size_bytes must fit the 32-bit length field");
  }
  if (chunks_in_flight < 1) raise(ErrorCode::kValidationError, "chunks_in_flight must be >= 1");
}

}  // namespace hetcomm
