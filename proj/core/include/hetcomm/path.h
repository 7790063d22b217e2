// Copyright 2026 The hetcomm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <optional>
#include <string_view>

#include "hetcomm/transport.h"

namespace hetcomm {

// How a heterogeneous (cross-vendor) point-to-point transfer moves data.
enum class TransferPath {
  kCpuForwarding,  // D2H -> host network -> H2D
  kDeviceDirect,   // D2D into a registered chunk buffer -> NIC -> D2D out
};

std::string_view transfer_path_name(TransferPath path);
// Accepts "cpu", "cpu_forwarding", "direct", "device_direct".
std::optional<TransferPath> parse_transfer_path(std::string_view text);
RecordPath record_path_for(TransferPath path);

struct ChunkConfig {
  std::size_t chunk_size_bytes = std::size_t{4} << 20;
  int chunks_in_flight = 2;

  // Throws ValidationError.
  void validate() const;
};

}  // namespace hetcomm
