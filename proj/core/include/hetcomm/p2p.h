// Copyright 2026 The hetcomm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <future>
#include <span>
#include <vector>

#include "hetcomm/adaptors.h"
#include "hetcomm/cluster.h"
#include "hetcomm/path.h"
#include "hetcomm/transport.h"

namespace hetcomm {

// ---------------------------------------------------------------------------
// Chunk wire format (big-endian):
//   magic u32 = 0x48435043 | path u8 (0 cpu_forwarding, 1 device_direct) |
//   chunk index u32 | total chunks u32 | payload length u32 | payload

inline constexpr std::uint32_t kChunkMagic = 0x48435043;
inline constexpr std::size_t kChunkHeaderSize = 17;

struct ChunkHeader {
  TransferPath path = TransferPath::kDeviceDirect;
  std::uint32_t index = 0;
  std::uint32_t total = 0;
  std::uint32_t payload_length = 0;

  friend bool operator==(const ChunkHeader&, const ChunkHeader&) = default;
};

Bytes encode_chunk(const ChunkHeader& header, std::span<const std::byte> payload);
// Throws ParseError on short frames, bad magic, an unknown path tag, or a
// payload length that disagrees with the frame.
ChunkHeader decode_chunk_header(std::span<const std::byte> frame);
std::span<const std::byte> chunk_payload(std::span<const std::byte> frame);

// Number of chunks a payload is cut into (a 0-byte payload is one chunk).
std::uint32_t chunk_count(std::uint64_t size_bytes, const ChunkConfig& cfg);

// ---------------------------------------------------------------------------
// Cost model

struct TransferCost {
  double duration_us = 0.0;
  std::uint32_t chunks = 0;
  // Three segments per chunk, in pipeline-stage order:
  //   cpu_forwarding: host_bridge (D2H), link, host_bridge (H2D)
  //   device_direct:  d2d_copy, link, d2d_copy
  std::vector<Segment> segments;
};

// Simulated timing of moving `size_bytes` from src to dst over `path`: each
// chunk flows through three stages and chunks are pipelined.
TransferCost transfer_cost(const ClusterTopology& topology, int src, int dst,
                           std::uint64_t size_bytes, TransferPath path, const ChunkConfig& cfg);

// Simulated duration of what p2p_dispatch would do for this pair: the
// vendor CCL for same-vendor pairs, the chunked transfer otherwise.
double dispatch_cost(const ClusterTopology& topology, int src, int dst,
                     std::uint64_t size_bytes, TransferPath path, const ChunkConfig& cfg);

// ---------------------------------------------------------------------------
// Heterogeneous point-to-point. p2p_send and p2p_recv run in the two rank
// contexts and block until the transfer completes; the receiver must post
// the same size and path. Throws PathMismatch, SizeMismatch.

TransferRecord p2p_send(Cluster& cluster, int src, int dst, const DeviceBuffer& payload,
                        TransferPath path, const ChunkConfig& cfg);
P2pDelivery p2p_recv(Cluster& cluster, int dst, int src, std::size_t size_bytes,
                     TransferPath path, const ChunkConfig& cfg);

// Drives both endpoints from one caller (the sender on a helper thread).
P2pDelivery p2p_transfer(Cluster& cluster, int src, int dst, const DeviceBuffer& payload,
                         TransferPath path, const ChunkConfig& cfg);

// Routes same-vendor pairs to the vendor CCL and cross-vendor pairs to the
// cluster's configured heterogeneous path. Throws SelfSend.
P2pDelivery p2p_dispatch(Cluster& cluster, int src, int dst, const DeviceBuffer& payload,
                         const ChunkConfig& cfg);
P2pDelivery p2p_dispatch(Cluster& cluster, int src, int dst, const DeviceBuffer& payload);

// Split-phase variants of p2p_dispatch for per-rank contexts.
TransferRecord p2p_dispatch_send(Cluster& cluster, int src, int dst,
                                 const DeviceBuffer& payload);
P2pDelivery p2p_dispatch_recv(Cluster& cluster, int dst, int src, std::size_t size_bytes);

// Non-blocking send: owns the payload until wait() returns.
class SendHandle {
 public:
  SendHandle() = default;
  bool valid() const noexcept { return future_.valid(); }
  TransferRecord wait();

 private:
  friend SendHandle p2p_dispatch_isend(Cluster&, int, int, DeviceBuffer);
  std::future<TransferRecord> future_;
};

SendHandle p2p_dispatch_isend(Cluster& cluster, int src, int dst, DeviceBuffer payload);

// ---------------------------------------------------------------------------
// Multi-NIC assignment: each device uses its own NIC when the node has at
// least as many NICs as devices; otherwise NICs are shared round-robin and a
// warning is emitted.
int assign_nic(const ClusterTopology& topology, int rank);

}  // namespace hetcomm
