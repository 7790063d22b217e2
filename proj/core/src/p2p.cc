// Copyright 2026 The hetcomm Authors
// SPDX-License-Identifier: Apache-2.0

#include "hetcomm/p2p.h"

#include <algorithm>
#include <cstring>
#include <exception>

#include "hetcomm/error.h"

namespace hetcomm {

namespace {

// Ack frame: status u8 | chunk index u32 | (last chunk only) t_start f64.
enum AckStatus : std::uint8_t {
  kAckOk = 0,
  kAckPathMismatch = 1,
  kAckSizeMismatch = 2,
  kAckAborted = 3,
};

void put_u32(Bytes& out, std::uint32_t v) {
  for (int shift = 24; shift >= 0; shift -= 8) {
    out.push_back(static_cast<std::byte>((v >> shift) & 0xFF));
  }
}

std::uint32_t get_u32(std::span<const std::byte> in, std::size_t offset) {
  std::uint32_t v = 0;
  for (std::size_t i = 0; i < 4; ++i) v = (v << 8) | std::to_integer<std::uint32_t>(in[offset + i]);
  return v;
}

Bytes encode_ack(AckStatus status, std::uint32_t index, std::optional<double> t_start) {
  Bytes out{static_cast<std::byte>(status)};
  put_u32(out, index);
  if (t_start) {
    const std::size_t at = out.size();
    out.resize(at + sizeof(double));
    std::memcpy(out.data() + at, &*t_start, sizeof(double));
  }
  return out;
}

std::uint64_t chunk_length(std::uint64_t size, std::uint32_t index, const ChunkConfig& cfg) {
  const std::uint64_t offset = std::uint64_t{index} * cfg.chunk_size_bytes;
  return std::min<std::uint64_t>(cfg.chunk_size_bytes, size - std::min(size, offset));
}

std::uint8_t path_tag(TransferPath path) {
  return path == TransferPath::kCpuForwarding ? 0 : 1;
}

// Staging memory for one side of a transfer: chunk-space slots registered
// with the NIC on the direct path, plain host buffers when forwarding.
struct Staging {
  std::vector<DeviceBuffer> slots;
  std::vector<MrHandle> regions;
};

Staging make_staging(VendorBackend& backend, int rank, std::uint64_t size, TransferPath path,
                     const ChunkConfig& cfg, std::uint32_t chunks) {
  Staging s;
  const std::size_t slot_size =
      static_cast<std::size_t>(std::min<std::uint64_t>(cfg.chunk_size_bytes, size));
  const std::uint32_t n = std::min<std::uint32_t>(chunks, static_cast<std::uint32_t>(cfg.chunks_in_flight));
  const MemorySpace space =
      path == TransferPath::kDeviceDirect ? MemorySpace::kChunk : MemorySpace::kHost;
  for (std::uint32_t i = 0; i < n; ++i) {
    s.slots.push_back(backend.device->dev_alloc(rank, slot_size, space));
    if (space == MemorySpace::kChunk) s.regions.push_back(backend.net->net_register(s.slots.back()));
  }
  return s;
}

// Empty chunk frame telling the receiver the sender gave up.
void post_abort(Cluster& cluster, int src, int dst) {
  try {
    cluster.transport().post(src, dst, Message{tags::kP2pChunk, {}, 0.0});
  } catch (const Error&) {
    // Channel already closed; nobody is listening.
  }
}

void validate_pair(const Cluster& cluster, int src, int dst) {
  const int n = cluster.world_size();
  for (int r : {src, dst}) {
    if (r < 0 || r >= n) raise(ErrorCode::kRankOutOfRange, "rank " + std::to_string(r));
  }
  if (src == dst) raise(ErrorCode::kSelfSend, "point-to-point send to self (rank " +
                                                  std::to_string(src) + ")");
}

void validate_payload(const DeviceBuffer& payload, int src) {
  if (!payload.valid()) raise(ErrorCode::kValidationError, "payload buffer is not allocated");
  if (payload.owner_rank() != src) {
    raise(ErrorCode::kValidationError, "payload is owned by rank " +
                                           std::to_string(payload.owner_rank()) +
                                           ", not sender " + std::to_string(src));
  }
}

TransferRecord make_record(const ClusterTopology& topology, int src, int dst,
                           std::uint64_t size, TransferPath path, const ChunkConfig& cfg,
                           double t_start) {
  TransferCost cost = transfer_cost(topology, src, dst, size, path, cfg);
  TransferRecord r;
  r.src_rank = src;
  r.dst_rank = dst;
  r.path = record_path_for(path);
  r.size_bytes = size;
  r.t_start_us = t_start;
  r.t_end_us = t_start + cost.duration_us;
  r.segments = std::move(cost.segments);
  return r;
}

}  // namespace

Bytes encode_chunk(const ChunkHeader& header, std::span<const std::byte> payload) {
  if (payload.size() != header.payload_length) {
    raise(ErrorCode::kSizeMismatch, "chunk payload length disagrees with header");
  }
  Bytes out;
  out.reserve(kChunkHeaderSize + payload.size());
  put_u32(out, kChunkMagic);
  out.push_back(static_cast<std::byte>(path_tag(header.path)));
  put_u32(out, header.index);
  put_u32(out, header.total);
  put_u32(out, header.payload_length);
  out.insert(out.end(), payload.begin(), payload.end());
  return out;
}

ChunkHeader decode_chunk_header(std::span<const std::byte> frame) {
  if (frame.size() < kChunkHeaderSize) raise(ErrorCode::kParseError, "chunk frame too short");
  if (get_u32(frame, 0) != kChunkMagic) raise(ErrorCode::kParseError, "bad chunk magic");
  ChunkHeader h;
  switch (std::to_integer<int>(frame[4])) {
    case 0: h.path = TransferPath::kCpuForwarding; break;
    case 1: h.path = TransferPath::kDeviceDirect; break;
    default: raise(ErrorCode::kParseError, "unknown path tag in chunk header");
  }
  h.index = get_u32(frame, 5);
  h.total = get_u32(frame, 9);
  h.payload_length = get_u32(frame, 13);
  if (frame.size() - kChunkHeaderSize != h.payload_length) {
    raise(ErrorCode::kParseError, "chunk payload length disagrees with frame size");
  }
  return h;
}

std::span<const std::byte> chunk_payload(std::span<const std::byte> frame) {
  return frame.subspan(kChunkHeaderSize);
}

std::uint32_t chunk_count(std::uint64_t size_bytes, const ChunkConfig& cfg) {
  if (size_bytes == 0) return 1;
  const std::uint64_t n = (size_bytes + cfg.chunk_size_bytes - 1) / cfg.chunk_size_bytes;
  if (n > 0xFFFFFFFFu) raise(ErrorCode::kValidationError, "too many chunks for one transfer");
  return static_cast<std::uint32_t>(n);
}

TransferCost transfer_cost(const ClusterTopology& topology, int src, int dst,
                           std::uint64_t size_bytes, TransferPath path, const ChunkConfig& cfg) {
  cfg.validate();
  const LinkSpec link = topology.link_between(src, dst);
  const SegmentKind wire_kind = segment_kind_for(link.kind);
  const bool direct = path == TransferPath::kDeviceDirect;
  const MemorySpace staging = direct ? MemorySpace::kChunk : MemorySpace::kHost;
  const SegmentKind copy_kind = direct ? SegmentKind::kD2dCopy : SegmentKind::kHostBridge;

  TransferCost cost;
  cost.chunks = chunk_count(size_bytes, cfg);
  std::vector<std::vector<double>> stages;
  stages.reserve(cost.chunks);
  for (std::uint32_t c = 0; c < cost.chunks; ++c) {
    const std::uint64_t len = chunk_length(size_bytes, c, cfg);
    const double out = sim_copy_duration(topology, src, MemorySpace::kDevice, staging, len);
    const double wire = wire_time(link, len);
    const double in = sim_copy_duration(topology, dst, staging, MemorySpace::kDevice, len);
    cost.segments.push_back({copy_kind, out});
    cost.segments.push_back({wire_kind, wire});
    cost.segments.push_back({copy_kind, in});
    stages.push_back({out, wire, in});
  }
  cost.duration_us = pipelined_time(stages);
  return cost;
}

double dispatch_cost(const ClusterTopology& topology, int src, int dst,
                     std::uint64_t size_bytes, TransferPath path, const ChunkConfig& cfg) {
  if (topology.vendor_of_rank(src) == topology.vendor_of_rank(dst)) {
    return wire_time(topology.link_between(src, dst), size_bytes);
  }
  return transfer_cost(topology, src, dst, size_bytes, path, cfg).duration_us;
}

TransferRecord p2p_send(Cluster& cluster, int src, int dst, const DeviceBuffer& payload,
                        TransferPath path, const ChunkConfig& cfg) {
  validate_pair(cluster, src, dst);
  validate_payload(payload, src);
  cfg.validate();

  Transport& transport = cluster.transport();
  const auto timeout = cluster.options().receive_timeout;
  const std::uint64_t size = payload.size();
  const std::uint32_t total = chunk_count(size, cfg);
  const auto in_flight = static_cast<std::uint32_t>(cfg.chunks_in_flight);
  double t_start = 0.0;

  // Returns once chunk `index` is acknowledged; throws on a nack.
  auto await_ack = [&](std::uint32_t index) {
    Message msg = transport.receive(src, dst, tags::kP2pAck, timeout);
    if (msg.bytes.size() < 5) raise(ErrorCode::kParseError, "short p2p ack");
    const auto status = std::to_integer<std::uint8_t>(msg.bytes[0]);
    if (status == kAckPathMismatch) {
      raise(ErrorCode::kPathMismatch, "receiver rank " + std::to_string(dst) +
                                          " expects a different transfer path than " +
                                          std::string(transfer_path_name(path)));
    }
    if (status == kAckSizeMismatch) {
      raise(ErrorCode::kSizeMismatch, "receiver rank " + std::to_string(dst) +
                                          " expects a different size than " +
                                          std::to_string(size) + " bytes");
    }
    if (status != kAckOk) raise(ErrorCode::kChannelClosed, "receiver aborted the transfer");
    if (get_u32(msg.bytes, 1) != index) raise(ErrorCode::kParseError, "out-of-order p2p ack");
    if (index + 1 == total) {
      if (msg.bytes.size() != 5 + sizeof(double)) raise(ErrorCode::kParseError, "bad final ack");
      std::memcpy(&t_start, msg.bytes.data() + 5, sizeof(double));
    }
  };

  try {
    VendorBackend& backend = cluster.backend_for_rank(src);
    Staging staging = make_staging(backend, src, size, path, cfg, total);
    std::uint32_t acked = 0;
    for (std::uint32_t c = 0; c < total; ++c) {
      if (c >= in_flight) await_ack(acked++);
      DeviceBuffer& slot = staging.slots[c % in_flight];
      const auto len = static_cast<std::size_t>(chunk_length(size, c, cfg));
      backend.device->dev_copy(payload, std::size_t{c} * cfg.chunk_size_bytes, slot, 0, len);
      const ChunkHeader header{path, c, total, static_cast<std::uint32_t>(len)};
      transport.post(src, dst,
                     Message{tags::kP2pChunk, encode_chunk(header, slot.bytes().first(len)),
                             cluster.clock(src).now()});
    }
    while (acked < total) await_ack(acked++);
  } catch (...) {
    post_abort(cluster, src, dst);
    throw;
  }

  TransferRecord record = make_record(cluster.topology(), src, dst, size, path, cfg, t_start);
  cluster.clock(src).advance_to(record.t_end_us);
  return record;
}

P2pDelivery p2p_recv(Cluster& cluster, int dst, int src, std::size_t size_bytes,
                     TransferPath path, const ChunkConfig& cfg) {
  validate_pair(cluster, src, dst);
  cfg.validate();

  Transport& transport = cluster.transport();
  const auto timeout = cluster.options().receive_timeout;
  const std::uint32_t total = chunk_count(size_bytes, cfg);
  const auto in_flight = static_cast<std::uint32_t>(cfg.chunks_in_flight);
  bool sender_aborted = false;
  bool nacked = false;

  auto nack = [&](AckStatus status, std::uint32_t index) {
    nacked = true;
    transport.post(dst, src, Message{tags::kP2pAck, encode_ack(status, index, std::nullopt), 0.0});
  };

  try {
    VendorBackend& backend = cluster.backend_for_rank(dst);
    P2pDelivery out;
    out.buffer = backend.device->dev_alloc(dst, size_bytes, MemorySpace::kDevice);
    Staging staging = make_staging(backend, dst, size_bytes, path, cfg, total);

    for (std::uint32_t c = 0; c < total; ++c) {
      Message msg = transport.receive(dst, src, tags::kP2pChunk, timeout);
      if (msg.bytes.empty()) {
        sender_aborted = true;
        raise(ErrorCode::kChannelClosed, "sender rank " + std::to_string(src) +
                                             " aborted the transfer");
      }
      const ChunkHeader h = decode_chunk_header(msg.bytes);
      if (h.path != path) {
        nack(kAckPathMismatch, c);
        raise(ErrorCode::kPathMismatch,
              "rank " + std::to_string(dst) + " posted " + std::string(transfer_path_name(path)) +
                  " but rank " + std::to_string(src) + " sent " +
                  std::string(transfer_path_name(h.path)));
      }
      const std::uint64_t expected = chunk_length(size_bytes, c, cfg);
      if (h.total != total || h.index != c || h.payload_length != expected) {
        nack(kAckSizeMismatch, c);
        raise(ErrorCode::kSizeMismatch, "rank " + std::to_string(dst) + " posted " +
                                            std::to_string(size_bytes) +
                                            " bytes; incoming chunk disagrees");
      }
      // The NIC lands the payload in the staging slot, then it is copied out.
      DeviceBuffer& slot = staging.slots[c % in_flight];
      const auto payload = chunk_payload(msg.bytes);
      std::copy(payload.begin(), payload.end(), slot.bytes().begin());
      backend.device->dev_copy(slot, 0, out.buffer, std::size_t{c} * cfg.chunk_size_bytes,
                               payload.size());

      std::optional<double> t_start;
      if (c + 1 == total) {
        const TransferCost cost = transfer_cost(cluster.topology(), src, dst, size_bytes, path, cfg);
        const double ready = std::max(cluster.clock(src).now(), cluster.clock(dst).now());
        const auto& sd = cluster.topology().device_of_rank(src);
        const auto& dd = cluster.topology().device_of_rank(dst);
        t_start = sd.node_id == dd.node_id
                      ? ready
                      : cluster.nics().reserve(sd.node_id, sd.nic_id, dd.node_id, dd.nic_id,
                                               ready, cost.duration_us);
        out.record = make_record(cluster.topology(), src, dst, size_bytes, path, cfg, *t_start);
      }
      transport.post(dst, src, Message{tags::kP2pAck, encode_ack(kAckOk, c, t_start), 0.0});
    }
    cluster.clock(dst).advance_to(out.record.t_end_us);
    cluster.trace().append(out.record);
    return out;
  } catch (...) {
    if (!sender_aborted) {
      // Tell the sender and drain its remaining frames up to its abort
      // marker so the channel is clean for the next transfer.
      try {
        if (!nacked) nack(kAckAborted, 0);
        for (;;) {
          if (transport.receive(dst, src, tags::kP2pChunk, timeout).bytes.empty()) break;
        }
      } catch (const Error&) {
      }
    }
    throw;
  }
}

P2pDelivery p2p_transfer(Cluster& cluster, int src, int dst, const DeviceBuffer& payload,
                         TransferPath path, const ChunkConfig& cfg) {
  validate_pair(cluster, src, dst);
  validate_payload(payload, src);
  cfg.validate();
  auto sender = std::async(std::launch::async,
                           [&] { return p2p_send(cluster, src, dst, payload, path, cfg); });
  std::exception_ptr recv_error;
  P2pDelivery delivery;
  try {
    delivery = p2p_recv(cluster, dst, src, payload.size(), path, cfg);
  } catch (...) {
    recv_error = std::current_exception();
  }
  std::exception_ptr send_error;
  try {
    sender.get();
  } catch (...) {
    send_error = std::current_exception();
  }
  // The receiver detects mismatches first and has the more specific error.
  if (recv_error) std::rethrow_exception(recv_error);
  if (send_error) std::rethrow_exception(send_error);
  return delivery;
}

namespace {

bool same_vendor(Cluster& cluster, int a, int b) {
  return cluster.directory().vendor_of(a) == cluster.directory().vendor_of(b);
}

}  // namespace

P2pDelivery p2p_dispatch(Cluster& cluster, int src, int dst, const DeviceBuffer& payload,
                         const ChunkConfig& cfg) {
  validate_pair(cluster, src, dst);
  validate_payload(payload, src);
  if (!same_vendor(cluster, src, dst)) {
    return p2p_transfer(cluster, src, dst, payload, cluster.path(), cfg);
  }
  const double t0 = std::max(cluster.clock(src).now(), cluster.clock(dst).now());
  P2pDelivery out = cluster.backend_for_rank(src).ccl->ccl_p2p(src, dst, payload, t0);
  cluster.clock(src).advance_to(out.record.t_end_us);
  cluster.clock(dst).advance_to(out.record.t_end_us);
  cluster.trace().append(out.record);
  return out;
}

P2pDelivery p2p_dispatch(Cluster& cluster, int src, int dst, const DeviceBuffer& payload) {
  return p2p_dispatch(cluster, src, dst, payload, cluster.chunk());
}

TransferRecord p2p_dispatch_send(Cluster& cluster, int src, int dst,
                                 const DeviceBuffer& payload) {
  validate_pair(cluster, src, dst);
  validate_payload(payload, src);
  if (!same_vendor(cluster, src, dst)) {
    return p2p_send(cluster, src, dst, payload, cluster.path(), cluster.chunk());
  }
  return cluster.backend_for_rank(src).ccl->ccl_send(cluster.transport(), src, dst, payload);
}

P2pDelivery p2p_dispatch_recv(Cluster& cluster, int dst, int src, std::size_t size_bytes) {
  validate_pair(cluster, src, dst);
  if (!same_vendor(cluster, src, dst)) {
    return p2p_recv(cluster, dst, src, size_bytes, cluster.path(), cluster.chunk());
  }
  return cluster.backend_for_rank(dst).ccl->ccl_recv(cluster.transport(), dst, src, size_bytes);
}

TransferRecord SendHandle::wait() {
  if (!future_.valid()) raise(ErrorCode::kValidationError, "send handle already waited on");
  return future_.get();
}

SendHandle p2p_dispatch_isend(Cluster& cluster, int src, int dst, DeviceBuffer payload) {
  validate_pair(cluster, src, dst);
  validate_payload(payload, src);
  SendHandle h;
  h.future_ = std::async(std::launch::async, [&cluster, src, dst, p = std::move(payload)] {
    return p2p_dispatch_send(cluster, src, dst, p);
  });
  return h;
}

int assign_nic(const ClusterTopology& topology, int rank) {
  const auto& dev = topology.device_of_rank(rank);
  const auto& node = topology.node(dev.node_id);
  if (node.nic_count < static_cast<int>(node.devices.size())) {
    warn("node " + std::to_string(node.id) + " has " + std::to_string(node.nic_count) +
         " NICs for " + std::to_string(node.devices.size()) +
         " devices; NICs are shared round-robin");
  }
  return dev.nic_id;
}

}  // namespace hetcomm
