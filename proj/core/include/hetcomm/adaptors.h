// Copyright 2026 The hetcomm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <atomic>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hetcomm/error.h"
#include "hetcomm/topology.h"
#include "hetcomm/transport.h"

namespace hetcomm {

// ---------------------------------------------------------------------------
// Buffers

enum class MemorySpace { kDevice, kHost, kChunk };
std::string_view memory_space_name(MemorySpace space);

namespace detail {

struct MemoryAccount {
  std::atomic<std::size_t> used{0};
  std::size_t cap = std::numeric_limits<std::size_t>::max();
};

struct BufferStorage {
  int owner_rank = 0;
  MemorySpace space = MemorySpace::kDevice;
  Bytes bytes;
  std::shared_ptr<MemoryAccount> account;  // null for unaccounted buffers

  ~BufferStorage();
};

}  // namespace detail

// Move-only handle to simulated device, host, or chunk memory owned by one
// rank. Memory registered with the NIC (MrHandle) stays valid only while the
// owning DeviceBuffer is alive.
class DeviceBuffer {
 public:
  DeviceBuffer() = default;
  DeviceBuffer(DeviceBuffer&&) noexcept = default;
  DeviceBuffer& operator=(DeviceBuffer&&) noexcept = default;
  DeviceBuffer(const DeviceBuffer&) = delete;
  DeviceBuffer& operator=(const DeviceBuffer&) = delete;

  // Wraps existing bytes without charging any memory cap.
  static DeviceBuffer wrap(int owner_rank, MemorySpace space, Bytes bytes);

  bool valid() const noexcept { return storage_ != nullptr; }
  int owner_rank() const { return storage_->owner_rank; }
  MemorySpace space() const { return storage_->space; }
  std::size_t size() const { return storage_ ? storage_->bytes.size() : 0; }

  std::span<std::byte> bytes() { return storage_->bytes; }
  std::span<const std::byte> bytes() const { return storage_->bytes; }

  // Independent copy in the same space on the same rank (unaccounted).
  DeviceBuffer clone() const;

 private:
  friend class SimDeviceAdaptor;
  friend class MrHandle;
  friend class SimNetAdaptor;
  explicit DeviceBuffer(std::shared_ptr<detail::BufferStorage> storage)
      : storage_(std::move(storage)) {}

  std::shared_ptr<detail::BufferStorage> storage_;
};

// ---------------------------------------------------------------------------
// Events. Completed only by the simulation (never by wall-clock time); once
// complete, an event never returns to pending.

class CompletionEvent {
 public:
  CompletionEvent();

  std::uint64_t id() const noexcept;
  bool is_complete() const;
  // Simulated completion time; meaningful once complete.
  double completion_time_us() const;
  std::optional<ErrorCode> error() const;

  // Blocks for at most `timeout` of real time; returns is_complete().
  bool wait_for(std::chrono::milliseconds timeout) const;
  // Blocks until complete; rethrows a recorded failure.
  void wait() const;

  void complete(double t_us);
  void fail(ErrorCode code, std::string message);

 private:
  struct State;
  std::shared_ptr<State> state_;
};

struct CopyResult {
  CompletionEvent event;
  double duration_us = 0.0;
};

// ---------------------------------------------------------------------------
// Net-Plugin primitives

class MrHandle {
 public:
  MrHandle() = default;

  bool valid() const noexcept { return !buffer_.expired(); }
  std::uint64_t key() const noexcept { return key_; }
  int rank() const noexcept { return rank_; }
  std::size_t size() const;

 private:
  friend class SimNetAdaptor;
  friend class QueuePair;
  std::weak_ptr<detail::BufferStorage> buffer_;
  std::uint64_t key_ = 0;
  int rank_ = -1;
};

// One endpoint of a connected queue pair. Both endpoints share the matching
// state; messages in one direction complete strictly in post order.
class QueuePair {
 public:
  QueuePair() = default;

  int local_rank() const noexcept { return local_; }
  int remote_rank() const noexcept { return remote_; }
  bool is_open() const;
  void close();

  std::size_t pending_sends() const;
  std::size_t pending_recvs() const;

 private:
  friend class SimNetAdaptor;
  struct Shared;
  QueuePair(int local, int remote, std::shared_ptr<Shared> shared)
      : local_(local), remote_(remote), shared_(std::move(shared)) {}

  int local_ = -1;
  int remote_ = -1;
  std::shared_ptr<Shared> shared_;
};

// ---------------------------------------------------------------------------
// Collectives

enum class DataType { kUint8, kInt32, kInt64, kFloat32, kFloat64 };
std::size_t data_type_size(DataType type);
std::string_view data_type_name(DataType type);

enum class CollectiveOp { kAllReduceSum, kAllGather, kReduceScatterSum, kBroadcast };
std::string_view collective_op_name(CollectiveOp op);

// acc[i] += in[i] elementwise. Integer sums wrap around.
void reduce_sum_into(DataType type, std::span<std::byte> acc,
                     std::span<const std::byte> in);

struct CollectiveResult {
  std::vector<DeviceBuffer> outputs;  // one per group member, group order
  double duration_us = 0.0;
};

struct P2pDelivery {
  DeviceBuffer buffer;
  TransferRecord record;
};

// Ring cost of a collective over k ranks moving `size_bytes` (the full
// buffer: output size for allgather, input size for reducescatter):
//   allreduce            2(k-1)/k * size/bw + (k-1) * latency
//   allgather/reducescat  (k-1)/k * size/bw + (k-1) * latency
//   broadcast                       size/bw + (k-1) * latency
double ring_collective_time(CollectiveOp op, int k, std::uint64_t size_bytes,
                            const LinkSpec& link);

// Slowest link any hop of a ring over `group` can take (its bottleneck).
LinkSpec ring_link(const ClusterTopology& topology, std::span<const int> group);

// Simulated duration of a same-rank copy: size / mem_bandwidth between
// device-side spaces (device, chunk), latency + size / host_link_bandwidth
// across the host bridge. Zero bytes take zero time.
double sim_copy_duration(const ClusterTopology& topology, int rank, MemorySpace from,
                         MemorySpace to, std::size_t size_bytes);

// ---------------------------------------------------------------------------
// Adaptor interfaces

class DeviceAdaptor {
 public:
  virtual ~DeviceAdaptor() = default;
  virtual const VendorId& vendor() const = 0;

  // Zero-initialized. Throws AllocError when the rank's cap is exceeded.
  virtual DeviceBuffer dev_alloc(int rank, std::size_t size_bytes, MemorySpace space) = 0;

  // Same-rank copy of `size_bytes` from src[src_offset..] to dst[dst_offset..].
  // Throws CrossRankCopy, SizeMismatch.
  virtual CopyResult dev_copy(const DeviceBuffer& src, std::size_t src_offset,
                              DeviceBuffer& dst, std::size_t dst_offset,
                              std::size_t size_bytes) = 0;
  CopyResult dev_copy(const DeviceBuffer& src, DeviceBuffer& dst, std::size_t size_bytes) {
    return dev_copy(src, 0, dst, 0, size_bytes);
  }
  // Simulated duration of a copy without performing it.
  virtual double copy_duration(int rank, MemorySpace from, MemorySpace to,
                               std::size_t size_bytes) const = 0;

  virtual CompletionEvent create_event() = 0;
  // Single stream per rank: every operation is already complete on return.
  virtual void stream_synchronize(int rank) = 0;

  virtual void set_memory_cap(int rank, std::size_t cap_bytes) = 0;
  virtual std::size_t memory_in_use(int rank) const = 0;
};

class NetAdaptor {
 public:
  virtual ~NetAdaptor() = default;

  // Throws WrongSpace unless the buffer lives in chunk space.
  virtual MrHandle net_register(const DeviceBuffer& buffer) = 0;

  // Both endpoints of a queue pair over `link`.
  virtual std::pair<QueuePair, QueuePair> connect(int rank_a, int rank_b,
                                                  const LinkSpec& link) = 0;

  // Rendezvous semantics: a send completes once matched with a posted recv
  // and the simulated wire time has elapsed, at which point the bytes are in
  // the receiver's registered buffer. Throws QpClosed, SizeMismatch.
  virtual CompletionEvent net_post_send(QueuePair& qp, const MrHandle& mr,
                                        std::size_t size_bytes, double t_post_us = 0.0) = 0;
  virtual CompletionEvent net_post_recv(QueuePair& qp, const MrHandle& mr,
                                        std::size_t size_bytes, double t_post_us = 0.0) = 0;
};

class CclAdaptor {
 public:
  virtual ~CclAdaptor() = default;
  virtual const VendorId& vendor() const = 0;
  virtual std::string_view library_name() const = 0;

  // `group` lists global ranks; inputs[i] belongs to group[i]. Reduction is
  // sequential in group order. `root` is a global rank (broadcast only).
  // Throws MixedVendorGroup, ShapeError, RootNotInGroup.
  virtual CollectiveResult ccl_collective(std::span<const int> group, CollectiveOp op,
                                          DataType type, std::span<const DeviceBuffer> inputs,
                                          int root = -1) = 0;

  // Single-call point-to-point delivery (both sides driven by the caller).
  virtual P2pDelivery ccl_p2p(int send_rank, int recv_rank, const DeviceBuffer& payload,
                              double t_start_us = 0.0) = 0;

  // Split-phase point-to-point over the transport, one call per rank context.
  virtual TransferRecord ccl_send(Transport& transport, int send_rank, int recv_rank,
                                  const DeviceBuffer& payload) = 0;
  virtual P2pDelivery ccl_recv(Transport& transport, int recv_rank, int send_rank,
                               std::size_t size_bytes) = 0;
};

// The three adaptors for one vendor.
struct VendorBackend {
  std::unique_ptr<DeviceAdaptor> device;
  std::unique_ptr<NetAdaptor> net;
  std::unique_ptr<CclAdaptor> ccl;
};

// Simulated backend for `vendor`. The built-in "nvidia" and "amd" vendors
// report their own CCL names; any other vendor gets a generic simulation.
VendorBackend make_sim_backend(const VendorId& vendor,
                               std::shared_ptr<const ClusterTopology> topology);

}  // namespace hetcomm
