// Copyright 2026 The hetcomm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <chrono>
#include <condition_variable>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hetcomm/topology.h"

namespace hetcomm {

using Bytes = std::vector<std::byte>;

// ---------------------------------------------------------------------------
// Cost model. All simulated durations are in microseconds.

// latency + size / bandwidth.
double wire_time(const LinkSpec& link, std::uint64_t size_bytes);

// size / bandwidth, no latency term.
double copy_time(double bandwidth_gbps, std::uint64_t size_bytes);

// Fill + drain time of `num_chunks` identical chunks flowing through a
// pipeline whose stages take `stage_times[i]` per chunk:
//   sum(stage_times) + (num_chunks - 1) * max(stage_times)
double pipelined_time(std::span<const double> stage_times, std::int64_t num_chunks);

// Same pipeline with per-chunk stage times (chunk-major). Stage s of chunk c
// starts once stage s-1 of chunk c and stage s of chunk c-1 are done. Reduces
// to the closed form above when every chunk has identical stage times.
double pipelined_time(const std::vector<std::vector<double>>& chunk_stage_times);

// ---------------------------------------------------------------------------
// Trace

enum class RecordPath { kCpuForwarding, kDeviceDirect, kCcl, kControl, kCompute };
std::string_view record_path_name(RecordPath path);

enum class SegmentKind {
  kD2dCopy,
  kHostBridge,
  kNicNetwork,
  kIntraNodeFabric,
  kControl,
  kFwd,
  kBwd,
  kSend,
  kRecv,
};
std::string_view segment_kind_name(SegmentKind kind);
SegmentKind segment_kind_for(LinkKind kind);

struct Segment {
  SegmentKind kind;
  double duration_us;
};

struct TransferRecord {
  int src_rank = 0;
  int dst_rank = 0;
  RecordPath path = RecordPath::kControl;
  std::uint64_t size_bytes = 0;
  double t_start_us = 0.0;
  double t_end_us = 0.0;
  std::vector<Segment> segments;
  std::uint64_t seq = 0;  // assigned by TraceLog::append

  std::size_t count(SegmentKind kind) const;
};

// Append-only, mutex-protected event log shared by all rank contexts.
class TraceLog {
 public:
  std::uint64_t append(TransferRecord record);
  // Records ordered by (t_start_us, src_rank, seq).
  std::vector<TransferRecord> snapshot() const;
  std::size_t size() const;
  void clear();

 private:
  mutable std::mutex mu_;
  std::vector<TransferRecord> records_;
  std::uint64_t next_seq_ = 0;
};

inline constexpr std::string_view kTraceCsvHeader =
    "t_start_us,t_end_us,src,dst,path,size_bytes,segment_kind";

// One row per segment (records without segments emit one row with an empty
// segment_kind). Records are written in the order given.
void write_trace_csv(std::ostream& out, std::span<const TransferRecord> records);
std::string trace_csv(std::span<const TransferRecord> records);

// ---------------------------------------------------------------------------
// Per-rank simulated clock. Monotone: moving backwards is a no-op.

class SimClock {
 public:
  double now() const;
  void advance_to(double t_us);
  void advance_by(double d_us);

 private:
  mutable std::mutex mu_;
  double now_us_ = 0.0;
};

// ---------------------------------------------------------------------------
// In-process channels

// Channel tags reserved by the library layers.
namespace tags {
inline constexpr std::uint32_t kUser = 0;
inline constexpr std::uint32_t kCcl = 0x100;
inline constexpr std::uint32_t kP2pChunk = 0x200;
inline constexpr std::uint32_t kP2pAck = 0x201;
inline constexpr std::uint32_t kBootstrap = 0x300;
}  // namespace tags

struct Message {
  std::uint32_t tag = 0;
  Bytes bytes;
  double sent_at_us = 0.0;
};

// Many-writer single-reader mailboxes, one per destination rank. Messages on
// a (src, dst, tag) channel are delivered FIFO and exactly once.
class Transport {
 public:
  explicit Transport(int world_size);

  Transport(const Transport&) = delete;
  Transport& operator=(const Transport&) = delete;

  int world_size() const noexcept { return world_size_; }

  // Untraced delivery; used by higher layers that keep their own records.
  // Throws ChannelClosed.
  void post(int src, int dst, Message message);

  // Blocks until a message from `src` with `tag` arrives. Throws
  // ChannelClosed once the channel is closed and drained, Timeout when
  // `timeout` elapses first.
  Message receive(int dst, int src, std::uint32_t tag,
                  std::optional<std::chrono::milliseconds> timeout = std::nullopt);

  // Traced delivery: posts the bytes and appends a control-path record.
  TransferRecord channel_send(int src, int dst, Bytes bytes, std::uint32_t tag = 0);

  void close(int src, int dst);
  void close_all();
  bool is_closed(int src, int dst) const;

  TraceLog& trace() noexcept { return trace_; }
  SimClock& clock(int rank);

 private:
  struct Mailbox {
    mutable std::mutex mu;
    std::condition_variable cv;
    std::map<std::pair<int, std::uint32_t>, std::deque<Message>> queues;
    std::set<int> closed_sources;
    bool all_closed = false;
  };

  void check_rank(int rank) const;

  int world_size_;
  std::vector<std::unique_ptr<Mailbox>> mailboxes_;
  std::vector<std::unique_ptr<SimClock>> clocks_;
  TraceLog trace_;
};

}  // namespace hetcomm
