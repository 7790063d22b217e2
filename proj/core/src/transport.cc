// Copyright 2026 The hetcomm Authors
// SPDX-License-Identifier: Apache-2.0

#include "hetcomm/transport.h"

#include <algorithm>
#include <cinttypes>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "hetcomm/error.h"

namespace hetcomm {

double copy_time(double bandwidth_gbps, std::uint64_t size_bytes) {
  // bytes / (GB/s * 1e9) seconds == bytes / (GB/s * 1e3) microseconds
  return static_cast<double>(size_bytes) / (bandwidth_gbps * 1e3);
}

double wire_time(const LinkSpec& link, std::uint64_t size_bytes) {
  return link.latency_us + copy_time(link.bandwidth_gbps, size_bytes);
}

double pipelined_time(std::span<const double> stage_times, std::int64_t num_chunks) {
  if (stage_times.empty() || num_chunks < 1) return 0.0;
  const double sum = std::accumulate(stage_times.begin(), stage_times.end(), 0.0);
  const double slowest = *std::max_element(stage_times.begin(), stage_times.end());
  return sum + static_cast<double>(num_chunks - 1) * slowest;
}

double pipelined_time(const std::vector<std::vector<double>>& chunk_stage_times) {
  if (chunk_stage_times.empty()) return 0.0;
  const std::size_t stages = chunk_stage_times.front().size();
  std::vector<double> done(stages, 0.0);  // completion of the previous chunk per stage
  for (const auto& chunk : chunk_stage_times) {
    double ready = 0.0;
    for (std::size_t s = 0; s < stages; ++s) {
      ready = std::max(ready, done[s]) + chunk[s];
      done[s] = ready;
    }
  }
  return stages == 0 ? 0.0 : done.back();
}

std::string_view record_path_name(RecordPath path) {
  switch (path) {
    case RecordPath::kCpuForwarding: return "cpu_forwarding";
    case RecordPath::kDeviceDirect: return "device_direct";
    case RecordPath::kCcl: return "ccl";
    case RecordPath::kControl: return "control";
    case RecordPath::kCompute: return "compute";
  }
  return "unknown";
}

std::string_view segment_kind_name(SegmentKind kind) {
  switch (kind) {
    case SegmentKind::kD2dCopy: return "d2d_copy";
    case SegmentKind::kHostBridge: return "host_bridge";
    case SegmentKind::kNicNetwork: return "nic_network";
    case SegmentKind::kIntraNodeFabric: return "intra_node_fabric";
    case SegmentKind::kControl: return "control";
    case SegmentKind::kFwd: return "fwd";
    case SegmentKind::kBwd: return "bwd";
    case SegmentKind::kSend: return "send";
    case SegmentKind::kRecv: return "recv";
  }
  return "unknown";
}

SegmentKind segment_kind_for(LinkKind kind) {
  switch (kind) {
    case LinkKind::kIntraNodeFabric: return SegmentKind::kIntraNodeFabric;
    case LinkKind::kHostBridge: return SegmentKind::kHostBridge;
    case LinkKind::kNicNetwork: return SegmentKind::kNicNetwork;
  }
  return SegmentKind::kControl;
}

std::size_t TransferRecord::count(SegmentKind kind) const {
  return static_cast<std::size_t>(std::count_if(
      segments.begin(), segments.end(), [kind](const Segment& s) { return s.kind == kind; }));
}

std::uint64_t TraceLog::append(TransferRecord record) {
  std::lock_guard lock(mu_);
  record.seq = next_seq_++;
  records_.push_back(std::move(record));
  return records_.back().seq;
}

std::vector<TransferRecord> TraceLog::snapshot() const {
  std::vector<TransferRecord> out;
  {
    std::lock_guard lock(mu_);
    out = records_;
  }
  std::sort(out.begin(), out.end(), [](const TransferRecord& a, const TransferRecord& b) {
    if (a.t_start_us != b.t_start_us) return a.t_start_us < b.t_start_us;
    if (a.src_rank != b.src_rank) return a.src_rank < b.src_rank;
    return a.seq < b.seq;
  });
  return out;
}

std::size_t TraceLog::size() const {
  std::lock_guard lock(mu_);
  return records_.size();
}

void TraceLog::clear() {
  std::lock_guard lock(mu_);
  records_.clear();
  next_seq_ = 0;
}

void write_trace_csv(std::ostream& out, std::span<const TransferRecord> records) {
  out << kTraceCsvHeader << '\n';
  char buf[256];
  auto row = [&](const TransferRecord& r, std::string_view kind) {
    std::snprintf(buf, sizeof(buf), "%.6f,%.6f,%d,%d,%.*s,%" PRIu64 ",%.*s\n",
                  r.t_start_us, r.t_end_us, r.src_rank, r.dst_rank,
                  static_cast<int>(record_path_name(r.path).size()),
                  record_path_name(r.path).data(), r.size_bytes,
                  static_cast<int>(kind.size()), kind.data());
    out << buf;
  };
  for (const auto& r : records) {
    if (r.segments.empty()) {
      row(r, "");
      continue;
    }
    for (const auto& s : r.segments) row(r, segment_kind_name(s.kind));
  }
}

std::string trace_csv(std::span<const TransferRecord> records) {
  std::ostringstream out;
  write_trace_csv(out, records);
  return out.str();
}

double SimClock::now() const {
  std::lock_guard lock(mu_);
  return now_us_;
}

void SimClock::advance_to(double t_us) {
  std::lock_guard lock(mu_);
  now_us_ = std::max(now_us_, t_us);
}

void SimClock::advance_by(double d_us) {
  std::lock_guard lock(mu_);
  if (d_us > 0.0) now_us_ += d_us;
}

Transport::Transport(int world_size) : world_size_(world_size) {
  if (world_size < 1) {
    raise(ErrorCode::kValidationError, "world_size must be >= 1");
  }
  for (int r = 0; r < world_size; ++r) {
    mailboxes_.push_back(std::make_unique<Mailbox>());
    clocks_.push_back(std::make_unique<SimClock>());
  }
}

void Transport::check_rank(int rank) const {
  if (rank < 0 || rank >= world_size_) {
    raise(ErrorCode::kRankOutOfRange, "rank " + std::to_string(rank) +
                                          " outside transport of size " +
                                          std::to_string(world_size_));
  }
}

void Transport::post(int src, int dst, Message message) {
  check_rank(src);
  check_rank(dst);
  auto& box = *mailboxes_[static_cast<std::size_t>(dst)];
  {
    std::lock_guard lock(box.mu);
    if (box.all_closed || box.closed_sources.contains(src)) {
      raise(ErrorCode::kChannelClosed, "channel " + std::to_string(src) + "->" +
                                           std::to_string(dst) + " is closed");
    }
    box.queues[{src, message.tag}].push_back(std::move(message));
  }
  box.cv.notify_all();
}

Message Transport::receive(int dst, int src, std::uint32_t tag,
                           std::optional<std::chrono::milliseconds> timeout) {
  check_rank(src);
  check_rank(dst);
  auto& box = *mailboxes_[static_cast<std::size_t>(dst)];
  std::unique_lock lock(box.mu);
  const auto key = std::make_pair(src, tag);
  auto ready = [&] {
    auto it = box.queues.find(key);
    return (it != box.queues.end() && !it->second.empty()) || box.all_closed ||
           box.closed_sources.contains(src);
  };
  if (timeout) {
    if (!box.cv.wait_for(lock, *timeout, ready)) {
      raise(ErrorCode::kTimeout, "no message " + std::to_string(src) + "->" +
                                     std::to_string(dst) + " tag " +
                                     std::to_string(tag));
    }
  } else {
    box.cv.wait(lock, ready);
  }
  auto it = box.queues.find(key);
  if (it == box.queues.end() || it->second.empty()) {
    raise(ErrorCode::kChannelClosed, "channel " + std::to_string(src) + "->" +
                                         std::to_string(dst) + " closed");
  }
  Message out = std::move(it->second.front());
  it->second.pop_front();
  return out;
}

TransferRecord Transport::channel_send(int src, int dst, Bytes bytes, std::uint32_t tag) {
  TransferRecord record;
  record.src_rank = src;
  record.dst_rank = dst;
  record.path = RecordPath::kControl;
  record.size_bytes = bytes.size();
  record.t_start_us = clock(src).now();
  record.t_end_us = record.t_start_us;
  record.segments.push_back({SegmentKind::kControl, 0.0});
  post(src, dst, Message{tag, std::move(bytes), record.t_start_us});
  record.seq = trace_.append(record);
  return record;
}

void Transport::close(int src, int dst) {
  check_rank(src);
  check_rank(dst);
  auto& box = *mailboxes_[static_cast<std::size_t>(dst)];
  {
    std::lock_guard lock(box.mu);
    box.closed_sources.insert(src);
  }
  box.cv.notify_all();
}

void Transport::close_all() {
  for (auto& box : mailboxes_) {
    {
      std::lock_guard lock(box->mu);
      box->all_closed = true;
    }
    box->cv.notify_all();
  }
}

bool Transport::is_closed(int src, int dst) const {
  check_rank(src);
  check_rank(dst);
  const auto& box = *mailboxes_[static_cast<std::size_t>(dst)];
  std::lock_guard lock(box.mu);
  return box.all_closed || box.closed_sources.contains(src);
}

SimClock& Transport::clock(int rank) {
  check_rank(rank);
  return *clocks_[static_cast<std::size_t>(rank)];
}

}  // namespace hetcomm
