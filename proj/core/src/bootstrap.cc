// Copyright 2026 The hetcomm Authors
// SPDX-License-Identifier: Apache-2.0

#include "hetcomm/bootstrap.h"

#include <algorithm>
#include <condition_variable>
#include <cstdlib>
#include <cstring>
#include <map>
#include <mutex>
#include <set>

#include "hetcomm/error.h"

namespace hetcomm {

namespace {

// One pending rendezvous at a coordinator endpoint.
struct Session {
  int world_size = 0;
  std::set<int> arrived;
  bool ready = false;
  bool failed = false;
  std::shared_ptr<Transport> channels;
  std::condition_variable cv;
};

struct Registry {
  std::mutex mu;
  std::map<std::string, std::shared_ptr<Session>> sessions;
};

Registry& registry() {
  static Registry r;
  return r;
}

void put_u32(Bytes& out, std::uint32_t v) {
  for (int shift = 24; shift >= 0; shift -= 8) {
    out.push_back(static_cast<std::byte>((v >> shift) & 0xFF));
  }
}

std::uint32_t get_u32(std::span<const std::byte> in, std::size_t offset) {
  std::uint32_t v = 0;
  for (std::size_t i = 0; i < 4; ++i) {
    v = (v << 8) | std::to_integer<std::uint32_t>(in[offset + i]);
  }
  return v;
}

}  // namespace

void BootstrapNet::send(int peer, Bytes bytes) {
  if (!channels_) raise(ErrorCode::kChannelClosed, "bootstrap network not connected");
  channels_->post(rank_, peer, Message{tags::kBootstrap, std::move(bytes), 0.0});
}

Bytes BootstrapNet::recv(int peer) {
  if (!channels_) raise(ErrorCode::kChannelClosed, "bootstrap network not connected");
  return channels_->receive(rank_, peer, tags::kBootstrap).bytes;
}

BootstrapNet rendezvous(int rank, int world_size, const std::string& coordinator,
                        std::chrono::milliseconds timeout) {
  if (world_size < 1) raise(ErrorCode::kValidationError, "world_size must be >= 1");
  if (rank < 0 || rank >= world_size) {
    raise(ErrorCode::kRankOutOfRange, "rank " + std::to_string(rank) +
                                          " not in [0, " + std::to_string(world_size) + ")");
  }
  auto& reg = registry();
  std::unique_lock lock(reg.mu);
  auto& slot = reg.sessions[coordinator];
  if (!slot) {
    slot = std::make_shared<Session>();
    slot->world_size = world_size;
  }
  std::shared_ptr<Session> session = slot;
  if (session->world_size != world_size) {
    raise(ErrorCode::kValidationError,
          "rank " + std::to_string(rank) + " joined " + coordinator + " with world_size " +
              std::to_string(world_size) + ", expected " + std::to_string(session->world_size));
  }
  if (!session->arrived.insert(rank).second) {
    raise(ErrorCode::kValidationError, "rank " + std::to_string(rank) +
                                           " joined " + coordinator + " twice");
  }

  if (static_cast<int>(session->arrived.size()) == world_size) {
    session->channels = std::make_shared<Transport>(world_size);
    session->ready = true;
    // The endpoint is free for the next group once this one is complete.
    reg.sessions.erase(coordinator);
    session->cv.notify_all();
  } else if (!session->cv.wait_for(lock, timeout,
                                   [&] { return session->ready || session->failed; })) {
    session->failed = true;
    auto it = reg.sessions.find(coordinator);
    if (it != reg.sessions.end() && it->second == session) reg.sessions.erase(it);
    session->cv.notify_all();
  }

  if (!session->ready) {
    raise(ErrorCode::kTimeout, "rendezvous at " + coordinator + ": " +
                                   std::to_string(session->arrived.size()) + " of " +
                                   std::to_string(world_size) + " ranks arrived");
  }
  BootstrapNet net;
  net.rank_ = rank;
  net.world_size_ = world_size;
  net.channels_ = session->channels;
  return net;
}

std::string coordinator_from_env(const std::string& fallback) {
  const char* env = std::getenv("HETCOMM_COORD");
  return (env && *env) ? std::string(env) : fallback;
}

std::vector<Bytes> bootstrap_allgather(BootstrapNet& net, std::span<const std::byte> local) {
  const int n = net.world_size();
  constexpr std::byte kOk{0};
  constexpr std::byte kMismatch{1};

  if (net.rank() != 0) {
    net.send(0, Bytes(local.begin(), local.end()));
    Bytes reply = net.recv(0);
    if (reply.empty() || reply[0] != kOk) {
      raise(ErrorCode::kLengthMismatch, "bootstrap allgather payload lengths differ");
    }
    const std::size_t len = (reply.size() - 1) / static_cast<std::size_t>(n);
    std::vector<Bytes> out;
    for (int r = 0; r < n; ++r) {
      auto first = reply.begin() + 1 + static_cast<std::ptrdiff_t>(r * len);
      out.emplace_back(first, first + static_cast<std::ptrdiff_t>(len));
    }
    return out;
  }

  std::vector<Bytes> out;
  out.emplace_back(local.begin(), local.end());
  bool mismatch = false;
  for (int r = 1; r < n; ++r) {
    out.push_back(net.recv(r));
    mismatch = mismatch || out.back().size() != local.size();
  }
  Bytes reply{mismatch ? kMismatch : kOk};
  if (!mismatch) {
    for (const auto& part : out) reply.insert(reply.end(), part.begin(), part.end());
  }
  for (int r = 1; r < n; ++r) net.send(r, reply);
  if (mismatch) raise(ErrorCode::kLengthMismatch, "bootstrap allgather payload lengths differ");
  return out;
}

GlobalDirectory::GlobalDirectory(std::vector<DirectoryEntry> entries)
    : entries_(std::move(entries)) {
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].rank != static_cast<int>(i)) {
      raise(ErrorCode::kValidationError, "directory entries must be in rank order");
    }
  }
}

const DirectoryEntry& GlobalDirectory::at(int rank) const {
  if (rank < 0 || rank >= world_size()) {
    raise(ErrorCode::kRankOutOfRange, "rank " + std::to_string(rank) + " not in directory");
  }
  return entries_[static_cast<std::size_t>(rank)];
}

Bytes encode_directory_entry(const DirectoryEntry& entry) {
  const std::string& name = entry.vendor.name();
  if (name.size() > kDirectoryRecordSize - 16) {
    raise(ErrorCode::kValidationError, "vendor name too long: " + name);
  }
  Bytes out;
  out.reserve(kDirectoryRecordSize);
  put_u32(out, static_cast<std::uint32_t>(entry.rank));
  put_u32(out, static_cast<std::uint32_t>(entry.node_id));
  put_u32(out, static_cast<std::uint32_t>(entry.device_id));
  put_u32(out, static_cast<std::uint32_t>(entry.nic_id));
  for (char c : name) out.push_back(static_cast<std::byte>(c));
  out.resize(kDirectoryRecordSize, std::byte{0});
  return out;
}

DirectoryEntry decode_directory_entry(std::span<const std::byte> record) {
  if (record.size() != kDirectoryRecordSize) {
    raise(ErrorCode::kParseError, "directory record has wrong length");
  }
  DirectoryEntry e;
  e.rank = static_cast<int>(get_u32(record, 0));
  e.node_id = static_cast<int>(get_u32(record, 4));
  e.device_id = static_cast<int>(get_u32(record, 8));
  e.nic_id = static_cast<int>(get_u32(record, 12));
  std::string name;
  for (std::size_t i = 16; i < record.size() && record[i] != std::byte{0}; ++i) {
    name.push_back(static_cast<char>(record[i]));
  }
  e.vendor = VendorId(std::move(name));
  return e;
}

Bytes GlobalDirectory::serialize() const {
  Bytes out;
  for (const auto& e : entries_) {
    Bytes rec = encode_directory_entry(e);
    out.insert(out.end(), rec.begin(), rec.end());
  }
  return out;
}

GlobalDirectory GlobalDirectory::deserialize(std::span<const std::byte> bytes) {
  if (bytes.size() % kDirectoryRecordSize != 0) {
    raise(ErrorCode::kParseError, "directory blob is not a whole number of records");
  }
  std::vector<DirectoryEntry> entries;
  for (std::size_t off = 0; off < bytes.size(); off += kDirectoryRecordSize) {
    entries.push_back(decode_directory_entry(bytes.subspan(off, kDirectoryRecordSize)));
  }
  return GlobalDirectory(std::move(entries));
}

namespace {

DirectoryEntry entry_for(const ClusterTopology& topology, int rank) {
  const auto& dev = topology.device_of_rank(rank);
  return DirectoryEntry{rank, dev.node_id, dev.device_id, dev.vendor, dev.nic_id};
}

}  // namespace

GlobalDirectory build_directory(BootstrapNet& net, const ClusterTopology& topology) {
  if (!net.connected()) raise(ErrorCode::kChannelClosed, "rendezvous has not completed");
  if (net.world_size() != topology.world_size()) {
    raise(ErrorCode::kValidationError, "bootstrap world size does not match topology");
  }
  const Bytes mine = encode_directory_entry(entry_for(topology, net.rank()));
  std::vector<DirectoryEntry> entries;
  for (const auto& rec : bootstrap_allgather(net, mine)) {
    entries.push_back(decode_directory_entry(rec));
  }
  return GlobalDirectory(std::move(entries));
}

GlobalDirectory directory_from_topology(const ClusterTopology& topology) {
  std::vector<DirectoryEntry> entries;
  for (int r = 0; r < topology.world_size(); ++r) entries.push_back(entry_for(topology, r));
  return GlobalDirectory(std::move(entries));
}

}  // namespace hetcomm
