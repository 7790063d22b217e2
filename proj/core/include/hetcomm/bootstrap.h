// Copyright 2026 The hetcomm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <chrono>
#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "hetcomm/topology.h"
#include "hetcomm/transport.h"

namespace hetcomm {

// Host-side control network among all ranks, established by rendezvous at a
// coordinator endpoint. It never carries data-plane traffic.
class BootstrapNet {
 public:
  BootstrapNet() = default;

  int rank() const noexcept { return rank_; }
  int world_size() const noexcept { return world_size_; }
  bool connected() const noexcept { return channels_ != nullptr; }

  void send(int peer, Bytes bytes);
  Bytes recv(int peer);

 private:
  friend BootstrapNet rendezvous(int, int, const std::string&, std::chrono::milliseconds);
  int rank_ = 0;
  int world_size_ = 0;
  std::shared_ptr<Transport> channels_;
};

inline constexpr std::chrono::milliseconds kDefaultRendezvousTimeout{30000};

// Blocks until `world_size` ranks have called with the same coordinator, in
// any arrival order. Throws Timeout on every arrived rank if the group does
// not fill up in time; ValidationError on inconsistent world sizes or
// duplicate ranks.
BootstrapNet rendezvous(int rank, int world_size, const std::string& coordinator,
                        std::chrono::milliseconds timeout = kDefaultRendezvousTimeout);

// Coordinator endpoint from HETCOMM_COORD, or `fallback` when unset.
std::string coordinator_from_env(const std::string& fallback);

// Gather-to-root then broadcast. Entry i of the result is rank i's payload
// on every rank. Throws LengthMismatch (on all ranks) when payload lengths
// differ.
std::vector<Bytes> bootstrap_allgather(BootstrapNet& net, std::span<const std::byte> local);

struct DirectoryEntry {
  int rank = 0;
  int node_id = 0;
  int device_id = 0;
  VendorId vendor;
  int nic_id = 0;

  friend bool operator==(const DirectoryEntry&, const DirectoryEntry&) = default;
};

// Per-rank device metadata replicated on every rank.
class GlobalDirectory {
 public:
  GlobalDirectory() = default;
  explicit GlobalDirectory(std::vector<DirectoryEntry> entries);

  int world_size() const noexcept { return static_cast<int>(entries_.size()); }
  const std::vector<DirectoryEntry>& entries() const noexcept { return entries_; }
  const DirectoryEntry& at(int rank) const;
  const VendorId& vendor_of(int rank) const { return at(rank).vendor; }

  Bytes serialize() const;
  static GlobalDirectory deserialize(std::span<const std::byte> bytes);

  friend bool operator==(const GlobalDirectory&, const GlobalDirectory&) = default;

 private:
  std::vector<DirectoryEntry> entries_;
};

// Fixed-width record of one rank, as contributed to the allgather.
inline constexpr std::size_t kDirectoryRecordSize = 16 + 64;
Bytes encode_directory_entry(const DirectoryEntry& entry);
DirectoryEntry decode_directory_entry(std::span<const std::byte> record);

// Every rank contributes its own entry; all ranks end with the same
// directory.
GlobalDirectory build_directory(BootstrapNet& net, const ClusterTopology& topology);

// The directory build_directory produces, derived without communication.
GlobalDirectory directory_from_topology(const ClusterTopology& topology);

}  // namespace hetcomm
