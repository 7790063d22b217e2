// Copyright 2026 The hetcomm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <condition_variable>
#include <cstdint>
#include <exception>
#include <mutex>
#include <optional>
#include <span>
#include <vector>

#include "hetcomm/adaptors.h"
#include "hetcomm/cluster.h"
#include "hetcomm/topology.h"

namespace hetcomm {

// A collective group split into vendor-homogeneous subgroups. Members are
// kept in ascending rank order; subgroups are ordered by their lowest rank,
// which is also their leader.
class HeteroGroup {
 public:
  // Throws EmptyGroup, RankOutOfRange, ValidationError (duplicate ranks).
  HeteroGroup(const ClusterTopology& topology, std::vector<int> ranks);

  const std::vector<int>& members() const noexcept { return members_; }
  int size() const noexcept { return static_cast<int>(members_.size()); }
  // Position of `rank` in members(); throws RankOutOfRange if absent.
  int index_of(int rank) const;
  bool contains(int rank) const;

  int subgroup_count() const noexcept { return static_cast<int>(subgroups_.size()); }
  const std::vector<int>& subgroup(int i) const { return subgroups_.at(static_cast<std::size_t>(i)); }
  const VendorId& subgroup_vendor(int i) const { return vendors_.at(static_cast<std::size_t>(i)); }
  int leader(int i) const { return subgroup(i).front(); }
  // Subgroup index holding `rank`.
  int subgroup_of(int rank) const;

 private:
  std::vector<int> members_;
  std::vector<std::vector<int>> subgroups_;
  std::vector<VendorId> vendors_;
};

// Per-phase simulated durations of one heterogeneous collective.
struct PhaseTimes {
  double intra_us = 0.0;     // vendor collective inside each subgroup (max)
  double exchange_us = 0.0;  // leader exchange, transfers serialized per endpoint
  double spread_us = 0.0;    // redistribution inside each subgroup (max)
};

struct HeteroResult {
  std::vector<DeviceBuffer> outputs;  // one per member, ascending rank order
  double duration_us = 0.0;
  PhaseTimes phases;
};

// Three-phase heterogeneous collectives. `inputs[i]` belongs to
// group.members()[i]. Subgroup partials combine in ascending subgroup order,
// so results are bit-identical across repeated runs.
//   allreduce:      every member gets the elementwise sum
//   allgather:      every member gets all inputs concatenated in member order
//   reducescatter:  member i gets shard i of the sum (input divisible by size)
//   broadcast:      every member gets root's input
// Throws EmptyGroup, ShapeError, SizeMismatch, RootNotInGroup.
HeteroResult hetero_allreduce(Cluster& cluster, const HeteroGroup& group, DataType type,
                              std::span<const DeviceBuffer> inputs);
HeteroResult hetero_allgather(Cluster& cluster, const HeteroGroup& group, DataType type,
                              std::span<const DeviceBuffer> inputs);
HeteroResult hetero_reducescatter(Cluster& cluster, const HeteroGroup& group, DataType type,
                                  std::span<const DeviceBuffer> inputs);
HeteroResult hetero_broadcast(Cluster& cluster, const HeteroGroup& group, DataType type,
                              int root, std::span<const DeviceBuffer> inputs);
HeteroResult hetero_collective(Cluster& cluster, const HeteroGroup& group, CollectiveOp op,
                               DataType type, std::span<const DeviceBuffer> inputs,
                               int root = -1);

// Analytic phase durations of a heterogeneous collective on `size_bytes`
// per-rank inputs, without moving data. Broadcast defaults to the lowest
// member as root.
PhaseTimes hetero_collective_cost(const ClusterTopology& topology, const HeteroGroup& group,
                                  CollectiveOp op, std::uint64_t size_bytes, TransferPath path,
                                  const ChunkConfig& cfg, int root = -1);

// Per-rank entry point: every member calls run() from its own context with
// its own input; the last to arrive executes the collective for the group.
// Bulk-synchronous, reusable across calls.
class GroupCommunicator {
 public:
  GroupCommunicator(Cluster& cluster, HeteroGroup group);

  const HeteroGroup& group() const noexcept { return group_; }

  // Throws Timeout if the other members do not arrive within the cluster's
  // receive timeout, and rethrows any error from the collective itself.
  DeviceBuffer run(int rank, CollectiveOp op, DataType type, DeviceBuffer input, int root = -1);
  DeviceBuffer allreduce(int rank, DataType type, DeviceBuffer input) {
    return run(rank, CollectiveOp::kAllReduceSum, type, std::move(input));
  }

 private:
  Cluster& cluster_;
  HeteroGroup group_;
  std::mutex mu_;
  std::condition_variable cv_;
  std::vector<DeviceBuffer> inputs_;
  std::vector<DeviceBuffer> outputs_;
  int arrived_ = 0;
  int pending_takes_ = 0;
  std::uint64_t generation_ = 0;
  std::optional<std::pair<CollectiveOp, int>> current_;
  DataType current_type_ = DataType::kUint8;
  std::exception_ptr error_;
};

}  // namespace hetcomm
