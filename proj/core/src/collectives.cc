// Copyright 2026 The hetcomm Authors
// SPDX-License-Identifier: Apache-2.0

#include "hetcomm/collectives.h"

#include <algorithm>
#include <functional>

#include "hetcomm/error.h"
#include "hetcomm/p2p.h"

namespace hetcomm {

HeteroGroup::HeteroGroup(const ClusterTopology& topology, std::vector<int> ranks)
    : members_(std::move(ranks)) {
  if (members_.empty()) raise(ErrorCode::kEmptyGroup, "collective group has no members");
  std::sort(members_.begin(), members_.end());
  if (std::adjacent_find(members_.begin(), members_.end()) != members_.end()) {
    raise(ErrorCode::kValidationError, "collective group lists a rank twice");
  }
  for (int r : members_) {
    const VendorId& v = topology.vendor_of_rank(r);  // throws RankOutOfRange
    auto it = std::find(vendors_.begin(), vendors_.end(), v);
    if (it == vendors_.end()) {
      vendors_.push_back(v);
      subgroups_.push_back({r});
    } else {
      subgroups_[static_cast<std::size_t>(it - vendors_.begin())].push_back(r);
    }
  }
}

int HeteroGroup::index_of(int rank) const {
  auto it = std::lower_bound(members_.begin(), members_.end(), rank);
  if (it == members_.end() || *it != rank) {
    raise(ErrorCode::kRankOutOfRange, "rank " + std::to_string(rank) + " is not in the group");
  }
  return static_cast<int>(it - members_.begin());
}

bool HeteroGroup::contains(int rank) const {
  return std::binary_search(members_.begin(), members_.end(), rank);
}

int HeteroGroup::subgroup_of(int rank) const {
  for (int g = 0; g < subgroup_count(); ++g) {
    const auto& s = subgroups_[static_cast<std::size_t>(g)];
    if (std::find(s.begin(), s.end(), rank) != s.end()) return g;
  }
  raise(ErrorCode::kRankOutOfRange, "rank " + std::to_string(rank) + " is not in the group");
}

namespace {

using Pieces = std::vector<DeviceBuffer>;

std::size_t check_inputs(const HeteroGroup& group, DataType type,
                         std::span<const DeviceBuffer> inputs) {
  if (inputs.size() != static_cast<std::size_t>(group.size())) {
    raise(ErrorCode::kShapeError, "expected one input per group member");
  }
  const std::size_t size = inputs.front().size();
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (!inputs[i].valid()) raise(ErrorCode::kShapeError, "input buffer is not allocated");
    if (inputs[i].size() != size) {
      raise(ErrorCode::kSizeMismatch, "rank " + std::to_string(group.members()[i]) + " holds " +
                                          std::to_string(inputs[i].size()) + " bytes, expected " +
                                          std::to_string(size));
    }
  }
  if (size % data_type_size(type) != 0) {
    raise(ErrorCode::kShapeError, "payload is not a whole number of elements");
  }
  return size;
}

// Inputs for one subgroup, in subgroup order.
Pieces subgroup_inputs(const HeteroGroup& group, int g, std::span<const DeviceBuffer> inputs) {
  Pieces out;
  for (int r : group.subgroup(g)) out.push_back(inputs[static_cast<std::size_t>(group.index_of(r))].clone());
  return out;
}

CollectiveResult ccl(Cluster& cluster, const HeteroGroup& group, int g, CollectiveOp op,
                     DataType type, std::span<const DeviceBuffer> inputs, int root = -1) {
  return cluster.backend(group.subgroup_vendor(g))
      .ccl->ccl_collective(group.subgroup(g), op, type, inputs, root);
}

// Broadcast `payload` (held by the subgroup leader) to the whole subgroup.
CollectiveResult spread(Cluster& cluster, const HeteroGroup& group, int g, DataType type,
                        const Bytes& payload) {
  Pieces in;
  for (int r : group.subgroup(g)) {
    in.push_back(DeviceBuffer::wrap(r, MemorySpace::kDevice,
                                    r == group.leader(g) ? payload : Bytes(payload.size())));
  }
  return ccl(cluster, group, g, CollectiveOp::kBroadcast, type, in, group.leader(g));
}

Bytes to_bytes(const DeviceBuffer& b) { return Bytes(b.bytes().begin(), b.bytes().end()); }

double start_time(Cluster& cluster, const HeteroGroup& group) {
  double t = 0.0;
  for (int r : group.members()) t = std::max(t, cluster.clock(r).now());
  return t;
}

// Leader exchange. `payload(i, j)` is what leader i sends to leader j;
// returns received[j][i] and the phase duration. Transfers run one after
// another in (i, j) order, each starting once both endpoints are free, so the
// phase lasts until the busiest leader's clock stops.
std::pair<std::vector<std::vector<Bytes>>, double> exchange(
    Cluster& cluster, const HeteroGroup& group, double t_ready,
    const std::function<std::optional<Bytes>(int, int)>& payload) {
  const int G = group.subgroup_count();
  std::vector<std::vector<Bytes>> received(static_cast<std::size_t>(G),
                                           std::vector<Bytes>(static_cast<std::size_t>(G)));
  for (int g = 0; g < G; ++g) cluster.clock(group.leader(g)).advance_to(t_ready);
  for (int i = 0; i < G; ++i) {
    for (int j = 0; j < G; ++j) {
      if (i == j) continue;
      std::optional<Bytes> bytes = payload(i, j);
      if (!bytes) continue;
      DeviceBuffer buf = DeviceBuffer::wrap(group.leader(i), MemorySpace::kDevice, std::move(*bytes));
      P2pDelivery d = p2p_dispatch(cluster, group.leader(i), group.leader(j), buf);
      received[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)] = to_bytes(d.buffer);
    }
  }
  double end = t_ready;
  for (int g = 0; g < G; ++g) end = std::max(end, cluster.clock(group.leader(g)).now());
  return {std::move(received), end - t_ready};
}

HeteroResult finish(Cluster& cluster, const HeteroGroup& group, double t0, PhaseTimes phases,
                    std::vector<DeviceBuffer> outputs) {
  HeteroResult r;
  r.outputs = std::move(outputs);
  r.phases = phases;
  r.duration_us = phases.intra_us + phases.exchange_us + phases.spread_us;
  for (int m : group.members()) cluster.clock(m).advance_to(t0 + r.duration_us);
  return r;
}

std::vector<DeviceBuffer> member_slots(const HeteroGroup& group) {
  return std::vector<DeviceBuffer>(static_cast<std::size_t>(group.size()));
}

// Places subgroup g's per-member results into member-ordered outputs.
void scatter_back(const HeteroGroup& group, int g, std::vector<DeviceBuffer>& outputs,
                  std::vector<DeviceBuffer>&& sub_outputs) {
  const auto& sub = group.subgroup(g);
  for (std::size_t k = 0; k < sub.size(); ++k) {
    outputs[static_cast<std::size_t>(group.index_of(sub[k]))] = std::move(sub_outputs[k]);
  }
}

}  // namespace

HeteroResult hetero_allreduce(Cluster& cluster, const HeteroGroup& group, DataType type,
                              std::span<const DeviceBuffer> inputs) {
  check_inputs(group, type, inputs);
  const double t0 = start_time(cluster, group);
  const int G = group.subgroup_count();
  PhaseTimes phases;

  std::vector<Bytes> partial;
  std::vector<DeviceBuffer> outputs = member_slots(group);
  for (int g = 0; g < G; ++g) {
    Pieces in = subgroup_inputs(group, g, inputs);
    CollectiveResult res = ccl(cluster, group, g, CollectiveOp::kAllReduceSum, type, in);
    phases.intra_us = std::max(phases.intra_us, res.duration_us);
    partial.push_back(to_bytes(res.outputs.front()));
    if (G == 1) scatter_back(group, g, outputs, std::move(res.outputs));
  }
  if (G == 1) return finish(cluster, group, t0, phases, std::move(outputs));

  auto [received, exchange_us] = exchange(cluster, group, t0 + phases.intra_us,
                                          [&](int i, int) { return partial[static_cast<std::size_t>(i)]; });
  phases.exchange_us = exchange_us;

  for (int j = 0; j < G; ++j) {
    const auto& got = received[static_cast<std::size_t>(j)];
    auto piece = [&](int i) -> const Bytes& {
      return i == j ? partial[static_cast<std::size_t>(j)] : got[static_cast<std::size_t>(i)];
    };
    Bytes acc = piece(0);
    for (int i = 1; i < G; ++i) reduce_sum_into(type, acc, piece(i));
    CollectiveResult res = spread(cluster, group, j, type, acc);
    phases.spread_us = std::max(phases.spread_us, res.duration_us);
    scatter_back(group, j, outputs, std::move(res.outputs));
  }
  return finish(cluster, group, t0, phases, std::move(outputs));
}

HeteroResult hetero_allgather(Cluster& cluster, const HeteroGroup& group, DataType type,
                              std::span<const DeviceBuffer> inputs) {
  const std::size_t size = check_inputs(group, type, inputs);
  const double t0 = start_time(cluster, group);
  const int G = group.subgroup_count();
  PhaseTimes phases;

  std::vector<Bytes> block;
  std::vector<DeviceBuffer> outputs = member_slots(group);
  for (int g = 0; g < G; ++g) {
    Pieces in = subgroup_inputs(group, g, inputs);
    CollectiveResult res = ccl(cluster, group, g, CollectiveOp::kAllGather, type, in);
    phases.intra_us = std::max(phases.intra_us, res.duration_us);
    block.push_back(to_bytes(res.outputs.front()));
    if (G == 1) scatter_back(group, g, outputs, std::move(res.outputs));
  }
  if (G == 1) return finish(cluster, group, t0, phases, std::move(outputs));

  auto [received, exchange_us] = exchange(cluster, group, t0 + phases.intra_us,
                                          [&](int i, int) { return block[static_cast<std::size_t>(i)]; });
  phases.exchange_us = exchange_us;

  for (int j = 0; j < G; ++j) {
    Bytes full;
    full.reserve(size * static_cast<std::size_t>(group.size()));
    for (int m : group.members()) {
      const int g = group.subgroup_of(m);
      const Bytes& src = g == j ? block[static_cast<std::size_t>(j)]
                                : received[static_cast<std::size_t>(j)][static_cast<std::size_t>(g)];
      const auto& sub = group.subgroup(g);
      const auto pos = static_cast<std::size_t>(std::find(sub.begin(), sub.end(), m) - sub.begin());
      const auto first = src.begin() + static_cast<std::ptrdiff_t>(pos * size);
      full.insert(full.end(), first, first + static_cast<std::ptrdiff_t>(size));
    }
    CollectiveResult res = spread(cluster, group, j, type, full);
    phases.spread_us = std::max(phases.spread_us, res.duration_us);
    scatter_back(group, j, outputs, std::move(res.outputs));
  }
  return finish(cluster, group, t0, phases, std::move(outputs));
}

HeteroResult hetero_reducescatter(Cluster& cluster, const HeteroGroup& group, DataType type,
                                  std::span<const DeviceBuffer> inputs) {
  const std::size_t size = check_inputs(group, type, inputs);
  const auto n = static_cast<std::size_t>(group.size());
  if ((size / data_type_size(type)) % n != 0) {
    raise(ErrorCode::kShapeError, "reducescatter input of " +
                                      std::to_string(size / data_type_size(type)) +
                                      " elements is not divisible by group size " +
                                      std::to_string(n));
  }
  const std::size_t shard = size / n;
  const double t0 = start_time(cluster, group);
  const int G = group.subgroup_count();
  PhaseTimes phases;
  std::vector<DeviceBuffer> outputs = member_slots(group);

  if (G == 1) {
    Pieces in = subgroup_inputs(group, 0, inputs);
    CollectiveResult res = ccl(cluster, group, 0, CollectiveOp::kReduceScatterSum, type, in);
    phases.intra_us = res.duration_us;
    scatter_back(group, 0, outputs, std::move(res.outputs));
    return finish(cluster, group, t0, phases, std::move(outputs));
  }

  std::vector<Bytes> partial;
  for (int g = 0; g < G; ++g) {
    Pieces in = subgroup_inputs(group, g, inputs);
    CollectiveResult res = ccl(cluster, group, g, CollectiveOp::kAllReduceSum, type, in);
    phases.intra_us = std::max(phases.intra_us, res.duration_us);
    partial.push_back(to_bytes(res.outputs.front()));
  }

  // Shards owned by subgroup j's members, concatenated in subgroup order.
  auto shards_for = [&](const Bytes& full, int j) {
    Bytes out;
    for (int m : group.subgroup(j)) {
      const auto first = full.begin() + static_cast<std::ptrdiff_t>(
                                            static_cast<std::size_t>(group.index_of(m)) * shard);
      out.insert(out.end(), first, first + static_cast<std::ptrdiff_t>(shard));
    }
    return out;
  };
  auto [received, exchange_us] = exchange(
      cluster, group, t0 + phases.intra_us,
      [&](int i, int j) { return shards_for(partial[static_cast<std::size_t>(i)], j); });
  phases.exchange_us = exchange_us;

  for (int j = 0; j < G; ++j) {
    auto piece = [&](int i) {
      return i == j ? shards_for(partial[static_cast<std::size_t>(j)], j)
                    : received[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)];
    };
    Bytes acc = piece(0);
    for (int i = 1; i < G; ++i) reduce_sum_into(type, acc, piece(i));
    CollectiveResult res = spread(cluster, group, j, type, acc);
    phases.spread_us = std::max(phases.spread_us, res.duration_us);
    const auto& sub = group.subgroup(j);
    Pieces mine;
    for (std::size_t k = 0; k < sub.size(); ++k) {
      const auto first = acc.begin() + static_cast<std::ptrdiff_t>(k * shard);
      mine.push_back(DeviceBuffer::wrap(sub[k], MemorySpace::kDevice,
                                        Bytes(first, first + static_cast<std::ptrdiff_t>(shard))));
    }
    scatter_back(group, j, outputs, std::move(mine));
  }
  return finish(cluster, group, t0, phases, std::move(outputs));
}

HeteroResult hetero_broadcast(Cluster& cluster, const HeteroGroup& group, DataType type,
                              int root, std::span<const DeviceBuffer> inputs) {
  if (!group.contains(root)) {
    raise(ErrorCode::kRootNotInGroup, "broadcast root " + std::to_string(root) +
                                          " is not a group member");
  }
  check_inputs(group, type, inputs);
  const double t0 = start_time(cluster, group);
  const int G = group.subgroup_count();
  const int r = group.subgroup_of(root);
  PhaseTimes phases;
  std::vector<DeviceBuffer> outputs = member_slots(group);

  Pieces in = subgroup_inputs(group, r, inputs);
  CollectiveResult first = ccl(cluster, group, r, CollectiveOp::kBroadcast, type, in, root);
  phases.intra_us = first.duration_us;
  const Bytes payload = to_bytes(first.outputs.front());
  scatter_back(group, r, outputs, std::move(first.outputs));
  if (G == 1) return finish(cluster, group, t0, phases, std::move(outputs));

  // Only the root subgroup's leader relays.
  auto [received, exchange_us] =
      exchange(cluster, group, t0 + phases.intra_us,
               [&](int i, int) -> std::optional<Bytes> {
                 if (i != r) return std::nullopt;
                 return payload;
               });
  phases.exchange_us = exchange_us;

  for (int j = 0; j < G; ++j) {
    if (j == r) continue;
    CollectiveResult res =
        spread(cluster, group, j, type, received[static_cast<std::size_t>(j)][static_cast<std::size_t>(r)]);
    phases.spread_us = std::max(phases.spread_us, res.duration_us);
    scatter_back(group, j, outputs, std::move(res.outputs));
  }
  return finish(cluster, group, t0, phases, std::move(outputs));
}

HeteroResult hetero_collective(Cluster& cluster, const HeteroGroup& group, CollectiveOp op,
                               DataType type, std::span<const DeviceBuffer> inputs, int root) {
  switch (op) {
    case CollectiveOp::kAllReduceSum: return hetero_allreduce(cluster, group, type, inputs);
    case CollectiveOp::kAllGather: return hetero_allgather(cluster, group, type, inputs);
    case CollectiveOp::kReduceScatterSum: return hetero_reducescatter(cluster, group, type, inputs);
    case CollectiveOp::kBroadcast: return hetero_broadcast(cluster, group, type, root, inputs);
  }
  raise(ErrorCode::kValidationError, "unknown collective");
}

PhaseTimes hetero_collective_cost(const ClusterTopology& topology, const HeteroGroup& group,
                                  CollectiveOp op, std::uint64_t size_bytes, TransferPath path,
                                  const ChunkConfig& cfg, int root) {
  const int G = group.subgroup_count();
  const auto n = static_cast<std::uint64_t>(group.size());
  const std::uint64_t shard = size_bytes / n;
  auto k_of = [&](int g) { return static_cast<int>(group.subgroup(g).size()); };
  auto ring = [&](int g, CollectiveOp o, std::uint64_t bytes) {
    return ring_collective_time(o, k_of(g), bytes, ring_link(topology, group.subgroup(g)));
  };
  auto hop = [&](int i, int j, std::uint64_t bytes) {
    return transfer_cost(topology, group.leader(i), group.leader(j), bytes, path, cfg).duration_us;
  };

  PhaseTimes t;
  if (op == CollectiveOp::kBroadcast) {
    if (root < 0) root = group.members().front();
    const int r = group.subgroup_of(root);
    t.intra_us = ring(r, op, size_bytes);
    if (G == 1) return t;
    for (int j = 0; j < G; ++j) {
      if (j == r) continue;
      t.exchange_us += hop(r, j, size_bytes);
      t.spread_us = std::max(t.spread_us, ring(j, op, size_bytes));
    }
    return t;
  }

  for (int g = 0; g < G; ++g) {
    switch (op) {
      case CollectiveOp::kAllReduceSum: t.intra_us = std::max(t.intra_us, ring(g, op, size_bytes)); break;
      case CollectiveOp::kAllGather:
        t.intra_us = std::max(t.intra_us, ring(g, op, size_bytes * static_cast<std::uint64_t>(k_of(g))));
        break;
      case CollectiveOp::kReduceScatterSum:
        t.intra_us = std::max(t.intra_us, ring(g, G == 1 ? op : CollectiveOp::kAllReduceSum, size_bytes));
        break;
      case CollectiveOp::kBroadcast: break;
    }
  }
  if (G == 1) return t;

  // Same ordered schedule as the live exchange: each transfer starts once
  // both leaders are free.
  std::vector<double> clock(static_cast<std::size_t>(G), 0.0);
  for (int i = 0; i < G; ++i) {
    for (int j = 0; j < G; ++j) {
      if (i == j) continue;
      std::uint64_t bytes = size_bytes;
      if (op == CollectiveOp::kAllGather) bytes = size_bytes * static_cast<std::uint64_t>(k_of(i));
      if (op == CollectiveOp::kReduceScatterSum) bytes = shard * static_cast<std::uint64_t>(k_of(j));
      const auto ii = static_cast<std::size_t>(i);
      const auto jj = static_cast<std::size_t>(j);
      clock[ii] = clock[jj] = std::max(clock[ii], clock[jj]) + hop(i, j, bytes);
    }
  }
  t.exchange_us = *std::max_element(clock.begin(), clock.end());
  for (int j = 0; j < G; ++j) {
    std::uint64_t bytes = size_bytes;
    if (op == CollectiveOp::kAllGather) bytes = size_bytes * n;
    if (op == CollectiveOp::kReduceScatterSum) bytes = shard * static_cast<std::uint64_t>(k_of(j));
    t.spread_us = std::max(t.spread_us, ring(j, CollectiveOp::kBroadcast, bytes));
  }
  return t;
}

// ---------------------------------------------------------------------------

GroupCommunicator::GroupCommunicator(Cluster& cluster, HeteroGroup group)
    : cluster_(cluster),
      group_(std::move(group)),
      inputs_(static_cast<std::size_t>(group_.size())),
      outputs_(static_cast<std::size_t>(group_.size())) {}

DeviceBuffer GroupCommunicator::run(int rank, CollectiveOp op, DataType type, DeviceBuffer input,
                                    int root) {
  const auto idx = static_cast<std::size_t>(group_.index_of(rank));
  const auto timeout = cluster_.options().receive_timeout;
  std::unique_lock lock(mu_);
  // Wait for the previous round to be fully collected.
  if (!cv_.wait_for(lock, timeout, [&] { return pending_takes_ == 0; })) {
    raise(ErrorCode::kTimeout, "previous collective round was never collected");
  }
  if (!current_) {
    current_ = {op, root};
    current_type_ = type;
  } else if (current_->first != op || current_->second != root || current_type_ != type) {
    // Fail the whole round so ranks already waiting do not sit out the timeout.
    const Error mismatch(ErrorCode::kValidationError, "rank " + std::to_string(rank) +
                                                          " called a different collective than its group");
    error_ = std::make_exception_ptr(mismatch);
    for (auto& in : inputs_) in = DeviceBuffer();
    pending_takes_ = arrived_;
    arrived_ = 0;
    current_.reset();
    ++generation_;
    cv_.notify_all();
    throw mismatch;
  }
  if (inputs_[idx].valid()) {
    raise(ErrorCode::kValidationError, "rank " + std::to_string(rank) + " joined a collective twice");
  }
  inputs_[idx] = std::move(input);
  const std::uint64_t generation = generation_;

  if (++arrived_ == group_.size()) {
    error_ = nullptr;
    try {
      HeteroResult r = hetero_collective(cluster_, group_, op, type, inputs_, root);
      outputs_ = std::move(r.outputs);
    } catch (...) {
      error_ = std::current_exception();
    }
    for (auto& in : inputs_) in = DeviceBuffer();
    arrived_ = 0;
    current_.reset();
    pending_takes_ = group_.size();
    ++generation_;
    cv_.notify_all();
  } else if (!cv_.wait_for(lock, timeout, [&] { return generation_ != generation; })) {
    raise(ErrorCode::kTimeout, "collective: " + std::to_string(arrived_) + " of " +
                                   std::to_string(group_.size()) + " ranks arrived");
  }

  std::exception_ptr error = error_;
  DeviceBuffer out = error ? DeviceBuffer() : std::move(outputs_[idx]);
  if (--pending_takes_ == 0) cv_.notify_all();
  if (error) std::rethrow_exception(error);
  return out;
}

}  // namespace hetcomm
