// Copyright 2026 The hetcomm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <chrono>
#include <map>
#include <memory>
#include <mutex>
#include <string>

#include "hetcomm/adaptors.h"
#include "hetcomm/bootstrap.h"
#include "hetcomm/path.h"
#include "hetcomm/topology.h"
#include "hetcomm/transport.h"

namespace hetcomm {

// Busy-until bookkeeping for every (node, nic) pair. A transfer holds the
// NIC on both endpoints for its whole duration.
class NicScheduler {
 public:
  // Earliest start >= `ready_us` at which both NICs are free; marks them
  // busy until start + duration. Returns the start time.
  double reserve(int src_node, int src_nic, int dst_node, int dst_nic, double ready_us,
                 double duration_us);
  void reset();

 private:
  std::mutex mu_;
  std::map<std::pair<int, int>, double> busy_until_;
};

struct ClusterOptions {
  TransferPath path = TransferPath::kDeviceDirect;
  ChunkConfig chunk;
  // In-process coordinator endpoint used during construction.
  std::string coordinator = "inproc://hetcomm";
  std::chrono::milliseconds bootstrap_timeout = kDefaultRendezvousTimeout;
  // Upper bound on any blocking data-plane receive (surfaces hangs).
  std::chrono::milliseconds receive_timeout{120000};
};

// The simulated cluster at runtime: one execution context per rank, the
// per-vendor adaptor backends, the data-plane transport, and the directory
// every rank agreed on during initialization.
class Cluster {
 public:
  // Runs the initialization phase: every rank (one thread each) performs
  // rendezvous and builds the global directory over the bootstrap network.
  explicit Cluster(ClusterTopology topology, ClusterOptions options = {});

  Cluster(const Cluster&) = delete;
  Cluster& operator=(const Cluster&) = delete;

  const ClusterTopology& topology() const noexcept { return *topology_; }
  std::shared_ptr<const ClusterTopology> shared_topology() const noexcept { return topology_; }
  int world_size() const noexcept { return topology_->world_size(); }
  const GlobalDirectory& directory() const noexcept { return directory_; }

  VendorBackend& backend_for_rank(int rank);
  VendorBackend& backend(const VendorId& vendor);

  Transport& transport() noexcept { return *transport_; }
  TraceLog& trace() noexcept { return transport_->trace(); }
  SimClock& clock(int rank) { return transport_->clock(rank); }
  NicScheduler& nics() noexcept { return nics_; }

  TransferPath path() const noexcept { return options_.path; }
  void set_path(TransferPath path) noexcept { options_.path = path; }
  const ChunkConfig& chunk() const noexcept { return options_.chunk; }
  const ClusterOptions& options() const noexcept { return options_; }

 private:
  std::shared_ptr<const ClusterTopology> topology_;
  ClusterOptions options_;
  GlobalDirectory directory_;
  std::map<VendorId, VendorBackend> backends_;
  std::unique_ptr<Transport> transport_;
  NicScheduler nics_;
};

}  // namespace hetcomm
