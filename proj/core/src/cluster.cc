// Copyright 2026 The hetcomm Authors
// SPDX-License-Identifier: Apache-2.0

#include "hetcomm/cluster.h"

#include <atomic>
#include <exception>
#include <thread>
#include <vector>

#include "hetcomm/error.h"

namespace hetcomm {

double NicScheduler::reserve(int src_node, int src_nic, int dst_node, int dst_nic,
                             double ready_us, double duration_us) {
  std::lock_guard lock(mu_);
  double& a = busy_until_[{src_node, src_nic}];
  double& b = busy_until_[{dst_node, dst_nic}];
  const double start = std::max({ready_us, a, b});
  a = start + duration_us;
  b = start + duration_us;
  return start;
}

void NicScheduler::reset() {
  std::lock_guard lock(mu_);
  busy_until_.clear();
}

namespace {
std::atomic<std::uint64_t> g_cluster_serial{0};
}  // namespace

Cluster::Cluster(ClusterTopology topology, ClusterOptions options)
    : topology_(std::make_shared<const ClusterTopology>(std::move(topology))),
      options_(std::move(options)) {
  options_.chunk.validate();
  const int n = topology_->world_size();

  for (const auto& node : topology_->nodes()) {
    if (!backends_.contains(node.vendor)) {
      backends_.emplace(node.vendor, make_sim_backend(node.vendor, topology_));
    }
  }
  transport_ = std::make_unique<Transport>(n);

  // Initialization phase. Each construction gets a private endpoint so that
  // clusters built concurrently never join each other's rendezvous.
  const std::string endpoint =
      options_.coordinator + "#" + std::to_string(g_cluster_serial.fetch_add(1));
  std::vector<GlobalDirectory> views(static_cast<std::size_t>(n));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n));
  {
    std::vector<std::jthread> ranks;
    for (int r = 0; r < n; ++r) {
      ranks.emplace_back([&, r] {
        try {
          BootstrapNet net = rendezvous(r, n, endpoint, options_.bootstrap_timeout);
          views[static_cast<std::size_t>(r)] = build_directory(net, *topology_);
        } catch (...) {
          errors[static_cast<std::size_t>(r)] = std::current_exception();
        }
      });
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  for (const auto& view : views) {
    if (view.serialize() != views.front().serialize()) {
      raise(ErrorCode::kValidationError, "ranks disagree on the global directory");
    }
  }
  directory_ = std::move(views.front());
}

VendorBackend& Cluster::backend_for_rank(int rank) {
  return backend(directory_.vendor_of(rank));
}

VendorBackend& Cluster::backend(const VendorId& vendor) {
  auto it = backends_.find(vendor);
  if (it == backends_.end()) {
    raise(ErrorCode::kValidationError, "no backend for vendor '" + vendor.name() + "'");
  }
  return it->second;
}

}  // namespace hetcomm
