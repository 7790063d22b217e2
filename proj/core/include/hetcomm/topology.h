// Copyright 2026 The hetcomm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <compare>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace hetcomm {

// Opaque vendor identifier. Two are built in: "nvidia" and "amd", each with
// default device calibration (see builtin_vendor_defaults).
class VendorId {
 public:
  VendorId() = default;
  explicit VendorId(std::string name);

  const std::string& name() const noexcept { return name_; }
  bool empty() const noexcept { return name_.empty(); }

  friend bool operator==(const VendorId&, const VendorId&) = default;
  friend auto operator<=>(const VendorId&, const VendorId&) = default;

 private:
  std::string name_;
};

VendorId nvidia_vendor();
VendorId amd_vendor();

// Per-vendor calibration defaults applied when a topology file omits them.
// The "nvidia" defaults are strictly faster per layer than the "amd" ones.
struct VendorDefaults {
  double mem_bw_gbps;
  double layer_time_fwd_ms;
  double layer_time_bwd_ms;
};

std::optional<VendorDefaults> builtin_vendor_defaults(const VendorId& vendor);

enum class LinkKind { kIntraNodeFabric, kHostBridge, kNicNetwork };

std::string_view link_kind_name(LinkKind kind);

struct LinkSpec {
  LinkKind kind = LinkKind::kIntraNodeFabric;
  double bandwidth_gbps = 0.0;  // GB/s, 1 GB = 1e9 bytes
  double latency_us = 0.0;

  friend bool operator==(const LinkSpec&, const LinkSpec&) = default;
};

struct DeviceDescriptor {
  int device_id = 0;
  int node_id = 0;
  VendorId vendor;
  double mem_bandwidth_gbps = 0.0;        // device-local copy rate
  double host_link_bandwidth_gbps = 0.0;  // host <-> device rate
  double layer_time_fwd_ms = 0.0;
  double layer_time_bwd_ms = 0.0;
  int nic_id = 0;

  friend bool operator==(const DeviceDescriptor&,
                         const DeviceDescriptor&) = default;
};

struct NodeSpec {
  int id = 0;
  VendorId vendor;
  LinkSpec fabric;              // kIntraNodeFabric
  LinkSpec host;                // kHostBridge
  std::optional<LinkSpec> nic;  // kNicNetwork; optional on single-node clusters
  int nic_count = 1;
  std::vector<DeviceDescriptor> devices;  // ascending device_id

  friend bool operator==(const NodeSpec&, const NodeSpec&) = default;
};

// Validated, immutable description of the simulated cluster. Ranks are
// assigned node-major then device-major over ascending (node_id, device_id).
class ClusterTopology {
 public:
  // Validates and normalizes (sorts nodes/devices). Throws ValidationError.
  static ClusterTopology from_nodes(std::vector<NodeSpec> nodes);

  int world_size() const noexcept { return static_cast<int>(ranks_.size()); }
  const std::vector<NodeSpec>& nodes() const noexcept { return nodes_; }
  const NodeSpec& node(int node_id) const;

  // Throws RankOutOfRange.
  const DeviceDescriptor& device_of_rank(int rank) const;
  int rank_of(int node_id, int device_id) const;

  const VendorId& vendor_of_rank(int rank) const {
    return device_of_rank(rank).vendor;
  }
  bool same_node(int rank_a, int rank_b) const;

  // The link a point-to-point transfer between two ranks traverses: the
  // node fabric when co-located, otherwise the NIC network (slowest
  // endpoint's bandwidth, largest latency).
  LinkSpec link_between(int rank_a, int rank_b) const;
  LinkSpec host_link(int rank) const;

  friend bool operator==(const ClusterTopology& a, const ClusterTopology& b) {
    return a.nodes_ == b.nodes_;
  }

 private:
  std::vector<NodeSpec> nodes_;
  std::vector<std::pair<int, int>> ranks_;  // rank -> (node index, device index)
};

// Parses the JSON topology document. Throws ParseError on malformed input
// or missing keys and ValidationError on semantic violations.
ClusterTopology load_topology(std::string_view config_text);
ClusterTopology load_topology_file(const std::filesystem::path& path);

// Emits a document that load_topology maps back to an equal topology.
std::string serialize_topology(const ClusterTopology& topology);

// Two 8-device nodes: node 0 "amd" (128 GB/s fabric), node 1 "nvidia"
// (900 GB/s fabric), 8 NICs of 100 GB/s per node.
std::string reference_testbed_config();
ClusterTopology reference_testbed_topology();

// Single node holding `devices` devices of one built-in vendor, with the
// same link calibration as that vendor's node in the testbed.
ClusterTopology single_node_topology(const VendorId& vendor, int devices);

}  // namespace hetcomm
