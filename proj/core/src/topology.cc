// Copyright 2026 The hetcomm Authors
// SPDX-License-Identifier: Apache-2.0

#include "hetcomm/topology.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "hetcomm/error.h"
#include "json.hpp"

namespace hetcomm {

using nlohmann::json;

VendorId::VendorId(std::string name) : name_(std::move(name)) {}

VendorId nvidia_vendor() { return VendorId("nvidia"); }
VendorId amd_vendor() { return VendorId("amd"); }

// Fitted, not measured: the per-layer ratio amd/nvidia = 17/15 reproduces a
// 15-17 split of a 32-layer model. Copy bandwidths are round HBM-class rates.
std::optional<VendorDefaults> builtin_vendor_defaults(const VendorId& vendor) {
  if (vendor == nvidia_vendor()) return VendorDefaults{3000.0, 1.0, 2.0};
  if (vendor == amd_vendor()) {
    return VendorDefaults{6000.0, 17.0 / 15.0, 2.0 * 17.0 / 15.0};
  }
  return std::nullopt;
}

std::string_view link_kind_name(LinkKind kind) {
  switch (kind) {
    case LinkKind::kIntraNodeFabric: return "intra_node_fabric";
    case LinkKind::kHostBridge: return "host_bridge";
    case LinkKind::kNicNetwork: return "nic_network";
  }
  return "unknown";
}

namespace {

void check_link(const LinkSpec& link, int node_id) {
  const std::string where = "node " + std::to_string(node_id) + " " +
                            std::string(link_kind_name(link.kind));
  if (!std::isfinite(link.bandwidth_gbps) || link.bandwidth_gbps <= 0.0) {
    raise(ErrorCode::kValidationError, where + ": bandwidth must be finite and > 0");
  }
  if (!std::isfinite(link.latency_us) || link.latency_us < 0.0) {
    raise(ErrorCode::kValidationError, where + ": latency must be finite and >= 0");
  }
}

void check_positive(double value, const std::string& what) {
  if (!std::isfinite(value) || value <= 0.0) {
    raise(ErrorCode::kValidationError, what + " must be finite and > 0");
  }
}

}  // namespace

ClusterTopology ClusterTopology::from_nodes(std::vector<NodeSpec> nodes) {
  if (nodes.empty()) {
    raise(ErrorCode::kValidationError, "topology has no nodes");
  }
  std::sort(nodes.begin(), nodes.end(),
            [](const NodeSpec& a, const NodeSpec& b) { return a.id < b.id; });

  ClusterTopology topo;
  std::set<int> node_ids;
  for (auto& node : nodes) {
    const std::string where = "node " + std::to_string(node.id);
    if (node.id < 0) raise(ErrorCode::kValidationError, where + ": negative id");
    if (!node_ids.insert(node.id).second) {
      raise(ErrorCode::kValidationError, where + ": duplicate node id");
    }
    if (node.vendor.empty()) {
      raise(ErrorCode::kValidationError, where + ": empty vendor");
    }
    if (node.devices.empty()) {
      raise(ErrorCode::kValidationError, where + ": needs at least one device");
    }
    if (node.nic_count < 1) {
      raise(ErrorCode::kValidationError, where + ": nic_count must be >= 1");
    }
    node.fabric.kind = LinkKind::kIntraNodeFabric;
    node.host.kind = LinkKind::kHostBridge;
    check_link(node.fabric, node.id);
    check_link(node.host, node.id);
    if (node.nic) {
      node.nic->kind = LinkKind::kNicNetwork;
      check_link(*node.nic, node.id);
    } else if (nodes.size() > 1) {
      raise(ErrorCode::kValidationError,
            where + ": multi-node clusters need a nic_network link");
    }

    std::sort(node.devices.begin(), node.devices.end(),
              [](const DeviceDescriptor& a, const DeviceDescriptor& b) {
                return a.device_id < b.device_id;
              });
    std::set<int> device_ids;
    for (auto& dev : node.devices) {
      const std::string dwhere = where + " device " + std::to_string(dev.device_id);
      if (dev.device_id < 0) {
        raise(ErrorCode::kValidationError, dwhere + ": negative id");
      }
      if (!device_ids.insert(dev.device_id).second) {
        raise(ErrorCode::kValidationError, dwhere + ": duplicate device id");
      }
      if (dev.node_id != node.id) {
        raise(ErrorCode::kValidationError, dwhere + ": node_id mismatch");
      }
      if (dev.vendor != node.vendor) {
        raise(ErrorCode::kValidationError,
              dwhere + ": vendor '" + dev.vendor.name() +
                  "' differs from node vendor '" + node.vendor.name() +
                  "' (mixed-vendor nodes are not supported)");
      }
      if (dev.nic_id < 0 || dev.nic_id >= node.nic_count) {
        raise(ErrorCode::kValidationError,
              dwhere + ": nic_id " + std::to_string(dev.nic_id) +
                  " does not exist (node has " +
                  std::to_string(node.nic_count) + " NICs)");
      }
      check_positive(dev.mem_bandwidth_gbps, dwhere + ": mem bandwidth");
      check_positive(dev.host_link_bandwidth_gbps, dwhere + ": host bandwidth");
      check_positive(dev.layer_time_fwd_ms, dwhere + ": layer_time_fwd_ms");
      check_positive(dev.layer_time_bwd_ms, dwhere + ": layer_time_bwd_ms");
    }
  }

  topo.nodes_ = std::move(nodes);
  for (std::size_t n = 0; n < topo.nodes_.size(); ++n) {
    for (std::size_t d = 0; d < topo.nodes_[n].devices.size(); ++d) {
      topo.ranks_.emplace_back(static_cast<int>(n), static_cast<int>(d));
    }
  }
  return topo;
}

const NodeSpec& ClusterTopology::node(int node_id) const {
  for (const auto& n : nodes_) {
    if (n.id == node_id) return n;
  }
  raise(ErrorCode::kValidationError, "unknown node " + std::to_string(node_id));
}

const DeviceDescriptor& ClusterTopology::device_of_rank(int rank) const {
  if (rank < 0 || rank >= world_size()) {
    raise(ErrorCode::kRankOutOfRange,
          "rank " + std::to_string(rank) + " not in [0, " +
              std::to_string(world_size()) + ")");
  }
  const auto [n, d] = ranks_[static_cast<std::size_t>(rank)];
  return nodes_[static_cast<std::size_t>(n)].devices[static_cast<std::size_t>(d)];
}

int ClusterTopology::rank_of(int node_id, int device_id) const {
  int base = 0;
  for (const auto& n : nodes_) {
    if (n.id == node_id) {
      for (std::size_t d = 0; d < n.devices.size(); ++d) {
        if (n.devices[d].device_id == device_id) {
          return base + static_cast<int>(d);
        }
      }
      break;
    }
    base += static_cast<int>(n.devices.size());
  }
  raise(ErrorCode::kRankOutOfRange, "no device (" + std::to_string(node_id) +
                                        ", " + std::to_string(device_id) + ")");
}

bool ClusterTopology::same_node(int rank_a, int rank_b) const {
  return device_of_rank(rank_a).node_id == device_of_rank(rank_b).node_id;
}

LinkSpec ClusterTopology::link_between(int rank_a, int rank_b) const {
  const auto& a = node(device_of_rank(rank_a).node_id);
  const auto& b = node(device_of_rank(rank_b).node_id);
  if (a.id == b.id) return a.fabric;
  // Both nodes have a NIC link: validated for multi-node clusters.
  LinkSpec link;
  link.kind = LinkKind::kNicNetwork;
  link.bandwidth_gbps = std::min(a.nic->bandwidth_gbps, b.nic->bandwidth_gbps);
  link.latency_us = std::max(a.nic->latency_us, b.nic->latency_us);
  return link;
}

LinkSpec ClusterTopology::host_link(int rank) const {
  const auto& dev = device_of_rank(rank);
  LinkSpec link = node(dev.node_id).host;
  link.bandwidth_gbps = dev.host_link_bandwidth_gbps;
  return link;
}

// ---------------------------------------------------------------------------
// JSON document

namespace {

[[noreturn]] void missing(const std::string& key, int node_index) {
  raise(ErrorCode::kParseError, "nodes[" + std::to_string(node_index) +
                                    "]: missing required key '" + key + "'");
}

double get_number(const json& obj, const char* key, int node_index) {
  auto it = obj.find(key);
  if (it == obj.end()) missing(key, node_index);
  if (!it->is_number()) {
    raise(ErrorCode::kParseError, "nodes[" + std::to_string(node_index) +
                                      "]." + key + " must be a number");
  }
  return it->get<double>();
}

std::optional<double> get_optional_number(const json& obj, const char* key,
                                          int node_index) {
  if (!obj.contains(key)) return std::nullopt;
  return get_number(obj, key, node_index);
}

int get_int(const json& obj, const char* key, int node_index) {
  auto it = obj.find(key);
  if (it == obj.end()) missing(key, node_index);
  if (!it->is_number_integer()) {
    raise(ErrorCode::kParseError, "nodes[" + std::to_string(node_index) +
                                      "]." + key + " must be an integer");
  }
  return it->get<int>();
}

NodeSpec parse_node(const json& obj, int index) {
  if (!obj.is_object()) {
    raise(ErrorCode::kParseError, "nodes[" + std::to_string(index) + "] is not an object");
  }
  NodeSpec node;
  node.id = get_int(obj, "id", index);
  auto vit = obj.find("vendor");
  if (vit == obj.end()) missing("vendor", index);
  if (!vit->is_string()) {
    raise(ErrorCode::kParseError, "nodes[" + std::to_string(index) + "].vendor must be a string");
  }
  node.vendor = VendorId(vit->get<std::string>());
  const auto defaults = builtin_vendor_defaults(node.vendor);

  node.fabric = {LinkKind::kIntraNodeFabric, get_number(obj, "fabric_bw_gbps", index),
                 get_optional_number(obj, "fabric_latency_us", index).value_or(0.0)};
  node.host = {LinkKind::kHostBridge, get_number(obj, "host_bw_gbps", index),
               get_optional_number(obj, "host_latency_us", index).value_or(0.0)};
  node.nic_count = obj.contains("nic_count") ? get_int(obj, "nic_count", index) : 1;
  if (auto bw = get_optional_number(obj, "nic_bw_gbps", index)) {
    node.nic = LinkSpec{LinkKind::kNicNetwork, *bw,
                        get_optional_number(obj, "nic_latency_us", index).value_or(0.0)};
  }

  auto resolve = [&](const char* key, std::optional<double> fallback) {
    if (auto v = get_optional_number(obj, key, index)) return *v;
    if (fallback) return *fallback;
    missing(key, index);
  };
  const double fwd = resolve("layer_time_fwd_ms",
                             defaults ? std::optional(defaults->layer_time_fwd_ms) : std::nullopt);
  const double bwd = resolve("layer_time_bwd_ms",
                             defaults ? std::optional(defaults->layer_time_bwd_ms) : std::nullopt);
  const double mem = resolve("mem_bw_gbps",
                             defaults ? std::optional(defaults->mem_bw_gbps) : std::nullopt);

  auto make_device = [&](int device_id) {
    DeviceDescriptor dev;
    dev.device_id = device_id;
    dev.node_id = node.id;
    dev.vendor = node.vendor;
    dev.mem_bandwidth_gbps = mem;
    dev.host_link_bandwidth_gbps = node.host.bandwidth_gbps;
    dev.layer_time_fwd_ms = fwd;
    dev.layer_time_bwd_ms = bwd;
    dev.nic_id = node.nic_count > 0 ? device_id % node.nic_count : 0;
    return dev;
  };

  auto dit = obj.find("devices");
  if (dit == obj.end()) missing("devices", index);
  if (dit->is_number_integer()) {
    const int count = dit->get<int>();
    for (int d = 0; d < count; ++d) node.devices.push_back(make_device(d));
  } else if (dit->is_array()) {
    for (const auto& entry : *dit) {
      if (!entry.is_object() || !entry.contains("id") || !entry["id"].is_number_integer()) {
        raise(ErrorCode::kParseError, "nodes[" + std::to_string(index) +
                                          "].devices entries need an integer 'id'");
      }
      DeviceDescriptor dev = make_device(entry["id"].get<int>());
      if (entry.contains("nic_id")) {
        if (!entry["nic_id"].is_number_integer()) {
          raise(ErrorCode::kParseError, "nic_id must be an integer");
        }
        dev.nic_id = entry["nic_id"].get<int>();
      }
      if (entry.contains("vendor")) {
        if (!entry["vendor"].is_string()) {
          raise(ErrorCode::kParseError, "device vendor must be a string");
        }
        dev.vendor = VendorId(entry["vendor"].get<std::string>());
      }
      node.devices.push_back(std::move(dev));
    }
  } else {
    raise(ErrorCode::kParseError, "nodes[" + std::to_string(index) +
                                      "].devices must be a count or an array");
  }
  return node;
}

}  // namespace

ClusterTopology load_topology(std::string_view config_text) {
  json doc;
  try {
    doc = json::parse(config_text.begin(), config_text.end());
  } catch (const json::parse_error& e) {
    raise(ErrorCode::kParseError, e.what());
  }
  if (!doc.is_object() || !doc.contains("nodes") || !doc["nodes"].is_array()) {
    raise(ErrorCode::kParseError, "document needs a 'nodes' array");
  }
  std::vector<NodeSpec> nodes;
  int index = 0;
  for (const auto& entry : doc["nodes"]) nodes.push_back(parse_node(entry, index++));
  return ClusterTopology::from_nodes(std::move(nodes));
}

ClusterTopology load_topology_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) raise(ErrorCode::kIoError, "cannot open " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return load_topology(text.str());
}

std::string serialize_topology(const ClusterTopology& topology) {
  json nodes = json::array();
  for (const auto& node : topology.nodes()) {
    // Device calibration is uniform within a node.
    const auto& first = node.devices.front();
    json devices = json::array();
    for (const auto& dev : node.devices) {
      devices.push_back({{"id", dev.device_id}, {"nic_id", dev.nic_id}});
    }
    json n = {
        {"id", node.id},
        {"vendor", node.vendor.name()},
        {"devices", devices},
        {"fabric_bw_gbps", node.fabric.bandwidth_gbps},
        {"fabric_latency_us", node.fabric.latency_us},
        {"host_bw_gbps", node.host.bandwidth_gbps},
        {"host_latency_us", node.host.latency_us},
        {"nic_count", node.nic_count},
        {"mem_bw_gbps", first.mem_bandwidth_gbps},
        {"layer_time_fwd_ms", first.layer_time_fwd_ms},
        {"layer_time_bwd_ms", first.layer_time_bwd_ms},
    };
    if (node.nic) {
      n["nic_bw_gbps"] = node.nic->bandwidth_gbps;
      n["nic_latency_us"] = node.nic->latency_us;
    }
    nodes.push_back(std::move(n));
  }
  return json{{"nodes", nodes}}.dump(2) + "\n";
}

std::string reference_testbed_config() {
  return R"({
  "nodes": [
    {"id": 0, "vendor": "amd", "devices": 8,
     "fabric_bw_gbps": 128, "fabric_latency_us": 2,
     "host_bw_gbps": 64, "host_latency_us": 1,
     "nic_count": 8, "nic_bw_gbps": 100, "nic_latency_us": 5},
    {"id": 1, "vendor": "nvidia", "devices": 8,
     "fabric_bw_gbps": 900, "fabric_latency_us": 1,
     "host_bw_gbps": 64, "host_latency_us": 1,
     "nic_count": 8, "nic_bw_gbps": 100, "nic_latency_us": 5}
  ]
}
)";
}

ClusterTopology reference_testbed_topology() {
  return load_topology(reference_testbed_config());
}

ClusterTopology single_node_topology(const VendorId& vendor, int devices) {
  const bool nv = vendor == nvidia_vendor();
  json node = {{"id", 0},
               {"vendor", vendor.name()},
               {"devices", devices},
               {"fabric_bw_gbps", nv ? 900 : 128},
               {"fabric_latency_us", nv ? 1 : 2},
               {"host_bw_gbps", 64},
               {"host_latency_us", 1},
               {"nic_count", std::max(devices, 1)},
               {"nic_bw_gbps", 100},
               {"nic_latency_us", 5}};
  return load_topology(json{{"nodes", json::array({node})}}.dump());
}

}  // namespace hetcomm
