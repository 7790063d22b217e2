// Copyright 2026 The hetcomm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string_view>
#include <vector>

#include "hetcomm/topology.h"

namespace hetcomm {

enum class GroupKind { kTp, kDp, kPp };
std::string_view group_kind_name(GroupKind kind);

enum class GroupBackend {
  kUnassigned,
  kVendorCcl,  // every member shares one vendor
  kHetero,     // spans vendors; PP only
};
std::string_view group_backend_name(GroupBackend backend);

struct CommGroup {
  GroupKind kind = GroupKind::kPp;
  std::vector<int> members;  // ascending grid order along the group's axis
  GroupBackend backend = GroupBackend::kUnassigned;
};

struct ParallelGroups {
  std::vector<CommGroup> tp;
  std::vector<CommGroup> dp;
  std::vector<CommGroup> pp;
};

// Position of a rank on the (tp, dp, pp) grid. Ranks enumerate the grid
// tp-fastest, then dp, then pp:  rank = tp + tp_size * (dp + dp_size * pp).
struct GridCoords {
  int tp = 0;
  int dp = 0;
  int pp = 0;

  friend bool operator==(const GridCoords&, const GridCoords&) = default;
};

struct GridShape {
  int tp = 1;
  int pp = 1;
  int dp = 1;

  int size() const noexcept { return tp * pp * dp; }
};

GridCoords grid_coords(const GridShape& shape, int rank);
int grid_rank(const GridShape& shape, const GridCoords& coords);

// Throws GridMismatch unless tp * pp * dp == world_size and all are >= 1.
ParallelGroups build_groups(const ClusterTopology& topology, int tp, int pp, int dp);

// Vendor-homogeneous groups use the vendor CCL; vendor-spanning PP groups
// use the heterogeneous path. Vendor-spanning TP or DP groups throw
// HeterogeneityNotSupported.
ParallelGroups assign_backends(ParallelGroups groups, const ClusterTopology& topology);

bool is_vendor_homogeneous(const std::vector<int>& ranks, const ClusterTopology& topology);

}  // namespace hetcomm
