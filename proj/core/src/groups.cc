// Copyright 2026 The hetcomm Authors
// SPDX-License-Identifier: Apache-2.0

#include "hetcomm/groups.h"

#include <string>

#include "hetcomm/error.h"

namespace hetcomm {

std::string_view group_kind_name(GroupKind kind) {
  switch (kind) {
    case GroupKind::kTp: return "TP";
    case GroupKind::kDp: return "DP";
    case GroupKind::kPp: return "PP";
  }
  return "unknown";
}

std::string_view group_backend_name(GroupBackend backend) {
  switch (backend) {
    case GroupBackend::kUnassigned: return "unassigned";
    case GroupBackend::kVendorCcl: return "vendor_ccl";
    case GroupBackend::kHetero: return "hetero";
  }
  return "unknown";
}

GridCoords grid_coords(const GridShape& shape, int rank) {
  if (rank < 0 || rank >= shape.size()) {
    raise(ErrorCode::kRankOutOfRange, "rank " + std::to_string(rank) + " outside the grid");
  }
  return GridCoords{rank % shape.tp, (rank / shape.tp) % shape.dp, rank / (shape.tp * shape.dp)};
}

int grid_rank(const GridShape& shape, const GridCoords& c) {
  if (c.tp < 0 || c.tp >= shape.tp || c.dp < 0 || c.dp >= shape.dp || c.pp < 0 ||
      c.pp >= shape.pp) {
    raise(ErrorCode::kRankOutOfRange, "grid coordinates out of range");
  }
  return c.tp + shape.tp * (c.dp + shape.dp * c.pp);
}

ParallelGroups build_groups(const ClusterTopology& topology, int tp, int pp, int dp) {
  const int world = topology.world_size();
  if (tp < 1 || pp < 1 || dp < 1 || static_cast<long long>(tp) * pp * dp != world) {
    raise(ErrorCode::kGridMismatch, "tp=" + std::to_string(tp) + " pp=" + std::to_string(pp) +
                                        " dp=" + std::to_string(dp) +
                                        " does not factor world size " + std::to_string(world));
  }
  const GridShape shape{tp, pp, dp};
  ParallelGroups g;
  for (int p = 0; p < pp; ++p) {
    for (int d = 0; d < dp; ++d) {
      CommGroup group{GroupKind::kTp, {}, GroupBackend::kUnassigned};
      for (int t = 0; t < tp; ++t) group.members.push_back(grid_rank(shape, {t, d, p}));
      g.tp.push_back(std::move(group));
    }
  }
  for (int p = 0; p < pp; ++p) {
    for (int t = 0; t < tp; ++t) {
      CommGroup group{GroupKind::kDp, {}, GroupBackend::kUnassigned};
      for (int d = 0; d < dp; ++d) group.members.push_back(grid_rank(shape, {t, d, p}));
      g.dp.push_back(std::move(group));
    }
  }
  for (int d = 0; d < dp; ++d) {
    for (int t = 0; t < tp; ++t) {
      CommGroup group{GroupKind::kPp, {}, GroupBackend::kUnassigned};
      for (int p = 0; p < pp; ++p) group.members.push_back(grid_rank(shape, {t, d, p}));
      g.pp.push_back(std::move(group));
    }
  }
  return g;
}

bool is_vendor_homogeneous(const std::vector<int>& ranks, const ClusterTopology& topology) {
  for (int r : ranks) {
    if (topology.vendor_of_rank(r) != topology.vendor_of_rank(ranks.front())) return false;
  }
  return true;
}

ParallelGroups assign_backends(ParallelGroups groups, const ClusterTopology& topology) {
  for (auto* list : {&groups.tp, &groups.dp, &groups.pp}) {
    for (CommGroup& g : *list) {
      if (is_vendor_homogeneous(g.members, topology)) {
        g.backend = GroupBackend::kVendorCcl;
      } else if (g.kind == GroupKind::kPp) {
        g.backend = GroupBackend::kHetero;
      } else {
        std::string ranks;
        for (int r : g.members) ranks += (ranks.empty() ? "" : ",") + std::to_string(r);
        raise(ErrorCode::kHeterogeneityNotSupported,
              std::string(group_kind_name(g.kind)) + " group {" + ranks +
                  "} spans vendors; only pipeline groups may be heterogeneous");
      }
    }
  }
  return groups;
}

}  // namespace hetcomm
