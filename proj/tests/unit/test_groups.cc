// Copyright 2026 The hetcomm Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <set>

#include "hetcomm/error.h"
#include "hetcomm/groups.h"
#include "test_support.h"

namespace hetcomm {
namespace {

template <typename F>
ErrorCode code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an error";
  return ErrorCode::kSpecError;
}

void expect_partition(const std::vector<CommGroup>& groups, int world, int size) {
  std::set<int> seen;
  for (const auto& g : groups) {
    EXPECT_EQ(static_cast<int>(g.members.size()), size);
    for (int r : g.members) EXPECT_TRUE(seen.insert(r).second) << "rank " << r << " twice";
  }
  EXPECT_EQ(static_cast<int>(seen.size()), world);
}

TEST(Groups, TestbedHeterogeneousLayout) {
  const auto topo = reference_testbed_topology();
  const auto g = assign_backends(build_groups(topo, 1, 2, 8), topo);
  ASSERT_EQ(g.pp.size(), 8u);
  for (int i = 0; i < 8; ++i) {
    EXPECT_EQ(g.pp[i].members, (std::vector<int>{i, i + 8}));
    EXPECT_EQ(g.pp[i].backend, GroupBackend::kHetero);
  }
  ASSERT_EQ(g.dp.size(), 2u);
  EXPECT_EQ(g.dp[0].members, (std::vector<int>{0, 1, 2, 3, 4, 5, 6, 7}));
  EXPECT_EQ(g.dp[1].members, (std::vector<int>{8, 9, 10, 11, 12, 13, 14, 15}));
  for (const auto& d : g.dp) EXPECT_EQ(d.backend, GroupBackend::kVendorCcl);
  EXPECT_EQ(g.tp.size(), 16u);
  for (const auto& t : g.tp) EXPECT_EQ(t.backend, GroupBackend::kVendorCcl);
}

TEST(Groups, HomogeneousSingleNode) {
  const auto topo = single_node_topology(nvidia_vendor(), 8);
  const auto g = assign_backends(build_groups(topo, 1, 2, 4), topo);
  EXPECT_EQ(g.pp.size(), 4u);
  EXPECT_EQ(g.dp.size(), 2u);
  for (const auto* kind : {&g.tp, &g.dp, &g.pp}) {
    for (const auto& grp : *kind) EXPECT_EQ(grp.backend, GroupBackend::kVendorCcl);
  }
}

TEST(Groups, GridMismatch) {
  const auto topo = single_node_topology(nvidia_vendor(), 8);
  EXPECT_EQ(code_of([&] { build_groups(topo, 3, 1, 1); }), ErrorCode::kGridMismatch);
  EXPECT_EQ(code_of([&] { build_groups(topo, 0, 8, 1); }), ErrorCode::kGridMismatch);
}

TEST(Groups, CrossVendorDpOrTpRejected) {
  const auto topo = reference_testbed_topology();
  // pp=1, dp=16: the single DP group spans both nodes.
  EXPECT_EQ(code_of([&] { assign_backends(build_groups(topo, 1, 1, 16), topo); }),
            ErrorCode::kHeterogeneityNotSupported);
  EXPECT_EQ(code_of([&] { assign_backends(build_groups(topo, 16, 1, 1), topo); }),
            ErrorCode::kHeterogeneityNotSupported);
  // Every grid of the testbed that does not split pp along the node boundary.
  for (int tp : {1, 2, 4, 8, 16}) {
    for (int pp : {1, 2, 4, 8, 16}) {
      if (16 % (tp * pp) != 0) continue;
      const int dp = 16 / (tp * pp);
      const auto groups = build_groups(topo, tp, pp, dp);
      bool cross = false;
      for (const auto* kind : {&groups.tp, &groups.dp}) {
        for (const auto& grp : *kind) cross |= !is_vendor_homogeneous(grp.members, topo);
      }
      if (cross) {
        EXPECT_EQ(code_of([&] { assign_backends(groups, topo); }), ErrorCode::kHeterogeneityNotSupported);
      } else {
        EXPECT_NO_THROW(assign_backends(groups, topo));
      }
    }
  }
}

TEST(Groups, PartitionAndSoundnessOverAllGrids) {
  const auto topo = testing::three_vendor_topology();
  const int world = topo.world_size();
  for (int tp = 1; tp <= world; ++tp) {
    for (int pp = 1; pp <= world; ++pp) {
      if (world % (tp * pp) != 0) continue;
      const int dp = world / (tp * pp);
      const auto g = build_groups(topo, tp, pp, dp);
      expect_partition(g.tp, world, tp);
      expect_partition(g.dp, world, dp);
      expect_partition(g.pp, world, pp);
      try {
        const auto a = assign_backends(g, topo);
        for (const auto* kind : {&a.tp, &a.dp, &a.pp}) {
          for (const auto& grp : *kind) {
            if (grp.backend == GroupBackend::kVendorCcl) {
              EXPECT_TRUE(is_vendor_homogeneous(grp.members, topo));
            }
            EXPECT_NE(grp.backend, GroupBackend::kUnassigned);
          }
        }
        for (const auto* kind : {&a.tp, &a.dp}) {
          for (const auto& grp : *kind) EXPECT_NE(grp.backend, GroupBackend::kHetero);
        }
      } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::kHeterogeneityNotSupported);
      }
    }
  }
}

TEST(Groups, GridRoundTrip) {
  for (const GridShape shape : {GridShape{1, 2, 8}, GridShape{2, 3, 2}, GridShape{4, 1, 3}}) {
    for (int r = 0; r < shape.size(); ++r) {
      const GridCoords c = grid_coords(shape, r);
      EXPECT_EQ(grid_rank(shape, c), r);
      EXPECT_EQ(r, c.tp + shape.tp * (c.dp + shape.dp * c.pp));
    }
  }
  EXPECT_THROW(grid_coords(GridShape{1, 2, 2}, 4), Error);
}

TEST(Groups, Names) {
  EXPECT_EQ(group_kind_name(GroupKind::kPp), "PP");
  EXPECT_EQ(group_backend_name(GroupBackend::kVendorCcl), "vendor_ccl");
  EXPECT_EQ(group_backend_name(GroupBackend::kHetero), "hetero");
}

}  // namespace
}  // namespace hetcomm
