// Copyright 2026 The hetcomm Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <random>
#include <thread>

#include "hetcomm/cluster.h"
#include "hetcomm/collectives.h"
#include "hetcomm/error.h"
#include "test_support.h"

namespace hetcomm {
namespace {

using testing::from_bytes;
using testing::to_bytes;

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

template <typename T>
std::vector<DeviceBuffer> inputs_for(const HeteroGroup& g, const std::vector<std::vector<T>>& data) {
  std::vector<DeviceBuffer> in;
  for (int i = 0; i < g.size(); ++i) {
    in.push_back(DeviceBuffer::wrap(g.members()[i], MemorySpace::kDevice, to_bytes(data[i])));
  }
  return in;
}

class CollectiveTest : public ::testing::Test {
 protected:
  Cluster cluster{testing::three_vendor_topology()};
  const ClusterTopology& topo() { return cluster.topology(); }
};

TEST_F(CollectiveTest, GroupStructure) {
  HeteroGroup g(topo(), {9, 0, 5, 1, 4});
  EXPECT_EQ(g.members(), (std::vector<int>{0, 1, 4, 5, 9}));
  ASSERT_EQ(g.subgroup_count(), 3);
  EXPECT_EQ(g.subgroup(0), (std::vector<int>{0, 1}));
  EXPECT_EQ(g.subgroup(1), (std::vector<int>{4, 5}));
  EXPECT_EQ(g.subgroup(2), (std::vector<int>{9}));
  EXPECT_EQ(g.leader(1), 4);
  EXPECT_EQ(g.subgroup_vendor(2), VendorId("blue"));
  EXPECT_EQ(g.subgroup_of(5), 1);
  EXPECT_EQ(code_of([&] { HeteroGroup(topo(), {}); }), ErrorCode::kEmptyGroup);
  EXPECT_EQ(code_of([&] { HeteroGroup(topo(), {1, 1}); }), ErrorCode::kValidationError);
  EXPECT_EQ(code_of([&] { HeteroGroup(topo(), {99}); }), ErrorCode::kRankOutOfRange);
}

TEST_F(CollectiveTest, AllreduceTwoByTwo) {
  HeteroGroup g(topo(), {0, 1, 4, 5});
  auto r = hetero_allreduce(cluster, g, DataType::kInt32,
                            inputs_for<std::int32_t>(g, {{1}, {2}, {3}, {4}}));
  for (const auto& out : r.outputs) EXPECT_EQ(from_bytes<std::int32_t>(out.bytes()), std::vector<std::int32_t>{10});
}

TEST_F(CollectiveTest, SingleSubgroupIsPlainCcl) {
  HeteroGroup g(topo(), {4, 5, 6});
  auto r = hetero_allreduce(cluster, g, DataType::kInt32, inputs_for<std::int32_t>(g, {{1}, {2}, {3}}));
  EXPECT_EQ(r.phases.exchange_us, 0.0);
  EXPECT_EQ(r.phases.spread_us, 0.0);
  const std::vector<int> members{4, 5, 6};
  EXPECT_DOUBLE_EQ(r.duration_us, ring_collective_time(CollectiveOp::kAllReduceSum, 3, 4,
                                                       ring_link(topo(), members)));
}

TEST_F(CollectiveTest, AllgatherRankValues) {
  HeteroGroup g(topo(), {0, 4, 8, 9});
  auto r = hetero_allgather(cluster, g, DataType::kInt32, inputs_for<std::int32_t>(g, {{0}, {1}, {2}, {3}}));
  for (const auto& out : r.outputs) {
    EXPECT_EQ(from_bytes<std::int32_t>(out.bytes()), (std::vector<std::int32_t>{0, 1, 2, 3}));
  }
}

TEST_F(CollectiveTest, ReducescatterOnes) {
  HeteroGroup g(topo(), {0, 1, 4, 5});
  const std::vector<std::int32_t> ones(4, 1);
  auto r = hetero_reducescatter(cluster, g, DataType::kInt32, inputs_for<std::int32_t>(g, {ones, ones, ones, ones}));
  for (const auto& out : r.outputs) EXPECT_EQ(from_bytes<std::int32_t>(out.bytes()), std::vector<std::int32_t>{4});
  const std::vector<std::int32_t> three(3, 1);
  EXPECT_EQ(code_of([&] {
              hetero_reducescatter(cluster, g, DataType::kInt32, inputs_for<std::int32_t>(g, {three, three, three, three}));
            }),
            ErrorCode::kShapeError);
}

TEST_F(CollectiveTest, BroadcastCases) {
  HeteroGroup one(topo(), {7});
  auto r = hetero_broadcast(cluster, one, DataType::kInt32, 7, inputs_for<std::int32_t>(one, {{42}}));
  EXPECT_EQ(from_bytes<std::int32_t>(r.outputs[0].bytes()), std::vector<std::int32_t>{42});
  HeteroGroup g(topo(), {0, 5, 6, 10});
  auto b = hetero_broadcast(cluster, g, DataType::kInt32, 6, inputs_for<std::int32_t>(g, {{1}, {2}, {3}, {4}}));
  for (const auto& out : b.outputs) EXPECT_EQ(from_bytes<std::int32_t>(out.bytes()), std::vector<std::int32_t>{3});
  EXPECT_EQ(code_of([&] { hetero_broadcast(cluster, g, DataType::kInt32, 1, inputs_for<std::int32_t>(g, {{1}, {2}, {3}, {4}})); }),
            ErrorCode::kRootNotInGroup);
}

TEST_F(CollectiveTest, SizeMismatchRejected) {
  HeteroGroup g(topo(), {0, 4});
  EXPECT_THROW(hetero_allreduce(cluster, g, DataType::kInt32, inputs_for<std::int32_t>(g, {{1}, {2, 3}})), Error);
}

// Simulated duration equals the analytic per-phase cost for every op and
// both transfer paths.
TEST_F(CollectiveTest, DurationMatchesAnalyticCost) {
  std::mt19937_64 rng(5);
  const std::vector<std::vector<int>> groups{{0, 1, 4, 5}, {0, 4, 8}, {1, 2, 3, 6, 9, 10, 11}, {5}};
  for (TransferPath path : {TransferPath::kDeviceDirect, TransferPath::kCpuForwarding}) {
    cluster.set_path(path);
    for (const auto& members : groups) {
      HeteroGroup g(topo(), members);
      const int elems = 64 * g.size();
      std::vector<std::vector<float>> data(static_cast<std::size_t>(g.size()), std::vector<float>(elems, 1.0f));
      for (CollectiveOp op : {CollectiveOp::kAllReduceSum, CollectiveOp::kAllGather,
                              CollectiveOp::kReduceScatterSum, CollectiveOp::kBroadcast}) {
        const int root = g.members().back();
        cluster.nics().reset();  // earlier groups leave NIC reservations behind
        auto r = hetero_collective(cluster, g, op, DataType::kFloat32, inputs_for(g, data), root);
        const PhaseTimes p = hetero_collective_cost(topo(), g, op, elems * sizeof(float), path, cluster.chunk(), root);
        EXPECT_NEAR(r.phases.intra_us, p.intra_us, 1e-9);
        EXPECT_NEAR(r.phases.exchange_us, p.exchange_us, 1e-9);
        EXPECT_NEAR(r.phases.spread_us, p.spread_us, 1e-9);
        EXPECT_NEAR(r.duration_us, p.intra_us + p.exchange_us + p.spread_us, 1e-9);
      }
    }
  }
}

TEST_F(CollectiveTest, DeterministicAndComposable) {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<float> val(-1.0f, 1.0f);
  HeteroGroup g(topo(), {0, 2, 4, 5, 7, 8, 11});
  std::vector<std::vector<float>> data(7, std::vector<float>(21));
  for (auto& v : data) for (float& x : v) x = val(rng);
  auto a = hetero_allreduce(cluster, g, DataType::kFloat32, inputs_for(g, data));
  auto b = hetero_allreduce(cluster, g, DataType::kFloat32, inputs_for(g, data));
  auto gathered = hetero_allgather(cluster, g, DataType::kFloat32, inputs_for(g, data));
  const auto all = from_bytes<float>(gathered.outputs[0].bytes());
  for (int i = 0; i < 7; ++i) {
    const auto va = from_bytes<float>(a.outputs[i].bytes());
    EXPECT_EQ(va, from_bytes<float>(b.outputs[i].bytes()));
    for (int e = 0; e < 21; ++e) {
      double sum = 0.0;
      double mag = 0.0;
      for (int r = 0; r < 7; ++r) {
        sum += all[static_cast<std::size_t>(r * 21 + e)];
        mag += std::abs(all[static_cast<std::size_t>(r * 21 + e)]);
      }
      EXPECT_LE(std::abs(va[e] - sum), 7 * 4 * testing::ulp_at(static_cast<float>(mag)));
    }
  }
}

// Testbed layout: 16 ranks, 4096 random floats each.
TEST(CollectiveTestbed, AllreduceWithin64Ulp) {
  Cluster cluster(reference_testbed_topology());
  std::vector<int> members(16);
  std::iota(members.begin(), members.end(), 0);
  HeteroGroup g(cluster.topology(), members);
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<float> val(-1.0f, 1.0f);
  std::vector<std::vector<float>> data(16, std::vector<float>(4096));
  for (auto& v : data) for (float& x : v) x = val(rng);
  auto r = hetero_allreduce(cluster, g, DataType::kFloat32, inputs_for(g, data));
  for (int e = 0; e < 4096; ++e) {
    // Oracle: ascending-rank order in float.
    float acc = 0.0f;
    double mag = 0.0;
    for (int i = 0; i < 16; ++i) {
      acc += data[i][e];
      mag += std::abs(data[i][e]);
    }
    const double tol = 64 * testing::ulp_at(static_cast<float>(mag));
    for (int i = 0; i < 16; ++i) {
      ASSERT_LE(std::abs(from_bytes<float>(r.outputs[i].bytes())[e] - acc), tol);
    }
  }
}

TEST(GroupCommunicatorTest, PerRankCallsAgree) {
  Cluster cluster(reference_testbed_topology());
  std::vector<int> members{0, 3, 8, 12};
  GroupCommunicator comm(cluster, HeteroGroup(cluster.topology(), members));
  std::vector<std::vector<std::int64_t>> results(4);
  for (int round = 0; round < 3; ++round) {
    {
      std::vector<std::jthread> threads;
      for (int i = 0; i < 4; ++i) {
        threads.emplace_back([&, i] {
          const int rank = members[i];
          auto in = DeviceBuffer::wrap(rank, MemorySpace::kDevice,
                                       to_bytes(std::vector<std::int64_t>{rank, round}));
          results[i] = from_bytes<std::int64_t>(comm.allreduce(rank, DataType::kInt64, std::move(in)).bytes());
        });
      }
    }
    for (const auto& r : results) EXPECT_EQ(r, (std::vector<std::int64_t>{23, 4 * round}));
  }
  // Clocks advance together.
  const double t = cluster.clock(0).now();
  EXPECT_GT(t, 0.0);
  for (int rank : members) EXPECT_EQ(cluster.clock(rank).now(), t);
}

TEST(GroupCommunicatorTest, MismatchedOpsRejected) {
  Cluster cluster(reference_testbed_topology());
  GroupCommunicator comm(cluster, HeteroGroup(cluster.topology(), {0, 8}));
  std::atomic<int> errors{0};
  {
    std::vector<std::jthread> threads;
    for (int rank : {0, 8}) {
      threads.emplace_back([&, rank] {
        const CollectiveOp op = rank == 0 ? CollectiveOp::kAllReduceSum : CollectiveOp::kAllGather;
        try {
          comm.run(rank, op, DataType::kInt32, DeviceBuffer::wrap(rank, MemorySpace::kDevice, Bytes(4)));
        } catch (const Error&) {
          ++errors;
        }
      });
    }
  }
  EXPECT_GE(errors.load(), 1);
}

}  // namespace
}  // namespace hetcomm
