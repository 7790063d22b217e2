// Copyright 2026 The hetcomm Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <numeric>
#include <random>
#include <thread>

#include "hetcomm/bootstrap.h"
#include "hetcomm/cluster.h"
#include "hetcomm/error.h"
#include "test_support.h"

namespace hetcomm {
namespace {

std::string unique_coord(const char* tag) {
  static std::atomic<int> counter{0};
  return std::string("inproc://test-") + tag + "-" + std::to_string(counter++);
}

// Runs fn(rank) on `world` threads launched in `order`.
template <typename F>
void run_ranks(const std::vector<int>& order, F&& fn) {
  std::vector<std::jthread> threads;
  for (int r : order) threads.emplace_back([&fn, r] { fn(r); });
}

TEST(Rendezvous, SingleRank) {
  BootstrapNet net = rendezvous(0, 1, unique_coord("one"));
  EXPECT_TRUE(net.connected());
  EXPECT_EQ(net.world_size(), 1);
  const Bytes local{std::byte{42}};
  auto all = bootstrap_allgather(net, local);
  ASSERT_EQ(all.size(), 1u);
  EXPECT_EQ(all[0], local);
}

TEST(Rendezvous, AnyArrivalOrder) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<int> order(16);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    const std::string coord = unique_coord("order");
    std::vector<int> seen(16, -1);
    run_ranks(order, [&](int r) {
      BootstrapNet net = rendezvous(r, 16, coord);
      auto all = bootstrap_allgather(net, Bytes{static_cast<std::byte>(r)});
      int ok = 1;
      for (int i = 0; i < 16; ++i) ok &= all[i] == Bytes{static_cast<std::byte>(i)};
      seen[r] = ok;
    });
    for (int r = 0; r < 16; ++r) EXPECT_EQ(seen[r], 1) << "rank " << r;
  }
}

TEST(Rendezvous, TimesOutOnEveryArrivedRank) {
  const std::string coord = unique_coord("short");
  std::atomic<int> timeouts{0};
  std::vector<int> order(3);
  std::iota(order.begin(), order.end(), 0);
  run_ranks(order, [&](int r) {
    try {
      rendezvous(r, 4, coord, std::chrono::milliseconds(200));
    } catch (const Error& e) {
      if (e.code() == ErrorCode::kTimeout) ++timeouts;
    }
  });
  EXPECT_EQ(timeouts.load(), 3);
}

TEST(Rendezvous, InconsistentWorldSize) {
  const std::string coord = unique_coord("bad");
  std::atomic<int> errors{0};
  run_ranks({0, 1}, [&](int r) {
    try {
      rendezvous(r, r == 0 ? 2 : 3, coord, std::chrono::milliseconds(300));
    } catch (const Error&) {
      ++errors;
    }
  });
  EXPECT_EQ(errors.load(), 2);
}

TEST(Allgather, FourRanksAndIdempotence) {
  const std::string coord = unique_coord("ag");
  std::vector<std::vector<Bytes>> results(4);
  run_ranks({3, 1, 0, 2}, [&](int r) {
    BootstrapNet net = rendezvous(r, 4, coord);
    const Bytes local{static_cast<std::byte>(r)};
    auto first = bootstrap_allgather(net, local);
    auto second = bootstrap_allgather(net, local);
    if (first == second) results[r] = first;
  });
  for (int r = 0; r < 4; ++r) {
    ASSERT_EQ(results[r].size(), 4u);
    for (int i = 0; i < 4; ++i) EXPECT_EQ(results[r][i], Bytes{static_cast<std::byte>(i)});
  }
}

TEST(Allgather, LengthMismatchOnAllRanks) {
  const std::string coord = unique_coord("len");
  std::atomic<int> mismatches{0};
  run_ranks({0, 1, 2}, [&](int r) {
    BootstrapNet net = rendezvous(r, 3, coord);
    try {
      bootstrap_allgather(net, Bytes(r == 1 ? 2 : 1));
    } catch (const Error& e) {
      if (e.code() == ErrorCode::kLengthMismatch) ++mismatches;
    }
  });
  EXPECT_EQ(mismatches.load(), 3);
}

TEST(Directory, TestbedLayout) {
  const auto topo = reference_testbed_topology();
  const auto dir = directory_from_topology(topo);
  ASSERT_EQ(dir.world_size(), 16);
  for (int r = 0; r < 16; ++r) {
    EXPECT_EQ(dir.at(r).node_id, r < 8 ? 0 : 1);
    EXPECT_EQ(dir.at(r).vendor, r < 8 ? amd_vendor() : nvidia_vendor());
    EXPECT_EQ(dir.at(r).device_id, r % 8);
  }
}

TEST(Directory, EntryRoundTrip) {
  DirectoryEntry e{5, 2, 3, VendorId("blue"), 1};
  const Bytes b = encode_directory_entry(e);
  EXPECT_EQ(b.size(), kDirectoryRecordSize);
  EXPECT_EQ(decode_directory_entry(b), e);
  const auto dir = directory_from_topology(testing::three_vendor_topology());
  EXPECT_EQ(GlobalDirectory::deserialize(dir.serialize()), dir);
}

TEST(Directory, ConsensusAcrossRanks) {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 5; ++trial) {
    // Random topology: 1-3 nodes, 1-4 devices each, random vendors.
    std::uniform_int_distribution<int> nodes_d(1, 3);
    std::uniform_int_distribution<int> dev_d(1, 4);
    const char* vendors[] = {"nvidia", "amd"};
    std::string cfg = R"({"nodes": [)";
    const int nodes = nodes_d(rng);
    for (int n = 0; n < nodes; ++n) {
      cfg += (n ? "," : "") + std::string(R"({"id": )") + std::to_string(n) +
             R"(, "vendor": ")" + vendors[rng() % 2] + R"(", "devices": )" +
             std::to_string(dev_d(rng)) +
             R"(, "fabric_bw_gbps": 100, "host_bw_gbps": 10, "nic_count": 2, "nic_bw_gbps": 50})";
    }
    cfg += "]}";
    const auto topo = load_topology(cfg);
    const std::string coord = unique_coord("dir");
    std::vector<Bytes> serialized(static_cast<std::size_t>(topo.world_size()));
    std::vector<int> order(static_cast<std::size_t>(topo.world_size()));
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    run_ranks(order, [&](int r) {
      BootstrapNet net = rendezvous(r, topo.world_size(), coord);
      serialized[r] = build_directory(net, topo).serialize();
    });
    const Bytes offline = directory_from_topology(topo).serialize();
    for (const auto& s : serialized) EXPECT_EQ(s, offline);
  }
}

TEST(Directory, ClusterInitialization) {
  Cluster one(single_node_topology(nvidia_vendor(), 1));
  EXPECT_EQ(one.directory().world_size(), 1);
  Cluster testbed(reference_testbed_topology());
  EXPECT_EQ(testbed.directory(), directory_from_topology(testbed.topology()));
}

TEST(Coordinator, FromEnv) {
  ::unsetenv("HETCOMM_COORD");
  EXPECT_EQ(coordinator_from_env("inproc://x"), "inproc://x");
  ::setenv("HETCOMM_COORD", "inproc://y", 1);
  EXPECT_EQ(coordinator_from_env("inproc://x"), "inproc://y");
  ::unsetenv("HETCOMM_COORD");
}

}  // namespace
}  // namespace hetcomm
