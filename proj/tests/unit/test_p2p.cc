// Copyright 2026 The hetcomm Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <future>
#include <random>
#include <set>
#include <thread>

#include "hetcomm/cluster.h"
#include "hetcomm/error.h"
#include "hetcomm/p2p.h"
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

DeviceBuffer payload_on(int rank, const Bytes& bytes) {
  return DeviceBuffer::wrap(rank, MemorySpace::kDevice, bytes);
}

std::vector<std::string> g_warnings;
void capture_warning(std::string_view m) { g_warnings.emplace_back(m); }

ClusterTopology topology_with(double host_bw, int nic_count) {
  const std::string h = std::to_string(host_bw);
  const std::string n = std::to_string(nic_count);
  return load_topology(R"({"nodes": [
    {"id": 0, "vendor": "amd", "devices": 8, "fabric_bw_gbps": 128, "fabric_latency_us": 2,
     "host_bw_gbps": )" + h + R"(, "host_latency_us": 1, "nic_count": )" + n +
                       R"(, "nic_bw_gbps": 100, "nic_latency_us": 5},
    {"id": 1, "vendor": "nvidia", "devices": 8, "fabric_bw_gbps": 900, "fabric_latency_us": 1,
     "host_bw_gbps": )" + h + R"(, "host_latency_us": 1, "nic_count": )" + n +
                       R"(, "nic_bw_gbps": 100, "nic_latency_us": 5}]})");
}

TEST(ChunkFormat, HeaderIsBigEndian) {
  const Bytes payload{std::byte{0xAA}, std::byte{0xBB}};
  const Bytes frame = encode_chunk({TransferPath::kDeviceDirect, 1, 3, 2}, payload);
  ASSERT_EQ(frame.size(), kChunkHeaderSize + 2);
  const Bytes expect_head{std::byte{0x48}, std::byte{0x43}, std::byte{0x50}, std::byte{0x43},
                          std::byte{1},    std::byte{0},    std::byte{0},    std::byte{0},
                          std::byte{1},    std::byte{0},    std::byte{0},    std::byte{0},
                          std::byte{3},    std::byte{0},    std::byte{0},    std::byte{0},
                          std::byte{2}};
  EXPECT_TRUE(std::equal(expect_head.begin(), expect_head.end(), frame.begin()));
  const ChunkHeader h = decode_chunk_header(frame);
  EXPECT_EQ(h, (ChunkHeader{TransferPath::kDeviceDirect, 1, 3, 2}));
  EXPECT_EQ(chunk_payload(frame).size(), 2u);
  const Bytes cpu = encode_chunk({TransferPath::kCpuForwarding, 0, 1, 0}, {});
  EXPECT_EQ(cpu[4], std::byte{0});
}

TEST(ChunkFormat, RejectsBadFrames) {
  Bytes frame = encode_chunk({TransferPath::kDeviceDirect, 0, 1, 1}, Bytes{std::byte{1}});
  EXPECT_EQ(code_of([&] { decode_chunk_header(std::span(frame).first(5)); }), ErrorCode::kParseError);
  Bytes bad_magic = frame;
  bad_magic[0] = std::byte{0};
  EXPECT_EQ(code_of([&] { decode_chunk_header(bad_magic); }), ErrorCode::kParseError);
  Bytes bad_path = frame;
  bad_path[4] = std::byte{7};
  EXPECT_EQ(code_of([&] { decode_chunk_header(bad_path); }), ErrorCode::kParseError);
  Bytes short_payload = frame;
  short_payload.pop_back();
  EXPECT_EQ(code_of([&] { decode_chunk_header(short_payload); }), ErrorCode::kParseError);
}

TEST(ChunkConfig, Validation) {
  EXPECT_EQ(code_of([] { ChunkConfig{0, 2}.validate(); }), ErrorCode::kValidationError);
  EXPECT_EQ(code_of([] { ChunkConfig{1024, 0}.validate(); }), ErrorCode::kValidationError);
  EXPECT_EQ(chunk_count(0, {}), 1u);
  EXPECT_EQ(chunk_count(64ull << 20, {}), 16u);
  EXPECT_EQ(chunk_count((4ull << 20) + 1, {}), 2u);
}

TEST(TransferPathName, Parse) {
  EXPECT_EQ(parse_transfer_path("cpu"), TransferPath::kCpuForwarding);
  EXPECT_EQ(parse_transfer_path("device_direct"), TransferPath::kDeviceDirect);
  EXPECT_EQ(parse_transfer_path("direct"), TransferPath::kDeviceDirect);
  EXPECT_FALSE(parse_transfer_path("rdma").has_value());
}

class P2pTest : public ::testing::Test {
 protected:
  Cluster cluster{reference_testbed_topology()};
};

TEST_F(P2pTest, DirectDelivery64MiB) {
  std::mt19937_64 rng(1);
  const Bytes data = testing::random_bytes(rng, 64u << 20);
  P2pDelivery d = p2p_transfer(cluster, 0, 8, payload_on(0, data), TransferPath::kDeviceDirect, {});
  EXPECT_TRUE(std::equal(data.begin(), data.end(), d.buffer.bytes().begin()));
  EXPECT_EQ(d.buffer.owner_rank(), 8);
  EXPECT_EQ(d.record.path, RecordPath::kDeviceDirect);
  EXPECT_EQ(d.record.count(SegmentKind::kHostBridge), 0u);
  EXPECT_EQ(d.record.count(SegmentKind::kD2dCopy), 32u);
  EXPECT_EQ(d.record.count(SegmentKind::kNicNetwork), 16u);
}

TEST_F(P2pTest, CpuForwardingHasTwoHostSegmentsPerChunk) {
  std::mt19937_64 rng(2);
  const Bytes data = testing::random_bytes(rng, (10u << 20) + 17);
  P2pDelivery d = p2p_transfer(cluster, 8, 0, payload_on(8, data), TransferPath::kCpuForwarding, {});
  EXPECT_TRUE(std::equal(data.begin(), data.end(), d.buffer.bytes().begin()));
  EXPECT_EQ(d.record.path, RecordPath::kCpuForwarding);
  EXPECT_EQ(d.record.count(SegmentKind::kHostBridge), 2u * 3u);
  EXPECT_EQ(d.record.count(SegmentKind::kD2dCopy), 0u);
}

TEST_F(P2pTest, DirectBeatsCpuAt64MiB) {
  const auto& t = cluster.topology();
  const std::uint64_t n = 64ull << 20;
  const TransferCost direct = transfer_cost(t, 0, 8, n, TransferPath::kDeviceDirect, {});
  const TransferCost cpu = transfer_cost(t, 0, 8, n, TransferPath::kCpuForwarding, {});
  EXPECT_LT(direct.duration_us, cpu.duration_us);
  // Independent evaluation of the segment lists: 16 identical chunks.
  const double c = 4.0 * (1 << 20);
  const double d_out = c / 6000e3;
  const double wire = 5.0 + c / 100e3;
  const double d_in = c / 3000e3;
  EXPECT_NEAR(direct.duration_us, d_out + wire + d_in + 15 * std::max({d_out, wire, d_in}), 1e-6);
  const double h = 1.0 + c / 64e3;
  EXPECT_NEAR(cpu.duration_us, h + wire + h + 15 * std::max(h, wire), 1e-6);
}

TEST_F(P2pTest, ZeroBytes) {
  P2pDelivery d = p2p_transfer(cluster, 0, 8, payload_on(0, {}), TransferPath::kDeviceDirect, {});
  EXPECT_EQ(d.buffer.size(), 0u);
  EXPECT_DOUBLE_EQ(d.record.t_end_us - d.record.t_start_us, 5.0);
}

TEST_F(P2pTest, PathMismatchThenChannelStillUsable) {
  const Bytes data(1000, std::byte{3});
  auto sender = std::async(std::launch::async, [&] {
    return code_of([&] { p2p_send(cluster, 0, 8, payload_on(0, data), TransferPath::kDeviceDirect, {}); });
  });
  EXPECT_EQ(code_of([&] { p2p_recv(cluster, 8, 0, 1000, TransferPath::kCpuForwarding, {}); }),
            ErrorCode::kPathMismatch);
  EXPECT_EQ(sender.get(), ErrorCode::kPathMismatch);
  P2pDelivery d = p2p_transfer(cluster, 0, 8, payload_on(0, data), TransferPath::kDeviceDirect, {});
  EXPECT_TRUE(std::equal(data.begin(), data.end(), d.buffer.bytes().begin()));
}

TEST_F(P2pTest, SizeMismatch) {
  const ChunkConfig small{256, 2};
  const Bytes data(1000, std::byte{4});
  auto sender = std::async(std::launch::async, [&] {
    return code_of([&] { p2p_send(cluster, 1, 9, payload_on(1, data), TransferPath::kDeviceDirect, small); });
  });
  EXPECT_EQ(code_of([&] { p2p_recv(cluster, 9, 1, 999, TransferPath::kDeviceDirect, small); }),
            ErrorCode::kSizeMismatch);
  EXPECT_EQ(sender.get(), ErrorCode::kSizeMismatch);
  P2pDelivery d = p2p_transfer(cluster, 1, 9, payload_on(1, data), TransferPath::kDeviceDirect, small);
  EXPECT_EQ(d.buffer.size(), 1000u);
}

TEST_F(P2pTest, SmallChunksManyInFlight) {
  std::mt19937_64 rng(7);
  for (int in_flight : {1, 2, 5}) {
    const ChunkConfig cfg{1000, in_flight};
    const Bytes data = testing::random_bytes(rng, 12345);
    P2pDelivery d = p2p_transfer(cluster, 2, 10, payload_on(2, data), TransferPath::kDeviceDirect, cfg);
    EXPECT_TRUE(std::equal(data.begin(), data.end(), d.buffer.bytes().begin()));
    EXPECT_EQ(d.record.segments.size(), 3u * 13u);
  }
}

TEST_F(P2pTest, DispatchRoutes) {
  const Bytes data(64, std::byte{1});
  P2pDelivery same = p2p_dispatch(cluster, 0, 1, payload_on(0, data));
  EXPECT_EQ(same.record.path, RecordPath::kCcl);
  EXPECT_EQ(record_path_name(same.record.path), "ccl");
  P2pDelivery cross = p2p_dispatch(cluster, 0, 8, payload_on(0, data));
  EXPECT_EQ(cross.record.path, RecordPath::kDeviceDirect);
  cluster.set_path(TransferPath::kCpuForwarding);
  P2pDelivery cpu = p2p_dispatch(cluster, 8, 0, payload_on(8, data));
  EXPECT_EQ(cpu.record.path, RecordPath::kCpuForwarding);
  EXPECT_EQ(code_of([&] { p2p_dispatch(cluster, 0, 0, payload_on(0, data)); }), ErrorCode::kSelfSend);
  EXPECT_EQ(cluster.trace().size(), 3u);
}

TEST_F(P2pTest, SplitPhaseDispatch) {
  std::mt19937_64 rng(8);
  const Bytes data = testing::random_bytes(rng, 9000);
  for (int dst : {1, 8}) {
    SendHandle h = p2p_dispatch_isend(cluster, 0, dst, payload_on(0, data));
    P2pDelivery d = p2p_dispatch_recv(cluster, dst, 0, data.size());
    h.wait();
    EXPECT_TRUE(std::equal(data.begin(), data.end(), d.buffer.bytes().begin()));
    EXPECT_GE(cluster.clock(dst).now(), d.record.t_end_us);
  }
}

TEST(Nic, TestbedIsIdentity) {
  const auto t = reference_testbed_topology();
  for (int r = 0; r < 16; ++r) EXPECT_EQ(assign_nic(t, r), r % 8);
}

TEST(Nic, RoundRobinWithWarning) {
  g_warnings.clear();
  set_warning_sink(capture_warning);
  const auto t = topology_with(64, 4);
  for (int r = 0; r < 8; ++r) EXPECT_EQ(assign_nic(t, r), r % 4);
  EXPECT_FALSE(g_warnings.empty());
  set_warning_sink(nullptr);
  const auto one = load_topology(R"({"nodes": [{"id": 0, "vendor": "nvidia", "devices": 1,
      "fabric_bw_gbps": 900, "host_bw_gbps": 64, "nic_count": 1, "nic_bw_gbps": 100}]})");
  EXPECT_EQ(assign_nic(one, 0), 0);
}

// n concurrent transfers from distinct GPUs use n distinct NICs and overlap.
TEST(Nic, ParallelTransfersOverlap) {
  for (int nics : {8, 4}) {
    set_warning_sink([](std::string_view) {});
    Cluster cluster(topology_with(64, nics));
    set_warning_sink(nullptr);
    const Bytes data(8u << 20, std::byte{9});
    std::vector<TransferRecord> records(8);
    {
      std::vector<std::jthread> threads;
      for (int i = 0; i < 8; ++i) {
        threads.emplace_back([&, i] {
          records[i] = p2p_transfer(cluster, i, 8 + i, payload_on(i, data), TransferPath::kDeviceDirect, {}).record;
        });
      }
    }
    const double single = records[0].t_end_us - records[0].t_start_us;
    double makespan = 0.0;
    for (const auto& r : records) makespan = std::max(makespan, r.t_end_us);
    std::set<int> used;
    for (int i = 0; i < 8; ++i) used.insert(cluster.topology().device_of_rank(i).nic_id);
    EXPECT_EQ(used.size(), static_cast<std::size_t>(nics));
    if (nics == 8) {
      EXPECT_NEAR(makespan, single, 1e-9);
    } else {
      EXPECT_NEAR(makespan, 2 * single, 1e-6);
    }
    EXPECT_LT(makespan, 8 * single);
  }
}

TEST(Crossover, HostBandwidthOnlyHurtsCpuPath) {
  const std::uint64_t n = 256ull << 20;
  double prev_cpu = 0.0;
  double direct0 = -1.0;
  for (double host : {256.0, 64.0, 16.0, 4.0, 1.0}) {
    const auto t = topology_with(host, 8);
    const double cpu = transfer_cost(t, 0, 8, n, TransferPath::kCpuForwarding, {}).duration_us;
    const double direct = transfer_cost(t, 0, 8, n, TransferPath::kDeviceDirect, {}).duration_us;
    if (direct0 < 0) direct0 = direct;
    EXPECT_EQ(direct, direct0);
    EXPECT_GT(cpu, prev_cpu);
    prev_cpu = cpu;
  }
  EXPECT_GT(prev_cpu, 50 * direct0);
}

}  // namespace
}  // namespace hetcomm
