// Copyright 2026 The hetcomm Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <functional>
#include <random>
#include <sstream>
#include <thread>

#include "hetcomm/error.h"
#include "hetcomm/transport.h"
#include "test_support.h"

namespace hetcomm {
namespace {

// Longest monotone path through the (chunk, stage) grid, found by
// enumerating every path. Exponential; only for small grids.
double longest_path_oracle(const std::vector<std::vector<double>>& t) {
  const int n = static_cast<int>(t.size());
  const int s = static_cast<int>(t.front().size());
  double best = 0.0;
  std::function<void(int, int, double)> walk = [&](int c, int k, double acc) {
    acc += t[c][k];
    if (c == n - 1 && k == s - 1) {
      best = std::max(best, acc);
      return;
    }
    if (c + 1 < n) walk(c + 1, k, acc);
    if (k + 1 < s) walk(c, k + 1, acc);
  };
  walk(0, 0, 0.0);
  return best;
}

TEST(WireTime, Examples) {
  const LinkSpec nic{LinkKind::kNicNetwork, 100.0, 5.0};
  const std::uint64_t gib = 1ull << 30;
  EXPECT_DOUBLE_EQ(wire_time(nic, gib), 5.0 + static_cast<double>(gib) / 1e5);
  EXPECT_NEAR(wire_time(nic, gib), 10742.418, 0.001);
  EXPECT_EQ(wire_time(nic, 0), 5.0);
  const LinkSpec nvlink{LinkKind::kIntraNodeFabric, 900.0, 1.0};
  EXPECT_NEAR(wire_time(nvlink, gib), 1194.05, 0.01);
}

TEST(WireTime, StrictlyIncreasing) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> bw(1.0, 1000.0);
  std::uniform_int_distribution<std::uint64_t> size(0, 1ull << 34);
  for (int i = 0; i < 1000; ++i) {
    const LinkSpec l{LinkKind::kNicNetwork, bw(rng), 3.0};
    const std::uint64_t a = size(rng);
    EXPECT_LT(wire_time(l, a), wire_time(l, a + 1000));
  }
}

TEST(PipelinedTime, Examples) {
  const std::vector<double> st{2, 5, 2};
  EXPECT_DOUBLE_EQ(pipelined_time(st, 10), 54.0);
  EXPECT_DOUBLE_EQ(pipelined_time(st, 1), 9.0);
  const std::vector<double> eq{3, 3, 3, 3};
  EXPECT_DOUBLE_EQ(pipelined_time(eq, 7), 3.0 * (4 + 7 - 1));
}

TEST(PipelinedTime, ClosedFormMatchesPathEnumeration) {
  std::mt19937_64 rng(8);
  std::uniform_int_distribution<int> stages(1, 4);
  std::uniform_int_distribution<int> chunks(1, 6);
  std::uniform_real_distribution<double> dur(0.0, 50.0);
  for (int trial = 0; trial < 300; ++trial) {
    const int s = stages(rng);
    const int n = chunks(rng);
    std::vector<double> st(static_cast<std::size_t>(s));
    for (double& x : st) x = dur(rng);
    const std::vector<std::vector<double>> grid(static_cast<std::size_t>(n), st);
    const double oracle = longest_path_oracle(grid);
    EXPECT_NEAR(pipelined_time(st, n), oracle, 1e-9 * (1.0 + oracle));
    EXPECT_NEAR(pipelined_time(grid), oracle, 1e-9 * (1.0 + oracle));
  }
}

TEST(PipelinedTime, PerChunkMatchesPathEnumeration) {
  std::mt19937_64 rng(10);
  std::uniform_real_distribution<double> dur(0.0, 50.0);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 1 + trial % 6;
    const int s = 1 + trial % 4;
    std::vector<std::vector<double>> grid(static_cast<std::size_t>(n), std::vector<double>(s));
    for (auto& row : grid) for (double& x : row) x = dur(rng);
    const double oracle = longest_path_oracle(grid);
    EXPECT_NEAR(pipelined_time(grid), oracle, 1e-9 * (1.0 + oracle));
  }
}

TEST(PipelinedTime, NonDecreasingInChunks) {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> dur(0.0, 10.0);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> st(3);
    for (double& x : st) x = dur(rng);
    double prev = 0.0;
    for (int n = 1; n < 50; ++n) {
      const double t = pipelined_time(st, n);
      EXPECT_GE(t, prev);
      prev = t;
    }
  }
}

TEST(Channels, IntegrityAndOrder) {
  Transport tr(2);
  std::mt19937_64 rng(13);
  std::uniform_int_distribution<std::size_t> size(0, 1 << 20);
  std::vector<Bytes> sent;
  std::thread producer([&] {
    std::mt19937_64 local(13);
    for (int i = 0; i < 1000; ++i) {
      Bytes b = testing::random_bytes(local, i == 0 ? 65536 : size(local) / 64);
      tr.channel_send(0, 1, b);
    }
  });
  for (int i = 0; i < 1000; ++i) {
    Bytes expect = testing::random_bytes(rng, i == 0 ? 65536 : size(rng) / 64);
    Message m = tr.receive(1, 0, tags::kUser);
    ASSERT_EQ(m.bytes, expect) << "message " << i;
  }
  producer.join();
  EXPECT_EQ(tr.trace().size(), 1000u);
}

TEST(Channels, LargePayloadsIntact) {
  Transport tr(2);
  std::mt19937_64 rng(14);
  for (std::size_t n : {std::size_t{0}, std::size_t{1}, std::size_t{1} << 20}) {
    const Bytes b = testing::random_bytes(rng, n);
    tr.channel_send(1, 0, b);
    EXPECT_EQ(tr.receive(0, 1, tags::kUser).bytes, b);
  }
}

TEST(Channels, CloseAndTimeout) {
  Transport tr(2);
  tr.channel_send(0, 1, Bytes(3));
  tr.close(0, 1);
  EXPECT_TRUE(tr.is_closed(0, 1));
  try {
    tr.channel_send(0, 1, Bytes(1));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kChannelClosed);
  }
  // Already-queued data still drains, then the closure surfaces.
  EXPECT_EQ(tr.receive(1, 0, tags::kUser).bytes.size(), 3u);
  EXPECT_THROW(tr.receive(1, 0, tags::kUser), Error);
  try {
    tr.receive(0, 1, tags::kUser, std::chrono::milliseconds(10));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kTimeout);
  }
}

TEST(Channels, TagsAreIndependent) {
  Transport tr(2);
  tr.post(0, 1, Message{7, Bytes(1), 0.0});
  tr.post(0, 1, Message{8, Bytes(2), 0.0});
  EXPECT_EQ(tr.receive(1, 0, 8).bytes.size(), 2u);
  EXPECT_EQ(tr.receive(1, 0, 7).bytes.size(), 1u);
}

TEST(SimClock, Monotone) {
  SimClock c;
  c.advance_to(5.0);
  c.advance_to(3.0);
  EXPECT_EQ(c.now(), 5.0);
  c.advance_by(2.0);
  EXPECT_EQ(c.now(), 7.0);
}

TEST(Trace, OrderedByStartThenSource) {
  TraceLog log;
  log.append({3, 0, RecordPath::kControl, 0, 2.0, 2.0, {}});
  log.append({1, 0, RecordPath::kControl, 0, 2.0, 3.0, {}});
  log.append({5, 0, RecordPath::kControl, 0, 1.0, 3.0, {}});
  log.append({1, 0, RecordPath::kControl, 0, 2.0, 4.0, {}});
  const auto s = log.snapshot();
  ASSERT_EQ(s.size(), 4u);
  EXPECT_EQ(s[0].src_rank, 5);
  EXPECT_EQ(s[1].src_rank, 1);
  EXPECT_EQ(s[1].t_end_us, 3.0);
  EXPECT_EQ(s[2].src_rank, 1);
  EXPECT_EQ(s[3].src_rank, 3);
}

TEST(Trace, CsvSchema) {
  TransferRecord r{0, 8, RecordPath::kDeviceDirect, 64, 1.5, 4.0,
                   {{SegmentKind::kD2dCopy, 0.5}, {SegmentKind::kNicNetwork, 2.0}}};
  TransferRecord bare{1, 2, RecordPath::kControl, 0, 0.0, 0.0, {}};
  const std::vector<TransferRecord> rs{r, bare};
  std::istringstream csv(trace_csv(rs));
  std::string line;
  std::getline(csv, line);
  EXPECT_EQ(line, "t_start_us,t_end_us,src,dst,path,size_bytes,segment_kind");
  int rows = 0;
  while (std::getline(csv, line)) {
    ++rows;
    EXPECT_EQ(std::count(line.begin(), line.end(), ','), 6);
  }
  EXPECT_EQ(rows, 3);
  EXPECT_EQ(r.count(SegmentKind::kD2dCopy), 1u);
  EXPECT_EQ(r.count(SegmentKind::kHostBridge), 0u);
}

}  // namespace
}  // namespace hetcomm
