// Copyright 2026 The hetcomm Authors
// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include <cstdint>
#include <vector>

#include "hetcomm/cluster.h"
#include "hetcomm/collectives.h"
#include "hetcomm/groups.h"
#include "hetcomm/p2p.h"
#include "hetcomm/pipeline.h"
#include "hetcomm/topology.h"
#include "hetcomm/transport.h"

namespace hetcomm {
namespace {

void BM_TransferCost(benchmark::State& state) {
  const ClusterTopology tb = reference_testbed_topology();
  const auto path = static_cast<TransferPath>(state.range(0));
  const std::uint64_t size = std::uint64_t{1} << 30;
  for (auto _ : state) benchmark::DoNotOptimize(transfer_cost(tb, 0, 8, size, path, {}).duration_us);
}
BENCHMARK(BM_TransferCost)
    ->Arg(static_cast<int>(TransferPath::kCpuForwarding))
    ->Arg(static_cast<int>(TransferPath::kDeviceDirect));

// Real byte movement through the simulated transport.
void BM_P2pTransfer(benchmark::State& state) {
  Cluster cluster(reference_testbed_topology());
  const Bytes data(static_cast<std::size_t>(state.range(0)), std::byte{7});
  for (auto _ : state) {
    auto d = p2p_transfer(cluster, 0, 8, DeviceBuffer::wrap(0, MemorySpace::kDevice, data), TransferPath::kDeviceDirect, {});
    benchmark::DoNotOptimize(d.buffer.size());
    cluster.nics().reset();
  }
  state.SetBytesProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_P2pTransfer)->Range(1 << 10, 16 << 20);

void BM_HeteroAllreduceCost(benchmark::State& state) {
  const ClusterTopology tb = reference_testbed_topology();
  std::vector<int> all(static_cast<std::size_t>(tb.world_size()));
  for (int r = 0; r < tb.world_size(); ++r) all[static_cast<std::size_t>(r)] = r;
  const HeteroGroup group(tb, all);
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        hetero_collective_cost(tb, group, CollectiveOp::kAllReduceSum, 256u << 20, TransferPath::kDeviceDirect, {}));
  }
}
BENCHMARK(BM_HeteroAllreduceCost);

void BM_SimulateIteration(benchmark::State& state) {
  const ClusterTopology tb = reference_testbed_topology();
  StageProfile p = profile_from_topology(tb, {0, 8});
  p.microbatches = static_cast<int>(state.range(0));
  const CommModel comm = topology_comm(tb, {0, 8}, TransferPath::kDeviceDirect);
  const PartitionPlan plan = PartitionPlan::parse("15,17");
  for (auto _ : state) benchmark::DoNotOptimize(simulate_iteration(plan, p, comm).iteration_ms);
}
BENCHMARK(BM_SimulateIteration)->Arg(8)->Arg(64);

void BM_OptimizePartition(benchmark::State& state) {
  const ClusterTopology tb = reference_testbed_topology();
  const StageProfile p = profile_from_topology(tb, {0, 8});
  const CommModel comm = topology_comm(tb, {0, 8}, TransferPath::kDeviceDirect);
  const int layers = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(optimize_partition(layers, p, comm).layers_per_stage);
}
BENCHMARK(BM_OptimizePartition)->Arg(32)->Arg(128);

}  // namespace
}  // namespace hetcomm

BENCHMARK_MAIN();
