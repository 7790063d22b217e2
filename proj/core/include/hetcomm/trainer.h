// Copyright 2026 The hetcomm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "hetcomm/cluster.h"
#include "hetcomm/path.h"
#include "hetcomm/pipeline.h"
#include "hetcomm/topology.h"

namespace hetcomm {

// Dense layers of the given widths; tanh on every layer but the last.
struct ToyModelSpec {
  std::vector<int> widths{8, 32, 32, 32, 4};

  int layers() const noexcept { return static_cast<int>(widths.size()) - 1; }
};

struct DenseLayer {
  int in = 0;
  int out = 0;
  std::vector<double> w;  // out x in, row-major
  std::vector<double> b;  // out
};

struct ToyModel {
  std::vector<DenseLayer> layers;

  // Deterministic in (spec, seed) only.
  static ToyModel init(const ToyModelSpec& spec, std::uint64_t seed);
  std::size_t parameter_count() const;
  // All weights then biases of layer 0, then layer 1, and so on.
  std::vector<double> flatten() const;
  void unflatten(const std::vector<double>& params);
};

// Fixed random linear map regression: y = A x with x uniform in [-1, 1].
struct ToyDataset {
  int in = 0;
  int out = 0;
  std::vector<std::vector<double>> x;
  std::vector<std::vector<double>> y;

  static constexpr int kSamples = 256;
  static constexpr int kBatch = 32;

  static ToyDataset make(const ToyModelSpec& spec, std::uint64_t seed);
  int batches() const noexcept { return static_cast<int>(x.size()) / kBatch; }
  // Samples [b * kBatch, (b + 1) * kBatch) of batch b = iteration % batches().
  int batch_start(int iteration) const noexcept { return (iteration % batches()) * kBatch; }
};

enum class TrainLayout {
  kHomogeneous,    // one node of the fast vendor
  kHeterogeneous,  // one node per stage, vendors alternating slow/fast
};

struct TrainConfig {
  int pp = 2;
  int dp = 1;
  TransferPath path = TransferPath::kDeviceDirect;
  TrainLayout layout = TrainLayout::kHeterogeneous;
  std::optional<PartitionPlan> plan;  // default: as even as possible
  int iterations = 200;
  std::uint64_t seed = 42;
  double learning_rate = 0.1;
  int microbatches = 8;  // per replica; capped at the local batch size
  ToyModelSpec model;
  // Keep the DP-reduced gradients of the first iteration in TrainRun.
  bool capture_gradients = false;
};

struct TrainRun {
  TrainConfig config;
  std::vector<double> loss_series;
  std::vector<double> first_gradients;  // flattened like ToyModel::flatten
};

// Topology for a pp x dp run: rank = dp_idx + dp * pp_idx.
ClusterTopology toy_topology(int pp, int dp, TrainLayout layout);

// Runs one execution context per rank. Activations and gradients cross
// stages through p2p_dispatch; DP gradients are summed with
// hetero_allreduce and divided by dp. Throws Diverged on a non-finite loss.
TrainRun train(const TrainConfig& config, Cluster& cluster);
// Builds the cluster from toy_topology.
TrainRun train(const TrainConfig& config);

// Single-process full-batch SGD with the same arithmetic order.
TrainRun train_reference(const TrainConfig& config);

// Mean squared error of `model` on batch `iteration % batches`.
double batch_loss(const ToyModel& model, const ToyDataset& data, int iteration);

// CSV "iter,loss" with 1-based iterations and round-trip precision.
std::string export_run(const TrainRun& run);
// Throws IoError.
void export_run_file(const TrainRun& run, const std::string& path);

}  // namespace hetcomm
