// Copyright 2026 The hetcomm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "hetcomm/adaptors.h"
#include "hetcomm/groups.h"
#include "hetcomm/path.h"
#include "hetcomm/pipeline.h"
#include "hetcomm/topology.h"
#include "hetcomm/trainer.h"

namespace hetcomm::cli {

inline constexpr std::uint64_t kDefaultSeed = 42;

// HETCOMM_SEED when set, otherwise 42. A malformed value is a ValidationError.
std::uint64_t default_seed();

// Accepts plain byte counts and KiB/MiB/GiB suffixes ("64MiB").
std::uint64_t parse_size(std::string_view text);
std::vector<std::uint64_t> default_p2p_sizes();  // 1 MiB .. 1 GiB, powers of two

enum class ExperimentKind { kBenchP2p, kBenchCollective, kSimulatePipeline, kSweepPartition, kTrainToy };
std::string_view experiment_kind_name(ExperimentKind kind);

CollectiveOp parse_collective_op(std::string_view text);

struct ExperimentSpec {
  std::string name;
  ExperimentKind kind = ExperimentKind::kSimulatePipeline;
  std::optional<std::filesystem::path> topology;  // unset: built-in testbed
  std::optional<std::filesystem::path> profile;   // pipeline kinds only
  std::optional<GridShape> groups;  // unset: one PP stage per node
  std::vector<TransferPath> paths{TransferPath::kDeviceDirect};
  ChunkConfig chunk;
  std::optional<PartitionPlan> plan;  // unset: optimize
  int layers = 32;
  std::optional<int> microbatches;  // unset: profile file value, else 8
  int repetitions = 1;
  std::vector<std::uint64_t> sizes;
  CollectiveOp op = CollectiveOp::kAllReduceSum;
  std::vector<int> ranks;  // p2p: {src, dst}; collective: members
  int iterations = 200;
  std::optional<std::uint64_t> seed;  // unset: default_seed()
  TrainLayout layout = TrainLayout::kHeterogeneous;
  double learning_rate = 0.1;
  std::optional<std::filesystem::path> baseline;

  // Relative file references resolve against `base_dir`. Throws SpecError on
  // unknown keys, bad values, or files that do not exist.
  static ExperimentSpec parse(std::string_view json_text, const std::filesystem::path& base_dir);
  static ExperimentSpec load(const std::filesystem::path& file);
};

struct ExperimentResult {
  std::string metric;      // what `mean` averages
  std::string csv;         // one row per measurement, header included
  double mean = 0.0;
  std::string best;        // label of the best row
  std::optional<std::string> baseline_name;
  std::optional<double> baseline_mean;
  std::string summary;     // two-line CSV: header and values
};

ExperimentResult run_experiment(const ExperimentSpec& spec, const std::string& coordinator);

ClusterTopology spec_topology(const ExperimentSpec& spec);

// Everything a pipeline simulation needs. Stages map onto the first PP group
// of the spec's grid, so a cross-vendor TP/DP grid is rejected here.
struct PipelineSetup {
  ClusterTopology topology;
  std::vector<int> stage_ranks;
  StageProfile profile;
  CommModel comm;
  ThroughputConfig throughput;
};
PipelineSetup make_pipeline_setup(const ExperimentSpec& spec, TransferPath path);
PartitionPlan resolve_plan(const ExperimentSpec& spec, const PipelineSetup& setup);

}  // namespace hetcomm::cli
