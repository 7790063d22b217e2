// Copyright 2026 The hetcomm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "hetcomm/path.h"
#include "hetcomm/topology.h"
#include "hetcomm/transport.h"

namespace hetcomm {

// Layers assigned to each pipeline stage, first stage first.
struct PartitionPlan {
  std::vector<int> layers_per_stage;

  int stages() const noexcept { return static_cast<int>(layers_per_stage.size()); }
  int total_layers() const;
  // Throws InvalidPlan unless there are `pp` stages of >= 1 layer each.
  void validate(int pp) const;

  // "15,17" <-> {15, 17}. Throws InvalidPlan on malformed text.
  static PartitionPlan parse(std::string_view text);
  std::string to_string() const;

  friend bool operator==(const PartitionPlan&, const PartitionPlan&) = default;
};

struct StageSpec {
  VendorId vendor;
  double layer_time_fwd_ms = 1.0;
  double layer_time_bwd_ms = 2.0;
  // Per-microbatch overhead not proportional to layers (embeddings, heads).
  double fixed_fwd_ms = 0.0;
  double fixed_bwd_ms = 0.0;
};

// Defaults model hidden size 4096, sequence 4096, microbatch 1, 2-byte
// elements: one activation is 4096 * 4096 * 2 bytes; a transformer layer
// holds about 12 * 4096^2 parameters.
inline constexpr std::uint64_t kDefaultActivationBytes = 4096ull * 4096ull * 2ull;
inline constexpr std::uint64_t kDefaultGradientBytesPerLayer = 12ull * 4096ull * 4096ull * 2ull;
inline constexpr int kDefaultMicrobatches = 8;

struct StageProfile {
  std::vector<StageSpec> stages;
  std::uint64_t activation_bytes = kDefaultActivationBytes;
  std::uint64_t gradient_bytes_per_layer = kDefaultGradientBytesPerLayer;
  int microbatches = kDefaultMicrobatches;
  std::string label;  // free text, e.g. provenance of the timings

  int pp() const noexcept { return static_cast<int>(stages.size()); }
  // Throws InvalidPlan on non-positive times or microbatches.
  void validate() const;
};

// JSON document:
//   {"label": "...", "microbatches": 8, "activation_bytes": N,
//    "gradient_bytes_per_layer": N,
//    "stages": [{"vendor": "amd", "layer_time_fwd_ms": 1.13,
//                "layer_time_bwd_ms": 2.27, "fixed_fwd_ms": 0,
//                "fixed_bwd_ms": 0}, ...]}
// Throws ParseError, ValidationError; the file variant also IoError.
StageProfile load_stage_profile(std::string_view json_text);
StageProfile load_stage_profile_file(const std::string& path);
std::string serialize_stage_profile(const StageProfile& profile);

// Stage s takes its vendor and layer times from the device of stage_ranks[s].
StageProfile profile_from_topology(const ClusterTopology& topology,
                                   const std::vector<int>& stage_ranks,
                                   int microbatches = kDefaultMicrobatches);

// Inter-stage transfer timing. time_ms(src_stage, dst_stage, bytes).
struct CommModel {
  std::function<double(int, int, std::uint64_t)> time_ms;
  RecordPath path = RecordPath::kControl;
};

CommModel zero_comm();
CommModel constant_comm(double ms);
// Stage s lives on stage_ranks[s]; same-vendor hops use the vendor CCL cost,
// cross-vendor hops the chunked transfer over `path`.
CommModel topology_comm(const ClusterTopology& topology, std::vector<int> stage_ranks,
                        TransferPath path, const ChunkConfig& cfg = {});

enum class Schedule { k1F1B };
enum class Phase { kFwd, kBwd, kSend, kRecv };
std::string_view phase_name(Phase phase);

struct ScheduleEvent {
  int stage = 0;
  int microbatch = 0;
  Phase phase = Phase::kFwd;
  int peer = -1;  // other stage for send/recv
  double t_start_ms = 0.0;
  double t_end_ms = 0.0;
  std::uint64_t bytes = 0;
};

struct ScheduleTrace {
  std::vector<ScheduleEvent> events;  // ordered by (t_start, stage, emission)
};

struct IterationResult {
  double iteration_ms = 0.0;
  ScheduleTrace trace;
};

// Per-stage operation order for 1F1B: min(pp - stage, m) forwards, then
// alternating backward/forward, then the remaining backwards.
struct StageOp {
  Phase phase;
  int microbatch;
};
std::vector<StageOp> one_f_one_b_order(int pp, int stage, int microbatches);

// Expected number of events in one iteration: 2*pp*m compute events plus a
// send and a recv for every activation and gradient crossing a boundary.
std::size_t expected_event_count(int pp, int microbatches);

// Throws InvalidPlan.
IterationResult simulate_iteration(const PartitionPlan& plan, const StageProfile& profile,
                                   const CommModel& comm, Schedule schedule = Schedule::k1F1B);

// Stage compute durations for one microbatch.
double stage_fwd_ms(const PartitionPlan& plan, const StageProfile& profile, int stage);
double stage_bwd_ms(const PartitionPlan& plan, const StageProfile& profile, int stage);

// Trace rows in the transport CSV schema: microseconds, src/dst are stage
// indices, compute events use path "compute".
std::vector<TransferRecord> trace_records(const ScheduleTrace& trace, RecordPath comm_path);

struct PartitionCandidate {
  PartitionPlan plan;
  double iteration_ms = 0.0;
};

// Every composition of total_layers into profile.pp() positive parts, in
// lexicographic order, with its simulated time. Throws Infeasible.
std::vector<PartitionCandidate> sweep_partitions(int total_layers, const StageProfile& profile,
                                                 const CommModel& comm);

// Minimizes simulated iteration time. Exhaustive when the number of
// compositions is small (always for pp = 2), otherwise a deterministic
// best-improvement local search from the even split. Ties go to the most
// even split. Throws Infeasible when total_layers < pp.
PartitionPlan optimize_partition(int total_layers, const StageProfile& profile,
                                 const CommModel& comm);

// Sum of squared deviations from the even split; smaller is more even.
double imbalance(const PartitionPlan& plan);

struct ThroughputConfig {
  int dp = 1;
  int tp = 1;
  int microbatch_size = 1;  // samples per microbatch
  // Gradient allreduce time for one stage's DP group; null means free.
  std::function<double(int stage, std::uint64_t bytes)> allreduce_ms;
};

struct ThroughputResult {
  double iteration_ms = 0.0;  // pipeline only
  double allreduce_ms = 0.0;  // slowest stage's gradient allreduce
  double samples_per_s = 0.0;
  double samples_per_s_per_gpu = 0.0;
};

// Global batch dp * microbatches * microbatch_size over the pipeline
// iteration plus the gradient allreduce.
ThroughputResult throughput(const PartitionPlan& plan, const StageProfile& profile,
                            const CommModel& comm, const ThroughputConfig& cfg);

}  // namespace hetcomm
