// Copyright 2026 The hetcomm Authors
// SPDX-License-Identifier: Apache-2.0

#include "hetcomm/pipeline.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <optional>
#include <sstream>
#include <tuple>

#include "hetcomm/error.h"
#include "hetcomm/p2p.h"
#include "json.hpp"

namespace hetcomm {

using nlohmann::json;

int PartitionPlan::total_layers() const {
  return std::accumulate(layers_per_stage.begin(), layers_per_stage.end(), 0);
}

void PartitionPlan::validate(int pp) const {
  if (stages() != pp) {
    raise(ErrorCode::kInvalidPlan, "plan " + to_string() + " has " + std::to_string(stages()) +
                                       " stages, profile has " + std::to_string(pp));
  }
  for (int layers : layers_per_stage) {
    if (layers < 1) raise(ErrorCode::kInvalidPlan, "plan " + to_string() + " has an empty stage");
  }
}

PartitionPlan PartitionPlan::parse(std::string_view text) {
  PartitionPlan plan;
  while (!text.empty()) {
    const auto comma = text.find(',');
    const std::string_view part = text.substr(0, comma);
    int value = 0;
    const auto [ptr, ec] = std::from_chars(part.data(), part.data() + part.size(), value);
    if (ec != std::errc() || ptr != part.data() + part.size()) {
      raise(ErrorCode::kInvalidPlan, "malformed plan '" + std::string(text) + "'");
    }
    plan.layers_per_stage.push_back(value);
    if (comma == std::string_view::npos) break;
    text.remove_prefix(comma + 1);
    if (text.empty()) raise(ErrorCode::kInvalidPlan, "plan ends with a comma");
  }
  if (plan.layers_per_stage.empty()) raise(ErrorCode::kInvalidPlan, "empty plan");
  return plan;
}

std::string PartitionPlan::to_string() const {
  std::string out;
  for (int layers : layers_per_stage) {
    if (!out.empty()) out += ',';
    out += std::to_string(layers);
  }
  return out;
}

void StageProfile::validate() const {
  if (stages.empty()) raise(ErrorCode::kInvalidPlan, "profile has no stages");
  if (microbatches < 1) raise(ErrorCode::kInvalidPlan, "microbatches must be >= 1");
  for (const auto& s : stages) {
    if (!(s.layer_time_fwd_ms > 0.0) || !(s.layer_time_bwd_ms > 0.0) ||
        !std::isfinite(s.layer_time_fwd_ms) || !std::isfinite(s.layer_time_bwd_ms)) {
      raise(ErrorCode::kInvalidPlan, "layer times must be positive and finite");
    }
    if (s.fixed_fwd_ms < 0.0 || s.fixed_bwd_ms < 0.0) {
      raise(ErrorCode::kInvalidPlan, "fixed stage overheads must be >= 0");
    }
  }
}

// ---------------------------------------------------------------------------
// Profile I/O

namespace {

double number_or(const json& obj, const char* key, double fallback) {
  if (!obj.contains(key)) return fallback;
  if (!obj[key].is_number()) raise(ErrorCode::kParseError, std::string(key) + " must be a number");
  return obj[key].get<double>();
}

}  // namespace

StageProfile load_stage_profile(std::string_view json_text) {
  json doc;
  try {
    doc = json::parse(json_text.begin(), json_text.end());
  } catch (const json::parse_error& e) {
    raise(ErrorCode::kParseError, std::string("profile: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("stages") || !doc["stages"].is_array()) {
    raise(ErrorCode::kParseError, "profile needs a 'stages' array");
  }
  StageProfile p;
  p.label = doc.value("label", std::string());
  p.microbatches = static_cast<int>(number_or(doc, "microbatches", kDefaultMicrobatches));
  p.activation_bytes =
      static_cast<std::uint64_t>(number_or(doc, "activation_bytes", static_cast<double>(kDefaultActivationBytes)));
  p.gradient_bytes_per_layer = static_cast<std::uint64_t>(
      number_or(doc, "gradient_bytes_per_layer", static_cast<double>(kDefaultGradientBytesPerLayer)));
  for (const auto& s : doc["stages"]) {
    if (!s.is_object() || !s.contains("vendor") || !s["vendor"].is_string()) {
      raise(ErrorCode::kParseError, "every stage needs a 'vendor' string");
    }
    StageSpec spec;
    spec.vendor = VendorId(s["vendor"].get<std::string>());
    const auto defaults = builtin_vendor_defaults(spec.vendor);
    if (!defaults && (!s.contains("layer_time_fwd_ms") || !s.contains("layer_time_bwd_ms"))) {
      raise(ErrorCode::kValidationError,
            "stage vendor '" + spec.vendor.name() + "' has no built-in layer times");
    }
    spec.layer_time_fwd_ms = number_or(s, "layer_time_fwd_ms", defaults ? defaults->layer_time_fwd_ms : 0);
    spec.layer_time_bwd_ms = number_or(s, "layer_time_bwd_ms", defaults ? defaults->layer_time_bwd_ms : 0);
    spec.fixed_fwd_ms = number_or(s, "fixed_fwd_ms", 0.0);
    spec.fixed_bwd_ms = number_or(s, "fixed_bwd_ms", 0.0);
    p.stages.push_back(std::move(spec));
  }
  try {
    p.validate();
  } catch (const Error& e) {
    raise(ErrorCode::kValidationError, e.what());
  }
  return p;
}

StageProfile load_stage_profile_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) raise(ErrorCode::kIoError, "cannot open profile " + path);
  std::ostringstream text;
  text << in.rdbuf();
  return load_stage_profile(text.str());
}

std::string serialize_stage_profile(const StageProfile& profile) {
  json stages = json::array();
  for (const auto& s : profile.stages) {
    stages.push_back({{"vendor", s.vendor.name()},
                      {"layer_time_fwd_ms", s.layer_time_fwd_ms},
                      {"layer_time_bwd_ms", s.layer_time_bwd_ms},
                      {"fixed_fwd_ms", s.fixed_fwd_ms},
                      {"fixed_bwd_ms", s.fixed_bwd_ms}});
  }
  json doc = {{"label", profile.label},
              {"microbatches", profile.microbatches},
              {"activation_bytes", profile.activation_bytes},
              {"gradient_bytes_per_layer", profile.gradient_bytes_per_layer},
              {"stages", stages}};
  return doc.dump(2) + "\n";
}

StageProfile profile_from_topology(const ClusterTopology& topology,
                                   const std::vector<int>& stage_ranks, int microbatches) {
  StageProfile p;
  p.microbatches = microbatches;
  for (int r : stage_ranks) {
    const auto& d = topology.device_of_rank(r);
    p.stages.push_back(StageSpec{d.vendor, d.layer_time_fwd_ms, d.layer_time_bwd_ms, 0.0, 0.0});
  }
  return p;
}

// ---------------------------------------------------------------------------
// Communication models

CommModel zero_comm() {
  return CommModel{[](int, int, std::uint64_t) { return 0.0; }, RecordPath::kControl};
}

CommModel constant_comm(double ms) {
  return CommModel{[ms](int, int, std::uint64_t) { return ms; }, RecordPath::kControl};
}

CommModel topology_comm(const ClusterTopology& topology, std::vector<int> stage_ranks,
                        TransferPath path, const ChunkConfig& cfg) {
  for (std::size_t i = 0; i < stage_ranks.size(); ++i) (void)topology.device_of_rank(stage_ranks[i]);
  bool any_cross = false;
  for (std::size_t i = 1; i < stage_ranks.size(); ++i) {
    any_cross = any_cross || topology.vendor_of_rank(stage_ranks[i]) !=
                                 topology.vendor_of_rank(stage_ranks[i - 1]);
  }
  CommModel m;
  m.path = any_cross ? record_path_for(path) : RecordPath::kCcl;
  m.time_ms = [topology, ranks = std::move(stage_ranks), path, cfg](int a, int b, std::uint64_t bytes) {
    const int src = ranks.at(static_cast<std::size_t>(a));
    const int dst = ranks.at(static_cast<std::size_t>(b));
    return dispatch_cost(topology, src, dst, bytes, path, cfg) / 1000.0;
  };
  return m;
}

// ---------------------------------------------------------------------------
// Simulation

std::string_view phase_name(Phase phase) {
  switch (phase) {
    case Phase::kFwd: return "fwd";
    case Phase::kBwd: return "bwd";
    case Phase::kSend: return "send";
    case Phase::kRecv: return "recv";
  }
  return "unknown";
}

std::vector<StageOp> one_f_one_b_order(int pp, int stage, int microbatches) {
  const int warmup = std::min(pp - stage, microbatches);
  std::vector<StageOp> ops;
  ops.reserve(static_cast<std::size_t>(2 * microbatches));
  for (int i = 0; i < warmup; ++i) ops.push_back({Phase::kFwd, i});
  for (int i = 0; i < microbatches - warmup; ++i) {
    ops.push_back({Phase::kBwd, i});
    ops.push_back({Phase::kFwd, warmup + i});
  }
  for (int i = microbatches - warmup; i < microbatches; ++i) ops.push_back({Phase::kBwd, i});
  return ops;
}

std::size_t expected_event_count(int pp, int microbatches) {
  const auto p = static_cast<std::size_t>(pp);
  const auto m = static_cast<std::size_t>(microbatches);
  return 2 * p * m + 4 * (p - 1) * m;
}

double stage_fwd_ms(const PartitionPlan& plan, const StageProfile& profile, int stage) {
  const auto& s = profile.stages.at(static_cast<std::size_t>(stage));
  return plan.layers_per_stage.at(static_cast<std::size_t>(stage)) * s.layer_time_fwd_ms + s.fixed_fwd_ms;
}

double stage_bwd_ms(const PartitionPlan& plan, const StageProfile& profile, int stage) {
  const auto& s = profile.stages.at(static_cast<std::size_t>(stage));
  return plan.layers_per_stage.at(static_cast<std::size_t>(stage)) * s.layer_time_bwd_ms + s.fixed_bwd_ms;
}

IterationResult simulate_iteration(const PartitionPlan& plan, const StageProfile& profile,
                                   const CommModel& comm, Schedule schedule) {
  (void)schedule;  // 1F1B is the only schedule
  profile.validate();
  plan.validate(profile.pp());
  const int pp = profile.pp();
  const int m = profile.microbatches;
  const auto P = static_cast<std::size_t>(pp);
  const auto M = static_cast<std::size_t>(m);
  const std::uint64_t bytes = profile.activation_bytes;

  struct Window {
    double start;
    double end;
  };
  // Activation sent by stage s for microbatch i (to s+1); gradient sent by
  // stage s for microbatch i (to s-1).
  std::vector<std::vector<std::optional<Window>>> act(P, std::vector<std::optional<Window>>(M));
  std::vector<std::vector<std::optional<Window>>> grad(P, std::vector<std::optional<Window>>(M));
  std::vector<std::vector<StageOp>> order(P);
  for (int s = 0; s < pp; ++s) order[static_cast<std::size_t>(s)] = one_f_one_b_order(pp, s, m);
  std::vector<std::size_t> next(P, 0);
  std::vector<double> free_at(P, 0.0);

  std::vector<ScheduleEvent> events;
  events.reserve(expected_event_count(pp, m));

  std::size_t remaining = P * 2 * M;
  while (remaining > 0) {
    bool progressed = false;
    for (int s = 0; s < pp; ++s) {
      const auto si = static_cast<std::size_t>(s);
      while (next[si] < order[si].size()) {
        const StageOp op = order[si][next[si]];
        const auto mb = static_cast<std::size_t>(op.microbatch);
        const bool fwd = op.phase == Phase::kFwd;
        const std::optional<Window>* incoming = nullptr;
        int peer = -1;
        if (fwd && s > 0) {
          incoming = &act[si - 1][mb];
          peer = s - 1;
        } else if (!fwd && s + 1 < pp) {
          incoming = &grad[si + 1][mb];
          peer = s + 1;
        }
        if (incoming && !incoming->has_value()) break;

        double t = free_at[si];
        if (incoming) {
          const Window w = **incoming;
          const double rs = std::max(t, w.start);
          const double re = std::max(w.end, rs);
          events.push_back({s, op.microbatch, Phase::kRecv, peer, rs, re, bytes});
          t = re;
        }
        const double d = fwd ? stage_fwd_ms(plan, profile, s) : stage_bwd_ms(plan, profile, s);
        events.push_back({s, op.microbatch, op.phase, -1, t, t + d, 0});
        t += d;
        const int to = fwd ? s + 1 : s - 1;
        if (to >= 0 && to < pp) {
          const double c = comm.time_ms(s, to, bytes);
          events.push_back({s, op.microbatch, Phase::kSend, to, t, t + c, bytes});
          (fwd ? act : grad)[si][mb] = Window{t, t + c};
          t += c;
        }
        free_at[si] = t;
        ++next[si];
        --remaining;
        progressed = true;
      }
    }
    if (!progressed) raise(ErrorCode::kInvalidPlan, "pipeline schedule deadlocked");
  }

  IterationResult result;
  for (const auto& e : events) result.iteration_ms = std::max(result.iteration_ms, e.t_end_ms);
  std::stable_sort(events.begin(), events.end(), [](const ScheduleEvent& a, const ScheduleEvent& b) {
    return std::tie(a.t_start_ms, a.stage) < std::tie(b.t_start_ms, b.stage);
  });
  result.trace.events = std::move(events);
  return result;
}

std::vector<TransferRecord> trace_records(const ScheduleTrace& trace, RecordPath comm_path) {
  std::vector<TransferRecord> out;
  out.reserve(trace.events.size());
  std::uint64_t seq = 0;
  for (const auto& e : trace.events) {
    TransferRecord r;
    const bool compute = e.phase == Phase::kFwd || e.phase == Phase::kBwd;
    r.src_rank = e.phase == Phase::kRecv ? e.peer : e.stage;
    r.dst_rank = e.phase == Phase::kSend ? e.peer : e.stage;
    r.path = compute ? RecordPath::kCompute : comm_path;
    r.size_bytes = e.bytes;
    r.t_start_us = e.t_start_ms * 1000.0;
    r.t_end_us = e.t_end_ms * 1000.0;
    SegmentKind kind = SegmentKind::kFwd;
    switch (e.phase) {
      case Phase::kFwd: kind = SegmentKind::kFwd; break;
      case Phase::kBwd: kind = SegmentKind::kBwd; break;
      case Phase::kSend: kind = SegmentKind::kSend; break;
      case Phase::kRecv: kind = SegmentKind::kRecv; break;
    }
    r.segments.push_back({kind, r.t_end_us - r.t_start_us});
    r.seq = seq++;
    out.push_back(std::move(r));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Partition search

double imbalance(const PartitionPlan& plan) {
  const double mean = static_cast<double>(plan.total_layers()) / plan.stages();
  double sum = 0.0;
  for (int l : plan.layers_per_stage) sum += (l - mean) * (l - mean);
  return sum;
}

namespace {

void check_feasible(int total_layers, int pp) {
  if (pp < 1) raise(ErrorCode::kInvalidPlan, "profile has no stages");
  if (total_layers < pp) {
    raise(ErrorCode::kInfeasible, std::to_string(total_layers) + " layers cannot fill " +
                                      std::to_string(pp) + " stages");
  }
}

// Strict weak order: faster first, then more even, then lexicographic.
bool better(const PartitionCandidate& a, const PartitionCandidate& b) {
  if (a.iteration_ms != b.iteration_ms) return a.iteration_ms < b.iteration_ms;
  const double ia = imbalance(a.plan);
  const double ib = imbalance(b.plan);
  if (ia != ib) return ia < ib;
  return a.plan.layers_per_stage < b.plan.layers_per_stage;
}

void for_each_composition(int total, int parts, std::vector<int>& prefix,
                          const std::function<void(const std::vector<int>&)>& fn) {
  if (parts == 1) {
    prefix.push_back(total);
    fn(prefix);
    prefix.pop_back();
    return;
  }
  for (int first = 1; first <= total - (parts - 1); ++first) {
    prefix.push_back(first);
    for_each_composition(total - first, parts - 1, prefix, fn);
    prefix.pop_back();
  }
}

// C(n, k) saturating at `cap`.
double compositions(int total, int parts) {
  double c = 1.0;
  const int n = total - 1;
  const int k = parts - 1;
  for (int i = 1; i <= k; ++i) c = c * (n - k + i) / i;
  return c;
}

constexpr double kExhaustiveLimit = 20000.0;

PartitionCandidate evaluate(std::vector<int> layers, const StageProfile& profile,
                            const CommModel& comm) {
  PartitionCandidate c{PartitionPlan{std::move(layers)}, 0.0};
  c.iteration_ms = simulate_iteration(c.plan, profile, comm).iteration_ms;
  return c;
}

}  // namespace

std::vector<PartitionCandidate> sweep_partitions(int total_layers, const StageProfile& profile,
                                                 const CommModel& comm) {
  check_feasible(total_layers, profile.pp());
  std::vector<PartitionCandidate> out;
  std::vector<int> prefix;
  for_each_composition(total_layers, profile.pp(), prefix, [&](const std::vector<int>& layers) {
    out.push_back(evaluate(layers, profile, comm));
  });
  return out;
}

PartitionPlan optimize_partition(int total_layers, const StageProfile& profile,
                                 const CommModel& comm) {
  const int pp = profile.pp();
  check_feasible(total_layers, pp);

  if (compositions(total_layers, pp) <= kExhaustiveLimit) {
    std::optional<PartitionCandidate> best;
    std::vector<int> prefix;
    for_each_composition(total_layers, pp, prefix, [&](const std::vector<int>& layers) {
      PartitionCandidate c = evaluate(layers, profile, comm);
      if (!best || better(c, *best)) best = std::move(c);
    });
    return best->plan;
  }

  // Local search: move one layer between any two stages while it helps.
  std::vector<int> even(static_cast<std::size_t>(pp), total_layers / pp);
  for (int i = 0; i < total_layers % pp; ++i) ++even[static_cast<std::size_t>(pp - 1 - i)];
  PartitionCandidate best = evaluate(even, profile, comm);
  for (bool improved = true; improved;) {
    improved = false;
    PartitionCandidate round = best;
    for (int from = 0; from < pp; ++from) {
      for (int to = 0; to < pp; ++to) {
        if (from == to || best.plan.layers_per_stage[static_cast<std::size_t>(from)] <= 1) continue;
        std::vector<int> layers = best.plan.layers_per_stage;
        --layers[static_cast<std::size_t>(from)];
        ++layers[static_cast<std::size_t>(to)];
        PartitionCandidate c = evaluate(std::move(layers), profile, comm);
        if (better(c, round)) round = std::move(c);
      }
    }
    if (better(round, best)) {
      best = std::move(round);
      improved = true;
    }
  }
  return best.plan;
}

ThroughputResult throughput(const PartitionPlan& plan, const StageProfile& profile,
                            const CommModel& comm, const ThroughputConfig& cfg) {
  if (cfg.dp < 1 || cfg.tp < 1 || cfg.microbatch_size < 1) {
    raise(ErrorCode::kInvalidPlan, "dp, tp and microbatch_size must be >= 1");
  }
  ThroughputResult r;
  r.iteration_ms = simulate_iteration(plan, profile, comm).iteration_ms;
  if (cfg.allreduce_ms && cfg.dp > 1) {
    for (int s = 0; s < plan.stages(); ++s) {
      const std::uint64_t bytes = static_cast<std::uint64_t>(plan.layers_per_stage[static_cast<std::size_t>(s)]) *
                                  profile.gradient_bytes_per_layer;
      r.allreduce_ms = std::max(r.allreduce_ms, cfg.allreduce_ms(s, bytes));
    }
  }
  const double samples =
      static_cast<double>(cfg.dp) * profile.microbatches * cfg.microbatch_size;
  r.samples_per_s = samples / ((r.iteration_ms + r.allreduce_ms) / 1000.0);
  r.samples_per_s_per_gpu = r.samples_per_s / (static_cast<double>(cfg.dp) * cfg.tp * plan.stages());
  return r;
}

}  // namespace hetcomm
