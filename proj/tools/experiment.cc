// Copyright 2026 The hetcomm Authors
// SPDX-License-Identifier: Apache-2.0

#include "experiment.h"

#include <algorithm>
#include <cerrno>
#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>

#include "hetcomm/cluster.h"
#include "hetcomm/collectives.h"
#include "hetcomm/error.h"
#include "hetcomm/p2p.h"
#include "json.hpp"

namespace hetcomm::cli {

using nlohmann::json;

namespace {

[[noreturn]] void spec_error(const std::string& what) { raise(ErrorCode::kSpecError, what); }

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::string read_file(const std::filesystem::path& file, ErrorCode code) {
  std::ifstream in(file, std::ios::binary);
  if (!in) raise(code, "cannot read " + file.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

std::uint64_t default_seed() {
  const char* env = std::getenv("HETCOMM_SEED");
  if (!env || !*env) return kDefaultSeed;
  std::uint64_t v = 0;
  const std::string_view s(env);
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) {
    raise(ErrorCode::kValidationError, "HETCOMM_SEED is not an unsigned integer: " + std::string(s));
  }
  return v;
}

std::uint64_t parse_size(std::string_view text) {
  std::uint64_t v = 0;
  auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || p == text.data()) {
    raise(ErrorCode::kValidationError, "bad size: " + std::string(text));
  }
  const std::string_view unit(p, static_cast<std::size_t>(text.data() + text.size() - p));
  int shift = 0;
  if (unit.empty() || unit == "B") shift = 0;
  else if (unit == "KiB") shift = 10;
  else if (unit == "MiB") shift = 20;
  else if (unit == "GiB") shift = 30;
  else raise(ErrorCode::kValidationError, "bad size unit: " + std::string(text));
  if (v > (std::numeric_limits<std::uint64_t>::max() >> shift)) {
    raise(ErrorCode::kValidationError, "size overflows: " + std::string(text));
  }
  return v << shift;
}

std::vector<std::uint64_t> default_p2p_sizes() {
  std::vector<std::uint64_t> out;
  for (int s = 20; s <= 30; ++s) out.push_back(std::uint64_t{1} << s);
  return out;
}

std::string_view experiment_kind_name(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::kBenchP2p: return "bench_p2p";
    case ExperimentKind::kBenchCollective: return "bench_collective";
    case ExperimentKind::kSimulatePipeline: return "simulate_pipeline";
    case ExperimentKind::kSweepPartition: return "sweep_partition";
    case ExperimentKind::kTrainToy: return "train_toy";
  }
  return "unknown";
}

CollectiveOp parse_collective_op(std::string_view text) {
  if (text == "allreduce" || text == "allreduce_sum") return CollectiveOp::kAllReduceSum;
  if (text == "allgather") return CollectiveOp::kAllGather;
  if (text == "reducescatter" || text == "reducescatter_sum") return CollectiveOp::kReduceScatterSum;
  if (text == "broadcast") return CollectiveOp::kBroadcast;
  raise(ErrorCode::kValidationError, "unknown collective: " + std::string(text));
}

// ---------------------------------------------------------------------------
// Spec parsing

namespace {

const std::set<std::string> kKnownKeys{
    "name",  "kind",      "topology",   "profile", "groups",     "path",     "chunk",
    "plan",  "layers",    "microbatches", "repetitions", "sizes", "op",     "ranks",
    "iterations", "seed", "layout",     "learning_rate", "baseline"};

int positive_int(const json& j, const char* key) {
  if (!j.is_number_integer() || j.get<long long>() < 1 || j.get<long long>() > std::numeric_limits<int>::max()) {
    spec_error(std::string("'") + key + "' must be a positive integer");
  }
  return j.get<int>();
}

std::filesystem::path existing_file(const json& j, const char* key, const std::filesystem::path& base) {
  if (!j.is_string()) spec_error(std::string("'") + key + "' must be a file name");
  std::filesystem::path p(j.get<std::string>());
  if (p.is_relative()) p = base / p;
  std::error_code ec;
  if (!std::filesystem::is_regular_file(p, ec)) spec_error(std::string(key) + " file not found: " + p.string());
  return p;
}

std::vector<TransferPath> parse_paths(const json& j) {
  if (!j.is_string()) spec_error("'path' must be a string");
  const auto s = j.get<std::string>();
  if (s == "both") return {TransferPath::kCpuForwarding, TransferPath::kDeviceDirect};
  auto p = parse_transfer_path(s);
  if (!p) spec_error("unknown path '" + s + "'");
  return {*p};
}

ExperimentKind parse_kind(const std::string& s) {
  for (auto k : {ExperimentKind::kBenchP2p, ExperimentKind::kBenchCollective, ExperimentKind::kSimulatePipeline,
                 ExperimentKind::kSweepPartition, ExperimentKind::kTrainToy}) {
    if (experiment_kind_name(k) == s) return k;
  }
  spec_error("unknown kind '" + s + "'");
}

}  // namespace

ExperimentSpec ExperimentSpec::parse(std::string_view json_text, const std::filesystem::path& base_dir) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    spec_error(std::string("malformed experiment spec: ") + e.what());
  }
  if (!j.is_object()) spec_error("experiment spec must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (!kKnownKeys.count(key)) spec_error("unknown key '" + key + "'");
  }

  ExperimentSpec s;
  // Module errors raised while decoding values are spec problems here.
  try {
    if (!j.contains("name") || !j["name"].is_string() || j["name"].get<std::string>().empty()) {
      spec_error("'name' is required");
    }
    s.name = j["name"].get<std::string>();
    if (!j.contains("kind") || !j["kind"].is_string()) spec_error("'kind' is required");
    s.kind = parse_kind(j["kind"].get<std::string>());
    if (j.contains("topology")) s.topology = existing_file(j["topology"], "topology", base_dir);
    if (j.contains("profile")) s.profile = existing_file(j["profile"], "profile", base_dir);
    if (j.contains("baseline")) s.baseline = existing_file(j["baseline"], "baseline", base_dir);
    if (j.contains("groups")) {
      const json& g = j["groups"];
      if (!g.is_object()) spec_error("'groups' must be an object of tp/pp/dp");
      GridShape shape;
      for (const auto& [key, value] : g.items()) {
        if (key == "tp") shape.tp = positive_int(value, "groups.tp");
        else if (key == "pp") shape.pp = positive_int(value, "groups.pp");
        else if (key == "dp") shape.dp = positive_int(value, "groups.dp");
        else spec_error("unknown key 'groups." + key + "'");
      }
      s.groups = shape;
    }
    if (j.contains("path")) s.paths = parse_paths(j["path"]);
    else if (s.kind == ExperimentKind::kBenchP2p) s.paths = {TransferPath::kCpuForwarding, TransferPath::kDeviceDirect};
    if (j.contains("chunk")) {
      const json& c = j["chunk"];
      if (!c.is_object()) spec_error("'chunk' must be an object");
      for (const auto& [key, value] : c.items()) {
        if (key == "size_bytes") {
          s.chunk.chunk_size_bytes = value.is_string() ? parse_size(value.get<std::string>())
                                                       : static_cast<std::size_t>(positive_int(value, "chunk.size_bytes"));
        } else if (key == "in_flight") {
          s.chunk.chunks_in_flight = positive_int(value, "chunk.in_flight");
        } else {
          spec_error("unknown key 'chunk." + key + "'");
        }
      }
      s.chunk.validate();
    }
    if (j.contains("plan")) {
      if (!j["plan"].is_string()) spec_error("'plan' must be \"auto\" or a comma list");
      const auto p = j["plan"].get<std::string>();
      if (p != "auto") s.plan = PartitionPlan::parse(p);
    }
    if (j.contains("layers")) s.layers = positive_int(j["layers"], "layers");
    if (j.contains("microbatches")) s.microbatches = positive_int(j["microbatches"], "microbatches");
    if (j.contains("repetitions")) s.repetitions = positive_int(j["repetitions"], "repetitions");
    if (j.contains("sizes")) {
      if (!j["sizes"].is_array() || j["sizes"].empty()) spec_error("'sizes' must be a non-empty array");
      for (const json& v : j["sizes"]) {
        if (v.is_string()) s.sizes.push_back(parse_size(v.get<std::string>()));
        else if (v.is_number_unsigned()) s.sizes.push_back(v.get<std::uint64_t>());
        else spec_error("'sizes' entries must be byte counts");
      }
    }
    if (j.contains("op")) {
      if (!j["op"].is_string()) spec_error("'op' must be a string");
      s.op = parse_collective_op(j["op"].get<std::string>());
    }
    if (j.contains("ranks")) {
      if (!j["ranks"].is_array()) spec_error("'ranks' must be an array");
      for (const json& v : j["ranks"]) {
        if (!v.is_number_integer() || v.get<long long>() < 0) spec_error("'ranks' entries must be ranks");
        s.ranks.push_back(v.get<int>());
      }
    }
    if (j.contains("iterations")) {
      if (!j["iterations"].is_number_integer() || j["iterations"].get<long long>() < 0) {
        spec_error("'iterations' must be >= 0");
      }
      s.iterations = j["iterations"].get<int>();
    }
    if (j.contains("seed")) {
      if (!j["seed"].is_number_unsigned()) spec_error("'seed' must be an unsigned integer");
      s.seed = j["seed"].get<std::uint64_t>();
    }
    if (j.contains("layout")) {
      const auto l = j["layout"].is_string() ? j["layout"].get<std::string>() : std::string();
      if (l == "hetero" || l == "heterogeneous") s.layout = TrainLayout::kHeterogeneous;
      else if (l == "homo" || l == "homogeneous") s.layout = TrainLayout::kHomogeneous;
      else spec_error("'layout' must be hetero or homo");
    }
    if (j.contains("learning_rate")) {
      if (!j["learning_rate"].is_number() || !(j["learning_rate"].get<double>() > 0.0)) {
        spec_error("'learning_rate' must be positive");
      }
      s.learning_rate = j["learning_rate"].get<double>();
    }
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kSpecError) throw;
    spec_error(e.what());
  } catch (const json::exception& e) {
    spec_error(e.what());
  }
  if (s.kind == ExperimentKind::kBenchP2p && !s.ranks.empty() && s.ranks.size() != 2) {
    spec_error("bench_p2p 'ranks' must be [src, dst]");
  }
  return s;
}

ExperimentSpec ExperimentSpec::load(const std::filesystem::path& file) {
  std::error_code ec;
  if (!std::filesystem::is_regular_file(file, ec)) spec_error("experiment spec not found: " + file.string());
  return parse(read_file(file, ErrorCode::kSpecError), file.parent_path());
}

// ---------------------------------------------------------------------------
// Shared setup

ClusterTopology spec_topology(const ExperimentSpec& spec) {
  return spec.topology ? load_topology_file(*spec.topology) : reference_testbed_topology();
}

namespace {

GridShape resolve_grid(const ExperimentSpec& spec, const ClusterTopology& topology) {
  if (spec.groups) return *spec.groups;
  const int pp = static_cast<int>(topology.nodes().size());
  return GridShape{1, pp, topology.world_size() / pp};
}

const CommGroup& group_containing(const std::vector<CommGroup>& groups, int rank) {
  for (const auto& g : groups) {
    if (std::find(g.members.begin(), g.members.end(), rank) != g.members.end()) return g;
  }
  raise(ErrorCode::kRankOutOfRange, "rank " + std::to_string(rank) + " is in no group");
}

}  // namespace

PipelineSetup make_pipeline_setup(const ExperimentSpec& spec, TransferPath path) {
  ClusterTopology topology = spec_topology(spec);
  const GridShape grid = resolve_grid(spec, topology);
  const ParallelGroups groups =
      assign_backends(build_groups(topology, grid.tp, grid.pp, grid.dp), topology);
  std::vector<int> stage_ranks = groups.pp.front().members;

  StageProfile profile;
  if (spec.profile) {
    profile = load_stage_profile_file(spec.profile->string());
    if (profile.pp() != grid.pp) {
      spec_error("profile has " + std::to_string(profile.pp()) + " stages but the grid has pp=" +
                 std::to_string(grid.pp));
    }
    if (spec.microbatches) profile.microbatches = *spec.microbatches;
  } else {
    profile = profile_from_topology(topology, stage_ranks, spec.microbatches.value_or(kDefaultMicrobatches));
  }

  CommModel comm = topology_comm(topology, stage_ranks, path, spec.chunk);

  ThroughputConfig tput;
  tput.dp = grid.dp;
  tput.tp = grid.tp;
  std::vector<std::vector<int>> dp_members;
  for (int r : stage_ranks) dp_members.push_back(group_containing(groups.dp, r).members);
  tput.allreduce_ms = [topology, dp_members, path, chunk = spec.chunk](int stage, std::uint64_t bytes) {
    const HeteroGroup g(topology, dp_members.at(static_cast<std::size_t>(stage)));
    const PhaseTimes t = hetero_collective_cost(topology, g, CollectiveOp::kAllReduceSum, bytes, path, chunk);
    return (t.intra_us + t.exchange_us + t.spread_us) / 1000.0;
  };
  return PipelineSetup{std::move(topology), std::move(stage_ranks), std::move(profile), std::move(comm),
                       std::move(tput)};
}

PartitionPlan resolve_plan(const ExperimentSpec& spec, const PipelineSetup& setup) {
  if (spec.plan) {
    spec.plan->validate(setup.profile.pp());
    return *spec.plan;
  }
  return optimize_partition(spec.layers, setup.profile, setup.comm);
}

// ---------------------------------------------------------------------------
// Runners. Each produces a header, data rows, and one metric value per row.

namespace {

struct Table {
  std::string metric;
  std::string header;
  std::vector<std::string> rows;
  std::vector<double> values;
  std::string best;

  void add(std::string row, double value) {
    rows.push_back(std::move(row));
    values.push_back(value);
  }
};

std::pair<int, int> p2p_endpoints(const ExperimentSpec& spec, const ClusterTopology& topology) {
  if (!spec.ranks.empty()) return {spec.ranks[0], spec.ranks[1]};
  // Default: rank 0 and the first rank of another vendor, else rank 1.
  for (int r = 1; r < topology.world_size(); ++r) {
    if (topology.vendor_of_rank(r) != topology.vendor_of_rank(0)) return {0, r};
  }
  if (topology.world_size() < 2) raise(ErrorCode::kValidationError, "bench_p2p needs two ranks");
  return {0, 1};
}

Table run_bench_p2p(const ExperimentSpec& spec) {
  const ClusterTopology topology = spec_topology(spec);
  const auto [src, dst] = p2p_endpoints(spec, topology);
  const auto sizes = spec.sizes.empty() ? default_p2p_sizes() : spec.sizes;
  Table t;
  t.metric = "time_us";
  t.header = "repetition,src,dst,size_bytes,path,time_us,bandwidth_gbps";
  for (int rep = 0; rep < spec.repetitions; ++rep) {
    for (std::uint64_t size : sizes) {
      for (TransferPath path : spec.paths) {
        const double us = dispatch_cost(topology, src, dst, size, path, spec.chunk);
        const double gbps = us > 0.0 ? static_cast<double>(size) / (us * 1e3) : 0.0;
        t.add(std::to_string(rep) + "," + std::to_string(src) + "," + std::to_string(dst) + "," +
                  std::to_string(size) + "," + std::string(transfer_path_name(path)) + "," + num(us) + "," +
                  num(gbps),
              us);
      }
    }
  }
  return t;
}

Table run_bench_collective(const ExperimentSpec& spec) {
  const ClusterTopology topology = spec_topology(spec);
  std::vector<int> members = spec.ranks;
  if (members.empty()) {
    members.resize(static_cast<std::size_t>(topology.world_size()));
    std::iota(members.begin(), members.end(), 0);
  }
  const HeteroGroup group(topology, members);
  const auto sizes = spec.sizes.empty() ? default_p2p_sizes() : spec.sizes;
  Table t;
  t.metric = "total_us";
  t.header = "repetition,op,ranks,subgroups,size_bytes,path,intra_us,exchange_us,spread_us,total_us";
  for (int rep = 0; rep < spec.repetitions; ++rep) {
    for (std::uint64_t size : sizes) {
      for (TransferPath path : spec.paths) {
        const PhaseTimes p = hetero_collective_cost(topology, group, spec.op, size, path, spec.chunk);
        const double total = p.intra_us + p.exchange_us + p.spread_us;
        t.add(std::to_string(rep) + "," + std::string(collective_op_name(spec.op)) + "," +
                  std::to_string(group.size()) + "," + std::to_string(group.subgroup_count()) + "," +
                  std::to_string(size) + "," + std::string(transfer_path_name(path)) + "," + num(p.intra_us) +
                  "," + num(p.exchange_us) + "," + num(p.spread_us) + "," + num(total),
              total);
      }
    }
  }
  return t;
}

Table run_simulate_pipeline(const ExperimentSpec& spec) {
  Table t;
  t.metric = "samples_per_s";
  t.header = "repetition,path,plan,iteration_ms,allreduce_ms,samples_per_s,samples_per_s_per_gpu";
  for (TransferPath path : spec.paths) {
    const PipelineSetup setup = make_pipeline_setup(spec, path);
    const PartitionPlan plan = resolve_plan(spec, setup);
    if (t.best.empty()) t.best = plan.to_string();
    for (int rep = 0; rep < spec.repetitions; ++rep) {
      const ThroughputResult r = throughput(plan, setup.profile, setup.comm, setup.throughput);
      // Plans contain commas, so they are quoted.
      t.add(std::to_string(rep) + "," + std::string(transfer_path_name(path)) + ",\"" + plan.to_string() + "\"," +
                num(r.iteration_ms) + "," + num(r.allreduce_ms) + "," + num(r.samples_per_s) + "," +
                num(r.samples_per_s_per_gpu),
            r.samples_per_s);
    }
  }
  return t;
}

Table run_sweep_partition(const ExperimentSpec& spec) {
  Table t;
  t.metric = "iteration_ms";
  t.header = "repetition,path,plan,iteration_ms";
  for (TransferPath path : spec.paths) {
    const PipelineSetup setup = make_pipeline_setup(spec, path);
    if (t.best.empty()) t.best = optimize_partition(spec.layers, setup.profile, setup.comm).to_string();
    for (int rep = 0; rep < spec.repetitions; ++rep) {
      for (const auto& c : sweep_partitions(spec.layers, setup.profile, setup.comm)) {
        t.add(std::to_string(rep) + "," + std::string(transfer_path_name(path)) + ",\"" + c.plan.to_string() +
                  "\"," + num(c.iteration_ms),
              c.iteration_ms);
      }
    }
  }
  return t;
}

Table run_train_toy(const ExperimentSpec& spec, const std::string& coordinator) {
  TrainConfig cfg;
  const GridShape grid = spec.groups.value_or(GridShape{1, 2, 1});
  if (grid.tp != 1) raise(ErrorCode::kValidationError, "the toy trainer has no tensor parallelism");
  cfg.pp = grid.pp;
  cfg.dp = grid.dp;
  cfg.path = spec.paths.front();
  cfg.layout = spec.layout;
  cfg.plan = spec.plan;
  cfg.iterations = spec.iterations;
  cfg.seed = spec.seed.value_or(default_seed());
  cfg.learning_rate = spec.learning_rate;
  if (spec.microbatches) cfg.microbatches = *spec.microbatches;
  if (spec.topology) spec_error("train_toy builds its own cluster; drop 'topology'");

  Table t;
  t.metric = "final_loss";
  t.header = "repetition,iter,loss";
  for (int rep = 0; rep < spec.repetitions; ++rep) {
    ClusterOptions opts;
    opts.path = cfg.path;
    opts.chunk = spec.chunk;
    opts.coordinator = coordinator;
    Cluster cluster(toy_topology(cfg.pp, cfg.dp, cfg.layout), opts);
    const TrainRun run = train(cfg, cluster);
    for (std::size_t i = 0; i < run.loss_series.size(); ++i) {
      char buf[64];
      std::snprintf(buf, sizeof buf, "%.17g", run.loss_series[i]);
      t.rows.push_back(std::to_string(rep) + "," + std::to_string(i) + "," + buf);
    }
    // One metric value per run, not per row.
    t.values.push_back(run.loss_series.empty() ? 0.0 : run.loss_series.back());
  }
  return t;
}

Table run_table(const ExperimentSpec& spec, const std::string& coordinator) {
  switch (spec.kind) {
    case ExperimentKind::kBenchP2p: return run_bench_p2p(spec);
    case ExperimentKind::kBenchCollective: return run_bench_collective(spec);
    case ExperimentKind::kSimulatePipeline: return run_simulate_pipeline(spec);
    case ExperimentKind::kSweepPartition: return run_sweep_partition(spec);
    case ExperimentKind::kTrainToy: return run_train_toy(spec, coordinator);
  }
  spec_error("unknown experiment kind");
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

ExperimentResult run_experiment(const ExperimentSpec& spec, const std::string& coordinator) {
  if (spec.repetitions < 1) spec_error("repetitions must be >= 1");
  Table t = run_table(spec, coordinator);

  ExperimentResult r;
  r.metric = t.metric;
  r.mean = mean_of(t.values);
  r.best = t.best;

  if (spec.baseline) {
    ExperimentSpec base = ExperimentSpec::load(*spec.baseline);
    base.baseline.reset();  // one level only, so cycles cannot recurse
    const ExperimentResult b = run_experiment(base, coordinator);
    if (b.metric != r.metric) {
      spec_error("baseline '" + base.name + "' reports " + b.metric + ", not " + r.metric);
    }
    r.baseline_name = base.name;
    r.baseline_mean = b.mean;
  }

  std::string csv = t.header;
  const bool per_row_ratio = r.baseline_mean && t.values.size() == t.rows.size();
  if (per_row_ratio) csv += ",ratio_to_baseline";
  csv += '\n';
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    csv += t.rows[i];
    if (per_row_ratio) csv += "," + num(t.values[i] / *r.baseline_mean);
    csv += '\n';
  }
  r.csv = std::move(csv);

  std::string head = "name,kind,metric,rows,mean,best";
  std::string vals = spec.name + "," + std::string(experiment_kind_name(spec.kind)) + "," + r.metric + "," +
                     std::to_string(t.rows.size()) + "," + num(r.mean) + ",\"" + r.best + "\"";
  if (r.baseline_mean) {
    head += ",baseline,baseline_mean,ratio_to_baseline";
    vals += "," + *r.baseline_name + "," + num(*r.baseline_mean) + "," + num(r.mean / *r.baseline_mean);
  }
  r.summary = head + "\n" + vals + "\n";
  return r;
}

}  // namespace hetcomm::cli
