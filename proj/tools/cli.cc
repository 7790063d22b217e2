// Copyright 2026 The hetcomm Authors
// SPDX-License-Identifier: Apache-2.0

#include "cli.h"

#include <fstream>
#include <functional>
#include <memory>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "experiment.h"
#include "hetcomm/bootstrap.h"
#include "hetcomm/error.h"
#include "hetcomm/groups.h"
#include "hetcomm/transport.h"

namespace hetcomm::cli {

namespace {

constexpr const char* kDefaultCoordinator = "inproc://hetcomm";

// Flags shared by several subcommands. Strings are decoded after parsing so
// bad values surface as library errors with their own exit codes.
struct Common {
  std::string topology;
  std::string path;
  std::string chunk_size;
  int chunks_in_flight = 0;
  int tp = 0, pp = 0, dp = 0;
  int repetitions = 1;
  std::string out;
};

void add_topology(CLI::App* app, Common& c) {
  app->add_option("--topology", c.topology, "Cluster topology JSON (default: built-in testbed)");
}
void add_path(CLI::App* app, Common& c, const std::string& help) {
  app->add_option("--path", c.path, help);
}
void add_chunk(CLI::App* app, Common& c) {
  app->add_option("--chunk-size", c.chunk_size, "Chunk buffer size, e.g. 4MiB");
  app->add_option("--chunks-in-flight", c.chunks_in_flight, "Chunk buffers in flight");
}
void add_grid(CLI::App* app, Common& c) {
  app->add_option("--tp", c.tp, "Tensor-parallel degree");
  app->add_option("--pp", c.pp, "Pipeline-parallel degree");
  app->add_option("--dp", c.dp, "Data-parallel degree");
}
void add_out(CLI::App* app, Common& c) {
  app->add_option("--out", c.out, "Write CSV here instead of stdout");
}

std::vector<std::string> split_commas(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, ',')) out.push_back(cur);
  return out;
}

// Builds the spec fields every subcommand shares.
ExperimentSpec base_spec(const Common& c, ExperimentKind kind, const std::string& name) {
  ExperimentSpec s;
  s.name = name;
  s.kind = kind;
  if (!c.topology.empty()) s.topology = c.topology;
  if (!c.path.empty()) {
    if (c.path == "both") {
      s.paths = {TransferPath::kCpuForwarding, TransferPath::kDeviceDirect};
    } else {
      auto p = parse_transfer_path(c.path);
      if (!p) raise(ErrorCode::kValidationError, "unknown path '" + c.path + "' (cpu, direct, both)");
      s.paths = {*p};
    }
  }
  if (!c.chunk_size.empty()) s.chunk.chunk_size_bytes = parse_size(c.chunk_size);
  if (c.chunks_in_flight) s.chunk.chunks_in_flight = c.chunks_in_flight;
  s.chunk.validate();
  if (c.tp || c.pp || c.dp) s.groups = GridShape{c.tp ? c.tp : 1, c.pp ? c.pp : 1, c.dp ? c.dp : 1};
  if (c.repetitions < 1) raise(ErrorCode::kValidationError, "--repetitions must be >= 1");
  s.repetitions = c.repetitions;
  return s;
}

void write_file(const std::string& file, const std::string& text) {
  std::ofstream f(file, std::ios::binary);
  if (!f) raise(ErrorCode::kIoError, "cannot write " + file);
  f << text;
  if (!f) raise(ErrorCode::kIoError, "failed writing " + file);
}

// CSV goes to --out or stdout; the summary goes wherever the CSV does not,
// so stdout stays parseable when piped.
void emit(const std::string& out_file, const std::string& csv, const std::string& summary, std::ostream& out,
          std::ostream& err) {
  if (out_file.empty()) {
    out << csv;
    err << summary;
  } else {
    write_file(out_file, csv);
    out << summary;
  }
}

std::string join_ranks(const std::vector<int>& v) {
  std::string s = "[";
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s + "]";
}

void print_groups(const std::string& kind, const std::vector<CommGroup>& groups, std::ostream& out) {
  for (const auto& g : groups) {
    out << kind << ' ' << join_ranks(g.members) << ' ' << group_backend_name(g.backend) << '\n';
  }
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"hetcomm: heterogeneous cluster communication simulator"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");
  std::string coordinator;
  app.add_option("--coordinator", coordinator, "Bootstrap coordinator endpoint (env HETCOMM_COORD)");

  Common c;
  std::function<void()> action;

  // topo validate
  auto* topo = app.add_subcommand("topo", "Topology tools")->require_subcommand(1);
  auto* validate = topo->add_subcommand("validate", "Validate a topology and optionally a TP/PP/DP grid");
  std::string topo_file;
  validate->add_option("file", topo_file, "Topology JSON (default: built-in testbed)");
  add_grid(validate, c);
  validate->callback([&] {
    action = [&] {
      const ClusterTopology t = topo_file.empty() ? reference_testbed_topology() : load_topology_file(topo_file);
      out << "topology ok: nodes=" << t.nodes().size() << " world_size=" << t.world_size() << " vendors=";
      std::vector<std::string> vendors;
      for (const auto& n : t.nodes()) {
        for (const auto& d : n.devices) {
          if (std::find(vendors.begin(), vendors.end(), d.vendor.name()) == vendors.end()) {
            vendors.push_back(d.vendor.name());
          }
        }
      }
      for (std::size_t i = 0; i < vendors.size(); ++i) out << (i ? "," : "") << vendors[i];
      out << '\n';
      if (c.tp || c.pp || c.dp) {
        const ParallelGroups g = assign_backends(
            build_groups(t, c.tp ? c.tp : 1, c.pp ? c.pp : 1, c.dp ? c.dp : 1), t);
        print_groups("TP", g.tp, out);
        print_groups("DP", g.dp, out);
        print_groups("PP", g.pp, out);
      }
    };
  });

  // bench p2p / bench collective
  auto* bench = app.add_subcommand("bench", "Simulated transfer benchmarks")->require_subcommand(1);
  auto* bp2p = bench->add_subcommand("p2p", "Point-to-point time per size and path");
  std::string sizes_flag;
  int src = -1, dst = -1;
  add_topology(bp2p, c);
  add_path(bp2p, c, "cpu, direct or both (default both)");
  add_chunk(bp2p, c);
  add_out(bp2p, c);
  bp2p->add_option("--sizes", sizes_flag, "Comma list of sizes (default 1MiB..1GiB)");
  bp2p->add_option("--src", src, "Sending rank");
  bp2p->add_option("--dst", dst, "Receiving rank");
  bp2p->add_option("--repetitions", c.repetitions, "Repetitions");
  bp2p->callback([&] {
    action = [&] {
      ExperimentSpec s = base_spec(c, ExperimentKind::kBenchP2p, "bench_p2p");
      if (c.path.empty()) s.paths = {TransferPath::kCpuForwarding, TransferPath::kDeviceDirect};
      for (const auto& v : split_commas(sizes_flag)) s.sizes.push_back(parse_size(v));
      if ((src < 0) != (dst < 0)) raise(ErrorCode::kValidationError, "--src and --dst go together");
      if (src >= 0) s.ranks = {src, dst};
      const ExperimentResult r = run_experiment(s, coordinator);
      emit(c.out, r.csv, r.summary, out, err);
    };
  });

  auto* bcoll = bench->add_subcommand("collective", "Heterogeneous collective phase times");
  std::string op_flag = "allreduce";
  std::string ranks_flag;
  add_topology(bcoll, c);
  add_path(bcoll, c, "cpu, direct or both (default direct)");
  add_chunk(bcoll, c);
  add_out(bcoll, c);
  bcoll->add_option("--op", op_flag, "allreduce, allgather, reducescatter or broadcast");
  bcoll->add_option("--ranks", ranks_flag, "Comma list of member ranks (default: all)");
  bcoll->add_option("--sizes", sizes_flag, "Comma list of per-rank sizes (default 1MiB..1GiB)");
  bcoll->add_option("--repetitions", c.repetitions, "Repetitions");
  bcoll->callback([&] {
    action = [&] {
      ExperimentSpec s = base_spec(c, ExperimentKind::kBenchCollective, "bench_collective");
      s.op = parse_collective_op(op_flag);
      for (const auto& v : split_commas(sizes_flag)) s.sizes.push_back(parse_size(v));
      for (const auto& v : split_commas(ranks_flag)) {
        try {
          s.ranks.push_back(std::stoi(v));
        } catch (const std::exception&) {
          raise(ErrorCode::kValidationError, "bad rank '" + v + "'");
        }
      }
      const ExperimentResult r = run_experiment(s, coordinator);
      emit(c.out, r.csv, r.summary, out, err);
    };
  });

  // simulate pipeline
  auto* sim = app.add_subcommand("simulate", "Pipeline simulation")->require_subcommand(1);
  auto* simp = sim->add_subcommand("pipeline", "Simulate one 1F1B iteration and emit its trace");
  std::string plan_flag = "auto";
  std::string profile_flag;
  int microbatches = 0;
  int layers = 32;
  add_topology(simp, c);
  add_path(simp, c, "cpu or direct (default direct)");
  add_chunk(simp, c);
  add_grid(simp, c);
  add_out(simp, c);
  simp->add_option("--plan", plan_flag, "Layers per stage, e.g. 15,17, or auto");
  simp->add_option("--profile", profile_flag, "Stage profile JSON (default: from topology)");
  simp->add_option("--microbatches", microbatches, "Microbatches per iteration");
  simp->add_option("--layers", layers, "Total layers when --plan is auto");
  simp->callback([&] {
    action = [&] {
      ExperimentSpec s = base_spec(c, ExperimentKind::kSimulatePipeline, "simulate_pipeline");
      if (s.paths.size() != 1) raise(ErrorCode::kValidationError, "simulate pipeline takes one path");
      if (!profile_flag.empty()) s.profile = profile_flag;
      if (microbatches) s.microbatches = microbatches;
      s.layers = layers;
      if (plan_flag != "auto") s.plan = PartitionPlan::parse(plan_flag);
      const PipelineSetup setup = make_pipeline_setup(s, s.paths.front());
      const PartitionPlan plan = resolve_plan(s, setup);
      const IterationResult res = simulate_iteration(plan, setup.profile, setup.comm);
      char line[160];
      std::snprintf(line, sizeof line, "plan=%s iteration_time_ms=%.9g events=%zu\n", plan.to_string().c_str(),
                    res.iteration_ms, res.trace.events.size());
      emit(c.out, trace_csv(trace_records(res.trace, setup.comm.path)), line, out, err);
    };
  });

  // sweep partition
  auto* sweep = app.add_subcommand("sweep", "Parameter sweeps")->require_subcommand(1);
  auto* sweepp = sweep->add_subcommand("partition", "Every partition of the layers over the stages");
  add_topology(sweepp, c);
  add_path(sweepp, c, "cpu, direct or both (default direct)");
  add_chunk(sweepp, c);
  add_grid(sweepp, c);
  add_out(sweepp, c);
  sweepp->add_option("--layers", layers, "Total layers");
  sweepp->add_option("--profile", profile_flag, "Stage profile JSON (default: from topology)");
  sweepp->add_option("--microbatches", microbatches, "Microbatches per iteration");
  sweepp->callback([&] {
    action = [&] {
      ExperimentSpec s = base_spec(c, ExperimentKind::kSweepPartition, "sweep_partition");
      if (!profile_flag.empty()) s.profile = profile_flag;
      if (microbatches) s.microbatches = microbatches;
      s.layers = layers;
      const ExperimentResult r = run_experiment(s, coordinator);
      emit(c.out, r.csv, r.summary, out, err);
    };
  });

  // train toy
  auto* train_cmd = app.add_subcommand("train", "Toy distributed training")->require_subcommand(1);
  auto* toy = train_cmd->add_subcommand("toy", "Train the toy MLP and emit its loss series");
  TrainConfig tc;
  std::string layout_flag = "hetero";
  std::optional<std::uint64_t> seed_flag;
  std::string train_path = "direct";
  toy->add_option("--pp", tc.pp, "Pipeline stages");
  toy->add_option("--dp", tc.dp, "Data-parallel replicas");
  toy->add_option("--path", train_path, "cpu or direct");
  toy->add_option("--iters", tc.iterations, "Iterations");
  toy->add_option("--seed", seed_flag, "Seed (default HETCOMM_SEED or 42)");
  toy->add_option("--lr", tc.learning_rate, "Learning rate");
  toy->add_option("--layout", layout_flag, "hetero or homo");
  toy->add_option("--plan", plan_flag, "Layers per stage, or auto");
  add_out(toy, c);
  toy->callback([&] {
    action = [&] {
      auto p = parse_transfer_path(train_path);
      if (!p) raise(ErrorCode::kValidationError, "unknown path '" + train_path + "'");
      tc.path = *p;
      if (layout_flag == "hetero") tc.layout = TrainLayout::kHeterogeneous;
      else if (layout_flag == "homo") tc.layout = TrainLayout::kHomogeneous;
      else raise(ErrorCode::kValidationError, "--layout must be hetero or homo");
      if (plan_flag != "auto") tc.plan = PartitionPlan::parse(plan_flag);
      tc.seed = seed_flag.value_or(default_seed());
      ClusterOptions opts;
      opts.path = tc.path;
      opts.coordinator = coordinator;
      if (tc.pp < 1 || tc.dp < 1) raise(ErrorCode::kGridMismatch, "--pp and --dp must be >= 1");
      Cluster cluster(toy_topology(tc.pp, tc.dp, tc.layout), opts);
      const TrainRun run = train(tc, cluster);
      char line[128];
      std::snprintf(line, sizeof line, "iterations=%zu final_loss=%.17g\n", run.loss_series.size(),
                    run.loss_series.empty() ? 0.0 : run.loss_series.back());
      emit(c.out, export_run(run), line, out, err);
    };
  });

  // run SPEC
  auto* run = app.add_subcommand("run", "Run an experiment spec (JSON)");
  std::string spec_file;
  run->add_option("spec", spec_file, "Experiment spec file")->required();
  add_out(run, c);
  run->callback([&] {
    action = [&] {
      const ExperimentResult r = run_experiment(ExperimentSpec::load(spec_file), coordinator);
      emit(c.out, r.csv, r.summary, out, err);
    };
  });

  std::vector<const char*> argv{"hetcomm"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    // --help and friends exit 0 and print the right subcommand's help.
    if (e.get_exit_code() == 0) return app.exit(e, out, err);
    err << "hetcomm: " << e.what() << '\n';
    return exit_code_for(ErrorCode::kParseError);
  }

  if (coordinator.empty()) coordinator = coordinator_from_env(kDefaultCoordinator);
  try {
    if (action) action();
    return 0;
  } catch (const Error& e) {
    err << "hetcomm: " << e.what() << '\n';
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    err << "hetcomm: " << e.what() << '\n';
    return exit_code_for(ErrorCode::kChannelClosed);
  }
}

}  // namespace hetcomm::cli
