// Copyright 2026 The hetcomm Authors
// SPDX-License-Identifier: Apache-2.0

#include "hetcomm/trainer.h"

#include <atomic>
#include <barrier>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <exception>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <random>
#include <thread>

#include "hetcomm/collectives.h"
#include "hetcomm/error.h"
#include "hetcomm/groups.h"
#include "hetcomm/p2p.h"
#include "json.hpp"

namespace hetcomm {

// ---------------------------------------------------------------------------
// Model and data

ToyModel ToyModel::init(const ToyModelSpec& spec, std::uint64_t seed) {
  if (spec.layers() < 1) raise(ErrorCode::kValidationError, "toy model needs at least one layer");
  std::mt19937_64 rng(seed);
  ToyModel m;
  for (int l = 0; l < spec.layers(); ++l) {
    DenseLayer layer;
    layer.in = spec.widths[static_cast<std::size_t>(l)];
    layer.out = spec.widths[static_cast<std::size_t>(l) + 1];
    if (layer.in < 1 || layer.out < 1) raise(ErrorCode::kValidationError, "layer widths must be >= 1");
    const double bound = 1.0 / std::sqrt(static_cast<double>(layer.in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    layer.w.resize(static_cast<std::size_t>(layer.in * layer.out));
    for (double& v : layer.w) v = dist(rng);
    layer.b.resize(static_cast<std::size_t>(layer.out));
    for (double& v : layer.b) v = dist(rng);
    m.layers.push_back(std::move(layer));
  }
  return m;
}

std::size_t ToyModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.w.size() + l.b.size();
  return n;
}

std::vector<double> ToyModel::flatten() const {
  std::vector<double> out;
  out.reserve(parameter_count());
  for (const auto& l : layers) {
    out.insert(out.end(), l.w.begin(), l.w.end());
    out.insert(out.end(), l.b.begin(), l.b.end());
  }
  return out;
}

void ToyModel::unflatten(const std::vector<double>& params) {
  if (params.size() != parameter_count()) raise(ErrorCode::kShapeError, "parameter count mismatch");
  std::size_t at = 0;
  for (auto& l : layers) {
    for (double& v : l.w) v = params[at++];
    for (double& v : l.b) v = params[at++];
  }
}

ToyDataset ToyDataset::make(const ToyModelSpec& spec, std::uint64_t seed) {
  ToyDataset d;
  d.in = spec.widths.front();
  d.out = spec.widths.back();
  // Offset so the data stream differs from the parameter stream.
  std::mt19937_64 rng(seed ^ 0x9E3779B97F4A7C15ull);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  std::vector<double> a(static_cast<std::size_t>(d.in * d.out));
  for (double& v : a) v = dist(rng);
  for (int s = 0; s < kSamples; ++s) {
    std::vector<double> x(static_cast<std::size_t>(d.in));
    for (double& v : x) v = dist(rng);
    std::vector<double> y(static_cast<std::size_t>(d.out));
    for (int o = 0; o < d.out; ++o) {
      double acc = 0.0;
      for (int i = 0; i < d.in; ++i) acc += a[static_cast<std::size_t>(o * d.in + i)] * x[static_cast<std::size_t>(i)];
      y[static_cast<std::size_t>(o)] = acc;
    }
    d.x.push_back(std::move(x));
    d.y.push_back(std::move(y));
  }
  return d;
}

namespace {

// Arithmetic shared by the distributed and the reference trainer. Every sum
// runs in a fixed order so both produce identical bits.

struct LayerGrad {
  std::vector<double> w;
  std::vector<double> b;
};

std::vector<LayerGrad> zero_grads(const std::vector<DenseLayer>& layers) {
  std::vector<LayerGrad> g;
  for (const auto& l : layers) g.push_back({std::vector<double>(l.w.size()), std::vector<double>(l.b.size())});
  return g;
}

// Per-sample activations: acts[0] is the stage input, acts[i + 1] the output
// of local layer i.
using Activations = std::vector<std::vector<double>>;

Activations forward(const std::vector<DenseLayer>& layers, bool ends_model,
                    std::vector<double> input) {
  Activations acts;
  acts.push_back(std::move(input));
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const DenseLayer& L = layers[l];
    const bool linear = ends_model && l + 1 == layers.size();
    const auto& x = acts.back();
    std::vector<double> a(static_cast<std::size_t>(L.out));
    for (int j = 0; j < L.out; ++j) {
      double z = L.b[static_cast<std::size_t>(j)];
      for (int k = 0; k < L.in; ++k) {
        z += L.w[static_cast<std::size_t>(j * L.in + k)] * x[static_cast<std::size_t>(k)];
      }
      a[static_cast<std::size_t>(j)] = linear ? z : std::tanh(z);
    }
    acts.push_back(std::move(a));
  }
  return acts;
}

// Accumulates this sample's parameter gradients; returns d(loss)/d(input).
std::vector<double> backward(const std::vector<DenseLayer>& layers, bool ends_model,
                             const Activations& acts, std::vector<double> da,
                             std::vector<LayerGrad>& grads) {
  for (std::size_t li = layers.size(); li-- > 0;) {
    const DenseLayer& L = layers[li];
    const bool linear = ends_model && li + 1 == layers.size();
    const auto& x = acts[li];
    const auto& a = acts[li + 1];
    std::vector<double> dz(static_cast<std::size_t>(L.out));
    for (int j = 0; j < L.out; ++j) {
      const auto ju = static_cast<std::size_t>(j);
      dz[ju] = linear ? da[ju] : da[ju] * (1.0 - a[ju] * a[ju]);
    }
    LayerGrad& g = grads[li];
    for (int j = 0; j < L.out; ++j) {
      const auto ju = static_cast<std::size_t>(j);
      g.b[ju] += dz[ju];
      for (int k = 0; k < L.in; ++k) {
        g.w[static_cast<std::size_t>(j * L.in + k)] += dz[ju] * x[static_cast<std::size_t>(k)];
      }
    }
    std::vector<double> dx(static_cast<std::size_t>(L.in));
    for (int k = 0; k < L.in; ++k) {
      double acc = 0.0;
      for (int j = 0; j < L.out; ++j) {
        acc += L.w[static_cast<std::size_t>(j * L.in + k)] * dz[static_cast<std::size_t>(j)];
      }
      dx[static_cast<std::size_t>(k)] = acc;
    }
    da = std::move(dx);
  }
  return da;
}

// Squared error of one sample and d(loss)/d(prediction) with `scale` folded in.
double sample_loss(const std::vector<double>& pred, const std::vector<double>& target,
                   double scale, std::vector<double>& dpred) {
  double s = 0.0;
  dpred.assign(pred.size(), 0.0);
  for (std::size_t o = 0; o < pred.size(); ++o) {
    const double e = pred[o] - target[o];
    s += e * e;
    dpred[o] = scale * e;
  }
  return s;
}

void sgd_step(std::vector<DenseLayer>& layers, const std::vector<LayerGrad>& grads, double lr) {
  for (std::size_t l = 0; l < layers.size(); ++l) {
    for (std::size_t i = 0; i < layers[l].w.size(); ++i) layers[l].w[i] -= lr * grads[l].w[i];
    for (std::size_t i = 0; i < layers[l].b.size(); ++i) layers[l].b[i] -= lr * grads[l].b[i];
  }
}

std::vector<double> flatten_grads(const std::vector<LayerGrad>& grads) {
  std::vector<double> out;
  for (const auto& g : grads) {
    out.insert(out.end(), g.w.begin(), g.w.end());
    out.insert(out.end(), g.b.begin(), g.b.end());
  }
  return out;
}

void unflatten_grads(const std::vector<double>& flat, std::vector<LayerGrad>& grads) {
  std::size_t at = 0;
  for (auto& g : grads) {
    for (double& v : g.w) v = flat[at++];
    for (double& v : g.b) v = flat[at++];
  }
}

Bytes to_bytes(const std::vector<double>& v) {
  Bytes out(v.size() * sizeof(double));
  if (!v.empty()) std::memcpy(out.data(), v.data(), out.size());
  return out;
}

std::vector<double> from_bytes(std::span<const std::byte> b) {
  std::vector<double> out(b.size() / sizeof(double));
  if (!out.empty()) std::memcpy(out.data(), b.data(), out.size() * sizeof(double));
  return out;
}

void check_finite(double loss, int iteration) {
  if (!std::isfinite(loss)) {
    raise(ErrorCode::kDiverged, "loss became non-finite at iteration " + std::to_string(iteration + 1));
  }
}

PartitionPlan resolve_plan(const TrainConfig& cfg) {
  const int layers = cfg.model.layers();
  if (cfg.plan) {
    cfg.plan->validate(cfg.pp);
    if (cfg.plan->total_layers() != layers) {
      raise(ErrorCode::kInvalidPlan, "plan " + cfg.plan->to_string() + " does not cover the " +
                                         std::to_string(layers) + " model layers");
    }
    return *cfg.plan;
  }
  if (layers < cfg.pp) {
    raise(ErrorCode::kInfeasible, std::to_string(layers) + " layers cannot fill " +
                                      std::to_string(cfg.pp) + " stages");
  }
  PartitionPlan plan;
  for (int s = 0; s < cfg.pp; ++s) plan.layers_per_stage.push_back(layers / cfg.pp + (s < layers % cfg.pp ? 1 : 0));
  return plan;
}

}  // namespace

double batch_loss(const ToyModel& model, const ToyDataset& data, int iteration) {
  const int start = data.batch_start(iteration);
  double sum = 0.0;
  std::vector<double> unused;
  for (int i = 0; i < ToyDataset::kBatch; ++i) {
    const auto s = static_cast<std::size_t>(start + i);
    const Activations acts = forward(model.layers, true, data.x[s]);
    sum += sample_loss(acts.back(), data.y[s], 0.0, unused);
  }
  return sum / (static_cast<double>(ToyDataset::kBatch) * data.out);
}

TrainRun train_reference(const TrainConfig& config) {
  ToyModel model = ToyModel::init(config.model, config.seed);
  const ToyDataset data = ToyDataset::make(config.model, config.seed);
  const double denom = static_cast<double>(ToyDataset::kBatch) * data.out;
  const double scale = 2.0 / denom;
  TrainRun run;
  run.config = config;
  for (int it = 0; it < config.iterations; ++it) {
    auto grads = zero_grads(model.layers);
    const int start = data.batch_start(it);
    double sum = 0.0;
    std::vector<double> dpred;
    for (int i = 0; i < ToyDataset::kBatch; ++i) {
      const auto s = static_cast<std::size_t>(start + i);
      const Activations acts = forward(model.layers, true, data.x[s]);
      sum += sample_loss(acts.back(), data.y[s], scale, dpred);
      backward(model.layers, true, acts, dpred, grads);
    }
    const double loss = sum / denom;
    check_finite(loss, it);
    run.loss_series.push_back(loss);
    if (it == 0 && config.capture_gradients) run.first_gradients = flatten_grads(grads);
    sgd_step(model.layers, grads, config.learning_rate);
  }
  return run;
}

// ---------------------------------------------------------------------------
// Distributed trainer

ClusterTopology toy_topology(int pp, int dp, TrainLayout layout) {
  if (pp < 1 || dp < 1) raise(ErrorCode::kGridMismatch, "pp and dp must be >= 1");
  if (layout == TrainLayout::kHomogeneous) return single_node_topology(nvidia_vendor(), pp * dp);
  nlohmann::json nodes = nlohmann::json::array();
  for (int s = 0; s < pp; ++s) {
    const bool fast = s % 2 == 1;
    nodes.push_back({{"id", s},
                     {"vendor", fast ? "nvidia" : "amd"},
                     {"devices", dp},
                     {"fabric_bw_gbps", fast ? 900 : 128},
                     {"fabric_latency_us", fast ? 1 : 2},
                     {"host_bw_gbps", 64},
                     {"host_latency_us", 1},
                     {"nic_count", dp},
                     {"nic_bw_gbps", 100},
                     {"nic_latency_us", 5}});
  }
  return load_topology(nlohmann::json{{"nodes", nodes}}.dump());
}

TrainRun train(const TrainConfig& config) {
  Cluster cluster(toy_topology(config.pp, config.dp, config.layout));
  return train(config, cluster);
}

TrainRun train(const TrainConfig& config, Cluster& cluster) {
  const int pp = config.pp;
  const int dp = config.dp;
  if (config.iterations < 0) raise(ErrorCode::kValidationError, "iterations must be >= 0");
  ParallelGroups groups = assign_backends(build_groups(cluster.topology(), 1, pp, dp), cluster.topology());
  const PartitionPlan plan = resolve_plan(config);
  if (ToyDataset::kBatch % dp != 0) {
    raise(ErrorCode::kGridMismatch, "batch of " + std::to_string(ToyDataset::kBatch) +
                                        " does not split across dp=" + std::to_string(dp));
  }
  const int local_batch = ToyDataset::kBatch / dp;
  const int m = std::min(config.microbatches, local_batch);
  if (m < 1 || local_batch % m != 0) {
    raise(ErrorCode::kValidationError, "local batch of " + std::to_string(local_batch) +
                                           " does not split into " + std::to_string(m) +
                                           " microbatches");
  }
  const int per_mb = local_batch / m;
  cluster.set_path(config.path);

  const ToyModel model = ToyModel::init(config.model, config.seed);
  const ToyDataset data = ToyDataset::make(config.model, config.seed);
  const double local_denom = static_cast<double>(local_batch) * data.out;
  const double scale = 2.0 / local_denom;
  const GridShape shape{1, pp, dp};

  // One communicator per DP group, indexed by pipeline stage.
  std::vector<std::unique_ptr<GroupCommunicator>> dp_comms;
  for (const auto& g : groups.dp) {
    dp_comms.push_back(std::make_unique<GroupCommunicator>(cluster, HeteroGroup(cluster.topology(), g.members)));
  }

  TrainRun run;
  run.config = config;
  run.loss_series.assign(static_cast<std::size_t>(config.iterations), 0.0);
  std::vector<std::vector<double>> stage_grads(static_cast<std::size_t>(pp));
  std::atomic<bool> diverged{false};
  std::barrier sync(cluster.world_size());
  std::mutex err_mu;
  std::exception_ptr first_error;

  auto rank_main = [&](int rank) {
    const GridCoords c = grid_coords(shape, rank);
    const int s = c.pp;
    const bool first_stage = s == 0;
    const bool last_stage = s == pp - 1;
    int first_layer = 0;
    for (int i = 0; i < s; ++i) first_layer += plan.layers_per_stage[static_cast<std::size_t>(i)];
    std::vector<DenseLayer> layers(model.layers.begin() + first_layer,
                                   model.layers.begin() + first_layer + plan.layers_per_stage[static_cast<std::size_t>(s)]);
    const int prev = first_stage ? -1 : grid_rank(shape, {0, c.dp, s - 1});
    const int next = last_stage ? -1 : grid_rank(shape, {0, c.dp, s + 1});
    const auto ops = one_f_one_b_order(pp, s, m);
    VendorBackend& backend = cluster.backend_for_rank(rank);

    for (int it = 0; it < config.iterations; ++it) {
      auto grads = zero_grads(layers);
      const int sample0 = data.batch_start(it) + c.dp * local_batch;
      std::map<int, std::vector<Activations>> saved;     // microbatch -> per-sample acts
      std::map<int, std::vector<std::vector<double>>> dpreds;  // last stage only
      std::map<int, SendHandle> outstanding;             // destination -> send
      double loss_sum = 0.0;

      auto send = [&](int dst, const std::vector<double>& values) {
        if (auto it_h = outstanding.find(dst); it_h != outstanding.end()) {
          it_h->second.wait();
          outstanding.erase(it_h);
        }
        DeviceBuffer buf = backend.device->dev_alloc(rank, values.size() * sizeof(double), MemorySpace::kDevice);
        const Bytes bytes = to_bytes(values);
        std::copy(bytes.begin(), bytes.end(), buf.bytes().begin());
        outstanding.emplace(dst, p2p_dispatch_isend(cluster, rank, dst, std::move(buf)));
      };
      auto recv = [&](int src, std::size_t count) {
        P2pDelivery d = p2p_dispatch_recv(cluster, rank, src, count * sizeof(double));
        return from_bytes(d.buffer.bytes());
      };

      for (const StageOp& op : ops) {
        const int mb = op.microbatch;
        const int width_in = layers.front().in;
        const int width_out = layers.back().out;
        if (op.phase == Phase::kFwd) {
          std::vector<double> packed;
          if (!first_stage) packed = recv(prev, static_cast<std::size_t>(per_mb * width_in));
          std::vector<double> out_packed;
          auto& acts_mb = saved[mb];
          for (int i = 0; i < per_mb; ++i) {
            const auto sample = static_cast<std::size_t>(sample0 + mb * per_mb + i);
            std::vector<double> x = first_stage
                                        ? data.x[sample]
                                        : std::vector<double>(packed.begin() + i * width_in,
                                                              packed.begin() + (i + 1) * width_in);
            acts_mb.push_back(forward(layers, last_stage, std::move(x)));
            const auto& y = acts_mb.back().back();
            if (last_stage) {
              std::vector<double> dpred;
              loss_sum += sample_loss(y, data.y[sample], scale, dpred);
              dpreds[mb].push_back(std::move(dpred));
            } else {
              out_packed.insert(out_packed.end(), y.begin(), y.end());
            }
          }
          if (!last_stage) send(next, out_packed);
        } else {
          std::vector<double> packed;
          if (!last_stage) packed = recv(next, static_cast<std::size_t>(per_mb * width_out));
          std::vector<double> dx_packed;
          const auto& acts_mb = saved.at(mb);
          for (int i = 0; i < per_mb; ++i) {
            std::vector<double> da = last_stage
                                         ? dpreds.at(mb)[static_cast<std::size_t>(i)]
                                         : std::vector<double>(packed.begin() + i * width_out,
                                                               packed.begin() + (i + 1) * width_out);
            std::vector<double> dx = backward(layers, last_stage, acts_mb[static_cast<std::size_t>(i)],
                                              std::move(da), grads);
            dx_packed.insert(dx_packed.end(), dx.begin(), dx.end());
          }
          saved.erase(mb);
          if (!first_stage) send(prev, dx_packed);
        }
      }
      for (auto& [dst, h] : outstanding) h.wait();
      outstanding.clear();

      double loss = loss_sum / local_denom;
      if (dp > 1) {
        std::vector<double> flat = flatten_grads(grads);
        if (last_stage) flat.push_back(loss);
        DeviceBuffer in = backend.device->dev_alloc(rank, flat.size() * sizeof(double), MemorySpace::kDevice);
        const Bytes bytes = to_bytes(flat);
        std::copy(bytes.begin(), bytes.end(), in.bytes().begin());
        DeviceBuffer out = dp_comms[static_cast<std::size_t>(s)]->allreduce(rank, DataType::kFloat64, std::move(in));
        flat = from_bytes(out.bytes());
        for (double& v : flat) v /= dp;
        if (last_stage) {
          loss = flat.back();
          flat.pop_back();
        }
        unflatten_grads(flat, grads);
      }
      if (it == 0 && config.capture_gradients && c.dp == 0) {
        stage_grads[static_cast<std::size_t>(s)] = flatten_grads(grads);
      }
      if (last_stage && c.dp == 0) {
        run.loss_series[static_cast<std::size_t>(it)] = loss;
        if (!std::isfinite(loss)) diverged = true;
      }
      sgd_step(layers, grads, config.learning_rate);
      sync.arrive_and_wait();
      if (diverged) {
        check_finite(std::nan(""), it);
      }
    }
  };

  {
    std::vector<std::jthread> threads;
    for (int r = 0; r < cluster.world_size(); ++r) {
      threads.emplace_back([&, r] {
        try {
          rank_main(r);
        } catch (...) {
          {
            std::lock_guard lock(err_mu);
            if (!first_error) first_error = std::current_exception();
          }
          // Unblock peers waiting on this rank.
          cluster.transport().close_all();
          sync.arrive_and_drop();
        }
      });
    }
  }
  if (first_error) std::rethrow_exception(first_error);

  if (config.capture_gradients && config.iterations > 0) {
    for (const auto& g : stage_grads) run.first_gradients.insert(run.first_gradients.end(), g.begin(), g.end());
  }
  return run;
}

// ---------------------------------------------------------------------------

std::string export_run(const TrainRun& run) {
  std::string out = "iter,loss\n";
  char buf[64];
  for (std::size_t i = 0; i < run.loss_series.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%zu,%.17g\n", i + 1, run.loss_series[i]);
    out += buf;
  }
  return out;
}

void export_run_file(const TrainRun& run, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) raise(ErrorCode::kIoError, "cannot write " + path);
  out << export_run(run);
  if (!out) raise(ErrorCode::kIoError, "failed writing " + path);
}

}  // namespace hetcomm
