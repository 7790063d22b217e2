// Copyright 2026 The hetcomm Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "hetcomm/error.h"
#include "hetcomm/trainer.h"

namespace hetcomm {
namespace {

TrainConfig short_config(int iterations = 30) {
  TrainConfig c;
  c.iterations = iterations;
  return c;
}

TEST(Toy, InitIsDeterministic) {
  const ToyModelSpec spec;
  EXPECT_EQ(ToyModel::init(spec, 1).flatten(), ToyModel::init(spec, 1).flatten());
  EXPECT_NE(ToyModel::init(spec, 1).flatten(), ToyModel::init(spec, 2).flatten());
  ToyModel m = ToyModel::init(spec, 3);
  auto p = m.flatten();
  EXPECT_EQ(p.size(), m.parameter_count());
  EXPECT_EQ(p.size(), static_cast<std::size_t>(8 * 32 + 32 + 2 * (32 * 32 + 32) + 32 * 4 + 4));
  p[0] = 123.0;
  m.unflatten(p);
  EXPECT_EQ(m.layers[0].w[0], 123.0);
  const auto d = ToyDataset::make(spec, 3);
  EXPECT_EQ(d.x.size(), 256u);
  EXPECT_EQ(d.batches(), 8);
  EXPECT_EQ(d.batch_start(9), 32);
}

TEST(Trainer, PipelineMatchesReferenceBitwise) {
  const auto cfg = short_config();
  const auto ref = train_reference(cfg);
  EXPECT_EQ(train(cfg).loss_series, ref.loss_series);
  auto single = cfg;
  single.pp = 1;
  EXPECT_EQ(train(single).loss_series, ref.loss_series);
  auto four = cfg;
  four.pp = 4;
  EXPECT_EQ(train(four).loss_series, ref.loss_series);
  auto uneven = cfg;
  uneven.plan = PartitionPlan{{1, 3}};
  EXPECT_EQ(train(uneven).loss_series, ref.loss_series);
}

TEST(Trainer, PathAndLayoutDoNotChangeLoss) {
  auto cfg = short_config();
  const auto direct = train(cfg).loss_series;
  cfg.path = TransferPath::kCpuForwarding;
  EXPECT_EQ(train(cfg).loss_series, direct);
  cfg.layout = TrainLayout::kHomogeneous;
  EXPECT_EQ(train(cfg).loss_series, direct);
}

TEST(Trainer, DataParallelWithinTolerance) {
  const auto cfg = short_config();
  const auto ref = train_reference(cfg).loss_series;
  for (int dp : {2, 4}) {
    auto c = cfg;
    c.dp = dp;
    const auto got = train(c).loss_series;
    ASSERT_EQ(got.size(), ref.size());
    for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_LE(std::abs(got[i] - ref[i]), 1e-10) << "dp " << dp;
  }
}

TEST(Trainer, GradientsMatchFiniteDifferences) {
  TrainConfig cfg;
  cfg.model.widths = {8, 16, 4};
  cfg.iterations = 1;
  cfg.capture_gradients = true;
  cfg.seed = 5;
  for (int dp : {1, 2}) {
    cfg.dp = dp;
    const auto run = train(cfg);
    const ToyModel model = ToyModel::init(cfg.model, cfg.seed);
    const ToyDataset data = ToyDataset::make(cfg.model, cfg.seed);
    const auto params = model.flatten();
    ASSERT_EQ(run.first_gradients.size(), params.size());
    std::mt19937_64 rng(77);
    for (int k = 0; k < 10; ++k) {
      const std::size_t i = rng() % params.size();
      const double h = 1e-5;
      ToyModel plus = model;
      ToyModel minus = model;
      auto pp = params;
      pp[i] += h;
      plus.unflatten(pp);
      pp[i] -= 2 * h;
      minus.unflatten(pp);
      const double fd = (batch_loss(plus, data, 0) - batch_loss(minus, data, 0)) / (2 * h);
      const double g = run.first_gradients[i];
      EXPECT_LE(std::abs(g - fd), 1e-4 * std::max(std::abs(fd), 1e-3)) << "param " << i;
    }
  }
}

TEST(Trainer, Converges) {
  TrainConfig cfg;
  for (int dp : {1, 2}) {
    cfg.dp = dp;
    const auto s = train(cfg).loss_series;
    ASSERT_EQ(s.size(), 200u);
    EXPECT_LT(s.back(), 0.1 * s.front());
  }
}

TEST(Trainer, RejectsBadConfigs) {
  auto cfg = short_config(2);
  cfg.dp = 3;
  EXPECT_THROW(train(cfg), Error);
  cfg.dp = 1;
  cfg.plan = PartitionPlan{{2, 3}};
  try {
    train(cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInvalidPlan);
  }
}

TEST(Trainer, DivergenceIsReported) {
  auto cfg = short_config(50);
  cfg.learning_rate = 1e6;
  for (auto* fn : {+[](const TrainConfig& c) { return train(c); },
                   +[](const TrainConfig& c) { return train_reference(c); }}) {
    try {
      fn(cfg);
      FAIL() << "expected divergence";
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::kDiverged);
    }
  }
}

TEST(Trainer, WrongClusterSize) {
  Cluster cluster(reference_testbed_topology());
  auto cfg = short_config(1);
  try {
    train(cfg, cluster);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kGridMismatch);
  }
}

TEST(Export, Csv) {
  TrainRun run;
  EXPECT_EQ(export_run(run), "iter,loss\n");
  run.loss_series = {0.5, 0.25, 0.125};
  const std::string csv = export_run(run);
  EXPECT_EQ(csv, "iter,loss\n1,0.5\n2,0.25\n3,0.125\n");
  const auto path = std::filesystem::temp_directory_path() / "hetcomm_export_test.csv";
  export_run_file(run, path.string());
  export_run_file(run, path.string());
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  EXPECT_EQ(ss.str(), csv);
  std::filesystem::remove(path);
  try {
    export_run_file(run, "/nonexistent-dir/x.csv");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kIoError);
  }
}

TEST(Export, RoundTripPrecision) {
  const auto run = train_reference(short_config(5));
  std::istringstream in(export_run(run));
  std::string line;
  std::getline(in, line);
  for (double v : run.loss_series) {
    std::getline(in, line);
    EXPECT_EQ(std::stod(line.substr(line.find(',') + 1)), v);
  }
}

}  // namespace
}  // namespace hetcomm
