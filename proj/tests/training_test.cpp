// Copyright 2026 The AICT Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "aict/training.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "aict/errors.hpp"
#include "aict/synthetic.hpp"
#include "test_util.hpp"

namespace aict {
namespace {

using testing::TempDir;

TEST(RdLossTest, HandArithmetic) {
  auto x = torch::rand({2, 8, 8, 3}) * 0.5;
  auto bits_y = torch::full({2}, 32.0);
  auto bits_z = torch::full({2}, 32.0);
  // R = 128 / (2 * 8 * 8) = 1 bpp, D = 0.01.
  auto rd = rd_loss(x, x + 0.1, bits_y, bits_z, 0.01, 8, 8);
  EXPECT_NEAR(rd.d_mse, 0.01, 1e-7);
  EXPECT_DOUBLE_EQ(rd.r_bpp, 1.0);
  EXPECT_NEAR(rd.total, 0.02, 1e-7);
  EXPECT_NEAR(rd.loss.item<double>(), rd.total, 1e-7);
}

TEST(RdLossTest, ZeroDistortionAndZeroRate) {
  auto x = torch::rand({1, 4, 6, 3});
  auto rd = rd_loss(x, x, torch::tensor({12.0}), torch::tensor({12.0}), 0.5, 4, 6);
  EXPECT_EQ(rd.d_mse, 0.0);
  EXPECT_DOUBLE_EQ(rd.total, 0.5 * 1.0);
  auto x_hat = x + 0.2;
  auto rd0 = rd_loss(x, x_hat, torch::zeros({1}), torch::zeros({1}), 0.5, 4, 6);
  EXPECT_EQ(rd0.r_bpp, 0.0);
  EXPECT_EQ(rd0.total, rd0.d_mse);
  EXPECT_THROW(rd_loss(x, torch::rand({1, 4, 5, 3}), torch::zeros({1}), torch::zeros({1}), 0.5, 4, 6),
               InputError);
}

TEST(RdLossTest, BreakdownIdentityAndGradient) {
  auto x = torch::rand({1, 5, 5, 3}, torch::kDouble);
  auto x_hat = torch::rand({1, 5, 5, 3}, torch::kDouble).requires_grad_(true);
  auto bits = torch::rand({1, 5, 5, 4}, torch::kDouble).mul(3).requires_grad_(true);
  auto rd = rd_loss(x, x_hat, bits, torch::zeros({1}, torch::kDouble), 0.07, 5, 5);
  EXPECT_DOUBLE_EQ(rd.total, rd.d_mse + 0.07 * rd.r_bpp);
  rd.loss.backward();
  EXPECT_LT((x_hat.grad() - 2.0 * (x_hat - x).detach() / 75.0).abs().max().item<double>(), 1e-12);
  EXPECT_LT((bits.grad() - 0.07 / 25.0).abs().max().item<double>(), 1e-15);
}

TEST(LrScheduleTest, FinalPhaseBoundaries) {
  TrainConfig cfg;
  cfg.total_steps = 2000000;
  EXPECT_EQ(lr_schedule(1799999, cfg), 1e-4);
  EXPECT_EQ(lr_schedule(1800000, cfg), 1e-5);
  cfg.total_steps = 1000;
  EXPECT_EQ(lr_schedule(950, cfg), 1e-5);
  EXPECT_EQ(lr_schedule(899, cfg), 1e-4);
  EXPECT_EQ(lr_schedule(900, cfg), 1e-5);
}

TEST(LrScheduleTest, NonIncreasingAndTwoValued) {
  for (int64_t total : {1, 7, 10, 999, 12345}) {
    for (double f : {0.0, 0.1, 0.33, 1.0}) {
      TrainConfig cfg;
      cfg.total_steps = total;
      cfg.final_phase_fraction = f;
      double prev = lr_schedule(0, cfg);
      for (int64_t s = 0; s < total; ++s) {
        const double lr = lr_schedule(s, cfg);
        EXPECT_TRUE(lr == cfg.lr_initial || lr == cfg.lr_final);
        EXPECT_LE(lr, prev);
        prev = lr;
      }
    }
  }
}

TEST(TrainConfigTest, ParsesKeyValueText) {
  const auto cfg = parse_train_config(
      "# desk run\nmodel = tiny\nquality_id = 2\ntotal_steps = 1234\ncrop = 128  # small\n"
      "seed = 9\nscale_adaptation = false\n");
  EXPECT_EQ(cfg.model, "tiny");
  EXPECT_EQ(cfg.quality_id, 2);
  EXPECT_DOUBLE_EQ(cfg.lambda, 20e-5);
  EXPECT_EQ(cfg.total_steps, 1234);
  EXPECT_EQ(cfg.crop, 128);
  EXPECT_EQ(cfg.seed, 9u);
  EXPECT_FALSE(cfg.scale_adaptation);
  EXPECT_EQ(cfg.batch_size, 8);
  EXPECT_EQ(cfg.lr_initial, 1e-4);
  EXPECT_EQ(cfg.adam_beta2, 0.999);
  const auto again = parse_train_config(format_train_config(cfg));
  EXPECT_EQ(format_train_config(again), format_train_config(cfg));
}

TEST(TrainConfigTest, RejectsInvalidInput) {
  EXPECT_THROW(parse_train_config("lamda = 0.1\n"), ConfigError);
  EXPECT_THROW(parse_train_config("lambda = -1\n"), ConfigError);
  EXPECT_THROW(parse_train_config("total_steps = 0\n"), ConfigError);
  EXPECT_THROW(parse_train_config("total_steps = ten\n"), ConfigError);
  EXPECT_THROW(parse_train_config("model = huge\n"), ConfigError);
  EXPECT_THROW(parse_train_config("just text\n"), ConfigError);
  EXPECT_THROW(parse_train_config("quality_id = 7\n"), ConfigError);
}

TEST(LambdaSweepTest, QualityIdsMapToSweep) {
  for (size_t q = 0; q < kLambdaSweep.size(); ++q) {
    const auto cfg = parse_train_config("quality_id = " + std::to_string(q) + "\n");
    EXPECT_EQ(cfg.lambda, kLambdaSweep[q]);
  }
  EXPECT_EQ(kLambdaSweep[0], 1000e-5);
  EXPECT_EQ(kLambdaSweep[3], 3e-5);
}

class DatasetTest : public ::testing::Test {
 protected:
  void SetUp() override {
    write_synthetic_dataset(dir_.path().string(), 5, 260, 300, 51);
    write_png(dir_.file("tiny.png"), synthesize_image(40, 300, 1));
  }
  TempDir dir_{"dataset"};
};

TEST_F(DatasetTest, SkipsUndersizedImagesWithWarning) {
  std::ostringstream warn;
  const auto ds = ImageDataset::load(dir_.path().string(), 256, &warn);
  EXPECT_EQ(ds.size(), 5u);
  EXPECT_NE(warn.str().find("tiny.png"), std::string::npos);
}

TEST_F(DatasetTest, BatchShapeDeterminismAndIndexReplay) {
  const auto ds = ImageDataset::load(dir_.path().string(), 256);
  TrainConfig cfg;
  std::mt19937_64 a(77), b(77);
  const auto ba = sample_batch(ds, cfg, a);
  const auto bb = sample_batch(ds, cfg, b);
  ASSERT_EQ(ba.images.sizes(), (std::vector<int64_t>{8, 256, 256, 3}));
  EXPECT_TRUE(ba.images.equal(bb.images));
  EXPECT_GE(ba.images.min().item<double>(), 0.0);
  EXPECT_LE(ba.images.max().item<double>(), 1.0);
  for (size_t k = 0; k < ba.locations.size(); ++k) {
    const auto& loc = ba.locations[k];
    const auto src = to_tensor(ds.image(loc.image))
                         .slice(0, loc.top, loc.top + 256)
                         .slice(1, loc.left, loc.left + 256);
    EXPECT_TRUE(ba.images[static_cast<int64_t>(k)].equal(src)) << k;
    EXPECT_LE(loc.top, 260 - 256);
    EXPECT_LE(loc.left, 300 - 256);
  }
}

class TrainLoopTest : public ::testing::Test {
 protected:
  void SetUp() override {
    write_synthetic_dataset(data_.path().string(), 8, 96, 96, 61);
    cfg_.model = "tiny";
    cfg_.lambda = kLambdaSweep[1];
    cfg_.batch_size = 2;
    cfg_.crop = 64;
    cfg_.log_every = 1;
    cfg_.checkpoint_every = 1000;
    cfg_.seed = 5;
  }
  TempDir data_{"train_data"};
  TempDir out_{"train_out"};
  TrainConfig cfg_;
};

TEST_F(TrainLoopTest, LossDecreasesOverShortRun) {
  cfg_.total_steps = 500;
  torch::manual_seed(1);
  Codec model(tiny_config());
  const auto res = train(model, cfg_, data_.path().string(), out_.path().string());
  ASSERT_EQ(res.log.size(), 500u);
  double head = 0.0, tail = 0.0;
  for (size_t i = 0; i < 50; ++i) {
    head += res.log[i].loss;
    tail += res.log[res.log.size() - 1 - i].loss;
  }
  EXPECT_LT(tail, head);
  for (const auto& r : res.log) EXPECT_DOUBLE_EQ(r.loss, r.d_mse + cfg_.lambda * r.r_bpp);
  const auto csv = read_metrics_csv(out_.file("metrics.csv"));
  EXPECT_EQ(csv.size(), 500u);
  EXPECT_EQ(csv.back().step, 499);
  EXPECT_EQ(read_checkpoint_meta(res.checkpoint_path).step, 500);
  // The loaded checkpoint must reproduce the trained weights exactly.
  auto loaded = load_checkpoint(res.checkpoint_path);
  auto a = model->parameters(), b = loaded.model->parameters();
  ASSERT_EQ(a.size(), b.size());
  for (size_t i = 0; i < a.size(); ++i) EXPECT_TRUE(a[i].equal(b[i]));
}

TEST_F(TrainLoopTest, ResumeReproducesUninterruptedTrace) {
  cfg_.total_steps = 8;
  torch::manual_seed(2);
  Codec full(tiny_config());
  torch::manual_seed(2);
  Codec split(tiny_config());
  TempDir other("train_other");
  const auto ref = train(full, cfg_, data_.path().string(), other.path().string());

  TrainOptions first;
  first.stop_after = 3;
  const auto part1 = train(split, cfg_, data_.path().string(), out_.path().string(), first);
  EXPECT_EQ(part1.steps_done, 3);
  torch::manual_seed(999);  // fresh process state must not matter
  Codec resumed(tiny_config());
  TrainOptions second;
  second.resume = true;
  const auto part2 = train(resumed, cfg_, data_.path().string(), out_.path().string(), second);
  ASSERT_EQ(part1.log.size() + part2.log.size(), ref.log.size());
  for (size_t i = 0; i < ref.log.size(); ++i) {
    const auto& r = i < 3 ? part1.log[i] : part2.log[i - 3];
    EXPECT_EQ(r.step, ref.log[i].step);
    EXPECT_EQ(r.loss, ref.log[i].loss) << "step " << i;
    EXPECT_EQ(r.lr, ref.log[i].lr);
  }
  EXPECT_EQ(read_metrics_csv(out_.file("metrics.csv")).size(), 8u);
}

TEST_F(TrainLoopTest, NonFiniteStateAborts) {
  cfg_.total_steps = 3;
  Codec model(tiny_config());
  {
    torch::NoGradGuard ng;
    model->synthesis->parameters().front().fill_(std::numeric_limits<float>::quiet_NaN());
  }
  EXPECT_THROW(train(model, cfg_, data_.path().string(), out_.path().string()), NumericError);
}

TEST_F(TrainLoopTest, MismatchedModelIsConfigError) {
  cfg_.total_steps = 1;
  Codec model(micro_config());
  EXPECT_THROW(train(model, cfg_, data_.path().string(), out_.path().string()), ConfigError);
}

}  // namespace
}  // namespace aict
