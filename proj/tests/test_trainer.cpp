// Copyright 2026 The dida Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "dida/checkpoint.hpp"
#include "dida/trainer.hpp"
#include "test_support.hpp"

namespace dida {
namespace {

namespace fs = std::filesystem;

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<torch::Tensor> snapshot(const std::vector<torch::Tensor>& params) {
  std::vector<torch::Tensor> out;
  for (const auto& p : params) out.push_back(p.detach().clone());
  return out;
}

bool all_equal(const std::vector<torch::Tensor>& a, const std::vector<torch::Tensor>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!torch::equal(a[i], b[i])) return false;
  }
  return true;
}

class TrainerTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    root_ = new fs::path(testing::scratch_dir("trainer"));
    BenchmarkConfig bc;
    bc.height = 32;
    bc.width = 32;
    bc.counts = {12, 12, 4};
    generate_benchmark(bc, *root_ / "data");
    data_ = new LoadedDataset(load_dataset(*root_ / "data" / "manifest.json"));
  }
  static void TearDownTestSuite() {
    delete data_;
    fs::remove_all(*root_);
    delete root_;
  }

  TrainConfig config(const std::string& name, std::int64_t iterations) const {
    TrainConfig c;
    c.iterations = iterations;
    c.batch_size = 2;
    c.T = 10;
    c.warmup_iters = std::min<std::int64_t>(2, iterations);
    c.checkpoint_every = 0;
    c.model.widths = {8, 8, 8};
    c.model.decoder_dim = 8;
    c.model.reconstruction_dim = 8;
    c.model.time_dim = 16;
    c.model.norm_groups = 4;
    c.output_dir = *root_ / name;
    return c;
  }

  static fs::path* root_;
  static LoadedDataset* data_;
};

fs::path* TrainerTest::root_ = nullptr;
LoadedDataset* TrainerTest::data_ = nullptr;

TEST(WarmupLr, LinearThenConstant) {
  EXPECT_DOUBLE_EQ(warmup_lr(6e-5, 1, 150), 6e-5 / 150);
  EXPECT_DOUBLE_EQ(warmup_lr(6e-5, 75, 150), 6e-5 * 75 / 150);
  EXPECT_DOUBLE_EQ(warmup_lr(6e-5, 150, 150), 6e-5);
  EXPECT_DOUBLE_EQ(warmup_lr(6e-5, 4000, 150), 6e-5);
  EXPECT_DOUBLE_EQ(warmup_lr(6e-4, 1, 0), 6e-4);
}

TEST(TrainConfigValidation, RejectsInvariantViolations) {
  TrainConfig c;
  EXPECT_NO_THROW(c.validate());
  auto bad = c;
  bad.iterations = 0;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  bad = c;
  bad.ema_beta = 1.0;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  bad = c;
  bad.warmup_iters = c.iterations + 1;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
}

TEST_F(TrainerTest, SingleIterationWritesOneRecordAndCheckpoint) {
  auto c = config("single", 1);
  Trainer trainer(c, *data_);
  const auto result = trainer.run();
  ASSERT_EQ(result.records.size(), 1u);
  ASSERT_EQ(result.checkpoints.size(), 1u);
  EXPECT_TRUE(fs::exists(result.final_checkpoint));
  std::ifstream in(c.metrics_path());
  std::string line;
  int lines = 0;
  while (std::getline(in, line)) ++lines;
  EXPECT_EQ(lines, 2);
  EXPECT_EQ(read_checkpoint_meta(result.final_checkpoint).iteration, 1);
}

TEST_F(TrainerTest, LrColumnFollowsWarmup) {
  auto c = config("warmup", 4);
  c.warmup_iters = 4;
  const auto result = Trainer(c, *data_).run();
  for (const auto& r : result.records) {
    EXPECT_DOUBLE_EQ(r.lr, c.lr_encoder * static_cast<double>(r.iteration) / 4.0);
  }
}

TEST_F(TrainerTest, TotalRecomposesFromComponents) {
  auto c = config("recompose", 3);
  const auto result = Trainer(c, *data_).run();
  for (const auto& r : result.records) {
    EXPECT_GE(r.t, 1);
    EXPECT_LE(r.t, c.T);
    const double recomposed = r.loss_S + r.loss_T + c.lambda_D * r.loss_D + c.lambda_R * r.loss_R;
    EXPECT_NEAR(r.loss_total, recomposed, 1e-6 * std::max(1.0, std::abs(recomposed)));
  }
}

TEST_F(TrainerTest, SameSeedGivesIdenticalMetrics) {
  auto a = config("det_a", 3);
  auto b = config("det_b", 3);
  Trainer(a, *data_).run();
  Trainer(b, *data_).run();
  EXPECT_EQ(slurp(a.metrics_path()), slurp(b.metrics_path()));
  auto other = config("det_c", 3);
  other.seed = 1;
  Trainer(other, *data_).run();
  EXPECT_NE(slurp(a.metrics_path()), slurp(other.metrics_path()));
}

TEST_F(TrainerTest, ZeroBridgeWeightsMatchSelfTrainingBitwise) {
  auto dida_cfg = config("zero_dida", 5);
  dida_cfg.lambda_D = 0.0;
  dida_cfg.lambda_R = 0.0;
  auto st_cfg = config("zero_st", 5);
  st_cfg.method = TrainMethod::kSelfTraining;
  st_cfg.lambda_D = 0.0;
  st_cfg.lambda_R = 0.0;

  Trainer dida_trainer(dida_cfg, *data_);
  Trainer st_trainer(st_cfg, *data_);
  std::vector<std::vector<torch::Tensor>> a;
  std::vector<std::vector<torch::Tensor>> b;
  dida_trainer.run([&](const Batch&, const Batch&, const StepRecord&) {
    a.push_back(snapshot(dida_trainer.state().bundle->student->parameters()));
  });
  st_trainer.run([&](const Batch&, const Batch&, const StepRecord&) {
    b.push_back(snapshot(st_trainer.state().bundle->student->parameters()));
  });
  ASSERT_EQ(a.size(), 5u);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_TRUE(all_equal(a[i], b[i])) << "step " << i + 1;
}

TEST_F(TrainerTest, TeacherFollowsEmaRecurrence) {
  auto c = config("ema", 6);
  c.ema_beta = 0.9;
  Trainer trainer(c, *data_);
  auto teacher = snapshot(trainer.state().bundle->teacher->parameters());
  for (auto& p : teacher) p = p.to(torch::kFloat64);
  double worst = 0.0;
  trainer.run([&](const Batch&, const Batch&, const StepRecord&) {
    const auto s = trainer.state().bundle->student->parameters();
    const auto t = trainer.state().bundle->teacher->parameters();
    for (std::size_t i = 0; i < s.size(); ++i) {
      teacher[i] = (c.ema_beta * teacher[i] + (1 - c.ema_beta) * s[i].detach().to(torch::kFloat64))
                       .to(t[i].scalar_type())
                       .to(torch::kFloat64);
      worst = std::max(worst, (teacher[i] - t[i].to(torch::kFloat64)).abs().max().item<double>());
    }
  });
  EXPECT_LE(worst, 1e-7);
}

TEST_F(TrainerTest, ResumeMatchesUninterruptedRun) {
  auto full = config("resume_full", 4);
  full.checkpoint_every = 2;
  const auto full_result = Trainer(full, *data_).run();
  ASSERT_EQ(full_result.checkpoints.size(), 2u);

  auto part = config("resume_part", 4);
  Trainer resumed(part, *data_);
  resumed.resume(full_result.checkpoints.front());
  const auto rest = resumed.run();
  ASSERT_EQ(rest.records.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(format_record(rest.records[i]), format_record(full_result.records[i + 2]));
  }
  auto reference = load_bundle(full_result.final_checkpoint);
  EXPECT_TRUE(all_equal(resumed.state().bundle->parameters(), reference->parameters()));
}

TEST_F(TrainerTest, ResumeKeepsNewLossWeight) {
  auto first = config("reweight_a", 2);
  const auto ckpt = Trainer(first, *data_).run().final_checkpoint;
  auto second = config("reweight_b", 3);
  second.lambda_D = 2.0;
  Trainer trainer(second, *data_);
  trainer.resume(ckpt);
  const auto rec = trainer.run().records.at(0);
  EXPECT_EQ(rec.iteration, 3);
  EXPECT_NEAR(rec.loss_total, rec.loss_S + rec.loss_T + 2.0 * rec.loss_D + 5.0 * rec.loss_R,
              1e-5);
}

TEST_F(TrainerTest, ResumeRefusesOtherArchitectureOrSchedule) {
  auto first = config("refuse_a", 1);
  const auto ckpt = Trainer(first, *data_).run().final_checkpoint;
  auto wide = config("refuse_b", 2);
  wide.model.widths = {8, 16, 16};
  Trainer other(wide, *data_);
  try {
    other.resume(ckpt);
    FAIL() << "expected refusal";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("architecture hash"), std::string::npos);
  }
  auto blur = config("refuse_c", 2);
  blur.mode = DegradationMode::kBlur;
  Trainer blurred(blur, *data_);
  EXPECT_THROW(blurred.resume(ckpt), std::runtime_error);
}

TEST_F(TrainerTest, CheckpointRoundTripIsBitExact) {
  auto c = config("roundtrip", 2);
  Trainer trainer(c, *data_);
  const auto result = trainer.run();
  CheckpointMeta meta;
  auto loaded = load_bundle(result.final_checkpoint, &meta);
  EXPECT_EQ(meta.iteration, 2);
  EXPECT_EQ(meta.T, 10);
  EXPECT_EQ(meta.architecture_hash, trainer.state().bundle->config.architecture_hash());
  const auto a = trainer.state().bundle->named_parameters();
  const auto b = loaded->named_parameters();
  ASSERT_EQ(a.size(), b.size());
  for (const auto& p : a) EXPECT_TRUE(torch::equal(p.value(), b[p.key()])) << p.key();
}

TEST_F(TrainerTest, SamplerIsDeterministicAndCoversEpoch) {
  auto c = config("sampler", 10);
  c.augment = false;
  BatchSampler s(data_->split("source_train"), data_->split("target_train"), c);
  EXPECT_EQ(s.steps_per_epoch(), 6);
  const auto [s1, t1] = s.batches(1);
  const auto [s2, t2] = s.batches(1);
  EXPECT_TRUE(torch::equal(s1.images, s2.images));
  EXPECT_TRUE(torch::equal(t1.images, t2.images));
  EXPECT_FALSE(t1.labels.defined());
  EXPECT_EQ(s1.labels.sizes(), (std::vector<std::int64_t>{2, 32, 32}));
}

}  // namespace
}  // namespace dida
