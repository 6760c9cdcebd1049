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

#ifndef DIDA_TRAINER_HPP_
#define DIDA_TRAINER_HPP_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "dida/dataset.hpp"
#include "dida/degradation.hpp"
#include "dida/model.hpp"
#include "dida/objectives.hpp"
#include "dida/rng.hpp"
#include "dida/schedule.hpp"

namespace dida {

enum class TrainMethod { kDida, kSelfTraining };
std::string to_string(TrainMethod method);
TrainMethod parse_train_method(std::string_view name);

// Which optimizer group the diffusion encoder g' joins.
enum class DiffusionLrGroup { kEncoder, kDecoder };
std::string to_string(DiffusionLrGroup group);
DiffusionLrGroup parse_diffusion_lr_group(std::string_view name);

struct TrainConfig {
  TrainMethod method = TrainMethod::kDida;
  std::int64_t iterations = 4000;
  std::int64_t batch_size = 4;  // per domain
  std::int64_t T = 100;
  ScheduleKind schedule = ScheduleKind::kSigmoid;
  DegradationMode mode = DegradationMode::kNoise;
  double lambda_D = 0.5;
  double lambda_R = 5.0;
  double snr_cap = kDefaultSnrCap;
  double ema_beta = 0.999;
  double lr_encoder = 6e-5;
  double lr_decoder = 6e-4;
  double weight_decay = 0.01;
  std::int64_t warmup_iters = 150;
  std::uint64_t seed = 0;
  double pseudo_threshold = kDefaultPseudoThreshold;
  DiffusionLrGroup diffusion_lr_group = DiffusionLrGroup::kEncoder;

  std::int64_t blur_kernel_size = 9;
  double blur_base_std = 0.5;
  double blur_growth_rate = 0.02;
  double cowmask_std = 6.0;

  bool augment = true;
  AugmentOptions augment_options;

  std::int64_t checkpoint_every = 1000;  // 0 keeps only the final checkpoint
  std::int64_t num_threads = 1;
  std::filesystem::path data_root;       // directory holding manifest.json
  std::filesystem::path output_dir = "runs/default";

  ModelConfig model;

  void validate() const;
  std::filesystem::path metrics_path() const { return output_dir / "metrics.csv"; }
  std::filesystem::path checkpoint_dir() const { return output_dir / "checkpoints"; }
};

struct StepRecord {
  std::int64_t iteration = 0;
  std::int64_t t = 0;
  double loss_S = 0.0;
  double loss_T = 0.0;
  double loss_D = 0.0;
  double loss_R = 0.0;
  double loss_total = 0.0;
  double q_mean = 0.0;
  double lr = 0.0;  // encoder-group learning rate used for this step
};

struct Batch {
  torch::Tensor images;  // (B,3,H,W)
  torch::Tensor labels;  // (B,H,W) int64, undefined for target batches
};

Degrader make_degrader(const TrainConfig& config);

// linear warmup: base * k / warmup for 1 <= k <= warmup, base afterwards.
double warmup_lr(double base_lr, std::int64_t iteration, std::int64_t warmup_iters);

/// Bundle, optimizer and iteration counter: everything a step mutates.
struct TrainState {
  TrainState(const TrainConfig& config, ModelBundle bundle);

  ModelBundle bundle;
  std::unique_ptr<torch::optim::AdamW> optimizer;
  Degrader degrader;
  LossWeights weights;
  std::int64_t iteration = 0;  // completed steps
};

// Builds a freshly initialised bundle with seed-derived weights.
ModelBundle make_bundle(const TrainConfig& config);

/// One DiDA step. Uses iteration `state.iteration + 1`, draws the timestep
/// and degradation noise from `rng`, and leaves the teacher updated by EMA.
StepRecord train_step(TrainState& state, const Batch& source, const Batch& target,
                      const TrainConfig& config, Rng& rng);

// Plain mean-teacher self-training step (L^S + L^T only).
StepRecord self_training_step(TrainState& state, const Batch& source, const Batch& target,
                              const TrainConfig& config);

/// Deterministic batch order: epochs span the shorter domain and reshuffle
/// both domains; augmentation draws from per-sample seeds.
class BatchSampler {
 public:
  BatchSampler(std::vector<const SegSample*> source, std::vector<const SegSample*> target,
               const TrainConfig& config);
  // Batches for 1-based iteration `iteration`.
  std::pair<Batch, Batch> batches(std::int64_t iteration) const;
  std::int64_t steps_per_epoch() const { return steps_per_epoch_; }

 private:
  std::vector<std::int64_t> permutation(SeedStream stream, std::int64_t epoch,
                                        std::int64_t n) const;
  Batch assemble(const std::vector<const SegSample*>& pool, SeedStream stream,
                 std::int64_t iteration, bool labelled) const;

  std::vector<const SegSample*> source_;
  std::vector<const SegSample*> target_;
  TrainConfig config_;
  std::int64_t steps_per_epoch_ = 0;
};

using StepCallback = std::function<void(const Batch& source, const Batch& target,
                                        const StepRecord& record)>;

struct TrainResult {
  std::vector<StepRecord> records;
  std::filesystem::path final_checkpoint;
  std::vector<std::filesystem::path> checkpoints;
};

class Trainer {
 public:
  Trainer(TrainConfig config, const LoadedDataset& dataset);

  // Restores bundle, optimizer and iteration counter from a checkpoint.
  // The current config (loss weights, schedule of remaining steps) stays.
  void resume(const std::filesystem::path& checkpoint);

  // Runs until config.iterations steps are complete.
  TrainResult run(const StepCallback& callback = {});

  TrainState& state() { return *state_; }
  const TrainConfig& config() const { return config_; }

 private:
  StepRecord step(std::int64_t iteration, const StepCallback& callback);
  std::filesystem::path write_checkpoint();

  TrainConfig config_;
  std::unique_ptr<TrainState> state_;
  BatchSampler sampler_;
};

std::string metrics_header();
std::string format_record(const StepRecord& record);

}  // namespace dida

#endif  // DIDA_TRAINER_HPP_
