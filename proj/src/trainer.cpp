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

#include "dida/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "dida/checkpoint.hpp"
#include "dida/config.hpp"

namespace dida {
namespace fs = std::filesystem;

std::string to_string(TrainMethod method) {
  return method == TrainMethod::kDida ? "dida" : "self_training";
}

TrainMethod parse_train_method(std::string_view name) {
  if (name == "dida") return TrainMethod::kDida;
  if (name == "self_training") return TrainMethod::kSelfTraining;
  throw std::invalid_argument("unknown training method '" + std::string(name) +
                              "' (expected dida or self_training)");
}

std::string to_string(DiffusionLrGroup group) {
  return group == DiffusionLrGroup::kEncoder ? "encoder" : "decoder";
}

DiffusionLrGroup parse_diffusion_lr_group(std::string_view name) {
  if (name == "encoder") return DiffusionLrGroup::kEncoder;
  if (name == "decoder") return DiffusionLrGroup::kDecoder;
  throw std::invalid_argument("unknown diffusion lr group '" + std::string(name) +
                              "' (expected encoder or decoder)");
}

void TrainConfig::validate() const {
  if (iterations < 1) throw std::invalid_argument("iterations must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (T < 1) throw std::invalid_argument("T must be >= 1");
  if (!(ema_beta >= 0.0 && ema_beta < 1.0)) {
    throw std::invalid_argument("ema_beta must satisfy 0 <= ema_beta < 1");
  }
  if (warmup_iters < 0 || warmup_iters > iterations) {
    throw std::invalid_argument("warmup_iters must lie in [0, iterations]");
  }
  if (lambda_D < 0.0 || lambda_R < 0.0) throw std::invalid_argument("loss weights must be >= 0");
  if (lr_encoder < 0.0 || lr_decoder < 0.0 || weight_decay < 0.0) {
    throw std::invalid_argument("learning rates and weight decay must be >= 0");
  }
  if (checkpoint_every < 0) throw std::invalid_argument("checkpoint_every must be >= 0");
  if (num_threads < 1) throw std::invalid_argument("num_threads must be >= 1");
  model.validate();
}

Degrader make_degrader(const TrainConfig& config) {
  Degrader d;
  d.mode = config.mode;
  d.schedule = build_schedule(config.schedule, config.T);
  if (config.mode == DegradationMode::kBlur) {
    d.blur = build_blur_chain(config.T, config.blur_kernel_size, config.blur_base_std,
                              config.blur_growth_rate);
  }
  d.cowmask_std = config.cowmask_std;
  return d;
}

double warmup_lr(double base_lr, std::int64_t iteration, std::int64_t warmup_iters) {
  if (warmup_iters <= 0 || iteration > warmup_iters) return base_lr;
  return base_lr * static_cast<double>(iteration) / static_cast<double>(warmup_iters);
}

ModelBundle make_bundle(const TrainConfig& config) {
  ModelConfig model = config.model;
  model.max_timestep = config.T;
  torch::manual_seed(mix_seed(config.seed, SeedStream::kModelInit, 0));
  return ModelBundle(model);
}

namespace {

std::unique_ptr<torch::optim::AdamW> make_optimizer(ModelBundle& bundle,
                                                    const TrainConfig& config) {
  std::vector<torch::Tensor> encoder = bundle->student->encoder->parameters();
  std::vector<torch::Tensor> head = bundle->student->head->parameters();
  auto diffusion = bundle->diffusion_encoder->parameters();
  auto& diffusion_group = config.diffusion_lr_group == DiffusionLrGroup::kEncoder ? encoder : head;
  diffusion_group.insert(diffusion_group.end(), diffusion.begin(), diffusion.end());
  for (auto& p : bundle->reconstruction_head->parameters()) head.push_back(p);

  auto options = [&](double lr) {
    return std::make_unique<torch::optim::AdamWOptions>(
        torch::optim::AdamWOptions(lr).weight_decay(config.weight_decay));
  };
  std::vector<torch::optim::OptimizerParamGroup> groups;
  groups.emplace_back(encoder, options(config.lr_encoder));
  groups.emplace_back(head, options(config.lr_decoder));
  return std::make_unique<torch::optim::AdamW>(
      std::move(groups), torch::optim::AdamWOptions(config.lr_encoder)
                             .weight_decay(config.weight_decay));
}

// Sets both group LRs for the 1-based iteration and returns the encoder LR.
double apply_schedule(torch::optim::AdamW& optimizer, const TrainConfig& config,
                      std::int64_t iteration) {
  const double lr_enc = warmup_lr(config.lr_encoder, iteration, config.warmup_iters);
  const double lr_dec = warmup_lr(config.lr_decoder, iteration, config.warmup_iters);
  auto& groups = optimizer.param_groups();
  static_cast<torch::optim::AdamWOptions&>(groups[0].options()).lr(lr_enc);
  static_cast<torch::optim::AdamWOptions&>(groups[1].options()).lr(lr_dec);
  return lr_enc;
}

void check_batches(const Batch& source, const Batch& target) {
  if (!source.images.defined() || source.images.size(0) == 0 || !target.images.defined() ||
      target.images.size(0) == 0) {
    throw std::invalid_argument("training batches must be non-empty");
  }
  if (!source.labels.defined()) throw std::invalid_argument("source batch carries no labels");
}

LossWeights weights_for(const TrainState& state, const TrainConfig& config) {
  LossWeights w = state.weights;
  w.lambda_D = config.lambda_D;
  w.lambda_R = config.lambda_R;
  return w;
}

}  // namespace

TrainState::TrainState(const TrainConfig& config, ModelBundle b)
    : bundle(std::move(b)),
      optimizer(make_optimizer(bundle, config)),
      degrader(make_degrader(config)),
      weights(LossWeights::for_schedule(degrader.schedule, config.mode, config.lambda_D,
                                        config.lambda_R, config.snr_cap)) {
  if (bundle->config.max_timestep != config.T) {
    throw std::invalid_argument("model max_timestep differs from the training T");
  }
}

StepRecord train_step(TrainState& state, const Batch& source, const Batch& target,
                      const TrainConfig& config, Rng& rng) {
  check_batches(source, target);
  auto& bundle = state.bundle;
  StepRecord record;
  record.iteration = state.iteration + 1;
  record.lr = apply_schedule(*state.optimizer, config, record.iteration);
  state.optimizer->zero_grad(true);
  bundle->train();

  LossComponents c;
  c.supervised = supervised_loss(bundle, source.images, source.labels);
  auto adapt = adaptation_loss(bundle, target.images, config.pseudo_threshold);
  c.adaptation = adapt.loss;

  const auto t = sample_timestep(rng, config.T);
  const auto ds = state.degrader.apply(source.images, t, rng);
  const auto dt = state.degrader.apply(target.images, t, rng);
  const auto ns = source.images.size(0);
  const auto nt = target.images.size(0);
  const auto bridged =
      bundle->forward_bridged_both(torch::cat({ds.x_t, dt.x_t}), bundle->timestep_tensor(t, ns + nt));
  c.consistency = dic_loss_from_logits(bridged.logits.narrow(0, 0, ns), source.labels,
                                       bridged.logits.narrow(0, ns, nt), adapt.pseudo);
  const ReconstructionTarget recon_target{downsample_target(torch::cat({ds.target, dt.target})),
                                          ds.mode};
  const auto weights = weights_for(state, config);
  c.reconstruction = reconstruction_loss(bridged.reconstruction, recon_target, config.mode,
                                         weights.lambda_t.at(static_cast<std::size_t>(t)));

  const auto total = total_loss(c, weights);
  total.backward();
  state.optimizer->step();
  ema_update(bundle->teacher, bundle->student, config.ema_beta);
  state.iteration = record.iteration;

  record.t = t;
  record.loss_S = c.supervised.item<double>();
  record.loss_T = c.adaptation.item<double>();
  record.loss_D = c.consistency.item<double>();
  record.loss_R = c.reconstruction.item<double>();
  record.loss_total = total.item<double>();
  record.q_mean = adapt.pseudo.confidence.mean().item<double>();
  return record;
}

StepRecord self_training_step(TrainState& state, const Batch& source, const Batch& target,
                              const TrainConfig& config) {
  check_batches(source, target);
  auto& bundle = state.bundle;
  StepRecord record;
  record.iteration = state.iteration + 1;
  record.lr = apply_schedule(*state.optimizer, config, record.iteration);
  state.optimizer->zero_grad(true);
  bundle->train();

  LossComponents c;
  c.supervised = supervised_loss(bundle, source.images, source.labels);
  auto adapt = adaptation_loss(bundle, target.images, config.pseudo_threshold);
  c.adaptation = adapt.loss;
  const auto total = total_loss(c, weights_for(state, config));
  total.backward();
  state.optimizer->step();
  ema_update(bundle->teacher, bundle->student, config.ema_beta);
  state.iteration = record.iteration;

  record.loss_S = c.supervised.item<double>();
  record.loss_T = c.adaptation.item<double>();
  record.loss_total = total.item<double>();
  record.q_mean = adapt.pseudo.confidence.mean().item<double>();
  return record;
}

BatchSampler::BatchSampler(std::vector<const SegSample*> source,
                           std::vector<const SegSample*> target, const TrainConfig& config)
    : source_(std::move(source)), target_(std::move(target)), config_(config) {
  const auto shorter = static_cast<std::int64_t>(std::min(source_.size(), target_.size()));
  steps_per_epoch_ = shorter / config_.batch_size;
  if (steps_per_epoch_ < 1) {
    throw std::invalid_argument("each training domain needs at least batch_size samples");
  }
}

std::vector<std::int64_t> BatchSampler::permutation(SeedStream stream, std::int64_t epoch,
                                                    std::int64_t n) const {
  Rng rng(mix_seed(config_.seed, stream, static_cast<std::uint64_t>(epoch)));
  const auto perm = torch::randperm(n, rng.generator(), torch::kInt64);
  return {perm.data_ptr<std::int64_t>(), perm.data_ptr<std::int64_t>() + n};
}

Batch BatchSampler::assemble(const std::vector<const SegSample*>& pool, SeedStream stream,
                             std::int64_t iteration, bool labelled) const {
  const auto step = iteration - 1;
  const auto epoch = step / steps_per_epoch_;
  const auto offset = (step % steps_per_epoch_) * config_.batch_size;
  const auto perm = permutation(stream, epoch, static_cast<std::int64_t>(pool.size()));
  const std::uint64_t domain_bit = stream == SeedStream::kShuffleTarget ? 1 : 0;

  std::vector<torch::Tensor> images;
  std::vector<torch::Tensor> labels;
  for (std::int64_t j = 0; j < config_.batch_size; ++j) {
    const SegSample& sample = *pool[static_cast<std::size_t>(perm[offset + j])];
    torch::Tensor image = sample.image();
    torch::Tensor label;
    if (labelled) {
      auto l = sample.training_label();
      if (!l) throw std::invalid_argument("source sample " + sample.id() + " has no label");
      label = *l;
    }
    if (config_.augment) {
      const auto index = (static_cast<std::uint64_t>(step) * 2 + domain_bit) *
                             static_cast<std::uint64_t>(config_.batch_size) +
                         static_cast<std::uint64_t>(j);
      Rng rng(mix_seed(config_.seed, SeedStream::kAugment, index));
      augment_in_place(image, labelled ? &label : nullptr, rng, config_.augment_options);
    }
    images.push_back(image);
    if (labelled) labels.push_back(label);
  }
  Batch batch;
  batch.images = torch::stack(images).contiguous();
  if (labelled) batch.labels = torch::stack(labels).contiguous();
  return batch;
}

std::pair<Batch, Batch> BatchSampler::batches(std::int64_t iteration) const {
  if (iteration < 1) throw std::out_of_range("iterations are 1-based");
  return {assemble(source_, SeedStream::kShuffleSource, iteration, true),
          assemble(target_, SeedStream::kShuffleTarget, iteration, false)};
}

Trainer::Trainer(TrainConfig config, const LoadedDataset& dataset)
    : config_(std::move(config)),
      sampler_(dataset.split("source_train"), dataset.split("target_train"), config_) {
  config_.validate();
  torch::set_num_threads(static_cast<int>(config_.num_threads));
  if (dataset.manifest.num_classes != config_.model.num_classes) {
    throw std::invalid_argument("dataset has " + std::to_string(dataset.manifest.num_classes) +
                                " classes but the model is configured for " +
                                std::to_string(config_.model.num_classes));
  }
  state_ = std::make_unique<TrainState>(config_, make_bundle(config_));
}

void Trainer::resume(const fs::path& checkpoint) {
  const auto meta = load_checkpoint(checkpoint, state_->bundle, state_->optimizer.get());
  if (meta.T != config_.T || meta.schedule != config_.schedule || meta.mode != config_.mode) {
    throw std::runtime_error(checkpoint.string() +
                             ": schedule, T or degradation mode differ from the config");
  }
  if (meta.iteration > config_.iterations) {
    throw std::runtime_error(checkpoint.string() + ": checkpoint is past the configured iterations");
  }
  state_->iteration = meta.iteration;
}

StepRecord Trainer::step(std::int64_t iteration, const StepCallback& callback) {
  const auto [source, target] = sampler_.batches(iteration);
  StepRecord record;
  if (config_.method == TrainMethod::kDida) {
    Rng rng(mix_seed(config_.seed, SeedStream::kDegrade, static_cast<std::uint64_t>(iteration)));
    record = train_step(*state_, source, target, config_, rng);
  } else {
    record = self_training_step(*state_, source, target, config_);
  }
  if (callback) callback(source, target, record);
  return record;
}

fs::path Trainer::write_checkpoint() {
  char name[64];
  std::snprintf(name, sizeof(name), "checkpoint_%06lld.pt",
                static_cast<long long>(state_->iteration));
  const auto path = config_.checkpoint_dir() / name;
  CheckpointMeta meta;
  meta.schedule = config_.schedule;
  meta.T = config_.T;
  meta.mode = config_.mode;
  meta.iteration = state_->iteration;
  meta.train_config_json = train_config_to_json(config_);
  save_checkpoint(path, state_->bundle, meta, state_->optimizer.get());
  return path;
}

TrainResult Trainer::run(const StepCallback& callback) {
  fs::create_directories(config_.output_dir);
  const bool fresh = state_->iteration == 0;
  std::ofstream metrics(config_.metrics_path(), fresh ? std::ios::trunc : std::ios::app);
  if (!metrics) throw std::runtime_error("cannot open metrics log " + config_.metrics_path().string());
  if (fresh) metrics << metrics_header() << '\n';

  TrainResult result;
  for (auto it = state_->iteration + 1; it <= config_.iterations; ++it) {
    result.records.push_back(step(it, callback));
    metrics << format_record(result.records.back()) << '\n';
    metrics.flush();
    if (!metrics) throw std::runtime_error("write failed: " + config_.metrics_path().string());
    const bool periodic = config_.checkpoint_every > 0 && it % config_.checkpoint_every == 0;
    if (periodic || it == config_.iterations) result.checkpoints.push_back(write_checkpoint());
  }
  if (result.checkpoints.empty()) result.checkpoints.push_back(write_checkpoint());
  result.final_checkpoint = result.checkpoints.back();
  return result;
}

std::string metrics_header() { return "iteration,t,loss_S,loss_T,loss_D,loss_R,loss_total,q_mean,lr"; }

std::string format_record(const StepRecord& r) {
  char line[512];
  std::snprintf(line, sizeof(line), "%lld,%lld,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g",
                static_cast<long long>(r.iteration), static_cast<long long>(r.t), r.loss_S,
                r.loss_T, r.loss_D, r.loss_R, r.loss_total, r.q_mean, r.lr);
  return line;
}

}  // namespace dida
