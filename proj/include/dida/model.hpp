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

#ifndef DIDA_MODEL_HPP_
#define DIDA_MODEL_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include <torch/torch.h>

namespace dida {

namespace nn = torch::nn;

struct ModelConfig {
  std::int64_t num_classes = 4;
  std::vector<std::int64_t> widths = {32, 64, 128, 128};
  std::int64_t decoder_dim = 64;
  std::int64_t reconstruction_dim = 64;
  std::int64_t time_dim = 128;
  double time_base = 10000.0;
  std::int64_t norm_groups = 8;
  std::int64_t max_timestep = 100;

  // Stable digest of every field that changes parameter shapes or meaning.
  std::string architecture_hash() const;
  void validate() const;
};

// Transformer sinusoidal embedding: v[2i] = sin(t / base^(2i/dim)),
// v[2i+1] = cos(t / base^(2i/dim)). `t` is an int64 tensor of shape (B);
// returns (B, dim) float32.
torch::Tensor sinusoidal_embedding(const torch::Tensor& t, std::int64_t dim,
                                   double base = 10000.0);
// Single-timestep form, returns (dim) float64.
torch::Tensor time_embed(std::int64_t t, std::int64_t dim, double base = 10000.0);

// z * (scale + 1) + shift along the channel axis. z is (B,C,H,W); scale and
// shift are (B,C) or (C).
torch::Tensor apply_modulation(const torch::Tensor& z, const torch::Tensor& scale,
                               const torch::Tensor& shift);

// One encoder block: 3x3 conv, group norm, GELU, 2x average-pool downsample.
struct EncoderStageImpl : nn::Module {
  EncoderStageImpl(std::int64_t in_channels, std::int64_t out_channels, std::int64_t groups);
  // Pre-downsample activations (after the nonlinearity).
  torch::Tensor activate(const torch::Tensor& x);
  static torch::Tensor downsample(const torch::Tensor& h);

  nn::Conv2d conv{nullptr};
  nn::GroupNorm norm{nullptr};
};
TORCH_MODULE(EncoderStage);

// Hierarchical encoder. Stage i output has spatial size (H, W) / 2^(i+1).
struct EncoderImpl : nn::Module {
  explicit EncoderImpl(const ModelConfig& config);
  std::vector<torch::Tensor> forward(torch::Tensor x);

  nn::ModuleList stages{nullptr};
  std::vector<std::int64_t> widths;
};
TORCH_MODULE(Encoder);

/// Sinusoidal embedding of t, a shared two-layer trunk, then per-block
/// two-layer projectors producing the channel-wise scale and shift that
/// modulate each diffusion-encoder block.
struct TimeEmbeddingImpl : nn::Module {
  explicit TimeEmbeddingImpl(const ModelConfig& config);

  // (B) int64 timesteps -> (B, time_dim) trunk features.
  torch::Tensor embed(const torch::Tensor& t);
  torch::Tensor scale(std::int64_t block, const torch::Tensor& embedding);
  torch::Tensor shift(std::int64_t block, const torch::Tensor& embedding);
  torch::Tensor modulate(const torch::Tensor& z, const torch::Tensor& t, std::int64_t block);

  std::int64_t dim;
  double base;
  nn::Sequential trunk{nullptr};
  nn::ModuleList scale_mlps{nullptr};
  nn::ModuleList shift_mlps{nullptr};
};
TORCH_MODULE(TimeEmbedding);

// Mirror of the segmentation encoder with a modulation after each block's
// nonlinearity.
struct DiffusionEncoderImpl : nn::Module {
  explicit DiffusionEncoderImpl(const ModelConfig& config);
  std::vector<torch::Tensor> forward(torch::Tensor x, const torch::Tensor& t);

  Encoder body{nullptr};
  TimeEmbedding time{nullptr};
};
TORCH_MODULE(DiffusionEncoder);

// Projects every stage to a common width at 1/4 input resolution and sums.
struct LateralFusionImpl : nn::Module {
  LateralFusionImpl(const std::vector<std::int64_t>& widths, std::int64_t dim);
  torch::Tensor forward(const std::vector<torch::Tensor>& stages);

  nn::ModuleList laterals{nullptr};
};
TORCH_MODULE(LateralFusion);

// Segmentation head h: lateral fusion, norm + GELU, 1x1 classifier, x4
// bilinear upsampling to input resolution.
struct SegHeadImpl : nn::Module {
  explicit SegHeadImpl(const ModelConfig& config);
  torch::Tensor forward(const std::vector<torch::Tensor>& stages);

  LateralFusion fusion{nullptr};
  nn::GroupNorm norm{nullptr};
  nn::Conv2d classifier{nullptr};
};
TORCH_MODULE(SegHead);

// Reconstruction head h': lateral fusion, three dilated 3x3 branches
// (dilation 1, 2, 4) summed, then a linear 1x1 projector to 3 channels at
// 1/4 input resolution.
struct ReconstructionHeadImpl : nn::Module {
  explicit ReconstructionHeadImpl(const ModelConfig& config);
  torch::Tensor forward(const std::vector<torch::Tensor>& stages);

  LateralFusion fusion{nullptr};
  nn::GroupNorm norm{nullptr};
  nn::ModuleList branches{nullptr};
  nn::Conv2d projector{nullptr};
};
TORCH_MODULE(ReconstructionHead);

// f = h o g.
struct SegNetImpl : nn::Module {
  explicit SegNetImpl(const ModelConfig& config);
  torch::Tensor forward(const torch::Tensor& x);

  Encoder encoder{nullptr};
  SegHead head{nullptr};
};
TORCH_MODULE(SegNet);

struct BridgedOutput {
  torch::Tensor logits;          // (B, K, H, W)
  torch::Tensor reconstruction;  // (B, 3, H/4, W/4)
};

/// Student, EMA teacher, diffusion encoder g' and reconstruction head h'.
///
/// Teacher parameters never require gradients; they change only through
/// ema_update(). g and g' share no parameters.
struct ModelBundleImpl : nn::Module {
  explicit ModelBundleImpl(const ModelConfig& config);

  // f_theta(x) = h(g(x)).
  torch::Tensor forward_student(const torch::Tensor& x);
  // Teacher logits, computed without gradient tracking.
  torch::Tensor forward_teacher(const torch::Tensor& x);
  // h(g(x_t) + g'(x_t, t)) stage-wise.
  torch::Tensor forward_bridged(const torch::Tensor& x_t, const torch::Tensor& t);
  torch::Tensor forward_bridged(const torch::Tensor& x_t, std::int64_t t);
  // h'(g(x_t) + g'(x_t, t)) at 1/4 resolution, 3 channels.
  torch::Tensor forward_reconstruction(const torch::Tensor& x_t, const torch::Tensor& t);
  torch::Tensor forward_reconstruction(const torch::Tensor& x_t, std::int64_t t);
  // Both heads on one set of fused features.
  BridgedOutput forward_bridged_both(const torch::Tensor& x_t, const torch::Tensor& t);

  std::vector<torch::Tensor> fused_features(const torch::Tensor& x_t, const torch::Tensor& t);

  // Optimizer groups: encoder-like (g, g') and head-like (h, h').
  std::vector<torch::Tensor> encoder_parameters();
  std::vector<torch::Tensor> head_parameters();

  void check_input(const torch::Tensor& x) const;
  torch::Tensor timestep_tensor(std::int64_t t, std::int64_t batch) const;

  ModelConfig config;
  SegNet student{nullptr};
  SegNet teacher{nullptr};
  DiffusionEncoder diffusion_encoder{nullptr};
  ReconstructionHead reconstruction_head{nullptr};
};
TORCH_MODULE(ModelBundle);

// teacher <- beta * teacher + (1 - beta) * student per parameter element,
// evaluated in double and rounded once; buffers are copied.
void ema_update(SegNet& teacher, SegNet& student, double beta);

// Copies every parameter and buffer of `from` into `to`.
void copy_weights(nn::Module& to, const nn::Module& from);

}  // namespace dida

#endif  // DIDA_MODEL_HPP_
