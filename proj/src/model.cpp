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

#include "dida/model.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "dida/digest.hpp"

namespace dida {
namespace F = torch::nn::functional;

namespace {

nn::Sequential two_layer_mlp(std::int64_t in, std::int64_t hidden, std::int64_t out) {
  return nn::Sequential(nn::Linear(in, hidden), nn::SiLU(), nn::Linear(hidden, out));
}

torch::Tensor resample_to(const torch::Tensor& x, std::int64_t h, std::int64_t w) {
  if (x.size(-2) == h && x.size(-1) == w) return x;
  if (x.size(-2) > h) return F::adaptive_avg_pool2d(x, F::AdaptiveAvgPool2dFuncOptions({h, w}));
  return F::interpolate(x, F::InterpolateFuncOptions()
                               .size(std::vector<std::int64_t>{h, w})
                               .mode(torch::kBilinear)
                               .align_corners(false));
}

}  // namespace

std::string ModelConfig::architecture_hash() const {
  std::ostringstream s;
  s << "K=" << num_classes << ";widths=";
  for (auto w : widths) s << w << ',';
  s << ";dec=" << decoder_dim << ";rec=" << reconstruction_dim << ";tdim=" << time_dim
    << ";tbase=" << time_base << ";groups=" << norm_groups << ";T=" << max_timestep;
  return sha256_hex(s.str()).substr(0, 16);
}

void ModelConfig::validate() const {
  if (num_classes < 2) throw std::invalid_argument("model needs at least 2 classes");
  if (widths.size() < 2) throw std::invalid_argument("encoder needs at least 2 stages");
  if (time_dim < 2 || time_dim % 2 != 0) {
    throw std::invalid_argument("time embedding dim must be even and >= 2");
  }
  if (max_timestep < 1) throw std::invalid_argument("max_timestep must be >= 1");
  auto check_groups = [this](std::int64_t channels, const char* what) {
    if (channels < 1 || channels % norm_groups != 0) {
      throw std::invalid_argument(std::string(what) + " width " + std::to_string(channels) +
                                  " is not divisible by norm_groups=" +
                                  std::to_string(norm_groups));
    }
  };
  for (auto w : widths) check_groups(w, "encoder");
  check_groups(decoder_dim, "decoder");
  check_groups(reconstruction_dim, "reconstruction head");
}

torch::Tensor sinusoidal_embedding(const torch::Tensor& t, std::int64_t dim, double base) {
  if (dim < 2 || dim % 2 != 0) {
    throw std::invalid_argument("time embedding dim must be even, got " + std::to_string(dim));
  }
  const auto half = dim / 2;
  const auto i = torch::arange(half, torch::kFloat64);
  const auto freq = torch::pow(base, -2.0 * i / static_cast<double>(dim));
  const auto args = t.to(torch::kFloat64).reshape({-1, 1}) * freq.reshape({1, -1});
  // Interleave: even slots sin, odd slots cos.
  return torch::stack({args.sin(), args.cos()}, -1).reshape({-1, dim}).to(torch::kFloat32);
}

torch::Tensor time_embed(std::int64_t t, std::int64_t dim, double base) {
  if (t < 0) throw std::invalid_argument("timestep must be >= 0");
  if (dim < 2 || dim % 2 != 0) {
    throw std::invalid_argument("time embedding dim must be even, got " + std::to_string(dim));
  }
  auto v = torch::empty({dim}, torch::kFloat64);
  auto* p = v.data_ptr<double>();
  for (std::int64_t i = 0; i < dim / 2; ++i) {
    const double arg = static_cast<double>(t) / std::pow(base, 2.0 * i / static_cast<double>(dim));
    p[2 * i] = std::sin(arg);
    p[2 * i + 1] = std::cos(arg);
  }
  return v;
}

torch::Tensor apply_modulation(const torch::Tensor& z, const torch::Tensor& scale,
                               const torch::Tensor& shift) {
  if (z.dim() != 4) throw std::invalid_argument("modulation expects a (B,C,H,W) feature map");
  const auto channels = z.size(1);
  if (scale.size(-1) != channels || shift.size(-1) != channels) {
    throw std::invalid_argument("modulation channel mismatch: feature has " +
                                std::to_string(channels) + " channels, projector gives " +
                                std::to_string(scale.size(-1)));
  }
  auto s = scale.dim() == 1 ? scale.reshape({1, channels, 1, 1})
                            : scale.reshape({scale.size(0), channels, 1, 1});
  auto b = shift.dim() == 1 ? shift.reshape({1, channels, 1, 1})
                            : shift.reshape({shift.size(0), channels, 1, 1});
  return z * (s + 1.0) + b;
}

EncoderStageImpl::EncoderStageImpl(std::int64_t in_channels, std::int64_t out_channels,
                                   std::int64_t groups) {
  conv = register_module("conv", nn::Conv2d(nn::Conv2dOptions(in_channels, out_channels, 3).padding(1)));
  norm = register_module("norm", nn::GroupNorm(nn::GroupNormOptions(groups, out_channels)));
}

torch::Tensor EncoderStageImpl::activate(const torch::Tensor& x) {
  return F::gelu(norm(conv(x)));
}

torch::Tensor EncoderStageImpl::downsample(const torch::Tensor& h) {
  return F::avg_pool2d(h, F::AvgPool2dFuncOptions(2));
}

EncoderImpl::EncoderImpl(const ModelConfig& config) : widths(config.widths) {
  stages = register_module("stages", nn::ModuleList());
  std::int64_t in = 3;
  for (auto w : widths) {
    stages->push_back(EncoderStage(in, w, config.norm_groups));
    in = w;
  }
}

std::vector<torch::Tensor> EncoderImpl::forward(torch::Tensor x) {
  std::vector<torch::Tensor> out;
  for (const auto& m : *stages) {
    auto* stage = m->as<EncoderStageImpl>();
    x = EncoderStageImpl::downsample(stage->activate(x));
    out.push_back(x);
  }
  return out;
}

TimeEmbeddingImpl::TimeEmbeddingImpl(const ModelConfig& config)
    : dim(config.time_dim), base(config.time_base) {
  trunk = register_module("trunk", two_layer_mlp(dim, dim, dim));
  scale_mlps = register_module("scale_mlps", nn::ModuleList());
  shift_mlps = register_module("shift_mlps", nn::ModuleList());
  for (auto w : config.widths) {
    scale_mlps->push_back(two_layer_mlp(dim, dim, w));
    shift_mlps->push_back(two_layer_mlp(dim, dim, w));
  }
}

torch::Tensor TimeEmbeddingImpl::embed(const torch::Tensor& t) {
  auto param = trunk->parameters().front();
  return trunk->forward(sinusoidal_embedding(t, dim, base).to(param.scalar_type()));
}

torch::Tensor TimeEmbeddingImpl::scale(std::int64_t block, const torch::Tensor& embedding) {
  return scale_mlps[block]->as<nn::Sequential>()->forward(embedding);
}

torch::Tensor TimeEmbeddingImpl::shift(std::int64_t block, const torch::Tensor& embedding) {
  return shift_mlps[block]->as<nn::Sequential>()->forward(embedding);
}

torch::Tensor TimeEmbeddingImpl::modulate(const torch::Tensor& z, const torch::Tensor& t,
                                          std::int64_t block) {
  if (block < 0 || block >= static_cast<std::int64_t>(scale_mlps->size())) {
    throw std::out_of_range("modulation block index " + std::to_string(block) + " out of range");
  }
  const auto e = embed(t);
  return apply_modulation(z, scale(block, e), shift(block, e));
}

DiffusionEncoderImpl::DiffusionEncoderImpl(const ModelConfig& config) {
  body = register_module("body", Encoder(config));
  time = register_module("time", TimeEmbedding(config));
}

std::vector<torch::Tensor> DiffusionEncoderImpl::forward(torch::Tensor x, const torch::Tensor& t) {
  const auto e = time->embed(t);
  std::vector<torch::Tensor> out;
  std::int64_t block = 0;
  for (const auto& m : *body->stages) {
    auto* stage = m->as<EncoderStageImpl>();
    auto h = apply_modulation(stage->activate(x), time->scale(block, e), time->shift(block, e));
    x = EncoderStageImpl::downsample(h);
    out.push_back(x);
    ++block;
  }
  return out;
}

LateralFusionImpl::LateralFusionImpl(const std::vector<std::int64_t>& widths, std::int64_t dim) {
  laterals = register_module("laterals", nn::ModuleList());
  for (auto w : widths) laterals->push_back(nn::Conv2d(nn::Conv2dOptions(w, dim, 1)));
}

torch::Tensor LateralFusionImpl::forward(const std::vector<torch::Tensor>& stages) {
  if (stages.size() != laterals->size()) {
    throw std::invalid_argument("stage count mismatch in lateral fusion");
  }
  // Stage 1 sits at 1/4 of the input resolution.
  const auto h = stages[1].size(-2);
  const auto w = stages[1].size(-1);
  torch::Tensor fused;
  for (std::size_t i = 0; i < stages.size(); ++i) {
    auto y = resample_to(laterals[i]->as<nn::Conv2dImpl>()->forward(stages[i]), h, w);
    fused = fused.defined() ? fused + y : y;
  }
  return fused;
}

SegHeadImpl::SegHeadImpl(const ModelConfig& config) {
  fusion = register_module("fusion", LateralFusion(config.widths, config.decoder_dim));
  norm = register_module("norm", nn::GroupNorm(nn::GroupNormOptions(config.norm_groups, config.decoder_dim)));
  classifier = register_module("classifier", nn::Conv2d(nn::Conv2dOptions(config.decoder_dim, config.num_classes, 1)));
}

torch::Tensor SegHeadImpl::forward(const std::vector<torch::Tensor>& stages) {
  auto x = classifier(F::gelu(norm(fusion(stages))));
  return F::interpolate(x, F::InterpolateFuncOptions()
                               .size(std::vector<std::int64_t>{x.size(-2) * 4, x.size(-1) * 4})
                               .mode(torch::kBilinear)
                               .align_corners(false));
}

ReconstructionHeadImpl::ReconstructionHeadImpl(const ModelConfig& config) {
  const auto d = config.reconstruction_dim;
  fusion = register_module("fusion", LateralFusion(config.widths, d));
  norm = register_module("norm", nn::GroupNorm(nn::GroupNormOptions(config.norm_groups, d)));
  branches = register_module("branches", nn::ModuleList());
  for (std::int64_t dilation : {1, 2, 4}) {
    branches->push_back(nn::Conv2d(nn::Conv2dOptions(d, d, 3).padding(dilation).dilation(dilation)));
  }
  projector = register_module("projector", nn::Conv2d(nn::Conv2dOptions(d, 3, 1)));
}

torch::Tensor ReconstructionHeadImpl::forward(const std::vector<torch::Tensor>& stages) {
  const auto x = F::gelu(norm(fusion(stages)));
  torch::Tensor sum;
  for (const auto& b : *branches) {
    auto y = F::gelu(b->as<nn::Conv2dImpl>()->forward(x));
    sum = sum.defined() ? sum + y : y;
  }
  return projector(sum);
}

SegNetImpl::SegNetImpl(const ModelConfig& config) {
  encoder = register_module("encoder", Encoder(config));
  head = register_module("head", SegHead(config));
}

torch::Tensor SegNetImpl::forward(const torch::Tensor& x) { return head(encoder(x)); }

ModelBundleImpl::ModelBundleImpl(const ModelConfig& cfg) : config(cfg) {
  config.validate();
  student = register_module("student", SegNet(config));
  teacher = register_module("teacher", SegNet(config));
  diffusion_encoder = register_module("diffusion_encoder", DiffusionEncoder(config));
  reconstruction_head = register_module("reconstruction_head", ReconstructionHead(config));
  copy_weights(*teacher, *student);
  for (auto& p : teacher->parameters()) p.set_requires_grad(false);
}

void ModelBundleImpl::check_input(const torch::Tensor& x) const {
  if (x.dim() != 4 || x.size(1) != 3) {
    throw std::invalid_argument("model input must be (B,3,H,W)");
  }
  const std::int64_t factor = std::int64_t{1} << config.widths.size();
  if (x.size(2) % factor != 0 || x.size(3) % factor != 0) {
    throw std::invalid_argument("input size " + std::to_string(x.size(2)) + "x" +
                                std::to_string(x.size(3)) + " not divisible by " +
                                std::to_string(factor));
  }
  if (!torch::isfinite(x).all().item<bool>()) {
    throw std::invalid_argument("model input contains non-finite values");
  }
}

torch::Tensor ModelBundleImpl::timestep_tensor(std::int64_t t, std::int64_t batch) const {
  if (t < 0 || t > config.max_timestep) {
    throw std::out_of_range("timestep " + std::to_string(t) + " outside [0, " +
                            std::to_string(config.max_timestep) + "]");
  }
  return torch::full({batch}, t, torch::kInt64);
}

torch::Tensor ModelBundleImpl::forward_student(const torch::Tensor& x) {
  check_input(x);
  return student->forward(x);
}

torch::Tensor ModelBundleImpl::forward_teacher(const torch::Tensor& x) {
  check_input(x);
  torch::NoGradGuard no_grad;
  return teacher->forward(x);
}

std::vector<torch::Tensor> ModelBundleImpl::fused_features(const torch::Tensor& x_t,
                                                           const torch::Tensor& t) {
  check_input(x_t);
  if (t.dim() != 1 || t.size(0) != x_t.size(0)) {
    throw std::invalid_argument("timestep tensor must have one entry per image");
  }
  auto z = student->encoder->forward(x_t);
  auto z_prime = diffusion_encoder->forward(x_t, t);
  if (z.size() != z_prime.size()) throw std::logic_error("stage count mismatch between g and g'");
  for (std::size_t i = 0; i < z.size(); ++i) {
    if (z[i].sizes() != z_prime[i].sizes()) {
      throw std::logic_error("stage " + std::to_string(i) + " shape mismatch between g and g'");
    }
    z[i] = z[i] + z_prime[i];
  }
  return z;
}

torch::Tensor ModelBundleImpl::forward_bridged(const torch::Tensor& x_t, const torch::Tensor& t) {
  return student->head->forward(fused_features(x_t, t));
}

torch::Tensor ModelBundleImpl::forward_bridged(const torch::Tensor& x_t, std::int64_t t) {
  return forward_bridged(x_t, timestep_tensor(t, x_t.size(0)));
}

torch::Tensor ModelBundleImpl::forward_reconstruction(const torch::Tensor& x_t,
                                                      const torch::Tensor& t) {
  return reconstruction_head->forward(fused_features(x_t, t));
}

torch::Tensor ModelBundleImpl::forward_reconstruction(const torch::Tensor& x_t, std::int64_t t) {
  return forward_reconstruction(x_t, timestep_tensor(t, x_t.size(0)));
}

BridgedOutput ModelBundleImpl::forward_bridged_both(const torch::Tensor& x_t,
                                                    const torch::Tensor& t) {
  const auto fused = fused_features(x_t, t);
  return {student->head->forward(fused), reconstruction_head->forward(fused)};
}

std::vector<torch::Tensor> ModelBundleImpl::encoder_parameters() {
  auto params = student->encoder->parameters();
  for (auto& p : diffusion_encoder->parameters()) params.push_back(p);
  return params;
}

std::vector<torch::Tensor> ModelBundleImpl::head_parameters() {
  auto params = student->head->parameters();
  for (auto& p : reconstruction_head->parameters()) params.push_back(p);
  return params;
}

void copy_weights(nn::Module& to, const nn::Module& from) {
  torch::NoGradGuard no_grad;
  const auto src = from.named_parameters();
  auto dst = to.named_parameters();
  if (src.size() != dst.size()) throw std::invalid_argument("parameter count mismatch");
  for (const auto& item : src) dst[item.key()].copy_(item.value());
  const auto src_buf = from.named_buffers();
  auto dst_buf = to.named_buffers();
  for (const auto& item : src_buf) dst_buf[item.key()].copy_(item.value());
}

namespace {

template <typename Scalar>
void ema_kernel(torch::Tensor& teacher, const torch::Tensor& student, double beta) {
  auto* p = teacher.data_ptr<Scalar>();
  const auto s = student.contiguous();
  const auto* q = s.data_ptr<Scalar>();
  const double keep = beta;
  const double take = 1.0 - beta;
  for (std::int64_t i = 0; i < teacher.numel(); ++i) {
    p[i] = static_cast<Scalar>(keep * static_cast<double>(p[i]) + take * static_cast<double>(q[i]));
  }
}

}  // namespace

void ema_update(SegNet& teacher, SegNet& student, double beta) {
  if (!(beta >= 0.0 && beta < 1.0)) {
    throw std::invalid_argument("EMA beta must satisfy 0 <= beta < 1");
  }
  torch::NoGradGuard no_grad;
  auto t_params = teacher->parameters();
  const auto s_params = student->parameters();
  if (t_params.size() != s_params.size()) {
    throw std::invalid_argument("EMA parameter-count mismatch: teacher has " +
                                std::to_string(t_params.size()) + ", student " +
                                std::to_string(s_params.size()));
  }
  for (std::size_t i = 0; i < t_params.size(); ++i) {
    auto& p = t_params[i];
    const auto& q = s_params[i];
    if (p.sizes() != q.sizes() || p.scalar_type() != q.scalar_type() || !p.is_contiguous()) {
      throw std::invalid_argument("EMA parameter shape mismatch at index " + std::to_string(i));
    }
    if (p.scalar_type() == torch::kFloat64) {
      ema_kernel<double>(p, q, beta);
    } else if (p.scalar_type() == torch::kFloat32) {
      ema_kernel<float>(p, q, beta);
    } else {
      throw std::invalid_argument("EMA supports float32/float64 parameters only");
    }
  }
  auto t_buf = teacher->buffers();
  const auto s_buf = student->buffers();
  for (std::size_t i = 0; i < t_buf.size() && i < s_buf.size(); ++i) t_buf[i].copy_(s_buf[i]);
}

}  // namespace dida
