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

#ifndef DIDA_DEGRADATION_HPP_
#define DIDA_DEGRADATION_HPP_

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <torch/torch.h>

#include "dida/rng.hpp"
#include "dida/schedule.hpp"

namespace dida {

enum class DegradationMode { kNoise, kBlur, kMask };

DegradationMode parse_degradation_mode(std::string_view name);
std::string to_string(DegradationMode mode);

// Output of one forward degradation. `target` is what the reconstruction
// head regresses: the sampled noise for kNoise, the clean image otherwise.
struct DegradationResult {
  torch::Tensor x_t;
  torch::Tensor target;
  std::int64_t t = 0;
  DegradationMode mode = DegradationMode::kNoise;
};

// Image tensors are (C, H, W) or (B, C, H, W); spatial axes are the last two.

DegradationResult degrade_noise(const torch::Tensor& x0, std::int64_t t,
                                const NoiseSchedule& schedule, Rng& rng);
// Same as above with caller-supplied noise (must match x0's shape).
DegradationResult degrade_noise_with(const torch::Tensor& x0, std::int64_t t,
                                     const NoiseSchedule& schedule,
                                     const torch::Tensor& eps);

// (x_t - sqrt(1 - a) * eps_hat) / sqrt(a) with a = alpha_bar[t]. No clamping.
torch::Tensor reconstruct_from_noise(const torch::Tensor& x_t,
                                     const torch::Tensor& eps_hat, std::int64_t t,
                                     const NoiseSchedule& schedule);

/// Gaussian blur chain G_1..G_T with exponentially growing widths.
///
/// Kernel G_s has standard deviation per_step_std[s - 1], where
/// per_step_std[i] = base_std * exp(growth_rate * i). The cumulative kernel
/// for level t is the exact discrete composition G_t * ... * G_1, so one
/// separable pass with it reproduces t sequential blurs.
struct BlurKernelChain {
  std::int64_t T = 0;
  std::int64_t kernel_size = 0;
  double base_std = 0.0;
  double growth_rate = 0.0;
  std::vector<double> per_step_std;                 // length T
  std::vector<std::vector<double>> step_kernels;    // length T, 1-D, normalized
  std::vector<std::vector<double>> cumulative;      // length T + 1, [0] = {1}

  double std_at(double t) const { return base_std * std::exp(growth_rate * t); }
  // Variance (pixels^2) of the cumulative kernel at level t.
  double cumulative_variance(std::int64_t t) const;
};

BlurKernelChain build_blur_chain(std::int64_t T, std::int64_t kernel_size,
                                 double base_std, double growth_rate);

DegradationResult degrade_blur(const torch::Tensor& x0, std::int64_t t,
                               const BlurKernelChain& chain);

// Sampled, normalized 1-D Gaussian of odd length `size`.
std::vector<double> gaussian_kernel_1d(std::int64_t size, double std);

// Maps an arbitrary integer coordinate into [0, n) by whole-sample mirror
// reflection ("d c b | a b c d | c b a").
std::int64_t reflect_index(std::int64_t p, std::int64_t n);

// Separable convolution of the last two axes with a symmetric odd-length
// kernel, reflect boundary. Computed in the input's dtype.
torch::Tensor convolve_separable(const torch::Tensor& image,
                                 std::span<const double> kernel);

// Binary (H, W) float mask; retained pixels are 1.
torch::Tensor generate_cowmask(std::int64_t height, std::int64_t width, double tau,
                               double std, Rng& rng);

// x_t = M_t * x0 with tau = alpha_bar[t]; one mask per image, shared by channels.
DegradationResult degrade_mask(const torch::Tensor& x0, std::int64_t t,
                               const NoiseSchedule& schedule, double std, Rng& rng);

/// Bundles the parameters every degradation mode needs so callers can
/// dispatch on a mode value.
struct Degrader {
  DegradationMode mode = DegradationMode::kNoise;
  NoiseSchedule schedule;
  BlurKernelChain blur;
  double cowmask_std = 6.0;

  DegradationResult apply(const torch::Tensor& x0, std::int64_t t, Rng& rng) const;
};

}  // namespace dida

#endif  // DIDA_DEGRADATION_HPP_
