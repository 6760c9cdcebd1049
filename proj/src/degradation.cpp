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

#include "dida/degradation.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace dida {
namespace {

void check_image(const torch::Tensor& x, const char* op) {
  if (!x.defined() || (x.dim() != 3 && x.dim() != 4)) {
    throw std::invalid_argument(std::string(op) +
                                ": expected a (C,H,W) or (B,C,H,W) image tensor");
  }
}

std::vector<double> convolve_1d(const std::vector<double>& a,
                                const std::vector<double>& b) {
  std::vector<double> out(a.size() + b.size() - 1, 0.0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < b.size(); ++j) out[i + j] += a[i] * b[j];
  }
  return out;
}

// Drops symmetric tails whose mass is numerically irrelevant.
void trim_tails(std::vector<double>& kernel) {
  constexpr double kTail = 1e-12;
  std::size_t cut = 0;
  while (kernel.size() > 2 * cut + 1 && kernel[cut] < kTail &&
         kernel[kernel.size() - 1 - cut] < kTail) {
    ++cut;
  }
  if (cut > 0) {
    kernel.erase(kernel.end() - static_cast<std::ptrdiff_t>(cut), kernel.end());
    kernel.erase(kernel.begin(), kernel.begin() + static_cast<std::ptrdiff_t>(cut));
  }
}

double kernel_variance(const std::vector<double>& kernel) {
  const double centre = (static_cast<double>(kernel.size()) - 1.0) / 2.0;
  double var = 0.0;
  for (std::size_t i = 0; i < kernel.size(); ++i) {
    const double d = static_cast<double>(i) - centre;
    var += kernel[i] * d * d;
  }
  return var;
}

torch::Tensor convolve_axis(const torch::Tensor& x, std::span<const double> kernel,
                            std::int64_t axis) {
  const std::int64_t n = x.size(axis);
  const auto radius = static_cast<std::int64_t>(kernel.size() / 2);
  std::vector<std::int64_t> index(static_cast<std::size_t>(n + 2 * radius));
  for (std::int64_t p = -radius; p < n + radius; ++p) {
    index[static_cast<std::size_t>(p + radius)] = reflect_index(p, n);
  }
  const auto padded = x.index_select(axis, torch::tensor(index, torch::kInt64));
  torch::Tensor out = torch::zeros_like(x);
  for (std::size_t k = 0; k < kernel.size(); ++k) {
    if (kernel[k] == 0.0) continue;
    out.add_(padded.narrow(axis, static_cast<std::int64_t>(k), n), kernel[k]);
  }
  return out;
}

}  // namespace

DegradationMode parse_degradation_mode(std::string_view name) {
  if (name == "noise") return DegradationMode::kNoise;
  if (name == "blur") return DegradationMode::kBlur;
  if (name == "mask") return DegradationMode::kMask;
  throw std::invalid_argument("unknown degradation mode '" + std::string(name) +
                              "' (expected noise, blur or mask)");
}

std::string to_string(DegradationMode mode) {
  switch (mode) {
    case DegradationMode::kNoise: return "noise";
    case DegradationMode::kBlur: return "blur";
    case DegradationMode::kMask: return "mask";
  }
  throw std::invalid_argument("invalid DegradationMode value");
}

DegradationResult degrade_noise(const torch::Tensor& x0, std::int64_t t,
                                const NoiseSchedule& schedule, Rng& rng) {
  check_image(x0, "degrade_noise");
  schedule.check_degradation_step(t);
  return degrade_noise_with(x0, t, schedule, rng.normal(x0.sizes(), x0.scalar_type()));
}

DegradationResult degrade_noise_with(const torch::Tensor& x0, std::int64_t t,
                                     const NoiseSchedule& schedule,
                                     const torch::Tensor& eps) {
  check_image(x0, "degrade_noise");
  schedule.check_degradation_step(t);
  if (eps.sizes() != x0.sizes()) {
    throw std::invalid_argument("degrade_noise: noise shape differs from image shape");
  }
  const double a = schedule.at(t);
  DegradationResult result;
  result.x_t = x0 * std::sqrt(a) + eps * std::sqrt(1.0 - a);
  result.target = eps;
  result.t = t;
  result.mode = DegradationMode::kNoise;
  return result;
}

torch::Tensor reconstruct_from_noise(const torch::Tensor& x_t,
                                     const torch::Tensor& eps_hat, std::int64_t t,
                                     const NoiseSchedule& schedule) {
  schedule.check_degradation_step(t);
  const double a = schedule.at(t);
  return (x_t - eps_hat * std::sqrt(1.0 - a)) / std::sqrt(a);
}

std::int64_t reflect_index(std::int64_t p, std::int64_t n) {
  if (n <= 0) throw std::invalid_argument("reflect_index: empty axis");
  if (n == 1) return 0;
  const std::int64_t period = 2 * (n - 1);
  std::int64_t m = p % period;
  if (m < 0) m += period;
  return m < n ? m : period - m;
}

std::vector<double> gaussian_kernel_1d(std::int64_t size, double std) {
  if (size < 1 || size % 2 == 0) {
    throw std::invalid_argument("gaussian kernel size must be odd and positive, got " +
                                std::to_string(size));
  }
  if (!(std > 0.0)) throw std::invalid_argument("gaussian kernel std must be > 0");
  const std::int64_t radius = size / 2;
  std::vector<double> kernel(static_cast<std::size_t>(size));
  double sum = 0.0;
  for (std::int64_t i = -radius; i <= radius; ++i) {
    const double v = std::exp(-0.5 * static_cast<double>(i * i) / (std * std));
    kernel[static_cast<std::size_t>(i + radius)] = v;
    sum += v;
  }
  for (double& v : kernel) v /= sum;
  return kernel;
}

torch::Tensor convolve_separable(const torch::Tensor& image,
                                 std::span<const double> kernel) {
  if (image.dim() < 2) throw std::invalid_argument("convolve_separable: need >= 2 dims");
  if (kernel.size() % 2 == 0) {
    throw std::invalid_argument("convolve_separable: kernel length must be odd");
  }
  if (kernel.size() == 1) return image * kernel[0];
  return convolve_axis(convolve_axis(image, kernel, image.dim() - 2), kernel,
                       image.dim() - 1);
}

double BlurKernelChain::cumulative_variance(std::int64_t t) const {
  if (t < 0 || t > T) throw std::out_of_range("blur level outside [0, T]");
  return kernel_variance(cumulative[static_cast<std::size_t>(t)]);
}

BlurKernelChain build_blur_chain(std::int64_t T, std::int64_t kernel_size,
                                 double base_std, double growth_rate) {
  if (T < 1) throw std::invalid_argument("blur chain needs T >= 1");
  if (kernel_size < 1 || kernel_size % 2 == 0) {
    throw std::invalid_argument("blur kernel_size must be odd and positive, got " +
                                std::to_string(kernel_size));
  }
  if (!(base_std > 0.0)) throw std::invalid_argument("blur base_std must be > 0");
  if (!(growth_rate > 0.0)) throw std::invalid_argument("blur growth_rate must be > 0");

  BlurKernelChain chain;
  chain.T = T;
  chain.kernel_size = kernel_size;
  chain.base_std = base_std;
  chain.growth_rate = growth_rate;
  chain.cumulative.push_back({1.0});
  for (std::int64_t i = 0; i < T; ++i) {
    const double std = chain.std_at(static_cast<double>(i));
    chain.per_step_std.push_back(std);
    chain.step_kernels.push_back(gaussian_kernel_1d(kernel_size, std));
    auto next = convolve_1d(chain.cumulative.back(), chain.step_kernels.back());
    trim_tails(next);
    chain.cumulative.push_back(std::move(next));
  }
  return chain;
}

DegradationResult degrade_blur(const torch::Tensor& x0, std::int64_t t,
                               const BlurKernelChain& chain) {
  check_image(x0, "degrade_blur");
  if (t < 1 || t > chain.T) {
    throw std::out_of_range("degradation timestep " + std::to_string(t) +
                            " outside [1, " + std::to_string(chain.T) + "]");
  }
  DegradationResult result;
  result.x_t = convolve_separable(x0, chain.cumulative[static_cast<std::size_t>(t)]);
  result.target = x0;
  result.t = t;
  result.mode = DegradationMode::kBlur;
  return result;
}

torch::Tensor generate_cowmask(std::int64_t height, std::int64_t width, double tau,
                               double std, Rng& rng) {
  if (!(tau >= 0.0 && tau <= 1.0)) {
    throw std::invalid_argument("cowmask tau must lie in [0, 1], got " +
                                std::to_string(tau));
  }
  if (!(std > 0.0)) throw std::invalid_argument("cowmask std must be > 0");
  const auto opts = torch::TensorOptions().dtype(torch::kFloat32);
  // erfinv(+-1) is infinite: the threshold degenerates to -inf / +inf.
  if (tau == 0.0) return torch::zeros({height, width}, opts);
  if (tau == 1.0) return torch::ones({height, width}, opts);

  const auto noise = rng.normal({height, width}, torch::kFloat64);
  const auto radius = static_cast<std::int64_t>(std::ceil(4.0 * std));
  const auto kernel = gaussian_kernel_1d(2 * radius + 1, std);
  const auto filtered = convolve_separable(noise, kernel);
  const double mean = filtered.mean().item<double>();
  const double dev = filtered.std(/*unbiased=*/false).item<double>();
  const double z =
      torch::erfinv(torch::tensor(2.0 * tau - 1.0, torch::kFloat64)).item<double>();
  const double threshold = mean + std::numbers::sqrt2 * z * dev;
  return filtered.lt(threshold).to(torch::kFloat32);
}

DegradationResult degrade_mask(const torch::Tensor& x0, std::int64_t t,
                               const NoiseSchedule& schedule, double std, Rng& rng) {
  check_image(x0, "degrade_mask");
  schedule.check_degradation_step(t);
  const double tau = schedule.at(t);
  const std::int64_t h = x0.size(-2);
  const std::int64_t w = x0.size(-1);
  torch::Tensor mask;
  if (x0.dim() == 3) {
    mask = generate_cowmask(h, w, tau, std, rng).unsqueeze(0);
  } else {
    std::vector<torch::Tensor> masks;
    for (std::int64_t b = 0; b < x0.size(0); ++b) {
      masks.push_back(generate_cowmask(h, w, tau, std, rng).unsqueeze(0));
    }
    mask = torch::stack(masks);
  }
  DegradationResult result;
  result.x_t = torch::where(mask.to(x0.scalar_type()).gt(0.5), x0, torch::zeros_like(x0));
  result.target = x0;
  result.t = t;
  result.mode = DegradationMode::kMask;
  return result;
}

DegradationResult Degrader::apply(const torch::Tensor& x0, std::int64_t t,
                                  Rng& rng) const {
  switch (mode) {
    case DegradationMode::kNoise: return degrade_noise(x0, t, schedule, rng);
    case DegradationMode::kBlur: return degrade_blur(x0, t, blur);
    case DegradationMode::kMask: return degrade_mask(x0, t, schedule, cowmask_std, rng);
  }
  throw std::invalid_argument("invalid DegradationMode value");
}

}  // namespace dida
