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

#ifndef DIDA_EVALUATION_HPP_
#define DIDA_EVALUATION_HPP_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "dida/degradation.hpp"
#include "dida/model.hpp"

namespace dida {

struct MiouResult {
  std::vector<double> iou;     // NaN for excluded classes
  std::vector<bool> included;  // false when a class is absent from GT and prediction
  double miou = 0.0;
};

/// K x K pixel counts; counts(i, j) = pixels with ground truth i predicted j.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::int64_t num_classes);

  // Pixels whose ground truth is the ignore label are skipped.
  void add(const torch::Tensor& prediction, const torch::Tensor& ground_truth);

  std::int64_t num_classes() const { return num_classes_; }
  std::int64_t count(std::int64_t truth, std::int64_t predicted) const;
  std::int64_t total() const;
  MiouResult result() const;

 private:
  std::int64_t num_classes_;
  std::vector<std::int64_t> counts_;
};

MiouResult compute_miou(const torch::Tensor& predictions, const torch::Tensor& ground_truths,
                        std::int64_t num_classes);

struct MMDResult {
  double value = 0.0;
  double bandwidth = 0.0;
  std::int64_t n = 0;
  std::int64_t m = 0;
};

/// Biased RBF-kernel MMD between row sets a (n,d) and b (m,d), returned as
/// sqrt(max(MMD^2, 0)). Without a bandwidth the median pairwise distance of
/// the pooled sample is used.
MMDResult compute_mmd(const torch::Tensor& a, const torch::Tensor& b,
                      std::optional<double> bandwidth = std::nullopt);

// Argmax of the student. Inputs are (B,3,H,W); output (B,H,W) int64.
torch::Tensor regular_inference(ModelBundle& bundle, const torch::Tensor& x);

// Argmax of the bridged network at t; t = 0 routes to regular inference.
torch::Tensor implicit_inference(ModelBundle& bundle, const torch::Tensor& x_t, std::int64_t t);

// Full-resolution estimate of x0 from the reconstruction head: inverted
// noise estimate (noise mode) or the direct prediction (blur/mask).
torch::Tensor reconstruct_clean(ModelBundle& bundle, const torch::Tensor& x_t, std::int64_t t,
                                const Degrader& degrader);

// Student argmax on clamp(x0_estimate, -1, 1).
torch::Tensor explicit_inference(ModelBundle& bundle, const torch::Tensor& x_t, std::int64_t t,
                                 const Degrader& degrader);

// Explicit inference with a caller-supplied noise estimate at input resolution.
// Clean-image estimate from a head output at input resolution: the noise
// estimate is inverted in noise mode, otherwise the output is the estimate.
torch::Tensor clean_estimate(const torch::Tensor& x_t, const torch::Tensor& head_output,
                             std::int64_t t, const Degrader& degrader);

torch::Tensor explicit_inference_from(ModelBundle& bundle, const torch::Tensor& x_t,
                                      const torch::Tensor& head_output, std::int64_t t,
                                      const Degrader& degrader);

torch::Tensor explicit_inference_with_noise(ModelBundle& bundle, const torch::Tensor& x_t,
                                            const torch::Tensor& eps_hat, std::int64_t t,
                                            const NoiseSchedule& schedule);

enum class SweepKind { kImplicitMatched, kImplicitFixed, kExplicit, kWeak };

struct SweepMode {
  SweepKind kind = SweepKind::kImplicitMatched;
  std::int64_t t_input = 0;  // only for kImplicitFixed

  std::string tag() const;
};

// "implicit" (t_input = t_degrade), "implicit:<t>", "explicit", "weak".
SweepMode parse_sweep_mode(std::string_view text);

struct SweepPoint {
  std::int64_t t_degrade = 0;
  std::int64_t t_input = 0;
  double miou = 0.0;
};

struct SweepCurve {
  std::string mode;
  std::vector<SweepPoint> points;
};

// Degrades `images` once per level (seeded by (seed, level)) and scores each
// requested mode against `labels`.
std::vector<SweepCurve> degradation_sweep(ModelBundle& bundle, const torch::Tensor& images,
                                          const torch::Tensor& labels, const Degrader& degrader,
                                          const std::vector<std::int64_t>& t_grid,
                                          const std::vector<SweepMode>& modes,
                                          std::uint64_t seed, std::int64_t batch_size = 32);

// mIoU of regular inference over a labelled split.
MiouResult evaluate_split(ModelBundle& bundle, const torch::Tensor& images,
                          const torch::Tensor& labels, std::int64_t batch_size = 32);

enum class MmdFeature { kPixels, kEncoder };
MmdFeature parse_mmd_feature(std::string_view name);
std::string to_string(MmdFeature feature);

struct MmdPoint {
  std::int64_t t = 0;
  double mmd = 0.0;
  double bandwidth = 0.0;
};

// Degrades both sets at every level and measures their MMD. Pixel features
// are 16x16 area averages; encoder features are the spatial mean of the last
// student stage (needs `bundle`).
std::vector<MmdPoint> mmd_vs_degradation(const torch::Tensor& a_images,
                                         const torch::Tensor& b_images, const Degrader& degrader,
                                         const std::vector<std::int64_t>& t_grid,
                                         MmdFeature feature, std::uint64_t seed,
                                         ModelBundle* bundle = nullptr,
                                         std::optional<double> bandwidth = std::nullopt);

torch::Tensor mmd_features(const torch::Tensor& images, MmdFeature feature,
                           ModelBundle* bundle = nullptr);

// Identity at t = 0, otherwise degrader.apply with a level-seeded stream.
torch::Tensor degrade_for_level(const torch::Tensor& images, const Degrader& degrader,
                                std::int64_t t, std::uint64_t seed, std::uint64_t salt = 0);

void write_sweep_csv(const std::filesystem::path& path, const std::vector<SweepCurve>& curves);
void write_mmd_csv(const std::filesystem::path& path, const std::vector<MmdPoint>& points);

}  // namespace dida

#endif  // DIDA_EVALUATION_HPP_
