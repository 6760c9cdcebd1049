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

#ifndef DIDA_OBJECTIVES_HPP_
#define DIDA_OBJECTIVES_HPP_

#include <cstdint>
#include <vector>

#include <torch/torch.h>

#include "dida/degradation.hpp"
#include "dida/model.hpp"
#include "dida/schedule.hpp"

namespace dida {

inline constexpr double kDefaultPseudoThreshold = 0.968;
inline constexpr double kDefaultSnrCap = 5.0;

// Hard teacher labels plus an image-level confidence in [0, 1].
struct PseudoLabel {
  torch::Tensor labels;      // (B, H, W) int64
  torch::Tensor confidence;  // (B) float, same dtype as the logits
};

struct LossWeights {
  double lambda_D = 0.5;
  double lambda_R = 5.0;
  std::vector<double> lambda_t;  // length T + 1, used by x0-prediction modes

  // lambda_t = min(snr_t, snr_cap) for blur/mask; all ones for noise.
  static LossWeights for_schedule(const NoiseSchedule& schedule, DegradationMode mode,
                                  double lambda_D = 0.5, double lambda_R = 5.0,
                                  double snr_cap = kDefaultSnrCap);
};

/// Pixel-wise cross-entropy weighted by an image-level confidence q.
///
/// Each image contributes q_i times its mean negative log-likelihood over
/// non-ignored pixels (0 when every pixel is ignored); the result is the
/// mean over the batch. Accepts (K,H,W)/(H,W) or (B,K,H,W)/(B,H,W).
torch::Tensor weighted_ce(const torch::Tensor& logits, const torch::Tensor& labels,
                          const torch::Tensor& q);
torch::Tensor weighted_ce(const torch::Tensor& logits, const torch::Tensor& labels, double q);

// Argmax labels (ties resolve to the lowest class index) and the fraction of
// pixels whose max softmax probability exceeds `threshold`.
PseudoLabel make_pseudo_label(const torch::Tensor& teacher_logits, double threshold);

torch::Tensor supervised_loss(ModelBundle& bundle, const torch::Tensor& images,
                              const torch::Tensor& labels);

struct AdaptationResult {
  torch::Tensor loss;
  PseudoLabel pseudo;
};

// Pseudo-labels come from the teacher on the clean target images.
AdaptationResult adaptation_loss(ModelBundle& bundle, const torch::Tensor& target_images,
                                 double threshold);

// CE of the bridged network on degraded source (against y^S, q = 1) plus
// degraded target (against the clean-image pseudo-labels, q = q^T).
torch::Tensor dic_loss(ModelBundle& bundle, const torch::Tensor& source_labels,
                       const PseudoLabel& pseudo, std::int64_t t,
                       const torch::Tensor& degraded_source,
                       const torch::Tensor& degraded_target);
torch::Tensor dic_loss_from_logits(const torch::Tensor& source_logits,
                                   const torch::Tensor& source_labels,
                                   const torch::Tensor& target_logits,
                                   const PseudoLabel& pseudo);

struct ReconstructionTarget {
  torch::Tensor values;  // already at reconstruction-head resolution
  DegradationMode mode = DegradationMode::kNoise;
};

// 4x area-average of a (B,3,H,W) or (3,H,W) target.
torch::Tensor downsample_target(const torch::Tensor& target);

// Noise: mean squared error against eps. Blur/mask: lambda_t times the mean
// squared error against x0.
torch::Tensor reconstruction_loss(const torch::Tensor& prediction,
                                  const ReconstructionTarget& target, DegradationMode mode,
                                  double lambda_t);

torch::Tensor reconstruction_loss(ModelBundle& bundle, const torch::Tensor& x_t,
                                  std::int64_t t, const ReconstructionTarget& target,
                                  DegradationMode mode, const LossWeights& weights);

struct LossComponents {
  torch::Tensor supervised;    // L^S
  torch::Tensor adaptation;    // L^T
  torch::Tensor consistency;   // L^D
  torch::Tensor reconstruction;  // L^R
};

// L^S + L^T + lambda_D L^D + lambda_R L^R. Undefined components count as 0.
// Throws std::runtime_error naming the first non-finite component.
torch::Tensor total_loss(const LossComponents& components, const LossWeights& weights);
double total_loss(double supervised, double adaptation, double consistency,
                  double reconstruction, const LossWeights& weights);

}  // namespace dida

#endif  // DIDA_OBJECTIVES_HPP_
