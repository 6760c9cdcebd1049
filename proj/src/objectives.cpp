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

#include "dida/objectives.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "dida/dataset.hpp"

namespace dida {
namespace F = torch::nn::functional;

LossWeights LossWeights::for_schedule(const NoiseSchedule& schedule, DegradationMode mode,
                                      double lambda_D, double lambda_R, double snr_cap) {
  if (lambda_D < 0.0 || lambda_R < 0.0) throw std::invalid_argument("loss weights must be >= 0");
  LossWeights w;
  w.lambda_D = lambda_D;
  w.lambda_R = lambda_R;
  if (mode == DegradationMode::kNoise) {
    w.lambda_t.assign(static_cast<std::size_t>(schedule.T + 1), 1.0);
  } else {
    w.lambda_t = schedule.truncated_snr(snr_cap);
  }
  return w;
}

torch::Tensor weighted_ce(const torch::Tensor& logits, const torch::Tensor& labels,
                          const torch::Tensor& q) {
  if (logits.dim() == 3) {
    return weighted_ce(logits.unsqueeze(0), labels.unsqueeze(0), q.reshape({1}));
  }
  if (logits.dim() != 4 || labels.dim() != 3 || logits.size(0) != labels.size(0) ||
      logits.size(2) != labels.size(1) || logits.size(3) != labels.size(2)) {
    throw std::invalid_argument("weighted_ce: logits (B,K,H,W) and labels (B,H,W) disagree");
  }
  const auto num_classes = logits.size(1);
  const auto ignore = labels.eq(kIgnoreLabel);
  const auto bad = labels.lt(0).logical_or(labels.ge(num_classes)).logical_and(ignore.logical_not());
  if (bad.any().item<bool>()) {
    throw std::invalid_argument("weighted_ce: label value outside {0.." +
                                std::to_string(num_classes - 1) + ", 255}");
  }
  const auto valid = ignore.logical_not();
  const auto safe = torch::where(valid, labels, torch::zeros_like(labels));
  const auto nll = -F::log_softmax(logits, 1).gather(1, safe.unsqueeze(1)).squeeze(1);
  const auto weight = valid.to(logits.scalar_type());
  const auto per_image_sum = (nll * weight).sum({1, 2});
  const auto count = weight.sum({1, 2});
  const auto per_image = per_image_sum / count.clamp_min(1.0);
  const auto qv = q.to(logits.scalar_type()).reshape({-1});
  if (qv.size(0) != logits.size(0) && qv.size(0) != 1) {
    throw std::invalid_argument("weighted_ce: one confidence per image expected");
  }
  return (per_image * qv).mean();
}

torch::Tensor weighted_ce(const torch::Tensor& logits, const torch::Tensor& labels, double q) {
  return weighted_ce(logits, labels, torch::full({1}, q, logits.options()));
}

PseudoLabel make_pseudo_label(const torch::Tensor& teacher_logits, double threshold) {
  const auto logits = teacher_logits.dim() == 3 ? teacher_logits.unsqueeze(0) : teacher_logits;
  torch::NoGradGuard no_grad;
  const auto probs = F::softmax(logits.detach(), 1);
  PseudoLabel out;
  out.labels = logits.detach().argmax(1);
  const auto max_prob = std::get<0>(probs.max(1));
  out.confidence = max_prob.gt(threshold).to(logits.scalar_type()).mean({1, 2});
  return out;
}

torch::Tensor supervised_loss(ModelBundle& bundle, const torch::Tensor& images,
                              const torch::Tensor& labels) {
  if (!labels.defined()) throw std::invalid_argument("supervised_loss: source labels missing");
  return weighted_ce(bundle->forward_student(images), labels, 1.0);
}

AdaptationResult adaptation_loss(ModelBundle& bundle, const torch::Tensor& target_images,
                                 double threshold) {
  AdaptationResult out;
  out.pseudo = make_pseudo_label(bundle->forward_teacher(target_images), threshold);
  out.loss = weighted_ce(bundle->forward_student(target_images), out.pseudo.labels,
                         out.pseudo.confidence);
  return out;
}

torch::Tensor dic_loss_from_logits(const torch::Tensor& source_logits,
                                   const torch::Tensor& source_labels,
                                   const torch::Tensor& target_logits,
                                   const PseudoLabel& pseudo) {
  return weighted_ce(source_logits, source_labels, 1.0) +
         weighted_ce(target_logits, pseudo.labels, pseudo.confidence);
}

torch::Tensor dic_loss(ModelBundle& bundle, const torch::Tensor& source_labels,
                       const PseudoLabel& pseudo, std::int64_t t,
                       const torch::Tensor& degraded_source,
                       const torch::Tensor& degraded_target) {
  return dic_loss_from_logits(bundle->forward_bridged(degraded_source, t), source_labels,
                              bundle->forward_bridged(degraded_target, t), pseudo);
}

torch::Tensor downsample_target(const torch::Tensor& target) {
  if (target.dim() == 3) return downsample_target(target.unsqueeze(0)).squeeze(0);
  return F::avg_pool2d(target, F::AvgPool2dFuncOptions(4));
}

torch::Tensor reconstruction_loss(const torch::Tensor& prediction,
                                  const ReconstructionTarget& target, DegradationMode mode,
                                  double lambda_t) {
  if (target.mode != mode) {
    throw std::invalid_argument("reconstruction target was produced by " + to_string(target.mode) +
                                " degradation but the loss is configured for " + to_string(mode));
  }
  if (prediction.sizes() != target.values.sizes()) {
    throw std::invalid_argument("reconstruction prediction and target shapes differ");
  }
  const auto mse = (prediction - target.values).pow(2).mean();
  if (mode == DegradationMode::kNoise) return mse;
  return mse * lambda_t;
}

torch::Tensor reconstruction_loss(ModelBundle& bundle, const torch::Tensor& x_t,
                                  std::int64_t t, const ReconstructionTarget& target,
                                  DegradationMode mode, const LossWeights& weights) {
  if (t < 1 || t >= static_cast<std::int64_t>(weights.lambda_t.size())) {
    throw std::out_of_range("reconstruction timestep outside [1, T]");
  }
  return reconstruction_loss(bundle->forward_reconstruction(x_t, t), target, mode,
                             weights.lambda_t[static_cast<std::size_t>(t)]);
}

torch::Tensor total_loss(const LossComponents& c, const LossWeights& weights) {
  const std::pair<const char*, const torch::Tensor*> named[] = {
      {"loss_S", &c.supervised}, {"loss_T", &c.adaptation},
      {"loss_D", &c.consistency}, {"loss_R", &c.reconstruction}};
  for (const auto& [name, tensor] : named) {
    if (tensor->defined() && !std::isfinite(tensor->item<double>())) {
      throw std::runtime_error(std::string("non-finite loss component ") + name);
    }
  }
  torch::Tensor total = c.supervised + c.adaptation;
  if (c.consistency.defined()) total = total + c.consistency * weights.lambda_D;
  if (c.reconstruction.defined()) total = total + c.reconstruction * weights.lambda_R;
  return total;
}

double total_loss(double supervised, double adaptation, double consistency,
                  double reconstruction, const LossWeights& weights) {
  return supervised + adaptation + weights.lambda_D * consistency +
         weights.lambda_R * reconstruction;
}

}  // namespace dida
