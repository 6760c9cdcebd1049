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

#include "dida/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "dida/dataset.hpp"
#include "dida/rng.hpp"

namespace dida {
namespace F = torch::nn::functional;

ConfusionMatrix::ConfusionMatrix(std::int64_t num_classes)
    : num_classes_(num_classes),
      counts_(static_cast<std::size_t>(num_classes * num_classes), 0) {
  if (num_classes < 1) throw std::invalid_argument("confusion matrix needs >= 1 class");
}

void ConfusionMatrix::add(const torch::Tensor& prediction, const torch::Tensor& ground_truth) {
  if (prediction.sizes() != ground_truth.sizes()) {
    throw std::invalid_argument("prediction and ground-truth shapes differ");
  }
  const auto pred = prediction.to(torch::kInt64).reshape({-1});
  const auto gt = ground_truth.to(torch::kInt64).reshape({-1});
  const auto valid = gt.ne(kIgnoreLabel);
  const auto g = gt.masked_select(valid);
  const auto p = pred.masked_select(valid);
  if (g.numel() == 0) return;
  if (g.min().item<std::int64_t>() < 0 || g.max().item<std::int64_t>() >= num_classes_) {
    throw std::invalid_argument("ground-truth label outside {0..K-1, 255}");
  }
  if (p.min().item<std::int64_t>() < 0 || p.max().item<std::int64_t>() >= num_classes_) {
    throw std::invalid_argument("predicted label outside {0..K-1}");
  }
  const auto bins = torch::bincount(g * num_classes_ + p, {}, num_classes_ * num_classes_);
  const auto* data = bins.data_ptr<std::int64_t>();
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += data[i];
}

std::int64_t ConfusionMatrix::count(std::int64_t truth, std::int64_t predicted) const {
  return counts_.at(static_cast<std::size_t>(truth * num_classes_ + predicted));
}

std::int64_t ConfusionMatrix::total() const {
  std::int64_t sum = 0;
  for (auto c : counts_) sum += c;
  return sum;
}

MiouResult ConfusionMatrix::result() const {
  MiouResult r;
  r.iou.assign(static_cast<std::size_t>(num_classes_), std::numeric_limits<double>::quiet_NaN());
  r.included.assign(static_cast<std::size_t>(num_classes_), false);
  double sum = 0.0;
  int n = 0;
  for (std::int64_t c = 0; c < num_classes_; ++c) {
    const auto tp = count(c, c);
    std::int64_t fp = 0;
    std::int64_t fn = 0;
    for (std::int64_t o = 0; o < num_classes_; ++o) {
      if (o == c) continue;
      fp += count(o, c);
      fn += count(c, o);
    }
    const auto denom = tp + fp + fn;
    if (denom == 0) continue;
    const double iou = static_cast<double>(tp) / static_cast<double>(denom);
    r.iou[static_cast<std::size_t>(c)] = iou;
    r.included[static_cast<std::size_t>(c)] = true;
    sum += iou;
    ++n;
  }
  r.miou = n > 0 ? sum / n : 0.0;
  return r;
}

MiouResult compute_miou(const torch::Tensor& predictions, const torch::Tensor& ground_truths,
                        std::int64_t num_classes) {
  ConfusionMatrix cm(num_classes);
  cm.add(predictions, ground_truths);
  return cm.result();
}

namespace {

torch::Tensor as_rows(const torch::Tensor& x) {
  if (x.dim() != 2) throw std::invalid_argument("MMD samples must be (n, d)");
  return x.to(torch::kFloat64).contiguous();
}

// -1, 0, 1 comparing two row sets lexicographically (sizes first).
int compare_sets(const torch::Tensor& a, const torch::Tensor& b) {
  if (a.size(0) != b.size(0)) return a.size(0) < b.size(0) ? -1 : 1;
  const auto* pa = a.data_ptr<double>();
  const auto* pb = b.data_ptr<double>();
  for (std::int64_t i = 0; i < a.numel(); ++i) {
    if (pa[i] != pb[i]) return pa[i] < pb[i] ? -1 : 1;
  }
  return 0;
}

torch::Tensor squared_distances(const torch::Tensor& x, const torch::Tensor& y) {
  const auto xx = x.pow(2).sum(1, true);
  const auto yy = y.pow(2).sum(1, true).t();
  return (xx + yy - 2.0 * x.matmul(y.t())).clamp_min(0.0);
}

}  // namespace

MMDResult compute_mmd(const torch::Tensor& a_in, const torch::Tensor& b_in,
                      std::optional<double> bandwidth) {
  auto a = as_rows(a_in);
  auto b = as_rows(b_in);
  if (a.size(0) == 0 || b.size(0) == 0) throw std::invalid_argument("MMD sample set is empty");
  if (a.size(1) != b.size(1)) throw std::invalid_argument("MMD sample dimensions differ");
  MMDResult r;
  r.n = a.size(0);
  r.m = b.size(0);
  // Canonical order makes the estimate exactly symmetric in its arguments.
  const int order = compare_sets(a, b);
  if (order > 0) std::swap(a, b);

  double sigma = 0.0;
  if (bandwidth) {
    if (!(*bandwidth > 0.0)) throw std::invalid_argument("MMD bandwidth must be positive");
    sigma = *bandwidth;
  } else {
    const auto pooled = torch::cat({a, b});
    const auto d2 = squared_distances(pooled, pooled);
    const auto n = pooled.size(0);
    const auto upper = torch::triu_indices(n, n, 1);
    const auto dist = d2.index({upper[0], upper[1]}).sqrt();
    sigma = dist.numel() > 0 ? dist.median().item<double>() : 1.0;
    if (!(sigma > 0.0)) sigma = 1.0;
  }
  r.bandwidth = sigma;
  if (order == 0) return r;

  const double gamma = 1.0 / (2.0 * sigma * sigma);
  const double kaa = torch::exp(-gamma * squared_distances(a, a)).mean().item<double>();
  const double kbb = torch::exp(-gamma * squared_distances(b, b)).mean().item<double>();
  const double kab = torch::exp(-gamma * squared_distances(a, b)).mean().item<double>();
  r.value = std::sqrt(std::max(kaa + kbb - 2.0 * kab, 0.0));
  return r;
}

namespace {

template <typename Fn>
torch::Tensor batched(const torch::Tensor& x, std::int64_t batch_size, Fn&& fn) {
  std::vector<torch::Tensor> out;
  for (std::int64_t i = 0; i < x.size(0); i += batch_size) {
    out.push_back(fn(x.narrow(0, i, std::min(batch_size, x.size(0) - i))));
  }
  return torch::cat(out);
}

struct EvalGuard {
  explicit EvalGuard(ModelBundle& b) : bundle(b), was_training(b->is_training()) { b->eval(); }
  ~EvalGuard() { bundle->train(was_training); }
  ModelBundle& bundle;
  bool was_training;
  torch::NoGradGuard no_grad;
};

}  // namespace

torch::Tensor regular_inference(ModelBundle& bundle, const torch::Tensor& x) {
  EvalGuard guard(bundle);
  return bundle->forward_student(x).argmax(1);
}

torch::Tensor implicit_inference(ModelBundle& bundle, const torch::Tensor& x_t, std::int64_t t) {
  if (t < 0 || t > bundle->config.max_timestep) {
    throw std::out_of_range("implicit inference timestep " + std::to_string(t) +
                            " outside [0, " + std::to_string(bundle->config.max_timestep) + "]");
  }
  if (t == 0) return regular_inference(bundle, x_t);
  EvalGuard guard(bundle);
  return bundle->forward_bridged(x_t, t).argmax(1);
}

torch::Tensor clean_estimate(const torch::Tensor& x_t, const torch::Tensor& head_output,
                             std::int64_t t, const Degrader& degrader) {
  degrader.schedule.check_degradation_step(t);
  if (head_output.sizes() != x_t.sizes()) {
    throw std::invalid_argument("head output must match the degraded input shape");
  }
  if (degrader.mode == DegradationMode::kNoise) {
    return reconstruct_from_noise(x_t, head_output, t, degrader.schedule);
  }
  return head_output;
}

torch::Tensor reconstruct_clean(ModelBundle& bundle, const torch::Tensor& x_t, std::int64_t t,
                                const Degrader& degrader) {
  degrader.schedule.check_degradation_step(t);
  EvalGuard guard(bundle);
  const auto head = bundle->forward_reconstruction(x_t, t);
  const auto full = F::interpolate(
      head, F::InterpolateFuncOptions()
                .size(std::vector<std::int64_t>{x_t.size(2), x_t.size(3)})
                .mode(torch::kBilinear)
                .align_corners(false));
  return clean_estimate(x_t, full, t, degrader);
}

torch::Tensor explicit_inference_from(ModelBundle& bundle, const torch::Tensor& x_t,
                                      const torch::Tensor& head_output, std::int64_t t,
                                      const Degrader& degrader) {
  return regular_inference(bundle, clean_estimate(x_t, head_output, t, degrader).clamp(-1.0, 1.0));
}

torch::Tensor explicit_inference_with_noise(ModelBundle& bundle, const torch::Tensor& x_t,
                                            const torch::Tensor& eps_hat, std::int64_t t,
                                            const NoiseSchedule& schedule) {
  Degrader degrader;
  degrader.schedule = schedule;
  return explicit_inference_from(bundle, x_t, eps_hat, t, degrader);
}

torch::Tensor explicit_inference(ModelBundle& bundle, const torch::Tensor& x_t, std::int64_t t,
                                 const Degrader& degrader) {
  const auto x0 = reconstruct_clean(bundle, x_t, t, degrader);
  return regular_inference(bundle, x0.clamp(-1.0, 1.0));
}

std::string SweepMode::tag() const {
  switch (kind) {
    case SweepKind::kImplicitMatched: return "implicit";
    case SweepKind::kImplicitFixed: return "implicit:" + std::to_string(t_input);
    case SweepKind::kExplicit: return "explicit";
    case SweepKind::kWeak: return "baseline_weak";
  }
  return "?";
}

SweepMode parse_sweep_mode(std::string_view text) {
  SweepMode m;
  if (text == "implicit") return m;
  if (text == "explicit") {
    m.kind = SweepKind::kExplicit;
    return m;
  }
  if (text == "weak" || text == "baseline_weak") {
    m.kind = SweepKind::kWeak;
    return m;
  }
  constexpr std::string_view prefix = "implicit:";
  if (text.substr(0, prefix.size()) == prefix) {
    const std::string number(text.substr(prefix.size()));
    std::size_t used = 0;
    long long t = -1;
    try {
      t = std::stoll(number, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != number.size() || number.empty() || t < 0) {
      throw std::invalid_argument("bad sweep mode '" + std::string(text) + "'");
    }
    m.kind = SweepKind::kImplicitFixed;
    m.t_input = t;
    return m;
  }
  throw std::invalid_argument("unknown sweep mode '" + std::string(text) +
                              "' (expected implicit, implicit:<t>, explicit or weak)");
}

torch::Tensor degrade_for_level(const torch::Tensor& images, const Degrader& degrader,
                                std::int64_t t, std::uint64_t seed, std::uint64_t salt) {
  if (t == 0) return images;
  Rng rng(mix_seed(seed, SeedStream::kEvaluation,
                   (static_cast<std::uint64_t>(t) << 8) | (salt & 0xff)));
  return degrader.apply(images, t, rng).x_t;
}

MiouResult evaluate_split(ModelBundle& bundle, const torch::Tensor& images,
                          const torch::Tensor& labels, std::int64_t batch_size) {
  const auto pred = batched(images, batch_size,
                            [&](const torch::Tensor& x) { return regular_inference(bundle, x); });
  return compute_miou(pred, labels, bundle->config.num_classes);
}

std::vector<SweepCurve> degradation_sweep(ModelBundle& bundle, const torch::Tensor& images,
                                          const torch::Tensor& labels, const Degrader& degrader,
                                          const std::vector<std::int64_t>& t_grid,
                                          const std::vector<SweepMode>& modes,
                                          std::uint64_t seed, std::int64_t batch_size) {
  const auto T = degrader.schedule.T;
  for (auto t : t_grid) {
    if (t < 0 || t > T) throw std::out_of_range("sweep level " + std::to_string(t) + " outside [0, T]");
  }
  std::vector<SweepCurve> curves;
  for (const auto& m : modes) {
    if (m.kind == SweepKind::kImplicitFixed && m.t_input > T) {
      throw std::out_of_range("sweep t_input " + std::to_string(m.t_input) + " outside [0, T]");
    }
    curves.push_back({m.tag(), {}});
  }
  const auto K = bundle->config.num_classes;
  for (auto t : t_grid) {
    const auto degraded = degrade_for_level(images, degrader, t, seed);
    for (std::size_t i = 0; i < modes.size(); ++i) {
      const auto& m = modes[i];
      std::int64_t t_input = 0;
      std::function<torch::Tensor(const torch::Tensor&)> predict;
      switch (m.kind) {
        case SweepKind::kImplicitMatched:
          t_input = t;
          predict = [&, t_input](const torch::Tensor& x) { return implicit_inference(bundle, x, t_input); };
          break;
        case SweepKind::kImplicitFixed:
          t_input = m.t_input;
          predict = [&, t_input](const torch::Tensor& x) { return implicit_inference(bundle, x, t_input); };
          break;
        case SweepKind::kExplicit:
          t_input = t;
          predict = [&, t_input](const torch::Tensor& x) {
            return t_input == 0 ? regular_inference(bundle, x)
                                : explicit_inference(bundle, x, t_input, degrader);
          };
          break;
        case SweepKind::kWeak:
          predict = [&](const torch::Tensor& x) { return regular_inference(bundle, x); };
          break;
      }
      const auto pred = batched(degraded, batch_size, predict);
      curves[i].points.push_back({t, t_input, compute_miou(pred, labels, K).miou});
    }
  }
  return curves;
}

MmdFeature parse_mmd_feature(std::string_view name) {
  if (name == "pixels") return MmdFeature::kPixels;
  if (name == "encoder") return MmdFeature::kEncoder;
  throw std::invalid_argument("unknown MMD feature '" + std::string(name) +
                              "' (expected pixels or encoder)");
}

std::string to_string(MmdFeature feature) {
  return feature == MmdFeature::kPixels ? "pixels" : "encoder";
}

torch::Tensor mmd_features(const torch::Tensor& images, MmdFeature feature, ModelBundle* bundle) {
  if (feature == MmdFeature::kPixels) {
    return F::adaptive_avg_pool2d(images, F::AdaptiveAvgPool2dFuncOptions({16, 16}))
        .reshape({images.size(0), -1});
  }
  if (bundle == nullptr) throw std::invalid_argument("encoder MMD features need a model");
  EvalGuard guard(*bundle);
  return batched(images, 32, [&](const torch::Tensor& x) {
    return (*bundle)->student->encoder->forward(x).back().mean({2, 3});
  });
}

std::vector<MmdPoint> mmd_vs_degradation(const torch::Tensor& a_images,
                                         const torch::Tensor& b_images, const Degrader& degrader,
                                         const std::vector<std::int64_t>& t_grid,
                                         MmdFeature feature, std::uint64_t seed,
                                         ModelBundle* bundle, std::optional<double> bandwidth) {
  std::vector<MmdPoint> out;
  for (auto t : t_grid) {
    if (t < 0 || t > degrader.schedule.T) {
      throw std::out_of_range("MMD level " + std::to_string(t) + " outside [0, T]");
    }
    // Common random numbers: both sets are degraded with the same draws.
    const auto fa = mmd_features(degrade_for_level(a_images, degrader, t, seed, 1), feature, bundle);
    const auto fb = mmd_features(degrade_for_level(b_images, degrader, t, seed, 1), feature, bundle);
    const auto r = compute_mmd(fa, fb, bandwidth);
    out.push_back({t, r.value, r.bandwidth});
  }
  return out;
}

void write_sweep_csv(const std::filesystem::path& path, const std::vector<SweepCurve>& curves) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "mode,t_degrade,t_input,miou\n";
  char line[128];
  for (const auto& c : curves) {
    for (const auto& p : c.points) {
      std::snprintf(line, sizeof(line), ",%lld,%lld,%.9g\n", static_cast<long long>(p.t_degrade),
                    static_cast<long long>(p.t_input), p.miou);
      out << c.mode << line;
    }
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

void write_mmd_csv(const std::filesystem::path& path, const std::vector<MmdPoint>& points) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "t,mmd,bandwidth\n";
  char line[128];
  for (const auto& p : points) {
    std::snprintf(line, sizeof(line), "%lld,%.9g,%.9g\n", static_cast<long long>(p.t), p.mmd,
                  p.bandwidth);
    out << line;
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

}  // namespace dida
