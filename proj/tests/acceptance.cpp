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

// Acceptance gate: runs criteria 1-12 and prints one PASS/FAIL line each.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "CLI11.hpp"
#include "json.hpp"

#include "dida/checkpoint.hpp"
#include "dida/dataset.hpp"
#include "dida/degradation.hpp"
#include "dida/digest.hpp"
#include "dida/evaluation.hpp"
#include "dida/model.hpp"
#include "dida/objectives.hpp"
#include "dida/rng.hpp"
#include "dida/schedule.hpp"
#include "dida/trainer.hpp"

namespace {

namespace fs = std::filesystem;
namespace F = torch::nn::functional;
using nlohmann::json;
using namespace dida;

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

struct Outcome {
  bool pass = true;
  std::string detail;
  json data = json::object();

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail += (detail.empty() ? "" : "; ") + what;
    }
  }
  void merge(const Outcome& o, const std::string& tag) {
    if (!o.pass) {
      pass = false;
      detail += (detail.empty() ? "" : "; ") + tag + ": " + o.detail;
    }
    data[tag] = o.data;
  }
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string parameter_digest(const std::vector<torch::Tensor>& params) {
  std::string bytes;
  for (const auto& p : params) {
    const auto c = p.detach().contiguous();
    bytes.append(static_cast<const char*>(c.data_ptr()), c.numel() * c.element_size());
  }
  return sha256_hex(bytes);
}

ModelConfig tiny_model() {
  ModelConfig c;
  c.num_classes = 2;
  c.widths = {4, 4};
  c.decoder_dim = 4;
  c.reconstruction_dim = 4;
  c.time_dim = 8;
  c.norm_groups = 2;
  c.max_timestep = 10;
  return c;
}

double finite_difference_error(const std::function<torch::Tensor()>& loss,
                               const std::vector<torch::Tensor>& params, std::int64_t per_tensor) {
  for (auto p : params) {
    if (p.grad().defined()) p.mutable_grad().zero_();
  }
  loss().backward();
  double worst = 0.0;
  const double h = 1e-6;
  std::mt19937_64 pick(99);
  for (auto p : params) {
    const auto grad = p.grad().defined() ? p.grad().clone() : torch::zeros_like(p);
    auto flat = p.detach().view({-1});
    const auto gflat = grad.view({-1});
    for (std::int64_t k = 0; k < std::min<std::int64_t>(per_tensor, flat.numel()); ++k) {
      const auto i = static_cast<std::int64_t>(pick() % static_cast<std::uint64_t>(flat.numel()));
      const double orig = flat[i].item<double>();
      double plus = 0.0;
      double minus = 0.0;
      {
        torch::NoGradGuard ng;
        flat[i] = orig + h;
        plus = loss().item<double>();
        flat[i] = orig - h;
        minus = loss().item<double>();
        flat[i] = orig;
      }
      const double numeric = (plus - minus) / (2.0 * h);
      const double analytic = gflat[i].item<double>();
      const double scale = std::max({std::abs(numeric), std::abs(analytic), 1e-5});
      worst = std::max(worst, std::abs(numeric - analytic) / scale);
    }
  }
  return worst;
}

struct RunResult {
  fs::path dir;
  fs::path checkpoint;
  double seconds = 0.0;
  double miou = 0.0;
  std::vector<std::string> step_digests;  // student parameters after each step
  double ema_rounded_error = 0.0;         // teacher vs dtype-rounded recurrence
  double ema_double_error = 0.0;          // teacher vs unrounded double recurrence
};

class Acceptance {
 public:
  explicit Acceptance(fs::path work) : work_(std::move(work)) { fs::create_directories(work_); }

  const LoadedDataset& data() {
    if (!data_) {
      const auto root = work_ / "data";
      if (!fs::exists(root / "manifest.json")) {
        fs::remove_all(root);
        generate_benchmark(BenchmarkConfig{}, root);
      }
      data_ = std::make_unique<LoadedDataset>(load_dataset(root / "manifest.json"));
    }
    return *data_;
  }

  TrainConfig base_config(const std::string& name) {
    data();
    TrainConfig c;
    c.data_root = work_ / "data";
    c.output_dir = work_ / "runs" / name;
    c.checkpoint_every = 0;
    return c;
  }

  enum Track { kDigests = 1, kEma = 2 };

  RunResult train(const std::string& name, TrainConfig config, int track = 0,
                   bool evaluate = false) {
    fs::remove_all(config.output_dir);
    RunResult r;
    r.dir = config.output_dir;
    Stopwatch watch;
    Trainer trainer(config, data());
    std::vector<torch::Tensor> rounded;
    std::vector<torch::Tensor> exact;
    if (track & kEma) {
      for (const auto& p : trainer.state().bundle->teacher->parameters()) {
        rounded.push_back(p.detach().to(torch::kFloat64));
        exact.push_back(p.detach().to(torch::kFloat64));
      }
    }
    const double beta = config.ema_beta;
    const auto result = trainer.run([&](const Batch&, const Batch&, const StepRecord&) {
      auto& bundle = trainer.state().bundle;
      if (track & kDigests) r.step_digests.push_back(parameter_digest(bundle->student->parameters()));
      if (track & kEma) {
        const auto s = bundle->student->parameters();
        const auto t = bundle->teacher->parameters();
        for (std::size_t i = 0; i < s.size(); ++i) {
          const auto sd = s[i].detach().to(torch::kFloat64);
          rounded[i] = (beta * rounded[i] + (1.0 - beta) * sd).to(t[i].scalar_type()).to(torch::kFloat64);
          exact[i] = beta * exact[i] + (1.0 - beta) * sd;
          const auto td = t[i].detach().to(torch::kFloat64);
          r.ema_rounded_error = std::max(r.ema_rounded_error, (rounded[i] - td).abs().max().item<double>());
          r.ema_double_error = std::max(r.ema_double_error, (exact[i] - td).abs().max().item<double>());
        }
      }
    });
    r.seconds = watch.seconds();
    r.checkpoint = result.final_checkpoint;
    if (evaluate) {
      auto bundle = load_bundle(r.checkpoint);
      const auto& val = target_val();
      r.miou = evaluate_split(bundle, val.images, val.labels).miou;
    }
    std::cout << "  [" << name << "] " << config.iterations << " iterations in " << fmt(r.seconds)
              << " s" << (evaluate ? ", target-val mIoU " + fmt(r.miou) : "") << std::endl;
    return r;
  }

  const StackedSplit& target_val() {
    if (!val_) val_ = std::make_unique<StackedSplit>(stack_split(data().split("target_val"), true));
    return *val_;
  }

  torch::Tensor sample_images(std::int64_t n, torch::ScalarType dtype = torch::kFloat32) {
    return target_val().images.slice(0, 0, n).to(dtype);
  }

  // --- criteria -----------------------------------------------------------

  Outcome schedules() {
    Outcome o;
    for (auto kind : {ScheduleKind::kLinear, ScheduleKind::kCosine, ScheduleKind::kSigmoid}) {
      for (std::int64_t T : {10, 100}) {
        const auto s = build_schedule(kind, T);
        const std::string tag = to_string(kind) + "/T=" + std::to_string(T);
        o.require(static_cast<std::int64_t>(s.alpha_bar.size()) == T + 1, tag + " length");
        o.require(s.alpha_bar[0] == 1.0, tag + " alpha_bar_0 != 1");
        bool strict = true;
        for (std::int64_t t = 1; t <= T; ++t) strict = strict && s.alpha_bar[t] < s.alpha_bar[t - 1];
        o.require(strict, tag + " not strictly decreasing");
        o.data[tag] = s.alpha_bar[T];
        if (kind == ScheduleKind::kSigmoid && T == 100) {
          o.require(s.alpha_bar[T] <= 0.01, tag + " alpha_bar_T=" + fmt(s.alpha_bar[T]));
        }
      }
    }
    o.detail = o.pass ? "alpha_bar_T(sigmoid,100)=" + fmt(o.data["sigmoid/T=100"].get<double>()) : o.detail;
    return o;
  }

  Outcome degradation_statistics() {
    Outcome o;
    const auto s = build_schedule(ScheduleKind::kSigmoid, 100);
    Rng base(11);
    const auto x0 = base.uniform({1, 3, 4, 4}, torch::kFloat64) * 2 - 1;
    const auto batch = x0.expand({10000, 3, 4, 4}).contiguous();
    double worst_mean = 0.0;
    double worst_var = 0.0;
    for (std::int64_t t : {1, 50, 100}) {
      Rng rng(mix_seed(2, SeedStream::kEvaluation, static_cast<std::uint64_t>(t)));
      const double a = s.at(t);
      const auto d = degrade_noise(batch, t, s, rng).x_t - std::sqrt(a) * batch;
      const double mean_err = d.mean(0).abs().max().item<double>() / std::sqrt(1 - a);
      const double var_err = (d.var(0, false) / (1 - a) - 1).abs().max().item<double>();
      worst_mean = std::max(worst_mean, mean_err);
      worst_var = std::max(worst_var, var_err);
    }
    o.require(worst_mean <= 0.05, "noise mean off by " + fmt(worst_mean) + " std");
    o.require(worst_var <= 0.05, "noise variance off by " + fmt(worst_var));

    double worst_mask = 0.0;
    Rng mask_rng(12);
    for (double tau : {0.25, 0.5, 0.75}) {
      double total = 0.0;
      for (int i = 0; i < 100; ++i) {
        total += generate_cowmask(64, 64, tau, 6.0, mask_rng).mean().item<double>();
      }
      worst_mask = std::max(worst_mask, std::abs(total / 100.0 - tau));
    }
    o.require(worst_mask <= 0.02, "cowmask fraction off by " + fmt(worst_mask));

    const auto chain = build_blur_chain(100, 9, 0.5, 0.02);
    const auto image = sample_images(1, torch::kFloat64);
    double worst_blur = 0.0;
    for (std::int64_t t : {1, 25, 50, 100}) {
      auto slow = image.clone();
      for (std::int64_t step = 0; step < t; ++step) {
        const auto& k = chain.step_kernels[static_cast<std::size_t>(step)];
        const auto kt = torch::tensor(k, torch::kFloat64);
        const auto n = static_cast<std::int64_t>(k.size());
        const auto pad = n / 2;
        slow = F::conv2d(F::pad(slow, F::PadFuncOptions({pad, pad, 0, 0}).mode(torch::kReflect)),
                         kt.view({1, 1, 1, n}).repeat({3, 1, 1, 1}), F::Conv2dFuncOptions().groups(3));
        slow = F::conv2d(F::pad(slow, F::PadFuncOptions({0, 0, pad, pad}).mode(torch::kReflect)),
                         kt.view({1, 1, n, 1}).repeat({3, 1, 1, 1}), F::Conv2dFuncOptions().groups(3));
      }
      worst_blur = std::max(worst_blur, (degrade_blur(image, t, chain).x_t - slow).abs().max().item<double>());
    }
    o.require(worst_blur <= 1e-3, "blur kernel off by " + fmt(worst_blur));
    o.data = {{"noise_mean_err_std", worst_mean}, {"noise_var_rel_err", worst_var},
              {"cowmask_err", worst_mask}, {"blur_max_abs", worst_blur}};
    if (o.pass) {
      o.detail = "mean " + fmt(worst_mean) + " var " + fmt(worst_var) + " mask " + fmt(worst_mask) +
                 " blur " + fmt(worst_blur);
    }
    return o;
  }

  Outcome inversion() {
    Outcome o;
    const auto s = build_schedule(ScheduleKind::kSigmoid, 100);
    Rng rng(13);
    const auto x0 = rng.uniform({4, 3, 64, 64}, torch::kFloat64) * 2 - 1;
    double worst = 0.0;
    double worst_float = 0.0;
    for (std::int64_t t : {1, 50, 100}) {
      const auto r = degrade_noise(x0, t, s, rng);
      worst = std::max(worst, (reconstruct_from_noise(r.x_t, r.target, t, s) - x0).abs().max().item<double>());
      const auto rf = degrade_noise_with(x0.to(torch::kFloat32), t, s, r.target.to(torch::kFloat32));
      worst_float = std::max(
          worst_float,
          (reconstruct_from_noise(rf.x_t, rf.target, t, s).to(torch::kFloat64) - x0).abs().max().item<double>());
    }
    o.require(worst <= 1e-5, "max-abs " + fmt(worst));
    o.data = {{"max_abs_float64", worst}, {"max_abs_float32", worst_float}};
    if (o.pass) o.detail = "max-abs " + fmt(worst) + " (float32: " + fmt(worst_float) + ")";
    return o;
  }

  Outcome structural(DegradationMode mode) {
    Outcome o;
    TrainConfig config = base_config("structural");
    config.mode = mode;
    const auto degrader = make_degrader(config);
    const auto x0 = sample_images(4);
    Rng rng(mix_seed(14, SeedStream::kEvaluation, static_cast<std::uint64_t>(mode)));
    torch::NoGradGuard no_grad;

    torch::manual_seed(21);
    auto zeroed = make_bundle(config);
    for (auto& p : zeroed->diffusion_encoder->parameters()) p.zero_();
    zeroed->eval();
    bool fusion = true;
    for (std::int64_t t : {1, 50, 100}) {
      const auto xt = degrader.apply(x0, t, rng).x_t;
      fusion = fusion && torch::equal(zeroed->forward_bridged(xt, t), zeroed->forward_student(xt));
    }
    o.require(fusion, "zeroed diffusion encoder changes the output");

    torch::manual_seed(22);
    auto bundle = make_bundle(config);
    bundle->eval();
    const auto z = torch::randn({4, 32, 8, 8});
    bool modulation = torch::equal(apply_modulation(z, torch::zeros({4, 32}), torch::zeros({4, 32})), z);
    auto plain = make_bundle(config);
    copy_weights(*plain, *bundle);
    for (auto& p : plain->diffusion_encoder->time->scale_mlps->parameters()) p.zero_();
    for (auto& p : plain->diffusion_encoder->time->shift_mlps->parameters()) p.zero_();
    const auto steps = torch::tensor({1, 30, 60, 100}, torch::kInt64);
    for (std::size_t b = 0; b < config.model.widths.size(); ++b) {
      const auto zb = torch::randn({4, config.model.widths[b], 4, 4});
      modulation = modulation && torch::equal(plain->diffusion_encoder->time->modulate(zb, steps, b), zb);
    }
    const auto with_time = plain->diffusion_encoder->forward(x0, steps);
    const auto without = plain->diffusion_encoder->body->forward(x0);
    for (std::size_t i = 0; i < with_time.size(); ++i) {
      modulation = modulation && torch::equal(with_time[i], without[i]);
    }
    o.require(modulation, "zero scale/shift modulation is not the identity");

    const auto xt = degrader.apply(x0, 50, rng).x_t;
    o.require(torch::equal(implicit_inference(bundle, xt, 0), regular_inference(bundle, xt)),
              "implicit inference at t=0 differs from regular inference");

    auto dbl = make_bundle(config);
    copy_weights(*dbl, *bundle);
    dbl->to(torch::kFloat64);
    const auto x0d = x0.to(torch::kFloat64);
    const auto clean = regular_inference(dbl, x0d);
    bool oracle = true;
    for (std::int64_t t : {1, 50, 100}) {
      const auto r = degrader.apply(x0d, t, rng);
      oracle = oracle && torch::equal(explicit_inference_from(dbl, r.x_t, r.target, t, degrader), clean);
    }
    o.require(oracle, "explicit inference with the true target differs from clean inference");
    if (o.pass) o.detail = "fusion, modulation, routing and oracle identities exact";
    return o;
  }

  Outcome losses(DegradationMode mode) {
    Outcome o;
    torch::manual_seed(30);
    double analytic = 0.0;
    for (std::int64_t k : {2, 4}) {
      const auto labels = torch::randint(0, k, {2, 8, 8}, torch::kInt64);
      analytic = std::max(analytic, std::abs(weighted_ce(torch::zeros({2, k, 8, 8}, torch::kFloat64), labels, 1.0)
                                                 .item<double>() - std::log(static_cast<double>(k))));
      const auto perfect = torch::one_hot(labels, k).permute({0, 3, 1, 2}).to(torch::kFloat64) * 50.0;
      analytic = std::max(analytic, std::abs(weighted_ce(perfect, labels, 1.0).item<double>()));
      const auto logits = torch::randn({2, k, 8, 8}, torch::kFloat64);
      const double full = weighted_ce(logits, labels, 1.0).item<double>();
      for (double q : {0.0, 0.3, 0.7}) {
        analytic = std::max(analytic, std::abs(weighted_ce(logits, labels, q).item<double>() - q * full));
      }
    }
    LossComponents c{torch::tensor(0.7, torch::kFloat64), torch::tensor(0.2, torch::kFloat64),
                     torch::tensor(1.3, torch::kFloat64), torch::tensor(0.4, torch::kFloat64)};
    for (double l : {0.0, 0.5, 2.0}) {
      analytic = std::max(analytic, std::abs(total_loss(c, LossWeights{l, 5.0, {}}).item<double>() -
                                             (0.9 + l * 1.3 + 5.0 * 0.4)));
      analytic = std::max(analytic, std::abs(total_loss(c, LossWeights{0.5, l, {}}).item<double>() -
                                             (0.9 + 0.65 + l * 0.4)));
    }
    o.require(analytic <= 1e-6, "analytic loss values off by " + fmt(analytic));

    torch::manual_seed(31);
    ModelBundle bundle(tiny_model());
    bundle->to(torch::kFloat64);
    TrainConfig config;
    config.T = 10;
    config.mode = mode;
    const auto degrader = make_degrader(config);
    const auto weights = LossWeights::for_schedule(degrader.schedule, mode);
    const auto src = torch::rand({2, 3, 8, 8}, torch::kFloat64) * 2 - 1;
    const auto tgt = torch::rand({2, 3, 8, 8}, torch::kFloat64) * 2 - 1;
    auto src_labels = torch::randint(0, 2, {2, 8, 8}, torch::kInt64);
    src_labels.index_put_({0, 0}, kIgnoreLabel);
    const auto pseudo = make_pseudo_label(bundle->forward_teacher(tgt), 0.5);
    Rng rng(32);
    const std::int64_t t = 6;
    const auto ds = degrader.apply(src, t, rng);
    const auto dt = degrader.apply(tgt, t, rng);
    const ReconstructionTarget target{downsample_target(torch::cat({ds.target, dt.target})), mode};
    const auto xt = torch::cat({ds.x_t, dt.x_t});
    std::vector<torch::Tensor> trainable = bundle->encoder_parameters();
    for (auto& p : bundle->head_parameters()) trainable.push_back(p);

    const double e_s = finite_difference_error([&] { return supervised_loss(bundle, src, src_labels); },
                                               bundle->student->parameters(), 6);
    const double e_t = finite_difference_error([&] { return adaptation_loss(bundle, tgt, 0.5).loss; },
                                               bundle->student->parameters(), 6);
    const double e_d = finite_difference_error(
        [&] { return dic_loss(bundle, src_labels, pseudo, t, ds.x_t, dt.x_t); }, trainable, 4);
    const double e_r = finite_difference_error(
        [&] { return reconstruction_loss(bundle, xt, t, target, mode, weights); }, trainable, 4);
    o.require(pseudo.confidence.sum().item<double>() > 0.0, "no confident pseudo-labels");
    o.require(e_s <= 1e-4, "L^S rel err " + fmt(e_s));
    o.require(e_t <= 1e-4, "L^T rel err " + fmt(e_t));
    o.require(e_d <= 1e-4, "L^D rel err " + fmt(e_d));
    o.require(e_r <= 1e-4, "L^R rel err " + fmt(e_r));
    o.data = {{"analytic", analytic}, {"fd_S", e_s}, {"fd_T", e_t}, {"fd_D", e_d}, {"fd_R", e_r}};
    if (o.pass) {
      o.detail = "analytic " + fmt(analytic) + ", fd S/T/D/R " + fmt(e_s) + "/" + fmt(e_t) + "/" +
                 fmt(e_d) + "/" + fmt(e_r);
    }
    return o;
  }

  TrainConfig equivalence_config(const std::string& name, DegradationMode mode, TrainMethod method) {
    auto c = base_config(name);
    c.iterations = 50;
    c.warmup_iters = 10;
    c.mode = mode;
    c.method = method;
    c.lambda_D = 0.0;
    c.lambda_R = 0.0;
    return c;
  }

  std::pair<RunResult, RunResult> equivalence_runs(DegradationMode mode, const std::string& suffix) {
    const auto tag = to_string(mode) + suffix;
    auto a = train("zero_bridge_" + tag, equivalence_config("zero_bridge_" + tag, mode, TrainMethod::kDida),
                   kDigests);
    auto b = train("self_training_" + tag,
                   equivalence_config("self_training_" + tag, mode, TrainMethod::kSelfTraining), kDigests);
    return {a, b};
  }

  Outcome self_training_equivalence(DegradationMode mode) {
    Outcome o;
    const auto [a, b] = equivalence_runs(mode, "");
    equivalence_[mode] = {a, b};
    std::size_t first_diff = a.step_digests.size();
    for (std::size_t i = 0; i < a.step_digests.size(); ++i) {
      if (i >= b.step_digests.size() || a.step_digests[i] != b.step_digests[i]) {
        first_diff = i;
        break;
      }
    }
    o.require(a.step_digests.size() == 50 && b.step_digests.size() == 50, "wrong number of steps");
    o.require(first_diff == a.step_digests.size(), "parameters diverge at step " + std::to_string(first_diff + 1));
    o.require(a.seconds + b.seconds < 120.0, "runtime " + fmt(a.seconds + b.seconds) + " s");
    o.data = {{"steps", a.step_digests.size()}, {"seconds", a.seconds + b.seconds}};
    if (o.pass) o.detail = "50 steps bit-identical";
    return o;
  }

  Outcome ema_exactness(DegradationMode mode) {
    Outcome o;
    auto c = base_config("ema_" + to_string(mode));
    c.iterations = 100;
    c.warmup_iters = 10;
    c.mode = mode;
    const auto r = train("ema_" + to_string(mode), c, kEma);
    o.require(r.ema_rounded_error <= 1e-7, "teacher deviates by " + fmt(r.ema_rounded_error));
    o.require(r.seconds < 60.0, "runtime " + fmt(r.seconds) + " s");
    o.data = {{"max_abs_rounded", r.ema_rounded_error}, {"max_abs_unrounded", r.ema_double_error}};
    if (o.pass) {
      o.detail = "max-abs " + fmt(r.ema_rounded_error) + " (unrounded double recurrence " +
                 fmt(r.ema_double_error) + ")";
    }
    return o;
  }

  Outcome domain_collapse() {
    Outcome o;
    TrainConfig c;
    const auto degrader = make_degrader(c);
    const auto src = stack_split(data().split("source_train"), false).images;
    const auto tgt = stack_split(data().split("target_train"), false).images;
    const auto half = src.size(0) / 2;
    const std::vector<std::int64_t> grid = {0, 25, 50, 75, 100};
    const auto gap = mmd_vs_degradation(src, tgt, degrader, grid, MmdFeature::kPixels, 0);
    const auto control = mmd_vs_degradation(src.slice(0, 0, half), src.slice(0, half, 2 * half),
                                            degrader, grid, MmdFeature::kPixels, 0);
    bool decreasing = true;
    for (std::size_t i = 1; i < gap.size(); ++i) decreasing = decreasing && gap[i].mmd < gap[i - 1].mmd;
    o.require(decreasing, "source/target MMD is not decreasing");
    o.require(gap.back().mmd <= 0.05 * gap.front().mmd,
              "MMD(T)/MMD(0) = " + fmt(gap.back().mmd / gap.front().mmd));
    double control_ratio = 0.0;
    for (const auto& p : control) control_ratio = std::max(control_ratio, p.mmd / gap.front().mmd);
    o.require(control_ratio <= 1.0 / 3.0, "control reaches " + fmt(control_ratio) + " of MMD(0)");
    json curve = json::array();
    for (std::size_t i = 0; i < grid.size(); ++i) {
      curve.push_back({{"t", grid[i]}, {"source_target", gap[i].mmd}, {"control", control[i].mmd}});
    }
    o.data = {{"curve", curve}, {"final_ratio", gap.back().mmd / gap.front().mmd},
              {"max_control_ratio", control_ratio}};
    if (o.pass) {
      std::string values;
      for (const auto& p : gap) values += (values.empty() ? "" : ",") + fmt(p.mmd);
      o.detail = "MMD " + values + "; final ratio " + fmt(gap.back().mmd / gap.front().mmd) +
                 "; control max " + fmt(control_ratio);
    }
    return o;
  }

  const RunResult& adaptation_run(TrainMethod method, std::uint64_t seed) {
    const auto name = (method == TrainMethod::kDida ? "dida_s" : "baseline_s") + std::to_string(seed);
    auto it = adaptation_.find(name);
    if (it == adaptation_.end()) {
      auto c = base_config(name);
      c.seed = seed;
      c.method = method;
      if (method == TrainMethod::kSelfTraining) {
        c.lambda_D = 0.0;
        c.lambda_R = 0.0;
      }
      it = adaptation_.emplace(name, train(name, c, 0, true)).first;
    }
    return it->second;
  }

  Outcome adaptation_effect() {
    Outcome o;
    double dida_sum = 0.0;
    double base_sum = 0.0;
    double slowest = 0.0;
    json seeds = json::array();
    std::string detail;
    for (std::uint64_t seed : {0, 1, 2}) {
      const auto& d = adaptation_run(TrainMethod::kDida, seed);
      const auto& b = adaptation_run(TrainMethod::kSelfTraining, seed);
      dida_sum += d.miou;
      base_sum += b.miou;
      slowest = std::max({slowest, d.seconds, b.seconds});
      seeds.push_back({{"seed", seed}, {"dida", d.miou}, {"baseline", b.miou},
                       {"dida_seconds", d.seconds}, {"baseline_seconds", b.seconds}});
      detail += " s" + std::to_string(seed) + " " + fmt(d.miou) + "/" + fmt(b.miou);
    }
    o.require(dida_sum >= base_sum, "mean DiDA mIoU " + fmt(dida_sum / 3) + " < baseline " + fmt(base_sum / 3));
    o.require(slowest <= 1800.0, "slowest run " + fmt(slowest) + " s");
    o.data = {{"seeds", seeds}, {"dida_mean", dida_sum / 3}, {"baseline_mean", base_sum / 3},
              {"slowest_seconds", slowest}};
    const auto summary = "mean " + fmt(dida_sum / 3) + " vs " + fmt(base_sum / 3) + " (dida/baseline:" +
                         detail + "; slowest run " + fmt(slowest) + " s)";
    o.detail = o.pass ? summary : o.detail + "; " + summary;
    return o;
  }

  Outcome matched_timestep() {
    Outcome o;
    int wins = 0;
    json seeds = json::array();
    std::string detail;
    const auto& val = target_val();
    TrainConfig c;
    const auto degrader = make_degrader(c);
    const std::vector<SweepMode> modes = {parse_sweep_mode("implicit"), parse_sweep_mode("implicit:0"),
                                          parse_sweep_mode("explicit"), parse_sweep_mode("weak")};
    for (std::uint64_t seed : {0, 1, 2}) {
      auto bundle = load_bundle(adaptation_run(TrainMethod::kDida, seed).checkpoint);
      const auto curves = degradation_sweep(bundle, val.images, val.labels, degrader, {c.T / 2}, modes, 0);
      const double matched = curves[0].points[0].miou;
      const double zero = curves[1].points[0].miou;
      wins += matched > zero;
      seeds.push_back({{"seed", seed}, {"matched", matched}, {"t0", zero},
                       {"explicit", curves[2].points[0].miou}, {"weak", curves[3].points[0].miou}});
      detail += " s" + std::to_string(seed) + " " + fmt(matched) + "/" + fmt(zero);
    }
    o.require(wins >= 2, "matched t wins in " + std::to_string(wins) + " of 3 seeds");
    o.data = {{"seeds", seeds}, {"wins", wins}};
    const auto summary = std::to_string(wins) + "/3 seeds (matched/t=0:" + detail + ")";
    o.detail = o.pass ? summary : o.detail + "; " + summary;
    return o;
  }

  Outcome extension_parity() {
    Outcome o;
    for (auto mode : {DegradationMode::kBlur, DegradationMode::kMask}) {
      const auto m = to_string(mode);
      Stopwatch w4;
      auto c4 = structural(mode);
      c4.require(w4.seconds() < 10.0, "runtime " + fmt(w4.seconds()) + " s");
      o.merge(c4, m + "/4");
      Stopwatch w5;
      auto c5 = losses(mode);
      c5.require(w5.seconds() < 60.0, "runtime " + fmt(w5.seconds()) + " s");
      o.merge(c5, m + "/5");
      o.merge(self_training_equivalence(mode), m + "/6");
      o.merge(ema_exactness(mode), m + "/7");
    }
    if (o.pass) o.detail = "blur and mask pass criteria 4-7";
    return o;
  }

  Outcome determinism() {
    Outcome o;
    if (!equivalence_.count(DegradationMode::kNoise)) {
      self_training_equivalence(DegradationMode::kNoise);
    }
    const auto& first = equivalence_.at(DegradationMode::kNoise);
    const auto [a, b] = equivalence_runs(DegradationMode::kNoise, "_repeat");
    o.require(slurp(first.first.dir / "metrics.csv") == slurp(a.dir / "metrics.csv"),
              "zero-bridge metrics differ");
    o.require(slurp(first.second.dir / "metrics.csv") == slurp(b.dir / "metrics.csv"),
              "self-training metrics differ");
    o.require(first.first.step_digests == a.step_digests, "zero-bridge parameters differ");

    const auto& original = adaptation_run(TrainMethod::kDida, 0);
    auto c = base_config("dida_s0_repeat");
    c.seed = 0;
    const auto repeat = train("dida_s0_repeat", c);
    const auto x = slurp(original.dir / "metrics.csv");
    const auto y = slurp(repeat.dir / "metrics.csv");
    o.require(!x.empty() && x == y, "seed-0 adaptation metrics differ");
    o.data = {{"metrics_sha256", sha256_hex(x)}};
    if (o.pass) o.detail = "criterion 6 and seed-0 criterion 9 metrics identical (" + sha256_hex(x).substr(0, 16) + ")";
    return o;
  }

  fs::path work_;
  std::unique_ptr<LoadedDataset> data_;
  std::unique_ptr<StackedSplit> val_;
  std::map<DegradationMode, std::pair<RunResult, RunResult>> equivalence_;
  std::map<std::string, RunResult> adaptation_;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria 1-12", "dida_acceptance"};
  fs::path work = "acceptance";
  std::vector<int> only;
  app.add_option("--work-dir", work, "scratch directory for data, runs and the report");
  app.add_option("--only", only, "criteria to run (default: all)")->delimiter(',');
  CLI11_PARSE(app, argc, argv);

  torch::set_num_threads(1);
  std::set<int> selected(only.begin(), only.end());
  if (selected.empty()) {
    for (int i = 1; i <= 12; ++i) selected.insert(i);
  }

  Acceptance acc(work);
  struct Criterion {
    int id;
    const char* name;
    double limit_seconds;  // 0 = no bound beyond what the criterion checks itself
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria = {
      {1, "schedule suite", 1.0, [&] { return acc.schedules(); }},
      {2, "degradation statistics", 60.0, [&] { return acc.degradation_statistics(); }},
      {3, "inversion identity", 1.0, [&] { return acc.inversion(); }},
      {4, "structural identities", 10.0, [&] { return acc.structural(DegradationMode::kNoise); }},
      {5, "loss correctness", 60.0, [&] { return acc.losses(DegradationMode::kNoise); }},
      {6, "self-training equivalence", 120.0,
       [&] { return acc.self_training_equivalence(DegradationMode::kNoise); }},
      {7, "EMA exactness", 60.0, [&] { return acc.ema_exactness(DegradationMode::kNoise); }},
      {8, "domain-collapse MMD", 120.0, [&] { return acc.domain_collapse(); }},
      {9, "desk-scale adaptation effect", 0.0, [&] { return acc.adaptation_effect(); }},
      {10, "matched-t inference", 0.0, [&] { return acc.matched_timestep(); }},
      {11, "extension parity", 0.0, [&] { return acc.extension_parity(); }},
      {12, "determinism", 0.0, [&] { return acc.determinism(); }},
  };

  json report = json::object();
  int failed = 0;
  int ran = 0;
  for (const auto& c : criteria) {
    if (!selected.count(c.id)) continue;
    if (c.id >= 4) acc.data();
    ++ran;
    Stopwatch watch;
    Outcome out;
    try {
      out = c.run();
    } catch (const std::exception& e) {
      out.pass = false;
      out.detail = std::string("exception: ") + e.what();
    }
    const double seconds = watch.seconds();
    if (c.limit_seconds > 0.0 && seconds >= c.limit_seconds) {
      out.require(false, "runtime " + fmt(seconds) + " s exceeds " + fmt(c.limit_seconds) + " s");
    }
    failed += !out.pass;
    std::cout << "criterion " << c.id << " " << (out.pass ? "PASS" : "FAIL") << " " << c.name << ": "
              << out.detail << " [" << fmt(seconds) << " s]" << std::endl;
    report[std::to_string(c.id)] = {{"name", c.name}, {"pass", out.pass}, {"detail", out.detail},
                                    {"seconds", seconds}, {"data", out.data}};
  }
  std::ofstream(work / "acceptance.json") << report.dump(2) << "\n";
  std::cout << "acceptance: " << (ran - failed) << "/" << ran << " criteria passed" << std::endl;
  return failed == 0 ? 0 : 1;
}
