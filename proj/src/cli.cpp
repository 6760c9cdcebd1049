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

#include "dida/cli.hpp"

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "CLI11.hpp"
#include "json.hpp"

#include "dida/checkpoint.hpp"
#include "dida/config.hpp"
#include "dida/dataset.hpp"
#include "dida/evaluation.hpp"
#include "dida/plot.hpp"
#include "dida/trainer.hpp"

#ifndef DIDA_VERSION
#define DIDA_VERSION "0.0.0"
#endif

namespace dida {
namespace fs = std::filesystem;
using nlohmann::json;

const char* version() { return DIDA_VERSION; }

std::vector<std::int64_t> parse_int_list(const std::string& text) {
  std::vector<std::int64_t> out;
  std::stringstream s(text);
  std::string item;
  while (std::getline(s, item, ',')) {
    std::size_t used = 0;
    long long v = -1;
    try {
      v = std::stoll(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (item.empty() || used != item.size() || v < 0) {
      throw std::invalid_argument("bad integer list '" + text + "'");
    }
    out.push_back(v);
  }
  if (out.empty()) throw std::invalid_argument("empty integer list");
  return out;
}

namespace {

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream s(text);
  std::string item;
  while (std::getline(s, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

fs::path default_data_root() {
  if (const char* root = std::getenv(kDataRootEnv); root != nullptr && *root != '\0') return root;
  return "data";
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

// Resolved settings plus version, written next to every command's outputs.
void echo_run(const fs::path& dir, const std::string& command, const json& resolved) {
  json j{{"command", command}, {"version", version()}, {"config", resolved}};
  write_text(dir / (command + "_config.json"), j.dump(2) + "\n");
}

cv::Mat to_bgr8(const torch::Tensor& chw) {
  const auto hwc = chw.detach().clamp(-1.0, 1.0).add(1.0).mul(127.5).round().to(torch::kUInt8)
                       .permute({1, 2, 0}).contiguous();
  cv::Mat rgb(static_cast<int>(hwc.size(0)), static_cast<int>(hwc.size(1)), CV_8UC3,
              hwc.data_ptr<std::uint8_t>());
  cv::Mat bgr;
  cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
  return bgr;
}

struct Labelled {
  torch::Tensor images;
  torch::Tensor labels;
};

Labelled load_split(const fs::path& data_root, const std::string& split) {
  const auto dataset = load_dataset(data_root / "manifest.json");
  const auto samples = dataset.split(split);
  if (samples.empty()) throw std::runtime_error("split '" + split + "' is empty");
  const auto stacked = stack_split(samples, true);
  return {stacked.images, stacked.labels};
}

json miou_json(const MiouResult& r) {
  json per_class = json::array();
  for (std::size_t c = 0; c < r.iou.size(); ++c) {
    per_class.push_back(r.included[c] ? json(r.iou[c]) : json(nullptr));
  }
  return json{{"miou", r.miou}, {"iou", per_class}};
}

}  // namespace

int run(const std::vector<std::string>& args) {
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data());
}

int run(int argc, const char* const* argv) {
  CLI::App app{"Degradation-based domain bridging for segmentation (desk-scale toolkit)", "dida"};
  app.set_version_flag("--version", std::string(version()));
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "generate the synthetic two-domain benchmark");
  BenchmarkConfig bench;
  fs::path gen_out;
  gen->add_option("--seed", bench.seed, "dataset seed");
  gen->add_option("--out", gen_out, "output directory (default: $DIDA_DATA_ROOT or data)");
  gen->add_option("--height", bench.height, "image height");
  gen->add_option("--width", bench.width, "image width");
  gen->add_option("--num-classes", bench.num_classes, "classes including background");
  gen->add_option("--source-train", bench.counts.source_train, "labelled source images");
  gen->add_option("--target-train", bench.counts.target_train, "unlabelled target images");
  gen->add_option("--target-val", bench.counts.target_val, "target validation images");

  // train
  auto* train = app.add_subcommand("train", "train a model (DiDA or the self-training baseline)");
  std::string train_config_path;
  std::string resume_path;
  train->add_option("--config", train_config_path, "flat JSON config with dotted keys");
  train->add_option("--resume", resume_path, "checkpoint to continue from");
  std::map<std::string, std::string> flag_values;
  for (const auto& key : train_config_keys()) {
    train->add_option("--" + key.flag, flag_values[key.key], key.help + " [" + key.key + "]");
  }

  // eval
  auto* eval = app.add_subcommand("eval", "mIoU of a checkpoint on a labelled split");
  std::string ckpt;
  fs::path data_root;
  std::string split = "target_val";
  fs::path out_dir = "results";
  std::int64_t batch = 32;
  for (auto* sub : {eval}) {
    sub->add_option("--checkpoint", ckpt, "model checkpoint")->required();
    sub->add_option("--data-root", data_root, "dataset directory");
    sub->add_option("--split", split, "split to score");
    sub->add_option("--out", out_dir, "output directory");
    sub->add_option("--batch", batch, "inference batch size");
  }

  // sweep
  auto* sweep = app.add_subcommand("sweep", "mIoU versus degradation level");
  std::string t_grid_text = "0,25,50,75,100";
  std::string modes_text = "implicit,explicit,weak";
  std::uint64_t eval_seed = 0;
  sweep->add_option("--checkpoint", ckpt, "model checkpoint")->required();
  sweep->add_option("--data-root", data_root, "dataset directory");
  sweep->add_option("--split", split, "split to score");
  sweep->add_option("--out", out_dir, "output directory");
  sweep->add_option("--batch", batch, "inference batch size");
  sweep->add_option("--t-grid", t_grid_text, "comma-separated degradation levels");
  sweep->add_option("--modes", modes_text, "implicit, implicit:<t>, explicit, weak");
  sweep->add_option("--seed", eval_seed, "degradation seed");

  // mmd
  auto* mmd = app.add_subcommand("mmd", "domain MMD versus degradation level");
  std::string mmd_feature = "pixels";
  std::string mmd_schedule = "sigmoid";
  std::string mmd_mode = "noise";
  std::int64_t mmd_T = 100;
  std::int64_t mmd_samples = 0;
  double mmd_bandwidth = 0.0;
  bool mmd_control = false;
  std::string mmd_ckpt;
  mmd->add_option("--data-root", data_root, "dataset directory");
  mmd->add_option("--out", out_dir, "output directory");
  mmd->add_option("--t-grid", t_grid_text, "comma-separated degradation levels");
  mmd->add_option("--feature", mmd_feature, "pixels or encoder");
  mmd->add_option("--checkpoint", mmd_ckpt, "checkpoint (encoder features)");
  mmd->add_option("--schedule", mmd_schedule, "linear, cosine or sigmoid");
  mmd->add_option("--mode", mmd_mode, "noise, blur or mask");
  mmd->add_option("--T", mmd_T, "number of degradation steps");
  mmd->add_option("--samples", mmd_samples, "images per domain (0 = all)");
  mmd->add_option("--bandwidth", mmd_bandwidth, "RBF bandwidth (0 = median heuristic)");
  mmd->add_flag("--control", mmd_control, "compare two halves of the source domain instead");
  mmd->add_option("--seed", eval_seed, "degradation seed");

  // plot
  auto* plot = app.add_subcommand("plot", "render sweep or MMD CSVs as a PNG chart");
  std::string plot_kind;
  std::vector<std::string> plot_inputs;
  fs::path plot_out;
  plot->add_option("--kind", plot_kind, "sweep or mmd")->required();
  plot->add_option("--out", plot_out, "output PNG")->required();
  plot->add_option("csv", plot_inputs, "input CSV files")->required();

  // reconstruct-dump
  auto* dump = app.add_subcommand("reconstruct-dump", "save clean/degraded/reconstructed triplets");
  std::int64_t dump_t = 50;
  std::int64_t dump_count = 8;
  dump->add_option("--checkpoint", ckpt, "model checkpoint")->required();
  dump->add_option("--data-root", data_root, "dataset directory");
  dump->add_option("--split", split, "split to draw images from");
  dump->add_option("--out", out_dir, "output directory");
  dump->add_option("--t", dump_t, "degradation level");
  dump->add_option("--count", dump_count, "number of images");
  dump->add_option("--seed", eval_seed, "degradation seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (data_root.empty()) data_root = default_data_root();

    if (*gen) {
      if (gen_out.empty()) gen_out = default_data_root();
      const auto manifest = generate_benchmark(bench, gen_out);
      echo_run(gen_out, "gen-data",
               json{{"seed", bench.seed}, {"height", bench.height}, {"width", bench.width},
                    {"num_classes", bench.num_classes},
                    {"source_train", bench.counts.source_train},
                    {"target_train", bench.counts.target_train},
                    {"target_val", bench.counts.target_val}});
      std::cout << "wrote " << manifest.records.size() << " samples to " << gen_out.string()
                << "\n";
      return 0;
    }

    if (*train) {
      std::vector<std::pair<std::string, std::string>> overrides;
      for (const auto& key : train_config_keys()) {
        if (train->count("--" + key.flag) > 0) overrides.emplace_back(key.key, flag_values[key.key]);
      }
      std::optional<fs::path> file;
      if (!train_config_path.empty()) file = train_config_path;
      auto config = resolve_train_config(file, overrides);
      if (config.data_root.empty()) config.data_root = default_data_root();
      fs::create_directories(config.output_dir);
      echo_run(config.output_dir, "train", json::parse(train_config_to_json(config)));
      const auto dataset = load_dataset(config.data_root / "manifest.json");
      Trainer trainer(config, dataset);
      if (!resume_path.empty()) trainer.resume(resume_path);
      const auto result = trainer.run([](const Batch&, const Batch&, const StepRecord& r) {
        if (r.iteration % 100 == 0) {
          std::cerr << "iter " << r.iteration << " loss " << r.loss_total << " q " << r.q_mean
                    << "\n";
        }
      });
      std::cout << "final checkpoint: " << result.final_checkpoint.string() << "\n";
      return 0;
    }

    if (*eval) {
      auto bundle = load_bundle(ckpt);
      const auto data = load_split(data_root, split);
      const auto r = evaluate_split(bundle, data.images, data.labels, batch);
      fs::create_directories(out_dir);
      echo_run(out_dir, "eval", json{{"checkpoint", ckpt}, {"data_root", data_root.string()},
                                     {"split", split}, {"batch", batch}});
      write_text(out_dir / "eval.json", miou_json(r).dump(2) + "\n");
      std::cout << "mIoU " << r.miou << "\n";
      return 0;
    }

    if (*sweep) {
      CheckpointMeta meta;
      auto bundle = load_bundle(ckpt, &meta);
      TrainConfig tc;
      if (!meta.train_config_json.empty()) tc = train_config_from_json(meta.train_config_json);
      tc.T = meta.T;
      tc.schedule = meta.schedule;
      tc.mode = meta.mode;
      const auto degrader = make_degrader(tc);
      std::vector<SweepMode> modes;
      for (const auto& m : split_list(modes_text)) modes.push_back(parse_sweep_mode(m));
      if (modes.empty()) throw std::invalid_argument("no sweep modes given");
      const auto grid = parse_int_list(t_grid_text);
      const auto data = load_split(data_root, split);
      const auto curves =
          degradation_sweep(bundle, data.images, data.labels, degrader, grid, modes, eval_seed, batch);
      fs::create_directories(out_dir);
      echo_run(out_dir, "sweep",
               json{{"checkpoint", ckpt}, {"data_root", data_root.string()}, {"split", split},
                    {"t_grid", grid}, {"modes", split_list(modes_text)}, {"seed", eval_seed},
                    {"degradation", to_string(meta.mode)}, {"T", meta.T}});
      write_sweep_csv(out_dir / "sweep.csv", curves);
      json summary = json::array();
      for (const auto& c : curves) {
        json pts = json::array();
        for (const auto& p : c.points) {
          pts.push_back({{"t_degrade", p.t_degrade}, {"t_input", p.t_input}, {"miou", p.miou}});
        }
        summary.push_back({{"mode", c.mode}, {"points", pts}});
      }
      write_text(out_dir / "sweep.json", summary.dump(2) + "\n");
      std::cout << "wrote " << (out_dir / "sweep.csv").string() << "\n";
      return 0;
    }

    if (*mmd) {
      TrainConfig tc;
      tc.T = mmd_T;
      tc.schedule = parse_schedule_kind(mmd_schedule);
      tc.mode = parse_degradation_mode(mmd_mode);
      const auto feature = parse_mmd_feature(mmd_feature);
      std::optional<ModelBundle> bundle;
      if (feature == MmdFeature::kEncoder) {
        if (mmd_ckpt.empty()) throw std::invalid_argument("encoder features need --checkpoint");
        bundle = load_bundle(mmd_ckpt);
      }
      const auto degrader = make_degrader(tc);
      const auto grid = parse_int_list(t_grid_text);
      const auto dataset = load_dataset(data_root / "manifest.json");
      auto source = stack_split(dataset.split("source_train"), false).images;
      auto target = stack_split(dataset.split("target_train"), false).images;
      torch::Tensor a = source, b = target;
      if (mmd_control) {
        const auto half = source.size(0) / 2;
        a = source.narrow(0, 0, half);
        b = source.narrow(0, half, half);
      }
      if (mmd_samples > 0) {
        a = a.narrow(0, 0, std::min(mmd_samples, a.size(0)));
        b = b.narrow(0, 0, std::min(mmd_samples, b.size(0)));
      }
      std::optional<double> bw;
      if (mmd_bandwidth > 0.0) bw = mmd_bandwidth;
      const auto points = mmd_vs_degradation(a, b, degrader, grid, feature, eval_seed,
                                             bundle ? &*bundle : nullptr, bw);
      fs::create_directories(out_dir);
      echo_run(out_dir, "mmd",
               json{{"data_root", data_root.string()}, {"t_grid", grid}, {"feature", mmd_feature},
                    {"schedule", mmd_schedule}, {"mode", mmd_mode}, {"T", mmd_T},
                    {"samples", mmd_samples}, {"bandwidth", mmd_bandwidth},
                    {"control", mmd_control}, {"seed", eval_seed}, {"checkpoint", mmd_ckpt}});
      const auto name = mmd_control ? "mmd_control.csv" : "mmd.csv";
      write_mmd_csv(out_dir / name, points);
      std::cout << "wrote " << (out_dir / name).string() << "\n";
      return 0;
    }

    if (*plot) {
      std::vector<fs::path> inputs(plot_inputs.begin(), plot_inputs.end());
      plot_csv_files(inputs, parse_plot_kind(plot_kind), plot_out);
      const auto dir = plot_out.has_parent_path() ? plot_out.parent_path() : fs::path(".");
      echo_run(dir, "plot", json{{"kind", plot_kind}, {"inputs", plot_inputs},
                                 {"out", plot_out.string()}});
      std::cout << "wrote " << plot_out.string() << "\n";
      return 0;
    }

    if (*dump) {
      CheckpointMeta meta;
      auto bundle = load_bundle(ckpt, &meta);
      TrainConfig tc;
      tc.T = meta.T;
      tc.schedule = meta.schedule;
      tc.mode = meta.mode;
      if (!meta.train_config_json.empty()) {
        tc = train_config_from_json(meta.train_config_json, tc);
      }
      const auto degrader = make_degrader(tc);
      degrader.schedule.check_degradation_step(dump_t);
      const auto data = load_split(data_root, split);
      const auto n = std::min(dump_count, data.images.size(0));
      const auto x0 = data.images.narrow(0, 0, n);
      const auto xt = degrade_for_level(x0, degrader, dump_t, eval_seed);
      const auto rec = reconstruct_clean(bundle, xt, dump_t, degrader);
      fs::create_directories(out_dir);
      for (std::int64_t i = 0; i < n; ++i) {
        cv::Mat row;
        cv::hconcat(std::vector<cv::Mat>{to_bgr8(x0[i]), to_bgr8(xt[i]), to_bgr8(rec[i])}, row);
        char name[64];
        std::snprintf(name, sizeof(name), "reconstruction_t%03lld_%03lld.png",
                      static_cast<long long>(dump_t), static_cast<long long>(i));
        if (!cv::imwrite((out_dir / name).string(), row)) {
          throw std::runtime_error("cannot write " + (out_dir / name).string());
        }
      }
      echo_run(out_dir, "reconstruct-dump",
               json{{"checkpoint", ckpt}, {"data_root", data_root.string()}, {"split", split},
                    {"t", dump_t}, {"count", n}, {"seed", eval_seed}});
      std::cout << "wrote " << n << " triplets to " << out_dir.string() << "\n";
      return 0;
    }
  } catch (const std::exception& e) {
    std::string msg = e.what();
    if (const auto nl = msg.find('\n'); nl != std::string::npos) msg = msg.substr(0, nl);
    std::cerr << "dida: error: " << msg << "\n";
    return 1;
  }
  return 1;
}

}  // namespace dida
