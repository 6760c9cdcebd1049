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

#include "dida/config.hpp"

#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace dida {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Field {
  ConfigKey meta;
  std::function<json(const TrainConfig&)> get;
  std::function<void(TrainConfig&, const json&)> set;
};

template <typename T>
Field plain(std::string key, std::string help, T TrainConfig::*member) {
  return {{key, "", std::move(help)},
          [member](const TrainConfig& c) { return json(c.*member); },
          [member](TrainConfig& c, const json& j) { c.*member = j.get<T>(); }};
}

template <typename T>
Field model_field(std::string key, std::string help, T ModelConfig::*member) {
  return {{key, "", std::move(help)},
          [member](const TrainConfig& c) { return json(c.model.*member); },
          [member](TrainConfig& c, const json& j) { c.model.*member = j.get<T>(); }};
}

template <typename E>
Field enum_field(std::string key, std::string help, E TrainConfig::*member,
                 E (*parse)(std::string_view)) {
  return {{key, "", std::move(help)},
          [member](const TrainConfig& c) { return json(to_string(c.*member)); },
          [member, parse](TrainConfig& c, const json& j) {
            c.*member = parse(j.get<std::string>());
          }};
}

Field path_field(std::string key, std::string help, fs::path TrainConfig::*member) {
  return {{key, "", std::move(help)},
          [member](const TrainConfig& c) { return json((c.*member).string()); },
          [member](TrainConfig& c, const json& j) { c.*member = j.get<std::string>(); }};
}

std::vector<Field> build_fields() {
  std::vector<Field> f;
  f.push_back(enum_field("method", "dida or self_training", &TrainConfig::method,
                         &parse_train_method));
  f.push_back(plain("iterations", "training iterations", &TrainConfig::iterations));
  f.push_back(plain("batch_size", "images per domain per step", &TrainConfig::batch_size));
  f.push_back(plain("T", "number of degradation steps", &TrainConfig::T));
  f.push_back(enum_field("schedule", "linear, cosine or sigmoid", &TrainConfig::schedule,
                         &parse_schedule_kind));
  f.push_back(enum_field("mode", "noise, blur or mask", &TrainConfig::mode,
                         &parse_degradation_mode));
  f.push_back(plain("lambda_D", "weight of the degraded-image consistency loss",
                    &TrainConfig::lambda_D));
  f.push_back(plain("lambda_R", "weight of the reconstruction loss", &TrainConfig::lambda_R));
  f.push_back(plain("snr_cap", "truncation of the x0-prediction weight", &TrainConfig::snr_cap));
  f.push_back(plain("ema_beta", "teacher EMA coefficient", &TrainConfig::ema_beta));
  f.push_back(plain("lr_encoder", "encoder-group learning rate", &TrainConfig::lr_encoder));
  f.push_back(plain("lr_decoder", "head-group learning rate", &TrainConfig::lr_decoder));
  f.push_back(plain("weight_decay", "AdamW weight decay", &TrainConfig::weight_decay));
  f.push_back(plain("warmup_iters", "linear warmup length", &TrainConfig::warmup_iters));
  f.push_back(plain("seed", "run seed", &TrainConfig::seed));
  f.push_back(plain("pseudo_threshold", "pseudo-label confidence threshold",
                    &TrainConfig::pseudo_threshold));
  f.push_back(enum_field("diffusion_lr_group", "optimizer group of g': encoder or decoder",
                         &TrainConfig::diffusion_lr_group, &parse_diffusion_lr_group));
  f.push_back(plain("blur.kernel_size", "per-step blur kernel size",
                    &TrainConfig::blur_kernel_size));
  f.push_back(plain("blur.base_std", "blur std at the first step", &TrainConfig::blur_base_std));
  f.push_back(plain("blur.growth_rate", "exponential growth of the blur std",
                    &TrainConfig::blur_growth_rate));
  f.push_back(plain("cowmask.std", "CowMask smoothing std (pixels)", &TrainConfig::cowmask_std));
  f.push_back(plain("augment.enabled", "flip + colour jitter", &TrainConfig::augment));
  f.push_back({{"augment.flip_probability", "", "horizontal flip probability"},
               [](const TrainConfig& c) { return json(c.augment_options.flip_probability); },
               [](TrainConfig& c, const json& j) {
                 c.augment_options.flip_probability = j.get<double>();
               }});
  f.push_back({{"augment.jitter", "", "colour jitter strength"},
               [](const TrainConfig& c) { return json(c.augment_options.jitter); },
               [](TrainConfig& c, const json& j) { c.augment_options.jitter = j.get<double>(); }});
  f.push_back(plain("checkpoint_every", "checkpoint period (0 = final only)",
                    &TrainConfig::checkpoint_every));
  f.push_back(plain("num_threads", "intra-op threads", &TrainConfig::num_threads));
  f.push_back(path_field("data_root", "directory holding manifest.json", &TrainConfig::data_root));
  f.push_back(path_field("output_dir", "run directory (metrics, checkpoints)",
                         &TrainConfig::output_dir));
  f.push_back(model_field("model.num_classes", "number of classes", &ModelConfig::num_classes));
  f.push_back(model_field("model.widths", "encoder stage widths", &ModelConfig::widths));
  f.push_back(model_field("model.decoder_dim", "segmentation head width",
                          &ModelConfig::decoder_dim));
  f.push_back(model_field("model.reconstruction_dim", "reconstruction head width",
                          &ModelConfig::reconstruction_dim));
  f.push_back(model_field("model.time_dim", "time embedding size", &ModelConfig::time_dim));
  f.push_back(model_field("model.time_base", "sinusoidal embedding base", &ModelConfig::time_base));
  f.push_back(model_field("model.norm_groups", "group-norm groups", &ModelConfig::norm_groups));
  for (auto& field : f) {
    std::string flag = field.meta.key;
    for (auto& ch : flag) {
      if (ch == '.' || ch == '_') ch = '-';
      ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    }
    field.meta.flag = flag;
  }
  return f;
}

const std::vector<Field>& fields() {
  static const std::vector<Field> f = build_fields();
  return f;
}

const Field& find_field(const std::string& key) {
  for (const auto& f : fields()) {
    if (f.meta.key == key || f.meta.flag == key) return f;
  }
  throw std::invalid_argument("unknown config key '" + key + "'");
}

void set_field(TrainConfig& config, const Field& field, const json& value) {
  try {
    field.set(config, value);
  } catch (const json::exception& e) {
    throw std::invalid_argument("config key '" + field.meta.key + "': " + e.what());
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument("config key '" + field.meta.key + "': " + e.what());
  }
}

}  // namespace

const std::vector<ConfigKey>& train_config_keys() {
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> k;
    for (const auto& f : fields()) k.push_back(f.meta);
    return k;
  }();
  return keys;
}

std::string train_config_to_json(const TrainConfig& config) {
  json j = json::object();
  for (const auto& f : fields()) j[f.meta.key] = f.get(config);
  return j.dump(2);
}

TrainConfig train_config_from_json(const std::string& text, TrainConfig base) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw std::invalid_argument("config must be a JSON object");
  for (const auto& [key, value] : j.items()) set_field(base, find_field(key), value);
  return base;
}

void apply_override(TrainConfig& config, const std::string& key, const std::string& value) {
  const auto& field = find_field(key);
  json parsed;
  const bool is_list = field.get(config).is_array();
  if (is_list && !value.empty() && value.front() != '[') {
    parsed = json::parse("[" + value + "]", nullptr, false);
  } else {
    parsed = json::parse(value, nullptr, false);
  }
  if (parsed.is_discarded() || (field.get(config).is_string() && !parsed.is_string())) {
    parsed = value;
  }
  set_field(config, field, parsed);
}

std::string read_text_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

TrainConfig resolve_train_config(const std::optional<fs::path>& file,
                                 const std::vector<std::pair<std::string, std::string>>& overrides) {
  TrainConfig config;
  if (const char* root = std::getenv(kDataRootEnv); root != nullptr && *root != '\0') {
    config.data_root = root;
  }
  if (file) config = train_config_from_json(read_text_file(*file), config);
  for (const auto& [key, value] : overrides) apply_override(config, key, value);
  config.validate();
  return config;
}

}  // namespace dida
