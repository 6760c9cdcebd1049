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

#include "dida/checkpoint.hpp"

#include <stdexcept>
#include <system_error>

#include "json.hpp"

namespace dida {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kMetaKey = "dida_meta";
constexpr const char* kOptimizerKey = "optimizer";
constexpr const char* kFormat = "dida-checkpoint-1";

json model_json(const ModelConfig& c) {
  return json{{"num_classes", c.num_classes},     {"widths", c.widths},
              {"decoder_dim", c.decoder_dim},     {"reconstruction_dim", c.reconstruction_dim},
              {"time_dim", c.time_dim},           {"time_base", c.time_base},
              {"norm_groups", c.norm_groups},     {"max_timestep", c.max_timestep}};
}

ModelConfig model_from(const json& j) {
  ModelConfig c;
  c.num_classes = j.at("num_classes").get<std::int64_t>();
  c.widths = j.at("widths").get<std::vector<std::int64_t>>();
  c.decoder_dim = j.at("decoder_dim").get<std::int64_t>();
  c.reconstruction_dim = j.at("reconstruction_dim").get<std::int64_t>();
  c.time_dim = j.at("time_dim").get<std::int64_t>();
  c.time_base = j.at("time_base").get<double>();
  c.norm_groups = j.at("norm_groups").get<std::int64_t>();
  c.max_timestep = j.at("max_timestep").get<std::int64_t>();
  return c;
}

CheckpointMeta meta_from_archive(torch::serialize::InputArchive& archive,
                                 const fs::path& path) {
  c10::IValue value;
  if (!archive.try_read(kMetaKey, value) || !value.isString()) {
    throw std::runtime_error(path.string() + ": not a dida checkpoint (metadata missing)");
  }
  try {
    const auto j = json::parse(value.toStringRef());
    if (j.at("format").get<std::string>() != kFormat) {
      throw std::runtime_error("unsupported checkpoint format");
    }
    CheckpointMeta meta;
    meta.architecture_hash = j.at("architecture_hash").get<std::string>();
    meta.model = model_from(j.at("model"));
    meta.schedule = parse_schedule_kind(j.at("schedule").get<std::string>());
    meta.T = j.at("T").get<std::int64_t>();
    meta.mode = parse_degradation_mode(j.at("mode").get<std::string>());
    meta.iteration = j.at("iteration").get<std::int64_t>();
    meta.train_config_json = j.value("train_config", std::string());
    return meta;
  } catch (const json::exception& e) {
    throw std::runtime_error(path.string() + ": malformed checkpoint metadata: " + e.what());
  }
}

}  // namespace

std::string model_config_to_json(const ModelConfig& config) { return model_json(config).dump(); }

ModelConfig model_config_from_json(const std::string& text) { return model_from(json::parse(text)); }

void save_checkpoint(const fs::path& path, ModelBundle& bundle, const CheckpointMeta& meta,
                     torch::optim::Optimizer* optimizer) {
  const json j{{"format", kFormat},
               {"architecture_hash", bundle->config.architecture_hash()},
               {"model", model_json(bundle->config)},
               {"schedule", to_string(meta.schedule)},
               {"T", meta.T},
               {"mode", to_string(meta.mode)},
               {"iteration", meta.iteration},
               {"train_config", meta.train_config_json}};
  torch::serialize::OutputArchive archive;
  bundle->save(archive);
  archive.write(kMetaKey, c10::IValue(j.dump()));
  if (optimizer != nullptr) {
    torch::serialize::OutputArchive opt_archive;
    optimizer->save(opt_archive);
    archive.write(kOptimizerKey, opt_archive);
  }
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  archive.save_to(tmp.string());
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp);
    throw std::runtime_error("cannot write checkpoint " + path.string() + ": " + ec.message());
  }
}

CheckpointMeta read_checkpoint_meta(const fs::path& path) {
  if (!fs::exists(path)) throw std::runtime_error("checkpoint not found: " + path.string());
  torch::serialize::InputArchive archive;
  archive.load_from(path.string());
  return meta_from_archive(archive, path);
}

CheckpointMeta load_checkpoint(const fs::path& path, ModelBundle& bundle,
                               torch::optim::Optimizer* optimizer) {
  if (!fs::exists(path)) throw std::runtime_error("checkpoint not found: " + path.string());
  torch::serialize::InputArchive archive;
  archive.load_from(path.string());
  auto meta = meta_from_archive(archive, path);
  const auto expected = bundle->config.architecture_hash();
  if (meta.architecture_hash != expected) {
    throw std::runtime_error(path.string() + ": architecture hash " + meta.architecture_hash +
                             " does not match the configured model (" + expected + ")");
  }
  bundle->load(archive);
  if (optimizer != nullptr) {
    torch::serialize::InputArchive opt_archive;
    if (!archive.try_read(kOptimizerKey, opt_archive)) {
      throw std::runtime_error(path.string() + ": checkpoint holds no optimizer state");
    }
    optimizer->load(opt_archive);
  }
  return meta;
}

ModelBundle load_bundle(const fs::path& path, CheckpointMeta* meta) {
  const auto stored = read_checkpoint_meta(path);
  ModelBundle bundle(stored.model);
  auto loaded = load_checkpoint(path, bundle);
  if (meta != nullptr) *meta = loaded;
  return bundle;
}

}  // namespace dida
