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

#ifndef DIDA_CHECKPOINT_HPP_
#define DIDA_CHECKPOINT_HPP_

#include <cstdint>
#include <filesystem>
#include <string>

#include <torch/torch.h>

#include "dida/degradation.hpp"
#include "dida/model.hpp"
#include "dida/schedule.hpp"

namespace dida {

struct CheckpointMeta {
  std::string architecture_hash;
  ModelConfig model;
  ScheduleKind schedule = ScheduleKind::kSigmoid;
  std::int64_t T = 100;
  DegradationMode mode = DegradationMode::kNoise;
  std::int64_t iteration = 0;
  std::string train_config_json;  // resolved training config, informational
};

std::string model_config_to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const std::string& text);

// Writes to `<path>.tmp` and renames over `path`. `optimizer` may be null.
void save_checkpoint(const std::filesystem::path& path, ModelBundle& bundle,
                     const CheckpointMeta& meta, torch::optim::Optimizer* optimizer = nullptr);

CheckpointMeta read_checkpoint_meta(const std::filesystem::path& path);

// Restores parameters/buffers (and optimizer state when given). Throws
// std::runtime_error when the stored architecture hash differs from the
// bundle's.
CheckpointMeta load_checkpoint(const std::filesystem::path& path, ModelBundle& bundle,
                               torch::optim::Optimizer* optimizer = nullptr);

// Builds a bundle with the stored architecture and loads it.
ModelBundle load_bundle(const std::filesystem::path& path, CheckpointMeta* meta = nullptr);

}  // namespace dida

#endif  // DIDA_CHECKPOINT_HPP_
