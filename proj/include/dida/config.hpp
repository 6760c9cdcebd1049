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

#ifndef DIDA_CONFIG_HPP_
#define DIDA_CONFIG_HPP_

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "dida/trainer.hpp"

namespace dida {

inline constexpr const char* kDataRootEnv = "DIDA_DATA_ROOT";

struct ConfigKey {
  std::string key;   // dotted JSON key, e.g. "model.widths"
  std::string flag;  // CLI flag without dashes, e.g. "model-widths"
  std::string help;
};

// Every TrainConfig field, in a stable order.
const std::vector<ConfigKey>& train_config_keys();

// Flat JSON object with dotted keys, pretty-printed.
std::string train_config_to_json(const TrainConfig& config);

// Applies the keys present in `text` on top of `base`. Unknown keys and
// ill-typed values throw std::invalid_argument naming the key.
TrainConfig train_config_from_json(const std::string& text, TrainConfig base = {});

// `value` is JSON when it parses as such, otherwise a bare string; list
// fields also accept comma-separated values.
void apply_override(TrainConfig& config, const std::string& key, const std::string& value);

// defaults < DIDA_DATA_ROOT < config file < overrides (key, value).
TrainConfig resolve_train_config(const std::optional<std::filesystem::path>& file,
                                 const std::vector<std::pair<std::string, std::string>>& overrides);

std::string read_text_file(const std::filesystem::path& path);

}  // namespace dida

#endif  // DIDA_CONFIG_HPP_
