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

#ifndef DIDA_CLI_HPP_
#define DIDA_CLI_HPP_

#include <cstdint>
#include <string>
#include <vector>

namespace dida {

// Version string baked in at configure time ("<semver>+<git describe>").
const char* version();

// Parses a comma-separated list of non-negative integers ("0,25,50").
std::vector<std::int64_t> parse_int_list(const std::string& text);

/// Entry point of the `dida` executable. Returns the process exit status;
/// diagnostics go to stderr.
int run(int argc, const char* const* argv);
int run(const std::vector<std::string>& args);

}  // namespace dida

#endif  // DIDA_CLI_HPP_
