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

#ifndef DIDA_SCHEDULE_HPP_
#define DIDA_SCHEDULE_HPP_

#include <cstdint>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "dida/rng.hpp"

namespace dida {

enum class ScheduleKind { kLinear, kCosine, kSigmoid };

ScheduleKind parse_schedule_kind(std::string_view name);
std::string to_string(ScheduleKind kind);

/// Cumulative signal-retention coefficients alpha_bar[t] for t = 0..T.
///
/// alpha_bar[0] is exactly 1 (undegraded); the sequence is strictly
/// decreasing and stays in (0, 1]. Degradation ops accept t in [1, T].
struct NoiseSchedule {
  ScheduleKind kind = ScheduleKind::kSigmoid;
  std::int64_t T = 0;
  std::vector<double> alpha_bar;

  double at(std::int64_t t) const;
  // Throws std::out_of_range unless 1 <= t <= T.
  void check_degradation_step(std::int64_t t) const;
  // min(alpha_bar/(1 - alpha_bar), cap) for t >= 1; entry 0 holds cap.
  std::vector<double> truncated_snr(double cap) const;
};

NoiseSchedule build_schedule(ScheduleKind kind, std::int64_t T);

// Uniform draw from {1, ..., T}.
std::int64_t sample_timestep(Rng& rng, std::int64_t T);

// CSV with header "t,alpha_bar", one row per t in [0, T].
void write_schedule_csv(const NoiseSchedule& schedule, std::ostream& out);

}  // namespace dida

#endif  // DIDA_SCHEDULE_HPP_
