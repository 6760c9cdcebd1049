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

#include "dida/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numbers>
#include <stdexcept>

namespace dida {
namespace {

constexpr double kLinearBetaStart = 1e-4;
constexpr double kLinearBetaEnd = 2e-2;
constexpr double kCosineOffset = 0.008;
constexpr double kCosineMaxBeta = 0.999;
constexpr double kSigmoidStart = -3.0;
constexpr double kSigmoidEnd = 3.0;
constexpr double kSigmoidTemperature = 1.0;
constexpr double kSigmoidFloor = 1e-4;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

std::vector<double> linear_alpha_bar(std::int64_t T) {
  std::vector<double> alpha_bar(T + 1, 1.0);
  double running = 1.0;
  for (std::int64_t t = 1; t <= T; ++t) {
    const double frac = T == 1 ? 0.0 : static_cast<double>(t - 1) / (T - 1);
    const double beta = kLinearBetaStart + (kLinearBetaEnd - kLinearBetaStart) * frac;
    running *= 1.0 - beta;
    alpha_bar[t] = running;
  }
  return alpha_bar;
}

std::vector<double> cosine_alpha_bar(std::int64_t T) {
  auto f = [T](std::int64_t t) {
    const double phase = (static_cast<double>(t) / T + kCosineOffset) /
                         (1.0 + kCosineOffset) * std::numbers::pi / 2.0;
    const double c = std::cos(phase);
    return c * c;
  };
  // Per-step betas are clipped so the final coefficient stays positive.
  std::vector<double> alpha_bar(T + 1, 1.0);
  double running = 1.0;
  for (std::int64_t t = 1; t <= T; ++t) {
    const double beta = std::min(1.0 - f(t) / f(t - 1), kCosineMaxBeta);
    running *= 1.0 - beta;
    alpha_bar[t] = running;
  }
  return alpha_bar;
}

std::vector<double> sigmoid_alpha_bar(std::int64_t T) {
  const double lo = sigmoid(-kSigmoidEnd / kSigmoidTemperature);
  const double hi = sigmoid(-kSigmoidStart / kSigmoidTemperature);
  std::vector<double> alpha_bar(T + 1, 1.0);
  for (std::int64_t t = 1; t <= T; ++t) {
    const double x = kSigmoidStart +
                     (kSigmoidEnd - kSigmoidStart) * static_cast<double>(t) / T;
    const double v = (sigmoid(-x / kSigmoidTemperature) - lo) / (hi - lo);
    alpha_bar[t] = std::clamp(v, kSigmoidFloor, 1.0);
  }
  alpha_bar[0] = 1.0;
  return alpha_bar;
}

}  // namespace

ScheduleKind parse_schedule_kind(std::string_view name) {
  if (name == "linear") return ScheduleKind::kLinear;
  if (name == "cosine") return ScheduleKind::kCosine;
  if (name == "sigmoid") return ScheduleKind::kSigmoid;
  throw std::invalid_argument("unknown schedule kind '" + std::string(name) +
                              "' (expected linear, cosine or sigmoid)");
}

std::string to_string(ScheduleKind kind) {
  switch (kind) {
    case ScheduleKind::kLinear: return "linear";
    case ScheduleKind::kCosine: return "cosine";
    case ScheduleKind::kSigmoid: return "sigmoid";
  }
  throw std::invalid_argument("invalid ScheduleKind value");
}

double NoiseSchedule::at(std::int64_t t) const {
  if (t < 0 || t > T) {
    throw std::out_of_range("timestep " + std::to_string(t) + " outside [0, " +
                            std::to_string(T) + "]");
  }
  return alpha_bar[static_cast<std::size_t>(t)];
}

void NoiseSchedule::check_degradation_step(std::int64_t t) const {
  if (t < 1 || t > T) {
    throw std::out_of_range("degradation timestep " + std::to_string(t) +
                            " outside [1, " + std::to_string(T) + "]");
  }
}

std::vector<double> NoiseSchedule::truncated_snr(double cap) const {
  std::vector<double> weights(alpha_bar.size(), cap);
  for (std::size_t t = 1; t < alpha_bar.size(); ++t) {
    weights[t] = std::min(alpha_bar[t] / (1.0 - alpha_bar[t]), cap);
  }
  return weights;
}

NoiseSchedule build_schedule(ScheduleKind kind, std::int64_t T) {
  if (T < 1) {
    throw std::invalid_argument("schedule needs T >= 1, got " + std::to_string(T));
  }
  NoiseSchedule schedule;
  schedule.kind = kind;
  schedule.T = T;
  switch (kind) {
    case ScheduleKind::kLinear: schedule.alpha_bar = linear_alpha_bar(T); break;
    case ScheduleKind::kCosine: schedule.alpha_bar = cosine_alpha_bar(T); break;
    case ScheduleKind::kSigmoid: schedule.alpha_bar = sigmoid_alpha_bar(T); break;
    default: throw std::invalid_argument("invalid ScheduleKind value");
  }
  return schedule;
}

std::int64_t sample_timestep(Rng& rng, std::int64_t T) {
  if (T < 1) {
    throw std::invalid_argument("sample_timestep needs T >= 1, got " + std::to_string(T));
  }
  return rng.uniform_int(1, T);
}

void write_schedule_csv(const NoiseSchedule& schedule, std::ostream& out) {
  out << "t,alpha_bar\n";
  out << std::setprecision(17);
  for (std::int64_t t = 0; t <= schedule.T; ++t) {
    out << t << ',' << schedule.alpha_bar[t] << '\n';
  }
}

}  // namespace dida
