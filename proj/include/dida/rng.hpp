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

#ifndef DIDA_RNG_HPP_
#define DIDA_RNG_HPP_

#include <cstdint>

#include <torch/torch.h>

namespace dida {

// Stream tags used with mix_seed so that independent consumers of one run
// seed never share random draws.
enum class SeedStream : std::uint64_t {
  kModelInit = 1,
  kShuffleSource = 2,
  kShuffleTarget = 3,
  kAugment = 4,
  kDegrade = 5,
  kDataset = 6,
  kEvaluation = 7,
};

// Derives a 64-bit seed from (seed, stream, index) with the splitmix64
// finalizer. Pure function; used for per-sample and per-iteration seeds.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream,
                       std::uint64_t index = 0);

inline std::uint64_t mix_seed(std::uint64_t seed, SeedStream stream,
                              std::uint64_t index = 0) {
  return mix_seed(seed, static_cast<std::uint64_t>(stream), index);
}

/// Explicit seeded random source. Every stochastic operation takes one of
/// these by reference; nothing reads a global generator.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t seed() const { return seed_; }
  torch::Generator& generator() { return gen_; }

  torch::Tensor normal(torch::IntArrayRef shape,
                       torch::ScalarType dtype = torch::kFloat32);
  torch::Tensor uniform(torch::IntArrayRef shape,
                        torch::ScalarType dtype = torch::kFloat32);
  // Uniform integer on the closed range [lo, hi].
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);
  double uniform_real(double lo, double hi);
  bool bernoulli(double p);

 private:
  std::uint64_t seed_;
  torch::Generator gen_;
};

}  // namespace dida

#endif  // DIDA_RNG_HPP_
