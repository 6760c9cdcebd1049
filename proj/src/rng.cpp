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

#include "dida/rng.hpp"

#include <ATen/CPUGeneratorImpl.h>

#include <stdexcept>

namespace dida {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream,
                       std::uint64_t index) {
  auto splitmix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return splitmix(splitmix(splitmix(seed) ^ stream) ^ index);
}

Rng::Rng(std::uint64_t seed)
    : seed_(seed), gen_(at::make_generator<at::CPUGeneratorImpl>(seed)) {}

torch::Tensor Rng::normal(torch::IntArrayRef shape, torch::ScalarType dtype) {
  return torch::randn(shape, gen_, torch::TensorOptions().dtype(dtype));
}

torch::Tensor Rng::uniform(torch::IntArrayRef shape, torch::ScalarType dtype) {
  return torch::rand(shape, gen_, torch::TensorOptions().dtype(dtype));
}

std::int64_t Rng::uniform_int(std::int64_t lo, std::int64_t hi) {
  if (hi < lo) throw std::invalid_argument("Rng::uniform_int: empty range");
  return torch::randint(lo, hi + 1, {1}, gen_,
                        torch::TensorOptions().dtype(torch::kInt64))
      .item<std::int64_t>();
}

double Rng::uniform_real(double lo, double hi) {
  const double u = torch::rand({1}, gen_, torch::TensorOptions().dtype(torch::kFloat64))
                       .item<double>();
  return lo + (hi - lo) * u;
}

bool Rng::bernoulli(double p) { return uniform_real(0.0, 1.0) < p; }

}  // namespace dida
