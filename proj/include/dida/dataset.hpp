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

#ifndef DIDA_DATASET_HPP_
#define DIDA_DATASET_HPP_

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <torch/torch.h>

#include "dida/digest.hpp"
#include "dida/rng.hpp"

namespace dida {

inline constexpr std::int64_t kIgnoreLabel = 255;

enum class Domain { kSource, kTarget };
std::string to_string(Domain domain);
Domain parse_domain(std::string_view name);

enum class Texture { kStripes, kChecker, kSpeckle, kPlain };
std::string to_string(Texture texture);
Texture parse_texture(std::string_view name);

using Rgb = std::array<double, 3>;  // components in [0, 1]

// Appearance recipe of one domain. palette[c] and texture[c] describe class c
// (class 0 is background).
struct DomainSpec {
  std::vector<Rgb> palette;
  std::vector<Texture> texture;
  double texture_scale = 6.0;          // pixels per texture period
  double noise_level = 0.0;            // std of additive speckle, [0,1] units
  double hue_shift = 0.0;              // degrees
  double illumination_gradient = 0.0;  // peak-to-peak multiplicative ramp

  static DomainSpec default_source(std::int64_t num_classes = 4);
  static DomainSpec default_target(std::int64_t num_classes = 4);
};

enum class ShapeKind { kCircle = 1, kSquare = 2, kTriangle = 3 };
inline constexpr std::int64_t kMaxClasses = 4;  // background + three shapes

struct Shape {
  ShapeKind kind = ShapeKind::kCircle;
  double cx = 0.0;
  double cy = 0.0;
  double size = 8.0;   // circumradius in pixels
  double angle = 0.0;  // radians
};

struct RenderedSample {
  torch::Tensor image;  // (H, W, 3) uint8, RGB
  torch::Tensor label;  // (H, W) uint8
};

// Draws shapes in order (later shapes occlude earlier ones) onto a textured
// background. Labels are exact per pixel centre.
RenderedSample render_sample(const std::vector<Shape>& shapes, const DomainSpec& spec,
                             std::uint64_t seed, std::int64_t height, std::int64_t width);

struct SplitCounts {
  std::int64_t source_train = 1000;
  std::int64_t target_train = 1000;
  std::int64_t target_val = 200;
};

struct BenchmarkConfig {
  std::uint64_t seed = 0;
  DomainSpec source = DomainSpec::default_source();
  DomainSpec target = DomainSpec::default_target();
  SplitCounts counts;
  std::int64_t height = 64;
  std::int64_t width = 64;
  std::int64_t num_classes = 4;
};

struct ManifestRecord {
  std::string id;
  std::string split;
  Domain domain = Domain::kSource;
  std::string image_path;  // relative to the manifest directory
  std::string label_path;
  std::string image_sha256;
  std::string label_sha256;
};

struct DatasetManifest {
  std::string version = "1";
  std::uint64_t seed = 0;
  std::int64_t num_classes = 4;
  std::int64_t height = 64;
  std::int64_t width = 64;
  SplitCounts counts;
  std::vector<ManifestRecord> records;
};

// Writes <root>/manifest.json, <root>/images/<id>.png and
// <root>/labels/<id>.png. Output bytes are a pure function of `config`.
DatasetManifest generate_benchmark(const BenchmarkConfig& config,
                                   const std::filesystem::path& root);

struct AugmentOptions {
  double flip_probability = 0.5;
  double jitter = 0.2;  // brightness/contrast/saturation factors in [1-j, 1+j]
};

/// One image with its domain tag. The label of a target-domain sample is
/// only reachable through evaluation_label().
class SegSample {
 public:
  SegSample(std::string id, Domain domain, torch::Tensor image,
            std::optional<torch::Tensor> label);

  const std::string& id() const { return id_; }
  Domain domain() const { return domain_; }
  // (3, H, W) float32 in [-1, 1].
  const torch::Tensor& image() const { return image_; }
  bool has_label() const { return label_.has_value(); }
  // (H, W) int64; empty for target-domain samples.
  std::optional<torch::Tensor> training_label() const;
  // Throws std::logic_error if the sample carries no label.
  const torch::Tensor& evaluation_label() const;

 private:
  friend SegSample augment(const SegSample&, Rng&, const AugmentOptions&);

  std::string id_;
  Domain domain_;
  torch::Tensor image_;
  std::optional<torch::Tensor> label_;
};

struct LoadedDataset {
  DatasetManifest manifest;
  std::vector<SegSample> samples;

  std::vector<const SegSample*> split(std::string_view name) const;
};

DatasetManifest read_manifest(const std::filesystem::path& manifest_path);
void write_manifest(const DatasetManifest& manifest,
                    const std::filesystem::path& manifest_path);

// Validates checksums and label ranges; errors name the offending file.
LoadedDataset load_dataset(const std::filesystem::path& manifest_path);

// Random horizontal flip (image and label together) and colour jitter
// (image only). Output image stays in [-1, 1].
SegSample augment(const SegSample& sample, Rng& rng, const AugmentOptions& options = {});

// Tensor form used by the trainer: image (3,H,W), label (H,W) or undefined.
void augment_in_place(torch::Tensor& image, torch::Tensor* label, Rng& rng,
                      const AugmentOptions& options);

// Stacks images to (N,3,H,W) and, when every sample has a training label,
// labels to (N,H,W) int64.
struct StackedSplit {
  torch::Tensor images;
  torch::Tensor labels;  // undefined if unlabeled
};
StackedSplit stack_split(const std::vector<const SegSample*>& samples,
                         bool use_evaluation_labels);

}  // namespace dida

#endif  // DIDA_DATASET_HPP_
