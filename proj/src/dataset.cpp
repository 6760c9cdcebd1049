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

#include "dida/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <random>
#include <sstream>
#include <stdexcept>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "json.hpp"

namespace dida {
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr double kTextureAmplitude = 0.4;

Rgb shift_hue(const Rgb& rgb, double degrees) {
  if (degrees == 0.0) return rgb;
  cv::Mat3f pixel(1, 1, cv::Vec3f(static_cast<float>(rgb[0]), static_cast<float>(rgb[1]),
                                  static_cast<float>(rgb[2])));
  cv::Mat3f hsv;
  cv::cvtColor(pixel, hsv, cv::COLOR_RGB2HSV);
  float& h = hsv(0, 0)[0];
  h = static_cast<float>(std::fmod(h + degrees + 360.0, 360.0));
  cv::cvtColor(hsv, pixel, cv::COLOR_HSV2RGB);
  const auto v = pixel(0, 0);
  return {std::clamp<double>(v[0], 0.0, 1.0), std::clamp<double>(v[1], 0.0, 1.0),
          std::clamp<double>(v[2], 0.0, 1.0)};
}

bool inside(const Shape& s, double x, double y) {
  const double dx = x - s.cx;
  const double dy = y - s.cy;
  switch (s.kind) {
    case ShapeKind::kCircle:
      return dx * dx + dy * dy <= s.size * s.size;
    case ShapeKind::kSquare: {
      const double c = std::cos(s.angle);
      const double sn = std::sin(s.angle);
      const double u = c * dx + sn * dy;
      const double v = -sn * dx + c * dy;
      const double half = s.size / std::numbers::sqrt2;
      return std::abs(u) <= half && std::abs(v) <= half;
    }
    case ShapeKind::kTriangle: {
      std::array<double, 3> vx{};
      std::array<double, 3> vy{};
      for (int k = 0; k < 3; ++k) {
        const double a = s.angle - std::numbers::pi / 2.0 + k * 2.0 * std::numbers::pi / 3.0;
        vx[k] = s.cx + s.size * std::cos(a);
        vy[k] = s.cy + s.size * std::sin(a);
      }
      bool pos = false;
      bool neg = false;
      for (int k = 0; k < 3; ++k) {
        const int j = (k + 1) % 3;
        const double cross = (vx[j] - vx[k]) * (y - vy[k]) - (vy[j] - vy[k]) * (x - vx[k]);
        pos = pos || cross > 0.0;
        neg = neg || cross < 0.0;
      }
      return !(pos && neg);
    }
  }
  return false;
}

std::string split_domain_name(const std::string& split) {
  return split.rfind("source", 0) == 0 ? "source" : "target";
}

void check_spec(const DomainSpec& spec, std::int64_t num_classes, const char* which) {
  if (static_cast<std::int64_t>(spec.palette.size()) < num_classes ||
      static_cast<std::int64_t>(spec.texture.size()) < num_classes) {
    throw std::invalid_argument(std::string(which) +
                                " domain spec defines fewer classes than requested");
  }
}

void write_png(const fs::path& path, const cv::Mat& mat) {
  if (!cv::imwrite(path.string(), mat)) {
    throw std::runtime_error("failed to write " + path.string());
  }
}

torch::Tensor image_to_unit_range(const cv::Mat& bgr) {
  cv::Mat rgb;
  cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  auto t = torch::from_blob(rgb.data, {rgb.rows, rgb.cols, 3}, torch::kUInt8).clone();
  return t.permute({2, 0, 1}).to(torch::kFloat32).div(127.5).sub(1.0).contiguous();
}

}  // namespace

std::string to_string(Domain domain) {
  return domain == Domain::kSource ? "source" : "target";
}

Domain parse_domain(std::string_view name) {
  if (name == "source") return Domain::kSource;
  if (name == "target") return Domain::kTarget;
  throw std::invalid_argument("unknown domain '" + std::string(name) + "'");
}

std::string to_string(Texture texture) {
  switch (texture) {
    case Texture::kStripes: return "stripes";
    case Texture::kChecker: return "checker";
    case Texture::kSpeckle: return "speckle";
    case Texture::kPlain: return "plain";
  }
  throw std::invalid_argument("invalid Texture value");
}

Texture parse_texture(std::string_view name) {
  if (name == "stripes") return Texture::kStripes;
  if (name == "checker") return Texture::kChecker;
  if (name == "speckle") return Texture::kSpeckle;
  if (name == "plain") return Texture::kPlain;
  throw std::invalid_argument("unknown texture '" + std::string(name) + "'");
}

DomainSpec DomainSpec::default_source(std::int64_t num_classes) {
  DomainSpec spec;
  spec.palette = {{0.55, 0.55, 0.52}, {0.78, 0.36, 0.32}, {0.36, 0.66, 0.38},
                  {0.34, 0.42, 0.78}};
  spec.palette.resize(static_cast<std::size_t>(std::max<std::int64_t>(num_classes, 1)),
                      Rgb{0.5, 0.5, 0.5});
  spec.texture.assign(spec.palette.size(), Texture::kStripes);
  spec.texture_scale = 6.0;
  return spec;
}

DomainSpec DomainSpec::default_target(std::int64_t num_classes) {
  DomainSpec spec = default_source(num_classes);
  spec.texture.assign(spec.palette.size(), Texture::kChecker);
  spec.hue_shift = 40.0;
  spec.noise_level = 0.05;
  spec.illumination_gradient = 0.4;
  return spec;
}

RenderedSample render_sample(const std::vector<Shape>& shapes, const DomainSpec& spec,
                             std::uint64_t seed, std::int64_t height, std::int64_t width) {
  const auto num_classes = static_cast<std::int64_t>(spec.palette.size());
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  std::vector<Rgb> colours;
  for (const auto& c : spec.palette) colours.push_back(shift_hue(c, spec.hue_shift));

  // Per-class texture geometry, drawn fresh for every image.
  std::vector<double> orient(num_classes), phase(num_classes), off_x(num_classes),
      off_y(num_classes);
  for (std::int64_t c = 0; c < num_classes; ++c) {
    orient[c] = unit(gen) * std::numbers::pi;
    phase[c] = unit(gen) * 2.0 * std::numbers::pi;
    off_x[c] = unit(gen) * spec.texture_scale * 2.0;
    off_y[c] = unit(gen) * spec.texture_scale * 2.0;
  }
  const double light_dir = unit(gen) * 2.0 * std::numbers::pi;

  auto label = torch::zeros({height, width}, torch::kUInt8);
  auto image = torch::empty({height, width, 3}, torch::kUInt8);
  auto* lab = label.data_ptr<std::uint8_t>();
  auto* img = image.data_ptr<std::uint8_t>();
  for (std::int64_t y = 0; y < height; ++y) {
    for (std::int64_t x = 0; x < width; ++x) {
      const double px = static_cast<double>(x) + 0.5;
      const double py = static_cast<double>(y) + 0.5;
      std::int64_t cls = 0;
      for (const auto& s : shapes) {
        if (inside(s, px, py)) cls = static_cast<std::int64_t>(s.kind);
      }
      if (cls >= num_classes) {
        throw std::invalid_argument("shape class exceeds the domain palette");
      }
      lab[y * width + x] = static_cast<std::uint8_t>(cls);

      double m = 1.0;
      const double scale = spec.texture_scale;
      switch (spec.texture[cls]) {
        case Texture::kStripes: {
          const double u = px * std::cos(orient[cls]) + py * std::sin(orient[cls]);
          m = 0.5 + 0.5 * std::sin(2.0 * std::numbers::pi * u / scale + phase[cls]);
          break;
        }
        case Texture::kChecker: {
          const auto ix = static_cast<std::int64_t>(std::floor((px + off_x[cls]) / scale));
          const auto iy = static_cast<std::int64_t>(std::floor((py + off_y[cls]) / scale));
          m = ((ix + iy) % 2 == 0) ? 1.0 : 0.0;
          break;
        }
        case Texture::kSpeckle: m = unit(gen); break;
        case Texture::kPlain: m = 1.0; break;
      }
      const double ramp = (px / width - 0.5) * std::cos(light_dir) +
                          (py / height - 0.5) * std::sin(light_dir);
      const double light = 1.0 + spec.illumination_gradient * ramp;
      for (int ch = 0; ch < 3; ++ch) {
        double v = colours[cls][ch] * (1.0 - kTextureAmplitude + kTextureAmplitude * m);
        v *= light;
        if (spec.noise_level > 0.0) v += spec.noise_level * gauss(gen);
        v = std::clamp(v, 0.0, 1.0);
        img[(y * width + x) * 3 + ch] = static_cast<std::uint8_t>(std::lround(v * 255.0));
      }
    }
  }
  return {image, label};
}

DatasetManifest generate_benchmark(const BenchmarkConfig& config, const fs::path& root) {
  if (config.num_classes < 2) throw std::invalid_argument("benchmark needs K >= 2");
  if (config.num_classes > kMaxClasses) {
    throw std::invalid_argument("K=" + std::to_string(config.num_classes) +
                                " exceeds the available shape classes + background (" +
                                std::to_string(kMaxClasses) + ")");
  }
  if (config.counts.source_train < 1 || config.counts.target_train < 1 ||
      config.counts.target_val < 1) {
    throw std::invalid_argument("benchmark split sizes must be positive");
  }
  if (config.height < 8 || config.width < 8) {
    throw std::invalid_argument("benchmark images must be at least 8x8");
  }
  check_spec(config.source, config.num_classes, "source");
  check_spec(config.target, config.num_classes, "target");

  std::error_code ec;
  fs::create_directories(root / "images", ec);
  fs::create_directories(root / "labels", ec);
  if (ec || !fs::is_directory(root / "images") || !fs::is_directory(root / "labels")) {
    throw std::runtime_error("cannot create output directory " + root.string());
  }

  DatasetManifest manifest;
  manifest.seed = config.seed;
  manifest.num_classes = config.num_classes;
  manifest.height = config.height;
  manifest.width = config.width;
  manifest.counts = config.counts;

  const std::vector<std::pair<std::string, std::int64_t>> splits = {
      {"source_train", config.counts.source_train},
      {"target_train", config.counts.target_train},
      {"target_val", config.counts.target_val}};
  const double min_side = static_cast<double>(std::min(config.height, config.width));

  for (std::size_t split_index = 0; split_index < splits.size(); ++split_index) {
    const auto& [split, count] = splits[split_index];
    const Domain domain = parse_domain(split_domain_name(split));
    const DomainSpec& spec = domain == Domain::kSource ? config.source : config.target;
    for (std::int64_t i = 0; i < count; ++i) {
      const std::uint64_t sample_seed =
          mix_seed(config.seed, SeedStream::kDataset,
                   (static_cast<std::uint64_t>(split_index) << 32) | static_cast<std::uint64_t>(i));
      std::mt19937_64 gen(sample_seed);
      std::uniform_real_distribution<double> unit(0.0, 1.0);
      std::uniform_int_distribution<int> n_shapes(1, 4);
      std::uniform_int_distribution<std::int64_t> kind(1, config.num_classes - 1);

      std::vector<Shape> shapes(static_cast<std::size_t>(n_shapes(gen)));
      for (auto& s : shapes) {
        s.kind = static_cast<ShapeKind>(kind(gen));
        s.size = min_side * (0.12 + 0.13 * unit(gen));
        s.cx = s.size * 0.5 + unit(gen) * (config.width - s.size);
        s.cy = s.size * 0.5 + unit(gen) * (config.height - s.size);
        s.angle = unit(gen) * 2.0 * std::numbers::pi;
      }
      const auto rendered =
          render_sample(shapes, spec, gen(), config.height, config.width);

      std::ostringstream id;
      id << split << '_' << std::setw(5) << std::setfill('0') << i;
      ManifestRecord record;
      record.id = id.str();
      record.split = split;
      record.domain = domain;
      record.image_path = "images/" + record.id + ".png";
      record.label_path = "labels/" + record.id + ".png";

      cv::Mat rgb(static_cast<int>(config.height), static_cast<int>(config.width), CV_8UC3,
                  rendered.image.data_ptr<std::uint8_t>());
      cv::Mat bgr;
      cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
      cv::Mat lab(static_cast<int>(config.height), static_cast<int>(config.width), CV_8UC1,
                  rendered.label.data_ptr<std::uint8_t>());
      write_png(root / record.image_path, bgr);
      write_png(root / record.label_path, lab);
      record.image_sha256 = sha256_file(root / record.image_path);
      record.label_sha256 = sha256_file(root / record.label_path);
      manifest.records.push_back(std::move(record));
    }
  }
  write_manifest(manifest, root / "manifest.json");
  return manifest;
}

void write_manifest(const DatasetManifest& manifest, const fs::path& manifest_path) {
  json j;
  j["version"] = manifest.version;
  j["seed"] = manifest.seed;
  j["num_classes"] = manifest.num_classes;
  j["height"] = manifest.height;
  j["width"] = manifest.width;
  j["counts"] = {{"source_train", manifest.counts.source_train},
                 {"target_train", manifest.counts.target_train},
                 {"target_val", manifest.counts.target_val}};
  j["records"] = json::array();
  for (const auto& r : manifest.records) {
    j["records"].push_back({{"id", r.id},
                            {"split", r.split},
                            {"domain", to_string(r.domain)},
                            {"image", r.image_path},
                            {"label", r.label_path},
                            {"image_sha256", r.image_sha256},
                            {"label_sha256", r.label_sha256}});
  }
  std::ofstream out(manifest_path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + manifest_path.string());
  out << j.dump(2) << '\n';
  if (!out) throw std::runtime_error("failed writing " + manifest_path.string());
}

DatasetManifest read_manifest(const fs::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw std::runtime_error("cannot open manifest " + manifest_path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw std::runtime_error("malformed manifest " + manifest_path.string() + ": " + e.what());
  }
  DatasetManifest m;
  try {
    m.version = j.value("version", std::string("1"));
    m.seed = j.value("seed", std::uint64_t{0});
    m.num_classes = j.value("num_classes", std::int64_t{4});
    m.height = j.value("height", std::int64_t{64});
    m.width = j.value("width", std::int64_t{64});
    if (j.contains("counts")) {
      const auto& c = j.at("counts");
      m.counts.source_train = c.value("source_train", std::int64_t{0});
      m.counts.target_train = c.value("target_train", std::int64_t{0});
      m.counts.target_val = c.value("target_val", std::int64_t{0});
    }
    for (const auto& r : j.value("records", json::array())) {
      ManifestRecord rec;
      rec.id = r.at("id").get<std::string>();
      rec.split = r.at("split").get<std::string>();
      rec.domain = parse_domain(r.at("domain").get<std::string>());
      rec.image_path = r.at("image").get<std::string>();
      rec.label_path = r.at("label").get<std::string>();
      rec.image_sha256 = r.value("image_sha256", std::string());
      rec.label_sha256 = r.value("label_sha256", std::string());
      m.records.push_back(std::move(rec));
    }
  } catch (const json::exception& e) {
    throw std::runtime_error("invalid manifest " + manifest_path.string() + ": " + e.what());
  }
  return m;
}

SegSample::SegSample(std::string id, Domain domain, torch::Tensor image,
                     std::optional<torch::Tensor> label)
    : id_(std::move(id)), domain_(domain), image_(std::move(image)), label_(std::move(label)) {}

std::optional<torch::Tensor> SegSample::training_label() const {
  if (domain_ == Domain::kTarget) return std::nullopt;
  return label_;
}

const torch::Tensor& SegSample::evaluation_label() const {
  if (!label_) throw std::logic_error("sample " + id_ + " has no label");
  return *label_;
}

std::vector<const SegSample*> LoadedDataset::split(std::string_view name) const {
  std::vector<const SegSample*> out;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (manifest.records[i].split == name) out.push_back(&samples[i]);
  }
  return out;
}

LoadedDataset load_dataset(const fs::path& manifest_path) {
  LoadedDataset ds;
  ds.manifest = read_manifest(manifest_path);
  const fs::path root = manifest_path.parent_path();
  std::vector<std::string> seen;
  for (const auto& rec : ds.manifest.records) {
    if (std::find(seen.begin(), seen.end(), rec.id) != seen.end()) {
      throw std::runtime_error("duplicate sample id " + rec.id + " in " + manifest_path.string());
    }
    seen.push_back(rec.id);
    const fs::path image_path = root / rec.image_path;
    const fs::path label_path = root / rec.label_path;
    for (const auto& [path, sum] : {std::pair{image_path, rec.image_sha256},
                                    std::pair{label_path, rec.label_sha256}}) {
      if (!fs::exists(path)) throw std::runtime_error("missing file " + path.string());
      if (!sum.empty() && sha256_file(path) != sum) {
        throw std::runtime_error("checksum mismatch for " + path.string());
      }
    }
    const cv::Mat bgr = cv::imread(image_path.string(), cv::IMREAD_COLOR);
    if (bgr.empty()) throw std::runtime_error("cannot decode image " + image_path.string());
    const cv::Mat lab = cv::imread(label_path.string(), cv::IMREAD_UNCHANGED);
    if (lab.empty() || lab.type() != CV_8UC1) {
      throw std::runtime_error("label is not an 8-bit single-channel PNG: " + label_path.string());
    }
    if (lab.rows != bgr.rows || lab.cols != bgr.cols) {
      throw std::runtime_error("label size differs from image size: " + label_path.string());
    }
    for (int y = 0; y < lab.rows; ++y) {
      for (int x = 0; x < lab.cols; ++x) {
        const int v = lab.at<std::uint8_t>(y, x);
        if (v != kIgnoreLabel && v >= ds.manifest.num_classes) {
          throw std::runtime_error("label value " + std::to_string(v) + " outside {0.." +
                                   std::to_string(ds.manifest.num_classes - 1) +
                                   ",255} in " + label_path.string());
        }
      }
    }
    auto label = torch::from_blob(const_cast<std::uint8_t*>(lab.ptr<std::uint8_t>()),
                                  {lab.rows, lab.cols}, torch::kUInt8)
                     .to(torch::kInt64);
    ds.samples.emplace_back(rec.id, rec.domain, image_to_unit_range(bgr), label);
  }
  return ds;
}

void augment_in_place(torch::Tensor& image, torch::Tensor* label, Rng& rng,
                      const AugmentOptions& options) {
  if (rng.bernoulli(options.flip_probability)) {
    image = image.flip({-1});
    if (label != nullptr && label->defined()) *label = label->flip({-1});
  }
  if (options.jitter > 0.0) {
    const double lo = 1.0 - options.jitter;
    const double hi = 1.0 + options.jitter;
    const double brightness = rng.uniform_real(lo, hi);
    const double contrast = rng.uniform_real(lo, hi);
    const double saturation = rng.uniform_real(lo, hi);
    auto unit = image.add(1.0).mul(0.5);
    unit = unit.mul(brightness).clamp(0.0, 1.0);
    const auto gray = (unit[0] * 0.299 + unit[1] * 0.587 + unit[2] * 0.114).unsqueeze(0);
    const auto mean = gray.mean();
    unit = unit.sub(mean).mul(contrast).add(mean).clamp(0.0, 1.0);
    const auto gray2 = (unit[0] * 0.299 + unit[1] * 0.587 + unit[2] * 0.114).unsqueeze(0);
    unit = unit.sub(gray2).mul(saturation).add(gray2).clamp(0.0, 1.0);
    image = unit.mul(2.0).sub(1.0);
  }
  image = image.clamp(-1.0, 1.0).contiguous();
}

SegSample augment(const SegSample& sample, Rng& rng, const AugmentOptions& options) {
  torch::Tensor image = sample.image_.clone();
  torch::Tensor label;
  if (sample.label_) label = sample.label_->clone();
  augment_in_place(image, sample.label_ ? &label : nullptr, rng, options);
  std::optional<torch::Tensor> out_label;
  if (sample.label_) out_label = label.contiguous();
  return SegSample(sample.id_, sample.domain_, image, out_label);
}

StackedSplit stack_split(const std::vector<const SegSample*>& samples,
                         bool use_evaluation_labels) {
  StackedSplit out;
  if (samples.empty()) return out;
  std::vector<torch::Tensor> images;
  std::vector<torch::Tensor> labels;
  bool all_labeled = true;
  for (const auto* s : samples) {
    images.push_back(s->image());
    if (use_evaluation_labels) {
      if (s->has_label()) labels.push_back(s->evaluation_label());
      else all_labeled = false;
    } else if (auto l = s->training_label()) {
      labels.push_back(*l);
    } else {
      all_labeled = false;
    }
  }
  out.images = torch::stack(images);
  if (all_labeled) out.labels = torch::stack(labels);
  return out;
}

}  // namespace dida
