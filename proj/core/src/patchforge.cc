// Copyright 2026 The patchguard Authors. All Rights Reserved.
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

#include "patchguard/patchforge.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <iostream>
#include <limits>
#include <numbers>
#include <sstream>

#include "patchguard/gradcam.h"

namespace patchguard {

namespace {

struct Pair {
  Provenance value;
  const char* name;
};

constexpr Pair kProvenanceNames[] = {{Provenance::kRandomInit, "random-init"},
                                     {Provenance::kTrained, "trained"},
                                     {Provenance::kAdjusted, "adjusted"},
                                     {Provenance::kSimulated, "simulated"},
                                     {Provenance::kLoaded, "loaded"}};

// TV over a C x H x W array given as an accessor; gradient is optional.
template <typename Get>
double tv_impl(int channels, int height, int width, Get get, Tensor* grad) {
  if (height < 1 || width < 1) throw DimensionError("total variation of an empty image");
  double sum = 0.0;
  const double norm = 1.0 / (static_cast<double>(height) * width);
  for (int c = 0; c < channels; ++c)
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) {
        const double v = get(c, y, x);
        const double dx = x + 1 < width ? get(c, y, x + 1) - v : 0.0;
        const double dy = y + 1 < height ? get(c, y + 1, x) - v : 0.0;
        const double m = std::sqrt(dx * dx + dy * dy);
        sum += m;
        if (grad && m > 0.0) {
          if (x + 1 < width) (*grad)(c, y, x + 1) += norm * dx / m;
          if (y + 1 < height) (*grad)(c, y + 1, x) += norm * dy / m;
          (*grad)(c, y, x) -= norm * (dx + dy) / m;
        }
      }
  return sum * norm;
}

double nearest_palette_distance(const double p[3], const std::vector<std::array<double, 3>>& palette, size_t* which) {
  double best = std::numeric_limits<double>::infinity();
  for (size_t k = 0; k < palette.size(); ++k) {
    const double d0 = p[0] - palette[k][0];
    const double d1 = p[1] - palette[k][1];
    const double d2 = p[2] - palette[k][2];
    const double d = d0 * d0 + d1 * d1 + d2 * d2;
    if (d < best) {
      best = d;
      *which = k;
    }
  }
  return std::sqrt(best);
}

std::vector<std::array<double, 3>> scaled_palette(const std::vector<Rgb>& palette, double scale) {
  if (palette.empty()) throw ParameterError("printability palette is empty");
  std::vector<std::array<double, 3>> out;
  out.reserve(palette.size());
  for (const Rgb& c : palette) out.push_back({c.r * scale, c.g * scale, c.b * scale});
  return out;
}

double clip01(double v) { return std::clamp(v, 0.0, 1.0); }

struct AdjustState {
  double gradcam_sum = 0.0;
  double objectness = 0.0;
  Tensor objectness_gradient;
  Tensor gradcam_gradient;
};

}  // namespace

const char* to_string(Provenance p) {
  for (const Pair& e : kProvenanceNames)
    if (e.value == p) return e.name;
  return "unknown";
}

Provenance provenance_from_string(const std::string& s) {
  for (const Pair& e : kProvenanceNames)
    if (s == e.name) return e.value;
  throw ParameterError("unknown patch provenance: " + s);
}

Patch Patch::from_raster(const RasterImage& image, Provenance provenance) {
  if (image.height() != image.width() || image.empty()) throw DimensionError("patch must be a non-empty square");
  Patch p;
  p.pixels = to_tensor(image);
  p.provenance = provenance;
  return p;
}

Patch Patch::random(int size, std::uint64_t seed) {
  if (size < 1) throw ParameterError("patch size must be positive");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Patch p;
  p.pixels = Tensor(3, size, size);
  for (double& v : p.pixels.values()) v = u(rng);
  return p;
}

std::vector<Rgb> read_palette(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw BackendError("cannot open palette: " + path.string());
  std::vector<Rgb> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream fields(line);
    int v[3];
    if (!(fields >> v[0])) continue;
    if (!(fields >> v[1] >> v[2]) || std::any_of(v, v + 3, [](int x) { return x < 0 || x > 255; })) {
      throw ParameterError(path.string() + ":" + std::to_string(line_no) + ": expected three values in 0..255");
    }
    out.push_back({static_cast<std::uint8_t>(v[0]), static_cast<std::uint8_t>(v[1]), static_cast<std::uint8_t>(v[2])});
  }
  if (out.empty()) throw ParameterError("palette has no colours: " + path.string());
  return out;
}

double total_variation(const RasterImage& image) {
  return tv_impl(3, image.height(), image.width(),
                 [&](int c, int y, int x) { return static_cast<double>(image.at(y, x, c)); }, nullptr);
}

double total_variation(const Tensor& pixels, Tensor* grad) {
  if (grad) *grad = Tensor(pixels.channels(), pixels.height(), pixels.width());
  return tv_impl(pixels.channels(), pixels.height(), pixels.width(),
                 [&](int c, int y, int x) { return pixels(c, y, x); }, grad);
}

double nonprintability_score(const RasterImage& image, const std::vector<Rgb>& palette) {
  const auto pal = scaled_palette(palette, 1.0);
  if (image.empty()) throw DimensionError("non-printability of an empty image");
  double sum = 0.0;
  size_t which = 0;
  for (int y = 0; y < image.height(); ++y)
    for (int x = 0; x < image.width(); ++x) {
      const double p[3] = {static_cast<double>(image.at(y, x, 0)), static_cast<double>(image.at(y, x, 1)),
                           static_cast<double>(image.at(y, x, 2))};
      sum += nearest_palette_distance(p, pal, &which);
    }
  return sum / (static_cast<double>(image.height()) * image.width());
}

double nonprintability_score(const Tensor& pixels, const std::vector<Rgb>& palette, Tensor* grad) {
  const auto pal = scaled_palette(palette, 1.0 / 255.0);
  if (pixels.channels() != 3) throw DimensionError("non-printability needs 3 channels");
  if (pixels.empty()) throw DimensionError("non-printability of an empty image");
  if (grad) *grad = Tensor(3, pixels.height(), pixels.width());
  const double norm = 1.0 / static_cast<double>(pixels.plane_size());
  double sum = 0.0;
  size_t which = 0;
  for (int y = 0; y < pixels.height(); ++y)
    for (int x = 0; x < pixels.width(); ++x) {
      const double p[3] = {pixels(0, y, x), pixels(1, y, x), pixels(2, y, x)};
      const double d = nearest_palette_distance(p, pal, &which);
      sum += d;
      if (grad && d > 0.0)
        for (int c = 0; c < 3; ++c) (*grad)(c, y, x) = norm * (p[c] - pal[which][static_cast<size_t>(c)]) / d;
    }
  return sum * norm;
}

ApplyTransform sample_transform(std::mt19937_64& rng, const TransformRanges& ranges) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  ApplyTransform t;
  t.scale_fraction = ranges.scale_fraction;
  t.rotation_deg = (2.0 * u(rng) - 1.0) * ranges.max_rotation_deg;
  t.brightness = (2.0 * u(rng) - 1.0) * ranges.max_brightness;
  t.contrast = ranges.min_contrast + u(rng) * (ranges.max_contrast - ranges.min_contrast);
  return t;
}

PixelMask PatchPlacement::footprint() const {
  PixelMask mask(image_height, image_width, 0);
  for (const Tap& t : taps) mask(t.row, t.col) = 1;
  return mask;
}

PatchPlacement place_patch(int image_height, int image_width, int patch_size, const BoxF& box,
                           const ApplyTransform& transform) {
  if (patch_size < 1) throw ParameterError("patch size must be positive");
  PatchPlacement pl;
  pl.image_height = image_height;
  pl.image_width = image_width;
  pl.patch_size = patch_size;
  pl.contrast = transform.contrast;
  pl.brightness = transform.brightness;
  const double side = transform.scale_fraction * box.width();
  if (!(box.width() > 0 && box.height() > 0) || !(side > 0)) return pl;

  const double cx = (box.x0 + box.x1) / 2 + transform.offset_x * box.width();
  const double cy = (box.y0 + box.y1) / 2 + transform.offset_y * box.height();
  const double theta = transform.rotation_deg * std::numbers::pi / 180.0;
  const double cs = std::cos(theta);
  const double sn = std::sin(theta);
  const double half = side / 2;
  const double reach = half * std::numbers::sqrt2 + 1.0;
  const int r0 = std::max(0, static_cast<int>(std::floor(cy - reach)));
  const int r1 = std::min(image_height - 1, static_cast<int>(std::ceil(cy + reach)));
  const int c0 = std::max(0, static_cast<int>(std::floor(cx - reach)));
  const int c1 = std::min(image_width - 1, static_cast<int>(std::ceil(cx + reach)));
  const double n = patch_size;

  for (int r = r0; r <= r1; ++r)
    for (int c = c0; c <= c1; ++c) {
      const double px = c + 0.5 - cx;
      const double py = r + 0.5 - cy;
      const double u = cs * px + sn * py;
      const double v = -sn * px + cs * py;
      if (u < -half || u >= half || v < -half || v >= half) continue;
      const double fx = std::clamp((u + half) / side * n - 0.5, 0.0, n - 1);
      const double fy = std::clamp((v + half) / side * n - 0.5, 0.0, n - 1);
      const int x0 = static_cast<int>(fx);
      const int y0 = static_cast<int>(fy);
      const int x1 = std::min(x0 + 1, patch_size - 1);
      const int y1 = std::min(y0 + 1, patch_size - 1);
      const double wx = fx - x0;
      const double wy = fy - y0;
      PatchPlacement::Tap tap{r, c, {y0 * patch_size + x0, y0 * patch_size + x1, y1 * patch_size + x0, y1 * patch_size + x1},
                              {(1 - wy) * (1 - wx), (1 - wy) * wx, wy * (1 - wx), wy * wx}};
      pl.taps.push_back(tap);
    }
  return pl;
}

namespace {

double sample_tap(const Tensor& patch, int channel, const PatchPlacement::Tap& t) {
  const double* p = patch.channel(channel);
  return t.weight[0] * p[t.src[0]] + t.weight[1] * p[t.src[1]] + t.weight[2] * p[t.src[2]] + t.weight[3] * p[t.src[3]];
}

void check_placement(const Tensor& patch, const PatchPlacement& pl) {
  if (patch.channels() != 3 || patch.height() != pl.patch_size || patch.width() != pl.patch_size) {
    throw DimensionError("patch does not match its placement");
  }
}

}  // namespace

Tensor composite(const Tensor& image, const Tensor& patch, const PatchPlacement& pl) {
  check_placement(patch, pl);
  if (image.channels() != 3 || image.height() != pl.image_height || image.width() != pl.image_width) {
    throw DimensionError("image does not match the patch placement");
  }
  Tensor out = image;
  for (const auto& t : pl.taps)
    for (int c = 0; c < 3; ++c) out(c, t.row, t.col) = clip01(pl.contrast * sample_tap(patch, c, t) + pl.brightness);
  return out;
}

Tensor composite_adjoint(Tensor& grad_image, const Tensor& patch, const PatchPlacement& pl) {
  check_placement(patch, pl);
  if (grad_image.height() != pl.image_height || grad_image.width() != pl.image_width || grad_image.channels() != 3) {
    throw DimensionError("gradient does not match the patch placement");
  }
  Tensor grad(3, pl.patch_size, pl.patch_size);
  for (const auto& t : pl.taps)
    for (int c = 0; c < 3; ++c) {
      double& g = grad_image(c, t.row, t.col);
      const double pre = pl.contrast * sample_tap(patch, c, t) + pl.brightness;
      if (pre >= 0.0 && pre <= 1.0) {
        double* out = grad.channel(c);
        for (int k = 0; k < 4; ++k) out[t.src[k]] += g * pl.contrast * t.weight[k];
      }
      g = 0.0;
    }
  return grad;
}

RasterImage apply_patch(const RasterImage& image, const Patch& patch, const BoxF& box, const ApplyTransform& transform) {
  if (!(box.width() > 0 && box.height() > 0)) {
    std::cerr << "warning: degenerate person box, patch not applied\n";
    return image;
  }
  const PatchPlacement pl = place_patch(image.height(), image.width(), patch.size(), box, transform);
  check_placement(patch.pixels, pl);
  RasterImage out = image;
  for (const auto& t : pl.taps)
    for (int c = 0; c < 3; ++c) {
      const double v = clip01(pl.contrast * sample_tap(patch.pixels, c, t) + pl.brightness);
      out.at(t.row, t.col, c) = static_cast<std::uint8_t>(std::lround(v * 255.0));
    }
  return out;
}

void validate(const PatchTrainConfig& config) {
  if (config.iterations < 1) throw ParameterError("iterations must be positive");
  if (config.batch_size < 1) throw ParameterError("batch size must be positive");
  if (!(config.learning_rate > 0)) throw ParameterError("learning rate must be positive");
  if (config.patch_size < 1) throw ParameterError("patch size must be positive");
  if (!(config.alpha >= 0) || !(config.beta >= 0)) throw ParameterError("loss weights must be nonnegative");
  if (config.beta > 0 && config.palette.empty()) throw ParameterError("printability palette is empty");
}

std::vector<TrainingSample> prepare_training_set(const Detector& detector, std::vector<TrainingSample> samples) {
  const int size = detector.config().input_size;
  for (TrainingSample& s : samples) {
    const Letterbox lb = letterbox(s.image, size);
    for (BoxF& b : s.persons) {
      b = clip_box({b.x0 * lb.scale + lb.offset_col, b.y0 * lb.scale + lb.offset_row, b.x1 * lb.scale + lb.offset_col,
                    b.y1 * lb.scale + lb.offset_row},
                   size, size);
    }
    s.image = lb.canvas;
  }
  return samples;
}

TrainResult train_patch(const Detector& detector, const std::vector<TrainingSample>& dataset,
                        const PatchTrainConfig& config, std::function<void(int, const LossRecord&)> progress) {
  validate(config);
  if (!detector.differentiable()) throw CapabilityError("patch training needs a differentiable detector");
  std::vector<size_t> usable;
  for (size_t i = 0; i < dataset.size(); ++i)
    if (!dataset[i].persons.empty()) usable.push_back(i);
  if (usable.empty()) throw ParameterError("training set has no person boxes");

  std::mt19937_64 rng(config.seed);
  TrainResult result;
  result.patch = Patch::random(config.patch_size, rng());
  Tensor& x = result.patch.pixels;
  Tensor m(3, config.patch_size, config.patch_size);
  Tensor v(3, config.patch_size, config.patch_size);
  constexpr double kBeta1 = 0.9;
  constexpr double kBeta2 = 0.999;
  constexpr double kEps = 1e-8;

  std::vector<size_t> order = usable;
  size_t cursor = order.size();
  result.history.reserve(static_cast<size_t>(config.iterations));

  for (int it = 0; it < config.iterations; ++it) {
    Tensor grad(3, config.patch_size, config.patch_size);
    double obj_sum = 0.0;
    for (int b = 0; b < config.batch_size; ++b) {
      if (cursor == order.size()) {
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      const TrainingSample& s = dataset[order[cursor++]];
      Tensor img = to_tensor(s.image);
      std::vector<PatchPlacement> placements;
      for (const BoxF& box : s.persons) {
        placements.push_back(place_patch(img.height(), img.width(), config.patch_size, box,
                                         sample_transform(rng, config.transforms)));
        img = composite(img, x, placements.back());
      }
      GradientBundle bundle = detector.gradients_for(img, detector.objectness_target());
      obj_sum += bundle.target_value;
      for (auto p = placements.rbegin(); p != placements.rend(); ++p) {
        const Tensor g = composite_adjoint(bundle.input_gradient, x, *p);
        for (size_t i = 0; i < g.size(); ++i) grad.data()[i] += g.data()[i];
      }
    }
    const double inv_batch = 1.0 / config.batch_size;
    LossRecord rec;
    rec.objectness = obj_sum * inv_batch;
    Tensor tv_grad;
    Tensor nps_grad;
    rec.tv = total_variation(x, &tv_grad);
    if (!config.palette.empty()) rec.nps = nonprintability_score(x, config.palette, &nps_grad);
    rec.total = rec.objectness + config.alpha * rec.tv + config.beta * rec.nps;
    result.history.push_back(rec);
    if (progress) progress(it, rec);

    const double bc1 = 1.0 - std::pow(kBeta1, it + 1);
    const double bc2 = 1.0 - std::pow(kBeta2, it + 1);
    for (size_t i = 0; i < x.size(); ++i) {
      double g = grad.data()[i] * inv_batch + config.alpha * tv_grad.data()[i];
      if (!nps_grad.empty()) g += config.beta * nps_grad.data()[i];
      m.data()[i] = kBeta1 * m.data()[i] + (1 - kBeta1) * g;
      v.data()[i] = kBeta2 * v.data()[i] + (1 - kBeta2) * g * g;
      const double step = config.learning_rate * (m.data()[i] / bc1) / (std::sqrt(v.data()[i] / bc2) + kEps);
      x.data()[i] = clip01(x.data()[i] - step);
    }
  }
  result.patch.provenance = Provenance::kTrained;
  return result;
}

double mean_patched_objectness(const Detector& detector, const std::vector<TrainingSample>& samples,
                               const Patch& patch, const TransformRanges& ranges, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  double sum = 0.0;
  int count = 0;
  for (const TrainingSample& s : samples) {
    if (s.persons.empty()) continue;
    Tensor img = to_tensor(s.image);
    for (const BoxF& box : s.persons)
      img = composite(img, patch.pixels,
                      place_patch(img.height(), img.width(), patch.size(), box, sample_transform(rng, ranges)));
    sum += detector.target_value(img, detector.objectness_target());
    ++count;
  }
  if (count == 0) throw ParameterError("no samples with person boxes");
  return sum / count;
}

ChannelMask eligible_pixel_mask(const Tensor& objectness_gradient, const Tensor& gradcam_gradient,
                                double magnitude_factor) {
  if (!objectness_gradient.same_shape(gradcam_gradient)) throw DimensionError("gradient shapes differ");
  ChannelMask mask(gradcam_gradient.channels(), gradcam_gradient.height(), gradcam_gradient.width());
  for (size_t i = 0; i < mask.size(); ++i) {
    const double o = objectness_gradient.data()[i];
    const double g = gradcam_gradient.data()[i];
    const bool same_sign = (o > 0 && g > 0) || (o < 0 && g < 0);
    mask.data()[i] = same_sign || std::abs(g) > magnitude_factor * std::abs(o) ? 1 : 0;
  }
  return mask;
}

Tensor adjust_step(const Tensor& pixels, const ChannelMask& eligible, const Tensor& gradcam_gradient, double epsilon) {
  if (!pixels.same_shape(eligible) || !pixels.same_shape(gradcam_gradient)) {
    throw DimensionError("adjust_step: shape mismatch");
  }
  Tensor out = pixels;
  for (size_t i = 0; i < out.size(); ++i) {
    if (!eligible.data()[i]) continue;
    const double g = gradcam_gradient.data()[i];
    const double s = g > 0 ? 1.0 : (g < 0 ? -1.0 : 0.0);
    out.data()[i] = clip01(out.data()[i] - epsilon * s);
  }
  return out;
}

Patch simulate_physical(const Patch& patch, const SimulationConfig& config, std::mt19937_64* rng) {
  RasterImage img = patch.raster();
  if (config.blur_sigma > 0) img = gaussian_blur(img, config.blur_sigma);
  int delta = config.brightness_delta;
  if (config.brightness_sigma > 0 && rng) {
    std::normal_distribution<double> drop(-config.brightness_delta, config.brightness_sigma);
    delta = -static_cast<int>(std::lround(drop(*rng)));
  }
  return Patch::from_raster(brightness_shift(img, delta), Provenance::kSimulated);
}

void validate(const AdjustConfig& config) {
  if (!(config.epsilon > 0)) throw ParameterError("epsilon must be positive");
  if (!(config.magnitude_factor > 0)) throw ParameterError("magnitude factor must be positive");
  if (!(config.target_reduction >= 0 && config.target_reduction < 1)) {
    throw ParameterError("target reduction must lie in [0, 1)");
  }
  if (config.max_iterations < 1) throw ParameterError("max iterations must be positive");
}

EvasionProbe signature_defense_probe(const Detector& detector, const AdjustExample& example,
                                     const FilterConfig& filter_config) {
  validate(filter_config);
  return [&detector, example, filter_config](const Patch& simulated) {
    const RasterImage attacked = apply_patch(example.image, simulated, example.person, example.transform);
    const DefenseVerdict verdict = defend(detector, attacked, filter_config);
    const int cls = detector.class_index(filter_config.target_class);
    return std::none_of(verdict.detections_after.begin(), verdict.detections_after.end(),
                        [cls](const Detection& d) { return d.class_id == cls; });
  };
}

AdjustResult adjust_patch(const Detector& detector, Patch patch, const AdjustExample& example,
                          const AdjustConfig& config, const EvasionProbe& probe) {
  validate(config);
  if (!detector.differentiable()) throw CapabilityError("patch adjustment needs a differentiable detector");
  const PatchPlacement pl =
      place_patch(example.image.height(), example.image.width(), patch.size(), example.person, example.transform);
  if (pl.taps.empty()) throw ParameterError("patch does not cover any pixel of the example");
  const PixelMask footprint = pl.footprint();
  const Tensor base = to_tensor(example.image);
  const int class_id = detector.target_class_id();

  auto evaluate = [&](const Tensor& pixels) {
    const Tensor x = composite(base, pixels, pl);
    RegionScoreGradient gc = gradcam_region_gradient(detector, x, class_id, footprint);
    GradientBundle obj = detector.gradients_for(x, detector.objectness_target());
    AdjustState s;
    s.gradcam_sum = gc.score_sum;
    s.objectness = obj.target_value;
    s.gradcam_gradient = composite_adjoint(gc.input_gradient, pixels, pl);
    s.objectness_gradient = composite_adjoint(obj.input_gradient, pixels, pl);
    return s;
  };

  std::mt19937_64 rng(config.seed);
  AdjustState state = evaluate(patch.pixels);
  AdjustResult result;
  result.initial_gradcam_sum = state.gradcam_sum;
  const double goal = (1.0 - config.target_reduction) * state.gradcam_sum;

  for (int it = 1; it <= config.max_iterations; ++it) {
    const ChannelMask mask = eligible_pixel_mask(state.objectness_gradient, state.gradcam_gradient,
                                                 config.magnitude_factor);
    AdjustIteration rec;
    rec.iteration = it;
    for (size_t i = 0; i < mask.size(); ++i)
      if (mask.data()[i] && state.gradcam_gradient.data()[i] != 0.0) ++rec.eligible;
    patch.pixels = adjust_step(patch.pixels, mask, state.gradcam_gradient, config.epsilon);
    state = evaluate(patch.pixels);
    rec.gradcam_sum = state.gradcam_sum;
    rec.objectness = state.objectness;
    rec.reduction_met = config.target_reduction <= 0 || state.gradcam_sum <= goal;
    if (rec.reduction_met) rec.probe_passed = probe(simulate_physical(patch, config.simulation, &rng));
    result.log.push_back(rec);
    if (rec.reduction_met && rec.probe_passed) {
      result.converged = true;
      break;
    }
  }
  patch.gradcam_sum = state.gradcam_sum;
  patch.provenance = Provenance::kAdjusted;
  result.patch = std::move(patch);
  return result;
}

}  // namespace patchguard
