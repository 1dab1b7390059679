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

#include "patchguard/gradcam.h"

#include <algorithm>
#include <cmath>

namespace patchguard {

namespace {

void check_bundle(const GradientBundle& bundle) {
  if (!bundle.features.same_shape(bundle.feature_gradients)) {
    throw DimensionError("gradient bundle: feature maps and gradients differ in shape");
  }
  if (bundle.features.empty()) throw DimensionError("gradient bundle: no feature maps");
}

Grid<double> weighted_sum(const GradientBundle& bundle, std::span<const double> weights) {
  const Tensor& f = bundle.features;
  if (weights.size() != static_cast<size_t>(f.channels())) {
    throw DimensionError("coarse_map: expected one weight per feature map");
  }
  Grid<double> out(f.height(), f.width(), 0.0);
  auto o = out.values();
  for (int k = 0; k < f.channels(); ++k) {
    const double a = weights[static_cast<size_t>(k)];
    if (a == 0.0) continue;
    const double* fk = f.channel(k);
    for (size_t i = 0; i < o.size(); ++i) o[i] += a * fk[i];
  }
  return out;
}

std::uint8_t blend(std::uint8_t a, std::uint8_t b) { return static_cast<std::uint8_t>((a + b + 1) / 2); }

}  // namespace

std::vector<double> neuron_weights(const GradientBundle& bundle) {
  check_bundle(bundle);
  const Tensor& g = bundle.feature_gradients;
  std::vector<double> alpha(static_cast<size_t>(g.channels()), 0.0);
  const double n = static_cast<double>(g.plane_size());
  for (int k = 0; k < g.channels(); ++k) {
    const double* gk = g.channel(k);
    double sum = 0.0;
    for (size_t i = 0; i < g.plane_size(); ++i) sum += gk[i];
    alpha[static_cast<size_t>(k)] = sum / n;
  }
  return alpha;
}

Grid<double> coarse_map(const GradientBundle& bundle, std::span<const double> weights) {
  check_bundle(bundle);
  Grid<double> out = weighted_sum(bundle, weights);
  for (double& v : out.values()) v = std::max(v, 0.0);
  return out;
}

GradCamResult gradcam_from_bundle(const GradientBundle& bundle, int height, int width) {
  GradCamResult r;
  r.alpha = neuron_weights(bundle);
  r.pre_relu = weighted_sum(bundle, r.alpha);
  r.coarse = r.pre_relu;
  for (double& v : r.coarse.values()) v = std::max(v, 0.0);
  r.pixel_scores = bilinear_upsample(r.coarse, height, width);
  return r;
}

GradCamResult pixel_scores(const Detector& detector, const Tensor& image, int class_id) {
  const GradientBundle bundle = detector.gradients_for(image, detector.gradcam_target(class_id));
  return gradcam_from_bundle(bundle, image.height(), image.width());
}

GradCamResult pixel_scores(const Detector& detector, const RasterImage& image, std::string_view target_class) {
  return pixel_scores(detector, to_tensor(image), detector.class_index(target_class));
}

Rgb ramp_color(double t) {
  t = std::clamp(t, 0.0, 1.0);
  double r = 0, g = 0, b = 0;
  if (t < 0.25) {
    g = 4 * t;
    b = 1;
  } else if (t < 0.5) {
    g = 1;
    b = 1 - 4 * (t - 0.25);
  } else if (t < 0.75) {
    r = 4 * (t - 0.5);
    g = 1;
  } else {
    r = 1;
    g = 1 - 4 * (t - 0.75);
  }
  auto q = [](double v) { return static_cast<std::uint8_t>(std::lround(v * 255.0)); };
  return {q(r), q(g), q(b)};
}

RasterImage heatmap_render(const GradCamResult& result, const RasterImage& image) {
  const ScoreMap& s = result.pixel_scores;
  if (!s.same_shape(image.height(), image.width())) throw DimensionError("heatmap_render: score map shape mismatch");
  const auto [lo_it, hi_it] = std::minmax_element(s.values().begin(), s.values().end());
  const double lo = *lo_it;
  const double span = *hi_it - lo;
  RasterImage out(image.height(), image.width());
  for (int r = 0; r < image.height(); ++r)
    for (int c = 0; c < image.width(); ++c) {
      const double t = span > 0 ? (s(r, c) - lo) / span : 0.5;
      const Rgb color = ramp_color(t);
      const Rgb px = image.pixel(r, c);
      out.set_pixel(r, c, {blend(color.r, px.r), blend(color.g, px.g), blend(color.b, px.b)});
    }
  return out;
}

RegionScoreGradient gradcam_region_gradient(const Detector& detector, const Tensor& image, int class_id,
                                            const PixelMask& region) {
  if (!region.same_shape(image.height(), image.width())) throw DimensionError("region mask shape mismatch");
  const GradientBundle bundle = detector.gradients_for(image, detector.gradcam_target(class_id));
  RegionScoreGradient out;
  out.cam = gradcam_from_bundle(bundle, image.height(), image.width());

  ScoreMap indicator(image.height(), image.width(), 0.0);
  for (int r = 0; r < image.height(); ++r)
    for (int c = 0; c < image.width(); ++c)
      if (region(r, c)) {
        indicator(r, c) = 1.0;
        out.score_sum += out.cam.pixel_scores(r, c);
      }
  // d sum / d coarse, then through the ReLU and the fixed-alpha weighted sum.
  const Grid<double> coarse_grad =
      bilinear_upsample_adjoint(indicator, out.cam.coarse.rows(), out.cam.coarse.cols());
  const Tensor& f = bundle.features;
  Tensor seed(f.channels(), f.height(), f.width());
  for (int k = 0; k < f.channels(); ++k) {
    const double a = out.cam.alpha[static_cast<size_t>(k)];
    double* sk = seed.channel(k);
    for (int i = 0; i < f.height(); ++i)
      for (int j = 0; j < f.width(); ++j)
        sk[static_cast<size_t>(i) * f.width() + j] = out.cam.pre_relu(i, j) > 0 ? a * coarse_grad(i, j) : 0.0;
  }
  out.input_gradient = detector.input_gradient_from_features(image, seed);
  return out;
}

DirectionFractions opposite_direction_fraction(const Tensor& objectness_gradient, const Tensor& gradcam_gradient,
                                               const PixelMask& mask) {
  if (!objectness_gradient.same_shape(gradcam_gradient)) throw DimensionError("gradient fields differ in shape");
  if (!mask.same_shape(objectness_gradient.height(), objectness_gradient.width())) {
    throw DimensionError("mask shape does not match gradient fields");
  }
  long masked = 0, masked_opp = 0, unmasked = 0, unmasked_opp = 0;
  for (int r = 0; r < mask.rows(); ++r)
    for (int c = 0; c < mask.cols(); ++c) {
      bool opposite = false;
      for (int ch = 0; ch < objectness_gradient.channels() && !opposite; ++ch)
        opposite = objectness_gradient(ch, r, c) * gradcam_gradient(ch, r, c) < 0.0;
      if (mask(r, c)) {
        ++masked;
        masked_opp += opposite;
      } else {
        ++unmasked;
        unmasked_opp += opposite;
      }
    }
  return {masked ? static_cast<double>(masked_opp) / masked : 0.0,
          unmasked ? static_cast<double>(unmasked_opp) / unmasked : 0.0};
}

DirectionFractions opposite_direction_fraction(const Detector& detector, const RasterImage& image,
                                               const PixelMask& patch_mask, int class_id) {
  const Tensor x = to_tensor(image);
  const Tensor obj = detector.gradients_for(x, detector.objectness_target()).input_gradient;
  const PixelMask everything(image.height(), image.width(), 1);
  const Tensor gc = gradcam_region_gradient(detector, x, class_id, everything).input_gradient;
  return opposite_direction_fraction(obj, gc, patch_mask);
}

}  // namespace patchguard
