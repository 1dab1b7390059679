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

#ifndef PATCHGUARD_GRADCAM_H_
#define PATCHGUARD_GRADCAM_H_

#include <span>
#include <vector>

#include "patchguard/detector.h"

namespace patchguard {

struct GradCamResult {
  std::vector<double> alpha;  // per feature map importance weights
  Grid<double> coarse;        // ReLU(sum_k alpha_k F^k), feature resolution
  Grid<double> pre_relu;      // sum_k alpha_k F^k before the ReLU
  ScoreMap pixel_scores;      // coarse map upsampled to the image
};

/// Global average pool of each feature-map gradient.
std::vector<double> neuron_weights(const GradientBundle& bundle);

/// ReLU of the alpha-weighted feature-map sum.
Grid<double> coarse_map(const GradientBundle& bundle, std::span<const double> weights);

/// Weights -> weighted sum -> ReLU -> corner-aligned bilinear upsample to height x width.
GradCamResult gradcam_from_bundle(const GradientBundle& bundle, int height, int width);

/// Full pipeline on a detector for the named class.
GradCamResult pixel_scores(const Detector& detector, const RasterImage& image, std::string_view target_class);
GradCamResult pixel_scores(const Detector& detector, const Tensor& image, int class_id);

/// Blue (low) to red (high) ramp through cyan, green and yellow; t in [0, 1].
Rgb ramp_color(double t);

/// Per-image min-max normalised scores, colour-ramped and blended 50/50 over `image`.
/// A constant score map renders as the mid colour.
RasterImage heatmap_render(const GradCamResult& result, const RasterImage& image);

/// Sum of Grad-CAM pixel scores inside `region` and its gradient with respect
/// to the input pixels. The importance weights alpha are held constant.
struct RegionScoreGradient {
  double score_sum = 0.0;
  Tensor input_gradient;
  GradCamResult cam;
};
RegionScoreGradient gradcam_region_gradient(const Detector& detector, const Tensor& image, int class_id,
                                            const PixelMask& region);

struct DirectionFractions {
  double masked = 0.0;    // fraction of masked pixels with opposite gradient directions
  double unmasked = 0.0;  // same, over the remaining pixels
};

/// A pixel is "opposite" when the two gradients have strictly opposite signs
/// in at least one channel. Zero gradients agree with everything.
DirectionFractions opposite_direction_fraction(const Tensor& objectness_gradient, const Tensor& gradcam_gradient,
                                               const PixelMask& mask);

/// Compares the input gradient of the maximum object confidence with that of the
/// image-wide Grad-CAM score sum for `class_id`.
DirectionFractions opposite_direction_fraction(const Detector& detector, const RasterImage& image,
                                               const PixelMask& patch_mask, int class_id);

}  // namespace patchguard

#endif  // PATCHGUARD_GRADCAM_H_
