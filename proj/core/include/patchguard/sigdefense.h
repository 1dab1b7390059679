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

#ifndef PATCHGUARD_SIGDEFENSE_H_
#define PATCHGUARD_SIGDEFENSE_H_

#include <string>
#include <vector>

#include "patchguard/detector.h"
#include "patchguard/gradcam.h"

namespace patchguard {

struct FilterConfig {
  double percent = 15.0;  // share of pixels to gray out, 0..100
  Rgb fill_color = kFilterGray;
  std::string target_class = "person";
};

void validate(const FilterConfig& config);

struct DefenseVerdict {
  std::vector<Detection> detections_before;
  std::vector<Detection> detections_after;
  RasterImage filtered_image;
  bool recovered = false;
  double elapsed_ms = 0.0;  // scoring + filtering only
};

/// Exactly round(percent / 100 * H * W) highest-scoring pixels; ties at the
/// cutoff are broken in row-major order.
PixelMask select_top_pixels(const ScoreMap& scores, double percent);

/// Pixel budget used by select_top_pixels.
size_t pixel_budget(int height, int width, double percent);

/// Grad-CAM score, select the top pixels, gray them out.
RasterImage filter(const Detector& detector, const RasterImage& image, const FilterConfig& config);

/// Detects on the input and on the filtered input and compares the two.
DefenseVerdict defend(const Detector& detector, const RasterImage& image, const FilterConfig& config);

/// True when `after` holds a detection of `class_id` with no IoU >= 0.5
/// counterpart of the same class in `before`.
bool recovered_object(const std::vector<Detection>& before, const std::vector<Detection>& after, int class_id);

}  // namespace patchguard

#endif  // PATCHGUARD_SIGDEFENSE_H_
