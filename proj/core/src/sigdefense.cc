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

#include "patchguard/sigdefense.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "patchguard/imaging.h"

namespace patchguard {

void validate(const FilterConfig& config) {
  if (!(config.percent >= 0.0 && config.percent <= 100.0)) throw ParameterError("filter percent must lie in [0, 100]");
}

size_t pixel_budget(int height, int width, double percent) {
  if (!(percent >= 0.0 && percent <= 100.0)) throw ParameterError("filter percent must lie in [0, 100]");
  const double total = static_cast<double>(height) * width;
  return static_cast<size_t>(std::min(total, std::floor(percent / 100.0 * total + 0.5)));
}

PixelMask select_top_pixels(const ScoreMap& scores, double percent) {
  const size_t k = pixel_budget(scores.rows(), scores.cols(), percent);
  PixelMask mask(scores.rows(), scores.cols(), 0);
  if (k == 0) return mask;
  const auto values = scores.values();
  std::vector<size_t> order(values.size());
  std::iota(order.begin(), order.end(), size_t{0});
  auto before = [&](size_t a, size_t b) { return values[a] > values[b] || (values[a] == values[b] && a < b); };
  if (k < order.size()) std::nth_element(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k - 1), order.end(), before);
  auto m = mask.values();
  for (size_t i = 0; i < k; ++i) m[order[i]] = 1;
  return mask;
}

RasterImage filter(const Detector& detector, const RasterImage& image, const FilterConfig& config) {
  validate(config);
  if (config.percent == 0.0) return image;
  const GradCamResult cam = pixel_scores(detector, image, config.target_class);
  return fill_pixels(image, select_top_pixels(cam.pixel_scores, config.percent), config.fill_color);
}

bool recovered_object(const std::vector<Detection>& before, const std::vector<Detection>& after, int class_id) {
  for (const Detection& a : after) {
    if (a.class_id != class_id) continue;
    const bool matched = std::any_of(before.begin(), before.end(), [&](const Detection& b) {
      return b.class_id == class_id && iou(a.bbox, b.bbox) >= 0.5;
    });
    if (!matched) return true;
  }
  return false;
}

DefenseVerdict defend(const Detector& detector, const RasterImage& image, const FilterConfig& config) {
  validate(config);
  DefenseVerdict v;
  v.detections_before = detector.detect(image);
  const auto start = std::chrono::steady_clock::now();
  v.filtered_image = filter(detector, image, config);
  v.elapsed_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  v.detections_after = detector.detect(v.filtered_image);
  v.recovered = recovered_object(v.detections_before, v.detections_after, detector.class_index(config.target_class));
  return v;
}

}  // namespace patchguard
