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

#include "patchguard/detector.h"

#include <algorithm>
#include <cctype>
#include <cmath>

namespace patchguard {

namespace {

bool iequals(std::string_view a, std::string_view b) {
  return a.size() == b.size() && std::equal(a.begin(), a.end(), b.begin(), [](char x, char y) {
           return std::tolower(static_cast<unsigned char>(x)) == std::tolower(static_cast<unsigned char>(y));
         });
}

}  // namespace

double iou(const BoxF& a, const BoxF& b) {
  const double ix = std::min(a.x1, b.x1) - std::max(a.x0, b.x0);
  const double iy = std::min(a.y1, b.y1) - std::max(a.y0, b.y0);
  if (ix <= 0 || iy <= 0) return 0.0;
  const double inter = ix * iy;
  const double uni = a.area() + b.area() - inter;
  return uni > 0 ? inter / uni : 0.0;
}

BoxF clip_box(const BoxF& box, int height, int width) {
  return {std::clamp(box.x0, 0.0, static_cast<double>(width)), std::clamp(box.y0, 0.0, static_cast<double>(height)),
          std::clamp(box.x1, 0.0, static_cast<double>(width)), std::clamp(box.y1, 0.0, static_cast<double>(height))};
}

BoxF to_box(const PixelRect& rect) {
  return {static_cast<double>(rect.col), static_cast<double>(rect.row), static_cast<double>(rect.right()),
          static_cast<double>(rect.bottom())};
}

PixelRect to_pixel_rect(const BoxF& box, int height, int width) {
  const BoxF b = clip_box(box, height, width);
  const int c0 = static_cast<int>(std::floor(b.x0));
  const int r0 = static_cast<int>(std::floor(b.y0));
  const int c1 = static_cast<int>(std::ceil(b.x1));
  const int r1 = static_cast<int>(std::ceil(b.y1));
  return {r0, c0, std::max(0, r1 - r0), std::max(0, c1 - c0)};
}

void validate(const DetectorConfig& config) {
  if (!(config.conf_threshold > 0.0 && config.conf_threshold < 1.0)) {
    throw ParameterError("conf_threshold must lie in (0, 1)");
  }
  if (!(config.nms_threshold > 0.0 && config.nms_threshold <= 1.0)) {
    throw ParameterError("nms_threshold must lie in (0, 1]");
  }
  if (config.input_size < 1) throw ParameterError("input_size must be positive");
  if (config.grid_size < 2) throw ParameterError("grid_size must be >= 2");
}

Detector::Detector(DetectorConfig config, std::vector<std::string> class_names)
    : config_(std::move(config)), class_names_(std::move(class_names)) {
  validate(config_);
  if (class_names_.empty()) throw ParameterError("detector needs at least one class name");
  target_class_id_ = class_index(config_.target_class);
}

int Detector::class_index(std::string_view name) const {
  for (size_t i = 0; i < class_names_.size(); ++i)
    if (iequals(class_names_[i], name)) return static_cast<int>(i);
  throw ParameterError("unknown class: " + std::string(name));
}

std::vector<Detection> Detector::detect_region(const RasterImage& image, const PixelRect& region) const {
  if (region.height < 1 || region.width < 1) throw ParameterError("region has zero area");
  const RasterImage piece = crop(image, region);
  const Letterbox lb = letterbox(piece, config_.input_size);
  std::vector<Detection> dets = detect(lb.canvas);
  for (Detection& d : dets) {
    BoxF b{(d.bbox.x0 - lb.offset_col) / lb.scale + region.col, (d.bbox.y0 - lb.offset_row) / lb.scale + region.row,
           (d.bbox.x1 - lb.offset_col) / lb.scale + region.col, (d.bbox.y1 - lb.offset_row) / lb.scale + region.row};
    d.bbox = clip_box(b, image.height(), image.width());
  }
  return dets;
}

double Detector::region_person_score(const RasterImage& image, const PixelRect& region) const {
  return max_class_score(detect_region(image, region), target_class_id_);
}

GradientBundle Detector::gradients_for(const Tensor&, const TargetScalar&) const {
  throw CapabilityError("detector backend is not differentiable");
}

double Detector::target_value(const Tensor&, const TargetScalar&) const {
  throw CapabilityError("detector backend is not differentiable");
}

Tensor Detector::input_gradient_from_features(const Tensor&, const Tensor&) const {
  throw CapabilityError("detector backend is not differentiable");
}

Letterbox letterbox(const RasterImage& piece, int size) {
  Letterbox lb;
  lb.scale = std::min(static_cast<double>(size) / piece.width(), static_cast<double>(size) / piece.height());
  const int w = std::clamp(static_cast<int>(std::lround(piece.width() * lb.scale)), 1, size);
  const int h = std::clamp(static_cast<int>(std::lround(piece.height() * lb.scale)), 1, size);
  lb.offset_col = (size - w) / 2;
  lb.offset_row = (size - h) / 2;
  lb.canvas = RasterImage(size, size, kFilterGray);
  const RasterImage resized = resize_bilinear(piece, h, w);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) lb.canvas.set_pixel(r + lb.offset_row, c + lb.offset_col, resized.pixel(r, c));
  return lb;
}

std::vector<Detection> non_max_suppression(std::vector<Detection> detections, double iou_threshold) {
  std::stable_sort(detections.begin(), detections.end(),
                   [](const Detection& a, const Detection& b) { return a.score > b.score; });
  std::vector<Detection> kept;
  for (Detection& d : detections) {
    const bool suppressed = std::any_of(kept.begin(), kept.end(), [&](const Detection& k) {
      return k.class_id == d.class_id && iou(k.bbox, d.bbox) > iou_threshold;
    });
    if (!suppressed) kept.push_back(std::move(d));
  }
  return kept;
}

double max_class_score(const std::vector<Detection>& detections, int class_id) {
  double best = 0.0;
  for (const Detection& d : detections)
    if (d.class_id == class_id) best = std::max(best, d.score);
  return best;
}

}  // namespace patchguard
