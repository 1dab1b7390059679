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

#ifndef PATCHGUARD_DETECTOR_H_
#define PATCHGUARD_DETECTOR_H_

#include <string>
#include <string_view>
#include <vector>

#include "patchguard/imaging.h"
#include "patchguard/tensor.h"

namespace patchguard {

/// Box in image pixel coordinates, [x0, x1) x [y0, y1).
struct BoxF {
  double x0 = 0.0;
  double y0 = 0.0;
  double x1 = 0.0;
  double y1 = 0.0;

  double width() const { return x1 - x0; }
  double height() const { return y1 - y0; }
  double area() const { return width() > 0 && height() > 0 ? width() * height() : 0.0; }
  bool operator==(const BoxF&) const = default;
};

double iou(const BoxF& a, const BoxF& b);
BoxF clip_box(const BoxF& box, int height, int width);
BoxF to_box(const PixelRect& rect);
/// Smallest pixel rectangle enclosing `box`, clipped to the image.
PixelRect to_pixel_rect(const BoxF& box, int height, int width);

struct Detection {
  BoxF bbox;
  int class_id = 0;
  std::string class_name;
  double objectness = 0.0;
  double class_prob = 0.0;
  double score = 0.0;  // objectness * class_prob
};

/// Raw per-cell outputs of a grid detector. Class probabilities are per
/// anchor (YOLOv2 layout): index ((row * S + col) * B + b) * P + class.
struct GridScores {
  int size = 0;
  int anchors = 0;
  int classes = 0;
  std::vector<double> objectness;   // ((row * S + col) * B + b)
  std::vector<double> class_probs;
  /// max over anchors of objectness * P(target class)
  Grid<double> person_prob;
};

enum class TargetKind {
  kClassProbability,  // objectness * P(class), reduced over cells and anchors
  kMaxObjectness,     // max over cells and anchors of objectness
};

enum class Reduction { kMax, kSum };

struct TargetScalar {
  TargetKind kind = TargetKind::kClassProbability;
  int class_id = 0;
  Reduction reduction = Reduction::kMax;
};

/// Everything Grad-CAM and the patch optimiser need from one forward/backward pass.
struct GradientBundle {
  Tensor features;           // F^k, K x Hf x Wf
  Tensor feature_gradients;  // d target / d F^k, same shape
  Tensor input_gradient;     // d target / d pixel, 3 x H x W at the caller's resolution
  double target_value = 0.0;
};

struct DetectorConfig {
  int input_size = 608;
  double conf_threshold = 0.5;
  double nms_threshold = 0.45;
  int grid_size = 19;
  std::string target_class = "person";
  Reduction gradcam_reduction = Reduction::kMax;
};

void validate(const DetectorConfig& config);

/// Detection backend contract. Implementations are not thread-safe: use one
/// instance per worker.
class Detector {
 public:
  Detector(DetectorConfig config, std::vector<std::string> class_names);
  virtual ~Detector() = default;

  Detector(const Detector&) = delete;
  Detector& operator=(const Detector&) = delete;

  const DetectorConfig& config() const { return config_; }
  const std::vector<std::string>& class_names() const { return class_names_; }
  /// Case-insensitive lookup; throws ParameterError for unknown names.
  int class_index(std::string_view name) const;
  int target_class_id() const { return target_class_id_; }

  /// Detections with score > conf_threshold after per-class NMS.
  virtual std::vector<Detection> detect(const RasterImage& image) const = 0;

  /// One forward pass; per-cell target-class probability.
  virtual GridScores person_probability_grid(const RasterImage& image) const = 0;

  /// Detections on a letterboxed crop, mapped back to image coordinates.
  virtual std::vector<Detection> detect_region(const RasterImage& image, const PixelRect& region) const;

  /// Highest target-class score inside `region` (0 when nothing is found).
  virtual double region_person_score(const RasterImage& image, const PixelRect& region) const;

  virtual bool differentiable() const { return false; }

  /// Feature maps, their gradients and the input gradient of `target`.
  virtual GradientBundle gradients_for(const Tensor& image, const TargetScalar& target) const;

  /// Value of `target` without a backward pass.
  virtual double target_value(const Tensor& image, const TargetScalar& target) const;

  /// Backpropagates an arbitrary seed placed on the feature layer down to the input pixels.
  virtual Tensor input_gradient_from_features(const Tensor& image, const Tensor& feature_seed) const;

  TargetScalar gradcam_target(int class_id) const {
    return {TargetKind::kClassProbability, class_id, config_.gradcam_reduction};
  }
  TargetScalar objectness_target() const { return {TargetKind::kMaxObjectness, 0, Reduction::kMax}; }

 private:
  DetectorConfig config_;
  std::vector<std::string> class_names_;
  int target_class_id_ = 0;
};

/// Resizes `crop` into a size x size canvas preserving aspect ratio, padding with gray 128.
struct Letterbox {
  RasterImage canvas;
  double scale = 1.0;
  int offset_row = 0;
  int offset_col = 0;
};
Letterbox letterbox(const RasterImage& crop, int size);

/// Greedy per-class non-maximum suppression, highest score first.
std::vector<Detection> non_max_suppression(std::vector<Detection> detections, double iou_threshold);

double max_class_score(const std::vector<Detection>& detections, int class_id);

}  // namespace patchguard

#endif  // PATCHGUARD_DETECTOR_H_
