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

#ifndef PATCHGUARD_GRID_DETECTOR_H_
#define PATCHGUARD_GRID_DETECTOR_H_

#include <filesystem>
#include <memory>
#include <optional>

#include "patchguard/darknet.h"
#include "patchguard/detector.h"

namespace patchguard {

/// YOLOv2-style single-shot detector on top of a darknet network: sigmoid
/// objectness, softmax class probabilities, anchor boxes on an S x S grid.
/// Differentiable with respect to its input pixels.
class GridDetector final : public Detector {
 public:
  GridDetector(DarknetModel model, DetectorConfig config, std::vector<std::string> class_names);

  std::vector<Detection> detect(const RasterImage& image) const override;
  GridScores person_probability_grid(const RasterImage& image) const override;

  bool differentiable() const override { return true; }
  GradientBundle gradients_for(const Tensor& image, const TargetScalar& target) const override;
  double target_value(const Tensor& image, const TargetScalar& target) const override;
  Tensor input_gradient_from_features(const Tensor& image, const Tensor& feature_seed) const override;

  const Network& network() const { return model_.network; }
  const RegionSpec& region() const { return model_.region; }
  int feature_layer() const { return model_.feature_layer; }

  /// Decoded head output for a network-resolution input tensor.
  GridScores grid_scores(const Tensor& network_input) const;

 private:
  struct Pass {
    Tensor input;  // network-resolution input
    ForwardTrace trace;
  };

  Tensor prepare(const Tensor& image) const;
  const Pass& run(const Tensor& network_input) const;
  GridScores decode(const Tensor& head) const;
  std::vector<Detection> boxes(const Tensor& head, int image_height, int image_width) const;
  double target_and_seed(const Tensor& head, const TargetScalar& target, Tensor* seed) const;

  DarknetModel model_;
  // Last forward pass, reused when the same input is queried again.
  mutable std::optional<Pass> cache_;
};

/// Builds a GridDetector from a darknet cfg. `weights` may be a .weights
/// path or "random:<seed>" for a seeded random initialisation. The network
/// input size comes from the cfg unless `input_size` is given.
std::unique_ptr<GridDetector> load_grid_detector(const std::filesystem::path& cfg, const std::string& weights,
                                                 DetectorConfig config, std::vector<std::string> class_names,
                                                 std::optional<int> input_size = std::nullopt);

std::vector<std::string> read_class_names(const std::filesystem::path& path);

}  // namespace patchguard

#endif  // PATCHGUARD_GRID_DETECTOR_H_
