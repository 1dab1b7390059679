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

#ifndef PATCHGUARD_SCRIPTED_DETECTOR_H_
#define PATCHGUARD_SCRIPTED_DETECTOR_H_

#include <functional>

#include "patchguard/detector.h"
#include "patchguard/region.h"

namespace patchguard {

/// Block-level mock backend. Each query is mapped to the block rectangle it
/// covers and answered by a user-supplied script, so region-growing behaviour
/// can be tested without a neural network.
class ScriptedDetector final : public Detector {
 public:
  using Script = std::function<std::vector<Detection>(const RegionRect&)>;

  /// `cell_probs` is the S x S per-cell target probability grid.
  ScriptedDetector(int image_height, int image_width, Grid<double> cell_probs, Script script,
                   std::vector<std::string> class_names = {"person", "dog"}, DetectorConfig config = {});

  std::vector<Detection> detect(const RasterImage& image) const override;
  GridScores person_probability_grid(const RasterImage& image) const override;
  std::vector<Detection> detect_region(const RasterImage& image, const PixelRect& region) const override;

  /// Number of detect/detect_region/region_person_score queries answered.
  long calls() const { return calls_; }
  void reset_calls() { calls_ = 0; }

  const BlockGrid& blocks() const { return blocks_; }

  /// Region covered by a pixel rectangle; throws DimensionError when the
  /// rectangle does not align with block boundaries.
  RegionRect to_region(const PixelRect& rect) const;

  /// Convenience: a detection of `class_id` with the pixel extent of `region`.
  Detection make_detection(const RegionRect& region, int class_id, double score) const;

 private:
  std::vector<Detection> answer(const RegionRect& region) const;

  BlockGrid blocks_;
  Grid<double> cell_probs_;
  Script script_;
  mutable long calls_ = 0;
};

}  // namespace patchguard

#endif  // PATCHGUARD_SCRIPTED_DETECTOR_H_
