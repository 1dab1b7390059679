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

#include "patchguard/scripted_detector.h"

#include <algorithm>

namespace patchguard {

namespace {

DetectorConfig with_grid(DetectorConfig config, int size) {
  config.grid_size = size;
  return config;
}

}  // namespace

ScriptedDetector::ScriptedDetector(int image_height, int image_width, Grid<double> cell_probs, Script script,
                                   std::vector<std::string> class_names, DetectorConfig config)
    : Detector(with_grid(std::move(config), cell_probs.rows()), std::move(class_names)),
      blocks_(partition_blocks(RasterImage(image_height, image_width), cell_probs.rows())),
      cell_probs_(std::move(cell_probs)),
      script_(std::move(script)) {
  if (cell_probs_.rows() != cell_probs_.cols()) throw DimensionError("ScriptedDetector: grid must be square");
  if (!script_) throw ParameterError("ScriptedDetector: empty script");
}

RegionRect ScriptedDetector::to_region(const PixelRect& rect) const {
  const int s = blocks_.size();
  RegionRect r{-1, -1, -1, -1};
  for (int i = 0; i < s; ++i) {
    const PixelRect& b = blocks_.at(i, 0).rect;
    if (b.row == rect.row) r.row_start = i;
    if (b.bottom() == rect.bottom()) r.row_end = i;
    const PixelRect& c = blocks_.at(0, i).rect;
    if (c.col == rect.col) r.col_start = i;
    if (c.right() == rect.right()) r.col_end = i;
  }
  if (!r.valid(s)) throw DimensionError("ScriptedDetector: rectangle is not block aligned");
  return r;
}

Detection ScriptedDetector::make_detection(const RegionRect& region, int class_id, double score) const {
  Detection d;
  d.bbox = to_box(to_pixel_rect(blocks_, region));
  d.class_id = class_id;
  d.class_name = class_names().at(static_cast<size_t>(class_id));
  d.objectness = score;
  d.class_prob = 1.0;
  d.score = score;
  return d;
}

std::vector<Detection> ScriptedDetector::answer(const RegionRect& region) const {
  ++calls_;
  std::vector<Detection> dets = script_(region);
  dets.erase(std::remove_if(dets.begin(), dets.end(),
                            [&](const Detection& d) { return d.score <= config().conf_threshold; }),
             dets.end());
  return dets;
}

std::vector<Detection> ScriptedDetector::detect(const RasterImage&) const {
  return answer(RegionRect::full(blocks_.size()));
}

std::vector<Detection> ScriptedDetector::detect_region(const RasterImage&, const PixelRect& region) const {
  if (region.height < 1 || region.width < 1) throw ParameterError("region has zero area");
  return answer(to_region(region));
}

GridScores ScriptedDetector::person_probability_grid(const RasterImage&) const {
  GridScores g;
  g.size = cell_probs_.rows();
  g.anchors = 1;
  g.classes = static_cast<int>(class_names().size());
  g.objectness.assign(cell_probs_.values().begin(), cell_probs_.values().end());
  g.class_probs.assign(static_cast<size_t>(g.size) * g.size * g.classes, 0.0);
  for (size_t i = 0; i < static_cast<size_t>(g.size) * g.size; ++i)
    g.class_probs[i * g.classes + static_cast<size_t>(target_class_id())] = 1.0;
  g.person_prob = cell_probs_;
  return g;
}

}  // namespace patchguard
