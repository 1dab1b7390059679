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

#ifndef PATCHGUARD_TESTS_FIXTURES_H_
#define PATCHGUARD_TESTS_FIXTURES_H_

#include <cstdint>
#include <memory>
#include <random>
#include <vector>

#include "patchguard/darknet.h"
#include "patchguard/grid_detector.h"
#include "patchguard/scripted_detector.h"

namespace patchguard::testing {

RasterImage random_image(int height, int width, std::uint64_t seed, int lo = 0, int hi = 255);
Plane random_plane(int height, int width, std::uint64_t seed, int levels = 256);
Tensor random_tensor(int channels, int height, int width, std::uint64_t seed, double lo = 0.0, double hi = 1.0);
ScoreMap random_scores(int height, int width, std::uint64_t seed, int distinct_values = 0);

/// Three convolutions (3x3, 3x3 stride 2, 1x1 head) on a 3 x 12 x 12 input
/// with weights pinned by a closed-form pattern. Two classes, one anchor;
/// the middle convolution is the Grad-CAM layer.
DarknetModel toy_model();
std::unique_ptr<GridDetector> toy_detector(DetectorConfig config = {});

/// Scripted block layouts for the region-growing state machine.
struct Layout {
  int grid = 0;
  int block = 0;  // block side in pixels
  RegionRect person;
  RegionRect patch;  // empty rectangle (row_start > row_end) when benign
  bool adversarial = false;
};

/// Person rectangle plus a single patch block somewhere else; the person is
/// seen by any region touching it unless the region also holds the patch.
Layout random_vanish_layout(std::mt19937_64& rng);
/// Person (or nobody) whose score only grows with coverage.
Layout random_monotone_layout(std::mt19937_64& rng);

/// Scripted detector for a layout; cell probabilities peak inside the person.
std::unique_ptr<ScriptedDetector> layout_detector(const Layout& layout, std::mt19937_64& rng);

bool intersects(const RegionRect& a, const RegionRect& b);

}  // namespace patchguard::testing

#endif  // PATCHGUARD_TESTS_FIXTURES_H_
