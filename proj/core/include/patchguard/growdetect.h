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

#ifndef PATCHGUARD_GROWDETECT_H_
#define PATCHGUARD_GROWDETECT_H_

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "patchguard/detector.h"
#include "patchguard/region.h"

namespace patchguard {

enum class Direction { kUp = 0, kDown = 1, kLeft = 2, kRight = 3 };
enum class ScoreMode { kProbability, kEntropy };
enum class Verdict { kBenign, kAdversarial };
enum class Inconsistency { kNone, kVanish, kCountDrop, kClassFlip };
enum class GrowMode { kSingleSeed, kMultiSeed, kClassCheck };

const char* to_string(Direction d);
const char* to_string(ScoreMode m);
const char* to_string(Verdict v);
const char* to_string(Inconsistency i);
const char* to_string(GrowMode m);

struct GrowthStep {
  RegionRect region;
  std::optional<Direction> direction;  // empty for the seed step
  ScoreMode mode = ScoreMode::kProbability;
  int merged_lines = 0;
  double gain = 0.0;
  double prob = 0.0;  // best target-class score inside the region
  bool detected = false;
  int person_count = 0;
  std::string label;  // class of the detection tracked from the seed (class check)
  std::vector<std::string> detected_classes;
};

struct GrowthTrace {
  GrowMode mode = GrowMode::kSingleSeed;
  int grid_size = 0;
  double conf_threshold = 0.5;
  RegionRect seed;
  std::vector<GrowthStep> steps;
  Verdict verdict = Verdict::kBenign;
  Inconsistency inconsistency = Inconsistency::kNone;
  std::optional<RegionRect> last_detected_region;
  int seeds_examined = 1;
  long detector_calls = 0;  // region re-detections
  bool aborted = false;
  std::string error;

  int expansions() const { return steps.empty() ? 0 : static_cast<int>(steps.size()) - 1; }
};

struct GrowConfig {
  double gain_threshold = 0.05;
  std::optional<double> conf_threshold;  // detector's threshold when unset
  int max_seeds = 1;
  bool class_check = false;
};

void validate(const GrowConfig& config);

/// Partitions the image on the detector grid and fills per-block target
/// probability and 2-D entropy.
BlockGrid score_blocks(const Detector& detector, const RasterImage& image);

/// Row-major first block with the highest target probability.
RegionRect seed_select(const BlockGrid& grid);

/// Local maxima (8-neighbourhood) of the target probability above `floor`,
/// strongest first, at most `max_seeds`.
std::vector<RegionRect> local_maximum_seeds(const BlockGrid& grid, double floor, int max_seeds);

/// Number of block lines between the region and the grid edge in `d`.
int slab_lines(int grid_size, const RegionRect& region, Direction d);

/// Score of the `index`-th line beyond the region in `d` (0 is adjacent),
/// restricted to the region's perpendicular span.
double line_score(const BlockGrid& grid, const RegionRect& region, Direction d, int index, ScoreMode mode);

/// Slab sums for up, down, left, right.
std::array<double, 4> direction_scores(const BlockGrid& grid, const RegionRect& region, ScoreMode mode);

/// Direction to grow in: highest score (ties up, down, left, right). All-zero
/// scores fall back to entropy, then to the largest slab. `mode` is updated
/// to the score table that decided.
Direction choose_direction(const BlockGrid& grid, const RegionRect& region, ScoreMode& mode);

struct Expansion {
  RegionRect region;
  int merged_lines = 0;
  double gain = 0.0;
  double slab_score = 0.0;
  bool exhausted = false;
};

/// Merges lines in `d` until the accumulated share of the slab score is
/// strictly above theta or the slab runs out. A zero slab merges one line.
Expansion expand(const BlockGrid& grid, const RegionRect& region, Direction d, double theta, ScoreMode mode);

GrowthTrace grow_and_check(const Detector& detector, const RasterImage& image, const GrowConfig& config);
GrowthTrace multi_seed_check(const Detector& detector, const RasterImage& image, const GrowConfig& config);
GrowthTrace class_consistency_check(const Detector& detector, const RasterImage& image, const GrowConfig& config);

/// Dispatches on config: class check, then multi-seed when max_seeds > 1.
GrowthTrace run_growdetect(const Detector& detector, const RasterImage& image, const GrowConfig& config);

struct ReplayResult {
  Verdict verdict = Verdict::kBenign;
  Inconsistency inconsistency = Inconsistency::kNone;
  int flagged_step = -1;  // index of the step after the abnormal transition
};

/// Recomputes the verdict from recorded steps alone.
ReplayResult replay_verdict(const GrowthTrace& trace);

}  // namespace patchguard

#endif  // PATCHGUARD_GROWDETECT_H_
