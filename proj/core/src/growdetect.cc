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

#include "patchguard/growdetect.h"

#include <algorithm>
#include <set>

namespace patchguard {

namespace {

struct Observation {
  double prob = 0.0;
  int count = 0;
  std::string label;
  std::vector<std::string> classes;
};

bool overlaps(const BoxF& a, const BoxF& b) {
  return std::min(a.x1, b.x1) > std::max(a.x0, b.x0) && std::min(a.y1, b.y1) > std::max(a.y0, b.y0);
}

Observation observe(const Detector& detector, const RasterImage& image, const BlockGrid& grid,
                    const RegionRect& region, const RegionRect& seed) {
  const std::vector<Detection> dets = detector.detect_region(image, to_pixel_rect(grid, region));
  const int target = detector.target_class_id();
  const BoxF seed_box = to_box(to_pixel_rect(grid, seed));
  Observation obs;
  obs.prob = max_class_score(dets, target);
  std::set<std::string> names;
  double best_overlap = -1.0;
  for (const Detection& d : dets) {
    names.insert(d.class_name);
    if (d.class_id == target) ++obs.count;
    if (overlaps(d.bbox, seed_box) && d.score > best_overlap) {
      best_overlap = d.score;
      obs.label = d.class_name;
    }
  }
  obs.classes.assign(names.begin(), names.end());
  return obs;
}

bool is_detected(GrowMode mode, const GrowthStep& s, double conf) {
  switch (mode) {
    case GrowMode::kSingleSeed:
      return s.prob > conf;
    case GrowMode::kMultiSeed:
      return s.person_count > 0;
    case GrowMode::kClassCheck:
      return !s.label.empty();
  }
  return false;
}

Inconsistency transition(GrowMode mode, const GrowthStep& prev, const GrowthStep& cur, double conf) {
  switch (mode) {
    case GrowMode::kSingleSeed:
      return prev.prob > conf && cur.prob <= conf ? Inconsistency::kVanish : Inconsistency::kNone;
    case GrowMode::kMultiSeed:
      return cur.person_count < prev.person_count ? Inconsistency::kCountDrop : Inconsistency::kNone;
    case GrowMode::kClassCheck:
      if (prev.label.empty() || cur.label == prev.label) return Inconsistency::kNone;
      return cur.label.empty() ? Inconsistency::kVanish : Inconsistency::kClassFlip;
  }
  return Inconsistency::kNone;
}

double resolve_conf(const Detector& detector, const GrowConfig& config) {
  return config.conf_threshold.value_or(detector.config().conf_threshold);
}

GrowthTrace grow(const Detector& detector, const RasterImage& image, const BlockGrid& grid, const RegionRect& seed,
                 GrowMode mode, double theta, double conf) {
  GrowthTrace trace;
  trace.mode = mode;
  trace.grid_size = grid.size();
  trace.conf_threshold = conf;
  trace.seed = seed;

  auto record = [&](GrowthStep step) {
    const Observation obs = observe(detector, image, grid, step.region, seed);
    ++trace.detector_calls;
    step.prob = obs.prob;
    step.person_count = obs.count;
    step.label = obs.label;
    step.detected_classes = obs.classes;
    step.detected = is_detected(mode, step, conf);
    trace.steps.push_back(std::move(step));
  };

  try {
    GrowthStep first;
    first.region = seed;
    first.merged_lines = 1;
    record(std::move(first));
    RegionRect region = seed;
    while (!region.is_full(grid.size())) {
      ScoreMode score_mode = trace.steps.back().detected ? ScoreMode::kEntropy : ScoreMode::kProbability;
      const Direction d = choose_direction(grid, region, score_mode);
      const Expansion ex = expand(grid, region, d, theta, score_mode);
      region = ex.region;
      GrowthStep step;
      step.region = region;
      step.direction = d;
      step.mode = score_mode;
      step.merged_lines = ex.merged_lines;
      step.gain = ex.gain;
      record(std::move(step));
      const Inconsistency inc = transition(mode, trace.steps[trace.steps.size() - 2], trace.steps.back(), conf);
      if (inc != Inconsistency::kNone) {
        trace.verdict = Verdict::kAdversarial;
        trace.inconsistency = inc;
        break;
      }
    }
  } catch (const std::exception& e) {
    trace.aborted = true;
    trace.error = e.what();
  }
  for (auto it = trace.steps.rbegin(); it != trace.steps.rend(); ++it)
    if (it->detected) {
      trace.last_detected_region = it->region;
      break;
    }
  return trace;
}

}  // namespace

const char* to_string(Direction d) {
  static constexpr const char* kNames[] = {"up", "down", "left", "right"};
  return kNames[static_cast<int>(d)];
}

const char* to_string(ScoreMode m) { return m == ScoreMode::kProbability ? "probability" : "entropy"; }

const char* to_string(Verdict v) { return v == Verdict::kBenign ? "benign" : "adversarial"; }

const char* to_string(Inconsistency i) {
  switch (i) {
    case Inconsistency::kNone:
      return "none";
    case Inconsistency::kVanish:
      return "vanish";
    case Inconsistency::kCountDrop:
      return "count-drop";
    case Inconsistency::kClassFlip:
      return "class-flip";
  }
  return "none";
}

const char* to_string(GrowMode m) {
  switch (m) {
    case GrowMode::kSingleSeed:
      return "single-seed";
    case GrowMode::kMultiSeed:
      return "multi-seed";
    case GrowMode::kClassCheck:
      return "class-check";
  }
  return "single-seed";
}

void validate(const GrowConfig& config) {
  if (!(config.gain_threshold > 0 && config.gain_threshold <= 1)) {
    throw ParameterError("gain threshold must lie in (0, 1]");
  }
  if (config.conf_threshold && !(*config.conf_threshold > 0 && *config.conf_threshold < 1)) {
    throw ParameterError("confidence threshold must lie in (0, 1)");
  }
  if (config.max_seeds < 1) throw ParameterError("max seeds must be positive");
}

BlockGrid score_blocks(const Detector& detector, const RasterImage& image) {
  const int s = detector.config().grid_size;
  BlockGrid grid = partition_blocks(image, s);
  const GridScores scores = detector.person_probability_grid(image);
  if (!scores.person_prob.same_shape(s, s)) throw DimensionError("detector grid does not match the block grid");
  for (int r = 0; r < s; ++r)
    for (int c = 0; c < s; ++c) {
      Block& b = grid.at(r, c);
      b.person_prob = scores.person_prob(r, c);
      b.entropy = two_d_entropy_rgb(crop(image, b.rect));
    }
  return grid;
}

RegionRect seed_select(const BlockGrid& grid) {
  int best_r = 0;
  int best_c = 0;
  for (int r = 0; r < grid.size(); ++r)
    for (int c = 0; c < grid.size(); ++c)
      if (grid.at(r, c).person_prob > grid.at(best_r, best_c).person_prob) {
        best_r = r;
        best_c = c;
      }
  return RegionRect::single(best_r, best_c);
}

std::vector<RegionRect> local_maximum_seeds(const BlockGrid& grid, double floor, int max_seeds) {
  const int s = grid.size();
  std::vector<RegionRect> seeds;
  for (int r = 0; r < s; ++r)
    for (int c = 0; c < s; ++c) {
      const double p = grid.at(r, c).person_prob;
      if (!(p > floor)) continue;
      bool peak = true;
      for (int dr = -1; dr <= 1 && peak; ++dr)
        for (int dc = -1; dc <= 1; ++dc) {
          const int rr = r + dr;
          const int cc = c + dc;
          if ((dr || dc) && rr >= 0 && rr < s && cc >= 0 && cc < s && grid.at(rr, cc).person_prob > p) {
            peak = false;
            break;
          }
        }
      if (peak) seeds.push_back(RegionRect::single(r, c));
    }
  std::stable_sort(seeds.begin(), seeds.end(), [&](const RegionRect& a, const RegionRect& b) {
    return grid.at(a.row_start, a.col_start).person_prob > grid.at(b.row_start, b.col_start).person_prob;
  });
  if (static_cast<int>(seeds.size()) > max_seeds) seeds.resize(static_cast<size_t>(max_seeds));
  return seeds;
}

int slab_lines(int grid_size, const RegionRect& region, Direction d) {
  switch (d) {
    case Direction::kUp:
      return region.row_start;
    case Direction::kDown:
      return grid_size - 1 - region.row_end;
    case Direction::kLeft:
      return region.col_start;
    case Direction::kRight:
      return grid_size - 1 - region.col_end;
  }
  return 0;
}

double line_score(const BlockGrid& grid, const RegionRect& region, Direction d, int index, ScoreMode mode) {
  auto value = [&](int r, int c) {
    const Block& b = grid.at(r, c);
    return mode == ScoreMode::kProbability ? b.person_prob : b.entropy;
  };
  double sum = 0.0;
  switch (d) {
    case Direction::kUp:
    case Direction::kDown: {
      const int row = d == Direction::kUp ? region.row_start - 1 - index : region.row_end + 1 + index;
      for (int c = region.col_start; c <= region.col_end; ++c) sum += value(row, c);
      break;
    }
    case Direction::kLeft:
    case Direction::kRight: {
      const int col = d == Direction::kLeft ? region.col_start - 1 - index : region.col_end + 1 + index;
      for (int r = region.row_start; r <= region.row_end; ++r) sum += value(r, col);
      break;
    }
  }
  return sum;
}

std::array<double, 4> direction_scores(const BlockGrid& grid, const RegionRect& region, ScoreMode mode) {
  if (!region.valid(grid.size())) throw DimensionError("region outside the block grid");
  std::array<double, 4> out{};
  for (int k = 0; k < 4; ++k) {
    const auto d = static_cast<Direction>(k);
    const int n = slab_lines(grid.size(), region, d);
    for (int i = 0; i < n; ++i) out[static_cast<size_t>(k)] += line_score(grid, region, d, i, mode);
  }
  return out;
}

Direction choose_direction(const BlockGrid& grid, const RegionRect& region, ScoreMode& mode) {
  auto argmax = [](const std::array<double, 4>& v) {
    int best = 0;
    for (int k = 1; k < 4; ++k)
      if (v[static_cast<size_t>(k)] > v[static_cast<size_t>(best)]) best = k;
    return best;
  };
  auto all_zero = [](const std::array<double, 4>& v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return !(x > 0); });
  };
  std::array<double, 4> scores = direction_scores(grid, region, mode);
  if (all_zero(scores) && mode != ScoreMode::kEntropy) {
    scores = direction_scores(grid, region, ScoreMode::kEntropy);
    if (!all_zero(scores)) mode = ScoreMode::kEntropy;
  }
  if (!all_zero(scores)) return static_cast<Direction>(argmax(scores));
  std::array<double, 4> sizes{};
  for (int k = 0; k < 4; ++k) {
    const auto d = static_cast<Direction>(k);
    const int span = k < 2 ? region.cols() : region.rows();
    sizes[static_cast<size_t>(k)] = static_cast<double>(slab_lines(grid.size(), region, d)) * span;
  }
  return static_cast<Direction>(argmax(sizes));
}

Expansion expand(const BlockGrid& grid, const RegionRect& region, Direction d, double theta, ScoreMode mode) {
  const int lines = slab_lines(grid.size(), region, d);
  if (lines < 1) throw ParameterError(std::string("no blocks left in direction ") + to_string(d));
  Expansion ex;
  for (int i = 0; i < lines; ++i) ex.slab_score += line_score(grid, region, d, i, mode);
  double gained = 0.0;
  if (!(ex.slab_score > 0)) {
    ex.merged_lines = 1;
  } else {
    while (ex.merged_lines < lines) {
      gained += line_score(grid, region, d, ex.merged_lines, mode);
      ++ex.merged_lines;
      ex.gain = gained / ex.slab_score;
      if (ex.gain > theta) break;
    }
  }
  ex.exhausted = ex.merged_lines == lines;
  ex.region = region;
  switch (d) {
    case Direction::kUp:
      ex.region.row_start -= ex.merged_lines;
      break;
    case Direction::kDown:
      ex.region.row_end += ex.merged_lines;
      break;
    case Direction::kLeft:
      ex.region.col_start -= ex.merged_lines;
      break;
    case Direction::kRight:
      ex.region.col_end += ex.merged_lines;
      break;
  }
  return ex;
}

GrowthTrace grow_and_check(const Detector& detector, const RasterImage& image, const GrowConfig& config) {
  validate(config);
  const BlockGrid grid = score_blocks(detector, image);
  return grow(detector, image, grid, seed_select(grid), GrowMode::kSingleSeed, config.gain_threshold,
              resolve_conf(detector, config));
}

GrowthTrace multi_seed_check(const Detector& detector, const RasterImage& image, const GrowConfig& config) {
  validate(config);
  const double conf = resolve_conf(detector, config);
  const BlockGrid grid = score_blocks(detector, image);
  std::vector<RegionRect> seeds = local_maximum_seeds(grid, 0.5 * conf, config.max_seeds);
  if (seeds.empty()) seeds.push_back(seed_select(grid));
  std::optional<GrowthTrace> first;
  long calls = 0;
  int examined = 0;
  for (const RegionRect& seed : seeds) {
    GrowthTrace t = grow(detector, image, grid, seed, GrowMode::kMultiSeed, config.gain_threshold, conf);
    calls += t.detector_calls;
    ++examined;
    const bool stop = t.verdict == Verdict::kAdversarial || t.aborted;
    if (!first || stop) first = std::move(t);
    if (stop) break;
  }
  first->detector_calls = calls;
  first->seeds_examined = examined;
  return *first;
}

GrowthTrace class_consistency_check(const Detector& detector, const RasterImage& image, const GrowConfig& config) {
  validate(config);
  const BlockGrid grid = score_blocks(detector, image);
  return grow(detector, image, grid, seed_select(grid), GrowMode::kClassCheck, config.gain_threshold,
              resolve_conf(detector, config));
}

GrowthTrace run_growdetect(const Detector& detector, const RasterImage& image, const GrowConfig& config) {
  if (config.class_check) return class_consistency_check(detector, image, config);
  if (config.max_seeds > 1) return multi_seed_check(detector, image, config);
  return grow_and_check(detector, image, config);
}

ReplayResult replay_verdict(const GrowthTrace& trace) {
  ReplayResult r;
  for (size_t k = 1; k < trace.steps.size(); ++k) {
    const Inconsistency inc = transition(trace.mode, trace.steps[k - 1], trace.steps[k], trace.conf_threshold);
    if (inc != Inconsistency::kNone) {
      r.verdict = Verdict::kAdversarial;
      r.inconsistency = inc;
      r.flagged_step = static_cast<int>(k);
      break;
    }
  }
  return r;
}

}  // namespace patchguard
