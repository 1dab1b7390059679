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

#include "fixtures.h"

#include <cmath>

namespace patchguard::testing {

RasterImage random_image(int height, int width, std::uint64_t seed, int lo, int hi) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> d(lo, hi);
  RasterImage img(height, width);
  for (auto& b : img.bytes()) b = static_cast<std::uint8_t>(d(rng));
  return img;
}

Plane random_plane(int height, int width, std::uint64_t seed, int levels) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> d(0, levels - 1);
  Plane p(height, width);
  for (auto& v : p.values()) v = static_cast<std::uint8_t>(d(rng) * (255 / std::max(1, levels - 1)));
  return p;
}

Tensor random_tensor(int channels, int height, int width, std::uint64_t seed, double lo, double hi) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> d(lo, hi);
  Tensor t(channels, height, width);
  for (double& v : t.values()) v = d(rng);
  return t;
}

ScoreMap random_scores(int height, int width, std::uint64_t seed, int distinct_values) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> d(0.0, 1.0);
  std::uniform_int_distribution<int> k(0, std::max(0, distinct_values - 1));
  ScoreMap s(height, width);
  for (double& v : s.values()) v = distinct_values > 0 ? k(rng) / static_cast<double>(distinct_values) : d(rng);
  return s;
}

namespace {

ConvParams pinned_conv(int in, int filters, int size, int stride, Activation act, int layer) {
  ConvParams p;
  p.filters = filters;
  p.size = size;
  p.stride = stride;
  p.pad = size / 2;
  p.activation = act;
  const int fan_in = in * size * size;
  const double scale = 1.6 / std::sqrt(static_cast<double>(fan_in));
  p.weights.resize(static_cast<size_t>(filters) * fan_in);
  for (size_t i = 0; i < p.weights.size(); ++i)
    p.weights[i] = static_cast<float>(scale * std::sin(0.37 * static_cast<double>(i) + 1.1 * layer));
  p.biases.resize(static_cast<size_t>(filters));
  for (int f = 0; f < filters; ++f) p.biases[static_cast<size_t>(f)] = static_cast<float>(0.05 * std::cos(0.9 * f + layer));
  return p;
}

}  // namespace

DarknetModel toy_model() {
  DarknetModel m;
  m.network = Network({3, 12, 12});
  m.network.add_conv(pinned_conv(3, 4, 3, 1, Activation::kLeaky, 0));
  m.feature_layer = m.network.add_conv(pinned_conv(4, 6, 3, 2, Activation::kLeaky, 1));
  m.network.add_conv(pinned_conv(6, 7, 1, 1, Activation::kLinear, 2));
  m.region.classes = 2;
  m.region.num = 1;
  m.region.anchors = {1.5, 2.0};
  return m;
}

std::unique_ptr<GridDetector> toy_detector(DetectorConfig config) {
  return std::make_unique<GridDetector>(toy_model(), std::move(config), std::vector<std::string>{"person", "dog"});
}

bool intersects(const RegionRect& a, const RegionRect& b) {
  return a.row_start <= b.row_end && b.row_start <= a.row_end && a.col_start <= b.col_end && b.col_start <= a.col_end;
}

namespace {

RegionRect random_rect(std::mt19937_64& rng, int grid, int max_side) {
  std::uniform_int_distribution<int> side(1, max_side);
  const int h = side(rng);
  const int w = side(rng);
  std::uniform_int_distribution<int> r(0, grid - h);
  std::uniform_int_distribution<int> c(0, grid - w);
  const int r0 = r(rng);
  const int c0 = c(rng);
  return {r0, r0 + h - 1, c0, c0 + w - 1};
}

RegionRect overlap(const RegionRect& a, const RegionRect& b) {
  return {std::max(a.row_start, b.row_start), std::min(a.row_end, b.row_end), std::max(a.col_start, b.col_start),
          std::min(a.col_end, b.col_end)};
}

}  // namespace

Layout random_vanish_layout(std::mt19937_64& rng) {
  Layout l;
  l.grid = std::uniform_int_distribution<int>(5, 19)(rng);
  l.block = std::uniform_int_distribution<int>(3, 6)(rng);
  l.person = random_rect(rng, l.grid, 4);
  std::uniform_int_distribution<int> cell(0, l.grid - 1);
  do {
    const int r = cell(rng);
    const int c = cell(rng);
    l.patch = RegionRect::single(r, c);
  } while (l.person.contains(l.patch));
  l.adversarial = true;
  return l;
}

Layout random_monotone_layout(std::mt19937_64& rng) {
  Layout l;
  l.grid = std::uniform_int_distribution<int>(5, 19)(rng);
  l.block = std::uniform_int_distribution<int>(3, 6)(rng);
  if (std::uniform_int_distribution<int>(0, 4)(rng) == 0) {
    l.person = {1, 0, 1, 0};  // nobody
  } else {
    l.person = random_rect(rng, l.grid, 5);
  }
  l.patch = {1, 0, 1, 0};
  l.adversarial = false;
  return l;
}

std::unique_ptr<ScriptedDetector> layout_detector(const Layout& layout, std::mt19937_64& rng) {
  const bool has_person = layout.person.row_start <= layout.person.row_end;
  Grid<double> probs(layout.grid, layout.grid);
  std::uniform_real_distribution<double> low(0.0, 0.3);
  std::uniform_real_distribution<double> high(0.5, 0.95);
  for (int r = 0; r < layout.grid; ++r)
    for (int c = 0; c < layout.grid; ++c)
      probs(r, c) = has_person && layout.person.contains(r, c) ? high(rng) : low(rng);

  const int size = layout.grid * layout.block;
  auto holder = std::make_shared<const ScriptedDetector*>(nullptr);
  ScriptedDetector::Script script = [layout, has_person, holder](const RegionRect& region) {
    std::vector<Detection> out;
    if (!has_person || !intersects(region, layout.person)) return out;
    const RegionRect seen = overlap(region, layout.person);
    double score = 0.0;
    if (layout.adversarial) {
      if (region.contains(layout.patch)) return out;
      score = 0.9;
    } else {
      const double coverage = static_cast<double>(seen.block_count()) / layout.person.block_count();
      score = 0.3 + 0.65 * coverage;
    }
    out.push_back((*holder)->make_detection(seen, 0, score));
    return out;
  };
  auto det = std::make_unique<ScriptedDetector>(size, size, std::move(probs), std::move(script));
  *holder = det.get();
  return det;
}

}  // namespace patchguard::testing
