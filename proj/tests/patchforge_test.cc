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

#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <fstream>

#include "patchguard/imaging.h"
#include "patchguard/patchforge.h"
#include "support/fixtures.h"
#include "support/oracles.h"

namespace patchguard {
namespace {

using testing::central_difference;
using testing::random_image;
using testing::random_tensor;
using testing::relative_error;
using testing::toy_detector;

const std::filesystem::path kAssets = PATCHGUARD_TEST_ASSET_DIR;

TEST(TotalVariation, MatchesNeighbourOracle) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const RasterImage img = random_image(9 + static_cast<int>(seed), 13, seed);
    EXPECT_NEAR(total_variation(img), testing::tv_oracle(img), 1e-9);
    EXPECT_NEAR(total_variation(to_tensor(img)), testing::tv_oracle(img) / 255.0, 1e-9);
  }
  EXPECT_EQ(total_variation(RasterImage(5, 5, {9, 9, 9})), 0.0);
  // Single step edge: one column of pixels differs by 255 from its right neighbour.
  RasterImage edge(4, 4, {0, 0, 0});
  for (int r = 0; r < 4; ++r) edge.set_pixel(r, 3, {255, 0, 0});
  EXPECT_DOUBLE_EQ(total_variation(edge), 4 * 255.0 / 16);
}

TEST(TotalVariation, GradientMatchesFiniteDifferences) {
  const Tensor x = random_tensor(3, 7, 6, 1);
  Tensor grad;
  total_variation(x, &grad);
  const Tensor fd = central_difference([](const Tensor& t) { return total_variation(t); }, x, 1e-7);
  EXPECT_LT(relative_error(grad, fd), 1e-6);
}

TEST(NonPrintability, DistanceToNearestColour) {
  const std::vector<Rgb> palette = {{0, 0, 0}, {255, 255, 255}};
  EXPECT_DOUBLE_EQ(nonprintability_score(RasterImage(3, 3, {0, 0, 0}), palette), 0.0);
  EXPECT_DOUBLE_EQ(nonprintability_score(RasterImage(3, 3, {255, 0, 0}), palette), 255.0);
  RasterImage half(1, 2, {0, 0, 0});
  half.set_pixel(0, 1, {0, 30, 40});
  EXPECT_DOUBLE_EQ(nonprintability_score(half, palette), 25.0);
  EXPECT_NEAR(nonprintability_score(to_tensor(half), palette), 25.0 / 255.0, 1e-12);
  EXPECT_THROW(nonprintability_score(half, {}), ParameterError);
}

TEST(NonPrintability, GradientMatchesFiniteDifferences) {
  const auto palette = read_palette(kAssets / "printable_palette.txt");
  const Tensor x = random_tensor(3, 5, 5, 2);
  Tensor grad;
  nonprintability_score(x, palette, &grad);
  const Tensor fd =
      central_difference([&](const Tensor& t) { return nonprintability_score(t, palette); }, x, 1e-7);
  EXPECT_LT(relative_error(grad, fd), 1e-6);
}

TEST(Palette, ParsesTriplesAndComments) {
  const auto path = std::filesystem::temp_directory_path() / "patchguard_palette.txt";
  {
    std::ofstream out(path);
    out << "# printable colours\n10,20,30\n\n 40, 50 ,60  # trailing\n";
  }
  const auto p = read_palette(path);
  ASSERT_EQ(p.size(), 2u);
  EXPECT_EQ(p[1], (Rgb{40, 50, 60}));
  {
    std::ofstream out(path);
    out << "10,20\n";
  }
  EXPECT_THROW(read_palette(path), ParameterError);
  {
    std::ofstream out(path);
    out << "1,2,300\n";
  }
  EXPECT_THROW(read_palette(path), ParameterError);
  std::filesystem::remove(path);
  EXPECT_THROW(read_palette(path), BackendError);
  EXPECT_GE(read_palette(kAssets / "printable_palette.txt").size(), 20u);
}

TEST(PatchValue, RandomRasterAndProvenance) {
  const Patch a = Patch::random(16, 3);
  EXPECT_EQ(a.pixels, Patch::random(16, 3).pixels);
  EXPECT_NE(a.pixels, Patch::random(16, 4).pixels);
  for (double v : a.pixels.values()) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
  const RasterImage r = a.raster();
  EXPECT_EQ(Patch::from_raster(r).raster(), r);
  EXPECT_THROW(Patch::from_raster(RasterImage(4, 5)), DimensionError);
  for (Provenance p : {Provenance::kRandomInit, Provenance::kTrained, Provenance::kAdjusted, Provenance::kSimulated,
                       Provenance::kLoaded})
    EXPECT_EQ(provenance_from_string(to_string(p)), p);
  EXPECT_THROW(provenance_from_string("stolen"), ParameterError);
}

TEST(Placement, FullCoverageEqualsBilinearResize) {
  const Patch patch = Patch::from_raster(random_image(8, 8, 5));
  ApplyTransform t;
  t.scale_fraction = 1.0;
  const PatchPlacement pl = place_patch(16, 16, 8, {0, 0, 16, 16}, t);
  EXPECT_EQ(pl.taps.size(), 256u);
  const RasterImage got = to_raster(composite(Tensor(3, 16, 16), patch.pixels, pl));
  const RasterImage want = resize_bilinear(patch.raster(), 16, 16);
  for (size_t i = 0; i < got.bytes().size(); ++i) EXPECT_LE(std::abs(got.bytes()[i] - want.bytes()[i]), 1);
}

TEST(Placement, SideFollowsBoxWidthAndCentre) {
  ApplyTransform t;  // 0.2 of the box width
  const PatchPlacement pl = place_patch(100, 100, 30, {20, 10, 70, 90}, t);
  const PixelMask fp = pl.footprint();
  int rmin = 100, rmax = -1, cmin = 100, cmax = -1;
  for (int r = 0; r < 100; ++r)
    for (int c = 0; c < 100; ++c)
      if (fp(r, c)) {
        rmin = std::min(rmin, r);
        rmax = std::max(rmax, r);
        cmin = std::min(cmin, c);
        cmax = std::max(cmax, c);
      }
  // Side 10 centred on (45, 50).
  EXPECT_EQ(cmin, 40);
  EXPECT_EQ(cmax, 49);
  EXPECT_EQ(rmin, 45);
  EXPECT_EQ(rmax, 54);
  EXPECT_EQ(pl.taps.size(), 100u);
  t.rotation_deg = 45;
  const size_t rotated = place_patch(100, 100, 30, {20, 10, 70, 90}, t).taps.size();
  EXPECT_NEAR(static_cast<double>(rotated), 100.0, 12.0);
  EXPECT_TRUE(place_patch(100, 100, 30, {20, 10, 20, 90}, t).taps.empty());
}

TEST(Placement, AdjointSatisfiesDotProductIdentity) {
  ApplyTransform t;
  t.scale_fraction = 0.5;
  t.rotation_deg = 17;
  t.offset_x = 0.1;
  t.contrast = 1.1;
  t.brightness = -0.05;
  const PatchPlacement pl = place_patch(30, 26, 9, {2, 3, 24, 28}, t);
  const Tensor patch = random_tensor(3, 9, 9, 3, 0.2, 0.8);  // no clipping
  const Tensor zero(3, 30, 26);
  const Tensor y = random_tensor(3, 30, 26, 4, -1, 1);
  const Tensor ap = composite(zero, patch, pl);
  double lhs = 0;
  const PixelMask fp = pl.footprint();
  for (int c = 0; c < 3; ++c)
    for (int r = 0; r < 30; ++r)
      for (int x = 0; x < 26; ++x)
        if (fp(r, x)) lhs += (ap(c, r, x) - t.brightness) * y(c, r, x);
  Tensor g = y;
  const Tensor at = composite_adjoint(g, patch, pl);
  double rhs = 0;
  for (size_t i = 0; i < patch.size(); ++i) rhs += patch.data()[i] * at.data()[i];
  EXPECT_NEAR(lhs, rhs, 1e-10);
  for (int c = 0; c < 3; ++c)
    for (int r = 0; r < 30; ++r)
      for (int x = 0; x < 26; ++x) EXPECT_EQ(g(c, r, x), fp(r, x) ? 0.0 : y(c, r, x));
}

TEST(Placement, PatchGradientThroughDetectorMatchesFiniteDifferences) {
  const auto d = toy_detector();
  const Tensor image = random_tensor(3, 24, 24, 6);
  const Tensor patch = random_tensor(3, 4, 4, 7, 0.3, 0.7);
  ApplyTransform t;
  t.scale_fraction = 0.5;
  t.rotation_deg = 10;
  const PatchPlacement pl = place_patch(24, 24, 4, {4, 2, 20, 22}, t);
  auto objective = [&](const Tensor& p) { return d->target_value(composite(image, p, pl), d->objectness_target()); };
  GradientBundle b = d->gradients_for(composite(image, patch, pl), d->objectness_target());
  const Tensor g = composite_adjoint(b.input_gradient, patch, pl);
  EXPECT_LT(relative_error(g, central_difference(objective, patch, 1e-6)), 1e-5);
}

TEST(ApplyPatch, DegenerateBoxLeavesImage) {
  const RasterImage img = random_image(20, 20, 1);
  const Patch p = Patch::random(5, 1);
  EXPECT_EQ(apply_patch(img, p, {5, 5, 5, 15}, {}), img);
  const RasterImage out = apply_patch(img, p, {0, 0, 20, 20}, {});
  EXPECT_NE(out, img);
}

TEST(SampleTransform, StaysInRanges) {
  std::mt19937_64 rng(1);
  const TransformRanges r;
  for (int i = 0; i < 200; ++i) {
    const ApplyTransform t = sample_transform(rng, r);
    EXPECT_EQ(t.scale_fraction, 0.2);
    EXPECT_LE(std::abs(t.rotation_deg), 20.0);
    EXPECT_LE(std::abs(t.brightness), 0.1);
    EXPECT_GE(t.contrast, 0.8);
    EXPECT_LE(t.contrast, 1.2);
  }
}

bool eligible_oracle(double o, double g) {
  const bool same = (o > 0 && g > 0) || (o < 0 && g < 0);
  return same || std::abs(g) > 3.0 * std::abs(o);
}

TEST(Eligibility, ExhaustiveTwoChannelCombinations) {
  const double objectness[] = {-1.0, 0.0, 1.0};
  const double gradcam[] = {-4.0, -3.0, -1.0, 0.0, 1.0, 3.0, 4.0};
  std::vector<std::pair<double, double>> cases;
  for (double o : objectness)
    for (double g : gradcam) cases.emplace_back(o, g);
  const int n = static_cast<int>(cases.size());
  Tensor obj(2, n, n), gc(2, n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      obj(0, i, j) = cases[static_cast<size_t>(i)].first;
      gc(0, i, j) = cases[static_cast<size_t>(i)].second;
      obj(1, i, j) = cases[static_cast<size_t>(j)].first;
      gc(1, i, j) = cases[static_cast<size_t>(j)].second;
    }
  const ChannelMask m = eligible_pixel_mask(obj, gc, 3.0);
  int eligible = 0;
  for (int ch = 0; ch < 2; ++ch)
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        EXPECT_EQ(m(ch, i, j) == 1, eligible_oracle(obj(ch, i, j), gc(ch, i, j)))
            << "o=" << obj(ch, i, j) << " g=" << gc(ch, i, j);
        eligible += m(ch, i, j);
      }
  // Per channel 14 of 21: four for each signed objectness, six for zero objectness.
  EXPECT_EQ(eligible, 2 * n * 14);
  EXPECT_THROW(eligible_pixel_mask(obj, Tensor(2, n, n - 1), 3.0), DimensionError);
}

TEST(AdjustStep, MovesEligibleByEpsilonAgainstSign) {
  const Tensor x = random_tensor(3, 10, 10, 1, 0.2, 0.8);
  const Tensor g = random_tensor(3, 10, 10, 2, -1, 1);
  ChannelMask mask(3, 10, 10);
  std::mt19937_64 rng(3);
  for (auto& v : mask.values()) v = static_cast<std::uint8_t>(rng() % 2);
  const Tensor y = adjust_step(x, mask, g, 0.1);
  for (size_t i = 0; i < x.size(); ++i) {
    if (mask.data()[i]) {
      const double want = g.data()[i] > 0 ? x.data()[i] - 0.1 : x.data()[i] + 0.1;
      EXPECT_EQ(y.data()[i], want);
    } else {
      EXPECT_EQ(std::memcmp(&y.data()[i], &x.data()[i], sizeof(double)), 0);
    }
  }
}

TEST(AdjustStep, ClipsToUnitRange) {
  Tensor x(1, 1, 2);
  x.data()[0] = 0.05;
  x.data()[1] = 0.97;
  Tensor g(1, 1, 2);
  g.data()[0] = 1;
  g.data()[1] = -1;
  const Tensor y = adjust_step(x, ChannelMask(1, 1, 2, 1), g, 0.1);
  EXPECT_EQ(y.data()[0], 0.0);
  EXPECT_EQ(y.data()[1], 1.0);
  EXPECT_THROW(adjust_step(x, ChannelMask(1, 1, 3, 1), g, 0.1), DimensionError);
}

TEST(SimulatePhysical, DarkensByThirty) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Patch p = Patch::from_raster(random_image(16, 16, seed, 40, 215));
    SimulationConfig cfg;
    const Patch s = simulate_physical(p, cfg);
    EXPECT_EQ(s.provenance, Provenance::kSimulated);
    const RasterImage blurred = gaussian_blur(p.raster(), 1.0);
    const RasterImage out = s.raster();
    for (size_t i = 0; i < out.bytes().size(); ++i) EXPECT_EQ(out.bytes()[i] + 30, blurred.bytes()[i]);
    cfg.blur_sigma = 0;
    const RasterImage flat = simulate_physical(p, cfg).raster();
    for (size_t i = 0; i < flat.bytes().size(); ++i) EXPECT_EQ(flat.bytes()[i] + 30, p.raster().bytes()[i]);
  }
}

TEST(SimulatePhysical, NeverRaisesTotalVariation) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const Patch p = Patch::random(24, seed);
    EXPECT_LE(total_variation(simulate_physical(p, {}).raster()), total_variation(p.raster()));
  }
}

TEST(SimulatePhysical, JitterIsSeeded) {
  SimulationConfig cfg;
  cfg.brightness_sigma = 5;
  const Patch p = Patch::from_raster(RasterImage(8, 8, {120, 120, 120}));
  std::mt19937_64 a(4), b(4);
  EXPECT_EQ(simulate_physical(p, cfg, &a).pixels, simulate_physical(p, cfg, &b).pixels);
}

std::vector<TrainingSample> toy_samples() {
  std::vector<TrainingSample> s;
  for (std::uint64_t seed = 0; seed < 3; ++seed) s.push_back({random_image(12, 12, seed), {{1, 1, 11, 11}}});
  s.push_back({random_image(12, 12, 9), {}});
  return s;
}

TEST(TrainPatch, HistoryDecomposesLoss) {
  const auto d = toy_detector();
  PatchTrainConfig cfg;
  cfg.iterations = 4;
  cfg.batch_size = 2;
  cfg.patch_size = 5;
  cfg.transforms.scale_fraction = 0.5;
  cfg.palette = read_palette(kAssets / "printable_palette.txt");
  const TrainResult r = train_patch(*d, toy_samples(), cfg);
  ASSERT_EQ(r.history.size(), 4u);
  EXPECT_EQ(r.patch.provenance, Provenance::kTrained);
  for (const LossRecord& h : r.history) {
    EXPECT_NEAR(h.total, h.objectness + 2.5 * h.tv + 0.01 * h.nps, 1e-12);
    EXPECT_GT(h.objectness, 0.0);
  }
  EXPECT_EQ(train_patch(*d, toy_samples(), cfg).patch.pixels, r.patch.pixels);

  cfg.alpha = cfg.beta = 0;
  for (const LossRecord& h : train_patch(*d, toy_samples(), cfg).history) EXPECT_EQ(h.total, h.objectness);
}

TEST(TrainPatch, FirstRecordIsRandomPatchObjectness) {
  const auto d = toy_detector();
  PatchTrainConfig cfg;
  cfg.iterations = 1;
  cfg.batch_size = 1;
  cfg.patch_size = 5;
  cfg.beta = 0;
  const auto samples = toy_samples();
  std::mt19937_64 rng(cfg.seed);
  const Patch init = Patch::random(5, rng());
  std::vector<size_t> order = {0, 1, 2};
  std::shuffle(order.begin(), order.end(), rng);
  Tensor img = to_tensor(samples[order[0]].image);
  img = composite(img, init.pixels, place_patch(12, 12, 5, samples[order[0]].persons[0], sample_transform(rng, {})));
  const double want = d->target_value(img, d->objectness_target());
  EXPECT_NEAR(train_patch(*d, samples, cfg).history[0].objectness, want, 1e-12);
}

TEST(TrainPatch, RejectsUnusableInput) {
  const auto d = toy_detector();
  PatchTrainConfig cfg;
  cfg.iterations = 0;
  EXPECT_THROW(train_patch(*d, toy_samples(), cfg), ParameterError);
  cfg = {};
  EXPECT_THROW(train_patch(*d, toy_samples(), cfg), ParameterError);  // beta > 0, no palette
  cfg.beta = 0;
  EXPECT_THROW(train_patch(*d, {{RasterImage(12, 12), {}}}, cfg), ParameterError);
}

TEST(PrepareTrainingSet, LetterboxesBoxes) {
  const auto d = toy_detector();
  std::vector<TrainingSample> s = {{RasterImage(6, 24), {{0, 0, 24, 6}, {12, 3, 18, 6}}}};
  const auto out = prepare_training_set(*d, s);
  EXPECT_EQ(out[0].image.height(), 12);
  EXPECT_EQ(out[0].persons[0], (BoxF{0, 4, 12, 7}));
  EXPECT_EQ(out[0].persons[1], (BoxF{6, 5.5, 9, 7}));
  EXPECT_NEAR(mean_patched_objectness(*d, out, Patch::random(4, 1), {}, 2),
              mean_patched_objectness(*d, out, Patch::random(4, 1), {}, 2), 0.0);
}

AdjustExample toy_example() {
  ApplyTransform t;
  t.scale_fraction = 0.6;
  return {random_image(12, 12, 5), {1, 1, 11, 11}, t};
}

TEST(AdjustPatch, TrivialTargetStopsAfterOneIteration) {
  const auto d = toy_detector();
  AdjustConfig cfg;
  cfg.target_reduction = 0.0;
  int probes = 0;
  const AdjustResult r = adjust_patch(*d, Patch::random(6, 1), toy_example(), cfg, [&](const Patch&) {
    ++probes;
    return true;
  });
  EXPECT_TRUE(r.converged);
  ASSERT_EQ(r.log.size(), 1u);
  EXPECT_EQ(probes, 1);
  EXPECT_EQ(r.patch.provenance, Provenance::kAdjusted);
  EXPECT_EQ(r.patch.gradcam_sum, r.log.back().gradcam_sum);
}

TEST(AdjustPatch, ProbesOnlyAfterReductionAndGivesUp) {
  const auto d = toy_detector();
  AdjustConfig cfg;
  cfg.max_iterations = 5;
  int probes = 0;
  const AdjustResult r = adjust_patch(*d, Patch::random(6, 2), toy_example(), cfg, [&](const Patch& p) {
    EXPECT_EQ(p.provenance, Provenance::kSimulated);
    ++probes;
    return false;
  });
  EXPECT_FALSE(r.converged);
  ASSERT_EQ(r.log.size(), 5u);
  int met = 0;
  for (const AdjustIteration& it : r.log) {
    met += it.reduction_met;
    EXPECT_FALSE(it.probe_passed);
    EXPECT_EQ(it.reduction_met, it.gradcam_sum <= 0.3 * r.initial_gradcam_sum);
  }
  EXPECT_EQ(probes, met);
}

TEST(AdjustPatch, FirstStepFollowsEligibilityRule) {
  const auto d = toy_detector();
  const AdjustExample ex = toy_example();
  const Patch start = Patch::random(6, 3);
  AdjustConfig cfg;
  cfg.max_iterations = 1;
  const AdjustResult r = adjust_patch(*d, start, ex, cfg, [](const Patch&) { return false; });

  const PatchPlacement pl = place_patch(12, 12, 6, ex.person, ex.transform);
  const Tensor x = composite(to_tensor(ex.image), start.pixels, pl);
  RegionScoreGradient gc = gradcam_region_gradient(*d, x, 0, pl.footprint());
  GradientBundle ob = d->gradients_for(x, d->objectness_target());
  const Tensor g_gc = composite_adjoint(gc.input_gradient, start.pixels, pl);
  const Tensor g_ob = composite_adjoint(ob.input_gradient, start.pixels, pl);
  EXPECT_EQ(r.initial_gradcam_sum, gc.score_sum);
  for (size_t i = 0; i < start.pixels.size(); ++i) {
    const double x0 = start.pixels.data()[i];
    const double g = g_gc.data()[i];
    const double want = eligible_oracle(g_ob.data()[i], g) && g != 0
                            ? std::clamp(x0 - 0.1 * (g > 0 ? 1 : -1), 0.0, 1.0)
                            : x0;
    EXPECT_EQ(r.patch.pixels.data()[i], want) << i;
  }
}

TEST(AdjustPatch, RejectsBadConfig) {
  const auto d = toy_detector();
  AdjustConfig cfg;
  cfg.target_reduction = 1.0;
  EXPECT_THROW(adjust_patch(*d, Patch::random(6, 1), toy_example(), cfg, {}), ParameterError);
  cfg = {};
  AdjustExample far = toy_example();
  far.transform.offset_x = 5.0;
  EXPECT_THROW(adjust_patch(*d, Patch::random(6, 1), far, cfg, {}), ParameterError);
}

}  // namespace
}  // namespace patchguard
