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

#ifndef PATCHGUARD_PATCHFORGE_H_
#define PATCHGUARD_PATCHFORGE_H_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "patchguard/detector.h"
#include "patchguard/sigdefense.h"
#include "patchguard/tensor.h"

namespace patchguard {

enum class Provenance { kRandomInit, kTrained, kAdjusted, kSimulated, kLoaded };

const char* to_string(Provenance p);
Provenance provenance_from_string(const std::string& s);

/// Square RGB attack image. Pixels are kept in the normalised [0, 1] domain
/// in which the optimisers work; raster() quantises for output.
struct Patch {
  Tensor pixels;  // 3 x N x N
  double gradcam_sum = 0.0;
  Provenance provenance = Provenance::kRandomInit;

  int size() const { return pixels.height(); }
  RasterImage raster() const { return to_raster(pixels); }
  static Patch from_raster(const RasterImage& image, Provenance provenance = Provenance::kLoaded);
  static Patch random(int size, std::uint64_t seed);
};

// Printability palette: one "R,G,B" triple (0..255) per line.
std::vector<Rgb> read_palette(const std::filesystem::path& path);

/// Isotropic total variation with forward differences (missing neighbours
/// contribute 0), summed over channels and divided by the pixel count.
/// The raster overload works in 0..255 units.
double total_variation(const RasterImage& image);
/// Same quantity on a [0, 1] tensor; writes d TV / d pixel when `grad` is set.
double total_variation(const Tensor& pixels, Tensor* grad = nullptr);

/// Mean over pixels of the Euclidean distance to the nearest palette colour (0..255 units).
double nonprintability_score(const RasterImage& image, const std::vector<Rgb>& palette);
/// Same on a [0, 1] tensor, palette scaled to [0, 1].
double nonprintability_score(const Tensor& pixels, const std::vector<Rgb>& palette, Tensor* grad = nullptr);

struct ApplyTransform {
  double scale_fraction = 0.2;  // patch side / person box width
  double rotation_deg = 0.0;
  double offset_x = 0.0;        // shift of the patch centre, in box widths
  double offset_y = 0.0;        // in box heights
  double brightness = 0.0;      // additive, normalised units
  double contrast = 1.0;        // multiplicative
};

struct TransformRanges {
  double scale_fraction = 0.2;
  double max_rotation_deg = 20.0;
  double max_brightness = 0.1;
  double min_contrast = 0.8;
  double max_contrast = 1.2;
};

ApplyTransform sample_transform(std::mt19937_64& rng, const TransformRanges& ranges);

/// Bilinear sampling taps that paste a transformed patch into an image. The
/// composite is linear in the patch pixels, which makes it differentiable.
struct PatchPlacement {
  struct Tap {
    std::int32_t row;
    std::int32_t col;
    std::int32_t src[4];  // flat patch-plane indices
    double weight[4];
  };
  int image_height = 0;
  int image_width = 0;
  int patch_size = 0;
  double contrast = 1.0;
  double brightness = 0.0;
  std::vector<Tap> taps;

  PixelMask footprint() const;
};

/// Image pixel centres falling inside the rotated square receive the patch.
PatchPlacement place_patch(int image_height, int image_width, int patch_size, const BoxF& box,
                           const ApplyTransform& transform);

Tensor composite(const Tensor& image, const Tensor& patch, const PatchPlacement& placement);

/// Gradient of a composite with respect to the patch pixels. Pixels covered by
/// the patch are zeroed in `grad_image` so earlier placements can be chained.
Tensor composite_adjoint(Tensor& grad_image, const Tensor& patch, const PatchPlacement& placement);

/// Degenerate boxes leave the image unchanged (with a warning on stderr).
RasterImage apply_patch(const RasterImage& image, const Patch& patch, const BoxF& box, const ApplyTransform& transform);

struct TrainingSample {
  RasterImage image;
  std::vector<BoxF> persons;
};

struct PatchTrainConfig {
  double alpha = 2.5;  // total variation weight
  double beta = 0.01;  // non-printability weight
  int iterations = 10000;
  int batch_size = 8;
  double learning_rate = 0.03;
  int patch_size = 300;
  std::vector<Rgb> palette;
  TransformRanges transforms;
  std::uint64_t seed = 0;
};

void validate(const PatchTrainConfig& config);

struct LossRecord {
  double total = 0.0;
  double objectness = 0.0;
  double tv = 0.0;
  double nps = 0.0;
};

struct TrainResult {
  Patch patch;
  std::vector<LossRecord> history;
};

/// Letterboxes each image to the detector input size and maps its person boxes.
std::vector<TrainingSample> prepare_training_set(const Detector& detector, std::vector<TrainingSample> samples);

/// Minimises L_obj + alpha L_tv + beta L_nps over the patch pixels with Adam.
/// L_obj is the batch mean of the maximum object confidence of patched images.
TrainResult train_patch(const Detector& detector, const std::vector<TrainingSample>& dataset,
                        const PatchTrainConfig& config, std::function<void(int, const LossRecord&)> progress = {});

/// Mean maximum object confidence over samples with the patch applied using
/// transforms drawn from `seed` (the same draws for every patch).
double mean_patched_objectness(const Detector& detector, const std::vector<TrainingSample>& samples,
                               const Patch& patch, const TransformRanges& ranges, std::uint64_t seed);

/// Per-channel eligibility: same gradient sign, or |gradcam| > factor * |objectness|.
ChannelMask eligible_pixel_mask(const Tensor& objectness_gradient, const Tensor& gradcam_gradient,
                                double magnitude_factor);

/// x <- clip(x - epsilon * sign(gradcam gradient)) on eligible channels.
Tensor adjust_step(const Tensor& pixels, const ChannelMask& eligible, const Tensor& gradcam_gradient, double epsilon);

struct SimulationConfig {
  double blur_sigma = 1.0;
  int brightness_delta = -30;
  /// When > 0, the brightness drop is drawn from N(-brightness_delta, sigma) per call.
  double brightness_sigma = 0.0;
};

/// Blur then darken; sigma <= 0 skips the blur.
Patch simulate_physical(const Patch& patch, const SimulationConfig& config, std::mt19937_64* rng = nullptr);

struct AdjustConfig {
  double epsilon = 0.1;
  double magnitude_factor = 3.0;
  double target_reduction = 0.70;  // 0 disables the reduction requirement
  int max_iterations = 100;
  SimulationConfig simulation;
  std::uint64_t seed = 0;  // drives brightness jitter in the simulation
};

void validate(const AdjustConfig& config);

/// The canonical example the patch is adjusted against.
struct AdjustExample {
  RasterImage image;
  BoxF person;
  ApplyTransform transform;
};

/// Returns true when the (already simulated) patch evades.
using EvasionProbe = std::function<bool(const Patch& simulated)>;

/// Builds the example with the simulated patch and runs the signature
/// defense; evasion means no target-class detection survives filtering.
EvasionProbe signature_defense_probe(const Detector& detector, const AdjustExample& example,
                                     const FilterConfig& filter_config);

struct AdjustIteration {
  int iteration = 0;
  double gradcam_sum = 0.0;  // after the step
  double objectness = 0.0;   // after the step
  size_t eligible = 0;       // channel entries updated by the step
  bool reduction_met = false;
  bool probe_passed = false;  // only probed once the reduction is met
};

struct AdjustResult {
  Patch patch;
  double initial_gradcam_sum = 0.0;
  std::vector<AdjustIteration> log;
  bool converged = false;
};

/// Repeats gradient / eligibility / sign-step until the Grad-CAM sum over the
/// patch pixels has dropped by target_reduction and the probe passes.
AdjustResult adjust_patch(const Detector& detector, Patch patch, const AdjustExample& example,
                          const AdjustConfig& config, const EvasionProbe& probe);

}  // namespace patchguard

#endif  // PATCHGUARD_PATCHFORGE_H_
