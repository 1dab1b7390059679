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

// Acceptance runner: one PASS/FAIL line per criterion.
//
//   acceptance [--cli <patchguard binary>] [--only 1,2,...]
//
// Criterion 7 needs pretrained detector weights and COCO person images:
//   PATCHGUARD_WEIGHTS   darknet weights file
//   PATCHGUARD_CFG       matching network cfg (defaults to the bundled yolov2.cfg)
//   PATCHGUARD_COCO_MANIFEST  JSONL manifest; "set" is "train" or "heldout", persons boxes required
// Exit status is 0 when every selected criterion passes, 77 when the only
// failures are blocked criteria, and 1 otherwise.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "patchguard/gradcam.h"
#include "patchguard/growdetect.h"
#include "patchguard/harness.h"
#include "patchguard/image_io.h"
#include "patchguard/patchforge.h"
#include "patchguard/sigdefense.h"
#include "support/fixtures.h"
#include "support/oracles.h"

namespace pg = patchguard;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  bool blocked = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(3);
  os << v;
  return os.str();
}

Outcome entropy_criterion() {
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    const int levels = seed % 4 == 0 ? 4 : 256;
    const pg::Plane p = pg::testing::random_plane(16, 16, seed, levels);
    worst = std::max(worst, std::abs(pg::two_d_entropy(p) - pg::testing::entropy_oracle(p)));
  }
  bool uniform_zero = true;
  for (int v : {0, 1, 77, 128, 255}) uniform_zero &= pg::two_d_entropy(pg::Plane(16, 16, static_cast<std::uint8_t>(v))) == 0.0;
  const double elapsed = seconds_since(t0);
  return {worst <= 1e-9 && uniform_zero && elapsed < 10.0, false,
          "max |diff| " + fmt(worst) + ", uniform zero " + (uniform_zero ? "yes" : "no") + ", " + fmt(elapsed) + " s"};
}

Outcome gradcam_criterion() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto det = pg::testing::toy_detector();
  double worst_fd = 0.0, worst_fine = 0.0, min_score = 0.0;
  for (std::uint64_t seed = 0; seed < 5; ++seed)
    for (int cls : {0, 1}) {
      const pg::Tensor x = pg::testing::random_tensor(3, 12, 12, seed);
      const pg::GradientBundle b = det->gradients_for(x, det->gradcam_target(cls));
      const pg::Tensor fd = pg::testing::central_difference(
          [&](const pg::Tensor& f) {
            const pg::Tensor head = det->network().forward(x, nullptr, det->feature_layer(), &f);
            return pg::testing::head_target_oracle(head, 2, 1, cls);
          },
          b.features, 1e-6);
      worst_fd = std::max(worst_fd, pg::testing::relative_error(b.feature_gradients, fd));
    }
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const int h = 12 + static_cast<int>(seed % 4) * 5, w = 12 + static_cast<int>(seed % 3) * 7;
    const int cls = static_cast<int>(seed % 2);
    const pg::Tensor x = pg::testing::random_tensor(3, h, w, 100 + seed);
    const pg::GradientBundle b = det->gradients_for(x, det->gradcam_target(cls));
    const pg::testing::CamOracle o = pg::testing::gradcam_oracle(b.features, b.feature_gradients, h, w);
    const pg::GradCamResult r = pg::pixel_scores(*det, x, cls);
    for (size_t i = 0; i < o.fine.size(); ++i)
      worst_fine = std::max(worst_fine, std::abs(r.pixel_scores.values()[i] - o.fine.values()[i]));
    for (double v : r.pixel_scores.values()) min_score = std::min(min_score, v);
    for (double v : r.coarse.values()) min_score = std::min(min_score, v);
  }
  const double elapsed = seconds_since(t0);
  return {worst_fd < 1e-3 && min_score >= 0.0 && worst_fine <= 1e-9 && elapsed < 30.0, false,
          "fd rel err " + fmt(worst_fd) + ", min score " + fmt(min_score) + ", oracle diff " + fmt(worst_fine) + ", " +
              fmt(elapsed) + " s"};
}

Outcome top_pixels_criterion() {
  int cases = 0, bad = 0;
  for (double n : {0.0, 5.0, 15.0, 25.0, 100.0})
    for (std::uint64_t seed = 0; seed < 40; ++seed) {
      const int h = 5 + static_cast<int>(seed % 7) * 11, w = 6 + static_cast<int>(seed % 5) * 13;
      const pg::ScoreMap s = pg::testing::random_scores(h, w, seed, seed % 3 == 0 ? 5 : 0);
      const pg::PixelMask got = pg::select_top_pixels(s, n);
      size_t count = 0;
      for (auto v : got.values()) count += v != 0;
      const bool ok = count == static_cast<size_t>(std::round(n / 100.0 * h * w)) &&
                      got == pg::testing::top_pixels_oracle(s, n);
      ++cases;
      bad += !ok;
    }
  return {bad == 0, false, std::to_string(cases - bad) + "/" + std::to_string(cases) + " maps match"};
}

bool within_bounds(const pg::GrowthTrace& t, int grid) {
  return !t.aborted && t.expansions() <= 2 * (grid - 1) && t.detector_calls <= 1 + t.expansions();
}

Outcome growdetect_criterion() {
  const auto t0 = std::chrono::steady_clock::now();
  int flagged_vanish = 0, flagged_monotone = 0, bound_violations = 0;
  std::mt19937_64 rng(2024);
  for (int i = 0; i < 100; ++i) {
    const pg::testing::Layout l = pg::testing::random_vanish_layout(rng);
    const auto d = pg::testing::layout_detector(l, rng);
    const pg::GrowthTrace t = pg::grow_and_check(*d, pg::RasterImage(l.grid * l.block, l.grid * l.block), {});
    flagged_vanish += t.verdict == pg::Verdict::kAdversarial;
    bound_violations += !within_bounds(t, l.grid) || t.detector_calls != d->calls();
  }
  for (int i = 0; i < 100; ++i) {
    const pg::testing::Layout l = pg::testing::random_monotone_layout(rng);
    const auto d = pg::testing::layout_detector(l, rng);
    const pg::GrowthTrace t = pg::grow_and_check(*d, pg::RasterImage(l.grid * l.block, l.grid * l.block), {});
    flagged_monotone += t.verdict == pg::Verdict::kAdversarial;
    bound_violations += !within_bounds(t, l.grid) || t.detector_calls != d->calls();
  }
  const double elapsed = seconds_since(t0);
  return {flagged_vanish == 100 && flagged_monotone == 0 && bound_violations == 0 && elapsed < 20.0, false,
          "vanish flagged " + std::to_string(flagged_vanish) + "/100, monotone flagged " +
              std::to_string(flagged_monotone) + "/100, bound violations " + std::to_string(bound_violations) + ", " +
              fmt(elapsed) + " s"};
}

bool eligibility_rule(double o, double g) {
  const bool same = (o > 0 && g > 0) || (o < 0 && g < 0);
  return same || std::abs(g) > 3.0 * std::abs(o);
}

Outcome adjust_step_criterion() {
  // Every ordered pair of per-channel (objectness, gradcam) gradient cases.
  const double objectness[] = {-2.0, -1.0, 0.0, 1.0, 2.0};
  const double gradcam[] = {-7.0, -6.0, -3.0, -1.0, 0.0, 1.0, 3.0, 6.0, 7.0};
  std::vector<std::pair<double, double>> cases;
  for (double o : objectness)
    for (double g : gradcam) cases.emplace_back(o, g);
  const int n = static_cast<int>(cases.size());
  pg::Tensor obj(2, n, n), gc(2, n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      obj(0, i, j) = cases[static_cast<size_t>(i)].first;
      gc(0, i, j) = cases[static_cast<size_t>(i)].second;
      obj(1, i, j) = cases[static_cast<size_t>(j)].first;
      gc(1, i, j) = cases[static_cast<size_t>(j)].second;
    }
  const pg::ChannelMask mask = pg::eligible_pixel_mask(obj, gc, 3.0);
  int rule_mismatch = 0;
  for (int ch = 0; ch < 2; ++ch)
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) rule_mismatch += (mask(ch, i, j) == 1) != eligibility_rule(obj(ch, i, j), gc(ch, i, j));

  const pg::Tensor x = pg::testing::random_tensor(2, n, n, 11, 0.15, 0.85);
  const pg::Tensor y = pg::adjust_step(x, mask, gc, 0.1);
  int step_mismatch = 0;
  size_t moved = 0;
  for (size_t k = 0; k < x.size(); ++k) {
    const double g = gc.data()[k];
    if (mask.data()[k] && g != 0.0) {
      step_mismatch += y.data()[k] != (g > 0 ? x.data()[k] - 0.1 : x.data()[k] + 0.1);
      ++moved;
    } else if (mask.data()[k]) {
      step_mismatch += y.data()[k] != x.data()[k];
    } else {
      step_mismatch += std::memcmp(&y.data()[k], &x.data()[k], sizeof(double)) != 0;
    }
  }
  return {rule_mismatch == 0 && step_mismatch == 0, false,
          std::to_string(2 * n * n) + " channel cases, rule mismatches " + std::to_string(rule_mismatch) +
              ", step mismatches " + std::to_string(step_mismatch) + ", moved " + std::to_string(moved)};
}

// Mean drop in 0..255 levels, from exact integer totals.
double mean_drop(const pg::RasterImage& before, const pg::RasterImage& after) {
  long long diff = 0;
  for (size_t i = 0; i < before.bytes().size(); ++i) diff += before.bytes()[i] - after.bytes()[i];
  return static_cast<double>(diff) / static_cast<double>(before.bytes().size());
}

Outcome simulation_criterion() {
  double worst_drop = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const pg::Patch p = pg::Patch::from_raster(pg::testing::random_image(32, 32, seed, 40, 215));
    pg::SimulationConfig flat;
    flat.blur_sigma = 0.0;
    worst_drop = std::max(worst_drop, std::abs(mean_drop(p.raster(), pg::simulate_physical(p, flat).raster()) - 30.0));
    const pg::RasterImage blurred = pg::gaussian_blur(p.raster(), 1.0);
    worst_drop = std::max(worst_drop, std::abs(mean_drop(blurred, pg::simulate_physical(p, {}).raster()) - 30.0));
  }
  int tv_increases = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const pg::Patch p = pg::Patch::random(16 + static_cast<int>(seed % 5) * 8, 500 + seed);
    tv_increases += pg::total_variation(pg::simulate_physical(p, {}).raster()) > pg::total_variation(p.raster());
  }
  return {worst_drop == 0.0 && tv_increases == 0, false,
          "max |drop - 30| " + fmt(worst_drop) + ", TV increases " + std::to_string(tv_increases) + "/100"};
}

// --- criterion 7 ---------------------------------------------------------

int persons_in(const pg::Detector& d, const pg::RasterImage& img) {
  int n = 0;
  for (const pg::Detection& det : d.detect(img)) n += det.class_id == d.target_class_id();
  return n;
}

Outcome end_to_end_criterion() {
  const char* weights = std::getenv("PATCHGUARD_WEIGHTS");
  const char* manifest_path = std::getenv("PATCHGUARD_COCO_MANIFEST");
  if (!weights || !manifest_path || !fs::exists(weights) || !fs::exists(manifest_path))
    return {false, true, "blocked: pretrained weights and COCO manifest unavailable (set PATCHGUARD_WEIGHTS and PATCHGUARD_COCO_MANIFEST)"};
  const char* cfg_env = std::getenv("PATCHGUARD_CFG");
  const fs::path assets = PATCHGUARD_TEST_ASSET_DIR;
  const fs::path cfg = cfg_env ? fs::path(cfg_env) : assets / "yolov2.cfg";
  const auto det = pg::load_grid_detector(cfg, weights, {}, pg::read_class_names(assets / "coco.names"));

  std::vector<pg::TrainingSample> train, heldout;
  for (const pg::ManifestEntry& e : pg::read_manifest(manifest_path)) {
    if (e.persons.empty()) continue;
    pg::TrainingSample s{pg::read_image(e.image), e.persons};
    if (e.set == "train" && train.size() < 20) train.push_back(std::move(s));
    if (e.set == "heldout") heldout.push_back(std::move(s));
  }
  if (train.size() < 20 || heldout.size() < 5)
    return {false, true, "blocked: manifest needs 20 train and 5 heldout person images"};

  const auto t0 = std::chrono::steady_clock::now();
  pg::PatchTrainConfig tc;
  tc.iterations = 200;
  tc.seed = 7;
  tc.palette = pg::read_palette(assets / "printable_palette.txt");
  const pg::TrainResult trained = pg::train_patch(*det, pg::prepare_training_set(*det, train), tc);
  const double train_s = seconds_since(t0);

  const auto held = pg::prepare_training_set(*det, heldout);
  const pg::Patch baseline = pg::Patch::random(tc.patch_size, tc.seed);
  const double before = pg::mean_patched_objectness(*det, held, baseline, tc.transforms, 99);
  const double after = pg::mean_patched_objectness(*det, held, trained.patch, tc.transforms, 99);
  const double reduction = before > 0 ? (before - after) / before : 0.0;

  int missed = 0, recovered = 0, flagged = 0, benign_flags = 0;
  pg::FilterConfig fc;
  fc.percent = 15.0;
  pg::ApplyTransform placement;
  placement.scale_fraction = tc.transforms.scale_fraction;
  double slowest = 0.0;
  for (size_t i = 0; i < 5; ++i) {
    const pg::RasterImage& clean = heldout[i].image;
    pg::RasterImage patched = clean;
    for (const pg::BoxF& b : heldout[i].persons) patched = pg::apply_patch(patched, trained.patch, b, placement);
    const auto t1 = std::chrono::steady_clock::now();
    missed += persons_in(*det, patched) == 0;
    slowest = std::max(slowest, seconds_since(t1));
    recovered += pg::defend(*det, patched, fc).recovered;
    flagged += pg::run_growdetect(*det, patched, {}).verdict == pg::Verdict::kAdversarial;
    benign_flags += pg::run_growdetect(*det, clean, {}).verdict == pg::Verdict::kAdversarial;
  }
  const bool pass = reduction >= 0.20 && missed == 5 && recovered >= 4 && flagged >= 4 && benign_flags == 0 &&
                    train_s <= 1800.0 && slowest <= 10.0;
  return {pass, false,
          "objectness reduction " + fmt(reduction) + ", missed " + std::to_string(missed) + "/5, recovered " +
              std::to_string(recovered) + "/5, flagged " + std::to_string(flagged) + "/5, benign flags " +
              std::to_string(benign_flags) + "/5, train " + fmt(train_s) + " s, detect " + fmt(slowest) + " s"};
}

// --- criterion 8 ---------------------------------------------------------

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

std::string quote(const fs::path& p) { return "'" + p.string() + "'"; }

Outcome determinism_criterion(const std::string& cli) {
  if (cli.empty() || !fs::exists(cli)) return {false, false, "patchguard binary not found (pass --cli)"};
  const fs::path dir = fs::temp_directory_path() / ("patchguard_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  const fs::path assets = PATCHGUARD_TEST_ASSET_DIR;
  {
    std::ofstream conf(dir / "run.conf");
    conf << "cfg = " << (assets / "tiny-grid.cfg").string() << "\nweights = random:7\nconf_threshold = 0.02\nseed = 3\n";
  }
  std::ofstream manifest(dir / "manifest.jsonl");
  for (int i = 0; i < 4; ++i) {
    const std::string name = "img" + std::to_string(i) + ".png";
    pg::write_image(dir / name, pg::testing::random_image(64, 80, static_cast<std::uint64_t>(i)));
    manifest << R"({"image": ")" << name << R"(", "label": ")" << (i % 2 ? "adversarial" : "benign")
             << R"(", "persons": [[10, 8, 50, 60]]})" << "\n";
  }
  manifest.close();

  const std::string base = quote(cli) + " --config " + quote(dir / "run.conf") + " ";
  const fs::path img = dir / "img0.png";
  struct Command {
    std::string name;
    std::string args;
    std::vector<std::string> outputs;
  };
  const std::vector<Command> commands = {
      {"filter-defend", "filter-defend --input " + quote(img) + " --n 15 --out-filtered " + quote(dir / "f.png") +
                            " --out-json " + quote(dir / "fd.json"),
       {"fd.json"}},
      {"grow-detect", "grow-detect --input " + quote(img) + " --seeds 2 --trace-dir " + quote(dir / "trace") +
                          " --out-json " + quote(dir / "gd.json"),
       {"gd.json"}},
      {"gen-patch", "gen-patch --manifest " + quote(dir / "manifest.jsonl") + " --out " + quote(dir / "p.png") +
                        " --iterations 3 --batch 2 --patch-size 12 --seed 5 --out-json " + quote(dir / "gp.json"),
       {"gp.json", "p.png.json"}},
      {"adjust-patch", "adjust-patch --patch " + quote(dir / "p.png") + " --input " + quote(img) +
                           " --box 10,8,50,60 --max-iter 3 --out " + quote(dir / "a.png") + " --out-json " +
                           quote(dir / "ap.json"),
       {"ap.json", "a.png.json"}},
      {"simulate", "simulate --patch " + quote(dir / "p.png") + " --out " + quote(dir / "s.png") +
                       " --jitter 3 --seed 9 --out-json " + quote(dir / "sm.json"),
       {"sm.json", "s.png.json"}},
      {"eval", "eval --manifest " + quote(dir / "manifest.jsonl") + " --method growdetect --workers 2 --out-csv " +
                   quote(dir / "ev.csv") + " --out-json " + quote(dir / "ev.json"),
       {"ev.json"}},
      {"eval", "eval --manifest " + quote(dir / "manifest.jsonl") + " --method sigdefense --workers 3 --out-json " +
                   quote(dir / "ev2.json"),
       {"ev2.json"}},
      {"heatmap", "heatmap " + quote(img) + " person " + quote(dir / "h.png") + " --out-json " + quote(dir / "hm.json"),
       {"hm.json"}},
  };

  std::set<std::string> identical, differing;
  std::vector<std::string> problems;
  std::map<std::string, std::string> first;
  for (int run = 0; run < 2; ++run)
    for (const Command& c : commands) {
      for (const std::string& o : c.outputs) fs::remove(dir / o);
      const int rc = std::system((base + c.args + " > /dev/null 2>&1").c_str());
      if (rc != 0) {
        problems.push_back(c.name + " exited " + std::to_string(rc));
        continue;
      }
      for (const std::string& o : c.outputs) {
        if (!fs::exists(dir / o)) {
          problems.push_back(c.name + " wrote no " + o);
          continue;
        }
        const std::string bytes = slurp(dir / o);
        if (run == 0) {
          first[o] = bytes;
        } else if (first[o] == bytes) {
          identical.insert(c.name);
        } else {
          differing.insert(c.name);
        }
      }
    }
  for (const std::string& d : differing) identical.erase(d);
  fs::remove_all(dir);
  std::string detail = std::to_string(identical.size()) + "/7 subcommands byte-identical";
  for (const std::string& d : differing) detail += ", differs: " + d;
  for (const std::string& p : problems) detail += ", " + p;
  return {problems.empty() && differing.empty() && identical.size() == 7, false, detail};
}

}  // namespace

int main(int argc, char** argv) {
  std::string cli;
  std::set<int> only;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--cli" && i + 1 < argc) {
      cli = argv[++i];
    } else if (a == "--only" && i + 1 < argc) {
      std::stringstream ss(argv[++i]);
      std::string tok;
      while (std::getline(ss, tok, ',')) only.insert(std::stoi(tok));
    } else {
      std::cerr << "usage: acceptance [--cli <patchguard>] [--only 1,2,...]\n";
      return 2;
    }
  }
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"2-D entropy matches brute-force oracle", entropy_criterion},
      {"Grad-CAM gradients, non-negativity and oracle", gradcam_criterion},
      {"top-pixel selection count and full-sort oracle", top_pixels_criterion},
      {"region-growing verdicts and bounds", growdetect_criterion},
      {"adjustment step and eligibility rule", adjust_step_criterion},
      {"physical simulation brightness and TV", simulation_criterion},
      {"end-to-end attack and defenses with pretrained weights", end_to_end_criterion},
      {"byte-identical JSON across two CLI runs", [&] { return determinism_criterion(cli); }},
  };
  int failed = 0, blocked = 0;
  for (size_t k = 0; k < criteria.size(); ++k) {
    const int id = static_cast<int>(k) + 1;
    if (!only.empty() && !only.count(id)) continue;
    Outcome o;
    try {
      o = criteria[k].second();
    } catch (const std::exception& e) {
      o = {false, false, std::string("exception: ") + e.what()};
    }
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << id << ": " << criteria[k].first << " (" << o.detail
              << ")" << std::endl;
    if (!o.pass) ++(o.blocked ? blocked : failed);
  }
  if (failed) return 1;
  return blocked ? 77 : 0;
}
