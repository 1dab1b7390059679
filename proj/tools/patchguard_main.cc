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

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "patchguard/config.h"
#include "patchguard/gradcam.h"
#include "patchguard/grid_detector.h"
#include "patchguard/growdetect.h"
#include "patchguard/harness.h"
#include "patchguard/image_io.h"
#include "patchguard/patchforge.h"
#include "patchguard/sigdefense.h"

#ifndef PATCHGUARD_DEFAULT_ASSET_DIR
#define PATCHGUARD_DEFAULT_ASSET_DIR "assets"
#endif

namespace pg = patchguard;
using nlohmann::json;

namespace {

struct Settings {
  pg::KeyValueConfig kv;
  std::filesystem::path assets;

  std::filesystem::path asset(const std::string& key, const std::string& file) const {
    return kv.get_string(key, (assets / file).string());
  }
};

Settings load_settings(const std::optional<std::string>& config_path) {
  Settings s;
  if (const auto path = pg::resolve_config_path(config_path)) s.kv = pg::KeyValueConfig::load(*path);
  s.assets = s.kv.get_string("assets_dir", PATCHGUARD_DEFAULT_ASSET_DIR);
  return s;
}

pg::DetectorConfig detector_config(const Settings& s) {
  pg::DetectorConfig c;
  c.conf_threshold = s.kv.get_double("conf_threshold", c.conf_threshold);
  c.nms_threshold = s.kv.get_double("nms_threshold", c.nms_threshold);
  c.target_class = s.kv.get_string("target_class", c.target_class);
  const std::string reduction = s.kv.get_string("gradcam_reduction", "max");
  if (reduction == "max") {
    c.gradcam_reduction = pg::Reduction::kMax;
  } else if (reduction == "sum") {
    c.gradcam_reduction = pg::Reduction::kSum;
  } else {
    throw pg::ParameterError("gradcam_reduction must be max or sum");
  }
  return c;
}

std::unique_ptr<pg::Detector> make_detector(const Settings& s) {
  const auto weights = s.kv.find("weights");
  if (!weights) throw pg::ParameterError("no weights configured: set weights=<file> or weights=random:<seed>");
  std::optional<int> input;
  if (s.kv.contains("input_size")) input = static_cast<int>(s.kv.get_int("input_size", 608));
  return pg::load_grid_detector(s.asset("cfg", "yolov2.cfg"), *weights, detector_config(s),
                                pg::read_class_names(s.asset("names", "coco.names")), input);
}

void emit_json(const json& j, const std::string& path) {
  if (path.empty()) {
    std::cout << j.dump(2) << "\n";
    return;
  }
  const std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(p);
  if (!out) throw pg::BackendError("cannot write " + path);
  out << j.dump(2) << "\n";
}

void write_text(const std::string& path, const std::string& text) {
  const std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(p);
  if (!out) throw pg::BackendError("cannot write " + path);
  out << text;
}

pg::Rgb parse_color(const std::string& text) {
  std::string t = text;
  std::replace(t.begin(), t.end(), ',', ' ');
  std::istringstream in(t);
  int r = 0, g = 0, b = 0;
  if (!(in >> r >> g >> b) || r < 0 || r > 255 || g < 0 || g > 255 || b < 0 || b > 255) {
    throw pg::ParameterError("colour must be R,G,B in 0..255: " + text);
  }
  return {static_cast<std::uint8_t>(r), static_cast<std::uint8_t>(g), static_cast<std::uint8_t>(b)};
}

pg::BoxF parse_box(const std::string& text) {
  std::string t = text;
  std::replace(t.begin(), t.end(), ',', ' ');
  std::istringstream in(t);
  pg::BoxF b;
  if (!(in >> b.x0 >> b.y0 >> b.x1 >> b.y1)) throw pg::ParameterError("box must be x0,y0,x1,y1: " + text);
  return b;
}

json box_json(const pg::BoxF& b) { return {b.x0, b.y0, b.x1, b.y1}; }

// Largest target-class detection, used when no box is supplied.
std::optional<pg::BoxF> largest_person(const pg::Detector& det, const pg::RasterImage& image) {
  std::optional<pg::BoxF> best;
  for (const pg::Detection& d : det.detect(image))
    if (d.class_id == det.target_class_id() && (!best || d.bbox.area() > best->area())) best = d.bbox;
  return best;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"patchguard: adversarial patch generation and detection for person detectors"};
  app.require_subcommand(1);
  std::string config_path;
  app.add_option("--config", config_path, "key = value settings file (overrides $PATCHGUARD_CONFIG)");

  // filter-defend
  auto* fd = app.add_subcommand("filter-defend", "gray out the top Grad-CAM pixels and re-detect");
  std::string fd_input, fd_fill = "128,128,128", fd_out_filtered, fd_out_json;
  double fd_n = 15.0;
  bool fd_timing = false;
  fd->add_option("--input", fd_input, "input image")->required();
  fd->add_option("--n", fd_n, "percent of pixels to fill")->check(CLI::Range(0.0, 100.0));
  fd->add_option("--fill-color", fd_fill, "fill colour R,G,B");
  fd->add_option("--out-filtered", fd_out_filtered, "filtered image output");
  fd->add_option("--out-json", fd_out_json, "verdict JSON (stdout when omitted)");
  fd->add_flag("--record-timing", fd_timing, "include wall-clock timing in the JSON");

  // grow-detect
  auto* gd = app.add_subcommand("grow-detect", "region-growing consistency check");
  std::string gd_input, gd_trace_dir, gd_out_json;
  double gd_theta = 0.05;
  int gd_seeds = 1;
  bool gd_class_check = false;
  gd->add_option("--input", gd_input, "input image")->required();
  gd->add_option("--theta", gd_theta, "gain threshold")->check(CLI::Range(0.0, 1.0));
  gd->add_option("--seeds", gd_seeds, "maximum number of growth seeds")->check(CLI::PositiveNumber);
  gd->add_flag("--class-check", gd_class_check, "flag label changes of the seed object");
  gd->add_option("--trace-dir", gd_trace_dir, "write annotated step frames here");
  gd->add_option("--out-json", gd_out_json, "trace JSON (stdout when omitted)");

  // gen-patch
  auto* gp = app.add_subcommand("gen-patch", "train an adversarial patch against the detector");
  std::string gp_manifest, gp_out, gp_out_json;
  pg::PatchTrainConfig gp_cfg;
  gp_cfg.iterations = 200;
  gp->add_option("--manifest", gp_manifest, "JSONL manifest of training images")->required();
  gp->add_option("--out", gp_out, "patch PNG (a .json sidecar is written next to it)")->required();
  gp->add_option("--iterations", gp_cfg.iterations)->check(CLI::PositiveNumber);
  gp->add_option("--batch", gp_cfg.batch_size)->check(CLI::PositiveNumber);
  gp->add_option("--patch-size", gp_cfg.patch_size)->check(CLI::PositiveNumber);
  gp->add_option("--alpha", gp_cfg.alpha, "total variation weight");
  gp->add_option("--beta", gp_cfg.beta, "non-printability weight");
  gp->add_option("--lr", gp_cfg.learning_rate);
  gp->add_option("--scale", gp_cfg.transforms.scale_fraction, "patch width / person box width");
  std::optional<std::uint64_t> gp_seed;
  gp->add_option("--seed", gp_seed);
  gp->add_option("--out-json", gp_out_json, "loss history JSON");

  // adjust-patch
  auto* ap = app.add_subcommand("adjust-patch", "reshape a patch so its Grad-CAM signature fades");
  std::string ap_patch, ap_input, ap_box, ap_out, ap_out_json;
  pg::AdjustConfig ap_cfg;
  double ap_n = 15.0;
  ap->add_option("--patch", ap_patch, "patch PNG")->required();
  ap->add_option("--input", ap_input, "example image the patch is placed on")->required();
  ap->add_option("--box", ap_box, "person box x0,y0,x1,y1 (largest detection when omitted)");
  double ap_scale = 0.2;
  ap->add_option("--scale", ap_scale, "patch width / person box width");
  ap->add_option("--epsilon", ap_cfg.epsilon, "step size in normalised units");
  ap->add_option("--factor", ap_cfg.magnitude_factor, "magnitude dominance factor");
  ap->add_option("--target", ap_cfg.target_reduction, "required relative Grad-CAM reduction");
  ap->add_option("--max-iter", ap_cfg.max_iterations)->check(CLI::PositiveNumber);
  ap->add_option("--n", ap_n, "filter percent of the defense probe")->check(CLI::Range(0.0, 100.0));
  ap->add_option("--out", ap_out, "adjusted patch PNG")->required();
  ap->add_option("--out-json", ap_out_json, "iteration log JSON");

  // simulate
  auto* sm = app.add_subcommand("simulate", "blur and darken a patch like print and capture would");
  std::string sm_patch, sm_out, sm_out_json;
  pg::SimulationConfig sm_cfg;
  std::uint64_t sm_seed = 0;
  sm->add_option("--patch", sm_patch, "patch PNG")->required();
  sm->add_option("--out", sm_out, "simulated patch PNG")->required();
  sm->add_option("--blur", sm_cfg.blur_sigma, "Gaussian sigma (<= 0 disables)");
  sm->add_option("--brightness", sm_cfg.brightness_delta, "brightness offset in 0..255 levels");
  sm->add_option("--jitter", sm_cfg.brightness_sigma, "standard deviation of the brightness drop");
  sm->add_option("--seed", sm_seed);
  sm->add_option("--out-json", sm_out_json, "summary JSON");

  // eval
  auto* ev = app.add_subcommand("eval", "evaluate a defense over a manifest");
  std::string ev_manifest, ev_method = "growdetect", ev_csv, ev_json;
  pg::EvalConfig ev_cfg;
  ev->add_option("--manifest", ev_manifest, "JSONL manifest")->required();
  ev->add_option("--method", ev_method, "sigdefense or growdetect")->check(CLI::IsMember({"sigdefense", "growdetect"}));
  ev->add_option("--workers", ev_cfg.workers)->check(CLI::PositiveNumber);
  ev->add_option("--n", ev_cfg.filter.percent)->check(CLI::Range(0.0, 100.0));
  ev->add_option("--theta", ev_cfg.grow.gain_threshold)->check(CLI::Range(0.0, 1.0));
  ev->add_option("--seeds", ev_cfg.grow.max_seeds)->check(CLI::PositiveNumber);
  ev->add_flag("--class-check", ev_cfg.grow.class_check);
  ev->add_flag("--record-timing", ev_cfg.record_timing, "include wall-clock timing in the reports");
  ev->add_option("--out-csv", ev_csv, "per-example CSV");
  ev->add_option("--out-json", ev_json, "summary JSON (stdout when omitted)");

  // heatmap
  auto* hm = app.add_subcommand("heatmap", "render the Grad-CAM score map of a class");
  std::string hm_input, hm_class, hm_out, hm_out_json;
  hm->add_option("input", hm_input, "input image")->required();
  hm->add_option("class", hm_class, "target class name")->required();
  hm->add_option("output", hm_out, "output PNG")->required();
  hm->add_option("--out-json", hm_out_json, "score summary JSON");

  CLI11_PARSE(app, argc, argv);

  try {
    const Settings settings = load_settings(config_path.empty() ? std::nullopt : std::optional(config_path));
    const std::uint64_t seed = static_cast<std::uint64_t>(settings.kv.get_int("seed", 0));

    if (*fd) {
      const auto det = make_detector(settings);
      pg::FilterConfig fc;
      fc.percent = fd_n;
      fc.fill_color = parse_color(fd_fill);
      fc.target_class = det->config().target_class;
      const pg::RasterImage image = pg::read_image(fd_input);
      const pg::DefenseVerdict v = pg::defend(*det, image, fc);
      if (!fd_out_filtered.empty()) pg::write_image(fd_out_filtered, v.filtered_image);
      json j = pg::to_json(v, fd_timing);
      j["input"] = fd_input;
      j["percent"] = fc.percent;
      j["filled_pixels"] = pg::pixel_budget(image.height(), image.width(), fc.percent);
      emit_json(j, fd_out_json);
    } else if (*gd) {
      const auto det = make_detector(settings);
      pg::GrowConfig gc;
      gc.gain_threshold = gd_theta;
      gc.max_seeds = gd_seeds;
      gc.class_check = gd_class_check;
      const pg::RasterImage image = pg::read_image(gd_input);
      const pg::GrowthTrace trace = pg::run_growdetect(*det, image, gc);
      if (!gd_trace_dir.empty()) pg::write_trace_frames(trace, image, gd_trace_dir);
      json j = pg::to_json(trace);
      j["input"] = gd_input;
      j["theta"] = gd_theta;
      emit_json(j, gd_out_json);
      if (trace.aborted) {
        std::cerr << "error: " << trace.error << "\n";
        return 1;
      }
    } else if (*gp) {
      const auto det = make_detector(settings);
      gp_cfg.seed = gp_seed.value_or(seed);
      if (gp_cfg.beta > 0) gp_cfg.palette = pg::read_palette(settings.asset("palette", "printable_palette.txt"));
      std::vector<pg::TrainingSample> samples;
      for (const pg::ManifestEntry& e : pg::read_manifest(gp_manifest)) {
        pg::TrainingSample s{pg::read_image(e.image), e.persons};
        if (s.persons.empty())
          for (const pg::Detection& d : det->detect(s.image))
            if (d.class_id == det->target_class_id()) s.persons.push_back(d.bbox);
        samples.push_back(std::move(s));
      }
      samples = pg::prepare_training_set(*det, std::move(samples));
      const pg::TrainResult r = pg::train_patch(*det, samples, gp_cfg);
      json history = json::array();
      for (const pg::LossRecord& l : r.history)
        history.push_back({{"total", l.total}, {"objectness", l.objectness}, {"tv", l.tv}, {"nps", l.nps}});
      const json meta = {{"iterations", gp_cfg.iterations}, {"batch", gp_cfg.batch_size},
                         {"alpha", gp_cfg.alpha},           {"beta", gp_cfg.beta},
                         {"learning_rate", gp_cfg.learning_rate}, {"seed", gp_cfg.seed},
                         {"scale", gp_cfg.transforms.scale_fraction}};
      pg::save_patch(r.patch, gp_out, meta);
      if (!gp_out_json.empty()) emit_json({{"patch", gp_out}, {"config", meta}, {"history", history}}, gp_out_json);
    } else if (*ap) {
      const auto det = make_detector(settings);
      pg::Patch patch = pg::load_patch(ap_patch);
      pg::AdjustExample ex;
      ex.image = pg::read_image(ap_input);
      ex.transform.scale_fraction = ap_scale;
      if (!ap_box.empty()) {
        ex.person = parse_box(ap_box);
      } else if (const auto b = largest_person(*det, ex.image)) {
        ex.person = *b;
      } else {
        throw pg::ParameterError("no person detected in " + ap_input + "; pass --box");
      }
      ap_cfg.seed = seed;
      pg::FilterConfig fc;
      fc.percent = ap_n;
      fc.target_class = det->config().target_class;
      const pg::AdjustResult r = pg::adjust_patch(*det, patch, ex, ap_cfg, pg::signature_defense_probe(*det, ex, fc));
      json log = json::array();
      for (const pg::AdjustIteration& it : r.log)
        log.push_back({{"iteration", it.iteration}, {"gradcam_sum", it.gradcam_sum}, {"objectness", it.objectness},
                       {"eligible", it.eligible}, {"reduction_met", it.reduction_met},
                       {"probe_passed", it.probe_passed}});
      const json meta = {{"source", ap_patch},       {"epsilon", ap_cfg.epsilon},
                         {"factor", ap_cfg.magnitude_factor}, {"target_reduction", ap_cfg.target_reduction},
                         {"box", box_json(ex.person)}, {"converged", r.converged},
                         {"initial_gradcam_sum", r.initial_gradcam_sum}};
      pg::save_patch(r.patch, ap_out, meta);
      if (!r.converged) std::cerr << "warning: adjustment did not converge in " << ap_cfg.max_iterations << " iterations\n";
      if (!ap_out_json.empty()) emit_json({{"patch", ap_out}, {"config", meta}, {"log", log}}, ap_out_json);
    } else if (*sm) {
      const pg::Patch patch = pg::load_patch(sm_patch);
      std::mt19937_64 rng(sm_seed);
      const pg::Patch out = pg::simulate_physical(patch, sm_cfg, &rng);
      const pg::RasterImage before = patch.raster();
      const pg::RasterImage after = out.raster();
      auto mean = [](const pg::RasterImage& im) {
        double s = 0;
        for (auto v : im.bytes()) s += v;
        return s / static_cast<double>(im.bytes().size());
      };
      const json meta = {{"source", sm_patch},
                         {"blur_sigma", sm_cfg.blur_sigma},
                         {"brightness_delta", sm_cfg.brightness_delta},
                         {"brightness_sigma", sm_cfg.brightness_sigma},
                         {"seed", sm_seed}};
      pg::save_patch(out, sm_out, meta);
      if (!sm_out_json.empty()) {
        emit_json({{"patch", sm_out},
                   {"config", meta},
                   {"mean_before", mean(before)},
                   {"mean_after", mean(after)},
                   {"tv_before", pg::total_variation(before)},
                   {"tv_after", pg::total_variation(after)}},
                  sm_out_json);
      }
    } else if (*ev) {
      ev_cfg.method = pg::method_from_string(ev_method);
      const auto manifest = pg::read_manifest(ev_manifest);
      {
        const auto probe = make_detector(settings);
        ev_cfg.filter.target_class = probe->config().target_class;
      }
      pg::EvalReport report = pg::run_eval(manifest, [&] { return make_detector(settings); }, ev_cfg);
      report.config = {{"method", ev_method},
                       {"n", ev_cfg.filter.percent},
                       {"theta", ev_cfg.grow.gain_threshold},
                       {"seeds", ev_cfg.grow.max_seeds},
                       {"class_check", ev_cfg.grow.class_check},
                       {"settings", settings.kv.values()}};
      if (!ev_csv.empty()) write_text(ev_csv, pg::report_csv(report));
      emit_json(pg::report_json(report), ev_json);
    } else if (*hm) {
      const auto det = make_detector(settings);
      const pg::RasterImage image = pg::read_image(hm_input);
      const pg::GradCamResult cam = pg::pixel_scores(*det, image, hm_class);
      pg::write_image(hm_out, pg::heatmap_render(cam, image));
      if (!hm_out_json.empty()) {
        double mx = 0, sum = 0;
        for (double v : cam.pixel_scores.values()) {
          mx = std::max(mx, v);
          sum += v;
        }
        emit_json({{"input", hm_input}, {"class", hm_class}, {"output", hm_out}, {"max", mx}, {"sum", sum},
                   {"coarse_rows", cam.coarse.rows()}, {"coarse_cols", cam.coarse.cols()}},
                  hm_out_json);
      }
    }
  } catch (const pg::ParameterError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
