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

#ifndef PATCHGUARD_HARNESS_H_
#define PATCHGUARD_HARNESS_H_

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "patchguard/growdetect.h"
#include "patchguard/patchforge.h"
#include "patchguard/sigdefense.h"

namespace patchguard {

enum class Label { kAdversarial, kBenign };
enum class AttackKind { kOriginal, kAdjusted, kTshirt, kUpc, kNone };
enum class Method { kSigDefense, kGrowDetect };

const char* to_string(Label l);
const char* to_string(AttackKind a);
const char* to_string(Method m);
Label label_from_string(const std::string& s);
AttackKind attack_from_string(const std::string& s);
Method method_from_string(const std::string& s);

struct ManifestEntry {
  std::filesystem::path image;
  Label label = Label::kBenign;
  AttackKind attack = AttackKind::kNone;
  std::optional<std::filesystem::path> patch_mask;
  std::string set = "default";
  std::vector<BoxF> persons;
};

/// One JSON object per line: {"image", "label", "attack", "patch_mask"?, "set"?, "persons"?}.
/// Relative paths resolve against the manifest directory.
std::vector<ManifestEntry> parse_manifest(std::istream& in, const std::filesystem::path& base_dir);
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);

using DetectorFactory = std::function<std::unique_ptr<Detector>()>;

struct EvalConfig {
  Method method = Method::kGrowDetect;
  FilterConfig filter;
  GrowConfig grow;
  int workers = 1;
  bool record_timing = false;  // wall-clock fields make reports non-reproducible
};

struct EvalRow {
  size_t index = 0;
  std::string image;
  std::string set;
  Label label = Label::kBenign;
  AttackKind attack = AttackKind::kNone;
  Label predicted = Label::kBenign;
  bool correct = false;
  bool failed = false;
  std::string error;
  std::string detail;  // method-specific: inconsistency type or recovered flag
  int steps = 0;
  double seconds = 0.0;
};

struct SetSummary {
  std::string name;
  int adversarial = 0;  // examples predicted adversarial
  int benign = 0;       // examples predicted benign
  int correct = 0;
  int failed = 0;
  std::optional<double> accuracy;
  double mean_seconds = 0.0;
};

struct EvalReport {
  Method method = Method::kGrowDetect;
  bool record_timing = false;
  std::vector<EvalRow> rows;
  std::vector<SetSummary> sets;  // sorted by name
  SetSummary overall;
  nlohmann::json config;
};

/// Evaluates every entry on a pool of workers, each with its own detector.
EvalReport run_eval(const std::vector<ManifestEntry>& manifest, const DetectorFactory& factory,
                    const EvalConfig& config);

/// Rebuilds the per-set and overall summaries from the rows.
void summarize(EvalReport& report);

std::string report_csv(const EvalReport& report);
nlohmann::json report_json(const EvalReport& report);

nlohmann::json to_json(const RegionRect& r);
nlohmann::json to_json(const Detection& d);
nlohmann::json to_json(const GrowthTrace& trace);
nlohmann::json to_json(const DefenseVerdict& verdict, bool record_timing);

/// One annotated frame per step plus a final verdict frame.
std::vector<RasterImage> render_trace(const GrowthTrace& trace, const RasterImage& image);

/// Writes render_trace frames as step_000.png ... into `dir`.
void write_trace_frames(const GrowthTrace& trace, const RasterImage& image, const std::filesystem::path& dir);

/// Patch PNG plus a JSON sidecar (`<png>.json`) holding provenance and metadata.
void save_patch(const Patch& patch, const std::filesystem::path& png, const nlohmann::json& metadata);
Patch load_patch(const std::filesystem::path& png);

}  // namespace patchguard

#endif  // PATCHGUARD_HARNESS_H_
