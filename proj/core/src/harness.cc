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

#include "patchguard/harness.h"

#include <atomic>
#include <chrono>
#include <fstream>
#include <iomanip>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "patchguard/image_io.h"

namespace patchguard {

namespace {

template <typename E, size_t N>
E parse_enum(const std::string& s, const std::pair<E, const char*> (&table)[N], const char* what) {
  for (const auto& [value, name] : table)
    if (s == name) return value;
  throw ParameterError(std::string("unknown ") + what + ": " + s);
}

template <typename E, size_t N>
const char* enum_name(E v, const std::pair<E, const char*> (&table)[N]) {
  for (const auto& [value, name] : table)
    if (v == value) return name;
  return "unknown";
}

constexpr std::pair<Label, const char*> kLabels[] = {{Label::kAdversarial, "adversarial"}, {Label::kBenign, "benign"}};
constexpr std::pair<AttackKind, const char*> kAttacks[] = {{AttackKind::kOriginal, "original"},
                                                          {AttackKind::kAdjusted, "adjusted"},
                                                          {AttackKind::kTshirt, "tshirt"},
                                                          {AttackKind::kUpc, "upc"},
                                                          {AttackKind::kNone, "none"}};
constexpr std::pair<Method, const char*> kMethods[] = {{Method::kSigDefense, "sigdefense"},
                                                      {Method::kGrowDetect, "growdetect"}};

int count_class(const std::vector<Detection>& dets, int class_id) {
  int n = 0;
  for (const Detection& d : dets) n += d.class_id == class_id;
  return n;
}

EvalRow evaluate_entry(const Detector& detector, const ManifestEntry& entry, const EvalConfig& config) {
  EvalRow row;
  row.image = entry.image.string();
  row.set = entry.set;
  row.label = entry.label;
  row.attack = entry.attack;
  const auto start = std::chrono::steady_clock::now();
  try {
    const RasterImage image = read_image(entry.image);
    if (config.method == Method::kSigDefense) {
      const DefenseVerdict v = defend(detector, image, config.filter);
      const int cls = detector.class_index(config.filter.target_class);
      row.predicted = v.recovered ? Label::kAdversarial : Label::kBenign;
      row.detail = v.recovered ? "recovered" : "not-recovered";
      if (entry.label == Label::kAdversarial) {
        row.correct = v.recovered;
      } else {
        const int before = count_class(v.detections_before, cls);
        const int after = count_class(v.detections_after, cls);
        row.correct = after > 0 || after == before;
      }
    } else {
      const GrowthTrace t = run_growdetect(detector, image, config.grow);
      if (t.aborted) throw BackendError(t.error);
      row.predicted = t.verdict == Verdict::kAdversarial ? Label::kAdversarial : Label::kBenign;
      row.detail = to_string(t.inconsistency);
      row.steps = static_cast<int>(t.steps.size());
      row.correct = row.predicted == entry.label;
    }
  } catch (const std::exception& e) {
    row.failed = true;
    row.correct = false;
    row.error = e.what();
  }
  row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return row;
}

void add_to(SetSummary& s, const EvalRow& row) {
  if (row.failed) {
    ++s.failed;
    return;
  }
  (row.predicted == Label::kAdversarial ? s.adversarial : s.benign) += 1;
  s.correct += row.correct;
  s.mean_seconds += row.seconds;
}

void finish(SetSummary& s) {
  const int n = s.adversarial + s.benign;
  if (n > 0) {
    s.accuracy = static_cast<double>(s.correct) / n;
    s.mean_seconds /= n;
  } else {
    s.accuracy.reset();
    s.mean_seconds = 0.0;
  }
}

nlohmann::json summary_json(const SetSummary& s, bool record_timing) {
  nlohmann::json j = {{"set", s.name},       {"adversarial", s.adversarial}, {"benign", s.benign},
                      {"correct", s.correct}, {"failed", s.failed}};
  j["accuracy"] = s.accuracy ? nlohmann::json(*s.accuracy) : nlohmann::json("n/a");
  if (record_timing) j["mean_seconds"] = s.mean_seconds;
  return j;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

const char* to_string(Label l) { return enum_name(l, kLabels); }
const char* to_string(AttackKind a) { return enum_name(a, kAttacks); }
const char* to_string(Method m) { return enum_name(m, kMethods); }
Label label_from_string(const std::string& s) { return parse_enum(s, kLabels, "label"); }
AttackKind attack_from_string(const std::string& s) { return parse_enum(s, kAttacks, "attack kind"); }
Method method_from_string(const std::string& s) { return parse_enum(s, kMethods, "method"); }

std::vector<ManifestEntry> parse_manifest(std::istream& in, const std::filesystem::path& base_dir) {
  std::vector<ManifestEntry> out;
  std::string line;
  int line_no = 0;
  auto resolve = [&](const std::string& p) {
    const std::filesystem::path path(p);
    return path.is_absolute() ? path : base_dir / path;
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const nlohmann::json j = nlohmann::json::parse(line);
      ManifestEntry e;
      e.image = resolve(j.at("image").get<std::string>());
      e.label = label_from_string(j.at("label").get<std::string>());
      e.attack = attack_from_string(j.value("attack", e.label == Label::kBenign ? "none" : "original"));
      if (j.contains("patch_mask")) e.patch_mask = resolve(j["patch_mask"].get<std::string>());
      e.set = j.value("set", std::string("default"));
      if (j.contains("persons"))
        for (const auto& b : j["persons"]) {
          const auto v = b.get<std::vector<double>>();
          if (v.size() != 4) throw ParameterError("person box needs [x0, y0, x1, y1]");
          e.persons.push_back({v[0], v[1], v[2], v[3]});
        }
      out.push_back(std::move(e));
    } catch (const nlohmann::json::exception& ex) {
      throw ParameterError("manifest line " + std::to_string(line_no) + ": " + ex.what());
    } catch (const ParameterError& ex) {
      throw ParameterError("manifest line " + std::to_string(line_no) + ": " + ex.what());
    }
  }
  return out;
}

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParameterError("cannot open manifest: " + path.string());
  return parse_manifest(in, path.parent_path());
}

EvalReport run_eval(const std::vector<ManifestEntry>& manifest, const DetectorFactory& factory,
                    const EvalConfig& config) {
  if (config.workers < 1) throw ParameterError("workers must be positive");
  EvalReport report;
  report.method = config.method;
  report.record_timing = config.record_timing;
  report.rows.resize(manifest.size());

  std::atomic<size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto work = [&] {
    try {
      const std::unique_ptr<Detector> detector = factory();
      for (size_t i = next++; i < manifest.size(); i = next++) {
        report.rows[i] = evaluate_entry(*detector, manifest[i], config);
        report.rows[i].index = i;
      }
    } catch (...) {
      const std::lock_guard lock(failure_mutex);
      if (!failure) failure = std::current_exception();
    }
  };
  const int n = std::max(1, std::min<int>(config.workers, static_cast<int>(manifest.size())));
  std::vector<std::thread> pool;
  for (int w = 1; w < n; ++w) pool.emplace_back(work);
  work();
  for (std::thread& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
  summarize(report);
  return report;
}

void summarize(EvalReport& report) {
  std::map<std::string, SetSummary> sets;
  report.overall = SetSummary{};
  report.overall.name = "all";
  for (const EvalRow& row : report.rows) {
    SetSummary& s = sets[row.set];
    s.name = row.set;
    add_to(s, row);
    add_to(report.overall, row);
  }
  report.sets.clear();
  for (auto& [name, s] : sets) {
    finish(s);
    report.sets.push_back(s);
  }
  finish(report.overall);
}

std::string report_csv(const EvalReport& report) {
  std::ostringstream out;
  out << "index,set,image,label,attack,predicted,correct,failed,detail,steps";
  if (report.record_timing) out << ",seconds";
  out << "\n";
  for (const EvalRow& r : report.rows) {
    out << r.index << ',' << csv_field(r.set) << ',' << csv_field(r.image) << ',' << to_string(r.label) << ','
        << to_string(r.attack) << ',' << (r.failed ? "" : to_string(r.predicted)) << ',' << (r.correct ? 1 : 0) << ','
        << (r.failed ? 1 : 0) << ',' << csv_field(r.failed ? r.error : r.detail) << ',' << r.steps;
    if (report.record_timing) out << ',' << std::fixed << std::setprecision(6) << r.seconds << std::defaultfloat;
    out << "\n";
  }
  return out.str();
}

nlohmann::json report_json(const EvalReport& report) {
  nlohmann::json j;
  j["method"] = to_string(report.method);
  j["overall"] = summary_json(report.overall, report.record_timing);
  j["sets"] = nlohmann::json::array();
  for (const SetSummary& s : report.sets) j["sets"].push_back(summary_json(s, report.record_timing));
  j["rows"] = nlohmann::json::array();
  for (const EvalRow& r : report.rows) {
    nlohmann::json row = {{"index", r.index},   {"set", r.set},         {"image", r.image},
                          {"label", to_string(r.label)}, {"attack", to_string(r.attack)}, {"correct", r.correct},
                          {"failed", r.failed}, {"steps", r.steps}};
    if (r.failed) {
      row["error"] = r.error;
    } else {
      row["predicted"] = to_string(r.predicted);
      row["detail"] = r.detail;
    }
    if (report.record_timing) row["seconds"] = r.seconds;
    j["rows"].push_back(std::move(row));
  }
  if (!report.config.is_null()) j["config"] = report.config;
  return j;
}

nlohmann::json to_json(const RegionRect& r) {
  return {{"row_start", r.row_start}, {"row_end", r.row_end}, {"col_start", r.col_start}, {"col_end", r.col_end}};
}

nlohmann::json to_json(const Detection& d) {
  return {{"class", d.class_name},
          {"class_id", d.class_id},
          {"score", d.score},
          {"objectness", d.objectness},
          {"class_prob", d.class_prob},
          {"bbox", {d.bbox.x0, d.bbox.y0, d.bbox.x1, d.bbox.y1}}};
}

nlohmann::json to_json(const GrowthTrace& trace) {
  nlohmann::json j;
  j["mode"] = to_string(trace.mode);
  j["grid_size"] = trace.grid_size;
  j["conf_threshold"] = trace.conf_threshold;
  j["seed"] = to_json(trace.seed);
  j["verdict"] = to_string(trace.verdict);
  j["inconsistency"] = to_string(trace.inconsistency);
  j["last_detected_region"] = trace.last_detected_region ? to_json(*trace.last_detected_region) : nlohmann::json();
  j["seeds_examined"] = trace.seeds_examined;
  j["detector_calls"] = trace.detector_calls;
  j["aborted"] = trace.aborted;
  if (trace.aborted) j["error"] = trace.error;
  j["steps"] = nlohmann::json::array();
  for (const GrowthStep& s : trace.steps) {
    j["steps"].push_back({{"region", to_json(s.region)},
                          {"direction", s.direction ? to_string(*s.direction) : "seed"},
                          {"mode", to_string(s.mode)},
                          {"merged_lines", s.merged_lines},
                          {"gain", s.gain},
                          {"prob", s.prob},
                          {"detected", s.detected},
                          {"person_count", s.person_count},
                          {"label", s.label},
                          {"classes", s.detected_classes}});
  }
  return j;
}

nlohmann::json to_json(const DefenseVerdict& verdict, bool record_timing) {
  nlohmann::json j;
  j["recovered"] = verdict.recovered;
  j["detections_before"] = nlohmann::json::array();
  for (const Detection& d : verdict.detections_before) j["detections_before"].push_back(to_json(d));
  j["detections_after"] = nlohmann::json::array();
  for (const Detection& d : verdict.detections_after) j["detections_after"].push_back(to_json(d));
  if (record_timing) j["elapsed_ms"] = verdict.elapsed_ms;
  return j;
}

void save_patch(const Patch& patch, const std::filesystem::path& png, const nlohmann::json& metadata) {
  write_image(png, patch.raster());
  nlohmann::json side = metadata;
  side["provenance"] = to_string(patch.provenance);
  side["size"] = patch.size();
  side["gradcam_sum"] = patch.gradcam_sum;
  std::ofstream out(png.string() + ".json");
  if (!out) throw BackendError("cannot write patch metadata for " + png.string());
  out << side.dump(2) << "\n";
}

Patch load_patch(const std::filesystem::path& png) {
  Patch p = Patch::from_raster(read_image(png));
  const std::filesystem::path side = png.string() + ".json";
  if (std::filesystem::exists(side)) {
    std::ifstream in(side);
    const nlohmann::json j = nlohmann::json::parse(in);
    if (j.contains("gradcam_sum")) p.gradcam_sum = j["gradcam_sum"].get<double>();
    if (j.contains("provenance")) p.provenance = provenance_from_string(j["provenance"].get<std::string>());
  }
  return p;
}

}  // namespace patchguard
