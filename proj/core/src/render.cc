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

#include <cstdio>

#include <opencv2/imgproc.hpp>

#include "patchguard/harness.h"
#include "patchguard/image_io.h"

namespace patchguard {

namespace {

const cv::Scalar kGreen(0, 200, 0);
const cv::Scalar kRed(230, 0, 0);
const cv::Scalar kYellow(255, 220, 0);
const cv::Scalar kWhite(255, 255, 255);
const cv::Scalar kBlack(0, 0, 0);

// Wraps the raster bytes; colours above are in R,G,B order to match.
cv::Mat as_mat(RasterImage& image) {
  return cv::Mat(image.height(), image.width(), CV_8UC3, image.bytes().data());
}

int thickness_for(const RasterImage& image) { return std::max(1, std::min(image.height(), image.width()) / 200); }

void outline(cv::Mat& m, const PixelRect& r, const cv::Scalar& color, int thickness) {
  cv::rectangle(m, cv::Point(r.col, r.row), cv::Point(r.right() - 1, r.bottom() - 1), color, thickness);
}

void banner(cv::Mat& m, const std::string& text, const cv::Scalar& color) {
  const double scale = std::max(0.4, m.cols / 900.0);
  int baseline = 0;
  const cv::Size size = cv::getTextSize(text, cv::FONT_HERSHEY_SIMPLEX, scale, 1, &baseline);
  cv::rectangle(m, cv::Point(0, 0), cv::Point(std::min(m.cols - 1, size.width + 8), size.height + baseline + 8), kBlack,
                cv::FILLED);
  cv::putText(m, text, cv::Point(4, size.height + 4), cv::FONT_HERSHEY_SIMPLEX, scale, color, 1, cv::LINE_8);
}

void arrow(cv::Mat& m, const PixelRect& r, Direction d, const cv::Scalar& color, int thickness) {
  const cv::Point center(r.col + r.width / 2, r.row + r.height / 2);
  const int len = std::max(4, std::min(r.width, r.height) / 2);
  cv::Point tip = center;
  switch (d) {
    case Direction::kUp:
      tip.y -= len;
      break;
    case Direction::kDown:
      tip.y += len;
      break;
    case Direction::kLeft:
      tip.x -= len;
      break;
    case Direction::kRight:
      tip.x += len;
      break;
  }
  cv::arrowedLine(m, center, tip, color, thickness, cv::LINE_8, 0, 0.3);
}

std::string format_prob(double p) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", p);
  return buf;
}

}  // namespace

std::vector<RasterImage> render_trace(const GrowthTrace& trace, const RasterImage& image) {
  if (trace.steps.empty()) throw ParameterError("cannot render an empty trace");
  const BlockGrid grid = partition_blocks(image, trace.grid_size);
  const int t = thickness_for(image);
  std::vector<RasterImage> frames;
  frames.reserve(trace.steps.size() + 1);
  for (size_t k = 0; k < trace.steps.size(); ++k) {
    const GrowthStep& s = trace.steps[k];
    RasterImage frame = image;
    cv::Mat m = as_mat(frame);
    const PixelRect rect = to_pixel_rect(grid, s.region);
    outline(m, rect, s.detected ? kGreen : kRed, t);
    if (s.direction) arrow(m, rect, *s.direction, kYellow, t);
    std::string text = "step " + std::to_string(k) + " " + (s.direction ? to_string(*s.direction) : "seed") +
                       " prob " + format_prob(s.prob) + (s.detected ? " DETECTED" : " NOT DETECTED");
    if (!s.label.empty()) text += " " + s.label;
    banner(m, text, s.detected ? kGreen : kRed);
    frames.push_back(std::move(frame));
  }
  RasterImage last = image;
  cv::Mat m = as_mat(last);
  if (trace.last_detected_region) outline(m, to_pixel_rect(grid, *trace.last_detected_region), kYellow, t);
  outline(m, to_pixel_rect(grid, trace.steps.back().region), trace.verdict == Verdict::kAdversarial ? kRed : kGreen, t);
  const bool adv = trace.verdict == Verdict::kAdversarial;
  std::string text = adv ? "ADVERSARIAL" : "BENIGN";
  if (adv) text += std::string(" (") + to_string(trace.inconsistency) + ")";
  banner(m, text, adv ? kRed : kGreen);
  frames.push_back(std::move(last));
  return frames;
}

void write_trace_frames(const GrowthTrace& trace, const RasterImage& image, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const std::vector<RasterImage> frames = render_trace(trace, image);
  for (size_t k = 0; k < frames.size(); ++k) {
    char name[32];
    std::snprintf(name, sizeof name, "step_%03zu.png", k);
    write_image(dir / name, frames[k]);
  }
}

}  // namespace patchguard
