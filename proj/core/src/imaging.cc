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

#include "patchguard/imaging.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

namespace patchguard {

namespace {

std::uint8_t clamp_u8(double value) {
  return static_cast<std::uint8_t>(std::clamp(std::lround(value), 0L, 255L));
}

// Reflect-101 index mapping (mirror about the edge sample, edge not repeated).
int reflect101(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

}  // namespace

size_t count_set(const PixelMask& mask) {
  return static_cast<size_t>(std::count_if(mask.values().begin(), mask.values().end(),
                                           [](std::uint8_t v) { return v != 0; }));
}

RasterImage::RasterImage(int height, int width, Rgb fill) : height_(height), width_(width) {
  if (height < 1 || width < 1) {
    throw DimensionError("RasterImage: extent must be at least 1x1, got " + std::to_string(height) +
                         "x" + std::to_string(width));
  }
  data_.resize(static_cast<size_t>(height) * static_cast<size_t>(width) * kChannels);
  for (size_t i = 0; i < data_.size(); i += kChannels) {
    data_[i] = fill.r;
    data_[i + 1] = fill.g;
    data_[i + 2] = fill.b;
  }
}

Rgb RasterImage::pixel(int row, int col) const {
  const size_t o = offset(row, col);
  return {data_[o], data_[o + 1], data_[o + 2]};
}

void RasterImage::set_pixel(int row, int col, Rgb color) {
  const size_t o = offset(row, col);
  data_[o] = color.r;
  data_[o + 1] = color.g;
  data_[o + 2] = color.b;
}

Plane RasterImage::plane(int channel) const {
  Plane out(height_, width_);
  for (int r = 0; r < height_; ++r)
    for (int c = 0; c < width_; ++c) out(r, c) = at(r, c, channel);
  return out;
}

RasterImage crop(const RasterImage& image, const PixelRect& rect) {
  if (rect.height < 1 || rect.width < 1 || rect.row < 0 || rect.col < 0 ||
      rect.bottom() > image.height() || rect.right() > image.width()) {
    throw DimensionError("crop: rectangle outside image");
  }
  RasterImage out(rect.height, rect.width);
  for (int r = 0; r < rect.height; ++r)
    for (int c = 0; c < rect.width; ++c) out.set_pixel(r, c, image.pixel(rect.row + r, rect.col + c));
  return out;
}

RasterImage resize_bilinear(const RasterImage& image, int height, int width) {
  if (height < 1 || width < 1) throw DimensionError("resize_bilinear: target must be at least 1x1");
  if (height == image.height() && width == image.width()) return image;
  RasterImage out(height, width);
  const double sy = static_cast<double>(image.height()) / height;
  const double sx = static_cast<double>(image.width()) / width;
  for (int r = 0; r < height; ++r) {
    const double fy = std::clamp((r + 0.5) * sy - 0.5, 0.0, image.height() - 1.0);
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, image.height() - 1);
    const double wy = fy - y0;
    for (int c = 0; c < width; ++c) {
      const double fx = std::clamp((c + 0.5) * sx - 0.5, 0.0, image.width() - 1.0);
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, image.width() - 1);
      const double wx = fx - x0;
      for (int ch = 0; ch < RasterImage::kChannels; ++ch) {
        const double top = (1 - wx) * image.at(y0, x0, ch) + wx * image.at(y0, x1, ch);
        const double bot = (1 - wx) * image.at(y1, x0, ch) + wx * image.at(y1, x1, ch);
        out.at(r, c, ch) = clamp_u8((1 - wy) * top + wy * bot);
      }
    }
  }
  return out;
}

BlockGrid::BlockGrid(int size, std::vector<Block> blocks) : size_(size), blocks_(std::move(blocks)) {
  if (blocks_.size() != static_cast<size_t>(size) * static_cast<size_t>(size)) {
    throw DimensionError("BlockGrid: expected S*S blocks");
  }
}

std::vector<int> split_extent(int extent, int count) {
  std::vector<int> edges(static_cast<size_t>(count) + 1, 0);
  const int base = extent / count;
  const int extra = extent % count;
  for (int i = 0; i < count; ++i) edges[i + 1] = edges[i] + base + (i < extra ? 1 : 0);
  return edges;
}

BlockGrid partition_blocks(const RasterImage& image, int grid_size) {
  if (grid_size < 2) throw ParameterError("partition_blocks: grid size must be >= 2");
  if (image.height() < grid_size || image.width() < grid_size) {
    throw DimensionError("partition_blocks: image " + std::to_string(image.height()) + "x" +
                         std::to_string(image.width()) + " smaller than " + std::to_string(grid_size) +
                         " pixels per side");
  }
  const auto rows = split_extent(image.height(), grid_size);
  const auto cols = split_extent(image.width(), grid_size);
  std::vector<Block> blocks;
  blocks.reserve(static_cast<size_t>(grid_size) * grid_size);
  for (int r = 0; r < grid_size; ++r) {
    for (int c = 0; c < grid_size; ++c) {
      Block b;
      b.rect = {rows[r], cols[c], rows[r + 1] - rows[r], cols[c + 1] - cols[c]};
      blocks.push_back(b);
    }
  }
  return BlockGrid(grid_size, std::move(blocks));
}

Plane neighborhood_average_plane(const Plane& plane) {
  Plane out(plane.rows(), plane.cols());
  for (int r = 0; r < plane.rows(); ++r) {
    for (int c = 0; c < plane.cols(); ++c) {
      int sum = 0;
      int count = 0;
      for (int dr = -1; dr <= 1; ++dr) {
        for (int dc = -1; dc <= 1; ++dc) {
          if (dr == 0 && dc == 0) continue;
          const int rr = r + dr;
          const int cc = c + dc;
          if (rr < 0 || cc < 0 || rr >= plane.rows() || cc >= plane.cols()) continue;
          sum += plane(rr, cc);
          ++count;
        }
      }
      // round half up in integer arithmetic: floor(sum / count + 1/2)
      out(r, c) = count == 0 ? 0 : static_cast<std::uint8_t>((2 * sum + count) / (2 * count));
    }
  }
  return out;
}

double two_d_entropy(const Plane& plane) {
  if (plane.empty()) return 0.0;
  const Plane avg = neighborhood_average_plane(plane);
  const auto px = plane.values();
  const auto nb = avg.values();
  const double total = static_cast<double>(px.size());
  double entropy = 0.0;
  auto add = [&](std::uint32_t f) {
    const double p = f / total;
    entropy -= p * std::log2(p);
  };
  // Small planes: count runs of sorted pair keys instead of a 64K-bin table.
  if (px.size() < 4096) {
    std::vector<std::uint32_t> keys(px.size());
    for (size_t i = 0; i < px.size(); ++i) keys[i] = static_cast<std::uint32_t>(px[i]) << 8 | nb[i];
    std::sort(keys.begin(), keys.end());
    for (size_t i = 0; i < keys.size();) {
      size_t j = i + 1;
      while (j < keys.size() && keys[j] == keys[i]) ++j;
      add(static_cast<std::uint32_t>(j - i));
      i = j;
    }
    return entropy;
  }
  std::vector<std::uint32_t> freq(256 * 256, 0);
  for (size_t i = 0; i < px.size(); ++i) ++freq[static_cast<size_t>(px[i]) * 256 + nb[i]];
  for (std::uint32_t f : freq)
    if (f != 0) add(f);
  return entropy;
}

double two_d_entropy_rgb(const RasterImage& block) {
  double sum = 0.0;
  for (int c = 0; c < RasterImage::kChannels; ++c) sum += two_d_entropy(block.plane(c));
  return sum / RasterImage::kChannels;
}

RasterImage gaussian_blur(const RasterImage& image, double sigma) {
  if (!(sigma > 0.0)) throw ParameterError("gaussian_blur: sigma must be > 0");
  const int radius = std::max(1, static_cast<int>(std::ceil(2.0 * sigma)));
  std::vector<double> kernel(static_cast<size_t>(2 * radius + 1));
  double norm = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[i + radius] = std::exp(-(i * i) / (2.0 * sigma * sigma));
    norm += kernel[i + radius];
  }
  for (double& k : kernel) k /= norm;

  const int h = image.height();
  const int w = image.width();
  constexpr int kC = RasterImage::kChannels;
  std::vector<double> horiz(static_cast<size_t>(h) * w * kC);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c)
      for (int ch = 0; ch < kC; ++ch) {
        double acc = 0.0;
        for (int k = -radius; k <= radius; ++k) acc += kernel[k + radius] * image.at(r, reflect101(c + k, w), ch);
        horiz[(static_cast<size_t>(r) * w + c) * kC + ch] = acc;
      }

  RasterImage out(h, w);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c)
      for (int ch = 0; ch < kC; ++ch) {
        double acc = 0.0;
        for (int k = -radius; k <= radius; ++k)
          acc += kernel[k + radius] * horiz[(static_cast<size_t>(reflect101(r + k, h)) * w + c) * kC + ch];
        out.at(r, c, ch) = clamp_u8(acc);
      }
  return out;
}

RasterImage brightness_shift(const RasterImage& image, int delta) {
  RasterImage out = image;
  for (auto& v : out.bytes()) v = static_cast<std::uint8_t>(std::clamp(static_cast<int>(v) + delta, 0, 255));
  return out;
}

RasterImage fill_pixels(const RasterImage& image, const PixelMask& mask, Rgb color) {
  if (!mask.same_shape(image.height(), image.width())) {
    throw DimensionError("fill_pixels: mask shape does not match image");
  }
  RasterImage out = image;
  for (int r = 0; r < image.height(); ++r)
    for (int c = 0; c < image.width(); ++c)
      if (mask(r, c)) out.set_pixel(r, c, color);
  return out;
}

namespace {

struct Tap {
  int i0;
  int i1;
  double w1;  // weight of i1; i0 gets 1 - w1
};

Tap corner_aligned_tap(int dst, int dst_extent, int src_extent) {
  if (src_extent == 1 || dst_extent == 1) return {0, 0, 0.0};
  const double pos = static_cast<double>(dst) * (src_extent - 1) / (dst_extent - 1);
  const int i0 = std::min(static_cast<int>(pos), src_extent - 2);
  return {i0, i0 + 1, pos - i0};
}

}  // namespace

ScoreMap bilinear_upsample(const Grid<double>& map, int height, int width) {
  if (map.empty()) throw DimensionError("bilinear_upsample: empty map");
  if (height < 1 || width < 1) throw DimensionError("bilinear_upsample: target must be at least 1x1");
  ScoreMap out(height, width);
  std::vector<Tap> col_taps(static_cast<size_t>(width));
  for (int c = 0; c < width; ++c) col_taps[c] = corner_aligned_tap(c, width, map.cols());
  for (int r = 0; r < height; ++r) {
    const Tap ty = corner_aligned_tap(r, height, map.rows());
    for (int c = 0; c < width; ++c) {
      const Tap& tx = col_taps[c];
      const double top = (1 - tx.w1) * map(ty.i0, tx.i0) + tx.w1 * map(ty.i0, tx.i1);
      const double bot = (1 - tx.w1) * map(ty.i1, tx.i0) + tx.w1 * map(ty.i1, tx.i1);
      out(r, c) = (1 - ty.w1) * top + ty.w1 * bot;
    }
  }
  return out;
}

Grid<double> bilinear_upsample_adjoint(const ScoreMap& fine, int coarse_rows, int coarse_cols) {
  if (coarse_rows < 1 || coarse_cols < 1) throw DimensionError("bilinear_upsample_adjoint: empty coarse grid");
  Grid<double> out(coarse_rows, coarse_cols, 0.0);
  std::vector<Tap> col_taps(static_cast<size_t>(fine.cols()));
  for (int c = 0; c < fine.cols(); ++c) col_taps[c] = corner_aligned_tap(c, fine.cols(), coarse_cols);
  for (int r = 0; r < fine.rows(); ++r) {
    const Tap ty = corner_aligned_tap(r, fine.rows(), coarse_rows);
    for (int c = 0; c < fine.cols(); ++c) {
      const double g = fine(r, c);
      if (g == 0.0) continue;
      const Tap& tx = col_taps[c];
      out(ty.i0, tx.i0) += (1 - ty.w1) * (1 - tx.w1) * g;
      out(ty.i0, tx.i1) += (1 - ty.w1) * tx.w1 * g;
      out(ty.i1, tx.i0) += ty.w1 * (1 - tx.w1) * g;
      out(ty.i1, tx.i1) += ty.w1 * tx.w1 * g;
    }
  }
  return out;
}

}  // namespace patchguard
