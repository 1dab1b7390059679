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

#ifndef PATCHGUARD_IMAGING_H_
#define PATCHGUARD_IMAGING_H_

#include <cstdint>
#include <span>
#include <vector>

#include "patchguard/errors.h"

namespace patchguard {

/// Dense row-major 2-D array.
template <typename T>
class Grid {
 public:
  Grid() = default;
  Grid(int rows, int cols, T fill = T{}) : rows_(rows), cols_(cols) {
    if (rows < 0 || cols < 0) throw DimensionError("Grid: negative extent");
    values_.assign(static_cast<size_t>(rows) * static_cast<size_t>(cols), fill);
  }

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  bool empty() const { return values_.empty(); }
  size_t size() const { return values_.size(); }

  T& operator()(int r, int c) { return values_[index(r, c)]; }
  const T& operator()(int r, int c) const { return values_[index(r, c)]; }

  std::span<T> values() { return values_; }
  std::span<const T> values() const { return values_; }

  bool same_shape(int rows, int cols) const { return rows_ == rows && cols_ == cols; }
  template <typename U>
  bool same_shape(const Grid<U>& other) const {
    return rows_ == other.rows() && cols_ == other.cols();
  }

  bool operator==(const Grid&) const = default;

 private:
  size_t index(int r, int c) const {
    return static_cast<size_t>(r) * static_cast<size_t>(cols_) + static_cast<size_t>(c);
  }

  int rows_ = 0;
  int cols_ = 0;
  std::vector<T> values_;
};

/// Single 8-bit channel.
using Plane = Grid<std::uint8_t>;
/// Nonnegative per-pixel scores (Grad-CAM output, upsampled maps).
using ScoreMap = Grid<double>;
/// Per-pixel selection; nonzero means selected.
using PixelMask = Grid<std::uint8_t>;

size_t count_set(const PixelMask& mask);

struct Rgb {
  std::uint8_t r = 0;
  std::uint8_t g = 0;
  std::uint8_t b = 0;
  bool operator==(const Rgb&) const = default;
};

inline constexpr Rgb kFilterGray{128, 128, 128};

/// Axis-aligned pixel rectangle, half-open on bottom/right.
struct PixelRect {
  int row = 0;
  int col = 0;
  int height = 0;
  int width = 0;

  int bottom() const { return row + height; }
  int right() const { return col + width; }
  long area() const { return static_cast<long>(height) * width; }
  bool contains(int r, int c) const { return r >= row && r < bottom() && c >= col && c < right(); }
  bool operator==(const PixelRect&) const = default;
};

/// H x W x 3 image with 8-bit R,G,B channels, stored row-major and interleaved.
class RasterImage {
 public:
  static constexpr int kChannels = 3;

  RasterImage() = default;
  RasterImage(int height, int width, Rgb fill = {});

  int height() const { return height_; }
  int width() const { return width_; }
  int channels() const { return kChannels; }
  bool empty() const { return data_.empty(); }

  std::uint8_t& at(int row, int col, int channel) { return data_[offset(row, col) + channel]; }
  std::uint8_t at(int row, int col, int channel) const { return data_[offset(row, col) + channel]; }

  Rgb pixel(int row, int col) const;
  void set_pixel(int row, int col, Rgb color);

  Plane plane(int channel) const;

  std::span<std::uint8_t> bytes() { return data_; }
  std::span<const std::uint8_t> bytes() const { return data_; }

  bool operator==(const RasterImage&) const = default;

 private:
  size_t offset(int row, int col) const {
    return (static_cast<size_t>(row) * static_cast<size_t>(width_) + static_cast<size_t>(col)) * kChannels;
  }

  int height_ = 0;
  int width_ = 0;
  std::vector<std::uint8_t> data_;
};

RasterImage crop(const RasterImage& image, const PixelRect& rect);

/// Half-pixel-centred bilinear resampling to an arbitrary size.
RasterImage resize_bilinear(const RasterImage& image, int height, int width);

struct Block {
  PixelRect rect;
  double person_prob = 0.0;
  double entropy = 0.0;
};

/// S x S partition of an image. Blocks are stored row-major.
class BlockGrid {
 public:
  BlockGrid() = default;
  BlockGrid(int size, std::vector<Block> blocks);

  int size() const { return size_; }
  Block& at(int row, int col) { return blocks_[static_cast<size_t>(row * size_ + col)]; }
  const Block& at(int row, int col) const { return blocks_[static_cast<size_t>(row * size_ + col)]; }
  std::span<Block> blocks() { return blocks_; }
  std::span<const Block> blocks() const { return blocks_; }

 private:
  int size_ = 0;
  std::vector<Block> blocks_;
};

/// Splits `image` into S x S blocks. Remainder rows/columns go to the leading blocks.
BlockGrid partition_blocks(const RasterImage& image, int grid_size);

/// Boundaries of `count` near-equal segments covering [0, extent).
std::vector<int> split_extent(int extent, int count);

/// Mean of the in-bounds 8-neighbourhood of every pixel, rounded half up.
/// A 1x1 plane has no neighbours and maps to 0.
Plane neighborhood_average_plane(const Plane& plane);

/// Shannon entropy (bits) of the joint (pixel, neighbourhood average) histogram.
double two_d_entropy(const Plane& plane);

/// Mean of the three per-channel 2-D entropies.
double two_d_entropy_rgb(const RasterImage& block);

/// Separable Gaussian blur with reflect-101 borders; kernel radius max(1, ceil(2 sigma)).
RasterImage gaussian_blur(const RasterImage& image, double sigma);

RasterImage brightness_shift(const RasterImage& image, int delta);

RasterImage fill_pixels(const RasterImage& image, const PixelMask& mask, Rgb color);

/// Corner-aligned bilinear upsampling of a real grid to height x width.
ScoreMap bilinear_upsample(const Grid<double>& map, int height, int width);

/// Adjoint of bilinear_upsample: scatters a fine grid back onto the coarse lattice.
Grid<double> bilinear_upsample_adjoint(const ScoreMap& fine, int coarse_rows, int coarse_cols);

}  // namespace patchguard

#endif  // PATCHGUARD_IMAGING_H_
