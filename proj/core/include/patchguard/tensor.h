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

#ifndef PATCHGUARD_TENSOR_H_
#define PATCHGUARD_TENSOR_H_

#include <cstdint>
#include <span>
#include <vector>

#include "patchguard/errors.h"
#include "patchguard/imaging.h"

namespace patchguard {

/// Channel-major (C x H x W) dense array.
template <typename T>
class Volume {
 public:
  Volume() = default;
  Volume(int channels, int height, int width, T fill = T{})
      : channels_(channels), height_(height), width_(width) {
    if (channels < 0 || height < 0 || width < 0) throw DimensionError("Volume: negative extent");
    data_.assign(static_cast<size_t>(channels) * height * width, fill);
  }

  int channels() const { return channels_; }
  int height() const { return height_; }
  int width() const { return width_; }
  size_t size() const { return data_.size(); }
  size_t plane_size() const { return static_cast<size_t>(height_) * width_; }
  bool empty() const { return data_.empty(); }

  T& operator()(int c, int y, int x) { return data_[index(c, y, x)]; }
  const T& operator()(int c, int y, int x) const { return data_[index(c, y, x)]; }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  T* channel(int c) { return data_.data() + static_cast<size_t>(c) * plane_size(); }
  const T* channel(int c) const { return data_.data() + static_cast<size_t>(c) * plane_size(); }

  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }

  template <typename U>
  bool same_shape(const Volume<U>& o) const {
    return channels_ == o.channels() && height_ == o.height() && width_ == o.width();
  }

  bool operator==(const Volume&) const = default;

 private:
  size_t index(int c, int y, int x) const {
    return (static_cast<size_t>(c) * height_ + static_cast<size_t>(y)) * width_ + static_cast<size_t>(x);
  }

  int channels_ = 0;
  int height_ = 0;
  int width_ = 0;
  std::vector<T> data_;
};

using Tensor = Volume<double>;
/// Per-channel selection with the same layout as a Tensor.
using ChannelMask = Volume<std::uint8_t>;

/// RGB image scaled to [0, 1], shape 3 x H x W.
Tensor to_tensor(const RasterImage& image);
/// Inverse of to_tensor: values are clipped to [0, 1] and rounded to the nearest level.
RasterImage to_raster(const Tensor& tensor);

/// Half-pixel-centred bilinear resize (same sampling as resize_bilinear, no rounding).
Tensor resize_tensor(const Tensor& input, int height, int width);
/// Adjoint of resize_tensor: maps a gradient at the output size back to the input size.
Tensor resize_tensor_adjoint(const Tensor& grad_output, int input_height, int input_width);

}  // namespace patchguard

#endif  // PATCHGUARD_TENSOR_H_
