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

#include "patchguard/tensor.h"

#include <algorithm>
#include <cmath>

namespace patchguard {

Tensor to_tensor(const RasterImage& image) {
  Tensor out(3, image.height(), image.width());
  for (int c = 0; c < 3; ++c)
    for (int r = 0; r < image.height(); ++r)
      for (int x = 0; x < image.width(); ++x) out(c, r, x) = image.at(r, x, c) / 255.0;
  return out;
}

RasterImage to_raster(const Tensor& tensor) {
  if (tensor.channels() != 3) throw DimensionError("to_raster: expected 3 channels");
  RasterImage out(tensor.height(), tensor.width());
  for (int c = 0; c < 3; ++c)
    for (int r = 0; r < tensor.height(); ++r)
      for (int x = 0; x < tensor.width(); ++x)
        out.at(r, x, c) = static_cast<std::uint8_t>(std::lround(std::clamp(tensor(c, r, x), 0.0, 1.0) * 255.0));
  return out;
}

namespace {

struct Tap {
  int i0;
  int i1;
  double w1;
};

std::vector<Tap> half_pixel_taps(int dst, int src) {
  std::vector<Tap> taps(static_cast<size_t>(dst));
  const double scale = static_cast<double>(src) / dst;
  for (int i = 0; i < dst; ++i) {
    const double f = std::clamp((i + 0.5) * scale - 0.5, 0.0, src - 1.0);
    const int i0 = static_cast<int>(f);
    taps[i] = {i0, std::min(i0 + 1, src - 1), f - i0};
  }
  return taps;
}

}  // namespace

Tensor resize_tensor(const Tensor& input, int height, int width) {
  if (height < 1 || width < 1) throw DimensionError("resize_tensor: target must be at least 1x1");
  if (height == input.height() && width == input.width()) return input;
  const auto ty = half_pixel_taps(height, input.height());
  const auto tx = half_pixel_taps(width, input.width());
  Tensor out(input.channels(), height, width);
  for (int c = 0; c < input.channels(); ++c)
    for (int r = 0; r < height; ++r) {
      const Tap& y = ty[r];
      for (int x = 0; x < width; ++x) {
        const Tap& t = tx[x];
        const double top = (1 - t.w1) * input(c, y.i0, t.i0) + t.w1 * input(c, y.i0, t.i1);
        const double bot = (1 - t.w1) * input(c, y.i1, t.i0) + t.w1 * input(c, y.i1, t.i1);
        out(c, r, x) = (1 - y.w1) * top + y.w1 * bot;
      }
    }
  return out;
}

Tensor resize_tensor_adjoint(const Tensor& grad_output, int input_height, int input_width) {
  if (grad_output.height() == input_height && grad_output.width() == input_width) return grad_output;
  const auto ty = half_pixel_taps(grad_output.height(), input_height);
  const auto tx = half_pixel_taps(grad_output.width(), input_width);
  Tensor out(grad_output.channels(), input_height, input_width);
  for (int c = 0; c < grad_output.channels(); ++c)
    for (int r = 0; r < grad_output.height(); ++r) {
      const Tap& y = ty[r];
      for (int x = 0; x < grad_output.width(); ++x) {
        const Tap& t = tx[x];
        const double g = grad_output(c, r, x);
        out(c, y.i0, t.i0) += (1 - y.w1) * (1 - t.w1) * g;
        out(c, y.i0, t.i1) += (1 - y.w1) * t.w1 * g;
        out(c, y.i1, t.i0) += y.w1 * (1 - t.w1) * g;
        out(c, y.i1, t.i1) += y.w1 * t.w1 * g;
      }
    }
  return out;
}

}  // namespace patchguard
