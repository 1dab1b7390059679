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

#include "patchguard/network.h"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <random>
#include <string>

namespace patchguard {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;
using MatrixMap = Eigen::Map<RowMatrix>;

// Upper bound on im2col buffer entries before the output is processed in row bands.
constexpr size_t kMaxColumnBuffer = size_t{1} << 23;

constexpr double kLeakySlope = 0.1;
constexpr double kBatchNormEpsilon = 0.000001;

int conv_out_extent(int in, int size, int stride, int pad) { return (in + 2 * pad - size) / stride + 1; }

void im2col(const Tensor& in, int k, int stride, int pad, int out_w, int row_begin, int row_end, double* col) {
  const int rows = row_end - row_begin;
  const size_t n = static_cast<size_t>(rows) * out_w;
  for (int c = 0; c < in.channels(); ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        double* dst = col + (static_cast<size_t>((c * k + ky) * k + kx)) * n;
        for (int oy = row_begin; oy < row_end; ++oy) {
          const int iy = oy * stride + ky - pad;
          double* d = dst + static_cast<size_t>(oy - row_begin) * out_w;
          if (iy < 0 || iy >= in.height()) {
            std::fill(d, d + out_w, 0.0);
            continue;
          }
          const double* src = in.channel(c) + static_cast<size_t>(iy) * in.width();
          for (int ox = 0; ox < out_w; ++ox) {
            const int ix = ox * stride + kx - pad;
            d[ox] = (ix >= 0 && ix < in.width()) ? src[ix] : 0.0;
          }
        }
      }
    }
  }
}

void col2im_add(const double* col, int k, int stride, int pad, int out_w, int row_begin, int row_end, Tensor& grad) {
  const int rows = row_end - row_begin;
  const size_t n = static_cast<size_t>(rows) * out_w;
  for (int c = 0; c < grad.channels(); ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const double* src = col + (static_cast<size_t>((c * k + ky) * k + kx)) * n;
        for (int oy = row_begin; oy < row_end; ++oy) {
          const int iy = oy * stride + ky - pad;
          if (iy < 0 || iy >= grad.height()) continue;
          double* dst = grad.channel(c) + static_cast<size_t>(iy) * grad.width();
          const double* s = src + static_cast<size_t>(oy - row_begin) * out_w;
          for (int ox = 0; ox < out_w; ++ox) {
            const int ix = ox * stride + kx - pad;
            if (ix >= 0 && ix < grad.width()) dst[ix] += s[ox];
          }
        }
      }
    }
  }
}

double activate(Activation a, double x) {
  switch (a) {
    case Activation::kLeaky:
      return x > 0.0 ? x : kLeakySlope * x;
    case Activation::kRelu:
      return x > 0.0 ? x : 0.0;
    case Activation::kLinear:
      break;
  }
  return x;
}

// Derivative expressed through the activation output (sign is preserved by all three).
double activation_slope(Activation a, double y) {
  switch (a) {
    case Activation::kLeaky:
      return y > 0.0 ? 1.0 : kLeakySlope;
    case Activation::kRelu:
      return y > 0.0 ? 1.0 : 0.0;
    case Activation::kLinear:
      break;
  }
  return 1.0;
}

int rows_per_band(const Shape& in, int k, int out_h, int out_w) {
  const size_t per_row = static_cast<size_t>(in.channels) * k * k * out_w;
  return std::clamp(static_cast<int>(kMaxColumnBuffer / std::max<size_t>(per_row, 1)), 1, out_h);
}

bool is_pointwise(const ConvParams& p) { return p.size == 1 && p.stride == 1 && p.pad == 0; }

void add_into(Tensor& dst, const Tensor& src) {
  if (dst.empty()) {
    dst = src;
    return;
  }
  if (!dst.same_shape(src)) throw DimensionError("Network::backward: gradient shape mismatch");
  auto d = dst.values();
  auto s = src.values();
  for (size_t i = 0; i < d.size(); ++i) d[i] += s[i];
}

}  // namespace

int Network::add_conv(ConvParams params) {
  const Shape in = current_shape();
  if (params.filters < 1 || params.size < 1 || params.stride < 1) throw ParameterError("conv: invalid geometry");
  Layer layer{};
  layer.kind = LayerKind::kConv;
  layer.in = in;
  layer.out = {params.filters, conv_out_extent(in.height, params.size, params.stride, params.pad),
               conv_out_extent(in.width, params.size, params.stride, params.pad)};
  if (layer.out.height < 1 || layer.out.width < 1) throw DimensionError("conv: output collapses to zero size");
  const size_t n = static_cast<size_t>(params.filters);
  const size_t wcount = n * in.channels * params.size * params.size;
  params.biases.resize(n, 0.0f);
  if (params.batch_normalize) {
    params.scales.resize(n, 1.0f);
    params.rolling_mean.resize(n, 0.0f);
    params.rolling_variance.resize(n, 1.0f);
  }
  params.weights.resize(wcount, 0.0f);
  layer.conv = std::move(params);
  fold(layer);
  layers_.push_back(std::move(layer));
  return num_layers() - 1;
}

int Network::add_maxpool(MaxPoolParams params) {
  const Shape in = current_shape();
  if (params.size < 1 || params.stride < 1 || params.padding < 0) throw ParameterError("maxpool: invalid geometry");
  Layer layer{};
  layer.kind = LayerKind::kMaxPool;
  layer.in = in;
  layer.out = {in.channels, (in.height + params.padding - params.size) / params.stride + 1,
               (in.width + params.padding - params.size) / params.stride + 1};
  layer.pool = params;
  layers_.push_back(std::move(layer));
  return num_layers() - 1;
}

int Network::add_route(RouteParams params) {
  if (params.sources.empty()) throw ParameterError("route: no sources");
  Layer layer{};
  layer.kind = LayerKind::kRoute;
  const int next = num_layers();
  int channels = 0;
  for (int src : params.sources) {
    if (src < 0 || src >= next) throw ParameterError("route: source " + std::to_string(src) + " out of range");
    const Shape s = layers_[static_cast<size_t>(src)].out;
    if (channels == 0) {
      layer.out.height = s.height;
      layer.out.width = s.width;
    } else if (s.height != layer.out.height || s.width != layer.out.width) {
      throw DimensionError("route: sources disagree on spatial size");
    }
    channels += s.channels;
  }
  layer.out.channels = channels;
  layer.in = layer.out;
  layer.route = std::move(params);
  layers_.push_back(std::move(layer));
  return num_layers() - 1;
}

int Network::add_reorg(ReorgParams params) {
  const Shape in = current_shape();
  const int s = params.stride;
  if (s < 1 || in.height % s != 0 || in.width % s != 0 || in.channels % (s * s) != 0) {
    throw DimensionError("reorg: input not divisible by stride");
  }
  Layer layer{};
  layer.kind = LayerKind::kReorg;
  layer.in = in;
  layer.out = {in.channels * s * s, in.height / s, in.width / s};
  layer.reorg = params;
  layers_.push_back(std::move(layer));
  return num_layers() - 1;
}

const ConvParams& Network::conv(int layer) const {
  const Layer& l = layers_.at(static_cast<size_t>(layer));
  if (l.kind != LayerKind::kConv) throw ParameterError("layer " + std::to_string(layer) + " is not convolutional");
  return l.conv;
}

void Network::set_conv(int layer, ConvParams params) {
  Layer& l = layers_.at(static_cast<size_t>(layer));
  if (l.kind != LayerKind::kConv) throw ParameterError("layer " + std::to_string(layer) + " is not convolutional");
  const ConvParams& old = l.conv;
  if (params.filters != old.filters || params.size != old.size || params.stride != old.stride ||
      params.pad != old.pad || params.batch_normalize != old.batch_normalize ||
      params.weights.size() != old.weights.size() || params.biases.size() != old.biases.size() ||
      params.scales.size() != old.scales.size() || params.rolling_mean.size() != old.rolling_mean.size() ||
      params.rolling_variance.size() != old.rolling_variance.size()) {
    throw DimensionError("set_conv: parameter sizes do not match layer " + std::to_string(layer));
  }
  l.conv = std::move(params);
  fold(l);
}

void Network::fold(Layer& layer) const {
  const ConvParams& p = layer.conv;
  const size_t n = static_cast<size_t>(p.filters);
  const size_t per_filter = p.weights.size() / n;
  layer.w_eff.resize(p.weights.size());
  layer.b_eff.resize(n);
  for (size_t f = 0; f < n; ++f) {
    double scale = 1.0;
    double shift = p.biases[f];
    if (p.batch_normalize) {
      const double denom = std::sqrt(static_cast<double>(p.rolling_variance[f])) + kBatchNormEpsilon;
      scale = p.scales[f] / denom;
      shift = p.biases[f] - p.scales[f] * p.rolling_mean[f] / denom;
    }
    for (size_t i = 0; i < per_filter; ++i) layer.w_eff[f * per_filter + i] = scale * p.weights[f * per_filter + i];
    layer.b_eff[f] = shift;
  }
}

void Network::randomize(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (Layer& l : layers_) {
    if (l.kind != LayerKind::kConv) continue;
    ConvParams& p = l.conv;
    const double fan_in = static_cast<double>(l.in.channels) * p.size * p.size;
    std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / fan_in));
    for (float& w : p.weights) w = static_cast<float>(normal(rng));
    std::fill(p.biases.begin(), p.biases.end(), 0.0f);
    std::fill(p.scales.begin(), p.scales.end(), 1.0f);
    std::fill(p.rolling_mean.begin(), p.rolling_mean.end(), 0.0f);
    std::fill(p.rolling_variance.begin(), p.rolling_variance.end(), 1.0f);
    fold(l);
  }
}

Tensor Network::run_layer(size_t index, const Tensor& input, const std::vector<Tensor>& outputs,
                          std::vector<std::int32_t>* argmax) const {
  const Layer& l = layers_[index];
  Tensor out(l.out.channels, l.out.height, l.out.width);
  switch (l.kind) {
    case LayerKind::kConv: {
      const ConvParams& p = l.conv;
      const int k_dim = l.in.channels * p.size * p.size;
      ConstMatrixMap weights(l.w_eff.data(), p.filters, k_dim);
      MatrixMap result(out.data(), p.filters, static_cast<Eigen::Index>(out.plane_size()));
      if (is_pointwise(p)) {
        ConstMatrixMap col(input.data(), k_dim, static_cast<Eigen::Index>(input.plane_size()));
        result.noalias() = weights * col;
      } else {
        const int band = rows_per_band(l.in, p.size, l.out.height, l.out.width);
        std::vector<double> col;
        for (int r0 = 0; r0 < l.out.height; r0 += band) {
          const int r1 = std::min(l.out.height, r0 + band);
          const Eigen::Index n = static_cast<Eigen::Index>(r1 - r0) * l.out.width;
          col.resize(static_cast<size_t>(k_dim) * n);
          im2col(input, p.size, p.stride, p.pad, l.out.width, r0, r1, col.data());
          ConstMatrixMap colm(col.data(), k_dim, n);
          result.block(0, static_cast<Eigen::Index>(r0) * l.out.width, p.filters, n).noalias() = weights * colm;
        }
      }
      for (int f = 0; f < p.filters; ++f) {
        double* o = out.channel(f);
        const double b = l.b_eff[static_cast<size_t>(f)];
        for (size_t i = 0; i < out.plane_size(); ++i) o[i] = activate(p.activation, o[i] + b);
      }
      break;
    }
    case LayerKind::kMaxPool: {
      const MaxPoolParams& p = l.pool;
      const int offset = -p.padding / 2;
      argmax->assign(out.size(), -1);
      size_t o = 0;
      for (int c = 0; c < l.out.channels; ++c) {
        const double* src = input.channel(c);
        for (int oy = 0; oy < l.out.height; ++oy) {
          for (int ox = 0; ox < l.out.width; ++ox, ++o) {
            double best = -std::numeric_limits<double>::infinity();
            std::int32_t best_idx = -1;
            for (int ky = 0; ky < p.size; ++ky) {
              const int iy = offset + oy * p.stride + ky;
              if (iy < 0 || iy >= l.in.height) continue;
              for (int kx = 0; kx < p.size; ++kx) {
                const int ix = offset + ox * p.stride + kx;
                if (ix < 0 || ix >= l.in.width) continue;
                const std::int32_t idx = iy * l.in.width + ix;
                if (src[idx] > best) {
                  best = src[idx];
                  best_idx = idx;
                }
              }
            }
            out.values()[o] = best_idx >= 0 ? best : 0.0;
            (*argmax)[o] = best_idx;
          }
        }
      }
      break;
    }
    case LayerKind::kRoute: {
      double* dst = out.data();
      for (int src : l.route.sources) {
        const Tensor& s = outputs[static_cast<size_t>(src)];
        dst = std::copy(s.data(), s.data() + s.size(), dst);
      }
      break;
    }
    case LayerKind::kReorg: {
      // Darknet's reorg permutation, reproduced index-for-index.
      const int s = l.reorg.stride;
      const int w = l.in.width, h = l.in.height, c = l.in.channels;
      const int out_c = c / (s * s);
      double* dst = out.data();
      const double* src = input.data();
      for (int k = 0; k < c; ++k)
        for (int j = 0; j < h; ++j)
          for (int i = 0; i < w; ++i) {
            const int in_index = i + w * (j + h * k);
            const int c2 = k % out_c;
            const int off = k / out_c;
            const int w2 = i * s + off % s;
            const int h2 = j * s + off / s;
            const int out_index = w2 + w * s * (h2 + h * s * c2);
            dst[in_index] = src[out_index];
          }
      break;
    }
  }
  return out;
}

Tensor Network::forward(const Tensor& input, ForwardTrace* trace, std::optional<int> override_layer,
                        const Tensor* override_value) const {
  if (input.channels() != input_.channels || input.height() != input_.height || input.width() != input_.width) {
    throw DimensionError("Network::forward: input shape mismatch");
  }
  if (layers_.empty()) throw BackendError("Network::forward: empty network");
  std::vector<Tensor> outputs(layers_.size());
  std::vector<std::vector<std::int32_t>> argmax(layers_.size());
  for (size_t i = 0; i < layers_.size(); ++i) {
    const Tensor& in = i == 0 ? input : outputs[i - 1];
    if (override_layer && static_cast<size_t>(*override_layer) == i) {
      if (!override_value || !override_value->same_shape(Tensor(layers_[i].out.channels, layers_[i].out.height,
                                                                 layers_[i].out.width))) {
        throw DimensionError("Network::forward: override shape mismatch");
      }
      outputs[i] = *override_value;
      continue;
    }
    outputs[i] = run_layer(i, in, outputs, &argmax[i]);
  }
  Tensor result = outputs.back();
  if (trace) {
    trace->outputs = std::move(outputs);
    trace->pool_argmax = std::move(argmax);
  }
  return result;
}

Tensor Network::backward(const ForwardTrace& trace, std::span<const Seed> seeds, std::optional<int> capture_layer,
                         Tensor* captured) const {
  if (trace.outputs.size() != layers_.size()) throw DimensionError("Network::backward: trace does not match network");
  std::vector<Tensor> grads(layers_.size());
  for (const Seed& s : seeds) {
    if (s.layer < 0 || s.layer >= num_layers()) throw ParameterError("Network::backward: seed layer out of range");
    const Shape sh = layers_[static_cast<size_t>(s.layer)].out;
    if (s.gradient.channels() != sh.channels || s.gradient.height() != sh.height || s.gradient.width() != sh.width) {
      throw DimensionError("Network::backward: seed shape mismatch");
    }
    add_into(grads[static_cast<size_t>(s.layer)], s.gradient);
  }
  Tensor input_grad(input_.channels, input_.height, input_.width);
  if (captured && capture_layer) {
    const Shape sh = layers_.at(static_cast<size_t>(*capture_layer)).out;
    *captured = Tensor(sh.channels, sh.height, sh.width);
  }

  for (size_t idx = layers_.size(); idx-- > 0;) {
    if (grads[idx].empty()) continue;
    const Tensor& gy = grads[idx];
    if (captured && capture_layer && static_cast<size_t>(*capture_layer) == idx) *captured = gy;
    const Layer& l = layers_[idx];

    auto target = [&](size_t layer_input) -> Tensor& { return layer_input == 0 ? input_grad : grads[layer_input - 1]; };
    auto ensure = [&](Tensor& t, const Shape& sh) {
      if (t.empty()) t = Tensor(sh.channels, sh.height, sh.width);
    };

    switch (l.kind) {
      case LayerKind::kConv: {
        const ConvParams& p = l.conv;
        const Tensor& y = trace.outputs[idx];
        Tensor dpre = gy;
        for (size_t i = 0; i < dpre.size(); ++i) dpre.values()[i] *= activation_slope(p.activation, y.values()[i]);
        Tensor& gx = target(idx);
        ensure(gx, l.in);
        const int k_dim = l.in.channels * p.size * p.size;
        ConstMatrixMap weights(l.w_eff.data(), p.filters, k_dim);
        ConstMatrixMap dpm(dpre.data(), p.filters, static_cast<Eigen::Index>(dpre.plane_size()));
        if (is_pointwise(p)) {
          MatrixMap gxm(gx.data(), k_dim, static_cast<Eigen::Index>(gx.plane_size()));
          gxm.noalias() += weights.transpose() * dpm;
        } else {
          const int band = rows_per_band(l.in, p.size, l.out.height, l.out.width);
          std::vector<double> col;
          for (int r0 = 0; r0 < l.out.height; r0 += band) {
            const int r1 = std::min(l.out.height, r0 + band);
            const Eigen::Index n = static_cast<Eigen::Index>(r1 - r0) * l.out.width;
            col.resize(static_cast<size_t>(k_dim) * n);
            MatrixMap colm(col.data(), k_dim, n);
            colm.noalias() = weights.transpose() * dpm.block(0, static_cast<Eigen::Index>(r0) * l.out.width, p.filters, n);
            col2im_add(col.data(), p.size, p.stride, p.pad, l.out.width, r0, r1, gx);
          }
        }
        break;
      }
      case LayerKind::kMaxPool: {
        Tensor& gx = target(idx);
        ensure(gx, l.in);
        const auto& am = trace.pool_argmax[idx];
        const size_t out_plane = static_cast<size_t>(l.out.height) * l.out.width;
        for (size_t o = 0; o < gy.size(); ++o) {
          if (am[o] < 0) continue;
          const int c = static_cast<int>(o / out_plane);
          gx.channel(c)[am[o]] += gy.values()[o];
        }
        break;
      }
      case LayerKind::kRoute: {
        const double* src = gy.data();
        for (int s : l.route.sources) {
          Tensor& gx = grads[static_cast<size_t>(s)];
          ensure(gx, layers_[static_cast<size_t>(s)].out);
          for (size_t i = 0; i < gx.size(); ++i) gx.values()[i] += src[i];
          src += gx.size();
        }
        break;
      }
      case LayerKind::kReorg: {
        Tensor& gx = target(idx);
        ensure(gx, l.in);
        const int s = l.reorg.stride;
        const int w = l.in.width, h = l.in.height, c = l.in.channels;
        const int out_c = c / (s * s);
        for (int k = 0; k < c; ++k)
          for (int j = 0; j < h; ++j)
            for (int i = 0; i < w; ++i) {
              const int in_index = i + w * (j + h * k);
              const int c2 = k % out_c;
              const int off = k / out_c;
              const int w2 = i * s + off % s;
              const int h2 = j * s + off / s;
              const int out_index = w2 + w * s * (h2 + h * s * c2);
              gx.data()[out_index] += gy.data()[in_index];
            }
        break;
      }
    }
  }
  return input_grad;
}

std::uint64_t Network::weight_checksum() const {
  std::uint64_t hash = 1469598103934665603ULL;
  auto mix = [&hash](const std::vector<float>& v) {
    for (float f : v) {
      std::uint32_t bits;
      std::memcpy(&bits, &f, sizeof bits);
      for (int i = 0; i < 4; ++i) {
        hash ^= (bits >> (8 * i)) & 0xffu;
        hash *= 1099511628211ULL;
      }
    }
  };
  for (const Layer& l : layers_) {
    if (l.kind != LayerKind::kConv) continue;
    mix(l.conv.biases);
    mix(l.conv.scales);
    mix(l.conv.rolling_mean);
    mix(l.conv.rolling_variance);
    mix(l.conv.weights);
  }
  return hash;
}

}  // namespace patchguard
