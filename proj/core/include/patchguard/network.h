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

#ifndef PATCHGUARD_NETWORK_H_
#define PATCHGUARD_NETWORK_H_

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "patchguard/tensor.h"

namespace patchguard {

enum class Activation { kLinear, kLeaky, kRelu };

/// Darknet-style convolution parameters. Batch-norm statistics are kept raw so
/// that weight files round-trip; forward/backward use the folded affine form.
struct ConvParams {
  int filters = 0;
  int size = 1;
  int stride = 1;
  int pad = 0;
  bool batch_normalize = false;
  Activation activation = Activation::kLinear;

  std::vector<float> biases;
  std::vector<float> scales;
  std::vector<float> rolling_mean;
  std::vector<float> rolling_variance;
  std::vector<float> weights;  // filters x in_channels x size x size
};

struct MaxPoolParams {
  int size = 2;
  int stride = 2;
  int padding = 1;  // darknet default: size - 1
};

struct RouteParams {
  std::vector<int> sources;  // absolute layer indices
};

struct ReorgParams {
  int stride = 2;
};

enum class LayerKind { kConv, kMaxPool, kRoute, kReorg };

struct Shape {
  int channels = 0;
  int height = 0;
  int width = 0;
  bool operator==(const Shape&) const = default;
};

/// Activations of a single forward pass, kept for the backward pass.
struct ForwardTrace {
  std::vector<Tensor> outputs;
  std::vector<std::vector<std::int32_t>> pool_argmax;
};

/// Feed-forward convolutional network with exact input-gradient backprop.
/// Weights are frozen; only activation gradients are computed.
class Network {
 public:
  Network() = default;
  explicit Network(Shape input) : input_(input) {}

  int add_conv(ConvParams params);
  int add_maxpool(MaxPoolParams params);
  int add_route(RouteParams params);
  int add_reorg(ReorgParams params);

  /// Draws He-normal conv weights and neutral batch-norm statistics.
  void randomize(std::uint64_t seed);

  Shape input_shape() const { return input_; }
  Shape output_shape(int layer) const { return layers_.at(static_cast<size_t>(layer)).out; }
  Shape output_shape() const { return layers_.back().out; }
  int num_layers() const { return static_cast<int>(layers_.size()); }
  LayerKind kind(int layer) const { return layers_.at(static_cast<size_t>(layer)).kind; }
  const ConvParams& conv(int layer) const;
  /// Replaces a conv layer's parameters; sizes must match the layer geometry.
  void set_conv(int layer, ConvParams params);

  /// Runs the network. When `override_layer` is set, that layer's output is
  /// replaced by `override_value` before later layers consume it.
  Tensor forward(const Tensor& input, ForwardTrace* trace = nullptr,
                 std::optional<int> override_layer = std::nullopt,
                 const Tensor* override_value = nullptr) const;

  struct Seed {
    int layer;
    Tensor gradient;  // d(objective)/d(output of `layer`)
  };

  /// Backpropagates seeds to the input. If `capture_layer` is set, the total
  /// gradient with respect to that layer's output is written to `captured`.
  Tensor backward(const ForwardTrace& trace, std::span<const Seed> seeds,
                  std::optional<int> capture_layer = std::nullopt, Tensor* captured = nullptr) const;

  /// FNV-1a over every parameter; used to assert weights are never mutated.
  std::uint64_t weight_checksum() const;

 private:
  struct Layer {
    LayerKind kind;
    Shape in;
    Shape out;
    ConvParams conv;
    MaxPoolParams pool;
    RouteParams route;
    ReorgParams reorg;
    // folded batch norm
    std::vector<double> w_eff;
    std::vector<double> b_eff;
  };

  Shape current_shape() const { return layers_.empty() ? input_ : layers_.back().out; }
  void fold(Layer& layer) const;
  Tensor run_layer(size_t index, const Tensor& input, const std::vector<Tensor>& outputs,
                   std::vector<std::int32_t>* argmax) const;

  Shape input_;
  std::vector<Layer> layers_;
};

}  // namespace patchguard

#endif  // PATCHGUARD_NETWORK_H_
