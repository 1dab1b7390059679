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

#ifndef PATCHGUARD_DARKNET_H_
#define PATCHGUARD_DARKNET_H_

#include <filesystem>
#include <istream>
#include <optional>
#include <vector>

#include "patchguard/network.h"

namespace patchguard {

/// Parameters of a YOLOv2 [region] head.
struct RegionSpec {
  int classes = 80;
  int num = 5;
  std::vector<double> anchors;  // (w, h) pairs in grid units
};

struct DarknetModel {
  Network network;
  RegionSpec region;
  /// Last convolutional activations before the detection head (Grad-CAM layer).
  int feature_layer = -1;
};

/// Parses a darknet .cfg (net, convolutional, maxpool, route, reorg, region).
/// `input_size` overrides the [net] width/height when given.
DarknetModel parse_darknet_cfg(std::istream& cfg, std::optional<int> input_size = std::nullopt);
DarknetModel load_darknet_cfg(const std::filesystem::path& path, std::optional<int> input_size = std::nullopt);

/// Reads a darknet .weights file into the conv layers of `network`, in order.
void load_darknet_weights(Network& network, const std::filesystem::path& path);
void save_darknet_weights(const Network& network, const std::filesystem::path& path);

}  // namespace patchguard

#endif  // PATCHGUARD_DARKNET_H_
