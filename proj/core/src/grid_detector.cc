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

#include "patchguard/grid_detector.h"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace patchguard {

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

DetectorConfig with_network_geometry(DetectorConfig config, const DarknetModel& model) {
  const Shape in = model.network.input_shape();
  const Shape out = model.network.output_shape();
  if (in.height != in.width) throw BackendError("grid detector needs a square network input");
  if (out.height != out.width) throw BackendError("grid detector needs a square output grid");
  if (in.channels != 3) throw BackendError("grid detector needs a 3-channel input");
  config.input_size = in.height;
  config.grid_size = out.height;
  return config;
}

// Softmax over the class logits of one anchor at one cell.
void softmax_at(const Tensor& head, int base_channel, int classes, int row, int col, std::vector<double>& out) {
  out.resize(static_cast<size_t>(classes));
  double mx = -1e300;
  for (int k = 0; k < classes; ++k) mx = std::max(mx, head(base_channel + k, row, col));
  double sum = 0.0;
  for (int k = 0; k < classes; ++k) {
    out[k] = std::exp(head(base_channel + k, row, col) - mx);
    sum += out[k];
  }
  for (double& v : out) v /= sum;
}

}  // namespace

GridDetector::GridDetector(DarknetModel model, DetectorConfig config, std::vector<std::string> class_names)
    : Detector(with_network_geometry(std::move(config), model), std::move(class_names)), model_(std::move(model)) {
  if (static_cast<int>(this->class_names().size()) != model_.region.classes) {
    throw BackendError("class name count " + std::to_string(this->class_names().size()) + " does not match region classes " +
                       std::to_string(model_.region.classes));
  }
}

Tensor GridDetector::prepare(const Tensor& image) const {
  if (image.channels() != 3) throw DimensionError("detector input must have 3 channels");
  return resize_tensor(image, config().input_size, config().input_size);
}

const GridDetector::Pass& GridDetector::run(const Tensor& network_input) const {
  if (cache_ && cache_->input == network_input) return *cache_;
  Pass pass;
  pass.input = network_input;
  model_.network.forward(network_input, &pass.trace);
  cache_ = std::move(pass);
  return *cache_;
}

GridScores GridDetector::decode(const Tensor& head) const {
  const RegionSpec& r = model_.region;
  const int s = head.height();
  const int stride = 5 + r.classes;
  const int person = target_class_id();
  GridScores g;
  g.size = s;
  g.anchors = r.num;
  g.classes = r.classes;
  g.objectness.resize(static_cast<size_t>(s) * s * r.num);
  g.class_probs.resize(static_cast<size_t>(s) * s * r.num * r.classes);
  g.person_prob = Grid<double>(s, s, 0.0);
  std::vector<double> probs;
  for (int row = 0; row < s; ++row)
    for (int col = 0; col < s; ++col)
      for (int b = 0; b < r.num; ++b) {
        const size_t idx = (static_cast<size_t>(row) * s + col) * r.num + b;
        const double obj = sigmoid(head(b * stride + 4, row, col));
        softmax_at(head, b * stride + 5, r.classes, row, col, probs);
        g.objectness[idx] = obj;
        std::copy(probs.begin(), probs.end(), g.class_probs.begin() + static_cast<std::ptrdiff_t>(idx * r.classes));
        g.person_prob(row, col) = std::max(g.person_prob(row, col), obj * probs[static_cast<size_t>(person)]);
      }
  return g;
}

GridScores GridDetector::grid_scores(const Tensor& network_input) const {
  return decode(run(network_input).trace.outputs.back());
}

std::vector<Detection> GridDetector::boxes(const Tensor& head, int image_height, int image_width) const {
  const RegionSpec& r = model_.region;
  const int s = head.height();
  const int stride = 5 + r.classes;
  std::vector<Detection> out;
  std::vector<double> probs;
  for (int row = 0; row < s; ++row)
    for (int col = 0; col < s; ++col)
      for (int b = 0; b < r.num; ++b) {
        const int base = b * stride;
        const double obj = sigmoid(head(base + 4, row, col));
        if (obj <= config().conf_threshold) continue;  // obj * p <= obj
        softmax_at(head, base + 5, r.classes, row, col, probs);
        const double cx = (col + sigmoid(head(base, row, col))) / s * image_width;
        const double cy = (row + sigmoid(head(base + 1, row, col))) / s * image_height;
        const double w = std::exp(std::min(head(base + 2, row, col), 20.0)) * r.anchors[2 * b] / s * image_width;
        const double h = std::exp(std::min(head(base + 3, row, col), 20.0)) * r.anchors[2 * b + 1] / s * image_height;
        const BoxF box = clip_box({cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2}, image_height, image_width);
        for (int k = 0; k < r.classes; ++k) {
          const double score = obj * probs[static_cast<size_t>(k)];
          if (score <= config().conf_threshold) continue;
          out.push_back({box, k, class_names()[static_cast<size_t>(k)], obj, probs[static_cast<size_t>(k)], score});
        }
      }
  return non_max_suppression(std::move(out), config().nms_threshold);
}

std::vector<Detection> GridDetector::detect(const RasterImage& image) const {
  const Pass& pass = run(prepare(to_tensor(image)));
  return boxes(pass.trace.outputs.back(), image.height(), image.width());
}

GridScores GridDetector::person_probability_grid(const RasterImage& image) const {
  return grid_scores(prepare(to_tensor(image)));
}

double GridDetector::target_and_seed(const Tensor& head, const TargetScalar& target, Tensor* seed) const {
  const RegionSpec& r = model_.region;
  if (target.class_id < 0 || target.class_id >= r.classes) throw ParameterError("target class out of range");
  const int s = head.height();
  const int stride = 5 + r.classes;
  const bool use_class = target.kind == TargetKind::kClassProbability;
  const bool use_max = target.kind == TargetKind::kMaxObjectness || target.reduction == Reduction::kMax;

  struct Entry {
    int row, col, b;
    double obj, p;
    std::vector<double> probs;
  };
  double total = 0.0;
  double best = -1.0;
  Entry best_entry{};
  std::vector<double> probs;
  if (seed) *seed = Tensor(head.channels(), head.height(), head.width());

  auto accumulate_seed = [&](int row, int col, int b, double obj, const std::vector<double>& pr) {
    const int base = b * stride;
    if (!use_class) {
      (*seed)(base + 4, row, col) += obj * (1.0 - obj);
      return;
    }
    const double pc = pr[static_cast<size_t>(target.class_id)];
    (*seed)(base + 4, row, col) += pc * obj * (1.0 - obj);
    for (int k = 0; k < r.classes; ++k) {
      const double delta = k == target.class_id ? 1.0 : 0.0;
      (*seed)(base + 5 + k, row, col) += obj * pc * (delta - pr[static_cast<size_t>(k)]);
    }
  };

  for (int row = 0; row < s; ++row)
    for (int col = 0; col < s; ++col)
      for (int b = 0; b < r.num; ++b) {
        const int base = b * stride;
        const double obj = sigmoid(head(base + 4, row, col));
        double value = obj;
        if (use_class) {
          softmax_at(head, base + 5, r.classes, row, col, probs);
          value = obj * probs[static_cast<size_t>(target.class_id)];
        }
        if (use_max) {
          if (value > best) {
            best = value;
            best_entry = {row, col, b, obj, value, probs};
          }
        } else {
          total += value;
          if (seed) accumulate_seed(row, col, b, obj, probs);
        }
      }
  if (use_max) {
    if (seed) accumulate_seed(best_entry.row, best_entry.col, best_entry.b, best_entry.obj, best_entry.probs);
    return best;
  }
  return total;
}

GradientBundle GridDetector::gradients_for(const Tensor& image, const TargetScalar& target) const {
  const Pass& pass = run(prepare(image));
  const Tensor& head = pass.trace.outputs.back();
  GradientBundle bundle;
  Tensor seed;
  bundle.target_value = target_and_seed(head, target, &seed);
  const Network::Seed seeds[] = {{model_.network.num_layers() - 1, std::move(seed)}};
  const Tensor net_grad = model_.network.backward(pass.trace, seeds, model_.feature_layer, &bundle.feature_gradients);
  bundle.features = pass.trace.outputs[static_cast<size_t>(model_.feature_layer)];
  bundle.input_gradient = resize_tensor_adjoint(net_grad, image.height(), image.width());
  return bundle;
}

double GridDetector::target_value(const Tensor& image, const TargetScalar& target) const {
  const Pass& pass = run(prepare(image));
  return target_and_seed(pass.trace.outputs.back(), target, nullptr);
}

Tensor GridDetector::input_gradient_from_features(const Tensor& image, const Tensor& feature_seed) const {
  const Pass& pass = run(prepare(image));
  const Network::Seed seeds[] = {{model_.feature_layer, feature_seed}};
  const Tensor net_grad = model_.network.backward(pass.trace, seeds);
  return resize_tensor_adjoint(net_grad, image.height(), image.width());
}

std::unique_ptr<GridDetector> load_grid_detector(const std::filesystem::path& cfg, const std::string& weights,
                                                 DetectorConfig config, std::vector<std::string> class_names,
                                                 std::optional<int> input_size) {
  DarknetModel model = load_darknet_cfg(cfg, input_size);
  constexpr std::string_view kRandom = "random:";
  if (weights.rfind(kRandom, 0) == 0) {
    std::uint64_t seed = 0;
    try {
      seed = std::stoull(weights.substr(kRandom.size()));
    } catch (const std::exception&) {
      throw BackendError("bad random weight seed: " + weights);
    }
    model.network.randomize(seed);
  } else {
    load_darknet_weights(model.network, weights);
  }
  return std::make_unique<GridDetector>(std::move(model), std::move(config), std::move(class_names));
}

std::vector<std::string> read_class_names(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw BackendError("cannot open class names: " + path.string());
  std::vector<std::string> names;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (!line.empty()) names.push_back(line);
  }
  if (names.empty()) throw BackendError("no class names in " + path.string());
  return names;
}

}  // namespace patchguard
