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

#include "patchguard/darknet.h"

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

namespace patchguard {

namespace {

struct Section {
  std::string name;
  std::map<std::string, std::string> options;
  int line = 0;
};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<Section> read_sections(std::istream& in) {
  std::vector<Section> sections;
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string line = trim(raw);
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw BackendError("cfg line " + std::to_string(line_no) + ": malformed section header");
      sections.push_back({line.substr(1, line.size() - 2), {}, line_no});
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos || sections.empty()) {
      throw BackendError("cfg line " + std::to_string(line_no) + ": expected key=value inside a section");
    }
    sections.back().options[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return sections;
}

int get_int(const Section& s, const std::string& key, int fallback) {
  auto it = s.options.find(key);
  if (it == s.options.end()) return fallback;
  try {
    return std::stoi(it->second);
  } catch (const std::exception&) {
    throw BackendError("cfg [" + s.name + "] line " + std::to_string(s.line) + ": bad integer for " + key);
  }
}

std::vector<double> get_list(const Section& s, const std::string& key) {
  std::vector<double> out;
  auto it = s.options.find(key);
  if (it == s.options.end()) return out;
  std::stringstream ss(it->second);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(std::stod(item));
  }
  return out;
}

Activation parse_activation(const Section& s) {
  auto it = s.options.find("activation");
  const std::string a = it == s.options.end() ? "logistic" : it->second;
  if (a == "leaky") return Activation::kLeaky;
  if (a == "linear") return Activation::kLinear;
  if (a == "relu") return Activation::kRelu;
  throw BackendError("cfg [" + s.name + "] line " + std::to_string(s.line) + ": unsupported activation " + a);
}

}  // namespace

DarknetModel parse_darknet_cfg(std::istream& cfg, std::optional<int> input_size) {
  const auto sections = read_sections(cfg);
  if (sections.empty() || (sections[0].name != "net" && sections[0].name != "network")) {
    throw BackendError("cfg: first section must be [net]");
  }
  const Section& net = sections[0];
  Shape input{get_int(net, "channels", 3), get_int(net, "height", 416), get_int(net, "width", 416)};
  if (input_size) input.height = input.width = *input_size;

  DarknetModel model;
  model.network = Network(input);
  bool have_region = false;
  for (size_t i = 1; i < sections.size(); ++i) {
    const Section& s = sections[i];
    if (have_region) throw BackendError("cfg: [region] must be the last section");
    if (s.name == "convolutional") {
      ConvParams p;
      p.filters = get_int(s, "filters", 1);
      p.size = get_int(s, "size", 1);
      p.stride = get_int(s, "stride", 1);
      p.pad = get_int(s, "pad", 0) ? p.size / 2 : get_int(s, "padding", 0);
      p.batch_normalize = get_int(s, "batch_normalize", 0) != 0;
      p.activation = parse_activation(s);
      model.network.add_conv(std::move(p));
    } else if (s.name == "maxpool") {
      MaxPoolParams p;
      p.size = get_int(s, "size", 2);
      p.stride = get_int(s, "stride", p.size);
      p.padding = get_int(s, "padding", p.size - 1);
      model.network.add_maxpool(p);
    } else if (s.name == "route") {
      RouteParams p;
      const int index = model.network.num_layers();
      for (double v : get_list(s, "layers")) {
        int src = static_cast<int>(v);
        p.sources.push_back(src < 0 ? index + src : src);
      }
      model.network.add_route(std::move(p));
    } else if (s.name == "reorg") {
      model.network.add_reorg({get_int(s, "stride", 2)});
    } else if (s.name == "region") {
      model.region.classes = get_int(s, "classes", 80);
      model.region.num = get_int(s, "num", 5);
      model.region.anchors = get_list(s, "anchors");
      if (model.region.anchors.size() != static_cast<size_t>(2 * model.region.num)) {
        throw BackendError("cfg [region]: expected 2*num anchor values");
      }
      have_region = true;
    } else {
      throw BackendError("cfg line " + std::to_string(s.line) + ": unsupported section [" + s.name + "]");
    }
  }
  if (!have_region) throw BackendError("cfg: missing [region] head");
  const int last = model.network.num_layers() - 1;
  if (last < 1 || model.network.kind(last) != LayerKind::kConv) {
    throw BackendError("cfg: the region head must follow a convolutional layer");
  }
  const Shape out = model.network.output_shape();
  if (out.channels != model.region.num * (5 + model.region.classes)) {
    throw BackendError("cfg: final conv has " + std::to_string(out.channels) + " filters, region head expects " +
                       std::to_string(model.region.num * (5 + model.region.classes)));
  }
  model.feature_layer = last - 1;
  return model;
}

DarknetModel load_darknet_cfg(const std::filesystem::path& path, std::optional<int> input_size) {
  std::ifstream in(path);
  if (!in) throw BackendError("cannot open cfg: " + path.string());
  return parse_darknet_cfg(in, input_size);
}

void load_darknet_weights(Network& network, const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw BackendError("cannot open weights: " + path.string());
  std::int32_t major = 0, minor = 0, revision = 0;
  in.read(reinterpret_cast<char*>(&major), 4);
  in.read(reinterpret_cast<char*>(&minor), 4);
  in.read(reinterpret_cast<char*>(&revision), 4);
  if ((major * 10 + minor) >= 2 && major < 1000 && minor < 1000) {
    std::uint64_t seen = 0;
    in.read(reinterpret_cast<char*>(&seen), 8);
  } else {
    std::int32_t seen = 0;
    in.read(reinterpret_cast<char*>(&seen), 4);
  }
  if (!in) throw BackendError("weights header truncated: " + path.string());
  auto read_into = [&](std::vector<float>& v) {
    in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(float)));
    if (!in) throw BackendError("weights file truncated: " + path.string());
  };
  for (int i = 0; i < network.num_layers(); ++i) {
    if (network.kind(i) != LayerKind::kConv) continue;
    ConvParams p = network.conv(i);
    read_into(p.biases);
    if (p.batch_normalize) {
      read_into(p.scales);
      read_into(p.rolling_mean);
      read_into(p.rolling_variance);
    }
    read_into(p.weights);
    network.set_conv(i, std::move(p));
  }
}

void save_darknet_weights(const Network& network, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw BackendError("cannot write weights: " + path.string());
  const std::int32_t header[3] = {0, 2, 0};
  const std::uint64_t seen = 0;
  out.write(reinterpret_cast<const char*>(header), sizeof header);
  out.write(reinterpret_cast<const char*>(&seen), sizeof seen);
  auto write = [&](const std::vector<float>& v) {
    out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(float)));
  };
  for (int i = 0; i < network.num_layers(); ++i) {
    if (network.kind(i) != LayerKind::kConv) continue;
    const ConvParams& p = network.conv(i);
    write(p.biases);
    if (p.batch_normalize) {
      write(p.scales);
      write(p.rolling_mean);
      write(p.rolling_variance);
    }
    write(p.weights);
  }
  if (!out) throw BackendError("failed writing weights: " + path.string());
}

}  // namespace patchguard
