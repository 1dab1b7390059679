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

#ifndef PATCHGUARD_CONFIG_H_
#define PATCHGUARD_CONFIG_H_

#include <filesystem>
#include <map>
#include <optional>
#include <string>

namespace patchguard {

inline constexpr const char* kConfigEnvVar = "PATCHGUARD_CONFIG";

/// Flat `key = value` settings. Lines starting with '#' are comments.
class KeyValueConfig {
 public:
  KeyValueConfig() = default;

  static KeyValueConfig parse(const std::string& text, const std::string& origin = "<string>");
  static KeyValueConfig load(const std::filesystem::path& path);

  bool contains(const std::string& key) const { return values_.count(key) != 0; }
  void set(const std::string& key, std::string value) { values_[key] = std::move(value); }

  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  long get_int(const std::string& key, long fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::optional<std::string> find(const std::string& key) const;

  const std::map<std::string, std::string>& values() const { return values_; }
  const std::filesystem::path& source() const { return source_; }

 private:
  std::map<std::string, std::string> values_;
  std::filesystem::path source_;
};

/// Explicit path first, then $PATCHGUARD_CONFIG, then ./patchguard.conf if it exists.
std::optional<std::filesystem::path> resolve_config_path(const std::optional<std::string>& explicit_path);

}  // namespace patchguard

#endif  // PATCHGUARD_CONFIG_H_
