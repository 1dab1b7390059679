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

#ifndef PATCHGUARD_ERRORS_H_
#define PATCHGUARD_ERRORS_H_

#include <stdexcept>
#include <string>

namespace patchguard {

// Shapes disagree, or an image is too small for the requested operation.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A numeric or configuration parameter is outside its valid range.
class ParameterError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// The detection backend failed (missing or corrupt weights, bad cfg, I/O).
class BackendError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// The backend cannot provide a requested capability (e.g. gradients).
class CapabilityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace patchguard

#endif  // PATCHGUARD_ERRORS_H_
