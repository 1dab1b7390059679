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

#ifndef PATCHGUARD_IMAGE_IO_H_
#define PATCHGUARD_IMAGE_IO_H_

#include <filesystem>

#include "patchguard/imaging.h"

namespace patchguard {

// PNG or JPEG, decoded to R,G,B. Throws BackendError when the file cannot be read.
RasterImage read_image(const std::filesystem::path& path);

// Format is chosen from the extension (.png, .jpg, .jpeg).
void write_image(const std::filesystem::path& path, const RasterImage& image);

}  // namespace patchguard

#endif  // PATCHGUARD_IMAGE_IO_H_
