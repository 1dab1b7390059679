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

#ifndef PATCHGUARD_REGION_H_
#define PATCHGUARD_REGION_H_

#include "patchguard/imaging.h"

namespace patchguard {

/// Inclusive rectangle of block indices on an S x S grid.
struct RegionRect {
  int row_start = 0;
  int row_end = 0;
  int col_start = 0;
  int col_end = 0;

  static RegionRect single(int row, int col) { return {row, row, col, col}; }
  static RegionRect full(int grid_size) { return {0, grid_size - 1, 0, grid_size - 1}; }

  int rows() const { return row_end - row_start + 1; }
  int cols() const { return col_end - col_start + 1; }
  int block_count() const { return rows() * cols(); }
  bool contains(int row, int col) const {
    return row >= row_start && row <= row_end && col >= col_start && col <= col_end;
  }
  bool contains(const RegionRect& o) const {
    return o.row_start >= row_start && o.row_end <= row_end && o.col_start >= col_start && o.col_end <= col_end;
  }
  bool is_full(int grid_size) const { return *this == full(grid_size); }
  bool valid(int grid_size) const {
    return 0 <= row_start && row_start <= row_end && row_end < grid_size && 0 <= col_start &&
           col_start <= col_end && col_end < grid_size;
  }
  bool operator==(const RegionRect&) const = default;
};

/// Pixel extent covered by a block rectangle.
inline PixelRect to_pixel_rect(const BlockGrid& grid, const RegionRect& region) {
  const PixelRect& tl = grid.at(region.row_start, region.col_start).rect;
  const PixelRect& br = grid.at(region.row_end, region.col_end).rect;
  return {tl.row, tl.col, br.bottom() - tl.row, br.right() - tl.col};
}

}  // namespace patchguard

#endif  // PATCHGUARD_REGION_H_
