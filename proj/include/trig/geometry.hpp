// Copyright 2026 The trig Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "trig/error.hpp"

namespace trig {

// Axis-aligned box over the half-open pixel region [x1,x2) x [y1,y2).
struct BBox {
  std::int64_t x1 = 0;
  std::int64_t y1 = 0;
  std::int64_t x2 = 1;
  std::int64_t y2 = 1;

  BBox() = default;
  BBox(std::int64_t left, std::int64_t top, std::int64_t right, std::int64_t bottom)
      : x1(left), y1(top), x2(right), y2(bottom) {
    if (!(x1 < x2 && y1 < y2)) throw GeometryError("degenerate box");
    if (x1 < 0 || y1 < 0) throw GeometryError("negative box origin");
  }

  /// True when the coordinates would satisfy the constructor's checks.
  static bool valid(std::int64_t x1, std::int64_t y1, std::int64_t x2, std::int64_t y2) noexcept {
    return x1 < x2 && y1 < y2 && x1 >= 0 && y1 >= 0;
  }

  std::int64_t width() const noexcept { return x2 - x1; }
  std::int64_t height() const noexcept { return y2 - y1; }

  friend bool operator==(const BBox&, const BBox&) = default;
};

inline std::int64_t area(const BBox& b) noexcept { return b.width() * b.height(); }

inline std::optional<BBox> intersect(const BBox& a, const BBox& b) {
  const auto x1 = std::max(a.x1, b.x1);
  const auto y1 = std::max(a.y1, b.y1);
  const auto x2 = std::min(a.x2, b.x2);
  const auto y2 = std::min(a.y2, b.y2);
  if (x1 >= x2 || y1 >= y2) return std::nullopt;
  return BBox{x1, y1, x2, y2};
}

// Relative box on a declared scale (1.0 means fractions of the image size).
struct RelBox {
  double rx1 = 0.0;
  double ry1 = 0.0;
  double rx2 = 1.0;
  double ry2 = 1.0;
  double scale = 1.0;

  bool valid() const noexcept {
    return scale > 0.0 && 0.0 <= rx1 && rx1 < rx2 && rx2 <= scale && 0.0 <= ry1 && ry1 < ry2 &&
           ry2 <= scale;
  }
};

struct ImageDims {
  std::int64_t width = 0;
  std::int64_t height = 0;
};

/// Rounds to the nearest integer, halves away from zero.
inline std::int64_t round_half_away(double v) noexcept {
  return static_cast<std::int64_t>(std::round(v));
}

inline BBox rel_to_abs(const RelBox& r, ImageDims dims) {
  if (!r.valid()) throw GeometryError("relative box outside its scale");
  auto conv = [&](double v, std::int64_t dim) {
    return std::clamp<std::int64_t>(round_half_away(v * static_cast<double>(dim) / r.scale), 0, dim);
  };
  const auto x1 = conv(r.rx1, dims.width);
  const auto y1 = conv(r.ry1, dims.height);
  const auto x2 = conv(r.rx2, dims.width);
  const auto y2 = conv(r.ry2, dims.height);
  if (x1 >= x2 || y1 >= y2) throw GeometryError("degenerate box");
  return BBox{x1, y1, x2, y2};
}

struct RegionAreas {
  std::int64_t pred_union = 0;
  std::int64_t gt_union = 0;
  std::int64_t intersection = 0;
  std::int64_t union_all = 0;

  friend bool operator==(const RegionAreas&, const RegionAreas&) = default;
};

namespace detail {

// Coverage flags per compressed cell; bit 0 = pred, bit 1 = gt.
inline void paint(std::span<const BBox> boxes, std::uint8_t bit, const std::vector<std::int64_t>& xs,
                  const std::vector<std::int64_t>& ys, std::vector<std::uint8_t>& cells) {
  const std::size_t nx = xs.size() - 1;
  for (const auto& b : boxes) {
    const auto cx0 = static_cast<std::size_t>(std::lower_bound(xs.begin(), xs.end(), b.x1) - xs.begin());
    const auto cx1 = static_cast<std::size_t>(std::lower_bound(xs.begin(), xs.end(), b.x2) - xs.begin());
    const auto cy0 = static_cast<std::size_t>(std::lower_bound(ys.begin(), ys.end(), b.y1) - ys.begin());
    const auto cy1 = static_cast<std::size_t>(std::lower_bound(ys.begin(), ys.end(), b.y2) - ys.begin());
    for (std::size_t cy = cy0; cy < cy1; ++cy)
      for (std::size_t cx = cx0; cx < cx1; ++cx) cells[cy * nx + cx] |= bit;
  }
}

}  // namespace detail

// Exact pixel counts of the two unions, their overlap and their union, by
// coordinate compression over every distinct box edge.
inline RegionAreas region_areas(std::span<const BBox> pred, std::span<const BBox> gt) {
  std::vector<std::int64_t> xs;
  std::vector<std::int64_t> ys;
  xs.reserve(2 * (pred.size() + gt.size()));
  ys.reserve(xs.capacity());
  for (auto set : {pred, gt}) {
    for (const auto& b : set) {
      xs.push_back(b.x1);
      xs.push_back(b.x2);
      ys.push_back(b.y1);
      ys.push_back(b.y2);
    }
  }
  RegionAreas out;
  if (xs.empty()) return out;
  std::sort(xs.begin(), xs.end());
  xs.erase(std::unique(xs.begin(), xs.end()), xs.end());
  std::sort(ys.begin(), ys.end());
  ys.erase(std::unique(ys.begin(), ys.end()), ys.end());

  const std::size_t nx = xs.size() - 1;
  const std::size_t ny = ys.size() - 1;
  std::vector<std::uint8_t> cells(nx * ny, 0);
  detail::paint(pred, 1, xs, ys, cells);
  detail::paint(gt, 2, xs, ys, cells);

  for (std::size_t cy = 0; cy < ny; ++cy) {
    const auto h = ys[cy + 1] - ys[cy];
    for (std::size_t cx = 0; cx < nx; ++cx) {
      const auto flags = cells[cy * nx + cx];
      if (flags == 0) continue;
      const auto a = h * (xs[cx + 1] - xs[cx]);
      if (flags & 1) out.pred_union += a;
      if (flags & 2) out.gt_union += a;
      if (flags == 3) out.intersection += a;
      out.union_all += a;
    }
  }
  return out;
}

/// Pixel IoU of two box sets; 0 when both are empty.
inline double pixel_iou(std::span<const BBox> pred, std::span<const BBox> gt) {
  const auto r = region_areas(pred, gt);
  if (r.union_all == 0) return 0.0;
  return static_cast<double>(r.intersection) / static_cast<double>(r.union_all);
}

struct PatchGrid {
  std::int64_t rows = 32;
  std::int64_t cols = 32;
  std::int64_t image_w = 0;
  std::int64_t image_h = 0;

  PatchGrid() = default;
  PatchGrid(std::int64_t r, std::int64_t c, std::int64_t w, std::int64_t h)
      : rows(r), cols(c), image_w(w), image_h(h) {
    if (rows < 1 || cols < 1) throw GeometryError("patch grid needs at least one row and column");
    if (image_w < cols || image_h < rows) throw GeometryError("image smaller than patch grid");
  }

  std::size_t size() const noexcept { return static_cast<std::size_t>(rows * cols); }
};

inline BBox patch_rect(std::int64_t row, std::int64_t col, const PatchGrid& grid) {
  if (row < 0 || col < 0 || row >= grid.rows || col >= grid.cols)
    throw GeometryError("patch index out of range");
  // Integer floor division; all operands are non-negative.
  return BBox{col * grid.image_w / grid.cols, row * grid.image_h / grid.rows,
              (col + 1) * grid.image_w / grid.cols, (row + 1) * grid.image_h / grid.rows};
}

inline BBox patch_rect(std::size_t index, const PatchGrid& grid) {
  const auto i = static_cast<std::int64_t>(index);
  return patch_rect(i / grid.cols, i % grid.cols, grid);
}

// Row-major, one flag per patch.
struct PatchMask {
  std::vector<bool> bits;

  PatchMask() = default;
  explicit PatchMask(std::size_t n, bool value = false) : bits(n, value) {}

  std::size_t size() const noexcept { return bits.size(); }
  std::size_t count() const noexcept {
    return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), true));
  }
  bool operator[](std::size_t i) const { return bits[i]; }

  friend bool operator==(const PatchMask&, const PatchMask&) = default;
};

inline PatchMask boxes_to_patch_mask(std::span<const BBox> boxes, const PatchGrid& grid) {
  PatchMask mask(grid.size());
  for (const auto& b : boxes) {
    // Candidate rows/cols from the box extent; exact test via intersect.
    const auto c0 = std::max<std::int64_t>(0, b.x1 * grid.cols / grid.image_w - 1);
    const auto c1 = std::min<std::int64_t>(grid.cols - 1, b.x2 * grid.cols / grid.image_w + 1);
    const auto r0 = std::max<std::int64_t>(0, b.y1 * grid.rows / grid.image_h - 1);
    const auto r1 = std::min<std::int64_t>(grid.rows - 1, b.y2 * grid.rows / grid.image_h + 1);
    for (auto r = r0; r <= r1; ++r)
      for (auto c = c0; c <= c1; ++c)
        if (intersect(patch_rect(r, c, grid), b)) mask.bits[static_cast<std::size_t>(r * grid.cols + c)] = true;
  }
  return mask;
}

inline std::string to_string(const BBox& b) {
  return "(" + std::to_string(b.x1) + "," + std::to_string(b.y1) + "," + std::to_string(b.x2) + "," +
         std::to_string(b.y2) + ")";
}

}  // namespace trig
