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

// Independent reference computations used only by tests. None of these call
// into the code paths they check.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <set>
#include <utility>
#include <vector>

#include "trig/engine.hpp"
#include "trig/geometry.hpp"

namespace trig::oracle {

struct BitmapAreas {
  std::int64_t pred = 0, gt = 0, inter = 0, uni = 0;
};

// Rasterizes both sets on a canvas and counts pixels.
inline BitmapAreas bitmap_areas(const std::vector<BBox>& pred, const std::vector<BBox>& gt, int canvas = 64) {
  std::vector<std::uint8_t> px(static_cast<std::size_t>(canvas * canvas), 0);
  auto fill = [&](const std::vector<BBox>& boxes, std::uint8_t bit) {
    for (const auto& b : boxes)
      for (auto y = b.y1; y < b.y2; ++y)
        for (auto x = b.x1; x < b.x2; ++x) px[static_cast<std::size_t>(y * canvas + x)] |= bit;
  };
  fill(pred, 1);
  fill(gt, 2);
  BitmapAreas a;
  for (auto v : px) {
    a.pred += (v & 1) ? 1 : 0;
    a.gt += (v & 2) ? 1 : 0;
    a.inter += v == 3 ? 1 : 0;
    a.uni += v != 0 ? 1 : 0;
  }
  return a;
}

inline BBox random_box(std::mt19937_64& rng, int canvas = 64) {
  std::uniform_int_distribution<int> d(0, canvas);
  for (;;) {
    int a = d(rng), b = d(rng), c = d(rng), e = d(rng);
    if (a == b || c == e) continue;
    return BBox{std::min(a, b), std::min(c, e), std::max(a, b), std::max(c, e)};
  }
}

inline std::vector<BBox> random_boxes(std::mt19937_64& rng, int lo, int hi, int canvas = 64) {
  std::uniform_int_distribution<int> n(lo, hi);
  std::vector<BBox> out(static_cast<std::size_t>(n(rng)));
  for (auto& b : out) b = random_box(rng, canvas);
  return out;
}

// Naive triple loop.
inline std::vector<std::vector<double>> dot_matrix(const std::vector<std::vector<double>>& text,
                                                   const std::vector<std::vector<double>>& patches) {
  std::vector<std::vector<double>> x(text.size(), std::vector<double>(patches.size(), 0.0));
  for (std::size_t i = 0; i < text.size(); ++i)
    for (std::size_t j = 0; j < patches.size(); ++j)
      for (std::size_t k = 0; k < text[i].size(); ++k) x[i][j] += text[i][k] * patches[j][k];
  return x;
}

// Merged embedding of every patch by scanning all patches for window
// membership (Chebyshev distance <= half); neighbors are visited in ascending
// index order.
inline std::vector<std::vector<double>> merge_by_enumeration(const std::vector<std::vector<double>>& patches,
                                                             std::int64_t rows, std::int64_t cols, std::int64_t window) {
  const auto half = window / 2;
  std::vector<std::vector<double>> out(patches.size());
  for (std::int64_t i = 0; i < rows * cols; ++i) {
    std::vector<double> acc(patches[0].size(), 0.0);
    double n = 0.0;
    for (std::int64_t j = 0; j < rows * cols; ++j) {
      if (std::max(std::abs(i / cols - j / cols), std::abs(i % cols - j % cols)) > half) continue;
      for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += patches[static_cast<std::size_t>(j)][k];
      n += 1.0;
    }
    for (auto& v : acc) v /= n;
    out[static_cast<std::size_t>(i)] = std::move(acc);
  }
  return out;
}

// Reference 2-level selection: full stable sort, explicit neighbor scan of the
// selected list (or seed list) for each candidate.
inline std::set<std::size_t> select_reference(const std::vector<double>& s, std::int64_t cols, std::size_t k1,
                                              std::size_t k2, bool seeds_only = false) {
  std::vector<std::pair<double, std::size_t>> order;
  for (std::size_t i = 0; i < s.size(); ++i) order.emplace_back(-s[i], i);
  std::sort(order.begin(), order.end());
  k2 = std::min(k2, s.size());
  std::vector<std::size_t> chosen;
  for (std::size_t r = 0; r < k1; ++r) chosen.push_back(order[r].second);
  const std::vector<std::size_t> seeds = chosen;
  auto touches = [&](std::size_t p, const std::vector<std::size_t>& set) {
    const auto pr = static_cast<std::int64_t>(p) / cols, pc = static_cast<std::int64_t>(p) % cols;
    for (auto q : set) {
      const auto qr = static_cast<std::int64_t>(q) / cols, qc = static_cast<std::int64_t>(q) % cols;
      if (q != p && std::abs(pr - qr) <= 1 && std::abs(pc - qc) <= 1) return true;
    }
    return false;
  };
  for (std::size_t r = k1; r < k2; ++r) {
    const auto p = order[r].second;
    if (touches(p, seeds_only ? seeds : chosen)) chosen.push_back(p);
  }
  return {chosen.begin(), chosen.end()};
}

// Central differences of f with respect to every entry of m.
inline Matrix finite_difference(const std::function<double(const Matrix&)>& f, Matrix m, double eps = 1e-4) {
  Matrix g(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) {
      const double orig = m(i, j);
      m(i, j) = orig + eps;
      const double up = f(m);
      m(i, j) = orig - eps;
      const double down = f(m);
      m(i, j) = orig;
      g(i, j) = (up - down) / (2.0 * eps);
    }
  }
  return g;
}

// Direct transcription of -log(e^{a} / (e^{a} + e^{b})) for moderate inputs.
inline double contrastive_direct(double pos, double neg) { return -std::log(std::exp(pos) / (std::exp(pos) + std::exp(neg))); }

}  // namespace trig::oracle
