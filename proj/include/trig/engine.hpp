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

// Embedding-based grounding over precomputed patch and text embeddings:
// late-interaction scoring with a patch mask, the contrastive loss in its
// two algebraic forms with analytic gradients, neighborhood embedding
// merging, patch/text similarity and 2-level top-k patch selection.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "trig/error.hpp"
#include "trig/geometry.hpp"

namespace trig {

// Dense row-major matrix.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0) : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) throw EngineError("matrix data size does not match its shape");
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  const std::vector<double>& data() const noexcept { return data_; }
  std::vector<double>& data() noexcept { return data_; }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s;
}

// One sample's embeddings: a rows x cols grid of patch embeddings (row-major
// over the grid) and l_text token embeddings, all of width dim.
struct EmbeddingSet {
  std::int64_t rows = 0;
  std::int64_t cols = 0;
  Matrix image;  // (rows*cols) x dim
  Matrix text;   // l_text x dim

  std::size_t dim() const noexcept { return image.cols(); }
  std::size_t num_patches() const noexcept { return image.rows(); }
  std::size_t num_tokens() const noexcept { return text.rows(); }

  void validate() const {
    if (rows < 1 || cols < 1) throw EngineError("embedding grid needs at least one patch");
    if (image.rows() != static_cast<std::size_t>(rows * cols)) throw EngineError("image embeddings do not match grid");
    if (text.rows() < 1) throw EngineError("no text embeddings");
    if (image.cols() != text.cols()) throw EngineError("dimension mismatch between image and text embeddings");
    if (image.cols() < 1) throw EngineError("zero embedding width");
    auto finite = [](const Matrix& m) {
      return std::all_of(m.data().begin(), m.data().end(), [](double v) { return std::isfinite(v); });
    };
    if (!finite(image) || !finite(text)) throw EngineError("non-finite embedding entry");
  }

  friend bool operator==(const EmbeddingSet&, const EmbeddingSet&) = default;
};

struct InteractionMatrix {
  Matrix x;  // l_text x l_image
  PatchMask mask;
};

inline InteractionMatrix interaction(const EmbeddingSet& e) {
  if (e.image.cols() != e.text.cols()) throw EngineError("dimension mismatch between image and text embeddings");
  InteractionMatrix m{Matrix(e.num_tokens(), e.num_patches()), PatchMask(e.num_patches(), true)};
  for (std::size_t i = 0; i < e.num_tokens(); ++i)
    for (std::size_t j = 0; j < e.num_patches(); ++j) m.x(i, j) = dot(e.text.row(i), e.image.row(j));
  return m;
}

inline InteractionMatrix with_mask(InteractionMatrix m, PatchMask mask) {
  if (mask.size() != m.x.cols()) throw EngineError("mask length does not match patch count");
  m.mask = std::move(mask);
  return m;
}

namespace detail {

// Column of each row's maximum over masked columns; ties go to the lowest index.
inline std::vector<std::size_t> masked_argmax(const Matrix& x, const PatchMask& mask) {
  if (mask.size() != x.cols()) throw EngineError("mask length does not match patch count");
  std::vector<std::size_t> out(x.rows());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    std::optional<std::size_t> best;
    for (std::size_t j = 0; j < x.cols(); ++j) {
      if (!mask[j]) continue;
      if (!best || x(i, j) > x(i, *best)) best = j;
    }
    if (!best) throw EngineError("empty mask");
    out[i] = *best;
  }
  return out;
}

inline double score_with(const Matrix& x, const PatchMask& mask) {
  const auto arg = masked_argmax(x, mask);
  double s = 0.0;
  for (std::size_t i = 0; i < x.rows(); ++i) s += x(i, arg[i]);
  return s;
}

inline void require_finite(const Matrix& x) {
  if (!std::all_of(x.data().begin(), x.data().end(), [](double v) { return std::isfinite(v); }))
    throw EngineError("non-finite interaction entry");
}

inline double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

inline double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace detail

/// Masked col-score: sum over text rows of the row maximum over masked patches.
inline double col_score(const InteractionMatrix& m) { return detail::score_with(m.x, m.mask); }

struct LossConfig {
  double tau = 1.0;
};

// Scores entering the loss: the positive pair under its ground-truth mask,
// the negative pair over all patches.
struct PairScores {
  double positive = 0.0;
  double negative = 0.0;
};

inline PairScores pair_scores(const InteractionMatrix& pos, const InteractionMatrix& neg) {
  detail::require_finite(pos.x);
  detail::require_finite(neg.x);
  return {col_score(pos), detail::score_with(neg.x, PatchMask(neg.x.cols(), true))};
}

/// Contrastive loss with one negative, evaluated as log-sum-exp minus the positive logit.
inline double infoce_loss(const InteractionMatrix& pos, const InteractionMatrix& neg, const LossConfig& cfg = {}) {
  if (!(cfg.tau > 0.0) || !std::isfinite(cfg.tau)) throw EngineError("temperature must be positive");
  const auto s = pair_scores(pos, neg);
  const double a = s.positive / cfg.tau;
  const double b = s.negative / cfg.tau;
  // log(e^a + e^b) - a, with the max factored out before subtracting a.
  const double m = std::max(a, b);
  return (m - a) + std::log1p(std::exp(std::min(a, b) - m));
}

/// softplus(s_neg - s_pos): the single-negative, unit-temperature form.
inline double softplus_loss(const InteractionMatrix& pos, const InteractionMatrix& neg) {
  const auto s = pair_scores(pos, neg);
  return detail::softplus(s.negative - s.positive);
}

// The single-negative form with the mask placement exactly as it is commonly
// printed: softplus(s(X-, M)) - s(X+, 1), where M is the positive's mask.
// Kept for comparison only; it is not a valid contrastive objective.
inline double softplus_loss_as_printed(const InteractionMatrix& pos, const InteractionMatrix& neg) {
  detail::require_finite(pos.x);
  detail::require_finite(neg.x);
  return detail::softplus(detail::score_with(neg.x, pos.mask)) -
         detail::score_with(pos.x, PatchMask(pos.x.cols(), true));
}

struct LossGradient {
  Matrix d_pos;
  Matrix d_neg;
};

// Gradient of softplus((s_neg - s_pos) / tau). Each row contributes through
// its argmax only (lowest index on ties), so every row of each gradient has
// exactly one nonzero.
inline LossGradient loss_grad(const InteractionMatrix& pos, const InteractionMatrix& neg, const LossConfig& cfg = {}) {
  if (!(cfg.tau > 0.0)) throw EngineError("temperature must be positive");
  const auto s = pair_scores(pos, neg);
  const double g = detail::sigmoid((s.negative - s.positive) / cfg.tau) / cfg.tau;
  LossGradient out{Matrix(pos.x.rows(), pos.x.cols()), Matrix(neg.x.rows(), neg.x.cols())};
  const auto pos_arg = detail::masked_argmax(pos.x, pos.mask);
  const auto neg_arg = detail::masked_argmax(neg.x, PatchMask(neg.x.cols(), true));
  for (std::size_t i = 0; i < pos.x.rows(); ++i) out.d_pos(i, pos_arg[i]) = -g;
  for (std::size_t i = 0; i < neg.x.rows(); ++i) out.d_neg(i, neg_arg[i]) = g;
  return out;
}

// Patch neighborhood used by merging and by adjacency in selection.
enum class Adjacency { GrowingSet, SeedsOnly };

struct SelectConfig {
  std::size_t k1 = 5;
  std::size_t k2 = 30;
  std::int64_t window = 3;
  Adjacency adjacency = Adjacency::GrowingSet;

  void validate() const {
    if (k1 < 1) throw EngineError("k1 must be at least 1");
    if (k1 > k2) throw EngineError("k1 must not exceed k2");
    if (window < 1 || window % 2 == 0) throw EngineError("merge window must be an odd integer >= 1");
  }
};

// Each patch embedding becomes the mean of the in-bounds window x window
// block centered on it; windows are truncated at the grid border. Sums run in
// row-major order over the block.
inline EmbeddingSet merge_embeddings(const EmbeddingSet& e, std::int64_t window) {
  if (window < 1 || window % 2 == 0) throw EngineError("merge window must be an odd integer >= 1");
  const auto half = window / 2;
  EmbeddingSet out = e;
  const auto dim = e.dim();
  std::vector<double> acc(dim);
  for (std::int64_t r = 0; r < e.rows; ++r) {
    for (std::int64_t c = 0; c < e.cols; ++c) {
      std::fill(acc.begin(), acc.end(), 0.0);
      std::size_t n = 0;
      for (auto rr = std::max<std::int64_t>(0, r - half); rr <= std::min(e.rows - 1, r + half); ++rr) {
        for (auto cc = std::max<std::int64_t>(0, c - half); cc <= std::min(e.cols - 1, c + half); ++cc) {
          const auto src = e.image.row(static_cast<std::size_t>(rr * e.cols + cc));
          for (std::size_t k = 0; k < dim; ++k) acc[k] += src[k];
          ++n;
        }
      }
      auto dst = out.image.row(static_cast<std::size_t>(r * e.cols + c));
      for (std::size_t k = 0; k < dim; ++k) dst[k] = acc[k] / static_cast<double>(n);
    }
  }
  return out;
}

/// S_i: mean over text tokens of the dot product with patch i.
inline std::vector<double> similarity(const EmbeddingSet& e) {
  if (e.image.cols() != e.text.cols()) throw EngineError("dimension mismatch between image and text embeddings");
  if (e.num_tokens() == 0) throw EngineError("no text embeddings");
  std::vector<double> s(e.num_patches());
  for (std::size_t i = 0; i < e.num_patches(); ++i) {
    double acc = 0.0;
    for (std::size_t k = 0; k < e.num_tokens(); ++k) acc += dot(e.image.row(i), e.text.row(k));
    s[i] = acc / static_cast<double>(e.num_tokens());
  }
  return s;
}

/// Patch indices ordered by descending similarity, lowest index first on ties.
inline std::vector<std::size_t> rank_patches(std::span<const double> s, std::size_t top) {
  std::vector<std::size_t> idx(s.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  top = std::min(top, idx.size());
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(top), idx.end(),
                    [&](std::size_t a, std::size_t b) { return s[a] > s[b] || (s[a] == s[b] && a < b); });
  idx.resize(top);
  return idx;
}

inline bool adjacent8(std::size_t a, std::size_t b, std::int64_t cols) {
  const auto ar = static_cast<std::int64_t>(a) / cols, ac = static_cast<std::int64_t>(a) % cols;
  const auto br = static_cast<std::int64_t>(b) / cols, bc = static_cast<std::int64_t>(b) % cols;
  return a != b && std::abs(ar - br) <= 1 && std::abs(ac - bc) <= 1;
}

// Seeds with the k1 most similar patches, then walks the rest of the top-k2
// pool in descending order once, admitting a patch when it touches (8-way)
// the selection built so far (or only the seeds, with Adjacency::SeedsOnly).
// Returns ascending patch indices.
inline std::vector<std::size_t> two_level_select(std::span<const double> s, std::int64_t rows, std::int64_t cols,
                                                 const SelectConfig& cfg) {
  cfg.validate();
  if (s.size() != static_cast<std::size_t>(rows * cols)) throw EngineError("similarity length does not match grid");
  if (cfg.k1 > s.size()) throw EngineError("k1 exceeds the number of patches");
  const auto pool = rank_patches(s, cfg.k2);

  std::vector<char> selected(s.size(), 0);
  std::vector<char> seed(s.size(), 0);
  for (std::size_t i = 0; i < cfg.k1; ++i) selected[pool[i]] = seed[pool[i]] = 1;
  const auto& anchor = cfg.adjacency == Adjacency::GrowingSet ? selected : seed;

  for (std::size_t i = cfg.k1; i < pool.size(); ++i) {
    const auto p = static_cast<std::int64_t>(pool[i]);
    const auto r = p / cols, c = p % cols;
    bool touches = false;
    for (auto dr = -1; dr <= 1 && !touches; ++dr) {
      for (auto dc = -1; dc <= 1 && !touches; ++dc) {
        const auto nr = r + dr, nc = c + dc;
        if ((dr == 0 && dc == 0) || nr < 0 || nc < 0 || nr >= rows || nc >= cols) continue;
        touches = anchor[static_cast<std::size_t>(nr * cols + nc)] != 0;
      }
    }
    if (touches) selected[pool[i]] = 1;
  }
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < selected.size(); ++i)
    if (selected[i]) out.push_back(i);
  return out;
}

inline std::vector<std::size_t> two_level_select(std::span<const double> s, const PatchGrid& grid,
                                                 const SelectConfig& cfg) {
  return two_level_select(s, grid.rows, grid.cols, cfg);
}

struct GroundResult {
  std::vector<std::size_t> patches;
  std::vector<BBox> boxes;
  std::optional<double> pixel_iou;
};

// merge -> similarity -> 2-level selection -> patch rectangles.
inline GroundResult ground(const EmbeddingSet& e, ImageDims image, const SelectConfig& cfg,
                           std::optional<std::span<const BBox>> gt = std::nullopt) {
  e.validate();
  cfg.validate();
  const PatchGrid grid(e.rows, e.cols, image.width, image.height);
  const auto merged = merge_embeddings(e, cfg.window);
  const auto s = similarity(merged);
  GroundResult out;
  out.patches = two_level_select(s, e.rows, e.cols, cfg);
  out.boxes.reserve(out.patches.size());
  for (auto p : out.patches) out.boxes.push_back(patch_rect(p, grid));
  if (gt) out.pixel_iou = pixel_iou(out.boxes, *gt);
  return out;
}

}  // namespace trig
