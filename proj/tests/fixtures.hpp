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

// A 20-sample, four-dataset benchmark with planted index responses and the
// per-sample values worked out by hand.

#include <map>
#include <random>
#include <string>
#include <vector>

#include "trig/benchmark.hpp"
#include "trig/engine.hpp"

namespace trig::fixture {

struct Planted {
  std::string id;
  std::string dataset;
  std::vector<std::int64_t> gt;
  // Absent entries have no line in the responses file.
  std::optional<std::string> response;
  // Hand-computed: instance IoU, precision, recall, F1, followed.
  double iou, p, r, f1;
  bool followed;
};

inline std::vector<Planted> planted20() {
  const auto none = std::optional<std::string>{};
  return {
      {"chartqa-1", "chartqa", {1, 2}, "1, 2", 1.0, 1.0, 1.0, 1.0, true},
      {"chartqa-2", "chartqa", {1, 2}, "2, 3", 1.0 / 3.0, 0.5, 0.5, 0.5, true},
      {"chartqa-3", "chartqa", {0}, "I don't know.", 0.0, 0.0, 0.0, 0.0, false},
      {"chartqa-4", "chartqa", {3}, "0, 1", 0.0, 0.0, 0.0, 0.0, true},
      {"docvqa-1", "docvqa", {0, 1, 2, 3}, "0,1", 0.5, 1.0, 0.5, 2.0 / 3.0, true},
      {"docvqa-2", "docvqa", {0, 1, 2, 3}, "3, 2, 1, 0", 1.0, 1.0, 1.0, 1.0, true},
      {"docvqa-3", "docvqa", {0, 1, 2, 3}, none, 0.0, 0.0, 0.0, 0.0, false},
      {"docvqa-4", "docvqa", {0, 1, 2, 3}, "4", 0.0, 0.0, 0.0, 0.0, true},
      {"docvqa-5", "docvqa", {0, 1, 2, 3}, "0, 1, 2, 3, 4", 0.8, 0.8, 1.0, 8.0 / 9.0, true},
      {"docvqa-6", "docvqa", {0, 1, 2, 3}, "Indexes:\n3\nrow three holds it", 0.25, 1.0, 0.25, 0.4, true},
      {"infographicsvqa-1", "infographicsvqa", {0}, "0", 1.0, 1.0, 1.0, 1.0, true},
      {"infographicsvqa-2", "infographicsvqa", {4}, "4, 4", 1.0, 1.0, 1.0, 1.0, true},
      {"infographicsvqa-3", "infographicsvqa", {1, 3}, "1, 3", 1.0, 1.0, 1.0, 1.0, true},
      {"infographicsvqa-4", "infographicsvqa", {2}, "Sure: 2", 1.0, 1.0, 1.0, 1.0, true},
      {"infographicsvqa-5", "infographicsvqa", {0, 4}, "4,0", 1.0, 1.0, 1.0, 1.0, true},
      {"trins-1", "trins", {0}, "No.", 0.0, 0.0, 0.0, 0.0, false},
      {"trins-2", "trins", {1}, "", 0.0, 0.0, 0.0, 0.0, false},
      {"trins-3", "trins", {2}, "none of them", 0.0, 0.0, 0.0, 0.0, false},
      {"trins-4", "trins", {3}, "I cannot tell.", 0.0, 0.0, 0.0, 0.0, false},
      {"trins-5", "trins", {4}, "n/a", 0.0, 0.0, 0.0, 0.0, false},
  };
}

// Five OCR words in a row on a 100x100 image: box k = [20k, 0, 20k+20, 10].
inline Sample make_sample(const std::string& id, const std::string& dataset, std::vector<std::int64_t> gt) {
  Sample s;
  s.id = id;
  s.dataset = dataset;
  s.image_path = "images/" + id + ".png";
  s.image_w = 100;
  s.image_h = 100;
  s.question = "What is shown in " + id + "?";
  s.answer = "value " + id;
  for (std::int64_t k = 0; k < 5; ++k) s.ocr.push_back({k, BBox{20 * k, 0, 20 * k + 20, 10}, "w" + std::to_string(k)});
  s.gt_indices = std::move(gt);
  return s;
}

inline std::vector<Sample> samples20() {
  std::vector<Sample> out;
  for (const auto& p : planted20()) out.push_back(make_sample(p.id, p.dataset, p.gt));
  return out;
}

// Uniform in [-1, 1) from raw engine output, so fixtures are identical on
// every standard library.
inline double portable_uniform(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-52 - 1.0;
}

// A 32x32 grid of random embeddings in which patches touching the sample's
// ground-truth boxes lean towards the text tokens.
inline EmbeddingSet planted_embeddings(const Sample& s, std::uint64_t seed, std::size_t tokens = 4,
                                       std::size_t dim = 8) {
  std::mt19937_64 rng(seed);
  EmbeddingSet e;
  e.rows = 32;
  e.cols = 32;
  e.image = Matrix(1024, dim);
  e.text = Matrix(tokens, dim);
  for (auto& v : e.image.data()) v = portable_uniform(rng);
  for (auto& v : e.text.data()) v = portable_uniform(rng);
  const auto mask = boxes_to_patch_mask(gt_boxes(s), PatchGrid(32, 32, s.image_w, s.image_h));
  for (std::size_t p = 0; p < 1024; ++p) {
    if (!mask[p]) continue;
    for (std::size_t k = 0; k < dim; ++k) e.image(p, k) += e.text(0, k) + e.text(tokens - 1, k);
  }
  // Stored as 32-bit floats.
  for (auto* m : {&e.image, &e.text})
    for (auto& v : m->data()) v = static_cast<double>(static_cast<float>(v));
  return e;
}

}  // namespace trig::fixture
