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

// Benchmark records and the line-delimited benchmark file.
//
// One JSON object per line:
//   {"id": "...", "dataset": "...",
//    "image": {"path": "...", "width": W, "height": H},
//    "question": "...", "answer": "...",
//    "ocr": [{"index": 0, "bbox": [x1, y1, x2, y2], "text": "..."}, ...],
//    "gt_indices": [...],
//    "accepted_by": ["annotator", ...]}          (optional)
//
// OCR entries are stored in index order, so entry k carries index k.

#include <array>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <string>
#include <unordered_set>
#include <vector>

#include "json.hpp"

#include "trig/error.hpp"
#include "trig/geometry.hpp"

namespace trig {

struct OcrBox {
  std::int64_t index = 0;
  BBox bbox;
  std::string text;

  friend bool operator==(const OcrBox&, const OcrBox&) = default;
};

struct Sample {
  std::string id;
  std::string dataset;
  std::string image_path;
  std::int64_t image_w = 0;
  std::int64_t image_h = 0;
  std::string question;
  std::string answer;
  std::vector<OcrBox> ocr;
  std::vector<std::int64_t> gt_indices;
  std::vector<std::string> accepted_by;

  ImageDims dims() const noexcept { return {image_w, image_h}; }
  std::int64_t max_index() const noexcept { return static_cast<std::int64_t>(ocr.size()) - 1; }

  friend bool operator==(const Sample&, const Sample&) = default;
};

inline std::vector<BBox> gt_boxes(const Sample& s) {
  std::vector<BBox> out;
  out.reserve(s.gt_indices.size());
  for (auto i : s.gt_indices) {
    if (i < 0 || i > s.max_index()) throw ScoringError("sample " + s.id + ": gt index out of range");
    out.push_back(s.ocr[static_cast<std::size_t>(i)].bbox);
  }
  return out;
}

inline std::vector<BBox> ocr_boxes(const Sample& s) {
  std::vector<BBox> out;
  out.reserve(s.ocr.size());
  for (const auto& o : s.ocr) out.push_back(o.bbox);
  return out;
}

struct LoadOptions {
  // Construction inputs carry no ground truth yet.
  bool require_gt = true;
};

namespace detail {

using nlohmann::json;

inline const json& require(const json& obj, const char* key, std::size_t line, const std::string& path) {
  const auto it = obj.find(key);
  if (it == obj.end()) throw SchemaError(line, path.empty() ? key : path + "." + key, "missing field");
  return *it;
}

inline std::string require_string(const json& obj, const char* key, std::size_t line, const std::string& path = {}) {
  const auto& v = require(obj, key, line, path);
  if (!v.is_string()) throw SchemaError(line, path.empty() ? key : path + "." + key, "expected string");
  return v.get<std::string>();
}

inline std::int64_t require_int(const json& v, std::size_t line, const std::string& field) {
  if (!v.is_number_integer()) throw SchemaError(line, field, "expected integer");
  return v.get<std::int64_t>();
}

}  // namespace detail

inline Sample sample_from_json(const nlohmann::json& j, std::size_t line, const LoadOptions& opts = {}) {
  using detail::require;
  using detail::require_int;
  using detail::require_string;
  if (!j.is_object()) throw SchemaError(line, "", "record is not an object");
  Sample s;
  s.id = require_string(j, "id", line);
  if (s.id.empty()) throw SchemaError(line, "id", "empty id");
  s.dataset = require_string(j, "dataset", line);
  if (s.dataset.empty()) throw SchemaError(line, "dataset", "empty dataset");

  const auto& image = require(j, "image", line, "");
  if (!image.is_object()) throw SchemaError(line, "image", "expected object");
  s.image_path = require_string(image, "path", line, "image");
  s.image_w = require_int(require(image, "width", line, "image"), line, "image.width");
  s.image_h = require_int(require(image, "height", line, "image"), line, "image.height");
  if (s.image_w <= 0) throw SchemaError(line, "image.width", "must be positive");
  if (s.image_h <= 0) throw SchemaError(line, "image.height", "must be positive");

  s.question = require_string(j, "question", line);
  if (s.question.empty()) throw SchemaError(line, "question", "empty question");
  s.answer = require_string(j, "answer", line);

  const auto& ocr = require(j, "ocr", line, "");
  if (!ocr.is_array()) throw SchemaError(line, "ocr", "expected array");
  for (std::size_t k = 0; k < ocr.size(); ++k) {
    const std::string path = "ocr[" + std::to_string(k) + "]";
    const auto& e = ocr[k];
    if (!e.is_object()) throw SchemaError(line, path, "expected object");
    OcrBox box;
    box.index = require_int(require(e, "index", line, path), line, path + ".index");
    if (box.index != static_cast<std::int64_t>(k))
      throw SchemaError(line, path + ".index", "expected " + std::to_string(k) + " (indices must be 0..N-1 in order)");
    const auto& bb = require(e, "bbox", line, path);
    if (!bb.is_array() || bb.size() != 4) throw SchemaError(line, path + ".bbox", "expected [x1, y1, x2, y2]");
    std::array<std::int64_t, 4> c{};
    for (std::size_t q = 0; q < 4; ++q)
      c[q] = require_int(bb[q], line, path + ".bbox[" + std::to_string(q) + "]");
    if (!BBox::valid(c[0], c[1], c[2], c[3]))
      throw SchemaError(line, path + ".bbox", "invalid box (need 0 <= x1 < x2, 0 <= y1 < y2)");
    if (c[2] > s.image_w || c[3] > s.image_h) throw SchemaError(line, path + ".bbox", "box exceeds image bounds");
    box.bbox = BBox{c[0], c[1], c[2], c[3]};
    box.text = require_string(e, "text", line, path);
    s.ocr.push_back(std::move(box));
  }

  const auto& gt = require(j, "gt_indices", line, "");
  if (!gt.is_array()) throw SchemaError(line, "gt_indices", "expected array");
  std::unordered_set<std::int64_t> seen;
  for (std::size_t k = 0; k < gt.size(); ++k) {
    const std::string path = "gt_indices[" + std::to_string(k) + "]";
    const auto v = require_int(gt[k], line, path);
    if (v < 0 || v > s.max_index()) throw SchemaError(line, path, "index " + std::to_string(v) + " is not an OCR index");
    if (!seen.insert(v).second) throw SchemaError(line, path, "duplicate index " + std::to_string(v));
    s.gt_indices.push_back(v);
  }
  if (opts.require_gt && s.gt_indices.empty()) throw SchemaError(line, "gt_indices", "empty ground truth");

  if (const auto it = j.find("accepted_by"); it != j.end()) {
    if (!it->is_array()) throw SchemaError(line, "accepted_by", "expected array");
    for (std::size_t k = 0; k < it->size(); ++k) {
      if (!(*it)[k].is_string()) throw SchemaError(line, "accepted_by[" + std::to_string(k) + "]", "expected string");
      s.accepted_by.push_back((*it)[k].get<std::string>());
    }
  }
  return s;
}

inline nlohmann::ordered_json sample_to_json(const Sample& s) {
  nlohmann::ordered_json j;
  j["id"] = s.id;
  j["dataset"] = s.dataset;
  j["image"] = {{"path", s.image_path}, {"width", s.image_w}, {"height", s.image_h}};
  j["question"] = s.question;
  j["answer"] = s.answer;
  auto ocr = nlohmann::ordered_json::array();
  for (const auto& o : s.ocr) {
    nlohmann::ordered_json e;
    e["index"] = o.index;
    e["bbox"] = {o.bbox.x1, o.bbox.y1, o.bbox.x2, o.bbox.y2};
    e["text"] = o.text;
    ocr.push_back(std::move(e));
  }
  j["ocr"] = std::move(ocr);
  j["gt_indices"] = s.gt_indices;
  if (!s.accepted_by.empty()) j["accepted_by"] = s.accepted_by;
  return j;
}

inline std::vector<Sample> read_benchmark(std::istream& in, const LoadOptions& opts = {}) {
  std::vector<Sample> out;
  std::set<std::string> ids;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
      throw SchemaError(line, "", std::string("malformed JSON: ") + e.what());
    }
    auto s = sample_from_json(j, line, opts);
    if (!ids.insert(s.id).second) throw SchemaError(line, "id", "duplicate id '" + s.id + "'");
    out.push_back(std::move(s));
  }
  return out;
}

inline std::vector<Sample> load_benchmark(const std::filesystem::path& path, const LoadOptions& opts = {}) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SchemaError(0, "", "cannot open benchmark file " + path.string());
  return read_benchmark(in, opts);
}

inline void write_benchmark(std::ostream& out, const std::vector<Sample>& samples) {
  for (const auto& s : samples) out << sample_to_json(s).dump() << '\n';
}

inline void save_benchmark(const std::vector<Sample>& samples, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write benchmark file " + path.string());
  write_benchmark(out, samples);
}

}  // namespace trig
