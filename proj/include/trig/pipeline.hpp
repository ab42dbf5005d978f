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

// Benchmark construction: OCR ingestion, indexed overlays, evaluation and
// generation/rectification prompts, the judge loop against a chat endpoint,
// annotator verdict merging and dataset statistics.

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "trig/benchmark.hpp"
#include "trig/error.hpp"
#include "trig/geometry.hpp"
#include "trig/metrics.hpp"
#include "trig/parsing.hpp"

namespace trig {

// ---------------------------------------------------------------------------
// OCR ingestion

struct OcrQuad {
  std::vector<std::pair<double, double>> points;
  std::string text;
};

struct IngestResult {
  std::vector<OcrBox> boxes;
  std::size_t dropped = 0;
};

// Collapses each quad to its axis-aligned hull (floor of the minima, ceil of
// the maxima, clipped to the image when dims are given) and numbers the
// survivors 0..N-1 in input order.
inline IngestResult ingest_ocr(const std::vector<OcrQuad>& raw, std::optional<ImageDims> dims = std::nullopt) {
  IngestResult out;
  for (const auto& q : raw) {
    if (q.points.size() != 4) throw FormatError("OCR quad must have 4 vertices");
    double xmin = q.points[0].first, xmax = xmin, ymin = q.points[0].second, ymax = ymin;
    for (const auto& [x, y] : q.points) {
      xmin = std::min(xmin, x);
      xmax = std::max(xmax, x);
      ymin = std::min(ymin, y);
      ymax = std::max(ymax, y);
    }
    auto x1 = std::max<std::int64_t>(0, static_cast<std::int64_t>(std::floor(xmin)));
    auto y1 = std::max<std::int64_t>(0, static_cast<std::int64_t>(std::floor(ymin)));
    auto x2 = static_cast<std::int64_t>(std::ceil(xmax));
    auto y2 = static_cast<std::int64_t>(std::ceil(ymax));
    if (dims) {
      x2 = std::min(x2, dims->width);
      y2 = std::min(y2, dims->height);
    }
    if (!BBox::valid(x1, y1, x2, y2)) {
      ++out.dropped;
      continue;
    }
    out.boxes.push_back({static_cast<std::int64_t>(out.boxes.size()), BBox{x1, y1, x2, y2}, q.text});
  }
  return out;
}

// [{"points": [[x, y] x4], "text": "..."}, ...]
inline std::vector<OcrQuad> parse_ocr_json(const nlohmann::json& j) {
  if (!j.is_array()) throw SchemaError(0, "", "OCR file must be an array");
  std::vector<OcrQuad> out;
  for (std::size_t k = 0; k < j.size(); ++k) {
    const std::string path = "[" + std::to_string(k) + "]";
    const auto& e = j[k];
    if (!e.is_object() || !e.contains("points") || !e["points"].is_array())
      throw SchemaError(0, path + ".points", "expected array of [x, y]");
    OcrQuad q;
    for (const auto& p : e["points"]) {
      if (!p.is_array() || p.size() != 2 || !p[0].is_number() || !p[1].is_number())
        throw SchemaError(0, path + ".points", "expected [x, y] number pairs");
      q.points.emplace_back(p[0].get<double>(), p[1].get<double>());
    }
    if (q.points.size() != 4) throw SchemaError(0, path + ".points", "expected 4 vertices");
    if (e.contains("text")) {
      if (!e["text"].is_string()) throw SchemaError(0, path + ".text", "expected string");
      q.text = e["text"].get<std::string>();
    }
    out.push_back(std::move(q));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Overlay

inline std::string xml_escape(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

/// SVG sized to the image: one outlined rect and one index label per OCR box.
inline std::string emit_overlay(const Sample& sample) {
  std::ostringstream o;
  const auto w = std::to_string(sample.image_w);
  const auto h = std::to_string(sample.image_h);
  o << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
    << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\" viewBox=\"0 0 " << w
    << ' ' << h << "\">\n"
    << "  <title>" << xml_escape(sample.id) << "</title>\n"
    << "  <g id=\"boxes\" fill=\"none\" stroke=\"#e6194b\" stroke-width=\"2\">\n";
  for (const auto& b : sample.ocr) {
    o << "    <rect id=\"box-" << b.index << "\" x=\"" << b.bbox.x1 << "\" y=\"" << b.bbox.y1 << "\" width=\""
      << b.bbox.width() << "\" height=\"" << b.bbox.height() << "\"/>\n";
  }
  o << "  </g>\n"
    << "  <g id=\"labels\" font-family=\"sans-serif\" font-size=\"14\" font-weight=\"bold\" fill=\"#e6194b\">\n";
  for (const auto& b : sample.ocr) {
    o << "    <text x=\"" << b.bbox.x1 << "\" y=\"" << b.bbox.y1 << "\" dominant-baseline=\"hanging\">" << b.index
      << "</text>\n";
  }
  o << "  </g>\n</svg>\n";
  return o.str();
}

// ---------------------------------------------------------------------------
// Prompts

inline constexpr const char* kPromptTemplateVersion = "1";

namespace detail {

inline std::string box_for_prompt(const BBox& b, ResponseFormat f, ImageDims dims, double scale) {
  switch (f) {
    case ResponseFormat::CssAbsolute:
    case ResponseFormat::ListRelative: return serialize_boxes({b}, f, dims, scale);
    case ResponseFormat::ListAbsolute:
    case ResponseFormat::IndexSelection: break;
  }
  return "[" + std::to_string(b.x1) + "," + std::to_string(b.y1) + "," + std::to_string(b.x2) + "," +
         std::to_string(b.y2) + "]";
}

inline std::string box_format_requirement(ResponseFormat f, ImageDims dims, double scale) {
  const auto w = std::to_string(dims.width);
  const auto h = std::to_string(dims.height);
  switch (f) {
    case ResponseFormat::CssAbsolute:
      return "Write every bounding box in CSS format as <box style=\"left: Xpx; top: Ypx; width: Wpx; height: Hpx;\"></box>, "
             "using absolute pixel coordinates. The image is " + w + " pixels wide and " + h + " pixels high.";
    case ResponseFormat::ListAbsolute:
      return "Write every bounding box as a list [x1, y1, x2, y2] of absolute pixel coordinates, where (x1, y1) is the "
             "top-left corner and (x2, y2) the bottom-right corner. The image is " + w + " pixels wide and " + h +
             " pixels high.";
    case ResponseFormat::ListRelative:
      return "Write every bounding box as a list [x1, y1, x2, y2] of relative coordinates between 0 and " +
             format_decimal(scale) + ", measured as fractions of the image width and height, where (x1, y1) is the "
             "top-left corner and (x2, y2) the bottom-right corner.";
    case ResponseFormat::IndexSelection: break;
  }
  throw FormatError("index selection has no box format requirement");
}

inline std::string coordinate_description(ResponseFormat f, double scale) {
  switch (f) {
    case ResponseFormat::CssAbsolute: return "CSS boxes in absolute pixels";
    case ResponseFormat::ListRelative: return "[x1,y1,x2,y2] in relative coordinates between 0 and " + format_decimal(scale);
    default: return "[x1,y1,x2,y2] in absolute pixels";
  }
}

inline std::string idx_text_pairs(const Sample& s) {
  std::string out;
  for (const auto& b : s.ocr) out += "[" + std::to_string(b.index) + "] " + b.text + "\n";
  return out;
}

}  // namespace detail

// Evaluation prompt for one sample. Setting 1 asks for boxes in the given
// format; settings 2 and 3 list the OCR boxes ("[index] coords text" and
// "[index] coords" respectively, coords rendered in the given format) and ask
// for indexes.
inline std::string build_prompt(Setting setting, const Sample& sample, ResponseFormat format, double scale = 1.0) {
  std::string p;
  p += "Question: " + sample.question + "\n";
  if (setting == Setting::OcrFree) {
    if (format == ResponseFormat::IndexSelection) throw FormatError("setting 1 needs a box format");
    p += "Answer the question about the document image. Then provide the bounding boxes of the image regions that "
         "support your answer.\n";
    p += detail::box_format_requirement(format, sample.dims(), scale) + "\n";
    return p;
  }
  const bool with_text = setting == Setting::OcrWithText;
  if (with_text && std::all_of(sample.ocr.begin(), sample.ocr.end(), [](const OcrBox& b) { return b.text.empty(); }))
    throw FormatError("setting 2 prompt needs OCR text");
  p += "Text regions detected in the document image are listed below as [index] followed by the box (" +
       detail::coordinate_description(format, scale) + ")" + (with_text ? " and its text" : "") + ":\n";
  for (const auto& b : sample.ocr) {
    p += "[" + std::to_string(b.index) + "] " + detail::box_for_prompt(b.bbox, format, sample.dims(), scale);
    if (with_text) p += " " + b.text;
    p += "\n";
  }
  p += "Answer the question about the document image and select the boxes that support your answer.\n"
       "Output the indexes of the selected boxes in the first line, separated by commas. Then give the answer and "
       "your reasoning in the following lines.\n";
  return p;
}

inline constexpr const char* kGenerationSystemPrompt =
    "You are a helpful and precise assistant in finding the grounding bounding boxes given the question-answer pair "
    "and the poster image.";

inline constexpr const char* kRectificationSystemPrompt =
    "You are a helpful and precise assistant in analyzing the grounding bounding boxes given the question-answer pair "
    "and the poster image.";

inline std::string build_generation_prompt(const Sample& s) {
  return "Question: " + s.question + "\n" + "Answer: " + s.answer + "\n" +
         "Above is the question and answer for a given poster.\n"
         "Sentence-level bounding boxes with indexes are provided in the poster, and detailed indexes with "
         "corresponding texts are also provided below:\n" +
         detail::idx_text_pairs(s) +
         "Can you provide me with the indexes of bounding boxes that can accurately and sufficiently lead to the "
         "answer? Make sure you check both the poster image and the text provided above.\n"
         "Please provide the index in the first line, use a comma to separate different indexes if more than one, "
         "and do not output anything else except for indexes or commas.\n"
         "Please then provide the reason in the following lines on why you choose those bounding boxes.\n";
}

inline std::string build_rectification_prompt(const Sample& s, const std::vector<std::int64_t>& candidates) {
  if (candidates.empty()) throw FormatError("rectification needs at least one candidate index");
  return "Question: " + s.question + "\n" + "Answer: " + s.answer + "\n" +
         "Above is the question and answer for a given poster.\n"
         "Sentence-level bounding boxes with indexes are provided in the poster, and detailed indexes with "
         "corresponding texts are also provided below:\n" +
         detail::idx_text_pairs(s) + "Do you think the bounding boxes with index " + serialize_indices(candidates) +
         " can accurately and sufficiently lead to the answer to the given question?\n"
         "Please output YES or NO in the first line, then provide the reason in the following lines.\n";
}

// ---------------------------------------------------------------------------
// Chat endpoint and the generation / rectification loop

struct ChatRequest {
  std::string system;
  std::string user;
  std::optional<std::string> image_path;
};

class ChatError : public Error {
 public:
  using Error::Error;
};

class ChatClient {
 public:
  virtual ~ChatClient() = default;
  // Throws ChatError once the client gives up.
  virtual std::string complete(const ChatRequest& request) = 0;
};

struct Exchange {
  std::string stage;  // "generation" | "rectification"
  int round = 0;
  std::string prompt;
  std::string response;
  bool carried_feedback = false;
};

struct Verdict {
  bool accepted = false;
  int rounds_used = 0;
  std::vector<std::int64_t> final_indices;
  std::vector<Exchange> transcript;
};

class ConstructionError : public Error {
 public:
  ConstructionError(const std::string& what, std::vector<Exchange> partial)
      : Error(what), partial_(std::move(partial)) {}
  const std::vector<Exchange>& partial_transcript() const noexcept { return partial_; }

 private:
  std::vector<Exchange> partial_;
};

struct ConstructionConfig {
  int max_rounds = 3;
  bool attach_image = false;
};

enum class JudgeAnswer { Yes, No };

// First non-blank line, case-insensitive YES/NO prefix; anything else is NO.
inline JudgeAnswer parse_judge_line(const std::string& reply) {
  std::istringstream in(reply);
  std::string line;
  while (std::getline(in, line)) {
    const auto t = detail::trim(line);
    if (t.empty()) continue;
    std::string head;
    for (char c : t) {
      if (!std::isalpha(static_cast<unsigned char>(c))) break;
      head.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
    }
    return head == "YES" ? JudgeAnswer::Yes : JudgeAnswer::No;
  }
  return JudgeAnswer::No;
}

inline std::string judge_reason(const std::string& reply) {
  const auto t = detail::trim(reply);
  const auto nl = t.find('\n');
  return nl == std::string::npos ? std::string{} : detail::trim(std::string_view(t).substr(nl + 1));
}

// Generation and rectification alternate; a round ends early when the
// generation reply holds no usable index. Rejections are fed back into the
// next generation prompt.
inline Verdict run_construction_loop(ChatClient& client, const Sample& sample, const ConstructionConfig& cfg = {}) {
  if (cfg.max_rounds < 1) throw Error("max_rounds must be at least 1");
  Verdict v;
  std::string feedback;
  std::optional<std::string> image;
  if (cfg.attach_image && !sample.image_path.empty()) image = sample.image_path;

  auto ask = [&](const std::string& stage, int round, const std::string& system, const std::string& user,
                 bool carried) {
    std::string reply;
    try {
      reply = client.complete({system, user, image});
    } catch (const ChatError& e) {
      throw ConstructionError("sample " + sample.id + ": " + e.what(), v.transcript);
    }
    v.transcript.push_back({stage, round, user, reply, carried});
    return reply;
  };

  for (int round = 1; round <= cfg.max_rounds; ++round) {
    v.rounds_used = round;
    std::string prompt = build_generation_prompt(sample);
    const bool carried = !feedback.empty();
    if (carried) prompt += "\n" + feedback;
    const auto gen = ask("generation", round, kGenerationSystemPrompt, prompt, carried);

    const auto parsed = parse_indices(gen, sample.max_index());
    if (parsed.indices.empty()) {
      feedback = "Your previous reply did not contain any valid index. Please answer again following the required "
                 "format.\n";
      continue;
    }
    const auto judged = ask("rectification", round, kRectificationSystemPrompt,
                            build_rectification_prompt(sample, parsed.indices), false);
    if (parse_judge_line(judged) == JudgeAnswer::Yes) {
      v.accepted = true;
      v.final_indices = parsed.indices;
      return v;
    }
    feedback = "Your previous selection (" + serialize_indices(parsed.indices) +
               ") was judged insufficient. Reviewer feedback:\n" + judge_reason(judged) + "\n";
  }
  return v;
}

inline nlohmann::ordered_json verdict_to_json(const std::string& id, const Verdict& v) {
  nlohmann::ordered_json j;
  j["id"] = id;
  j["accepted"] = v.accepted;
  j["rounds_used"] = v.rounds_used;
  j["final_indices"] = v.final_indices;
  auto t = nlohmann::ordered_json::array();
  for (const auto& e : v.transcript) {
    t.push_back({{"stage", e.stage},
                 {"round", e.round},
                 {"carried_feedback", e.carried_feedback},
                 {"prompt", e.prompt},
                 {"response", e.response}});
  }
  j["transcript"] = std::move(t);
  return j;
}

// ---------------------------------------------------------------------------
// Annotator verdicts

struct HumanVerdict {
  std::string id;
  std::string annotator;
  bool accepted = false;
};

// Keeps a sample when at least `required` distinct annotators accepted it and
// nobody rejected it; accepted_by lists the annotators in sorted order.
inline std::vector<Sample> merge_human_verdicts(const std::vector<Sample>& samples,
                                                const std::vector<HumanVerdict>& verdicts, std::size_t required = 2) {
  std::map<std::string, std::set<std::string>> yes;
  std::set<std::string> rejected;
  for (const auto& v : verdicts) {
    if (v.accepted) yes[v.id].insert(v.annotator);
    else rejected.insert(v.id);
  }
  std::vector<Sample> out;
  for (const auto& s : samples) {
    if (rejected.count(s.id)) continue;
    const auto it = yes.find(s.id);
    if (it == yes.end() || it->second.size() < required) continue;
    Sample kept = s;
    kept.accepted_by.assign(it->second.begin(), it->second.end());
    out.push_back(std::move(kept));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Statistics

struct DatasetStats {
  std::size_t questions = 0;
  std::size_t images = 0;
  double question_len = 0.0;   // words
  double answer_len = 0.0;     // words
  double ocr_text_len = 0.0;   // words per OCR box
  double ocr_boxes = 0.0;
  double gt_boxes = 0.0;
  double gt_box_ratio = 0.0;   // % of OCR boxes selected
  double ocr_area = 0.0;       // % of image covered by OCR boxes
  double gt_area = 0.0;        // % of image covered by GT boxes
  double gt_area_ratio = 0.0;  // % of the OCR area covered by GT boxes
};

struct StatsTable {
  std::map<std::string, DatasetStats> per_dataset;
  // Counts summed over datasets, averages taken as the mean of dataset values.
  DatasetStats total;
};

inline std::size_t word_count(const std::string& s) {
  std::istringstream in(s);
  std::size_t n = 0;
  for (std::string w; in >> w;) ++n;
  return n;
}

// Per-sample quantities are averaged within a dataset; ratios are per-sample
// ratios averaged, not ratios of averages.
inline StatsTable compute_stats(const std::vector<Sample>& samples) {
  if (samples.empty()) throw Error("statistics of an empty benchmark");
  std::map<std::string, std::vector<const Sample*>> by_ds;
  for (const auto& s : samples) by_ds[s.dataset].push_back(&s);

  StatsTable t;
  auto image_key = [](const Sample& s) { return s.image_path.empty() ? "id:" + s.id : s.image_path; };
  for (const auto& [name, members] : by_ds) {
    DatasetStats d;
    d.questions = members.size();
    std::set<std::string> images;
    std::size_t with_ocr = 0;
    std::size_t with_ocr_area = 0;
    for (const auto* s : members) {
      images.insert(image_key(*s));
      d.question_len += static_cast<double>(word_count(s->question));
      d.answer_len += static_cast<double>(word_count(s->answer));
      d.ocr_boxes += static_cast<double>(s->ocr.size());
      d.gt_boxes += static_cast<double>(s->gt_indices.size());
      const double image_area = static_cast<double>(s->image_w) * static_cast<double>(s->image_h);
      const auto ocr = ocr_boxes(*s);
      const auto gt = gt_boxes(*s);
      const auto ocr_union = region_areas(ocr, {}).pred_union;
      const auto gt_union = region_areas(gt, {}).pred_union;
      d.ocr_area += 100.0 * static_cast<double>(ocr_union) / image_area;
      d.gt_area += 100.0 * static_cast<double>(gt_union) / image_area;
      if (!s->ocr.empty()) {
        ++with_ocr;
        std::size_t words = 0;
        for (const auto& b : s->ocr) words += word_count(b.text);
        d.ocr_text_len += static_cast<double>(words) / static_cast<double>(s->ocr.size());
        d.gt_box_ratio += 100.0 * static_cast<double>(s->gt_indices.size()) / static_cast<double>(s->ocr.size());
      }
      if (ocr_union > 0) {
        ++with_ocr_area;
        d.gt_area_ratio += 100.0 * static_cast<double>(gt_union) / static_cast<double>(ocr_union);
      }
    }
    const auto n = static_cast<double>(members.size());
    d.images = images.size();
    d.question_len /= n;
    d.answer_len /= n;
    d.ocr_boxes /= n;
    d.gt_boxes /= n;
    d.ocr_area /= n;
    d.gt_area /= n;
    if (with_ocr > 0) {
      d.ocr_text_len /= static_cast<double>(with_ocr);
      d.gt_box_ratio /= static_cast<double>(with_ocr);
    }
    if (with_ocr_area > 0) d.gt_area_ratio /= static_cast<double>(with_ocr_area);
    t.per_dataset.emplace(name, d);
  }

  auto& tot = t.total;
  const auto nd = static_cast<double>(t.per_dataset.size());
  for (const auto& [_, d] : t.per_dataset) {
    tot.questions += d.questions;
    tot.images += d.images;
    tot.question_len += d.question_len / nd;
    tot.answer_len += d.answer_len / nd;
    tot.ocr_text_len += d.ocr_text_len / nd;
    tot.ocr_boxes += d.ocr_boxes / nd;
    tot.gt_boxes += d.gt_boxes / nd;
    tot.gt_box_ratio += d.gt_box_ratio / nd;
    tot.ocr_area += d.ocr_area / nd;
    tot.gt_area += d.gt_area / nd;
    tot.gt_area_ratio += d.gt_area_ratio / nd;
  }
  return t;
}

}  // namespace trig
