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

// Report documents. Every report carries the tool version, the run
// configuration, the scoring conventions and SHA-256 digests of its inputs,
// and nothing time- or machine-dependent, so identical inputs give identical
// bytes.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include <openssl/evp.h>

#include "trig/error.hpp"
#include "trig/engine.hpp"
#include "trig/metrics.hpp"
#include "trig/pipeline.hpp"

namespace trig {

inline constexpr const char* kToolName = "trig";
inline constexpr const char* kToolVersion = "0.1.0";

using ojson = nlohmann::ordered_json;

inline std::string sha256_hex(const std::string& bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1) throw Error("SHA-256 failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[md[i] >> 4]);
    out.push_back(hex[md[i] & 15]);
  }
  return out;
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error("cannot open " + p.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path& p, const std::string& bytes) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error("cannot write " + p.string());
  out << bytes;
}

inline ojson input_record(const std::string& role, const std::filesystem::path& p) {
  return {{"role", role}, {"path", p.generic_string()}, {"sha256", sha256_hex(read_file(p))}};
}

// Run parameters echoed into reports. Worker-thread counts are deliberately
// absent: they must not change report bytes.
struct RunConfig {
  std::string command;
  int setting = 0;
  ResponseFormat format = ResponseFormat::ListAbsolute;
  double rel_scale = 1.0;
  bool fallback = false;
  SelectConfig select;
  int max_rounds = 3;
  std::string endpoint;
  int concurrency = 1;

  ojson to_json() const {
    ojson j;
    j["command"] = command;
    if (command == "eval") {
      j["setting"] = setting;
      j["format"] = std::string(format_name(format));
      j["rel_scale"] = rel_scale;
      j["fallback_extraction"] = fallback;
    } else if (command == "ground") {
      j["k1"] = select.k1;
      j["k2"] = select.k2;
      j["window"] = select.window;
      j["adjacency"] = select.adjacency == Adjacency::GrowingSet ? "growing-set" : "seeds-only";
      j["neighborhood"] = "8-connected";
    } else if (command == "pipeline") {
      j["max_rounds"] = max_rounds;
      j["endpoint"] = endpoint;
      j["concurrency"] = concurrency;
    }
    return j;
  }
};

inline ojson conventions_json() {
  return {{"box_edges", "half-open [x1,x2) x [y1,y2) integer pixels"},
          {"averaging", "macro: per-sample mean within each dataset, then unweighted mean of dataset means"},
          {"instruction_following_average", "macro over datasets"},
          {"f1_zero_division", 0},
          {"empty_union_pixel_iou", 0},
          {"missing_responses", "scored as zero and not followed"},
          {"relative_rounding", "round half away from zero, clamp to image"}};
}

inline ojson summary_json(const MetricSummary& s, const std::vector<std::string>& metrics) {
  ojson j;
  j["count"] = s.count;
  j["missing"] = s.missing;
  for (const auto& m : metrics) j[m] = s.means.at(m);
  j["avg"] = s.avg;
  j["instruction_following_rate"] = s.instruction_following_rate;
  return j;
}

inline ojson sample_score_json(const SampleScore& s) {
  ojson j;
  j["id"] = s.sample_id;
  j["dataset"] = s.dataset;
  for (const auto& m : metric_names(s.setting)) j[m] = metric_value(s, m);
  j["followed_instruction"] = s.followed_instruction;
  j["missing_response"] = s.missing_response;
  j["degenerate_flags"] = s.degenerate_flags;
  return j;
}

inline ojson report_header(const RunConfig& cfg, const std::vector<ojson>& inputs) {
  ojson j;
  j["tool"] = {{"name", kToolName}, {"version", kToolVersion}};
  j["config"] = cfg.to_json();
  j["conventions"] = conventions_json();
  j["inputs"] = inputs;
  return j;
}

inline void put_eval_body(ojson& j, const EvalReport& r) {
  j["setting"] = static_cast<int>(r.setting);
  j["metrics"] = r.metrics;
  ojson per = ojson::object();
  for (const auto& [name, s] : r.per_dataset) per[name] = summary_json(s, r.metrics);
  j["per_dataset"] = std::move(per);
  j["overall"] = summary_json(r.overall, r.metrics);
}

inline std::string fmt_fixed(double v, int digits = 2) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

// Aligned text table; scores as percentages like the published tables.
inline std::string render_table(const std::vector<std::string>& metrics, const ojson& per_dataset, const ojson& overall) {
  std::vector<std::string> header{"Dataset"};
  for (const auto& m : metrics) header.push_back(m);
  header.insert(header.end(), {"Avg", "IFR", "N"});
  std::vector<std::vector<std::string>> rows{header};
  auto row_of = [&](const std::string& name, const ojson& s) {
    std::vector<std::string> row{name};
    for (const auto& m : metrics) row.push_back(fmt_fixed(100.0 * s.at(m).get<double>()));
    row.push_back(fmt_fixed(100.0 * s.at("avg").get<double>()));
    row.push_back(fmt_fixed(100.0 * s.at("instruction_following_rate").get<double>()));
    row.push_back(std::to_string(s.at("count").get<std::size_t>()));
    return row;
  };
  for (const auto& [name, s] : per_dataset.items()) rows.push_back(row_of(name, s));
  if (!per_dataset.empty()) rows.push_back(row_of("Avg", overall));

  std::vector<std::size_t> width(header.size(), 0);
  for (const auto& r : rows)
    for (std::size_t c = 0; c < r.size(); ++c) width[c] = std::max(width[c], r[c].size());
  std::ostringstream o;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t c = 0; c < rows[i].size(); ++c) {
      if (c > 0) o << " | ";
      const auto pad = std::string(width[c] - rows[i][c].size(), ' ');
      o << (c == 0 ? rows[i][c] + pad : pad + rows[i][c]);
    }
    o << '\n';
    if (i == 0 || i + 2 == rows.size()) {
      std::size_t total = 0;
      for (auto w : width) total += w;
      o << std::string(total + 3 * (width.size() - 1), '-') << '\n';
    }
  }
  return o.str();
}

inline ojson stats_json(const StatsTable& t) {
  auto one = [](const DatasetStats& d) {
    ojson j;
    j["questions"] = d.questions;
    j["images"] = d.images;
    j["avg_question_len"] = d.question_len;
    j["avg_answer_len"] = d.answer_len;
    j["avg_ocr_text_len"] = d.ocr_text_len;
    j["avg_ocr_boxes"] = d.ocr_boxes;
    j["avg_gt_boxes"] = d.gt_boxes;
    j["avg_gt_box_ratio_pct"] = d.gt_box_ratio;
    j["avg_ocr_area_pct"] = d.ocr_area;
    j["avg_gt_area_pct"] = d.gt_area;
    j["avg_gt_area_ratio_pct"] = d.gt_area_ratio;
    return j;
  };
  ojson j;
  ojson per = ojson::object();
  for (const auto& [name, d] : t.per_dataset) per[name] = one(d);
  j["per_dataset"] = std::move(per);
  j["total"] = one(t.total);
  return j;
}

inline std::string render_stats_table(const StatsTable& t) {
  std::vector<std::string> cols;
  std::vector<const DatasetStats*> stats;
  for (const auto& [name, d] : t.per_dataset) {
    cols.push_back(name);
    stats.push_back(&d);
  }
  cols.push_back("Total");
  stats.push_back(&t.total);

  struct Row {
    const char* label;
    std::string (*get)(const DatasetStats&);
  };
  const Row rows[] = {
      {"Total Question #", [](const DatasetStats& d) { return std::to_string(d.questions); }},
      {"Total Image #", [](const DatasetStats& d) { return std::to_string(d.images); }},
      {"Avg Question Len", [](const DatasetStats& d) { return fmt_fixed(d.question_len); }},
      {"Avg Answer Len", [](const DatasetStats& d) { return fmt_fixed(d.answer_len); }},
      {"Avg OCR Text Len", [](const DatasetStats& d) { return fmt_fixed(d.ocr_text_len); }},
      {"Avg OCR Box #", [](const DatasetStats& d) { return fmt_fixed(d.ocr_boxes); }},
      {"Avg GT Box #", [](const DatasetStats& d) { return fmt_fixed(d.gt_boxes); }},
      {"Avg GT Box Ratio", [](const DatasetStats& d) { return fmt_fixed(d.gt_box_ratio) + "%"; }},
      {"Avg OCR Area (%)", [](const DatasetStats& d) { return fmt_fixed(d.ocr_area); }},
      {"Avg GT Area (%)", [](const DatasetStats& d) { return fmt_fixed(d.gt_area); }},
      {"Avg GT Area Ratio", [](const DatasetStats& d) { return fmt_fixed(d.gt_area_ratio) + "%"; }},
  };
  std::size_t label_w = 0;
  for (const auto& r : rows) label_w = std::max(label_w, std::string(r.label).size());
  std::vector<std::size_t> w(cols.size());
  for (std::size_t c = 0; c < cols.size(); ++c) {
    w[c] = cols[c].size();
    for (const auto& r : rows) w[c] = std::max(w[c], r.get(*stats[c]).size());
  }
  std::ostringstream o;
  auto line = [&](const std::string& label, auto cell) {
    o << label << std::string(label_w - label.size(), ' ');
    for (std::size_t c = 0; c < cols.size(); ++c) {
      const auto v = cell(c);
      o << " | " << std::string(w[c] - v.size(), ' ') << v;
    }
    o << '\n';
  };
  line("", [&](std::size_t c) { return cols[c]; });
  for (const auto& r : rows) line(r.label, [&](std::size_t c) { return r.get(*stats[c]); });
  return o.str();
}

}  // namespace trig
