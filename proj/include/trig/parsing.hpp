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

// Response parsers for the three box formats and the index-selection
// protocol, plus the canonical serializers used to build fixtures.
//
// Grammars:
//   CssAbsolute    <box style="left: Lpx; top: Tpx; width: Wpx; height: Hpx;"></box>
//                  (any tag name; keys in any order; x2/y2 accepted in place
//                  of width/height)
//   ListAbsolute   [x1, y1, x2, y2]   integers, pixels
//   ListRelative   [x1, y1, x2, y2]   decimals in [0, scale]
//   IndexSelection first line holding an integer: "3, 7"
//
// Parsers never throw on model output; every dropped or adjusted group is
// counted in ParseDiagnostics.

#include <array>
#include <cstdio>
#include <cstdlib>
#include <optional>
#include <regex>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "trig/error.hpp"
#include "trig/geometry.hpp"

namespace trig {

enum class ResponseFormat { CssAbsolute, ListAbsolute, ListRelative, IndexSelection };

inline std::string_view format_name(ResponseFormat f) {
  switch (f) {
    case ResponseFormat::CssAbsolute: return "css";
    case ResponseFormat::ListAbsolute: return "abs";
    case ResponseFormat::ListRelative: return "rel";
    case ResponseFormat::IndexSelection: return "index";
  }
  return "?";
}

inline ResponseFormat parse_format_name(std::string_view s) {
  if (s == "css") return ResponseFormat::CssAbsolute;
  if (s == "abs") return ResponseFormat::ListAbsolute;
  if (s == "rel") return ResponseFormat::ListRelative;
  if (s == "index") return ResponseFormat::IndexSelection;
  throw FormatError("unknown response format '" + std::string(s) + "' (expected css|abs|rel|index)");
}

enum class ParseKind { Boxes, Indices };

struct ParseDiagnostics {
  std::size_t skipped = 0;       // groups/blocks that could not become a box or index
  std::size_t clamped = 0;       // boxes pulled back inside the image
  std::size_t out_of_range = 0;  // indices outside [0, max_index]
  bool used_fallback = false;
};

struct ParsedResponse {
  ParseKind kind = ParseKind::Boxes;
  std::string answer_text;
  std::vector<BBox> boxes;
  std::vector<std::int64_t> indices;
  bool followed_instruction = false;
  ParseDiagnostics diagnostics;
};

namespace detail {

inline const std::string& number_pattern() {
  static const std::string p = R"(-?\d+(?:\.\d+)?)";
  return p;
}

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

// Removes the given [begin,end) spans and tidies the whitespace they leave.
inline std::string strip_spans(const std::string& text, const std::vector<std::pair<std::size_t, std::size_t>>& spans) {
  std::string out;
  std::size_t pos = 0;
  for (const auto& [b, e] : spans) {
    out.append(text, pos, b - pos);
    if (!out.empty() && out.back() != ' ' && out.back() != '\n') out.push_back(' ');
    pos = e;
  }
  out.append(text, pos, std::string::npos);
  std::string collapsed;
  collapsed.reserve(out.size());
  for (char c : out) {
    if (c == ' ' && !collapsed.empty() && collapsed.back() == ' ') continue;
    collapsed.push_back(c);
  }
  return trim(collapsed);
}

inline std::optional<std::int64_t> parse_integer(const std::string& s) {
  static const std::regex int_re(R"(^\s*-?\d{1,15}\s*$)");
  if (!std::regex_match(s, int_re)) return std::nullopt;
  return std::strtoll(s.c_str(), nullptr, 10);
}

// Clamps to the image and validates; counts into diag. Returns nullopt when dropped.
inline std::optional<BBox> clamp_box(std::int64_t x1, std::int64_t y1, std::int64_t x2, std::int64_t y2, ImageDims dims,
                                     ParseDiagnostics& diag) {
  const auto cx1 = std::clamp<std::int64_t>(x1, 0, dims.width);
  const auto cy1 = std::clamp<std::int64_t>(y1, 0, dims.height);
  const auto cx2 = std::clamp<std::int64_t>(x2, 0, dims.width);
  const auto cy2 = std::clamp<std::int64_t>(y2, 0, dims.height);
  if (!BBox::valid(cx1, cy1, cx2, cy2)) {
    ++diag.skipped;
    return std::nullopt;
  }
  if (cx1 != x1 || cy1 != y1 || cx2 != x2 || cy2 != y2) ++diag.clamped;
  return BBox{cx1, cy1, cx2, cy2};
}

inline const std::regex& bracket_group_re() {
  static const std::regex re = [] {
    const auto& n = number_pattern();
    return std::regex(R"(\[\s*()" + n + R"()\s*,\s*()" + n + R"()\s*,\s*()" + n + R"()\s*,\s*()" + n +
                      R"()\s*\])");
  }();
  return re;
}

inline std::optional<BBox> css_block_to_box(const std::string& style, ImageDims dims, ParseDiagnostics& diag) {
  static const std::regex px_re(R"(^\s*(-?\d+)\s*px\s*$)");
  std::optional<std::int64_t> left, top, width, height, right, bottom;
  std::size_t start = 0;
  while (start <= style.size()) {
    auto end = style.find(';', start);
    if (end == std::string::npos) end = style.size();
    const auto decl = style.substr(start, end - start);
    start = end + 1;
    const auto colon = decl.find(':');
    if (colon == std::string::npos) continue;
    auto key = trim(decl.substr(0, colon));
    for (auto& c : key) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    const auto value = decl.substr(colon + 1);
    std::smatch m;
    const bool is_px = std::regex_match(value, m, px_re);
    std::optional<std::int64_t> v;
    if (is_px) v = std::strtoll(m[1].str().c_str(), nullptr, 10);
    if (key == "left" || key == "x1") left = v;
    else if (key == "top" || key == "y1") top = v;
    else if (key == "width") width = v;
    else if (key == "height") height = v;
    else if (key == "x2") right = v;
    else if (key == "y2") bottom = v;
  }
  if (!left || !top || !(width || right) || !(height || bottom)) {
    ++diag.skipped;
    return std::nullopt;
  }
  const auto x2 = width ? *left + *width : *right;
  const auto y2 = height ? *top + *height : *bottom;
  return clamp_box(*left, *top, x2, y2, dims, diag);
}

inline std::string format_decimal(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  std::string s(buf);
  while (!s.empty() && s.back() == '0') s.pop_back();
  if (!s.empty() && s.back() == '.') s.pop_back();
  if (s == "-0") s = "0";
  return s;
}

inline ParsedResponse finish(ParsedResponse r) {
  r.followed_instruction = r.kind == ParseKind::Boxes ? !r.boxes.empty() : !r.indices.empty();
  return r;
}

}  // namespace detail

inline ParsedResponse parse_css(const std::string& text, ImageDims dims) {
  // A tag carrying a style attribute, optionally followed by its closing tag.
  static const std::regex tag_re(
      R"re(<\s*([A-Za-z][\w-]*)[^<>]*?\bstyle\s*=\s*(?:"([^"]*)"|'([^']*)')[^<>]*>(?:\s*<\s*/\s*\1\s*>)?)re",
      std::regex::icase);
  ParsedResponse out;
  out.kind = ParseKind::Boxes;
  std::vector<std::pair<std::size_t, std::size_t>> spans;
  for (auto it = std::sregex_iterator(text.begin(), text.end(), tag_re); it != std::sregex_iterator(); ++it) {
    const auto& m = *it;
    const std::string style = m[2].matched ? m[2].str() : m[3].str();
    spans.emplace_back(static_cast<std::size_t>(m.position(0)), static_cast<std::size_t>(m.position(0) + m.length(0)));
    if (auto box = detail::css_block_to_box(style, dims, out.diagnostics)) out.boxes.push_back(*box);
  }
  out.answer_text = detail::strip_spans(text, spans);
  return detail::finish(std::move(out));
}

inline ParsedResponse parse_abs_list(const std::string& text, ImageDims dims) {
  ParsedResponse out;
  out.kind = ParseKind::Boxes;
  std::vector<std::pair<std::size_t, std::size_t>> spans;
  const auto& re = detail::bracket_group_re();
  for (auto it = std::sregex_iterator(text.begin(), text.end(), re); it != std::sregex_iterator(); ++it) {
    const auto& m = *it;
    spans.emplace_back(static_cast<std::size_t>(m.position(0)), static_cast<std::size_t>(m.position(0) + m.length(0)));
    std::array<std::int64_t, 4> v{};
    bool ok = true;
    for (int k = 0; k < 4; ++k) {
      const auto parsed = detail::parse_integer(m[k + 1].str());
      if (!parsed) {
        ok = false;
        break;
      }
      v[static_cast<std::size_t>(k)] = *parsed;
    }
    if (!ok) {
      ++out.diagnostics.skipped;
      continue;
    }
    if (auto box = detail::clamp_box(v[0], v[1], v[2], v[3], dims, out.diagnostics)) out.boxes.push_back(*box);
  }
  out.answer_text = detail::strip_spans(text, spans);
  return detail::finish(std::move(out));
}

inline ParsedResponse parse_rel_list(const std::string& text, ImageDims dims, double scale = 1.0) {
  if (!(scale > 0.0)) throw FormatError("relative scale must be positive");
  ParsedResponse out;
  out.kind = ParseKind::Boxes;
  std::vector<std::pair<std::size_t, std::size_t>> spans;
  const auto& re = detail::bracket_group_re();
  for (auto it = std::sregex_iterator(text.begin(), text.end(), re); it != std::sregex_iterator(); ++it) {
    const auto& m = *it;
    spans.emplace_back(static_cast<std::size_t>(m.position(0)), static_cast<std::size_t>(m.position(0) + m.length(0)));
    RelBox r{std::strtod(m[1].str().c_str(), nullptr), std::strtod(m[2].str().c_str(), nullptr),
             std::strtod(m[3].str().c_str(), nullptr), std::strtod(m[4].str().c_str(), nullptr), scale};
    if (!r.valid()) {
      ++out.diagnostics.skipped;
      continue;
    }
    try {
      out.boxes.push_back(rel_to_abs(r, dims));
    } catch (const GeometryError&) {
      ++out.diagnostics.skipped;
    }
  }
  out.answer_text = detail::strip_spans(text, spans);
  return detail::finish(std::move(out));
}

inline ParsedResponse parse_indices(const std::string& text, std::int64_t max_index) {
  static const std::regex int_re(R"(-?\d+)");
  ParsedResponse out;
  out.kind = ParseKind::Indices;
  std::size_t line_start = 0;
  bool found = false;
  while (line_start <= text.size() && !found) {
    auto line_end = text.find('\n', line_start);
    if (line_end == std::string::npos) line_end = text.size();
    const std::string line = text.substr(line_start, line_end - line_start);
    const std::size_t next = line_end + 1;
    if (std::regex_search(line, int_re)) {
      found = true;
      std::unordered_set<std::int64_t> seen;
      for (auto it = std::sregex_iterator(line.begin(), line.end(), int_re); it != std::sregex_iterator(); ++it) {
        const auto tok = it->str();
        // Guard against absurd digit runs before converting.
        const auto digits = tok.size() - (tok[0] == '-' ? 1 : 0);
        const std::int64_t v = digits > 15 ? -1 : std::strtoll(tok.c_str(), nullptr, 10);
        if (v < 0 || v > max_index) {
          ++out.diagnostics.out_of_range;
          continue;
        }
        if (seen.insert(v).second) out.indices.push_back(v);
      }
      out.answer_text = next < text.size() ? detail::trim(std::string_view(text).substr(next)) : std::string{};
    }
    line_start = next;
  }
  if (!found) out.answer_text = detail::trim(text);
  return detail::finish(std::move(out));
}

// Any bracket pair ((), [], {}) holding exactly four numbers separated by
// commas and/or whitespace.
inline std::vector<std::array<double, 4>> extract_fallback(const std::string& text) {
  static const std::regex re = [] {
    const auto& n = detail::number_pattern();
    const std::string sep = R"([\s,]+)";
    return std::regex(R"([\[\(\{]\s*()" + n + ")" + sep + "(" + n + ")" + sep + "(" + n + ")" + sep + "(" + n +
                      R"()\s*,?\s*[\]\)\}])");
  }();
  std::vector<std::array<double, 4>> out;
  for (auto it = std::sregex_iterator(text.begin(), text.end(), re); it != std::sregex_iterator(); ++it) {
    const auto& m = *it;
    out.push_back({std::strtod(m[1].str().c_str(), nullptr), std::strtod(m[2].str().c_str(), nullptr),
                   std::strtod(m[3].str().c_str(), nullptr), std::strtod(m[4].str().c_str(), nullptr)});
  }
  return out;
}

struct ParseOptions {
  ResponseFormat format = ResponseFormat::ListAbsolute;
  double rel_scale = 1.0;
  bool fallback = false;
};

// Dispatches on the format. With fallback enabled and a box format yielding
// nothing, format-agnostic 4-tuples are interpreted in the requested
// coordinate system.
inline ParsedResponse parse_response_unguarded(const std::string& text, ImageDims dims, std::int64_t max_index,
                                               const ParseOptions& opts) {
  ParsedResponse r;
  switch (opts.format) {
    case ResponseFormat::CssAbsolute: r = parse_css(text, dims); break;
    case ResponseFormat::ListAbsolute: r = parse_abs_list(text, dims); break;
    case ResponseFormat::ListRelative: r = parse_rel_list(text, dims, opts.rel_scale); break;
    case ResponseFormat::IndexSelection: return parse_indices(text, max_index);
  }
  if (!opts.fallback || !r.boxes.empty()) return r;

  const auto tuples = extract_fallback(text);
  if (tuples.empty()) return r;
  r.diagnostics.used_fallback = true;
  for (const auto& t : tuples) {
    if (opts.format == ResponseFormat::ListRelative) {
      const RelBox rel{t[0], t[1], t[2], t[3], opts.rel_scale};
      if (!rel.valid()) {
        ++r.diagnostics.skipped;
        continue;
      }
      try {
        r.boxes.push_back(rel_to_abs(rel, dims));
      } catch (const GeometryError&) {
        ++r.diagnostics.skipped;
      }
    } else if (auto box = detail::clamp_box(round_half_away(t[0]), round_half_away(t[1]), round_half_away(t[2]),
                                            round_half_away(t[3]), dims, r.diagnostics)) {
      r.boxes.push_back(*box);
    }
  }
  return detail::finish(std::move(r));
}

// Never throws on model output: a regex engine failure yields an empty,
// not-followed parse with one skipped entry.
inline ParsedResponse parse_response(const std::string& text, ImageDims dims, std::int64_t max_index,
                                     const ParseOptions& opts) {
  try {
    return parse_response_unguarded(text, dims, max_index, opts);
  } catch (const std::regex_error&) {
    ParsedResponse r;
    r.kind = opts.format == ResponseFormat::IndexSelection ? ParseKind::Indices : ParseKind::Boxes;
    r.answer_text = text;
    r.diagnostics.skipped = 1;
    return r;
  }
}

inline std::string serialize_boxes(const std::vector<BBox>& boxes, ResponseFormat format, ImageDims dims,
                                   double scale = 1.0) {
  if (format == ResponseFormat::IndexSelection) throw FormatError("indices have no box serialization");
  std::string out;
  for (const auto& b : boxes) {
    if (!out.empty()) out.push_back(' ');
    switch (format) {
      case ResponseFormat::CssAbsolute:
        out += "<box style=\"left: " + std::to_string(b.x1) + "px; top: " + std::to_string(b.y1) +
               "px; width: " + std::to_string(b.width()) + "px; height: " + std::to_string(b.height()) + "px;\"></box>";
        break;
      case ResponseFormat::ListAbsolute:
        out += "[" + std::to_string(b.x1) + ", " + std::to_string(b.y1) + ", " + std::to_string(b.x2) + ", " +
               std::to_string(b.y2) + "]";
        break;
      case ResponseFormat::ListRelative: {
        const auto w = static_cast<double>(dims.width);
        const auto h = static_cast<double>(dims.height);
        out += "[" + detail::format_decimal(static_cast<double>(b.x1) * scale / w) + ", " +
               detail::format_decimal(static_cast<double>(b.y1) * scale / h) + ", " +
               detail::format_decimal(static_cast<double>(b.x2) * scale / w) + ", " +
               detail::format_decimal(static_cast<double>(b.y2) * scale / h) + "]";
        break;
      }
      case ResponseFormat::IndexSelection: break;
    }
  }
  return out;
}

inline std::string serialize_indices(const std::vector<std::int64_t>& indices) {
  std::string out;
  for (auto i : indices) {
    if (!out.empty()) out += ", ";
    out += std::to_string(i);
  }
  return out;
}

}  // namespace trig
