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
#include <map>
#include <optional>
#include <set>
#include <span>
#include <tuple>
#include <string>
#include <vector>

#include "trig/benchmark.hpp"
#include "trig/error.hpp"
#include "trig/geometry.hpp"
#include "trig/parsing.hpp"

namespace trig {

// 1: OCR-free box generation; 2: index selection with OCR text;
// 3: index selection with OCR boxes only.
enum class Setting : int { OcrFree = 1, OcrWithText = 2, OcrBoxesOnly = 3 };

inline Setting setting_from_int(int n) {
  if (n < 1 || n > 3) throw ScoringError("setting must be 1, 2 or 3");
  return static_cast<Setting>(n);
}

inline bool uses_indices(Setting s) noexcept { return s != Setting::OcrFree; }

struct SampleScore {
  std::string sample_id;
  std::string dataset;
  Setting setting = Setting::OcrFree;
  std::optional<double> pixel_iou;
  std::optional<double> instance_iou;
  std::optional<double> precision;
  std::optional<double> recall;
  std::optional<double> f1;
  bool followed_instruction = false;
  bool missing_response = false;
  std::vector<std::string> degenerate_flags;
};

struct Prf {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

namespace detail {

inline std::set<std::int64_t> as_set(std::span<const std::int64_t> v) { return {v.begin(), v.end()}; }

inline std::size_t intersection_size(const std::set<std::int64_t>& a, const std::set<std::int64_t>& b) {
  std::size_t n = 0;
  for (auto x : a) n += b.count(x);
  return n;
}

}  // namespace detail

/// Set IoU over indices; duplicates collapse. 0 when the union is empty.
inline double instance_iou(std::span<const std::int64_t> pred, std::span<const std::int64_t> gt) {
  const auto p = detail::as_set(pred);
  const auto g = detail::as_set(gt);
  const auto inter = detail::intersection_size(p, g);
  const auto uni = p.size() + g.size() - inter;
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

inline Prf sample_prf(std::span<const std::int64_t> pred, std::span<const std::int64_t> gt) {
  const auto p = detail::as_set(pred);
  const auto g = detail::as_set(gt);
  const auto inter = static_cast<double>(detail::intersection_size(p, g));
  Prf r;
  r.precision = p.empty() ? 0.0 : inter / static_cast<double>(p.size());
  r.recall = g.empty() ? 0.0 : inter / static_cast<double>(g.size());
  const double denom = r.precision + r.recall;
  r.f1 = denom > 0.0 ? 2.0 * r.precision * r.recall / denom : 0.0;
  return r;
}

inline SampleScore score_sample(Setting setting, const ParsedResponse& parsed, const Sample& sample) {
  const bool want_indices = uses_indices(setting);
  if (want_indices != (parsed.kind == ParseKind::Indices)) throw ScoringError("parse/setting mismatch");

  SampleScore s;
  s.sample_id = sample.id;
  s.dataset = sample.dataset;
  s.setting = setting;
  s.followed_instruction = parsed.followed_instruction;
  if (sample.gt_indices.empty()) s.degenerate_flags.emplace_back("empty_gt");

  if (!want_indices) {
    const auto gt = gt_boxes(sample);
    if (gt.empty() && parsed.boxes.empty()) s.degenerate_flags.emplace_back("both_empty");
    s.pixel_iou = pixel_iou(parsed.boxes, gt);
    return s;
  }
  s.instance_iou = instance_iou(parsed.indices, sample.gt_indices);
  const auto prf = sample_prf(parsed.indices, sample.gt_indices);
  s.precision = prf.precision;
  s.recall = prf.recall;
  s.f1 = prf.f1;
  return s;
}

/// Zero score for a sample with no response at all.
inline SampleScore missing_score(Setting setting, const Sample& sample) {
  ParsedResponse empty;
  empty.kind = uses_indices(setting) ? ParseKind::Indices : ParseKind::Boxes;
  auto s = score_sample(setting, empty, sample);
  s.missing_response = true;
  return s;
}

inline double instruction_following_rate(std::span<const SampleScore> scores) {
  if (scores.empty()) throw ScoringError("instruction-following rate of an empty score list");
  const auto n = std::count_if(scores.begin(), scores.end(), [](const SampleScore& s) { return s.followed_instruction; });
  return static_cast<double>(n) / static_cast<double>(scores.size());
}

inline std::vector<std::string> metric_names(Setting s) {
  if (!uses_indices(s)) return {"pixel_iou"};
  return {"instance_iou", "precision", "recall", "f1"};
}

inline double metric_value(const SampleScore& s, const std::string& name) {
  std::optional<double> v;
  if (name == "pixel_iou") v = s.pixel_iou;
  else if (name == "instance_iou") v = s.instance_iou;
  else if (name == "precision") v = s.precision;
  else if (name == "recall") v = s.recall;
  else if (name == "f1") v = s.f1;
  if (!v) throw ScoringError("metric " + name + " not present for sample " + s.sample_id);
  return *v;
}

struct MetricSummary {
  std::size_t count = 0;
  std::size_t missing = 0;
  std::map<std::string, double> means;  // metric name -> mean
  double instruction_following_rate = 0.0;
  // Mean over the metric means (the tables' "Avg" column).
  double avg = 0.0;
};

struct EvalReport {
  Setting setting = Setting::OcrFree;
  std::vector<std::string> metrics;
  std::map<std::string, MetricSummary> per_dataset;
  // Unweighted mean over datasets (count/missing are totals).
  MetricSummary overall;
  std::vector<SampleScore> sample_scores;  // canonical (dataset, id) order
};

namespace detail {

inline double mean_of(const std::vector<std::string>& names, const std::map<std::string, double>& m) {
  double sum = 0.0;
  for (const auto& n : names) sum += m.at(n);
  return sum / static_cast<double>(names.size());
}

}  // namespace detail

// Macro averaging: per-sample values are averaged within each dataset, then
// the dataset means are averaged with equal weight. Sums run in canonical
// (dataset, sample id) order so the result does not depend on input order.
inline EvalReport aggregate(std::vector<SampleScore> scores, const std::vector<std::string>& expected_datasets = {}) {
  if (scores.empty()) throw ScoringError("no scores to aggregate");
  EvalReport report;
  report.setting = scores.front().setting;
  report.metrics = metric_names(report.setting);
  for (const auto& s : scores)
    if (s.setting != report.setting) throw ScoringError("scores from different settings cannot be aggregated");

  std::sort(scores.begin(), scores.end(), [](const SampleScore& a, const SampleScore& b) {
    return std::tie(a.dataset, a.sample_id) < std::tie(b.dataset, b.sample_id);
  });

  std::map<std::string, std::vector<const SampleScore*>> buckets;
  for (const auto& d : expected_datasets) buckets[d];
  for (const auto& s : scores) buckets[s.dataset].push_back(&s);

  for (const auto& [name, members] : buckets) {
    if (members.empty()) throw ScoringError("dataset '" + name + "' has no samples");
    MetricSummary sum;
    sum.count = members.size();
    std::size_t followed = 0;
    for (const auto& metric : report.metrics) {
      double acc = 0.0;
      for (const auto* s : members) acc += metric_value(*s, metric);
      sum.means[metric] = acc / static_cast<double>(members.size());
    }
    for (const auto* s : members) {
      followed += s->followed_instruction ? 1 : 0;
      sum.missing += s->missing_response ? 1 : 0;
    }
    sum.instruction_following_rate = static_cast<double>(followed) / static_cast<double>(members.size());
    sum.avg = detail::mean_of(report.metrics, sum.means);
    report.per_dataset.emplace(name, std::move(sum));
  }

  auto& overall = report.overall;
  const auto nd = static_cast<double>(report.per_dataset.size());
  for (const auto& metric : report.metrics) {
    double acc = 0.0;
    for (const auto& [_, d] : report.per_dataset) acc += d.means.at(metric);
    overall.means[metric] = acc / nd;
  }
  double ifr = 0.0;
  for (const auto& [_, d] : report.per_dataset) {
    ifr += d.instruction_following_rate;
    overall.count += d.count;
    overall.missing += d.missing;
  }
  overall.instruction_following_rate = ifr / nd;
  overall.avg = detail::mean_of(report.metrics, overall.means);
  report.sample_scores = std::move(scores);
  return report;
}

}  // namespace trig
