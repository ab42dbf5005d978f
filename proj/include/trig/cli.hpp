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

// Subcommand implementations behind tools/trig. Each returns a process exit
// code and writes its outputs to disk:
//   0 success, 1 usage / unexpected failure, 2 input schema error,
//   3 sample-id mismatch, 4 partial skips.

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <ostream>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "trig/benchmark.hpp"
#include "trig/engine.hpp"
#include "trig/http_chat.hpp"
#include "trig/metrics.hpp"
#include "trig/parsing.hpp"
#include "trig/pipeline.hpp"
#include "trig/report.hpp"
#include "trig/trigemb.hpp"

namespace trig::cli {

namespace fs = std::filesystem;

enum ExitCode : int { kOk = 0, kFailure = 1, kSchema = 2, kIdMismatch = 3, kPartial = 4 };

// Runs fn(i) for i in [0, n) on up to `threads` workers. Results must be
// written to per-index slots; no ordering is implied.
inline void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& fn) {
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  std::vector<std::jthread> workers;
  for (unsigned t = 0; t < threads; ++t) {
    workers.emplace_back([&] {
      for (std::size_t i; (i = next.fetch_add(1)) < n;) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(failure_mu);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  workers.clear();
  if (failure) std::rethrow_exception(failure);
}

inline std::string safe_file_stem(const std::string& id) {
  std::string out = id;
  for (auto& c : out)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '_' || c == '-')) c = '_';
  if (out.empty() || out == "." || out == "..") out = "_" + out;
  return out;
}

/// The aligned-text companion of a report: same path, .txt extension.
inline fs::path table_path(const fs::path& report) {
  auto p = report;
  if (p.extension() == ".txt") return p.replace_extension(".table.txt");
  return p.replace_extension(".txt");
}

inline void write_report(const fs::path& out, const ojson& report, const std::string& table) {
  write_file(out, report.dump(2) + "\n");
  write_file(table_path(out), table);
}

// ---------------------------------------------------------------------------
// eval

struct EvalOptions {
  fs::path bench;
  fs::path responses;
  int setting = 1;
  ResponseFormat format = ResponseFormat::ListAbsolute;
  double rel_scale = 1.0;
  bool fallback = false;
  fs::path out;
  unsigned threads = 1;
};

// Responses file: one {"id": ..., "response": ...} object per line.
inline std::map<std::string, std::string> load_responses(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SchemaError(0, "", "cannot open responses file " + path.string());
  std::map<std::string, std::string> out;
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
    if (!j.is_object()) throw SchemaError(line, "", "record is not an object");
    if (!j.contains("id") || !j["id"].is_string()) throw SchemaError(line, "id", "expected string");
    if (!j.contains("response") || !j["response"].is_string()) throw SchemaError(line, "response", "expected string");
    const auto id = j["id"].get<std::string>();
    if (!out.emplace(id, j["response"].get<std::string>()).second)
      throw SchemaError(line, "id", "duplicate response for '" + id + "'");
  }
  return out;
}

inline int cmd_eval(const EvalOptions& opt, std::ostream& log) {
  Setting setting;
  try {
    setting = setting_from_int(opt.setting);
  } catch (const ScoringError& e) {
    log << "error: " << e.what() << '\n';
    return kFailure;
  }
  if (setting == Setting::OcrFree && opt.format == ResponseFormat::IndexSelection) {
    log << "error: setting 1 needs a box format (css, abs or rel)\n";
    return kFailure;
  }
  if (!(opt.rel_scale > 0.0)) {
    log << "error: --rel-scale must be positive\n";
    return kFailure;
  }

  std::vector<Sample> bench;
  std::map<std::string, std::string> responses;
  try {
    bench = load_benchmark(opt.bench);
    responses = load_responses(opt.responses);
  } catch (const SchemaError& e) {
    log << "schema error: " << e.what() << '\n';
    return kSchema;
  }
  if (bench.empty()) {
    log << "schema error: benchmark is empty\n";
    return kSchema;
  }

  ParseOptions popts;
  popts.format = uses_indices(setting) ? ResponseFormat::IndexSelection : opt.format;
  popts.rel_scale = opt.rel_scale;
  popts.fallback = opt.fallback;

  std::vector<SampleScore> scores(bench.size());
  std::vector<ParseDiagnostics> diags(bench.size());
  parallel_for(bench.size(), opt.threads, [&](std::size_t i) {
    const auto& s = bench[i];
    const auto it = responses.find(s.id);
    if (it == responses.end()) {
      scores[i] = missing_score(setting, s);
      return;
    }
    const auto parsed = parse_response(it->second, s.dims(), s.max_index(), popts);
    diags[i] = parsed.diagnostics;
    scores[i] = score_sample(setting, parsed, s);
  });

  std::set<std::string> bench_ids;
  for (const auto& s : bench) bench_ids.insert(s.id);
  std::vector<std::string> unknown;
  for (const auto& [id, _] : responses)
    if (!bench_ids.count(id)) unknown.push_back(id);

  const auto report = aggregate(scores);
  RunConfig cfg;
  cfg.command = "eval";
  cfg.setting = opt.setting;
  cfg.format = opt.format;
  cfg.rel_scale = opt.rel_scale;
  cfg.fallback = opt.fallback;

  auto j = report_header(cfg, {input_record("bench", opt.bench), input_record("responses", opt.responses)});
  put_eval_body(j, report);
  j["missing_responses"] = report.overall.missing;
  j["unknown_response_ids"] = unknown;
  ParseDiagnostics total;
  std::size_t fallback_used = 0;
  for (const auto& d : diags) {
    total.skipped += d.skipped;
    total.clamped += d.clamped;
    total.out_of_range += d.out_of_range;
    fallback_used += d.used_fallback ? 1 : 0;
  }
  j["parse_diagnostics"] = {{"skipped_groups", total.skipped},
                            {"clamped_boxes", total.clamped},
                            {"out_of_range_indices", total.out_of_range},
                            {"fallback_samples", fallback_used}};
  auto samples = ojson::array();
  for (const auto& s : report.sample_scores) samples.push_back(sample_score_json(s));
  j["samples"] = std::move(samples);

  write_report(opt.out, j, render_table(report.metrics, j["per_dataset"], j["overall"]));
  if (!unknown.empty()) {
    log << "id mismatch: " << unknown.size() << " response id(s) not in the benchmark\n";
    return kIdMismatch;
  }
  return kOk;
}

// ---------------------------------------------------------------------------
// ground

struct GroundOptions {
  fs::path embeddings;
  fs::path bench;
  SelectConfig select;
  fs::path out;
  unsigned threads = 1;
};

inline int cmd_ground(const GroundOptions& opt, std::ostream& log) {
  try {
    opt.select.validate();
  } catch (const EngineError& e) {
    log << "error: " << e.what() << '\n';
    return kFailure;
  }
  std::vector<Sample> bench;
  try {
    bench = load_benchmark(opt.bench);
  } catch (const SchemaError& e) {
    log << "schema error: " << e.what() << '\n';
    return kSchema;
  }

  struct Outcome {
    std::optional<SampleScore> score;
    std::vector<std::size_t> patches;
    std::optional<std::string> file_digest;
    std::string error;
  };
  std::vector<Outcome> outcomes(bench.size());
  parallel_for(bench.size(), opt.threads, [&](std::size_t i) {
    const auto& s = bench[i];
    auto& o = outcomes[i];
    const auto path = opt.embeddings / (s.id + ".trigemb");
    try {
      const auto bytes = read_file(path);
      const auto e = parse_trigemb({reinterpret_cast<const std::uint8_t*>(bytes.data()), bytes.size()});
      const auto gt = gt_boxes(s);
      const auto g = ground(e, s.dims(), opt.select, std::span<const BBox>(gt));
      SampleScore sc;
      sc.sample_id = s.id;
      sc.dataset = s.dataset;
      sc.setting = Setting::OcrFree;
      sc.pixel_iou = g.pixel_iou;
      sc.followed_instruction = !g.boxes.empty();
      o.score = std::move(sc);
      o.patches = g.patches;
      o.file_digest = sha256_hex(bytes);
    } catch (const std::exception& e) {
      o.error = e.what();
    }
  });

  std::vector<SampleScore> scores;
  auto skipped = ojson::array();
  auto embedding_inputs = ojson::array();
  std::map<std::string, const Outcome*> by_id;
  for (std::size_t i = 0; i < bench.size(); ++i) {
    const auto& o = outcomes[i];
    if (o.score) {
      scores.push_back(*o.score);
      by_id[bench[i].id] = &o;
      embedding_inputs.push_back({{"id", bench[i].id}, {"sha256", *o.file_digest}});
    } else {
      skipped.push_back({{"id", bench[i].id}, {"error", o.error}});
    }
  }

  RunConfig cfg;
  cfg.command = "ground";
  cfg.select = opt.select;
  auto j = report_header(cfg, {input_record("bench", opt.bench)});
  j["embedding_files"] = std::move(embedding_inputs);
  std::string table;
  if (!scores.empty()) {
    const auto report = aggregate(scores);
    put_eval_body(j, report);
    auto samples = ojson::array();
    for (const auto& s : report.sample_scores) {
      auto sj = sample_score_json(s);
      sj["patches"] = by_id.at(s.sample_id)->patches;
      samples.push_back(std::move(sj));
    }
    j["skipped"] = skipped;
    j["samples"] = std::move(samples);
    table = render_table(report.metrics, j["per_dataset"], j["overall"]);
  } else {
    j["setting"] = 1;
    j["metrics"] = metric_names(Setting::OcrFree);
    j["per_dataset"] = ojson::object();
    j["skipped"] = skipped;
    j["samples"] = ojson::array();
  }
  write_report(opt.out, j, table);
  if (!skipped.empty()) {
    log << "skipped " << skipped.size() << " sample(s) with missing or corrupt embeddings\n";
    for (const auto& s : skipped) log << "  " << s["id"].get<std::string>() << ": " << s["error"].get<std::string>() << '\n';
    return kPartial;
  }
  return kOk;
}

// ---------------------------------------------------------------------------
// prompts

struct PromptOptions {
  fs::path bench;
  int setting = 1;
  ResponseFormat format = ResponseFormat::ListAbsolute;
  double rel_scale = 1.0;
  fs::path out;
};

inline int cmd_prompts(const PromptOptions& opt, std::ostream& log) {
  std::vector<Sample> bench;
  try {
    bench = load_benchmark(opt.bench, {.require_gt = false});
  } catch (const SchemaError& e) {
    log << "schema error: " << e.what() << '\n';
    return kSchema;
  }
  Setting setting;
  try {
    setting = setting_from_int(opt.setting);
  } catch (const ScoringError& e) {
    log << "error: " << e.what() << '\n';
    return kFailure;
  }
  fs::create_directories(opt.out);
  int rc = kOk;
  for (const auto& s : bench) {
    try {
      write_file(opt.out / (safe_file_stem(s.id) + ".txt"), build_prompt(setting, s, opt.format, opt.rel_scale));
    } catch (const FormatError& e) {
      log << "sample " << s.id << ": " << e.what() << '\n';
      rc = setting == Setting::OcrFree ? kFailure : kPartial;
      if (rc == kFailure) return rc;
    }
  }
  return rc;
}

// ---------------------------------------------------------------------------
// pipeline

struct PipelineOptions {
  fs::path bench;
  HttpChatConfig endpoint;
  ConstructionConfig construction;
  unsigned concurrency = 1;
  fs::path out;
  bool write_overlays = true;
};

// Runs the generation/rectification loop for every sample. Writes
// transcripts/<id>.json, overlays/<id>.svg and accepted.jsonl (accepted
// samples with gt_indices set from the verdict) under opt.out.
inline int cmd_pipeline(const PipelineOptions& opt, ChatClient& client, std::ostream& log) {
  std::vector<Sample> bench;
  try {
    bench = load_benchmark(opt.bench, {.require_gt = false});
  } catch (const SchemaError& e) {
    log << "schema error: " << e.what() << '\n';
    return kSchema;
  }
  if (opt.construction.max_rounds < 1) {
    log << "error: --max-rounds must be at least 1\n";
    return kFailure;
  }
  for (const auto& s : bench) {
    if (s.ocr.empty() || std::all_of(s.ocr.begin(), s.ocr.end(), [](const OcrBox& b) { return b.text.empty(); })) {
      log << "schema error: sample " << s.id << " has no OCR text\n";
      return kSchema;
    }
  }

  fs::create_directories(opt.out / "transcripts");
  if (opt.write_overlays) fs::create_directories(opt.out / "overlays");

  std::vector<std::optional<Verdict>> verdicts(bench.size());
  std::vector<std::string> errors(bench.size());
  parallel_for(bench.size(), opt.concurrency, [&](std::size_t i) {
    const auto& s = bench[i];
    const auto stem = safe_file_stem(s.id);
    if (opt.write_overlays) write_file(opt.out / "overlays" / (stem + ".svg"), emit_overlay(s));
    ojson record;
    try {
      verdicts[i] = run_construction_loop(client, s, opt.construction);
      record = verdict_to_json(s.id, *verdicts[i]);
    } catch (const ConstructionError& e) {
      errors[i] = e.what();
      Verdict partial;
      partial.transcript = e.partial_transcript();
      record = verdict_to_json(s.id, partial);
      record["error"] = e.what();
    }
    write_file(opt.out / "transcripts" / (stem + ".json"), record.dump(2) + "\n");
  });

  std::vector<Sample> accepted;
  std::size_t failed = 0;
  for (std::size_t i = 0; i < bench.size(); ++i) {
    if (!errors[i].empty()) {
      ++failed;
      log << "sample " << bench[i].id << ": " << errors[i] << '\n';
      continue;
    }
    if (verdicts[i] && verdicts[i]->accepted) {
      Sample s = bench[i];
      s.gt_indices = verdicts[i]->final_indices;
      accepted.push_back(std::move(s));
    }
  }
  save_benchmark(accepted, opt.out / "accepted.jsonl");
  log << accepted.size() << " of " << bench.size() << " sample(s) accepted\n";
  return failed > 0 ? kPartial : kOk;
}

inline int cmd_pipeline(const PipelineOptions& opt, std::ostream& log) {
  HttpChatClient client(opt.endpoint);
  return cmd_pipeline(opt, client, log);
}

// ---------------------------------------------------------------------------
// stats

inline int cmd_stats(const fs::path& bench_path, const fs::path& out, std::ostream& log) {
  std::vector<Sample> bench;
  try {
    bench = load_benchmark(bench_path);
  } catch (const SchemaError& e) {
    log << "schema error: " << e.what() << '\n';
    return kSchema;
  }
  if (bench.empty()) {
    log << "schema error: benchmark is empty\n";
    return kSchema;
  }
  const auto t = compute_stats(bench);
  RunConfig cfg;
  cfg.command = "stats";
  auto j = report_header(cfg, {input_record("bench", bench_path)});
  j["statistics"] = stats_json(t);
  write_report(out, j, render_stats_table(t));
  return kOk;
}

// ---------------------------------------------------------------------------
// report-merge

// Best-of-prompts: for every dataset, the input report with the highest
// dataset-level average wins (first input on ties); the overall block is
// recomputed from the chosen dataset blocks.
inline ojson merge_reports(const std::vector<ojson>& reports, const std::vector<std::string>& names) {
  if (reports.empty()) throw SchemaError(0, "", "nothing to merge");
  const auto& first = reports.front();
  for (const auto* key : {"setting", "metrics", "per_dataset", "samples"})
    for (std::size_t r = 0; r < reports.size(); ++r)
      if (!reports[r].contains(key)) throw SchemaError(0, names[r] + ":" + key, "missing field");

  const auto metrics = first["metrics"].get<std::vector<std::string>>();
  std::set<std::string> datasets;
  for (const auto& [name, _] : first["per_dataset"].items()) datasets.insert(name);
  for (std::size_t r = 1; r < reports.size(); ++r) {
    if (reports[r]["setting"] != first["setting"]) throw SchemaError(0, names[r] + ":setting", "settings differ");
    std::set<std::string> ds;
    for (const auto& [name, _] : reports[r]["per_dataset"].items()) ds.insert(name);
    if (ds != datasets) throw SchemaError(0, names[r] + ":per_dataset", "dataset sets differ");
  }

  ojson out;
  out["tool"] = {{"name", kToolName}, {"version", kToolVersion}};
  out["config"] = {{"command", "report-merge"}, {"mode", "best"}};
  out["conventions"] = first.value("conventions", conventions_json());
  auto inputs = ojson::array();
  for (std::size_t r = 0; r < reports.size(); ++r)
    inputs.push_back({{"role", "report"}, {"path", names[r]}, {"sha256", sha256_hex(reports[r].dump())}});
  out["inputs"] = std::move(inputs);
  out["setting"] = first["setting"];
  out["metrics"] = metrics;

  ojson per = ojson::object();
  ojson provenance = ojson::object();
  std::vector<std::size_t> chosen_for;
  for (const auto& ds : datasets) {
    std::size_t best = 0;
    for (std::size_t r = 1; r < reports.size(); ++r)
      if (reports[r]["per_dataset"][ds]["avg"].get<double>() > reports[best]["per_dataset"][ds]["avg"].get<double>())
        best = r;
    per[ds] = reports[best]["per_dataset"][ds];
    provenance[ds] = names[best];
    chosen_for.push_back(best);
  }

  // Same reduction as aggregate(): dataset means in dataset-name order.
  ojson overall;
  std::size_t count = 0, missing = 0;
  std::map<std::string, double> means;
  double ifr = 0.0;
  const auto nd = static_cast<double>(datasets.size());
  for (const auto& m : metrics) {
    double acc = 0.0;
    for (const auto& ds : datasets) acc += per[ds][m].get<double>();
    means[m] = acc / nd;
  }
  for (const auto& ds : datasets) {
    count += per[ds]["count"].get<std::size_t>();
    missing += per[ds]["missing"].get<std::size_t>();
    ifr += per[ds]["instruction_following_rate"].get<double>();
  }
  overall["count"] = count;
  overall["missing"] = missing;
  double avg = 0.0;
  for (const auto& m : metrics) {
    overall[m] = means[m];
    avg += means[m];
  }
  overall["avg"] = avg / static_cast<double>(metrics.size());
  overall["instruction_following_rate"] = ifr / nd;
  out["per_dataset"] = std::move(per);
  out["overall"] = std::move(overall);
  out["provenance"] = std::move(provenance);

  auto samples = ojson::array();
  std::size_t k = 0;
  for (const auto& ds : datasets) {
    for (const auto& s : reports[chosen_for[k]]["samples"])
      if (s.value("dataset", "") == ds) samples.push_back(s);
    ++k;
  }
  out["samples"] = std::move(samples);
  return out;
}

inline int cmd_report_merge(const std::vector<fs::path>& inputs, const std::string& mode, const fs::path& out,
                            std::ostream& log) {
  if (mode != "best") {
    log << "error: unsupported merge mode '" << mode << "' (only 'best')\n";
    return kFailure;
  }
  std::vector<ojson> reports;
  std::vector<std::string> names;
  ojson merged;
  try {
    for (const auto& p : inputs) {
      try {
        reports.push_back(ojson::parse(read_file(p)));
      } catch (const nlohmann::json::exception& e) {
        throw SchemaError(0, p.generic_string(), std::string("malformed report: ") + e.what());
      }
      names.push_back(p.generic_string());
    }
    merged = merge_reports(reports, names);
  } catch (const SchemaError& e) {
    log << "schema error: " << e.what() << '\n';
    return kSchema;
  } catch (const Error& e) {
    log << "error: " << e.what() << '\n';
    return kSchema;
  } catch (const nlohmann::json::exception& e) {
    log << "schema error: " << e.what() << '\n';
    return kSchema;
  }
  write_report(out, merged,
               render_table(merged["metrics"].get<std::vector<std::string>>(), merged["per_dataset"], merged["overall"]));
  return kOk;
}

// ---------------------------------------------------------------------------
// human-merge

// Verdict files: one {"id": ..., "annotator": ..., "accepted": bool} per line.
inline std::vector<HumanVerdict> load_human_verdicts(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SchemaError(0, "", "cannot open verdict file " + path.string());
  std::vector<HumanVerdict> out;
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
    if (!j.is_object()) throw SchemaError(line, "", "record is not an object");
    for (const char* key : {"id", "annotator"})
      if (!j.contains(key) || !j[key].is_string()) throw SchemaError(line, key, "expected string");
    if (!j.contains("accepted") || !j["accepted"].is_boolean()) throw SchemaError(line, "accepted", "expected boolean");
    out.push_back({j["id"].get<std::string>(), j["annotator"].get<std::string>(), j["accepted"].get<bool>()});
  }
  return out;
}

inline int cmd_human_merge(const fs::path& bench_path, const std::vector<fs::path>& verdict_files, std::size_t required,
                           const fs::path& out, std::ostream& log) {
  try {
    const auto bench = load_benchmark(bench_path);
    std::vector<HumanVerdict> all;
    for (const auto& f : verdict_files) {
      auto v = load_human_verdicts(f);
      all.insert(all.end(), v.begin(), v.end());
    }
    const auto kept = merge_human_verdicts(bench, all, required);
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    save_benchmark(kept, out);
    log << kept.size() << " of " << bench.size() << " sample(s) kept\n";
  } catch (const SchemaError& e) {
    log << "schema error: " << e.what() << '\n';
    return kSchema;
  }
  return kOk;
}

}  // namespace trig::cli
