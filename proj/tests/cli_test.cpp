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
#include <gtest/gtest.h>
#include <httplib.h>
#include <sys/wait.h>

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <regex>
#include <sstream>
#include <thread>

#include "fixtures.hpp"
#include "golden.hpp"
#include "trig/cli.hpp"
#include "trig/trigemb.hpp"

namespace trig {
namespace {

namespace fs = std::filesystem;
using nlohmann::ordered_json;
using testing::expect_golden;
using testing::read_text;

// A scratch directory named after the running test, emptied on entry and exit.
class ScratchDir {
 public:
  ScratchDir() {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    path_ = fs::temp_directory_path() / (std::string("trig_cli_") + info->test_suite_name() + "_" + info->name());
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~ScratchDir() { fs::remove_all(path_); }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

void write_lines(const fs::path& path, const std::vector<std::string>& lines) {
  std::ofstream out(path, std::ios::binary);
  for (const auto& l : lines) out << l << '\n';
}

void write_responses(const fs::path& path, const std::vector<std::pair<std::string, std::string>>& rows) {
  std::vector<std::string> lines;
  for (const auto& [id, r] : rows) lines.push_back(nlohmann::json({{"id", id}, {"response", r}}).dump());
  write_lines(path, lines);
}

std::vector<std::pair<std::string, std::string>> planted_responses() {
  std::vector<std::pair<std::string, std::string>> rows;
  for (const auto& p : fixture::planted20())
    if (p.response) rows.emplace_back(p.id, *p.response);
  return rows;
}

std::string gt_list(const Sample& s) {
  std::string out;
  for (auto i : s.gt_indices) out += (out.empty() ? "" : ", ") + std::to_string(i);
  return out;
}

ordered_json load_json(const fs::path& p) { return ordered_json::parse(read_text(p)); }

cli::EvalOptions index_eval(const ScratchDir& dir, const std::string& report = "report.json") {
  cli::EvalOptions o;
  o.bench = dir / "bench.jsonl";
  o.responses = dir / "responses.jsonl";
  o.setting = 2;
  o.format = ResponseFormat::IndexSelection;
  o.out = dir / report;
  return o;
}

// ---------------------------------------------------------------------------
// eval

TEST(EvalCommandTest, TwentySampleReportMatchesHandTable) {
  ScratchDir dir;
  save_benchmark(fixture::samples20(), dir / "bench.jsonl");
  write_responses(dir / "responses.jsonl", planted_responses());
  std::ostringstream log;
  ASSERT_EQ(cli::cmd_eval(index_eval(dir), log), cli::kOk) << log.str();

  const auto j = load_json(dir / "report.json");
  EXPECT_EQ(j["missing_responses"], 1);
  EXPECT_TRUE(j["unknown_response_ids"].empty());
  EXPECT_EQ(j["setting"], 2);
  EXPECT_EQ(j["samples"].size(), 20u);

  struct Row {
    const char* name;
    double iou, p, r, f1, ifr;
    int n, missing;
  };
  const Row rows[] = {
      {"chartqa", (1.0 + 1.0 / 3.0) / 4, 1.5 / 4, 1.5 / 4, 1.5 / 4, 0.75, 4, 0},
      {"docvqa", 2.55 / 6, 3.8 / 6, 2.75 / 6, (2.0 / 3 + 1 + 8.0 / 9 + 0.4) / 6, 5.0 / 6, 6, 1},
      {"infographicsvqa", 1.0, 1.0, 1.0, 1.0, 1.0, 5, 0},
      {"trins", 0.0, 0.0, 0.0, 0.0, 0.0, 5, 0},
  };
  double overall_avg = 0;
  for (const auto& row : rows) {
    SCOPED_TRACE(row.name);
    const auto& d = j["per_dataset"][row.name];
    EXPECT_NEAR(d["instance_iou"].get<double>(), row.iou, 1e-12);
    EXPECT_NEAR(d["precision"].get<double>(), row.p, 1e-12);
    EXPECT_NEAR(d["recall"].get<double>(), row.r, 1e-12);
    EXPECT_NEAR(d["f1"].get<double>(), row.f1, 1e-12);
    EXPECT_NEAR(d["instruction_following_rate"].get<double>(), row.ifr, 1e-12);
    EXPECT_NEAR(d["avg"].get<double>(), (row.iou + row.p + row.r + row.f1) / 4, 1e-12);
    EXPECT_EQ(d["count"], row.n);
    EXPECT_EQ(d["missing"], row.missing);
    overall_avg += (row.iou + row.p + row.r + row.f1) / 16;
  }
  EXPECT_NEAR(j["overall"]["avg"].get<double>(), overall_avg, 1e-12);
  EXPECT_EQ(j["overall"]["count"], 20);

  const auto table = read_text(dir / "report.txt");
  for (const auto& row : rows) EXPECT_NE(table.find(row.name), std::string::npos);
}

TEST(EvalCommandTest, PerfectResponsesScoreOne) {
  ScratchDir dir;
  const auto samples = fixture::samples20();
  save_benchmark(samples, dir / "bench.jsonl");
  std::vector<std::pair<std::string, std::string>> rows;
  for (const auto& s : samples) rows.emplace_back(s.id, gt_list(s));
  write_responses(dir / "responses.jsonl", rows);
  std::ostringstream log;
  ASSERT_EQ(cli::cmd_eval(index_eval(dir), log), cli::kOk) << log.str();
  const auto j = load_json(dir / "report.json");
  for (const char* m : {"instance_iou", "precision", "recall", "f1", "avg", "instruction_following_rate"})
    EXPECT_EQ(j["overall"][m].get<double>(), 1.0) << m;
}

TEST(EvalCommandTest, UnparseableResponsesHaveZeroFollowingRate) {
  ScratchDir dir;
  const auto samples = fixture::samples20();
  save_benchmark(samples, dir / "bench.jsonl");
  std::vector<std::pair<std::string, std::string>> rows;
  for (const auto& s : samples) rows.emplace_back(s.id, "I am not sure which region holds the answer.");
  write_responses(dir / "responses.jsonl", rows);
  std::ostringstream log;
  ASSERT_EQ(cli::cmd_eval(index_eval(dir), log), cli::kOk) << log.str();
  const auto j = load_json(dir / "report.json");
  EXPECT_EQ(j["overall"]["instruction_following_rate"].get<double>(), 0.0);
  EXPECT_EQ(j["overall"]["avg"].get<double>(), 0.0);
}

TEST(EvalCommandTest, Setting1PerfectBoxesGivePixelIouOne) {
  ScratchDir dir;
  const auto samples = fixture::samples20();
  save_benchmark(samples, dir / "bench.jsonl");
  std::vector<std::pair<std::string, std::string>> rows;
  for (const auto& s : samples)
    rows.emplace_back(s.id, serialize_boxes(gt_boxes(s), ResponseFormat::ListAbsolute, s.dims()));
  write_responses(dir / "responses.jsonl", rows);
  auto opt = index_eval(dir);
  opt.setting = 1;
  opt.format = ResponseFormat::ListAbsolute;
  std::ostringstream log;
  ASSERT_EQ(cli::cmd_eval(opt, log), cli::kOk) << log.str();
  const auto j = load_json(dir / "report.json");
  EXPECT_EQ(j["metrics"], ordered_json::array({"pixel_iou"}));
  EXPECT_EQ(j["overall"]["pixel_iou"].get<double>(), 1.0);
  for (const auto& [name, d] : j["per_dataset"].items()) EXPECT_EQ(d["pixel_iou"].get<double>(), 1.0) << name;
}

TEST(EvalCommandTest, UnknownResponseIdExitsThreeAndStillWritesReport) {
  ScratchDir dir;
  save_benchmark(fixture::samples20(), dir / "bench.jsonl");
  auto rows = planted_responses();
  rows.emplace_back("ghost-1", "0");
  write_responses(dir / "responses.jsonl", rows);
  std::ostringstream log;
  EXPECT_EQ(cli::cmd_eval(index_eval(dir), log), cli::kIdMismatch);
  ASSERT_TRUE(fs::exists(dir / "report.json"));
  const auto j = load_json(dir / "report.json");
  EXPECT_EQ(j["unknown_response_ids"], ordered_json::array({"ghost-1"}));
  EXPECT_NE(log.str().find("id mismatch"), std::string::npos);
}

TEST(EvalCommandTest, SchemaErrorsExitTwo) {
  ScratchDir dir;
  auto lines = std::vector<std::string>{};
  for (const auto& s : fixture::samples20()) lines.push_back(sample_to_json(s).dump());
  lines[4] = R"({"id": "broken", "dataset": "docvqa"})";
  write_lines(dir / "bench.jsonl", lines);
  write_responses(dir / "responses.jsonl", planted_responses());
  std::ostringstream log;
  EXPECT_EQ(cli::cmd_eval(index_eval(dir), log), cli::kSchema);
  EXPECT_NE(log.str().find("line 5"), std::string::npos) << log.str();

  save_benchmark(fixture::samples20(), dir / "bench.jsonl");
  write_lines(dir / "responses.jsonl", {R"({"id": "chartqa-1"})"});
  std::ostringstream log2;
  EXPECT_EQ(cli::cmd_eval(index_eval(dir), log2), cli::kSchema);
}

TEST(EvalCommandTest, ReportBytesIndependentOfRunAndThreadCount) {
  ScratchDir dir;
  save_benchmark(fixture::samples20(), dir / "bench.jsonl");
  write_responses(dir / "responses.jsonl", planted_responses());
  std::ostringstream log;
  auto a = index_eval(dir, "a.json");
  auto b = index_eval(dir, "b.json");
  auto c = index_eval(dir, "c.json");
  a.threads = 1;
  b.threads = 1;
  c.threads = 8;
  ASSERT_EQ(cli::cmd_eval(a, log), cli::kOk);
  ASSERT_EQ(cli::cmd_eval(b, log), cli::kOk);
  ASSERT_EQ(cli::cmd_eval(c, log), cli::kOk);
  EXPECT_EQ(read_text(dir / "a.json"), read_text(dir / "b.json"));
  EXPECT_EQ(read_text(dir / "a.json"), read_text(dir / "c.json"));
  EXPECT_EQ(read_text(dir / "a.txt"), read_text(dir / "c.txt"));
}

// ---------------------------------------------------------------------------
// ground

void write_embeddings(const fs::path& dir, const std::vector<Sample>& samples) {
  fs::create_directories(dir);
  for (std::size_t i = 0; i < samples.size(); ++i)
    write_trigemb(fixture::planted_embeddings(samples[i], 1000 + i), dir / (samples[i].id + ".trigemb"));
}

cli::GroundOptions ground_options(const ScratchDir& dir, const std::string& report) {
  cli::GroundOptions o;
  o.embeddings = dir / "emb";
  o.bench = dir / "bench.jsonl";
  o.out = dir / report;
  return o;
}

TEST(GroundCommandTest, DeterministicAcrossThreadCounts) {
  ScratchDir dir;
  const auto samples = fixture::samples20();
  save_benchmark(samples, dir / "bench.jsonl");
  write_embeddings(dir / "emb", samples);
  std::ostringstream log;
  auto a = ground_options(dir, "a.json");
  auto b = ground_options(dir, "b.json");
  auto c = ground_options(dir, "c.json");
  c.threads = 8;
  ASSERT_EQ(cli::cmd_ground(a, log), cli::kOk) << log.str();
  ASSERT_EQ(cli::cmd_ground(b, log), cli::kOk);
  ASSERT_EQ(cli::cmd_ground(c, log), cli::kOk);
  EXPECT_EQ(read_text(dir / "a.json"), read_text(dir / "b.json"));
  EXPECT_EQ(read_text(dir / "a.json"), read_text(dir / "c.json"));

  const auto j = load_json(dir / "a.json");
  EXPECT_EQ(j["metrics"], ordered_json::array({"pixel_iou"}));
  EXPECT_EQ(j["per_dataset"].size(), 4u);
  EXPECT_TRUE(j["skipped"].empty());
  EXPECT_EQ(j["embedding_files"].size(), 20u);
  ASSERT_EQ(j["samples"].size(), 20u);
  for (const auto& s : j["samples"]) {
    const auto iou = s["pixel_iou"].get<double>();
    EXPECT_GE(iou, 0.0);
    EXPECT_LE(iou, 1.0);
    EXPECT_FALSE(s["patches"].empty());
  }
}

// Recorded selections for the planted embeddings with default k1, k2, window.
TEST(GroundCommandTest, RecordedSelections) {
  ScratchDir dir;
  const auto samples = fixture::samples20();
  save_benchmark(samples, dir / "bench.jsonl");
  write_embeddings(dir / "emb", samples);
  std::ostringstream log;
  ASSERT_EQ(cli::cmd_ground(ground_options(dir, "g.json"), log), cli::kOk) << log.str();
  const auto j = load_json(dir / "g.json");
  ordered_json recorded = ordered_json::object();
  for (const auto& s : j["samples"]) recorded[s["id"].get<std::string>()] = {{"patches", s["patches"]}, {"pixel_iou", s["pixel_iou"]}};
  expect_golden("ground_selections.json", recorded.dump(1) + "\n");
}

TEST(GroundCommandTest, MissingAndCorruptFilesArePartial) {
  ScratchDir dir;
  const auto samples = fixture::samples20();
  save_benchmark(samples, dir / "bench.jsonl");
  write_embeddings(dir / "emb", samples);
  fs::remove(dir / "emb" / "docvqa-2.trigemb");
  fs::resize_file(dir / "emb" / "trins-1.trigemb", 30);
  std::ostringstream log;
  EXPECT_EQ(cli::cmd_ground(ground_options(dir, "g.json"), log), cli::kPartial);
  const auto j = load_json(dir / "g.json");
  ASSERT_EQ(j["skipped"].size(), 2u);
  EXPECT_EQ(j["skipped"][0]["id"], "docvqa-2");
  EXPECT_EQ(j["skipped"][1]["id"], "trins-1");
  EXPECT_NE(j["skipped"][1]["error"].get<std::string>().find("truncated"), std::string::npos)
      << j["skipped"][1]["error"];
  EXPECT_EQ(j["samples"].size(), 18u);
  EXPECT_EQ(j["per_dataset"]["docvqa"]["count"], 5);
  EXPECT_EQ(j["per_dataset"]["trins"]["count"], 4);
}

TEST(GroundCommandTest, InvalidSelectionConfigFails) {
  ScratchDir dir;
  save_benchmark(fixture::samples20(), dir / "bench.jsonl");
  auto o = ground_options(dir, "g.json");
  o.select.window = 4;
  std::ostringstream log;
  EXPECT_EQ(cli::cmd_ground(o, log), cli::kFailure);
}

// ---------------------------------------------------------------------------
// prompts

TEST(PromptsCommandTest, OneFilePerSampleMatchingBuilder) {
  ScratchDir dir;
  const auto samples = fixture::samples20();
  save_benchmark(samples, dir / "bench.jsonl");
  for (int setting : {1, 2, 3}) {
    cli::PromptOptions o;
    o.bench = dir / "bench.jsonl";
    o.setting = setting;
    o.format = ResponseFormat::CssAbsolute;
    o.out = dir / ("s" + std::to_string(setting));
    std::ostringstream log;
    ASSERT_EQ(cli::cmd_prompts(o, log), cli::kOk) << log.str();
    for (const auto& s : samples)
      EXPECT_EQ(read_text(o.out / (s.id + ".txt")),
                build_prompt(setting_from_int(setting), s, ResponseFormat::CssAbsolute));
    EXPECT_EQ(std::distance(fs::directory_iterator(o.out), fs::directory_iterator{}), 20);
  }
}

// ---------------------------------------------------------------------------
// pipeline against a local chat-completion server

// Serves scripted replies per (sample, stage). The first request of all gets
// a 503 so the client's retry path runs.
class FakeChatServer {
 public:
  using Script = std::map<std::string, std::vector<std::string>>;

  FakeChatServer(Script generation, Script rectification, std::string token)
      : generation_(std::move(generation)), rectification_(std::move(rectification)), token_(std::move(token)) {
    server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
      handle(req, res);
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~FakeChatServer() {
    server_.stop();
    thread_.join();
  }

  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1/chat/completions"; }
  int requests() const { return requests_; }
  int unauthorized() const { return unauthorized_; }
  int unavailable() const { return unavailable_; }

 private:
  void handle(const httplib::Request& req, httplib::Response& res) {
    std::lock_guard lock(mu_);
    ++requests_;
    if (req.get_header_value("Authorization") != "Bearer " + token_) {
      ++unauthorized_;
      res.status = 401;
      return;
    }
    if (requests_ == 1) {
      ++unavailable_;
      res.status = 503;
      return;
    }
    const auto body = nlohmann::json::parse(req.body);
    const auto system = body["messages"][0]["content"].get<std::string>();
    const auto user = body["messages"][1]["content"].get<std::string>();
    std::smatch m;
    static const std::regex question(R"(What is shown in (\S+)\?)");
    std::string id = std::regex_search(user, m, question) ? m[1].str() : "";
    const bool generation = system == kGenerationSystemPrompt;
    auto& script = generation ? generation_ : rectification_;
    auto& used = (generation ? gen_used_ : rect_used_)[id];
    const auto& replies = script[id];
    const auto reply = replies.empty() ? std::string("NO") : replies[std::min(used, replies.size() - 1)];
    ++used;
    res.set_content(nlohmann::json({{"choices", {{{"message", {{"role", "assistant"}, {"content", reply}}}}}}}).dump(),
                    "application/json");
  }

  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
  std::mutex mu_;
  Script generation_, rectification_;
  std::map<std::string, std::size_t> gen_used_, rect_used_;
  std::string token_;
  int requests_ = 0, unauthorized_ = 0, unavailable_ = 0;
};

std::vector<Sample> pipeline_samples() {
  return {fixture::make_sample("chartqa-1", "chartqa", {}), fixture::make_sample("chartqa-2", "chartqa", {}),
          fixture::make_sample("chartqa-3", "chartqa", {}), fixture::make_sample("chartqa-4", "chartqa", {})};
}

FakeChatServer::Script generation_script() {
  return {{"chartqa-1", {"1, 2"}},
          {"chartqa-2", {"0"}},
          {"chartqa-3", {"3", "3, 4"}},
          {"chartqa-4", {"I cannot find it.", "2"}}};
}

FakeChatServer::Script rectification_script() {
  return {{"chartqa-1", {"YES\nThe boxes contain the answer."}},
          {"chartqa-2", {"NO\nBox 0 is only the title."}},
          {"chartqa-3", {"NO\nThe value is split across two boxes.", "YES\nBoth halves are selected."}},
          {"chartqa-4", {"YES"}}};
}

void check_pipeline_outputs(const fs::path& out) {
  struct Expect {
    const char* id;
    bool accepted;
    int rounds;
    std::vector<std::int64_t> indices;
    std::size_t exchanges;
  };
  const Expect expect[] = {
      {"chartqa-1", true, 1, {1, 2}, 2},
      {"chartqa-2", false, 3, {}, 6},
      {"chartqa-3", true, 2, {3, 4}, 4},
      {"chartqa-4", true, 2, {2}, 3},
  };
  for (const auto& e : expect) {
    SCOPED_TRACE(e.id);
    const auto t = load_json(out / "transcripts" / (std::string(e.id) + ".json"));
    EXPECT_EQ(t["accepted"], e.accepted);
    EXPECT_EQ(t["rounds_used"], e.rounds);
    EXPECT_EQ(t["final_indices"].get<std::vector<std::int64_t>>(), e.indices);
    EXPECT_EQ(t["transcript"].size(), e.exchanges);
    EXPECT_FALSE(t.contains("error"));
    EXPECT_TRUE(fs::exists(out / "overlays" / (std::string(e.id) + ".svg")));
  }
  const auto t3 = load_json(out / "transcripts" / "chartqa-3.json");
  EXPECT_EQ(t3["transcript"][2]["carried_feedback"], true);
  EXPECT_NE(t3["transcript"][2]["prompt"].get<std::string>().find("The value is split across two boxes."),
            std::string::npos);

  const auto accepted = load_benchmark(out / "accepted.jsonl");
  ASSERT_EQ(accepted.size(), 3u);
  EXPECT_EQ(accepted[0].id, "chartqa-1");
  EXPECT_EQ(accepted[0].gt_indices, (std::vector<std::int64_t>{1, 2}));
  EXPECT_EQ(accepted[1].id, "chartqa-3");
  EXPECT_EQ(accepted[1].gt_indices, (std::vector<std::int64_t>{3, 4}));
  EXPECT_EQ(accepted[2].id, "chartqa-4");
  EXPECT_EQ(accepted[2].gt_indices, (std::vector<std::int64_t>{2}));
}

TEST(PipelineCommandTest, HttpEndpointLoopOutcomes) {
  ScratchDir dir;
  save_benchmark(pipeline_samples(), dir / "bench.jsonl");
  FakeChatServer server(generation_script(), rectification_script(), "secret-token");

  cli::PipelineOptions o;
  o.bench = dir / "bench.jsonl";
  o.endpoint.url = server.url();
  o.endpoint.token = "secret-token";
  o.endpoint.backoff_ms = 5;
  o.out = dir / "out";
  std::ostringstream log;
  ASSERT_EQ(cli::cmd_pipeline(o, log), cli::kOk) << log.str();
  EXPECT_EQ(server.unauthorized(), 0);
  EXPECT_EQ(server.unavailable(), 1);
  // 2 + 6 + 4 + 3 exchanges plus the retried request.
  EXPECT_EQ(server.requests(), 16);
  check_pipeline_outputs(dir / "out");
  for (const char* id : {"chartqa-1", "chartqa-2", "chartqa-3", "chartqa-4"})
    expect_golden(std::string("transcript_") + id + ".json", read_text(dir / "out" / "transcripts" / (std::string(id) + ".json")));
}

TEST(PipelineCommandTest, RejectedTokenFailsSamplesWithPartialTranscripts) {
  ScratchDir dir;
  save_benchmark(pipeline_samples(), dir / "bench.jsonl");
  FakeChatServer server(generation_script(), rectification_script(), "secret-token");
  cli::PipelineOptions o;
  o.bench = dir / "bench.jsonl";
  o.endpoint.url = server.url();
  o.endpoint.token = "wrong";
  o.endpoint.backoff_ms = 1;
  o.out = dir / "out";
  std::ostringstream log;
  EXPECT_EQ(cli::cmd_pipeline(o, log), cli::kPartial);
  const auto t = load_json(dir / "out" / "transcripts" / "chartqa-1.json");
  EXPECT_TRUE(t.contains("error"));
  EXPECT_TRUE(t["transcript"].empty());
  EXPECT_TRUE(load_benchmark(dir / "out" / "accepted.jsonl").empty());
}

// ---------------------------------------------------------------------------
// stats, report-merge, human-merge

TEST(StatsCommandTest, FixtureStatistics) {
  ScratchDir dir;
  save_benchmark(fixture::samples20(), dir / "bench.jsonl");
  std::ostringstream log;
  ASSERT_EQ(cli::cmd_stats(dir / "bench.jsonl", dir / "stats.json", log), cli::kOk) << log.str();
  const auto j = load_json(dir / "stats.json")["statistics"];
  // chartqa: gt box counts 2, 2, 1, 1 over five 20x10 OCR boxes on 100x100.
  const auto& c = j["per_dataset"]["chartqa"];
  EXPECT_EQ(c["questions"], 4);
  EXPECT_EQ(c["images"], 4);
  EXPECT_NEAR(c["avg_ocr_boxes"].get<double>(), 5.0, 1e-12);
  EXPECT_NEAR(c["avg_gt_boxes"].get<double>(), 1.5, 1e-12);
  EXPECT_NEAR(c["avg_gt_box_ratio_pct"].get<double>(), 30.0, 1e-9);
  EXPECT_NEAR(c["avg_ocr_area_pct"].get<double>(), 10.0, 1e-9);
  EXPECT_NEAR(c["avg_gt_area_pct"].get<double>(), 3.0, 1e-9);
  EXPECT_NEAR(c["avg_gt_area_ratio_pct"].get<double>(), 30.0, 1e-9);
  EXPECT_EQ(j["total"]["questions"], 20);
  EXPECT_TRUE(fs::exists(dir / "stats.txt"));
}

TEST(ReportMergeTest, SelfMergeIsIdempotent) {
  ScratchDir dir;
  save_benchmark(fixture::samples20(), dir / "bench.jsonl");
  write_responses(dir / "responses.jsonl", planted_responses());
  std::ostringstream log;
  ASSERT_EQ(cli::cmd_eval(index_eval(dir), log), cli::kOk);
  ASSERT_EQ(cli::cmd_report_merge({dir / "report.json", dir / "report.json"}, "best", dir / "merged.json", log),
            cli::kOk)
      << log.str();
  const auto a = load_json(dir / "report.json");
  const auto m = load_json(dir / "merged.json");
  EXPECT_EQ(m["per_dataset"], a["per_dataset"]);
  EXPECT_EQ(m["overall"], a["overall"]);
  EXPECT_EQ(m["samples"], a["samples"]);
}

TEST(ReportMergeTest, PicksBestReportPerDataset) {
  ScratchDir dir;
  const auto samples = fixture::samples20();
  save_benchmark(samples, dir / "bench.jsonl");
  std::ostringstream log;

  write_responses(dir / "responses.jsonl", planted_responses());
  ASSERT_EQ(cli::cmd_eval(index_eval(dir, "planted.json"), log), cli::kOk);

  std::vector<std::pair<std::string, std::string>> perfect, chart_only;
  for (const auto& s : samples) {
    perfect.emplace_back(s.id, gt_list(s));
    if (s.dataset == "chartqa") chart_only.emplace_back(s.id, gt_list(s));
  }
  write_responses(dir / "responses.jsonl", perfect);
  ASSERT_EQ(cli::cmd_eval(index_eval(dir, "perfect.json"), log), cli::kOk);
  write_responses(dir / "responses.jsonl", chart_only);
  ASSERT_EQ(cli::cmd_eval(index_eval(dir, "chart.json"), log), cli::kOk);

  // Dominance: the perfect report wins everywhere.
  ASSERT_EQ(cli::cmd_report_merge({dir / "planted.json", dir / "perfect.json"}, "best", dir / "m1.json", log), cli::kOk);
  const auto m1 = load_json(dir / "m1.json");
  EXPECT_EQ(m1["per_dataset"], load_json(dir / "perfect.json")["per_dataset"]);
  EXPECT_EQ(m1["overall"]["avg"].get<double>(), 1.0);

  // Mixed: chartqa comes from the second report, ties keep the first.
  ASSERT_EQ(cli::cmd_report_merge({dir / "planted.json", dir / "chart.json"}, "best", dir / "m2.json", log), cli::kOk);
  const auto m2 = load_json(dir / "m2.json");
  const auto planted = load_json(dir / "planted.json");
  const auto chart = load_json(dir / "chart.json");
  EXPECT_EQ(m2["per_dataset"]["chartqa"], chart["per_dataset"]["chartqa"]);
  for (const char* ds : {"docvqa", "infographicsvqa", "trins"}) EXPECT_EQ(m2["per_dataset"][ds], planted["per_dataset"][ds]);
  const auto p1 = (dir / "planted.json").generic_string();
  const auto p2 = (dir / "chart.json").generic_string();
  EXPECT_EQ(m2["provenance"]["chartqa"], p2);
  EXPECT_EQ(m2["provenance"]["trins"], p1);
  double avg = 0;
  for (const auto& [_, d] : m2["per_dataset"].items()) avg += d["avg"].get<double>() / 4;
  EXPECT_NEAR(m2["overall"]["avg"].get<double>(), avg, 1e-12);

  EXPECT_EQ(cli::cmd_report_merge({dir / "planted.json"}, "mean", dir / "m3.json", log), cli::kFailure);
}

TEST(ReportMergeTest, RejectsMismatchedSettings) {
  ScratchDir dir;
  const auto samples = fixture::samples20();
  save_benchmark(samples, dir / "bench.jsonl");
  std::vector<std::pair<std::string, std::string>> rows;
  for (const auto& s : samples) rows.emplace_back(s.id, gt_list(s));
  write_responses(dir / "responses.jsonl", rows);
  std::ostringstream log;
  ASSERT_EQ(cli::cmd_eval(index_eval(dir, "s2.json"), log), cli::kOk);
  auto o = index_eval(dir, "s3.json");
  o.setting = 3;
  ASSERT_EQ(cli::cmd_eval(o, log), cli::kOk);
  EXPECT_EQ(cli::cmd_report_merge({dir / "s2.json", dir / "s3.json"}, "best", dir / "m.json", log), cli::kSchema);
}

TEST(HumanMergeCommandTest, KeepsSamplesAcceptedByBothAnnotators) {
  ScratchDir dir;
  save_benchmark(fixture::samples20(), dir / "bench.jsonl");
  write_lines(dir / "a.jsonl", {R"({"id": "chartqa-1", "annotator": "ann-a", "accepted": true})",
                                R"({"id": "chartqa-2", "annotator": "ann-a", "accepted": true})",
                                R"({"id": "docvqa-1", "annotator": "ann-a", "accepted": true})"});
  write_lines(dir / "b.jsonl", {R"({"id": "chartqa-1", "annotator": "ann-b", "accepted": true})",
                                R"({"id": "chartqa-2", "annotator": "ann-b", "accepted": false})"});
  std::ostringstream log;
  ASSERT_EQ(cli::cmd_human_merge(dir / "bench.jsonl", {dir / "a.jsonl", dir / "b.jsonl"}, 2, dir / "kept.jsonl", log),
            cli::kOk)
      << log.str();
  const auto kept = load_benchmark(dir / "kept.jsonl");
  ASSERT_EQ(kept.size(), 1u);
  EXPECT_EQ(kept[0].id, "chartqa-1");
  EXPECT_EQ(kept[0].accepted_by, (std::vector<std::string>{"ann-a", "ann-b"}));

  write_lines(dir / "c.jsonl", {R"({"id": "chartqa-1", "annotator": "ann-c", "accepted": "yes"})"});
  EXPECT_EQ(cli::cmd_human_merge(dir / "bench.jsonl", {dir / "c.jsonl"}, 1, dir / "kept2.jsonl", log), cli::kSchema);
}

// ---------------------------------------------------------------------------
// The installed executable

int run_cli(const std::string& args, const fs::path& log) {
  const auto cmd = std::string("\"") + TRIG_CLI_PATH + "\" " + args + " > \"" + log.string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

TEST(ExecutableTest, ExitCodesAndHelp) {
  ScratchDir dir;
  save_benchmark(fixture::samples20(), dir / "bench.jsonl");
  auto rows = planted_responses();
  write_responses(dir / "responses.jsonl", rows);
  const auto common = "--bench \"" + (dir / "bench.jsonl").string() + "\" --responses \"" +
                      (dir / "responses.jsonl").string() + "\" --setting 2 --format index";

  EXPECT_EQ(run_cli("--help", dir / "log"), 0);
  EXPECT_NE(read_text(dir / "log").find("eval"), std::string::npos);
  EXPECT_EQ(run_cli("eval " + common + " --out \"" + (dir / "r1.json").string() + "\" --threads 1", dir / "log"), 0)
      << read_text(dir / "log");
  EXPECT_EQ(run_cli("eval " + common + " --out \"" + (dir / "r8.json").string() + "\" --threads 8", dir / "log"), 0);
  EXPECT_EQ(read_text(dir / "r1.json"), read_text(dir / "r8.json"));

  rows.emplace_back("ghost-1", "0");
  write_responses(dir / "responses.jsonl", rows);
  EXPECT_EQ(run_cli("eval " + common + " --out \"" + (dir / "r.json").string() + "\"", dir / "log"), 3);

  write_lines(dir / "responses.jsonl", {"not json"});
  EXPECT_EQ(run_cli("eval " + common + " --out \"" + (dir / "r.json").string() + "\"", dir / "log"), 2);
}

TEST(ExecutableTest, PipelineUsesTokenFromEnvironment) {
  ScratchDir dir;
  save_benchmark(pipeline_samples(), dir / "bench.jsonl");
  FakeChatServer server(generation_script(), rectification_script(), "env-token");
  ::setenv(kTokenEnvVar, "env-token", 1);
  const int rc = run_cli("pipeline --bench \"" + (dir / "bench.jsonl").string() + "\" --endpoint " + server.url() +
                             " --out \"" + (dir / "out").string() + "\"",
                         dir / "log");
  ::unsetenv(kTokenEnvVar);
  ASSERT_EQ(rc, 0) << read_text(dir / "log");
  EXPECT_EQ(server.unauthorized(), 0);
  check_pipeline_outputs(dir / "out");
}

}  // namespace
}  // namespace trig
