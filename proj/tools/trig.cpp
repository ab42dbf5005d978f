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
#include <iostream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"

#include "trig/cli.hpp"

namespace {

const std::map<std::string, trig::ResponseFormat> kFormats{
    {"css", trig::ResponseFormat::CssAbsolute},
    {"abs", trig::ResponseFormat::ListAbsolute},
    {"rel", trig::ResponseFormat::ListRelative},
    {"index", trig::ResponseFormat::IndexSelection},
};

}  // namespace

int main(int argc, char** argv) {
  using namespace trig::cli;
  CLI::App app{"trig: grounding evaluation, embedding-based grounding and benchmark construction"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(trig::kToolVersion));

  const unsigned default_threads = std::max(1u, std::thread::hardware_concurrency());

  EvalOptions eval;
  auto* eval_cmd = app.add_subcommand("eval", "Score model responses against a benchmark");
  eval_cmd->add_option("--bench", eval.bench, "Benchmark file (JSONL)")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--responses", eval.responses, "Responses file (JSONL of {id, response})")
      ->required()
      ->check(CLI::ExistingFile);
  eval_cmd->add_option("--setting", eval.setting, "Evaluation setting (1, 2 or 3)")->required()->check(CLI::Range(1, 3));
  eval_cmd->add_option("--format", eval.format, "Response format: css, abs, rel or index")
      ->required()
      ->transform(CLI::CheckedTransformer(kFormats));
  eval_cmd->add_option("--rel-scale", eval.rel_scale, "Scale of relative coordinates")->capture_default_str();
  eval_cmd->add_flag("--fallback", eval.fallback, "Enable format-agnostic fallback extraction");
  eval_cmd->add_option("--out", eval.out, "Report path (JSON; a .txt table is written next to it)")->required();
  eval_cmd->add_option("--threads", eval.threads, "Worker threads")->default_val(default_threads);

  GroundOptions ground;
  std::string adjacency = "growing";
  auto* ground_cmd = app.add_subcommand("ground", "Select grounding patches from precomputed embeddings");
  ground_cmd->add_option("--embeddings", ground.embeddings, "Directory of <id>.trigemb files")
      ->required()
      ->check(CLI::ExistingDirectory);
  ground_cmd->add_option("--bench", ground.bench, "Benchmark file (JSONL)")->required()->check(CLI::ExistingFile);
  ground_cmd->add_option("--k1", ground.select.k1, "Seed patch count")->capture_default_str();
  ground_cmd->add_option("--k2", ground.select.k2, "Extension pool size")->capture_default_str();
  ground_cmd->add_option("--window", ground.select.window, "Odd merge window size")->capture_default_str();
  ground_cmd->add_option("--adjacency", adjacency, "growing (selection so far) or seeds (seed patches only)")
      ->check(CLI::IsMember({"growing", "seeds"}))
      ->capture_default_str();
  ground_cmd->add_option("--out", ground.out, "Report path")->required();
  ground_cmd->add_option("--threads", ground.threads, "Worker threads")->default_val(default_threads);

  PromptOptions prompts;
  auto* prompts_cmd = app.add_subcommand("prompts", "Write one evaluation prompt per benchmark sample");
  prompts_cmd->add_option("--bench", prompts.bench, "Benchmark file (JSONL)")->required()->check(CLI::ExistingFile);
  prompts_cmd->add_option("--setting", prompts.setting, "Evaluation setting (1, 2 or 3)")
      ->required()
      ->check(CLI::Range(1, 3));
  prompts_cmd->add_option("--format", prompts.format, "Box format: css, abs or rel")
      ->required()
      ->transform(CLI::CheckedTransformer(kFormats));
  prompts_cmd->add_option("--rel-scale", prompts.rel_scale, "Scale of relative coordinates")->capture_default_str();
  prompts_cmd->add_option("--out", prompts.out, "Output directory")->required();

  PipelineOptions pipeline;
  bool no_overlays = false;
  auto* pipeline_cmd = app.add_subcommand("pipeline", "Run the generation/rectification loop against a chat endpoint");
  pipeline_cmd->add_option("--bench", pipeline.bench, "Samples with OCR (JSONL)")->required()->check(CLI::ExistingFile);
  pipeline_cmd->add_option("--endpoint", pipeline.endpoint.url, "Chat-completion URL")->required();
  pipeline_cmd->add_option("--model", pipeline.endpoint.model, "Model name sent to the endpoint")->capture_default_str();
  pipeline_cmd->add_option("--max-rounds", pipeline.construction.max_rounds, "Rounds before a sample is discarded")
      ->capture_default_str();
  pipeline_cmd->add_option("--concurrency", pipeline.concurrency, "Concurrent samples")->capture_default_str();
  pipeline_cmd->add_option("--timeout", pipeline.endpoint.timeout_seconds, "Request timeout in seconds")
      ->capture_default_str();
  pipeline_cmd->add_option("--retries", pipeline.endpoint.max_retries, "Retries per request")->capture_default_str();
  pipeline_cmd->add_flag("--attach-image", pipeline.construction.attach_image, "Send the sample image with requests");
  pipeline_cmd->add_flag("--no-overlays", no_overlays, "Do not write SVG overlays");
  pipeline_cmd->add_option("--out", pipeline.out, "Output directory")->required();

  std::string stats_bench, stats_out;
  auto* stats_cmd = app.add_subcommand("stats", "Benchmark statistics table");
  stats_cmd->add_option("--bench", stats_bench, "Benchmark file (JSONL)")->required()->check(CLI::ExistingFile);
  stats_cmd->add_option("--out", stats_out, "Output path (JSON; a .txt table is written next to it)")->required();

  std::vector<std::string> merge_inputs;
  std::string merge_mode = "best", merge_out;
  auto* merge_cmd = app.add_subcommand("report-merge", "Merge reports of the same setting (best of prompts)");
  merge_cmd->add_option("--in", merge_inputs, "Input reports")->required()->check(CLI::ExistingFile);
  merge_cmd->add_option("--mode", merge_mode, "Merge mode")->capture_default_str();
  merge_cmd->add_option("--out", merge_out, "Merged report path")->required();

  std::string human_bench, human_out;
  std::vector<std::string> human_verdicts;
  std::size_t human_required = 2;
  auto* human_cmd = app.add_subcommand("human-merge", "Keep samples accepted by the required number of annotators");
  human_cmd->add_option("--bench", human_bench, "Benchmark file (JSONL)")->required()->check(CLI::ExistingFile);
  human_cmd->add_option("--verdicts", human_verdicts, "Verdict files (JSONL of {id, annotator, accepted})")
      ->required()
      ->check(CLI::ExistingFile);
  human_cmd->add_option("--required", human_required, "Annotators that must accept")->capture_default_str();
  human_cmd->add_option("--out", human_out, "Output benchmark file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*eval_cmd) return cmd_eval(eval, std::cerr);
    if (*ground_cmd) {
      ground.select.adjacency = adjacency == "seeds" ? trig::Adjacency::SeedsOnly : trig::Adjacency::GrowingSet;
      return cmd_ground(ground, std::cerr);
    }
    if (*prompts_cmd) return cmd_prompts(prompts, std::cerr);
    if (*pipeline_cmd) {
      pipeline.endpoint.token = trig::token_from_env();
      pipeline.write_overlays = !no_overlays;
      return cmd_pipeline(pipeline, std::cerr);
    }
    if (*stats_cmd) return cmd_stats(stats_bench, stats_out, std::cerr);
    if (*merge_cmd) {
      std::vector<std::filesystem::path> paths(merge_inputs.begin(), merge_inputs.end());
      return cmd_report_merge(paths, merge_mode, merge_out, std::cerr);
    }
    if (*human_cmd) {
      std::vector<std::filesystem::path> paths(human_verdicts.begin(), human_verdicts.end());
      return cmd_human_merge(human_bench, paths, human_required, human_out, std::cerr);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  }
  return kFailure;
}
