/*
 * Copyright 2026 The kge Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "kge/cli.hpp"
#include "kge/error.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitDivergence = 4;

// Serve large tensor buffers from the heap rather than fresh mappings.
void tune_allocator() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 256 * 1024 * 1024);
  mallopt(M_TRIM_THRESHOLD, 512 * 1024 * 1024);
  mallopt(M_TOP_PAD, 64 * 1024 * 1024);
#endif
}

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) throw kge::DataError("cannot write " + path.string());
}

}  // namespace

int main(int argc, char** argv) {
  tune_allocator();
  CLI::App app{"Knowledge graph embedding training, evaluation and search"};
  app.set_version_flag("--version", std::string(kge::kVersion));
  app.require_subcommand(1);
  bool quiet = false;
  app.add_flag("-q,--quiet", quiet, "Suppress progress output");

  auto* train = app.add_subcommand("train", "Train one configuration and evaluate it on the test split");
  std::string train_config;
  std::optional<std::string> train_output;
  train->add_option("config", train_config, "Run configuration JSON")->required()->check(CLI::ExistingFile);
  train->add_option("-o,--output", train_output, "Output directory (overrides the configuration)");

  auto* evaluate = app.add_subcommand("evaluate", "Rank a split with a saved checkpoint");
  std::string checkpoint;
  std::optional<std::string> dataset_dir, train_path, valid_path, test_path, run_config, eval_output;
  std::string split = "test";
  std::string rank = "all";
  std::string side = "both";
  bool unfiltered = false;
  evaluate->add_option("checkpoint", checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
  auto* dataset_opt = evaluate->add_option("--dataset", dataset_dir, "Directory with train.txt, valid.txt, test.txt");
  auto* config_opt = evaluate->add_option("--config", run_config, "Take the dataset from a run configuration");
  auto* train_opt = evaluate->add_option("--train", train_path, "Training triples");
  auto* valid_opt = evaluate->add_option("--valid", valid_path, "Validation triples");
  auto* test_opt = evaluate->add_option("--test", test_path, "Test triples");
  dataset_opt->excludes(config_opt, train_opt, valid_opt, test_opt);
  config_opt->excludes(train_opt, valid_opt, test_opt);
  train_opt->needs(valid_opt, test_opt);
  evaluate->add_option("--split", split, "Split to rank")->check(CLI::IsMember({"valid", "test"}));
  auto* filtered_flag = evaluate->add_flag("--filtered", "Filtered setting (default)");
  auto* unfiltered_flag = evaluate->add_flag("--unfiltered", unfiltered, "Raw setting");
  filtered_flag->excludes(unfiltered_flag);
  evaluate->add_option("--rank", rank, "Rank definition")
      ->check(CLI::IsMember({"optimistic", "pessimistic", "realistic", "all"}));
  evaluate->add_option("--side", side, "Prediction side")->check(CLI::IsMember({"head", "tail", "both"}));
  evaluate->add_option("-o,--output", eval_output, "Report JSON (default: evaluation.json next to the checkpoint)");

  auto* hpo = app.add_subcommand("hpo", "Random hyper-parameter search");
  std::string study_config;
  std::optional<std::string> hpo_output;
  hpo->add_option("config", study_config, "Study configuration JSON")->required()->check(CLI::ExistingFile);
  hpo->add_option("-o,--output", hpo_output, "Output directory (overrides the configuration)");

  auto* report = app.add_subcommand("report", "Compare run results");
  std::vector<std::string> results;
  std::optional<std::string> report_output;
  bool svg = false;
  std::string format = "markdown";
  report->add_option("results", results, "result.json files or run directories")->required();
  report->add_option("-o,--output", report_output, "Write runs.csv, groups.csv and report.md here");
  report->add_flag("--svg", svg, "Also write report.svg");
  report->add_option("--format", format, "Printed table format")->check(CLI::IsMember({"markdown", "csv"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  std::ostream* log = quiet ? nullptr : &std::cerr;
  try {
    if (*train) {
      std::optional<fs::path> out;
      if (train_output) out = *train_output;
      kge::cmd_train(train_config, log, out);
    } else if (*evaluate) {
      kge::DatasetPaths dataset;
      if (dataset_dir) {
        dataset = kge::DatasetPaths::from_directory(*dataset_dir);
      } else if (run_config) {
        dataset = kge::load_run_config(*run_config).config.dataset;
      } else if (train_path) {
        dataset = {*train_path, *valid_path, *test_path};
      } else {
        throw kge::ConfigError("evaluate: give --dataset, --config or --train/--valid/--test");
      }
      kge::EvaluateOptions options;
      options.split = kge::parse_split(split);
      options.filtered = !unfiltered;
      if (rank != "all") options.rank = kge::parse_rank_type(rank);
      options.side = kge::parse_side(side);
      const kge::Evaluation result = kge::cmd_evaluate(checkpoint, dataset, options);
      const fs::path out = eval_output ? fs::path(*eval_output) : fs::path(checkpoint).parent_path() / "evaluation.json";
      write_file(out, result.to_json(options).dump(2) + "\n");
      std::cout << kge::format_evaluation(result.report, options);
      if (log) *log << "wrote " << out.string() << '\n';
    } else if (*hpo) {
      std::optional<fs::path> out;
      if (hpo_output) out = *hpo_output;
      const kge::StudyOutcome outcome = kge::cmd_hpo(study_config, log, out);
      std::ifstream in(outcome.summary);
      std::cout << in.rdbuf();
    } else if (*report) {
      std::vector<fs::path> paths(results.begin(), results.end());
      kge::ReportOptions options;
      if (report_output) options.output_dir = *report_output;
      options.svg = svg;
      if (svg && options.output_dir.empty()) throw kge::ConfigError("report: --svg needs --output");
      const kge::Report r = kge::cmd_report(paths, options);
      if (r.mixed_datasets) std::cerr << "warning: results come from different datasets\n";
      std::cout << (format == "csv" ? r.runs_csv : r.markdown);
    }
  } catch (const kge::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const kge::DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const kge::DivergenceError& e) {
    std::cerr << "training diverged: " << e.what() << '\n';
    return kExitDivergence;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
