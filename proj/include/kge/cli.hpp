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

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "kge/evaluation.hpp"
#include "kge/experiment.hpp"
#include "kge/hpo.hpp"

namespace kge {

inline constexpr std::string_view kVersion = "0.1.0";

/// Library, compiler and file-format versions recorded in every result.
nlohmann::json version_info();

/// Train/valid/test TSV paths. Relative paths are resolved against the
/// directory of the file that names them.
struct DatasetPaths {
  std::filesystem::path train;
  std::filesystem::path valid;
  std::filesystem::path test;

  /// `dir/train.txt`, `dir/valid.txt`, `dir/test.txt`.
  static DatasetPaths from_directory(const std::filesystem::path& dir);
  DatasetPaths resolved(const std::filesystem::path& base) const;
  /// Throws DataError naming the first missing file.
  void check_exist() const;
  TripleStore load() const;

  nlohmann::json to_json() const;
  static DatasetPaths from_json(const nlohmann::json& j);
  friend bool operator==(const DatasetPaths&, const DatasetPaths&) = default;
};

/// A single training run: dataset, KGEM configuration, seed and output directory.
///
/// JSON layout: {"dataset": {...}, "model": {...}, "training": {...},
/// "inverse_relations": bool, "seed": n, "output_dir": "..."}.
struct RunConfig {
  DatasetPaths dataset;
  ExperimentConfig experiment;
  std::uint64_t seed = 0;
  std::filesystem::path output_dir = "runs/latest";

  void validate() const;
  nlohmann::json to_json() const;
  static RunConfig from_json(const nlohmann::json& j);
  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

/// A parsed configuration file together with its exact text.
struct LoadedConfig {
  RunConfig config;
  std::string text;
  std::filesystem::path path;
};

/// Parses and validates a run configuration. Dataset paths are resolved
/// against the file's directory; KGE_OUTPUT_DIR replaces the output directory.
LoadedConfig load_run_config(const std::filesystem::path& path);

struct RunResult {
  nlohmann::json config;
  /// Verbatim text of the validated configuration file.
  std::string config_text;
  nlohmann::json dataset;
  MetricReport test_filtered;
  MetricReport test_unfiltered;
  MetricReport validation;
  Index best_epoch = 0;
  double best_metric = 0;
  Index epochs_run = 0;
  bool stopped_early = false;
  Index skipped_steps = 0;
  std::filesystem::path checkpoint;
  std::filesystem::path trace;
  nlohmann::json versions;
  nlohmann::json timing;

  nlohmann::json to_json() const;
  static RunResult from_json(const nlohmann::json& j);
};

RunResult read_run_result(const std::filesystem::path& path);

/// Trains with early stopping and writes config.json (verbatim copy),
/// trace.jsonl, model.ckpt and result.json into the output directory.
RunResult cmd_train(const std::filesystem::path& config_path, std::ostream* log = nullptr,
                    const std::optional<std::filesystem::path>& output_override = std::nullopt);

struct EvaluateOptions {
  Split split = Split::kTest;
  bool filtered = true;
  /// Empty means all.
  std::optional<RankType> rank;
  std::optional<Side> side;
};

struct Evaluation {
  MetricReport report;
  CheckpointHeader header;
  nlohmann::json to_json(const EvaluateOptions& options) const;
};

/// Re-ranks a split with a checkpointed model. Throws DataError when the
/// checkpoint vocabulary sizes differ from the dataset's.
Evaluation cmd_evaluate(const std::filesystem::path& checkpoint, const DatasetPaths& dataset,
                        const EvaluateOptions& options);

/// Rows selected by `options` as a markdown table.
std::string format_evaluation(const MetricReport& report, const EvaluateOptions& options);

/// Study file: {"dataset", "space" | "space" + "models", "budget", "seed", "output_dir"}.
/// With "models", one study runs per listed model spec using the shared space.
struct StudyConfig {
  DatasetPaths dataset;
  std::vector<SearchSpace> spaces;
  Budget budget;
  std::uint64_t seed = 0;
  std::filesystem::path output_dir = "studies/latest";

  nlohmann::json to_json() const;
  static StudyConfig from_json(const nlohmann::json& j);
};

StudyConfig load_study_config(const std::filesystem::path& path);

struct StudyOutcome {
  std::vector<StudyResult> studies;
  std::filesystem::path summary;
};

/// Writes manifest.json, <model>/trials.jsonl, <model>/study.json,
/// <model>/best.ckpt and summary.csv. Completed trials in existing logs are reused.
StudyOutcome cmd_hpo(const std::filesystem::path& config_path, std::ostream* log = nullptr,
                     const std::optional<std::filesystem::path>& output_override = std::nullopt);

struct ReportOptions {
  std::filesystem::path output_dir;
  bool svg = false;
};

struct Report {
  /// One row per result, ordered by configuration quadruple then path.
  std::string runs_csv;
  /// One row per configuration quadruple with mean and spread over its runs.
  std::string groups_csv;
  std::string markdown;
  std::optional<std::string> svg;
  bool mixed_datasets = false;
};

/// Comparison tables over RunResult files (or directories holding result.json).
Report build_report(const std::vector<std::filesystem::path>& results, bool svg = false);
Report cmd_report(const std::vector<std::filesystem::path>& results, const ReportOptions& options);

}  // namespace kge
