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
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "kge/evaluation.hpp"
#include "kge/experiment.hpp"

namespace kge {

/// Random-search space. Categorical fields are drawn uniformly from their
/// sets, learning rate and label smoothing log-uniformly from [min, max).
struct SearchSpace {
  /// Kind and every model field that is not searched.
  InteractionSpec model;
  std::vector<Index> embedding_dims{64, 128, 256};
  std::vector<OptimizerKind> optimizers{OptimizerKind::kAdam, OptimizerKind::kAdadelta};
  double learning_rate_min = 0.001;
  double learning_rate_max = 0.1;
  std::vector<Index> batch_sizes{128, 256, 512};
  std::vector<bool> inverse_relations{true, false};
  std::vector<TrainingApproach> approaches{TrainingApproach::kSLCWA, TrainingApproach::kLCWA};
  std::vector<LossKind> slcwa_losses{LossKind::kBCEL, LossKind::kMRL, LossKind::kNSSAL, LossKind::kSPL};
  std::vector<double> mrl_margins{0.5, 1.5, 2.5, 3.5, 4.5, 5.5, 6.5, 7.5, 8.5, 9.5};
  std::vector<double> nssal_margins{1, 3, 5, 7, 9, 11, 13, 15, 17, 19, 21, 23, 25, 27, 29};
  std::vector<double> nssal_temperatures{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
  Index negatives_min = 1;
  Index negatives_max = 100;
  SamplerKind sampler = SamplerKind::kUniform;
  std::vector<LossKind> lcwa_losses{LossKind::kBCEL, LossKind::kCEL, LossKind::kSPL};
  double label_smoothing_min = 0.001;
  double label_smoothing_max = 1.0;
  Index max_epochs = 1000;
  Index eval_frequency = 50;
  Index patience = 100;
  MetricName stopping_metric = MetricName::kHits10;

  void validate() const;
  nlohmann::json to_json() const;
  static SearchSpace from_json(const nlohmann::json& j);
};

/// A configuration from `space`; always passes ExperimentConfig::validate.
ExperimentConfig sample_config(const SearchSpace& space, Rng& rng);

struct Budget {
  Index max_trials = 20;
  /// Checked before each trial starts.
  double max_seconds = std::numeric_limits<double>::infinity();

  void validate() const;
  nlohmann::json to_json() const;
  static Budget from_json(const nlohmann::json& j);
};

enum class TrialStatus : std::uint8_t { kCompleted, kBudgetExhausted, kFailed };
std::string_view trial_status_name(TrialStatus status);
TrialStatus parse_trial_status(std::string_view name);

struct TrialRecord {
  Index trial_id = 0;
  ExperimentConfig config;
  std::uint64_t seed = 0;
  std::optional<double> best_metric;
  Index best_epoch = 0;
  Index epochs_run = 0;
  double wall_seconds = 0;
  TrialStatus status = TrialStatus::kCompleted;
  std::string error;

  nlohmann::json to_json() const;
  static TrialRecord from_json(const nlohmann::json& j);
};

struct StudyResult {
  std::vector<TrialRecord> trials;
  /// Index into `trials` of the best completed trial.
  std::size_t best = 0;
  /// Retrained best configuration.
  std::optional<Model> model;
  MetricReport validation;
  MetricReport test;
  Index retrain_best_epoch = 0;
  double wall_seconds = 0;

  const TrialRecord& best_trial() const { return trials.at(best); }
};

struct StudyOptions {
  /// JSON-lines trial log; existing completed or failed trials are reused.
  std::optional<std::filesystem::path> records;
  /// Called after each trial.
  std::function<void(const TrialRecord&)> on_trial;
  /// Skip the final retraining (records only).
  bool retrain = true;
};

std::uint64_t trial_seed(std::uint64_t master_seed, Index trial_id);

/// Random search with best-by-validation selection, retraining of the best
/// configuration and filtered test evaluation. Throws DivergenceError when no
/// trial completes.
StudyResult random_search(const SearchSpace& space, const TripleStore& base, const Budget& budget,
                          std::uint64_t master_seed, const StudyOptions& options = {});

/// Header of the per-model best-configuration summary.
std::string study_summary_header();
std::string study_summary_row(const StudyResult& study);

}  // namespace kge
