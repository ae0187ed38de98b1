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
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

#include "kge/evaluation.hpp"
#include "kge/interactions.hpp"
#include "kge/losses.hpp"
#include "kge/sampling.hpp"
#include "kge/triples.hpp"

namespace kge {

enum class OptimizerKind : std::uint8_t { kAdam, kAdadelta };
enum class TrainingApproach : std::uint8_t { kLCWA, kSLCWA };

std::string_view optimizer_name(OptimizerKind kind);
OptimizerKind parse_optimizer(std::string_view name);
std::string_view approach_name(TrainingApproach approach);
TrainingApproach parse_approach(std::string_view name);

/// Throws ConfigError when `loss` cannot be trained under `approach`.
void check_compatibility(TrainingApproach approach, LossKind loss);

/// Adam (β₁ 0.9, β₂ 0.999, eps 1e-8, bias corrected) or Adadelta (ρ 0.95, eps 1e-6).
class Optimizer {
 public:
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kAdamEps = 1e-8;
  static constexpr double kRho = 0.95;
  static constexpr double kAdadeltaEps = 1e-6;

  Optimizer(OptimizerKind kind, double learning_rate, const ModelParameters& params);

  /// `grads[i]` belongs to slot i; null means the slot received no gradient and
  /// is left alone. Returns false, changing nothing, if any gradient is non-finite.
  bool step(ModelParameters& params, std::span<const Tensor* const> grads);

  OptimizerKind kind() const { return kind_; }
  double learning_rate() const { return lr_; }
  std::int64_t steps() const { return steps_; }
  std::int64_t skipped() const { return skipped_; }

 private:
  OptimizerKind kind_;
  double lr_;
  std::vector<Tensor> first_;
  std::vector<Tensor> second_;
  std::int64_t steps_ = 0;
  std::int64_t skipped_ = 0;
};

struct TrainingConfig {
  TrainingApproach approach = TrainingApproach::kSLCWA;
  LossSpec loss;
  SamplerKind sampler = SamplerKind::kUniform;
  Index negatives = 1;
  /// Redraw negatives that are known training triples.
  bool filtered_negatives = false;
  OptimizerKind optimizer = OptimizerKind::kAdam;
  double learning_rate = 0.01;
  Index batch_size = 256;
  Index max_epochs = 1000;
  Index eval_frequency = 50;
  Index patience = 100;
  MetricName stopping_metric = MetricName::kHits10;
  /// Improvement must exceed the best value by this fraction of it.
  double relative_delta = 0.0;
  bool filtered_validation = true;

  void validate() const;
  nlohmann::json to_json() const;
  static TrainingConfig from_json(const nlohmann::json& j);

  friend bool operator==(const TrainingConfig&, const TrainingConfig&) = default;
};

using Batch = std::variant<BatchSLCWA, BatchLCWA>;

/// Loss of one batch as a graph node; parameters come from `p`.
Var batch_loss(const Model& model, Binding& p, const BatchSLCWA& batch, const LossSpec& loss);
Var batch_loss(const Model& model, Binding& p, const BatchLCWA& batch, const LossSpec& loss);

struct StepResult {
  /// Batch loss at the parameters before the update.
  double loss = 0;
  bool applied = false;
};

/// Forward, backward, optimizer update and projection for one batch.
StepResult train_step(Model& model, Optimizer& optimizer, const Batch& batch, const LossSpec& loss);

/// Epoch-level driver over the training split of a store.
class Trainer {
 public:
  Trainer(Model& model, const TripleStore& store, TrainingConfig config, std::uint64_t seed);

  /// Mean batch loss over one pass; throws DivergenceError if no batch stayed finite.
  double train_epoch();

  const Optimizer& optimizer() const { return optimizer_; }
  const TrainingConfig& config() const { return config_; }

 private:
  Model* model_;
  const TripleStore* store_;
  TrainingConfig config_;
  Optimizer optimizer_;
  Rng shuffle_rng_;
  Rng sampling_rng_;
  std::optional<RelationStats> stats_;
  std::optional<FilterIndex> train_filter_;
  std::optional<NegativeSampler> sampler_;
  LcwaGroups groups_;
};

/// Stops once (epoch - best epoch) >= patience at an evaluation point.
class EarlyStopper {
 public:
  EarlyStopper(Index frequency, Index patience, bool higher_is_better, double relative_delta = 0.0);

  bool should_evaluate(Index epoch) const { return epoch % frequency_ == 0; }
  /// Records a validation value; true when it becomes the new best.
  bool report(Index epoch, double metric);
  bool should_stop(Index epoch) const;

  std::optional<Index> best_epoch() const { return best_epoch_; }
  double best_metric() const { return best_metric_; }

 private:
  Index frequency_;
  Index patience_;
  bool higher_is_better_;
  double relative_delta_;
  std::optional<Index> best_epoch_;
  double best_metric_ = 0;
};

struct TraceEntry {
  Index epoch = 0;
  double loss = 0;
  std::optional<double> metric;
  std::string timestamp;

  nlohmann::json to_json() const;
};

struct TrainingOutcome {
  /// Parameters of the best validation evaluation.
  Model model;
  std::vector<TraceEntry> trace;
  Index best_epoch = 0;
  double best_metric = 0;
  Index epochs_run = 0;
  bool stopped_early = false;
  std::int64_t skipped_steps = 0;
};

/// Known triples for filtered ranking of `split`: train and valid for the
/// validation split, all three splits for the test split.
FilterIndex evaluation_filter(const TripleStore& store, Split split);

/// Ranks `split` (head queries through inverse relations when the store is
/// augmented) and aggregates; `filter` may be null for the raw setting.
MetricReport evaluate_split(const Model& model, const TripleStore& store, Split split, const FilterIndex* filter);

/// Trains from `model` with periodic validation; `trace_out` receives one JSON line per epoch.
TrainingOutcome train_with_early_stopping(Model model, const TripleStore& store, const TrainingConfig& config,
                                          std::uint64_t seed, std::ostream* trace_out = nullptr);

std::string utc_timestamp();

}  // namespace kge
