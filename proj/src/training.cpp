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

#include "kge/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <numeric>
#include <ostream>

#include "kge/error.hpp"

namespace kge {

namespace {

std::vector<Index> column(std::span<const Triple> triples, Index Triple::*field) {
  std::vector<Index> out;
  out.reserve(triples.size());
  for (const Triple& t : triples) out.push_back(t.*field);
  return out;
}

// Scores of the negatives in batch order, [B*K]; each negative keeps the
// relation of its positive and replaces exactly one side.
Var score_negatives(const Interaction& interaction, Binding& p, const BatchSLCWA& batch) {
  const std::vector<Index> heads = column(batch.positives, &Triple::head);
  const std::vector<Index> relations = column(batch.positives, &Triple::relation);
  const std::vector<Index> tails = column(batch.positives, &Triple::tail);
  std::vector<Index> tail_rows, tail_cands, head_rows, head_cands, tail_pos, head_pos;
  for (std::size_t i = 0; i < batch.negatives.size(); ++i) {
    const Triple& neg = batch.negatives[i];
    const Index row = batch.pairing[i];
    const Triple& pos = batch.positives[static_cast<std::size_t>(row)];
    if (neg.relation != pos.relation) throw std::invalid_argument("negative changes the relation of its positive");
    if (neg.head == pos.head) {
      tail_rows.push_back(row);
      tail_cands.push_back(neg.tail);
      tail_pos.push_back(static_cast<Index>(i));
    } else if (neg.tail == pos.tail) {
      head_rows.push_back(row);
      head_cands.push_back(neg.head);
      head_pos.push_back(static_cast<Index>(i));
    } else {
      throw std::invalid_argument("negative differs from its positive on both sides");
    }
  }
  if (head_rows.empty()) return interaction.score_tail_candidates(p, heads, relations, tail_rows, tail_cands);
  if (tail_rows.empty()) return interaction.score_head_candidates(p, relations, tails, head_rows, head_cands);
  const Var joined = concat({interaction.score_tail_candidates(p, heads, relations, tail_rows, tail_cands),
                             interaction.score_head_candidates(p, relations, tails, head_rows, head_cands)},
                            0);
  // joined holds tail corruptions then head corruptions; undo that grouping.
  std::vector<Index> order(batch.negatives.size());
  for (std::size_t j = 0; j < tail_pos.size(); ++j) order[static_cast<std::size_t>(tail_pos[j])] = static_cast<Index>(j);
  for (std::size_t j = 0; j < head_pos.size(); ++j) {
    order[static_cast<std::size_t>(head_pos[j])] = static_cast<Index>(tail_pos.size() + j);
  }
  return gather(joined, std::move(order));
}

Tensor signed_labels(Tensor labels) {
  labels.data() = 2.0 * labels.data().array() - 1.0;
  return labels;
}

}  // namespace

std::string_view optimizer_name(OptimizerKind kind) { return kind == OptimizerKind::kAdam ? "Adam" : "Adadelta"; }

OptimizerKind parse_optimizer(std::string_view name) {
  if (name == "Adam" || name == "adam") return OptimizerKind::kAdam;
  if (name == "Adadelta" || name == "adadelta") return OptimizerKind::kAdadelta;
  throw ConfigError("unknown optimizer '" + std::string(name) + "'");
}

std::string_view approach_name(TrainingApproach approach) {
  return approach == TrainingApproach::kLCWA ? "LCWA" : "sLCWA";
}

TrainingApproach parse_approach(std::string_view name) {
  if (name == "LCWA" || name == "lcwa") return TrainingApproach::kLCWA;
  if (name == "sLCWA" || name == "slcwa") return TrainingApproach::kSLCWA;
  throw ConfigError("unknown training approach '" + std::string(name) + "'");
}

void check_compatibility(TrainingApproach approach, LossKind loss) {
  if (approach != TrainingApproach::kLCWA) return;
  if (loss == LossKind::kMRL || loss == LossKind::kPairwiseLogistic) {
    throw ConfigError(std::string(loss_name(loss)) +
                      " is a pairwise loss and cannot be combined with LCWA (1-N scoring has no positive/negative "
                      "pairing); use sLCWA");
  }
  if (loss == LossKind::kNSSAL) throw ConfigError("NSSAL requires sLCWA training");
}

Optimizer::Optimizer(OptimizerKind kind, double learning_rate, const ModelParameters& params)
    : kind_(kind), lr_(learning_rate) {
  if (!(learning_rate > 0) || !std::isfinite(learning_rate)) {
    throw ConfigError("learning rate must be positive and finite");
  }
  for (const auto& slot : params) {
    first_.emplace_back(slot.value.shape());
    second_.emplace_back(slot.value.shape());
  }
}

bool Optimizer::step(ModelParameters& params, std::span<const Tensor* const> grads) {
  if (grads.size() != params.size() || params.size() != first_.size()) {
    throw std::invalid_argument("optimizer: gradient count does not match the parameters");
  }
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (grads[i] == nullptr) continue;
    if (grads[i]->shape() != params[i].value.shape()) {
      throw ShapeError("optimizer: gradient " + to_string(grads[i]->shape()) + " for parameter " +
                       params[i].layout.name + " " + to_string(params[i].value.shape()));
    }
    if (!grads[i]->all_finite()) {
      ++skipped_;
      return false;
    }
  }
  ++steps_;
  const double t = static_cast<double>(steps_);
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (grads[i] == nullptr) continue;
    auto g = grads[i]->data().array();
    auto m = first_[i].data().array();
    auto v = second_[i].data().array();
    auto w = params[i].value.data().array();
    if (kind_ == OptimizerKind::kAdam) {
      m = kBeta1 * m + (1 - kBeta1) * g;
      v = kBeta2 * v + (1 - kBeta2) * g.square();
      const double c1 = 1 - std::pow(kBeta1, t);
      const double c2 = 1 - std::pow(kBeta2, t);
      w -= lr_ * (m / c1) / ((v / c2).sqrt() + kAdamEps);
    } else {
      // m accumulates squared gradients, v squared updates.
      m = kRho * m + (1 - kRho) * g.square();
      const Eigen::ArrayXd delta = -((v + kAdadeltaEps).sqrt() / (m + kAdadeltaEps).sqrt()) * g;
      v = kRho * v + (1 - kRho) * delta.square();
      w += lr_ * delta;
    }
  }
  return true;
}

void TrainingConfig::validate() const {
  loss.validate();
  check_compatibility(approach, loss.kind);
  if (negatives < 1) throw ConfigError("training: negatives must be >= 1");
  if (!(learning_rate > 0) || !std::isfinite(learning_rate)) throw ConfigError("training: learning_rate must be > 0");
  if (batch_size < 1) throw ConfigError("training: batch_size must be >= 1");
  if (max_epochs < 1) throw ConfigError("training: max_epochs must be >= 1");
  if (eval_frequency < 1) throw ConfigError("training: eval_frequency must be >= 1");
  if (patience < eval_frequency) throw ConfigError("training: patience must be >= eval_frequency");
  if (!(relative_delta >= 0)) throw ConfigError("training: relative_delta must be >= 0");
}

nlohmann::json TrainingConfig::to_json() const {
  return {{"approach", std::string(approach_name(approach))},
          {"loss", loss.to_json()},
          {"sampler", std::string(sampler_name(sampler))},
          {"negatives", negatives},
          {"filtered_negatives", filtered_negatives},
          {"optimizer", std::string(optimizer_name(optimizer))},
          {"learning_rate", learning_rate},
          {"batch_size", batch_size},
          {"max_epochs", max_epochs},
          {"eval_frequency", eval_frequency},
          {"patience", patience},
          {"stopping_metric", std::string(metric_name(stopping_metric))},
          {"relative_delta", relative_delta},
          {"filtered_validation", filtered_validation}};
}

TrainingConfig TrainingConfig::from_json(const nlohmann::json& j) {
  static const std::array<std::string_view, 14> kFields{
      "approach",  "loss",       "sampler",        "negatives", "filtered_negatives", "optimizer",     "learning_rate",
      "batch_size", "max_epochs", "eval_frequency", "patience",  "stopping_metric",    "relative_delta", "filtered_validation"};
  if (!j.is_object()) throw ConfigError("training: expected an object");
  for (const auto& [key, _] : j.items()) {
    if (std::find(kFields.begin(), kFields.end(), key) == kFields.end()) {
      throw ConfigError("training: unknown field '" + key + "'");
    }
  }
  TrainingConfig c;
  try {
    if (j.contains("approach")) c.approach = parse_approach(j["approach"].get<std::string>());
    if (j.contains("loss")) c.loss = LossSpec::from_json(j["loss"]);
    if (j.contains("sampler")) c.sampler = parse_sampler(j["sampler"].get<std::string>());
    c.negatives = j.value("negatives", c.negatives);
    c.filtered_negatives = j.value("filtered_negatives", c.filtered_negatives);
    if (j.contains("optimizer")) c.optimizer = parse_optimizer(j["optimizer"].get<std::string>());
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.max_epochs = j.value("max_epochs", c.max_epochs);
    c.eval_frequency = j.value("eval_frequency", c.eval_frequency);
    c.patience = j.value("patience", c.patience);
    if (j.contains("stopping_metric")) c.stopping_metric = parse_metric(j["stopping_metric"].get<std::string>());
    c.relative_delta = j.value("relative_delta", c.relative_delta);
    c.filtered_validation = j.value("filtered_validation", c.filtered_validation);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("training: ") + e.what());
  }
  c.validate();
  return c;
}

Var batch_loss(const Model& model, Binding& p, const BatchSLCWA& batch, const LossSpec& loss) {
  if (batch.positives.empty()) throw std::invalid_argument("empty training batch");
  if (batch.negatives.empty() || batch.negatives.size() % batch.positives.size() != 0) {
    throw std::invalid_argument("sLCWA batch needs the same number of negatives for every positive");
  }
  const Interaction& interaction = model.interaction();
  const auto b = static_cast<Index>(batch.positives.size());
  const auto k = static_cast<Index>(batch.negatives.size()) / b;
  const Var pos = interaction.score_triples(p, column(batch.positives, &Triple::head),
                                            column(batch.positives, &Triple::relation),
                                            column(batch.positives, &Triple::tail));
  const Var neg = score_negatives(interaction, p, batch);

  if (is_pointwise(loss.kind)) {
    Tensor labels(Shape{b + b * k});
    for (Index i = 0; i < b; ++i) labels[i] = 1.0;
    if (uses_signed_labels(loss.kind)) {
      for (Index i = b; i < labels.size(); ++i) labels[i] = -1.0;
    }
    return pointwise_loss(loss.kind, concat({pos, neg}, 0), labels, loss.margin);
  }
  if (is_pairwise(loss.kind)) return pairwise_loss(loss.kind, gather(pos, batch.pairing), neg, loss.margin);
  if (loss.kind == LossKind::kNSSAL) {
    return nssal(pos, reshape(neg, {b, k}), loss.adversarial_temperature, loss.adversarial_margin);
  }
  // CEL over each positive and its own negatives, the positive in column 0.
  Tensor labels(Shape{b, k + 1});
  for (Index i = 0; i < b; ++i) labels(i, 0) = 1.0;
  return cel(concat({reshape(pos, {b, 1}), reshape(neg, {b, k})}, 1), labels, loss.label_smoothing);
}

Var batch_loss(const Model& model, Binding& p, const BatchLCWA& batch, const LossSpec& loss) {
  check_compatibility(TrainingApproach::kLCWA, loss.kind);
  const Var scores = model.interaction().score_tails(p, batch.heads, batch.relations);
  if (loss.kind == LossKind::kCEL) return cross_entropy(scores, batch.labels);
  const Tensor labels = uses_signed_labels(loss.kind) ? signed_labels(batch.labels) : batch.labels;
  return pointwise_loss(loss.kind, scores, labels, loss.margin);
}

StepResult train_step(Model& model, Optimizer& optimizer, const Batch& batch, const LossSpec& loss) {
  Graph g;
  Binding p(g, model.parameters());
  const Var value = std::visit([&](const auto& b) { return batch_loss(model, p, b, loss); }, batch);
  StepResult result;
  result.loss = value.value().item();
  if (!std::isfinite(result.loss)) {
    return result;
  }
  const Gradients grads = g.backward(value.id);
  std::vector<const Tensor*> per_slot(model.parameters().size(), nullptr);
  for (std::size_t i = 0; i < per_slot.size(); ++i) {
    if (const auto id = p.node(i)) per_slot[i] = grads.find(*id);
  }
  result.applied = optimizer.step(model.parameters(), per_slot);
  if (result.applied) model.project();
  return result;
}

Trainer::Trainer(Model& model, const TripleStore& store, TrainingConfig config, std::uint64_t seed)
    : model_(&model),
      store_(&store),
      config_(std::move(config)),
      optimizer_(config_.optimizer, config_.learning_rate, model.parameters()),
      shuffle_rng_(derive_seed(seed, seed_stage::kShuffle)),
      sampling_rng_(derive_seed(seed, seed_stage::kSampling)) {
  config_.validate();
  const auto& train = store.split(Split::kTrain);
  if (train.empty()) throw DataError("training split is empty");
  if (model.num_entities() != store.num_entities() || model.num_relations() != store.num_relations()) {
    throw DataError("model vocabulary (" + std::to_string(model.num_entities()) + " entities, " +
                    std::to_string(model.num_relations()) + " relations) does not match the dataset (" +
                    std::to_string(store.num_entities()) + ", " + std::to_string(store.num_relations()) + ")");
  }
  if (config_.approach == TrainingApproach::kSLCWA) {
    if (config_.sampler == SamplerKind::kBernoulli) stats_ = relation_stats(store);
    if (config_.filtered_negatives) {
      const std::array<Split, 1> splits{Split::kTrain};
      train_filter_ = FilterIndex::build(store, splits);
    }
    sampler_.emplace(config_.sampler, store.num_entities(), config_.negatives, stats_ ? &*stats_ : nullptr,
                     train_filter_ ? &*train_filter_ : nullptr);
  } else {
    groups_ = LcwaGroups::build(train);
  }
}

double Trainer::train_epoch() {
  const auto& train = store_->split(Split::kTrain);
  const bool lcwa = config_.approach == TrainingApproach::kLCWA;
  const Index n = lcwa ? groups_.size() : static_cast<Index>(train.size());
  const auto convention = config_.loss.kind == LossKind::kCEL ? LabelConvention::kDistribution : LabelConvention::kBinary;
  double total = 0;
  Index finite = 0;
  for (const auto& indices : epoch_partition(n, config_.batch_size, shuffle_rng_)) {
    StepResult r;
    if (lcwa) {
      const Batch batch = make_lcwa_batch(groups_, indices, store_->num_entities(), config_.loss.label_smoothing,
                                          convention);
      r = train_step(*model_, optimizer_, batch, config_.loss);
    } else {
      const Batch batch = make_slcwa_batch(train, indices, *sampler_, sampling_rng_);
      r = train_step(*model_, optimizer_, batch, config_.loss);
    }
    if (std::isfinite(r.loss)) {
      total += r.loss;
      ++finite;
    }
  }
  if (finite == 0) throw DivergenceError("every batch of the epoch produced a non-finite loss");
  return total / static_cast<double>(finite);
}

EarlyStopper::EarlyStopper(Index frequency, Index patience, bool higher_is_better, double relative_delta)
    : frequency_(frequency), patience_(patience), higher_is_better_(higher_is_better), relative_delta_(relative_delta) {
  if (frequency < 1) throw ConfigError("early stopping: frequency must be >= 1");
  if (patience < frequency) throw ConfigError("early stopping: patience must be >= the evaluation frequency");
}

bool EarlyStopper::report(Index epoch, double metric) {
  if (std::isnan(metric)) return false;
  bool better = !best_epoch_.has_value();
  if (!better) {
    const double slack = relative_delta_ * std::abs(best_metric_);
    better = higher_is_better_ ? metric > best_metric_ + slack : metric < best_metric_ - slack;
  }
  if (better) {
    best_epoch_ = epoch;
    best_metric_ = metric;
  }
  return better;
}

bool EarlyStopper::should_stop(Index epoch) const { return best_epoch_ && epoch - *best_epoch_ >= patience_; }

nlohmann::json TraceEntry::to_json() const {
  nlohmann::json j{{"epoch", epoch}, {"loss", loss}, {"metric", nullptr}, {"timestamp", timestamp}};
  if (metric) j["metric"] = *metric;
  return j;
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

FilterIndex evaluation_filter(const TripleStore& store, Split split) {
  if (split == Split::kTest) return FilterIndex::build(store, kAllSplits);
  const std::array<Split, 2> splits{Split::kTrain, Split::kValid};
  return FilterIndex::build(store, splits);
}

MetricReport evaluate_split(const Model& model, const TripleStore& store, Split split, const FilterIndex* filter) {
  const auto& triples = store.split(split);
  if (triples.empty()) throw DataError(std::string(split_name(split)) + " split is empty");
  RankOptions options;
  options.filter = filter;
  if (store.inverse_augmented()) options.inverse_offset = store.num_base_relations();
  return aggregate_metrics(compute_ranks(model, triples, options));
}

TrainingOutcome train_with_early_stopping(Model model, const TripleStore& store, const TrainingConfig& config,
                                          std::uint64_t seed, std::ostream* trace_out) {
  config.validate();
  if (store.split(Split::kValid).empty()) throw DataError("early stopping needs a non-empty validation split");
  std::optional<FilterIndex> filter;
  if (config.filtered_validation) filter = evaluation_filter(store, Split::kValid);

  Trainer trainer(model, store, config, seed);
  EarlyStopper stopper(config.eval_frequency, config.patience, higher_is_better(config.stopping_metric),
                       config.relative_delta);
  std::optional<ModelParameters> best;
  TrainingOutcome outcome{model};

  for (Index epoch = 1; epoch <= config.max_epochs; ++epoch) {
    TraceEntry entry;
    entry.epoch = epoch;
    entry.loss = trainer.train_epoch();
    outcome.epochs_run = epoch;
    if (stopper.should_evaluate(epoch) || epoch == config.max_epochs) {
      const MetricReport report = evaluate_split(model, store, Split::kValid, filter ? &*filter : nullptr);
      entry.metric = report.value(config.stopping_metric);
      if (stopper.report(epoch, *entry.metric)) best = model.parameters();
    }
    entry.timestamp = utc_timestamp();
    if (trace_out) *trace_out << entry.to_json().dump() << '\n' << std::flush;
    outcome.trace.push_back(std::move(entry));
    if (stopper.should_stop(epoch)) {
      outcome.stopped_early = epoch < config.max_epochs;
      break;
    }
  }
  if (best) model.parameters() = std::move(*best);
  outcome.best_epoch = stopper.best_epoch().value_or(outcome.epochs_run);
  outcome.best_metric = stopper.best_metric();
  outcome.skipped_steps = trainer.optimizer().skipped();
  outcome.model = std::move(model);
  return outcome;
}

}  // namespace kge
