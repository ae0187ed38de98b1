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

#include "kge/hpo.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "kge/error.hpp"

namespace kge {

namespace {

template <typename T>
const T& pick(const std::vector<T>& items, Rng& rng) {
  return items[static_cast<std::size_t>(rng.below(items.size()))];
}

bool pick(const std::vector<bool>& items, Rng& rng) { return items[static_cast<std::size_t>(rng.below(items.size()))]; }

double log_uniform(double lo, double hi, Rng& rng) {
  return std::min(std::exp(rng.uniform(std::log(lo), std::log(hi))), std::nextafter(hi, lo));
}

template <typename T>
void require_nonempty(const std::vector<T>& items, const char* field) {
  if (items.empty()) throw ConfigError(std::string("search space: '") + field + "' is empty");
}

template <typename T, typename F>
nlohmann::json names(const std::vector<T>& items, F name) {
  nlohmann::json out = nlohmann::json::array();
  for (const T& item : items) out.push_back(std::string(name(item)));
  return out;
}

template <typename T, typename F>
std::vector<T> parse_names(const nlohmann::json& j, F parse) {
  std::vector<T> out;
  for (const auto& item : j) out.push_back(parse(item.template get<std::string>()));
  return out;
}

std::string fmt(double v) {
  std::ostringstream out;
  out.precision(10);
  out << v;
  return out.str();
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::map<Index, TrialRecord> read_records(const std::filesystem::path& path) {
  std::map<Index, TrialRecord> out;
  std::ifstream in(path);
  if (!in) return out;
  std::string line;
  Index line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      TrialRecord r = TrialRecord::from_json(nlohmann::json::parse(line));
      out[r.trial_id] = std::move(r);
    } catch (const std::exception& e) {
      throw DataError(path.string() + ": line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace

void SearchSpace::validate() const {
  model.validate();
  require_nonempty(embedding_dims, "embedding_dims");
  require_nonempty(optimizers, "optimizers");
  require_nonempty(batch_sizes, "batch_sizes");
  require_nonempty(inverse_relations, "inverse_relations");
  require_nonempty(approaches, "approaches");
  for (Index d : embedding_dims) {
    if (d < 1) throw ConfigError("search space: embedding dims must be >= 1");
  }
  for (Index b : batch_sizes) {
    if (b < 1) throw ConfigError("search space: batch sizes must be >= 1");
  }
  if (!(learning_rate_min > 0 && learning_rate_min < learning_rate_max)) {
    throw ConfigError("search space: need 0 < learning_rate_min < learning_rate_max");
  }
  for (TrainingApproach approach : approaches) {
    if (approach == TrainingApproach::kSLCWA) {
      require_nonempty(slcwa_losses, "slcwa_losses");
      require_nonempty(mrl_margins, "mrl_margins");
      require_nonempty(nssal_margins, "nssal_margins");
      require_nonempty(nssal_temperatures, "nssal_temperatures");
      if (!(negatives_min >= 1 && negatives_min <= negatives_max)) {
        throw ConfigError("search space: need 1 <= negatives_min <= negatives_max");
      }
      for (double m : mrl_margins) {
        if (!(m >= 0)) throw ConfigError("search space: MRL margins must be >= 0");
      }
      for (double t : nssal_temperatures) {
        if (!(t > 0)) throw ConfigError("search space: NSSAL temperatures must be > 0");
      }
    } else {
      require_nonempty(lcwa_losses, "lcwa_losses");
      for (LossKind loss : lcwa_losses) check_compatibility(TrainingApproach::kLCWA, loss);
      if (!(label_smoothing_min > 0 && label_smoothing_min < label_smoothing_max && label_smoothing_max <= 1.0)) {
        throw ConfigError("search space: need 0 < label_smoothing_min < label_smoothing_max <= 1");
      }
    }
  }
  if (max_epochs < 1) throw ConfigError("search space: max_epochs must be >= 1");
  if (eval_frequency < 1 || patience < eval_frequency) {
    throw ConfigError("search space: need eval_frequency >= 1 and patience >= eval_frequency");
  }
}

nlohmann::json SearchSpace::to_json() const {
  return {{"model", model.to_json()},
          {"embedding_dims", embedding_dims},
          {"optimizers", names(optimizers, optimizer_name)},
          {"learning_rate_min", learning_rate_min},
          {"learning_rate_max", learning_rate_max},
          {"batch_sizes", batch_sizes},
          {"inverse_relations", inverse_relations},
          {"approaches", names(approaches, approach_name)},
          {"slcwa_losses", names(slcwa_losses, loss_name)},
          {"mrl_margins", mrl_margins},
          {"nssal_margins", nssal_margins},
          {"nssal_temperatures", nssal_temperatures},
          {"negatives_min", negatives_min},
          {"negatives_max", negatives_max},
          {"sampler", std::string(sampler_name(sampler))},
          {"lcwa_losses", names(lcwa_losses, loss_name)},
          {"label_smoothing_min", label_smoothing_min},
          {"label_smoothing_max", label_smoothing_max},
          {"max_epochs", max_epochs},
          {"eval_frequency", eval_frequency},
          {"patience", patience},
          {"stopping_metric", std::string(metric_name(stopping_metric))}};
}

SearchSpace SearchSpace::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("search space: expected an object");
  const nlohmann::json defaults = SearchSpace{}.to_json();
  for (const auto& [key, _] : j.items()) {
    if (!defaults.contains(key)) throw ConfigError("search space: unknown field '" + key + "'");
  }
  if (!j.contains("model")) throw ConfigError("search space: missing field 'model'");
  SearchSpace s;
  try {
    s.model = InteractionSpec::from_json(j.at("model"));
    if (j.contains("embedding_dims")) s.embedding_dims = j["embedding_dims"].get<std::vector<Index>>();
    if (j.contains("optimizers")) s.optimizers = parse_names<OptimizerKind>(j["optimizers"], parse_optimizer);
    s.learning_rate_min = j.value("learning_rate_min", s.learning_rate_min);
    s.learning_rate_max = j.value("learning_rate_max", s.learning_rate_max);
    if (j.contains("batch_sizes")) s.batch_sizes = j["batch_sizes"].get<std::vector<Index>>();
    if (j.contains("inverse_relations")) s.inverse_relations = j["inverse_relations"].get<std::vector<bool>>();
    if (j.contains("approaches")) s.approaches = parse_names<TrainingApproach>(j["approaches"], parse_approach);
    if (j.contains("slcwa_losses")) s.slcwa_losses = parse_names<LossKind>(j["slcwa_losses"], parse_loss);
    if (j.contains("mrl_margins")) s.mrl_margins = j["mrl_margins"].get<std::vector<double>>();
    if (j.contains("nssal_margins")) s.nssal_margins = j["nssal_margins"].get<std::vector<double>>();
    if (j.contains("nssal_temperatures")) s.nssal_temperatures = j["nssal_temperatures"].get<std::vector<double>>();
    s.negatives_min = j.value("negatives_min", s.negatives_min);
    s.negatives_max = j.value("negatives_max", s.negatives_max);
    if (j.contains("sampler")) s.sampler = parse_sampler(j["sampler"].get<std::string>());
    if (j.contains("lcwa_losses")) s.lcwa_losses = parse_names<LossKind>(j["lcwa_losses"], parse_loss);
    s.label_smoothing_min = j.value("label_smoothing_min", s.label_smoothing_min);
    s.label_smoothing_max = j.value("label_smoothing_max", s.label_smoothing_max);
    s.max_epochs = j.value("max_epochs", s.max_epochs);
    s.eval_frequency = j.value("eval_frequency", s.eval_frequency);
    s.patience = j.value("patience", s.patience);
    if (j.contains("stopping_metric")) s.stopping_metric = parse_metric(j["stopping_metric"].get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("search space: ") + e.what());
  }
  s.validate();
  return s;
}

ExperimentConfig sample_config(const SearchSpace& space, Rng& rng) {
  ExperimentConfig c;
  TrainingConfig& t = c.training;
  t.approach = pick(space.approaches, rng);
  t.loss.kind = pick(t.approach == TrainingApproach::kSLCWA ? space.slcwa_losses : space.lcwa_losses, rng);
  c.model = space.model;
  c.model.embedding_dim = pick(space.embedding_dims, rng);
  t.optimizer = pick(space.optimizers, rng);
  t.learning_rate = log_uniform(space.learning_rate_min, space.learning_rate_max, rng);
  t.batch_size = pick(space.batch_sizes, rng);
  c.inverse_relations = pick(space.inverse_relations, rng);
  if (t.approach == TrainingApproach::kSLCWA) {
    t.sampler = space.sampler;
    t.negatives = space.negatives_min +
                  static_cast<Index>(rng.below(static_cast<std::uint64_t>(space.negatives_max - space.negatives_min + 1)));
    if (t.loss.kind == LossKind::kMRL) t.loss.margin = pick(space.mrl_margins, rng);
    if (t.loss.kind == LossKind::kNSSAL) {
      t.loss.adversarial_margin = pick(space.nssal_margins, rng);
      t.loss.adversarial_temperature = pick(space.nssal_temperatures, rng);
    }
  } else {
    t.loss.label_smoothing = log_uniform(space.label_smoothing_min, space.label_smoothing_max, rng);
  }
  t.max_epochs = space.max_epochs;
  t.eval_frequency = space.eval_frequency;
  t.patience = space.patience;
  t.stopping_metric = space.stopping_metric;
  c.validate();
  return c;
}

void Budget::validate() const {
  if (max_trials < 1) throw ConfigError("budget: max_trials must be >= 1");
  if (!(max_seconds > 0)) throw ConfigError("budget: max_seconds must be > 0");
}

nlohmann::json Budget::to_json() const {
  nlohmann::json j{{"max_trials", max_trials}, {"max_seconds", nullptr}};
  if (std::isfinite(max_seconds)) j["max_seconds"] = max_seconds;
  return j;
}

Budget Budget::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("budget: expected an object");
  for (const auto& [key, _] : j.items()) {
    if (key != "max_trials" && key != "max_seconds") throw ConfigError("budget: unknown field '" + key + "'");
  }
  Budget b;
  try {
    b.max_trials = j.value("max_trials", b.max_trials);
    if (j.contains("max_seconds") && !j["max_seconds"].is_null()) b.max_seconds = j["max_seconds"].get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("budget: ") + e.what());
  }
  b.validate();
  return b;
}

std::string_view trial_status_name(TrialStatus status) {
  switch (status) {
    case TrialStatus::kCompleted: return "completed";
    case TrialStatus::kBudgetExhausted: return "budget-exhausted";
    case TrialStatus::kFailed: return "failed";
  }
  return "unknown";
}

TrialStatus parse_trial_status(std::string_view name) {
  for (TrialStatus s : {TrialStatus::kCompleted, TrialStatus::kBudgetExhausted, TrialStatus::kFailed}) {
    if (trial_status_name(s) == name) return s;
  }
  throw DataError("unknown trial status '" + std::string(name) + "'");
}

nlohmann::json TrialRecord::to_json() const {
  nlohmann::json j{{"trial_id", trial_id},     {"config", config.to_json()}, {"seed", seed},
                   {"best_metric", nullptr},    {"best_epoch", best_epoch},   {"epochs_run", epochs_run},
                   {"wall_seconds", wall_seconds}, {"status", std::string(trial_status_name(status))}};
  if (best_metric) j["best_metric"] = *best_metric;
  if (!error.empty()) j["error"] = error;
  return j;
}

TrialRecord TrialRecord::from_json(const nlohmann::json& j) {
  TrialRecord r;
  r.trial_id = j.at("trial_id").get<Index>();
  r.config = ExperimentConfig::from_json(j.at("config"));
  r.seed = j.at("seed").get<std::uint64_t>();
  if (!j.at("best_metric").is_null()) r.best_metric = j["best_metric"].get<double>();
  r.best_epoch = j.at("best_epoch").get<Index>();
  r.epochs_run = j.at("epochs_run").get<Index>();
  r.wall_seconds = j.at("wall_seconds").get<double>();
  r.status = parse_trial_status(j.at("status").get<std::string>());
  r.error = j.value("error", std::string());
  if (r.status == TrialStatus::kCompleted && !(r.best_metric && std::isfinite(*r.best_metric))) {
    throw DataError("completed trial " + std::to_string(r.trial_id) + " has no finite metric");
  }
  return r;
}

std::uint64_t trial_seed(std::uint64_t master_seed, Index trial_id) {
  std::uint64_t state = derive_seed(master_seed, seed_stage::kHpoTrial) + static_cast<std::uint64_t>(trial_id);
  return splitmix64(state);
}

StudyResult random_search(const SearchSpace& space, const TripleStore& base, const Budget& budget,
                          std::uint64_t master_seed, const StudyOptions& options) {
  space.validate();
  budget.validate();
  const auto start = std::chrono::steady_clock::now();
  const TripleStore plain = prepare_store(base, false);
  std::optional<TripleStore> augmented;
  auto store_for = [&](bool inverse) -> const TripleStore& {
    if (!inverse) return plain;
    if (!augmented) augmented = add_inverse_relations(base);
    return *augmented;
  };

  std::map<Index, TrialRecord> previous;
  std::ofstream log;
  if (options.records) {
    previous = read_records(*options.records);
    log.open(*options.records, std::ios::app);
    if (!log) throw DataError("cannot open trial records " + options.records->string());
  }

  StudyResult study;
  Rng config_rng(derive_seed(master_seed, seed_stage::kHpoConfig));
  for (Index id = 0; id < budget.max_trials; ++id) {
    TrialRecord record;
    record.trial_id = id;
    record.config = sample_config(space, config_rng);
    record.seed = trial_seed(master_seed, id);

    const auto found = previous.find(id);
    if (found != previous.end() && found->second.status != TrialStatus::kBudgetExhausted) {
      if (!(found->second.config == record.config) || found->second.seed != record.seed) {
        throw ConfigError("trial records belong to a different study (trial " + std::to_string(id) + " differs)");
      }
      study.trials.push_back(found->second);
      continue;
    }

    if (seconds_since(start) >= budget.max_seconds) {
      record.status = TrialStatus::kBudgetExhausted;
    } else {
      const auto trial_start = std::chrono::steady_clock::now();
      try {
        const TrainingOutcome outcome =
            run_experiment(record.config, store_for(record.config.inverse_relations), record.seed);
        record.best_metric = outcome.best_metric;
        record.best_epoch = outcome.best_epoch;
        record.epochs_run = outcome.epochs_run;
        record.status = std::isfinite(outcome.best_metric) ? TrialStatus::kCompleted : TrialStatus::kFailed;
        if (record.status == TrialStatus::kFailed) record.error = "non-finite validation metric";
      } catch (const std::exception& e) {
        record.status = TrialStatus::kFailed;
        record.error = e.what();
      }
      record.wall_seconds = seconds_since(trial_start);
    }
    if (log.is_open()) log << record.to_json().dump() << '\n' << std::flush;
    if (options.on_trial) options.on_trial(record);
    study.trials.push_back(std::move(record));
  }

  const double sign = higher_is_better(space.stopping_metric) ? 1.0 : -1.0;
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < study.trials.size(); ++i) {
    const TrialRecord& r = study.trials[i];
    if (r.status != TrialStatus::kCompleted) continue;
    if (!best || sign * *r.best_metric > sign * *study.trials[*best].best_metric) best = i;
  }
  if (!best) throw DivergenceError("no trial of the study completed");
  study.best = *best;

  if (options.retrain) {
    const ExperimentConfig& config = study.trials[*best].config;
    const TripleStore& store = store_for(config.inverse_relations);
    TrainingOutcome outcome = run_experiment(config, store, derive_seed(master_seed, seed_stage::kRetrain));
    const FilterIndex valid_filter = evaluation_filter(store, Split::kValid);
    const FilterIndex test_filter = evaluation_filter(store, Split::kTest);
    study.validation = evaluate_split(outcome.model, store, Split::kValid, &valid_filter);
    study.test = evaluate_split(outcome.model, store, Split::kTest, &test_filter);
    study.retrain_best_epoch = outcome.best_epoch;
    study.model = std::move(outcome.model);
  }
  study.wall_seconds = seconds_since(start);
  return study;
}

std::string study_summary_header() {
  return "model,approach,loss,inverse_relations,embedding_dim,optimizer,learning_rate,batch_size,negatives,"
         "label_smoothing,margin,adversarial_margin,adversarial_temperature,trials,completed,best_trial,"
         "validation_metric,test_hits_at_10,test_mrr,test_mr,test_amr";
}

std::string study_summary_row(const StudyResult& study) {
  const TrialRecord& best = study.best_trial();
  const ExperimentConfig& c = best.config;
  const TrainingConfig& t = c.training;
  const bool slcwa = t.approach == TrainingApproach::kSLCWA;
  const std::size_t completed = static_cast<std::size_t>(std::count_if(
      study.trials.begin(), study.trials.end(), [](const TrialRecord& r) { return r.status == TrialStatus::kCompleted; }));
  std::ostringstream row;
  row << interaction_name(c.model.kind) << ',' << approach_name(t.approach) << ',' << loss_name(t.loss.kind) << ','
      << (c.inverse_relations ? "yes" : "no") << ',' << c.model.embedding_dim << ',' << optimizer_name(t.optimizer)
      << ',' << fmt(t.learning_rate) << ',' << t.batch_size << ',' << (slcwa ? std::to_string(t.negatives) : "")
      << ',' << (slcwa ? "" : fmt(t.loss.label_smoothing)) << ','
      << (t.loss.kind == LossKind::kMRL ? fmt(t.loss.margin) : "") << ','
      << (t.loss.kind == LossKind::kNSSAL ? fmt(t.loss.adversarial_margin) : "") << ','
      << (t.loss.kind == LossKind::kNSSAL ? fmt(t.loss.adversarial_temperature) : "") << ',' << study.trials.size()
      << ',' << completed << ',' << best.trial_id << ',' << fmt(*best.best_metric);
  if (study.model) {
    row << ',' << fmt(study.test.value(MetricName::kHits10)) << ',' << fmt(study.test.value(MetricName::kMRR)) << ','
        << fmt(study.test.value(MetricName::kMR)) << ',' << fmt(study.test.value(MetricName::kAMR));
  } else {
    row << ",,,,";
  }
  return row.str();
}

}  // namespace kge
