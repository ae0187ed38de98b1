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

#include "kge/cli.hpp"

#include <Eigen/Core>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iterator>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include "kge/error.hpp"

namespace kge {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) throw DataError("cannot write " + path.string());
}

json parse_config_text(const std::string& text, const fs::path& source) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(source.string() + ": " + e.what());
  }
}

void allow_only(const json& j, std::initializer_list<std::string_view> keys, std::string_view what) {
  if (!j.is_object()) throw ConfigError(std::string(what) + ": expected an object");
  for (const auto& [key, _] : j.items()) {
    if (std::find(keys.begin(), keys.end(), key) == keys.end()) {
      throw ConfigError(std::string(what) + ": unknown field '" + key + "'");
    }
  }
}

std::uint64_t seed_from(const json& j, std::string_view what) {
  if (!j.is_number_integer() || (j.is_number_integer() && !j.is_number_unsigned() && j.get<std::int64_t>() < 0)) {
    throw ConfigError(std::string(what) + ": seed must be a non-negative integer");
  }
  return j.get<std::uint64_t>();
}

std::string path_string(const json& j, std::string_view field) {
  if (!j.is_string()) throw ConfigError(std::string(field) + " must be a string");
  return j.get<std::string>();
}

double seconds_between(std::chrono::steady_clock::time_point a, std::chrono::steady_clock::time_point b) {
  return std::chrono::duration<double>(b - a).count();
}

void note(std::ostream* log, const std::string& line) {
  if (log) *log << line << '\n' << std::flush;
}

void report_build(std::ostream* log, const TripleStore& store) {
  const BuildReport& r = store.report();
  for (Split s : kAllSplits) {
    const auto removed = r.duplicates_removed[static_cast<std::size_t>(s)];
    if (removed > 0) note(log, "warning: removed " + std::to_string(removed) + " duplicate " + std::string(split_name(s)) + " triples");
  }
  if (r.entities_without_training_triples > 0) {
    note(log, "warning: " + std::to_string(r.entities_without_training_triples) +
                  " entities have no training triples and keep their initial embeddings");
  }
}

json dataset_summary(const DatasetPaths& paths, const TripleStore& base) {
  return {{"train", paths.train.string()},
          {"valid", paths.valid.string()},
          {"test", paths.test.string()},
          {"entities", base.num_entities()},
          {"relations", base.num_base_relations()},
          {"triples",
           {{"train", base.split(Split::kTrain).size()},
            {"valid", base.split(Split::kValid).size()},
            {"test", base.split(Split::kTest).size()}}}};
}

fs::path output_from_env(fs::path fallback) {
  if (const char* dir = std::getenv("KGE_OUTPUT_DIR"); dir && *dir) return dir;
  return fallback;
}

std::string fmt(double v) {
  std::ostringstream out;
  out.precision(10);
  out << v;
  return out.str();
}

}  // namespace

json version_info() {
  return {{"kge", std::string(kVersion)},
          {"compiler", __VERSION__},
          {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                        std::to_string(EIGEN_MINOR_VERSION)},
          {"checkpoint_format", "kge-checkpoint-1"},
          {"result_format", 1}};
}

DatasetPaths DatasetPaths::from_directory(const fs::path& dir) {
  return {dir / "train.txt", dir / "valid.txt", dir / "test.txt"};
}

DatasetPaths DatasetPaths::resolved(const fs::path& base) const {
  auto fix = [&](const fs::path& p) { return p.is_absolute() ? p : (base / p).lexically_normal(); };
  return {fix(train), fix(valid), fix(test)};
}

void DatasetPaths::check_exist() const {
  for (const fs::path* p : {&train, &valid, &test}) {
    if (!fs::is_regular_file(*p)) throw DataError("dataset file not found: " + p->string());
  }
}

TripleStore DatasetPaths::load() const {
  check_exist();
  return load_store(train, valid, test);
}

json DatasetPaths::to_json() const {
  return {{"train", train.string()}, {"valid", valid.string()}, {"test", test.string()}};
}

DatasetPaths DatasetPaths::from_json(const json& j) {
  if (j.is_string()) return from_directory(j.get<std::string>());
  allow_only(j, {"train", "valid", "test", "directory"}, "dataset");
  if (j.contains("directory")) {
    if (j.size() != 1) throw ConfigError("dataset: 'directory' excludes explicit split paths");
    return from_directory(path_string(j.at("directory"), "dataset.directory"));
  }
  DatasetPaths d;
  for (auto [name, target] : {std::pair{"train", &d.train}, {"valid", &d.valid}, {"test", &d.test}}) {
    if (!j.contains(name)) throw ConfigError(std::string("dataset: missing field '") + name + "'");
    *target = path_string(j.at(name), std::string("dataset.") + name);
  }
  return d;
}

void RunConfig::validate() const {
  experiment.validate();
  if (output_dir.empty()) throw ConfigError("output_dir must not be empty");
  dataset.check_exist();
}

json RunConfig::to_json() const {
  json j = experiment.to_json();
  j["dataset"] = dataset.to_json();
  j["seed"] = seed;
  j["output_dir"] = output_dir.string();
  return j;
}

RunConfig RunConfig::from_json(const json& j) {
  allow_only(j, {"dataset", "model", "training", "inverse_relations", "seed", "output_dir"}, "run config");
  RunConfig c;
  if (!j.contains("dataset")) throw ConfigError("run config: missing field 'dataset'");
  c.dataset = DatasetPaths::from_json(j.at("dataset"));
  json experiment = j;
  experiment.erase("dataset");
  experiment.erase("seed");
  experiment.erase("output_dir");
  c.experiment = ExperimentConfig::from_json(experiment);
  if (j.contains("seed")) c.seed = seed_from(j.at("seed"), "run config");
  if (j.contains("output_dir")) c.output_dir = path_string(j.at("output_dir"), "output_dir");
  if (c.output_dir.empty()) throw ConfigError("run config: output_dir must not be empty");
  return c;
}

LoadedConfig load_run_config(const fs::path& path) {
  LoadedConfig loaded;
  loaded.path = path;
  loaded.text = read_text(path);
  loaded.config = RunConfig::from_json(parse_config_text(loaded.text, path));
  loaded.config.dataset = loaded.config.dataset.resolved(path.parent_path());
  loaded.config.output_dir = output_from_env(loaded.config.output_dir);
  loaded.config.validate();
  return loaded;
}

json RunResult::to_json() const {
  return {{"config", config},
          {"config_text", config_text},
          {"dataset", dataset},
          {"metrics",
           {{"test_filtered", test_filtered.to_json()},
            {"test_unfiltered", test_unfiltered.to_json()},
            {"validation_filtered", validation.to_json()}}},
          {"training",
           {{"best_epoch", best_epoch},
            {"best_metric", best_metric},
            {"epochs_run", epochs_run},
            {"stopped_early", stopped_early},
            {"skipped_steps", skipped_steps}}},
          {"artifacts", {{"checkpoint", checkpoint.string()}, {"trace", trace.string()}}},
          {"versions", versions},
          {"timing", timing}};
}

RunResult RunResult::from_json(const json& j) {
  RunResult r;
  try {
    r.config = j.at("config");
    r.config_text = j.at("config_text").get<std::string>();
    r.dataset = j.at("dataset");
    const json& m = j.at("metrics");
    r.test_filtered = MetricReport::from_json(m.at("test_filtered"));
    r.test_unfiltered = MetricReport::from_json(m.at("test_unfiltered"));
    r.validation = MetricReport::from_json(m.at("validation_filtered"));
    const json& t = j.at("training");
    r.best_epoch = t.at("best_epoch").get<Index>();
    r.best_metric = t.at("best_metric").get<double>();
    r.epochs_run = t.at("epochs_run").get<Index>();
    r.stopped_early = t.at("stopped_early").get<bool>();
    r.skipped_steps = t.at("skipped_steps").get<Index>();
    r.checkpoint = j.at("artifacts").at("checkpoint").get<std::string>();
    r.trace = j.at("artifacts").at("trace").get<std::string>();
    r.versions = j.value("versions", json::object());
    r.timing = j.value("timing", json::object());
  } catch (const json::exception& e) {
    throw DataError(std::string("run result: ") + e.what());
  }
  return r;
}

RunResult read_run_result(const fs::path& path) {
  const fs::path file = fs::is_directory(path) ? path / "result.json" : path;
  if (!fs::exists(file)) throw DataError("result not found: " + file.string());
  json j;
  try {
    j = json::parse(read_text(file));
  } catch (const json::parse_error& e) {
    throw DataError(file.string() + ": " + e.what());
  }
  RunResult r = RunResult::from_json(j);
  const fs::path dir = file.parent_path();
  if (r.checkpoint.is_relative()) r.checkpoint = dir / r.checkpoint;
  if (r.trace.is_relative()) r.trace = dir / r.trace;
  return r;
}

RunResult cmd_train(const fs::path& config_path, std::ostream* log, const std::optional<fs::path>& output_override) {
  const auto started = std::chrono::steady_clock::now();
  const std::string started_at = utc_timestamp();
  LoadedConfig loaded = load_run_config(config_path);
  if (output_override) loaded.config.output_dir = *output_override;
  const RunConfig& config = loaded.config;
  const ExperimentConfig& experiment = config.experiment;

  const TripleStore base = config.dataset.load();
  report_build(log, base);
  const TripleStore store = prepare_store(base, experiment.inverse_relations);
  note(log, "dataset: " + std::to_string(base.num_entities()) + " entities, " +
                std::to_string(base.num_base_relations()) + " relations, " +
                std::to_string(base.split(Split::kTrain).size()) + " training triples");

  const fs::path dir = config.output_dir;
  fs::create_directories(dir);
  write_text(dir / "config.json", loaded.text);

  RunResult result;
  result.config = parse_config_text(loaded.text, config_path);
  result.config_text = loaded.text;
  result.dataset = dataset_summary(config.dataset, base);
  result.trace = "trace.jsonl";
  result.checkpoint = "model.ckpt";

  note(log, "training " + std::string(interaction_name(experiment.model.kind)) + " (" +
                std::string(approach_name(experiment.training.approach)) + ", " +
                std::string(loss_name(experiment.training.loss.kind)) +
                (experiment.inverse_relations ? ", inverse relations" : "") + ")");
  std::ofstream trace(dir / result.trace, std::ios::trunc);
  if (!trace) throw DataError("cannot write " + (dir / result.trace).string());
  const auto train_start = std::chrono::steady_clock::now();
  const TrainingOutcome outcome = run_experiment(experiment, store, config.seed, &trace);
  trace.close();
  const auto train_end = std::chrono::steady_clock::now();
  note(log, "trained " + std::to_string(outcome.epochs_run) + " epochs, best epoch " +
                std::to_string(outcome.best_epoch) + " with validation " +
                std::string(metric_name(experiment.training.stopping_metric)) + " " + fmt(outcome.best_metric));

  save_checkpoint(dir / result.checkpoint, outcome.model, experiment.inverse_relations, config.seed);

  const FilterIndex valid_filter = evaluation_filter(store, Split::kValid);
  const FilterIndex test_filter = evaluation_filter(store, Split::kTest);
  result.validation = evaluate_split(outcome.model, store, Split::kValid, &valid_filter);
  result.test_filtered = evaluate_split(outcome.model, store, Split::kTest, &test_filter);
  result.test_unfiltered = evaluate_split(outcome.model, store, Split::kTest, nullptr);
  const auto finished = std::chrono::steady_clock::now();

  result.best_epoch = outcome.best_epoch;
  result.best_metric = outcome.best_metric;
  result.epochs_run = outcome.epochs_run;
  result.stopped_early = outcome.stopped_early;
  result.skipped_steps = outcome.skipped_steps;
  result.versions = version_info();
  result.timing = {{"started", started_at},
                   {"finished", utc_timestamp()},
                   {"train_seconds", seconds_between(train_start, train_end)},
                   {"evaluation_seconds", seconds_between(train_end, finished)},
                   {"total_seconds", seconds_between(started, finished)}};
  write_text(dir / "result.json", result.to_json().dump(2) + "\n");
  note(log, "test (filtered, realistic): MRR " + fmt(result.test_filtered.value(MetricName::kMRR)) + ", Hits@10 " +
                fmt(result.test_filtered.value(MetricName::kHits10)));
  note(log, "wrote " + (dir / "result.json").string());
  result.checkpoint = dir / result.checkpoint;
  result.trace = dir / result.trace;
  return result;
}

json Evaluation::to_json(const EvaluateOptions& options) const {
  json rows = json::array();
  for (Side side : kAllSides) {
    if (options.side && *options.side != side) continue;
    for (RankType type : kAllRankTypes) {
      if (options.rank && *options.rank != type) continue;
      const Metrics& m = report.get(side, type);
      json row{{"side", side_name(side)}, {"rank_type", rank_type_name(type)}, {"mr", m.mr}, {"amr", m.amr}, {"mrr", m.mrr}};
      for (std::size_t i = 0; i < kHitsAt.size(); ++i) row["hits_at_" + std::to_string(kHitsAt[i])] = m.hits[i];
      rows.push_back(std::move(row));
    }
  }
  return {{"model", header.spec.to_json()},
          {"inverse_relations", header.inverse_relations},
          {"split", split_name(options.split)},
          {"filtered", options.filtered},
          {"rows", std::move(rows)},
          {"metrics", report.to_json()}};
}

Evaluation cmd_evaluate(const fs::path& checkpoint, const DatasetPaths& dataset, const EvaluateOptions& options) {
  auto [header, model] = load_checkpoint(checkpoint);
  const TripleStore base = dataset.load();
  const TripleStore store = prepare_store(base, header.inverse_relations);
  if (store.num_entities() != header.num_entities || store.num_relations() != header.num_relations) {
    throw DataError("vocabulary mismatch: checkpoint has " + std::to_string(header.num_entities) + " entities and " +
                    std::to_string(header.num_relations) + " relations, dataset has " +
                    std::to_string(store.num_entities()) + " entities and " + std::to_string(store.num_relations()) +
                    " relations");
  }
  std::optional<FilterIndex> filter;
  if (options.filtered) filter = evaluation_filter(store, options.split);
  Evaluation out{evaluate_split(model, store, options.split, filter ? &*filter : nullptr), header};
  return out;
}

std::string format_evaluation(const MetricReport& report, const EvaluateOptions& options) {
  std::ostringstream out;
  out << "| side | rank | MR | AMR | MRR | Hits@1 | Hits@3 | Hits@5 | Hits@10 |\n";
  out << "|---|---|---:|---:|---:|---:|---:|---:|---:|\n";
  out << std::fixed;
  for (Side side : kAllSides) {
    if (options.side && *options.side != side) continue;
    for (RankType type : kAllRankTypes) {
      if (options.rank && *options.rank != type) continue;
      const Metrics& m = report.get(side, type);
      out << "| " << side_name(side) << " | " << rank_type_name(type) << " | " << std::setprecision(2) << m.mr
          << " | " << std::setprecision(4) << m.amr << " | " << m.mrr;
      for (double h : m.hits) out << " | " << h;
      out << " |\n";
    }
  }
  return out.str();
}

json StudyConfig::to_json() const {
  json j{{"dataset", dataset.to_json()}, {"budget", budget.to_json()}, {"seed", seed}, {"output_dir", output_dir.string()}};
  if (spaces.size() == 1) {
    j["space"] = spaces.front().to_json();
  } else {
    json shared = spaces.front().to_json();
    shared.erase("model");
    j["space"] = shared;
    json models = json::array();
    for (const SearchSpace& s : spaces) models.push_back(s.model.to_json());
    j["models"] = models;
  }
  return j;
}

StudyConfig StudyConfig::from_json(const json& j) {
  allow_only(j, {"dataset", "space", "models", "budget", "seed", "output_dir"}, "study config");
  StudyConfig c;
  if (!j.contains("dataset")) throw ConfigError("study config: missing field 'dataset'");
  if (!j.contains("space")) throw ConfigError("study config: missing field 'space'");
  c.dataset = DatasetPaths::from_json(j.at("dataset"));
  const json& space = j.at("space");
  if (j.contains("models")) {
    const json& models = j.at("models");
    if (!models.is_array() || models.empty()) throw ConfigError("study config: 'models' must be a non-empty array");
    if (space.is_object() && space.contains("model")) {
      throw ConfigError("study config: give the model either in 'space' or in 'models'");
    }
    for (const json& m : models) {
      json s = space;
      s["model"] = m;
      c.spaces.push_back(SearchSpace::from_json(s));
    }
  } else {
    c.spaces.push_back(SearchSpace::from_json(space));
  }
  if (j.contains("budget")) c.budget = Budget::from_json(j.at("budget"));
  if (j.contains("seed")) c.seed = seed_from(j.at("seed"), "study config");
  if (j.contains("output_dir")) c.output_dir = path_string(j.at("output_dir"), "output_dir");
  if (c.output_dir.empty()) throw ConfigError("study config: output_dir must not be empty");
  return c;
}

StudyConfig load_study_config(const fs::path& path) {
  StudyConfig c = StudyConfig::from_json(parse_config_text(read_text(path), path));
  c.dataset = c.dataset.resolved(path.parent_path());
  c.output_dir = output_from_env(c.output_dir);
  c.dataset.check_exist();
  return c;
}

StudyOutcome cmd_hpo(const fs::path& config_path, std::ostream* log, const std::optional<fs::path>& output_override) {
  StudyConfig config = load_study_config(config_path);
  if (output_override) config.output_dir = *output_override;
  const TripleStore base = config.dataset.load();
  report_build(log, base);

  const fs::path dir = config.output_dir;
  fs::create_directories(dir);
  json manifest = config.to_json();
  manifest["versions"] = version_info();
  manifest["started"] = utc_timestamp();
  manifest["dataset_summary"] = dataset_summary(config.dataset, base);
  write_text(dir / "manifest.json", manifest.dump(2) + "\n");

  StudyOutcome outcome;
  std::map<std::string, int> seen;
  std::string summary = study_summary_header() + "\n";
  std::string failures;
  for (const SearchSpace& space : config.spaces) {
    std::string name(interaction_name(space.model.kind));
    if (const int n = ++seen[name]; n > 1) name += "_" + std::to_string(n);
    const fs::path model_dir = dir / name;
    fs::create_directories(model_dir);
    note(log, "study " + name + ": up to " + std::to_string(config.budget.max_trials) + " trials");

    StudyOptions options;
    options.records = model_dir / "trials.jsonl";
    options.on_trial = [&](const TrialRecord& r) {
      std::string line = name + " trial " + std::to_string(r.trial_id) + ": " + std::string(trial_status_name(r.status));
      if (r.best_metric) line += ", validation " + fmt(*r.best_metric) + " at epoch " + std::to_string(r.best_epoch);
      if (!r.error.empty()) line += " (" + r.error + ")";
      line += ", " + fmt(r.wall_seconds) + " s";
      note(log, line);
    };
    StudyResult study;
    try {
      study = random_search(space, base, config.budget, config.seed, options);
    } catch (const DivergenceError& e) {
      note(log, "study " + name + " failed: " + e.what());
      failures += (failures.empty() ? "" : "; ") + name + ": " + e.what();
      continue;
    }
    const TrialRecord& best = study.best_trial();
    save_checkpoint(model_dir / "best.ckpt", *study.model, best.config.inverse_relations,
                    derive_seed(config.seed, seed_stage::kRetrain));
    const json record{{"model", name},
                      {"best_trial", best.to_json()},
                      {"trials", study.trials.size()},
                      {"retrain_best_epoch", study.retrain_best_epoch},
                      {"validation_filtered", study.validation.to_json()},
                      {"test_filtered", study.test.to_json()},
                      {"wall_seconds", study.wall_seconds}};
    write_text(model_dir / "study.json", record.dump(2) + "\n");
    note(log, "study " + name + ": best trial " + std::to_string(best.trial_id) + ", test Hits@10 " +
                  fmt(study.test.value(MetricName::kHits10)));
    summary += study_summary_row(study) + "\n";
    outcome.studies.push_back(std::move(study));
  }
  outcome.summary = dir / "summary.csv";
  write_text(outcome.summary, summary);
  if (outcome.studies.empty()) throw DivergenceError("no study completed: " + failures);
  return outcome;
}

}  // namespace kge
