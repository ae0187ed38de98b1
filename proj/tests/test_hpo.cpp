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

#include <doctest.h>

#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>

#include "kge/error.hpp"
#include "kge/hpo.hpp"

using namespace kge;

namespace {

const std::filesystem::path kData = KGE_DATA_DIR;

TripleStore nations() {
  const auto dir = kData / "nations";
  return load_store(dir / "train.txt", dir / "valid.txt", dir / "test.txt");
}

SearchSpace quick_space() {
  SearchSpace space;
  space.model.kind = InteractionKind::kDistMult;
  space.embedding_dims = {16, 32};
  space.batch_sizes = {256, 512};
  space.negatives_max = 4;
  space.max_epochs = 6;
  space.eval_frequency = 3;
  space.patience = 3;
  return space;
}

std::filesystem::path scratch(const std::string& name) {
  const auto path = std::filesystem::temp_directory_path() / ("kge_test_hpo_" + name);
  std::filesystem::remove(path);
  return path;
}

}  // namespace

TEST_CASE("sampled configurations are valid and stay inside the space") {
  const SearchSpace space = [] {
    SearchSpace s;
    s.model.kind = InteractionKind::kComplEx;
    return s;
  }();
  Rng rng(17);
  std::set<Index> dims;
  std::set<LossKind> slcwa_losses;
  std::set<LossKind> lcwa_losses;
  for (int i = 0; i < 5000; ++i) {
    const ExperimentConfig c = sample_config(space, rng);
    CHECK_NOTHROW(c.validate());
    dims.insert(c.model.embedding_dim);
    const TrainingConfig& t = c.training;
    CHECK(t.learning_rate >= 0.001);
    CHECK(t.learning_rate < 0.1);
    if (t.approach == TrainingApproach::kSLCWA) {
      CHECK(t.loss.kind != LossKind::kCEL);
      CHECK(t.negatives >= 1);
      CHECK(t.negatives <= 100);
      slcwa_losses.insert(t.loss.kind);
    } else {
      CHECK(t.loss.label_smoothing >= 0.001);
      CHECK(t.loss.label_smoothing < 1.0);
      lcwa_losses.insert(t.loss.kind);
    }
    if (t.loss.kind == LossKind::kMRL) {
      const double m = t.loss.margin;
      CHECK(m >= 0.5);
      CHECK(m <= 9.5);
      CHECK(std::abs(m - std::floor(m) - 0.5) < 1e-12);
    }
  }
  CHECK(dims == std::set<Index>{64, 128, 256});
  CHECK(slcwa_losses == std::set<LossKind>{LossKind::kBCEL, LossKind::kMRL, LossKind::kNSSAL, LossKind::kSPL});
  CHECK(lcwa_losses == std::set<LossKind>{LossKind::kBCEL, LossKind::kCEL, LossKind::kSPL});
}

TEST_CASE("learning rates are uniform in log space") {
  SearchSpace space;
  space.model.kind = InteractionKind::kDistMult;
  Rng rng(2026);
  constexpr int kDraws = 10000;
  constexpr int kBuckets = 10;
  std::array<int, kBuckets> counts{};
  for (int i = 0; i < kDraws; ++i) {
    const double x = std::log10(sample_config(space, rng).training.learning_rate);
    REQUIRE(x >= -3.0);
    REQUIRE(x < -1.0);
    ++counts[static_cast<std::size_t>((x + 3.0) / 2.0 * kBuckets)];
  }
  const double expected = double(kDraws) / kBuckets;
  const double sigma = std::sqrt(expected * (1.0 - 1.0 / kBuckets));
  double chi2 = 0;
  for (int c : counts) {
    CHECK(std::abs(c - expected) <= 3 * sigma);
    chi2 += (c - expected) * (c - expected) / expected;
  }
  // 0.999 quantile of chi-square with 9 degrees of freedom.
  CHECK(chi2 < 27.88);
}

TEST_CASE("search space and budget validation") {
  SearchSpace space;
  space.embedding_dims.clear();
  CHECK_THROWS_AS(space.validate(), ConfigError);
  space = SearchSpace{};
  space.learning_rate_min = 0.2;
  CHECK_THROWS_AS(space.validate(), ConfigError);
  space = SearchSpace{};
  space.lcwa_losses = {LossKind::kMRL};
  CHECK_THROWS_AS(space.validate(), ConfigError);

  Budget budget;
  budget.max_trials = 0;
  CHECK_THROWS_AS(budget.validate(), ConfigError);

  SearchSpace round;
  round.model.kind = InteractionKind::kTransE;
  round.embedding_dims = {8};
  const SearchSpace back = SearchSpace::from_json(round.to_json());
  CHECK(back.to_json() == round.to_json());
  CHECK_THROWS_AS(SearchSpace::from_json(nlohmann::json::object()), ConfigError);
}

TEST_CASE("trial records round trip and completed trials carry a metric") {
  TrialRecord r;
  r.trial_id = 4;
  r.config.model.kind = InteractionKind::kDistMult;
  r.seed = 99;
  r.best_metric = 0.5;
  r.best_epoch = 10;
  const TrialRecord back = TrialRecord::from_json(r.to_json());
  CHECK(back.trial_id == 4);
  CHECK(back.seed == 99);
  CHECK(back.best_metric == 0.5);
  CHECK(back.config == r.config);

  nlohmann::json bad = r.to_json();
  bad["best_metric"] = nullptr;
  CHECK_THROWS_AS(TrialRecord::from_json(bad), DataError);
}

TEST_CASE("a three trial study on nations") {
  const TripleStore store = nations();
  const SearchSpace space = quick_space();
  Budget budget;
  budget.max_trials = 3;
  const auto records = scratch("three.jsonl");

  StudyOptions options;
  options.records = records;
  Index callbacks = 0;
  options.on_trial = [&](const TrialRecord&) { ++callbacks; };
  const StudyResult study = random_search(space, store, budget, 11, options);

  REQUIRE(study.trials.size() == 3);
  CHECK(callbacks == 3);
  for (const TrialRecord& r : study.trials) {
    CHECK(r.status == TrialStatus::kCompleted);
    REQUIRE(r.best_metric);
    CHECK(*r.best_metric <= *study.best_trial().best_metric);
  }
  REQUIRE(study.model);
  CHECK(study.test.value(MetricName::kHits10) > 0.0);

  std::ifstream in(records);
  std::string line;
  Index lines = 0;
  while (std::getline(in, line)) ++lines;
  CHECK(lines == 3);

  const std::string row = study_summary_row(study);
  const auto commas = [](const std::string& s) { return std::count(s.begin(), s.end(), ','); };
  CHECK(commas(row) == commas(study_summary_header()));
  CHECK(row.rfind("DistMult,", 0) == 0);

  SUBCASE("same master seed gives the same study") {
    StudyOptions quiet;
    const StudyResult again = random_search(space, store, budget, 11, quiet);
    REQUIRE(again.trials.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
      CHECK(again.trials[i].config == study.trials[i].config);
      CHECK(again.trials[i].seed == study.trials[i].seed);
      CHECK(again.trials[i].best_metric == study.trials[i].best_metric);
    }
    CHECK(again.best == study.best);
    CHECK(again.test.value(MetricName::kMRR) == study.test.value(MetricName::kMRR));
  }

  SUBCASE("resuming skips completed trials") {
    Budget more;
    more.max_trials = 4;
    StudyOptions resume;
    resume.records = records;
    resume.retrain = false;
    Index ran = 0;
    resume.on_trial = [&](const TrialRecord&) { ++ran; };
    const StudyResult resumed = random_search(space, store, more, 11, resume);
    CHECK(ran == 1);
    REQUIRE(resumed.trials.size() == 4);
    for (std::size_t i = 0; i < 3; ++i) CHECK(resumed.trials[i].best_metric == study.trials[i].best_metric);
  }

  SUBCASE("records from another study are rejected") {
    StudyOptions other;
    other.records = records;
    other.retrain = false;
    CHECK_THROWS_AS(random_search(space, store, budget, 12, other), ConfigError);
  }
}

TEST_CASE("an exhausted wall budget records the unrun trials") {
  const TripleStore store = nations();
  SearchSpace space = quick_space();
  Budget budget;
  budget.max_trials = 2;
  budget.max_seconds = 1e-9;

  StudyOptions options;
  options.retrain = false;
  std::vector<TrialStatus> seen;
  options.on_trial = [&](const TrialRecord& r) { seen.push_back(r.status); };
  CHECK_THROWS_AS(random_search(space, store, budget, 1, options), DivergenceError);
  CHECK(seen == std::vector<TrialStatus>{TrialStatus::kBudgetExhausted, TrialStatus::kBudgetExhausted});
}
