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


// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero when any criterion fails. Arguments select a subset by number.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <unistd.h>

#ifdef __GLIBC__
#include <malloc.h>
#endif

#include "../model_support.hpp"
#include "kge/cli.hpp"
#include "kge/evaluation.hpp"
#include "kge/hpo.hpp"
#include "kge/losses.hpp"
#include "kge/sampling.hpp"
#include "kge/training.hpp"

namespace fs = std::filesystem;
using namespace kge;
using kge::testing::check_away_from_kinks;
using kge::testing::random_tensor;
using kge::testing::small_specs;

namespace {

// Tolerances and limits.
constexpr double kCriterion1Hits = 0.80;
constexpr double kCriterion2Hits = 0.85;
constexpr double kCriterion3Hits = 0.30;
constexpr double kStudySeconds = 1800.0;
constexpr Index kStudyTrials = 20;
constexpr Index kControlTrials = 10;
constexpr int kGradientPoints = 50;
constexpr double kGradientTolerance = 1e-4;
constexpr double kGradientSeconds = 300.0;
constexpr int kRankInstances = 1000;
constexpr double kRankSeconds = 60.0;
constexpr double kAmrLow = 0.9, kAmrHigh = 1.1;
constexpr int kAmrSeeds = 10;
constexpr double kAmrSeconds = 120.0;
constexpr int kCountTuples = 5;
constexpr int kLossInputs = 1000;
constexpr double kLossTolerance = 1e-12;
constexpr int kBernoulliDraws = 100000;
constexpr double kBernoulliTolerance = 0.01;
constexpr double kReproTolerance = 1e-9;

// Trial searches keep the search space but shorten the stopping schedule, and
// stop launching trials after this many seconds.
constexpr Index kMaxEpochs = 200;
constexpr Index kEvalFrequency = 10;
constexpr Index kPatience = 30;
constexpr double kTrialSeconds = 900.0;

struct Outcome {
  bool pass = false;
  std::string detail;
};

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string fmt(double v, int precision = 4) {
  std::ostringstream out;
  out.precision(precision);
  out << v;
  return out.str();
}

fs::path data_dir(const std::string& name) { return fs::path(KGE_DATA_DIR) / name; }

TripleStore load_dataset(const std::string& name) {
  const fs::path dir = data_dir(name);
  return load_store(dir / "train.txt", dir / "valid.txt", dir / "test.txt");
}

SearchSpace scaled_space(InteractionKind kind) {
  SearchSpace space;
  space.model.kind = kind;
  space.max_epochs = kMaxEpochs;
  space.eval_frequency = kEvalFrequency;
  space.patience = kPatience;
  return space;
}

void log_trial(const TrialRecord& r) {
  std::cerr << "  trial " << r.trial_id << " " << trial_status_name(r.status) << " metric "
            << (r.best_metric ? fmt(*r.best_metric) : std::string("-")) << " epochs " << r.epochs_run << " in "
            << fmt(r.wall_seconds, 3) << " s\n";
}

Outcome study_criterion(const SearchSpace& space, Index trials, std::uint64_t seed, double threshold) {
  const TripleStore store = load_dataset("kinships");
  Budget budget;
  budget.max_trials = trials;
  budget.max_seconds = kTrialSeconds;
  StudyOptions options;
  options.on_trial = log_trial;
  Stopwatch clock;
  const StudyResult study = random_search(space, store, budget, seed, options);
  const double seconds = clock.seconds();
  const double hits = study.test.value(MetricName::kHits10);
  const bool pass = hits >= threshold && seconds <= kStudySeconds && static_cast<Index>(study.trials.size()) <= trials;
  return {pass, "test Hits@10 " + fmt(hits) + " (>= " + fmt(threshold) + "), " + std::to_string(study.trials.size()) +
                    " trials, " + fmt(seconds, 5) + " s (<= " + fmt(kStudySeconds, 5) + ")"};
}

Outcome criterion1() {
  SearchSpace space = scaled_space(InteractionKind::kDistMult);
  space.approaches = {TrainingApproach::kLCWA};
  space.lcwa_losses = {LossKind::kCEL};
  space.inverse_relations = {true};
  return study_criterion(space, kStudyTrials, 101, kCriterion1Hits);
}

Outcome criterion2() {
  SearchSpace space = scaled_space(InteractionKind::kComplEx);
  space.approaches = {TrainingApproach::kSLCWA};
  space.slcwa_losses = {LossKind::kBCEL};
  space.inverse_relations = {true};
  return study_criterion(space, kStudyTrials, 202, kCriterion2Hits);
}

// Every configuration of the study stays at or below the bound: each trial's
// best validation Hits@10 and the retrained model's test Hits@10.
Outcome criterion3() {
  const SearchSpace space = scaled_space(InteractionKind::kUM);
  const TripleStore store = load_dataset("kinships");
  Budget budget;
  budget.max_trials = kControlTrials;
  budget.max_seconds = kTrialSeconds;
  StudyOptions options;
  options.on_trial = log_trial;
  const StudyResult study = random_search(space, store, budget, 303, options);
  double worst = study.test.value(MetricName::kHits10);
  Index completed = 0;
  for (const TrialRecord& r : study.trials) {
    if (r.status != TrialStatus::kCompleted || !r.best_metric) continue;
    ++completed;
    worst = std::max(worst, *r.best_metric);
  }
  return {worst <= kCriterion3Hits, "max Hits@10 " + fmt(worst) + " (<= " + fmt(kCriterion3Hits) + ") over " +
                                        std::to_string(completed) + " trials and the retrained model"};
}

Tensor binary_labels(Rng& rng, Shape shape, bool signed_labels) {
  Tensor t(std::move(shape));
  for (Index i = 0; i < t.size(); ++i) t[i] = rng.bernoulli(0.5) ? 1.0 : (signed_labels ? -1.0 : 0.0);
  return t;
}

// Worst relative error of one loss over random points.
double loss_gradient_error(LossKind kind, Rng& rng, bool& identity_holds) {
  constexpr double kStep = 1e-4;
  double worst = 0;
  for (int point = 0; point < kGradientPoints; ++point) {
    ScalarFunction f;
    Shape shape{8};
    if (is_pointwise(kind)) {
      const Tensor labels = binary_labels(rng, Shape{8}, uses_signed_labels(kind));
      f = [kind, labels](Graph&, Var x) { return pointwise_loss(kind, x, labels, 1.0); };
    } else if (is_pairwise(kind)) {
      shape = {2, 4};
      f = [kind](Graph&, Var x) { return pairwise_loss(kind, slice(x, 0, 0, 1), slice(x, 0, 1, 2), 1.0); };
    } else if (kind == LossKind::kNSSAL) {
      // The adversarial weights carry no gradient, so the oracle freezes them.
      const Tensor at = random_tensor(rng, Shape{3, 4});
      auto split = [](Var x) { return std::pair{reshape(slice(x, 1, 0, 1), {3}), slice(x, 1, 1, 4)}; };
      Graph probe;
      const Tensor weights = adversarial_weights(split(constant(probe, at)).second.value(), 0.6);
      const ScalarFunction frozen = [&](Graph&, Var x) {
        auto [pos, neg] = split(x);
        return weighted_nssal(pos, neg, weights, 3.0);
      };
      const GradientCheck check = finite_difference_check(frozen, at, kStep);
      worst = std::max(worst, check.nonfinite_coordinate ? INFINITY : check.max_relative_error);

      Graph g1;
      const Var x1 = variable(g1, at);
      auto [pos, neg] = split(x1);
      const Var l1 = nssal(pos, neg, 0.6, 3.0);
      Graph g2;
      const Var x2 = variable(g2, at);
      const Var l2 = frozen(g2, x2);
      const Gradients grads1 = g1.backward(l1.id);
      const Gradients grads2 = g2.backward(l2.id);
      const Tensor* d1 = grads1.find(x1.id);
      const Tensor* d2 = grads2.find(x2.id);
      if (l1.value().item() != l2.value().item() || !d1 || !d2 || !(*d1 == *d2)) identity_holds = false;
      continue;
    } else {
      shape = {2, 4};
      Tensor labels(shape);
      labels(0, static_cast<Index>(rng.below(4))) = 1;
      labels(1, static_cast<Index>(rng.below(4))) = 1;
      labels(1, static_cast<Index>(rng.below(4))) = 1;
      f = [labels](Graph&, Var x) { return cel(x, labels, 0.1); };
    }
    const GradientCheck check = check_away_from_kinks(f, [&] { return random_tensor(rng, shape); }, kStep, 10 * kStep);
    worst = std::max(worst, check.nonfinite_coordinate ? INFINITY : check.max_relative_error);
  }
  return worst;
}

Outcome criterion4() {
  Stopwatch clock;
  Rng rng(404);
  std::set<InteractionKind> kinds;
  double worst_score = 0;
  std::string worst_name;
  for (const InteractionSpec& spec : small_specs()) {
    kinds.insert(spec.kind);
    for (int point = 0; point < kGradientPoints; ++point) {
      const GradientCheck check = kge::testing::score_gradient_check(spec, rng);
      const double err = check.nonfinite_coordinate ? INFINITY : check.max_relative_error;
      if (err > worst_score || worst_name.empty()) {
        worst_score = std::max(worst_score, err);
        worst_name = std::string(interaction_name(spec.kind));
      }
    }
  }
  double worst_loss = 0;
  bool identity = true;
  for (LossKind kind : kAllLosses) worst_loss = std::max(worst_loss, loss_gradient_error(kind, rng, identity));
  const double seconds = clock.seconds();
  const bool pass = kinds.size() == kAllInteractions.size() && worst_score <= kGradientTolerance &&
                    worst_loss <= kGradientTolerance && identity && seconds <= kGradientSeconds;
  return {pass, std::to_string(kinds.size()) + " interactions, " + std::to_string(kAllLosses.size()) +
                    " losses, " + std::to_string(kGradientPoints) + " points each; worst rel. error " +
                    fmt(worst_score) + " (" + worst_name + "), losses " + fmt(worst_loss) + " (<= " +
                    fmt(kGradientTolerance) + "), frozen-weight identity " + (identity ? "holds" : "broken") +
                    ", " + fmt(seconds, 3) + " s"};
}

// Brute force: stable sort by descending score, then locate the tie block of
// the true entry. Excluded entries are dropped first.
Rank oracle_rank(const std::vector<double>& scores, Index truth, const std::set<Index>& excluded) {
  std::vector<Index> order;
  for (Index i = 0; i < static_cast<Index>(scores.size()); ++i) {
    if (i == truth || excluded.count(i) == 0) order.push_back(i);
  }
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return scores[a] > scores[b]; });
  const double target = scores[static_cast<std::size_t>(truth)];
  std::size_t first = order.size(), last = 0;
  for (std::size_t pos = 0; pos < order.size(); ++pos) {
    if (scores[static_cast<std::size_t>(order[pos])] == target) {
      first = std::min(first, pos);
      last = std::max(last, pos);
    }
  }
  Rank r;
  r.optimistic = static_cast<double>(first + 1);
  r.pessimistic = static_cast<double>(last + 1);
  r.realistic = 0.5 * (r.optimistic + r.pessimistic);
  r.candidates = static_cast<Index>(order.size()) - 1;
  return r;
}

Outcome criterion5() {
  Stopwatch clock;
  Rng rng(505);
  int mismatches = 0, tied = 0;
  for (int instance = 0; instance < kRankInstances; ++instance) {
    const auto n = static_cast<Index>(rng.below(19)) + 2;
    const bool ties = instance % 2 == 0;
    std::vector<double> scores(static_cast<std::size_t>(n));
    for (double& v : scores) v = ties ? static_cast<double>(rng.below(3)) : rng.uniform(-1, 1);
    const auto truth = static_cast<Index>(rng.below(static_cast<std::uint64_t>(n)));
    std::set<Index> excluded;
    const auto k = rng.below(static_cast<std::uint64_t>(n));
    for (std::uint64_t i = 0; i < k; ++i) {
      const auto e = static_cast<Index>(rng.below(static_cast<std::uint64_t>(n)));
      if (e != truth) excluded.insert(e);
    }
    const std::vector<Index> sorted(excluded.begin(), excluded.end());
    const Rank raw = rank_of(scores, truth);
    const Rank filtered = rank_of(scores, truth, sorted);
    const Rank raw_oracle = oracle_rank(scores, truth, {});
    const Rank filtered_oracle = oracle_rank(scores, truth, excluded);
    if (raw.optimistic != raw.pessimistic) ++tied;
    for (RankType type : kAllRankTypes) {
      if (raw.get(type) != raw_oracle.get(type)) ++mismatches;
      if (filtered.get(type) != filtered_oracle.get(type)) ++mismatches;
    }
  }
  const double seconds = clock.seconds();
  const bool pass = mismatches == 0 && tied > 0 && seconds <= kRankSeconds;
  return {pass, std::to_string(kRankInstances) + " instances (" + std::to_string(tied) + " with tied truth), " +
                    std::to_string(mismatches) + " mismatches over 3 definitions x filtered/raw, " +
                    fmt(seconds, 3) + " s"};
}

Outcome criterion6() {
  Stopwatch clock;
  const TripleStore store = load_dataset("nations");
  InteractionSpec spec;
  spec.kind = InteractionKind::kDistMult;
  spec.embedding_dim = 32;
  double total = 0;
  for (int seed = 0; seed < kAmrSeeds; ++seed) {
    const Model model(spec, store.num_entities(), store.num_relations(), static_cast<std::uint64_t>(seed));
    total += evaluate_split(model, store, Split::kTest, nullptr).value(MetricName::kAMR);
  }
  const double mean = total / kAmrSeeds;
  const double seconds = clock.seconds();
  const bool pass = mean >= kAmrLow && mean <= kAmrHigh && seconds <= kAmrSeconds;
  return {pass, "mean unfiltered AMR " + fmt(mean) + " in [" + fmt(kAmrLow) + ", " + fmt(kAmrHigh) + "] over " +
                    std::to_string(kAmrSeeds) + " seeds, " + fmt(seconds, 3) + " s"};
}

Outcome criterion7() {
  Rng rng(707);
  std::set<InteractionKind> kinds;
  int checked = 0, mismatches = 0;
  for (const InteractionSpec& base : small_specs()) {
    kinds.insert(base.kind);
    for (int tuple = 0; tuple < kCountTuples; ++tuple) {
      InteractionSpec spec = base;
      spec.embedding_dim = 2 * static_cast<Index>(rng.below(16)) + 4;
      if (spec.relation_dim > 0) spec.relation_dim = static_cast<Index>(rng.below(12)) + 1;
      if (spec.hidden > 0) spec.hidden = static_cast<Index>(rng.below(8)) + 1;
      const auto entities = static_cast<Index>(rng.below(200)) + 1;
      const auto relations = static_cast<Index>(rng.below(40)) + 1;
      const ModelParameters params = init_parameters(spec, entities, relations, rng());
      Index enumerated = 0;
      for (const auto& slot : params) {
        for (Index i = 0; i < slot.value.size(); ++i) ++enumerated;
      }
      ++checked;
      if (parameter_count(spec, entities, relations) != enumerated) ++mismatches;
    }
  }
  const bool pass = kinds.size() == kAllInteractions.size() && mismatches == 0;
  return {pass, std::to_string(kinds.size()) + " interactions, " + std::to_string(checked) + " tuples, " +
                    std::to_string(mismatches) + " mismatches"};
}

Outcome criterion8() {
  Rng rng(808);
  double worst_pair = 0;
  for (int trial = 0; trial < kLossInputs; ++trial) {
    const double s = rng.uniform(-20, 20);
    const double l = rng.bernoulli(0.5) ? 1.0 : 0.0;
    Graph g;
    const Var x = constant(g, Tensor::vector({s}));
    const double spl = pointwise_loss(LossKind::kSPL, x, Tensor::vector({2 * l - 1})).value().item();
    const double bcel = pointwise_loss(LossKind::kBCEL, x, Tensor::vector({l})).value().item();
    worst_pair = std::max(worst_pair, std::abs(spl - bcel));
  }
  double worst_uniform = 0;
  for (Index n : {2, 3, 10, 14, 104, 1000}) {
    const double c = rng.uniform(-5, 5);
    Tensor scores({1, n});
    scores.data().setConstant(c);
    Tensor labels({1, n});
    labels(0, static_cast<Index>(rng.below(static_cast<std::uint64_t>(n)))) = 1;
    Graph g;
    const double value = cel(constant(g, scores), labels).value().item();
    worst_uniform = std::max(worst_uniform, std::abs(value - std::log(static_cast<double>(n))));
  }
  const bool pass = worst_pair <= kLossTolerance && worst_uniform <= kLossTolerance;
  return {pass, "max |SPL - BCEL| " + fmt(worst_pair) + " over " + std::to_string(kLossInputs) +
                    " inputs, max |CEL(uniform) - ln n| " + fmt(worst_uniform) + " (<= " + fmt(kLossTolerance) +
                    ")"};
}

// Three relations with known shapes: one-to-many (tph 6, hpt 1),
// many-to-one (tph 1, hpt 4) and many-to-many (tph 2, hpt 3).
Outcome criterion9() {
  std::vector<LabeledTriple> train;
  for (const std::string h : {"a", "b"}) {
    for (int t = 0; t < 6; ++t) train.push_back({h, "one_to_many", h + "_child" + std::to_string(t)});
  }
  for (const std::string t : {"x", "y", "z"}) {
    for (int h = 0; h < 4; ++h) train.push_back({t + "_member" + std::to_string(h), "many_to_one", t});
  }
  for (const std::string h : {"p", "q", "r"}) {
    for (const std::string t : {"u", "v"}) train.push_back({h, "many_to_many", t});
  }
  const TripleStore store = TripleStore::build(train, {}, {});
  const RelationStats stats = relation_stats(store);
  const std::vector<std::pair<std::string, double>> expected{
      {"one_to_many", 6.0 / 7.0}, {"many_to_one", 1.0 / 5.0}, {"many_to_many", 2.0 / 5.0}};

  double worst = 0;
  std::string detail;
  Rng rng(909);
  for (const auto& [label, rate] : expected) {
    const Index r = *store.relation_id(label);
    const auto it = std::find_if(store.split(Split::kTrain).begin(), store.split(Split::kTrain).end(),
                                 [r](const Triple& t) { return t.relation == r; });
    int heads = 0;
    for (int draw = 0; draw < kBernoulliDraws; ++draw) {
      if (bernoulli_corrupt(*it, stats, rng, store.num_entities()).head != it->head) ++heads;
    }
    const double observed = static_cast<double>(heads) / kBernoulliDraws;
    worst = std::max(worst, std::abs(observed - rate));
    detail += label + " " + fmt(observed) + " vs " + fmt(rate) + "; ";
  }
  return {worst <= kBernoulliTolerance,
          detail + "max deviation " + fmt(worst) + " (<= " + fmt(kBernoulliTolerance) + ")"};
}

// Largest absolute difference between numbers at matching positions; any
// structural difference counts as infinite.
double json_distance(const nlohmann::json& a, const nlohmann::json& b) {
  if (a.is_number() && b.is_number()) return std::abs(a.get<double>() - b.get<double>());
  if (a.type() != b.type() || a.size() != b.size()) return INFINITY;
  double worst = 0;
  if (a.is_object()) {
    for (const auto& [key, value] : a.items()) {
      if (!b.contains(key)) return INFINITY;
      worst = std::max(worst, json_distance(value, b.at(key)));
    }
  } else if (a.is_array()) {
    for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, json_distance(a[i], b[i]));
  } else if (a != b) {
    return INFINITY;
  }
  return worst;
}

Outcome criterion10() {
  const fs::path dir = fs::temp_directory_path() / ("kge_acceptance_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  const nlohmann::json config{
      {"dataset", data_dir("nations").string()},
      {"model", {{"kind", "ComplEx"}, {"embedding_dim", 32}}},
      {"training",
       {{"approach", "sLCWA"},
        {"loss", {{"kind", "NSSAL"}, {"adversarial_margin", 9.0}, {"adversarial_temperature", 0.5}}},
        {"sampler", "bernoulli"},
        {"negatives", 4},
        {"optimizer", "Adam"},
        {"learning_rate", 0.01},
        {"batch_size", 128},
        {"max_epochs", 30},
        {"eval_frequency", 10},
        {"patience", 20}}},
      {"inverse_relations", true},
      {"seed", 1234},
      {"output_dir", (dir / "unused").string()}};
  const fs::path config_path = dir / "config.json";
  std::ofstream(config_path) << config.dump(2) << "\n";
  const RunResult first = cmd_train(config_path, nullptr, dir / "first");
  const RunResult second = cmd_train(config_path, nullptr, dir / "second");
  const nlohmann::json a = first.to_json().at("metrics");
  const nlohmann::json b = second.to_json().at("metrics");
  const double distance = json_distance(a, b);
  fs::remove_all(dir);
  return {distance <= kReproTolerance,
          "max metric difference " + fmt(distance) + " (<= " + fmt(kReproTolerance) + ") between two runs"};
}

}  // namespace

int main(int argc, char** argv) {
#ifdef __GLIBC__
  mallopt(M_MMAP_THRESHOLD, 256 << 20);
  mallopt(M_TRIM_THRESHOLD, 512 << 20);
  mallopt(M_TOP_PAD, 64 << 20);
#endif
  const std::vector<std::function<Outcome()>> criteria{criterion1, criterion2, criterion3, criterion4, criterion5,
                                                       criterion6, criterion7, criterion8, criterion9, criterion10};
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) {
    const int n = std::atoi(argv[i]);
    if (n < 1 || n > static_cast<int>(criteria.size())) {
      std::cerr << "unknown criterion: " << argv[i] << "\n";
      return 2;
    }
    selected.insert(n);
  }
  if (selected.empty()) {
    for (int n = 1; n <= static_cast<int>(criteria.size()); ++n) selected.insert(n);
  }

  int failures = 0;
  for (int n : selected) {
    Outcome outcome;
    try {
      outcome = criteria[static_cast<std::size_t>(n - 1)]();
    } catch (const std::exception& e) {
      outcome = {false, std::string("error: ") + e.what()};
    }
    if (!outcome.pass) ++failures;
    std::cout << (outcome.pass ? "PASS" : "FAIL") << " criterion " << n << ": " << outcome.detail << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
