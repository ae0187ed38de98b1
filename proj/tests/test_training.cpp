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

#include <cmath>
#include <filesystem>
#include <sstream>

#include "kge/error.hpp"
#include "kge/training.hpp"
#include "model_support.hpp"

using namespace kge;
using kge::testing::describe;
using kge::testing::small_specs;

namespace {

const std::filesystem::path kData = KGE_DATA_DIR;

ModelParameters scalar_parameter(double value) {
  ParameterLayout layout;
  layout.name = "w";
  layout.shape = {1};
  return ModelParameters({{layout, Tensor::vector({value})}});
}

double step_once(OptimizerKind kind, double lr, double start, double grad) {
  ModelParameters params = scalar_parameter(start);
  Optimizer opt(kind, lr, params);
  const Tensor g = Tensor::vector({grad});
  const std::array<const Tensor*, 1> grads{&g};
  opt.step(params, grads);
  return params[0].value[0];
}

TripleStore toy_store() {
  std::vector<LabeledTriple> train{{"a", "r", "b"}, {"b", "r", "c"}, {"c", "s", "a"}, {"d", "s", "b"},
                                   {"a", "s", "d"}, {"e", "r", "a"}, {"e", "s", "c"}};
  std::vector<LabeledTriple> valid{{"a", "r", "c"}, {"d", "r", "e"}};
  std::vector<LabeledTriple> test{{"b", "s", "e"}};
  return TripleStore::build(train, valid, test);
}

TripleStore nations() {
  const auto dir = kData / "nations";
  return load_store(dir / "train.txt", dir / "valid.txt", dir / "test.txt");
}

bool strictly_decreasing(const std::vector<double>& values) {
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (!(values[i] < values[i - 1])) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("optimizer steps") {
  CHECK(step_once(OptimizerKind::kAdam, 0.1, 0.0, 1.0) == doctest::Approx(-0.1).epsilon(1e-6));
  CHECK(step_once(OptimizerKind::kAdam, 0.1, 0.5, 0.0) == 0.5);
  CHECK(step_once(OptimizerKind::kAdadelta, 1.0, 0.5, 0.0) == 0.5);
  // Adadelta: E[g²] = 0.05, Δ = -sqrt(eps) / sqrt(0.05 + eps).
  CHECK(step_once(OptimizerKind::kAdadelta, 1.0, 0.0, 1.0) ==
        doctest::Approx(-std::sqrt(1e-6) / std::sqrt(0.05 + 1e-6)).epsilon(1e-12));

  ModelParameters params = scalar_parameter(1.0);
  Optimizer opt(OptimizerKind::kAdam, 0.1, params);
  const Tensor bad = Tensor::vector({NAN});
  const std::array<const Tensor*, 1> grads{&bad};
  CHECK_FALSE(opt.step(params, grads));
  CHECK(params[0].value[0] == 1.0);
  CHECK(opt.skipped() == 1);
  CHECK(opt.steps() == 0);
  const std::array<const Tensor*, 1> none{nullptr};
  CHECK(opt.step(params, none));
  CHECK(params[0].value[0] == 1.0);
  CHECK(opt.steps() == 1);
  CHECK_THROWS_AS(Optimizer(OptimizerKind::kAdam, 0.0, params), ConfigError);
}

TEST_CASE("approach and loss compatibility") {
  for (LossKind loss : kAllLosses) CHECK_NOTHROW(check_compatibility(TrainingApproach::kSLCWA, loss));
  try {
    check_compatibility(TrainingApproach::kLCWA, LossKind::kMRL);
    FAIL("expected a configuration error");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("LCWA") != std::string::npos);
  }
  CHECK_THROWS_AS(check_compatibility(TrainingApproach::kLCWA, LossKind::kNSSAL), ConfigError);
  CHECK_THROWS_AS(check_compatibility(TrainingApproach::kLCWA, LossKind::kPairwiseLogistic), ConfigError);
  for (LossKind loss : {LossKind::kBCEL, LossKind::kCEL, LossKind::kSPL, LossKind::kSquareError,
                        LossKind::kPointwiseHinge}) {
    CHECK_NOTHROW(check_compatibility(TrainingApproach::kLCWA, loss));
  }
}

TEST_CASE("training config validation and json") {
  TrainingConfig c;
  c.approach = TrainingApproach::kLCWA;
  c.loss.kind = LossKind::kCEL;
  c.loss.label_smoothing = 0.05;
  c.optimizer = OptimizerKind::kAdadelta;
  c.stopping_metric = MetricName::kMRR;
  CHECK(TrainingConfig::from_json(c.to_json()) == c);

  TrainingConfig bad = c;
  bad.patience = 10;
  bad.eval_frequency = 50;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = c;
  bad.loss.kind = LossKind::kMRL;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  auto j = c.to_json();
  j["epochs"] = 3;
  CHECK_THROWS_AS(TrainingConfig::from_json(j), ConfigError);
  CHECK_THROWS_AS(EarlyStopper(50, 0, true), ConfigError);
}

TEST_CASE("early stopper contract") {
  EarlyStopper s(50, 100, true);
  CHECK(s.should_evaluate(50));
  CHECK_FALSE(s.should_evaluate(51));
  CHECK(s.report(50, 0.3));
  CHECK(s.report(100, 0.4));
  CHECK_FALSE(s.report(150, 0.4));
  CHECK_FALSE(s.should_stop(150));
  CHECK_FALSE(s.report(200, 0.1));
  CHECK(s.should_stop(200));
  CHECK(*s.best_epoch() == 100);
  CHECK(s.best_metric() == 0.4);

  // A metric that stops improving after epoch E stops within E + patience + frequency.
  for (Index last_improvement : {50, 150, 400}) {
    EarlyStopper t(50, 120, false);
    Index stop = 0;
    for (Index epoch = 50; epoch <= 2000; epoch += 50) {
      t.report(epoch, epoch <= last_improvement ? 100.0 - static_cast<double>(epoch) : 1000.0);
      if (t.should_stop(epoch)) {
        stop = epoch;
        break;
      }
    }
    CHECK(stop > 0);
    CHECK(stop <= last_improvement + 120 + 50);
    CHECK(stop - *t.best_epoch() >= 120);
  }
}

TEST_CASE("frozen batch loss decreases for every model and loss") {
  const TripleStore store = toy_store();
  const auto& train = store.split(Split::kTrain);
  const std::vector<Index> all{0, 1, 2, 3, 4, 5, 6};
  for (const InteractionSpec& spec : small_specs()) {
    for (LossKind kind : kAllLosses) {
      for (TrainingApproach approach : {TrainingApproach::kSLCWA, TrainingApproach::kLCWA}) {
        if (approach == TrainingApproach::kLCWA &&
            (kind == LossKind::kMRL || kind == LossKind::kPairwiseLogistic || kind == LossKind::kNSSAL)) {
          continue;
        }
        for (std::uint64_t seed : {1, 2, 3}) {
          CAPTURE(describe(spec));
          CAPTURE(loss_name(kind));
          CAPTURE(approach_name(approach));
          CAPTURE(seed);
          Model model(spec, store.num_entities(), store.num_relations(), seed);
          LossSpec loss;
          loss.kind = kind;
          loss.adversarial_margin = 3.0;
          loss.label_smoothing = 0.1;
          Rng rng(seed);
          Batch batch;
          if (approach == TrainingApproach::kSLCWA) {
            const NegativeSampler sampler(SamplerKind::kUniform, store.num_entities(), 2);
            batch = make_slcwa_batch(train, all, sampler, rng);
          } else {
            const LcwaGroups groups = LcwaGroups::build(train);
            std::vector<Index> ids(static_cast<std::size_t>(groups.size()));
            std::iota(ids.begin(), ids.end(), Index{0});
            batch = make_lcwa_batch(groups, ids, store.num_entities(), loss.label_smoothing,
                                    kind == LossKind::kCEL ? LabelConvention::kDistribution : LabelConvention::kBinary);
          }
          Optimizer opt(OptimizerKind::kAdam, 1e-3, model.parameters());
          std::vector<double> losses;
          for (int step = 0; step < 6; ++step) losses.push_back(train_step(model, opt, batch, loss).loss);
          CHECK(strictly_decreasing(losses));
        }
      }
    }
  }
}

TEST_CASE("training a single fact drives its loss down") {
  std::vector<LabeledTriple> train{{"h", "r", "t"}};
  const TripleStore store = TripleStore::build(train, {}, {});
  InteractionSpec spec;
  spec.kind = InteractionKind::kUM;
  spec.embedding_dim = 8;
  for (LossKind kind : kAllLosses) {
    CAPTURE(loss_name(kind));
    Model model(spec, store.num_entities(), store.num_relations(), 4);
    TrainingConfig config;
    config.loss.kind = kind;
    config.learning_rate = 0.01;
    config.batch_size = 1;
    Trainer trainer(model, store, config, 4);
    std::vector<double> losses;
    for (int epoch = 0; epoch < 10; ++epoch) losses.push_back(trainer.train_epoch());
    // Negatives are resampled each epoch; the trend over the window must still go down.
    CHECK(losses.back() < losses.front());
  }
}

TEST_CASE("a trained toy model ranks its only fact first") {
  std::vector<LabeledTriple> train{{"a", "r", "b"}, {"c", "r", "d"}, {"e", "s", "a"}};
  const TripleStore store = TripleStore::build(train, {}, {});
  InteractionSpec spec;
  spec.kind = InteractionKind::kDistMult;
  spec.embedding_dim = 8;
  Model model(spec, store.num_entities(), store.num_relations(), 9);
  TrainingConfig config;
  config.approach = TrainingApproach::kLCWA;
  config.loss.kind = LossKind::kBCEL;
  config.learning_rate = 0.05;
  Trainer trainer(model, store, config, 9);
  for (int epoch = 0; epoch < 300; ++epoch) trainer.train_epoch();
  Graph g;
  Binding p(g, model.parameters());
  const Tensor scores = model.interaction().score_tails(p, {*store.entity_id("a")}, {*store.relation_id("r")}).value();
  Index best = 0;
  for (Index e = 1; e < scores.size(); ++e) {
    if (scores[e] > scores[best]) best = e;
  }
  CHECK(best == *store.entity_id("b"));
}

TEST_CASE("translational fit pulls two tails of one head and relation together") {
  InteractionSpec spec;
  spec.kind = InteractionKind::kTransE;
  spec.embedding_dim = 6;
  spec.p = 2;
  Model model(spec, 3, 1, 21);
  auto gap = [&] {
    const Tensor& e = model.parameters().at("entity");
    return (e.matrix().row(1) - e.matrix().row(2)).norm();
  };
  const double initial_gap = gap();
  Optimizer opt(OptimizerKind::kAdam, 1e-3, model.parameters());
  double distance = 0;
  for (int step = 0; step < 4000; ++step) {
    Graph g;
    Binding p(g, model.parameters());
    const Var scores = model.interaction().score_triples(p, {0, 0}, {0, 0}, {1, 2});
    const Var loss = -mean(scores);
    distance = loss.value().item();
    const Gradients grads = g.backward(loss.id);
    std::vector<const Tensor*> per_slot(model.parameters().size(), nullptr);
    for (std::size_t i = 0; i < per_slot.size(); ++i) {
      if (const auto id = p.node(i)) per_slot[i] = grads.find(*id);
    }
    opt.step(model.parameters(), per_slot);
  }
  CHECK(initial_gap > 0.5);
  CHECK(distance < 0.02);
  CHECK(gap() < 0.05);
}

TEST_CASE("identical seeds give identical trajectories") {
  const TripleStore store = toy_store();
  InteractionSpec spec;
  spec.kind = InteractionKind::kComplEx;
  spec.embedding_dim = 4;
  TrainingConfig config;
  config.loss.kind = LossKind::kNSSAL;
  config.sampler = SamplerKind::kBernoulli;
  config.negatives = 3;
  config.batch_size = 3;
  auto run = [&](std::uint64_t seed) {
    Model model(spec, store.num_entities(), store.num_relations(), seed);
    Trainer trainer(model, store, config, seed);
    for (int epoch = 0; epoch < 5; ++epoch) trainer.train_epoch();
    return model.parameters();
  };
  CHECK(run(3) == run(3));
  CHECK_FALSE(run(3) == run(4));
}

TEST_CASE("trainer rejects unusable inputs") {
  InteractionSpec spec;
  spec.kind = InteractionKind::kDistMult;
  spec.embedding_dim = 4;
  const std::vector<LabeledTriple> none;
  const std::vector<LabeledTriple> valid{{"a", "r", "b"}};
  const TripleStore empty = TripleStore::build(none, valid, {});
  Model model(spec, empty.num_entities(), empty.num_relations(), 1);
  CHECK_THROWS_AS(Trainer(model, empty, TrainingConfig{}, 1), DataError);

  const TripleStore store = toy_store();
  Model wrong(spec, store.num_entities() + 1, store.num_relations(), 1);
  CHECK_THROWS_AS(Trainer(wrong, store, TrainingConfig{}, 1), DataError);
  Model ok(spec, store.num_entities(), store.num_relations(), 1);
  TrainingConfig lcwa_mrl;
  lcwa_mrl.approach = TrainingApproach::kLCWA;
  lcwa_mrl.loss.kind = LossKind::kMRL;
  CHECK_THROWS_AS(Trainer(ok, store, lcwa_mrl, 1), ConfigError);
}

TEST_CASE("early stopping returns the best validation checkpoint") {
  const TripleStore store = add_inverse_relations(nations());
  InteractionSpec spec;
  spec.kind = InteractionKind::kDistMult;
  spec.embedding_dim = 32;
  TrainingConfig config;
  config.approach = TrainingApproach::kLCWA;
  config.loss.kind = LossKind::kCEL;
  config.learning_rate = 0.02;
  config.batch_size = 128;
  config.max_epochs = 400;
  config.eval_frequency = 10;
  config.patience = 30;
  std::ostringstream trace;
  const Model initial(spec, store.num_entities(), store.num_relations(), 5);
  const TrainingOutcome out = train_with_early_stopping(initial, store, config, 5, &trace);

  CHECK(out.stopped_early);
  CHECK(out.epochs_run < config.max_epochs);
  CHECK(out.epochs_run - out.best_epoch >= config.patience);
  CHECK(out.trace.size() == static_cast<std::size_t>(out.epochs_run));

  double last_metric = -1;
  for (const TraceEntry& e : out.trace) {
    if (e.metric) {
      CHECK(*e.metric <= out.best_metric);
      last_metric = *e.metric;
    }
  }
  CHECK(out.best_metric >= last_metric);
  const FilterIndex filter = evaluation_filter(store, Split::kValid);
  const MetricReport again = evaluate_split(out.model, store, Split::kValid, &filter);
  CHECK(again.value(MetricName::kHits10) == out.best_metric);

  std::istringstream lines(trace.str());
  std::string line;
  Index count = 0;
  while (std::getline(lines, line)) {
    const auto j = nlohmann::json::parse(line);
    CHECK(j.contains("epoch"));
    CHECK(j.contains("loss"));
    CHECK(j.contains("metric"));
    CHECK(j.contains("timestamp"));
    ++count;
  }
  CHECK(count == out.epochs_run);
}
