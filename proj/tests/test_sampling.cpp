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

#include <algorithm>
#include <cmath>
#include <set>

#include "kge/error.hpp"
#include "kge/sampling.hpp"

using namespace kge;

namespace {

// Three-sigma band of a binomial proportion over n draws.
double three_sigma(double p, int n) { return 3.0 * std::sqrt(p * (1 - p) / n); }

RelationStats stats_with(double tph, double hpt) {
  RelationStats s;
  s.tph = {tph};
  s.hpt = {hpt};
  return s;
}

double head_rate(const std::function<Triple(Rng&)>& corrupt, const Triple& original, int n) {
  Rng rng(2024);
  int heads = 0;
  for (int i = 0; i < n; ++i) {
    const Triple neg = corrupt(rng);
    if (neg.head != original.head) ++heads;
  }
  return static_cast<double>(heads) / n;
}

TripleStore tiny_store() {
  std::vector<LabeledTriple> train{{"a", "r", "b"}, {"a", "r", "c"}, {"b", "s", "c"}, {"c", "r", "a"}, {"d", "s", "a"}};
  return TripleStore::build(train, {}, {});
}

}  // namespace

TEST_CASE("uniform corruption with two entities is forced") {
  Rng rng(1);
  const Triple t{0, 0, 1};
  for (int i = 0; i < 200; ++i) {
    const Triple neg = uniform_corrupt(t, rng, 2);
    if (neg.head != t.head) {
      CHECK(neg == Triple{1, 0, 1});
    } else {
      CHECK(neg == Triple{0, 0, 0});
    }
  }
  CHECK_THROWS_AS(uniform_corrupt(t, rng, 1), std::invalid_argument);
  CHECK_THROWS_AS(bernoulli_corrupt(t, stats_with(1, 1), rng, 1), std::invalid_argument);
}

TEST_CASE("uniform corruption picks sides evenly and never returns the original") {
  const Triple t{3, 0, 7};
  const int n = 100000;
  const double rate = head_rate([&](Rng& rng) { return uniform_corrupt(t, rng, 20); }, t, n);
  CHECK(std::abs(rate - 0.5) <= 0.01);

  Rng rng(9);
  std::vector<int> counts(20);
  for (int i = 0; i < 10000; ++i) {
    const Triple neg = uniform_corrupt(t, rng, 20);
    const bool head_changed = neg.head != t.head;
    const bool tail_changed = neg.tail != t.tail;
    CHECK(head_changed != tail_changed);
    CHECK(neg.relation == t.relation);
    if (head_changed) ++counts[static_cast<std::size_t>(neg.head)];
  }
  CHECK(counts[3] == 0);
  // Every other entity is reachable.
  CHECK(std::count(counts.begin(), counts.end(), 0) == 1);
}

TEST_CASE("bernoulli corruption follows the relation statistics") {
  const Triple t{0, 0, 1};
  const int n = 100000;
  {
    const RelationStats s = stats_with(2, 1);
    const double rate = head_rate([&](Rng& rng) { return bernoulli_corrupt(t, s, rng, 10); }, t, n);
    CHECK(std::abs(rate - 2.0 / 3.0) <= 0.01);
  }
  {
    const RelationStats s = stats_with(4, 4);
    const double rate = head_rate([&](Rng& rng) { return bernoulli_corrupt(t, s, rng, 10); }, t, n);
    CHECK(std::abs(rate - 0.5) <= three_sigma(0.5, n));
  }
  {
    const RelationStats s = stats_with(500, 1);
    const double rate = head_rate([&](Rng& rng) { return bernoulli_corrupt(t, s, rng, 10); }, t, n);
    CHECK(rate > 0.99);
  }
}

TEST_CASE("slcwa batches pair K negatives with each positive") {
  const std::vector<Triple> train{{0, 0, 1}, {1, 0, 2}, {2, 1, 3}, {3, 1, 0}, {4, 0, 1}};
  const NegativeSampler sampler(SamplerKind::kUniform, 5, 3);
  Rng rng(4);
  const std::vector<Index> batch{1, 3};
  const BatchSLCWA b = make_slcwa_batch(train, batch, sampler, rng);
  CHECK(b.positives == std::vector<Triple>{train[1], train[3]});
  CHECK(b.negatives.size() == 6);
  CHECK(b.pairing == std::vector<Index>{0, 0, 0, 1, 1, 1});
  for (std::size_t i = 0; i < b.negatives.size(); ++i) {
    const Triple& pos = b.positives[static_cast<std::size_t>(b.pairing[i])];
    const Triple& neg = b.negatives[i];
    CHECK(((neg.head != pos.head) != (neg.tail != pos.tail)));
    CHECK(std::find(b.positives.begin(), b.positives.end(), neg) == b.positives.end());
  }
  CHECK_THROWS_AS(NegativeSampler(SamplerKind::kUniform, 5, 0), std::invalid_argument);
  CHECK_THROWS_AS(NegativeSampler(SamplerKind::kBernoulli, 5, 1), std::invalid_argument);
}

TEST_CASE("epoch partition covers every triple exactly once") {
  Rng rng(8);
  const auto batches = epoch_partition(103, 10, rng);
  CHECK(batches.size() == 11);
  CHECK(batches.back().size() == 3);
  std::vector<Index> all;
  for (const auto& b : batches) all.insert(all.end(), b.begin(), b.end());
  std::sort(all.begin(), all.end());
  for (Index i = 0; i < 103; ++i) CHECK(all[static_cast<std::size_t>(i)] == i);
  CHECK_THROWS_AS(epoch_partition(5, 0, rng), std::invalid_argument);
}

TEST_CASE("fixed seeds reproduce the batch sequence") {
  const TripleStore store = tiny_store();
  const RelationStats stats = relation_stats(store);
  const auto& train = store.split(Split::kTrain);
  const NegativeSampler sampler(SamplerKind::kBernoulli, store.num_entities(), 4, &stats);
  auto run = [&](std::uint64_t seed) {
    Rng rng(seed);
    std::vector<Triple> out;
    for (int epoch = 0; epoch < 3; ++epoch) {
      for (const auto& batch : epoch_partition(static_cast<Index>(train.size()), 2, rng)) {
        const BatchSLCWA b = make_slcwa_batch(train, batch, sampler, rng);
        out.insert(out.end(), b.positives.begin(), b.positives.end());
        out.insert(out.end(), b.negatives.begin(), b.negatives.end());
      }
    }
    return out;
  };
  CHECK(run(77) == run(77));
  CHECK(run(77) != run(78));
}

TEST_CASE("filtered sampling avoids known triples") {
  const TripleStore store = tiny_store();
  const std::array<Split, 1> splits{Split::kTrain};
  const FilterIndex filter = FilterIndex::build(store, splits);
  const NegativeSampler sampler(SamplerKind::kUniform, store.num_entities(), 1, nullptr, &filter);
  Rng rng(3);
  for (int i = 0; i < 2000; ++i) {
    for (const Triple& t : store.split(Split::kTrain)) CHECK_FALSE(filter.contains(sampler.corrupt(t, rng)));
  }
}

TEST_CASE("lcwa labels") {
  const std::vector<Triple> train{{0, 0, 2}, {0, 0, 5}, {1, 0, 3}, {0, 1, 4}, {0, 0, 2}};
  const LcwaGroups groups = LcwaGroups::build(train);
  CHECK(groups.size() == 3);
  CHECK(groups.heads[0] == 0);
  CHECK(groups.relations[0] == 0);
  CHECK(groups.tails[0] == std::vector<Index>{2, 5});

  const std::vector<Index> first{0};
  SUBCASE("hard labels") {
    const BatchLCWA b = make_lcwa_batch(groups, first, 6, 0.0, LabelConvention::kBinary);
    CHECK(b.labels == Tensor(Shape{1, 6}, {0, 0, 1, 0, 0, 1}));
    CHECK(b.heads == std::vector<Index>{0});
    CHECK(b.relations == std::vector<Index>{0});
  }
  SUBCASE("binary smoothing") {
    const BatchLCWA b = make_lcwa_batch(groups, first, 6, 0.1, LabelConvention::kBinary);
    CHECK(b.labels(0, 2) == doctest::Approx(0.9).epsilon(1e-15));
    CHECK(b.labels(0, 0) == doctest::Approx(0.02).epsilon(1e-15));
  }
  SUBCASE("distribution convention") {
    const std::vector<Index> second{2};
    const BatchLCWA b = make_lcwa_batch(groups, second, 6, 0.0, LabelConvention::kDistribution);
    CHECK(b.labels == Tensor(Shape{1, 6}, {0, 0, 0, 1, 0, 0}));
  }
  SUBCASE("row sums count true tails before smoothing") {
    const std::vector<Index> all{0, 1, 2};
    const BatchLCWA b = make_lcwa_batch(groups, all, 6, 0.0, LabelConvention::kBinary);
    for (Index r = 0; r < 3; ++r) {
      CHECK(b.labels.matrix().row(r).sum() ==
            static_cast<double>(groups.tails[static_cast<std::size_t>(r)].size()));
    }
  }
}
