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

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "kge/error.hpp"
#include "kge/random.hpp"
#include "kge/triples.hpp"

using namespace kge;

namespace {

const std::filesystem::path kData = KGE_DATA_DIR;

TripleStore load_dataset(const std::string& name) {
  const auto dir = kData / name;
  const auto train = load_tsv(dir / "train.txt");
  const auto valid = load_tsv(dir / "valid.txt");
  const auto test = load_tsv(dir / "test.txt");
  return TripleStore::build(train, valid, test);
}

std::vector<LabeledTriple> parse(const std::string& text) {
  std::istringstream in(text);
  return parse_tsv(in, '\t', "inline");
}

}  // namespace

TEST_CASE("tsv parsing") {
  const auto one = parse("a\tr\tb\n");
  REQUIRE(one.size() == 1);
  CHECK(one[0] == LabeledTriple{"a", "r", "b"});

  CHECK(parse("a\tr\tb\n\n  \nc\tr\td\r\n").size() == 2);

  try {
    (void)parse("a\tr\tb\nc\tr\td\ne\tr\n");
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
  CHECK_THROWS_AS((void)parse(""), DataError);
  CHECK_THROWS_AS((void)load_tsv("/nonexistent/file.tsv"), DataError);
}

TEST_CASE("store construction") {
  const std::vector<LabeledTriple> train{{"a", "r", "b"}, {"a", "r", "b"}};
  const std::vector<LabeledTriple> test{{"b", "r", "a"}, {"c", "s", "a"}};
  const TripleStore store = TripleStore::build(train, {}, test);
  CHECK(store.num_entities() == 3);
  CHECK(store.num_relations() == 2);
  CHECK(store.split(Split::kTrain).size() == 1);
  CHECK(store.report().duplicates_removed[0] == 1);
  CHECK(store.report().entities_without_training_triples == 1);
  CHECK(*store.entity_id("a") == 0);
  CHECK(*store.entity_id("c") == 2);
  CHECK_FALSE(store.entity_id("zzz").has_value());
}

TEST_CASE("encode/decode round trip") {
  const TripleStore store = load_dataset("nations");
  const auto raw = load_tsv(kData / "nations" / "test.txt");
  for (const LabeledTriple& t : raw) CHECK(store.decode(store.encode(t)) == t);
}

TEST_CASE("shipped dataset sizes") {
  const TripleStore kinships = load_dataset("kinships");
  std::size_t total = 0;
  for (Split s : kAllSplits) total += kinships.split(s).size();
  CHECK(total == 10686);
  CHECK(kinships.num_entities() == 104);
  CHECK(kinships.num_relations() == 25);

  CHECK(load_dataset("nations").num_entities() == 14);
  CHECK(load_dataset("umls").num_entities() == 135);
}

TEST_CASE("inverse relations") {
  const std::vector<LabeledTriple> train{{"a", "r", "b"}};
  const TripleStore store = TripleStore::build(train, {}, train);
  const TripleStore aug = add_inverse_relations(store);
  CHECK(aug.num_relations() == 2);
  CHECK(aug.split(Split::kTrain).size() == 2);
  CHECK(aug.split(Split::kTest).size() == 1);
  CHECK(aug.split(Split::kTrain)[1] == Triple{1, 1, 0});
  CHECK(aug.relation_labels()[1] == "r" + std::string(kInverseSuffix));
  CHECK_THROWS_AS((void)add_inverse_relations(aug), DataError);

  const TripleStore kinships = load_dataset("kinships");
  const TripleStore kin_aug = add_inverse_relations(kinships);
  CHECK(kin_aug.num_relations() == 2 * kinships.num_relations());
  const auto& before = kinships.split(Split::kTrain);
  const auto& after = kin_aug.split(Split::kTrain);
  REQUIRE(after.size() == 2 * before.size());
  for (std::size_t i = 0; i < before.size(); ++i) {
    const Triple& inv = after[before.size() + i];
    CHECK(inv.head == before[i].tail);
    CHECK(inv.tail == before[i].head);
    CHECK(inv.relation == kin_aug.inverse_of(before[i].relation));
    CHECK(inv.relation == before[i].relation + kinships.num_relations());
  }
}

TEST_CASE("relation statistics") {
  const std::vector<LabeledTriple> train{{"a", "r", "b"}, {"a", "r", "c"}, {"x", "s", "y"},
                                         {"p", "t", "q"}, {"o", "t", "q"}};
  const std::vector<LabeledTriple> test{{"a", "u", "b"}};
  const TripleStore store = TripleStore::build(train, {}, test);
  const RelationStats stats = relation_stats(store);
  const Index r = *store.relation_id("r"), s = *store.relation_id("s"), t = *store.relation_id("t");
  const Index u = *store.relation_id("u");
  CHECK(stats.tph[static_cast<std::size_t>(r)] == 2.0);
  CHECK(stats.hpt[static_cast<std::size_t>(r)] == 1.0);
  CHECK(stats.head_corruption_probability(r) == doctest::Approx(2.0 / 3.0));
  CHECK(stats.head_corruption_probability(s) == 0.5);
  CHECK(1.0 - stats.head_corruption_probability(t) == doctest::Approx(2.0 / 3.0));
  REQUIRE(stats.without_triples.size() == 1);
  CHECK(stats.without_triples[0] == u);
  CHECK(stats.head_corruption_probability(u) == 0.5);
}

TEST_CASE("filter index") {
  const std::vector<LabeledTriple> train{{"a", "r", "b"}};
  const TripleStore store = TripleStore::build(train, {}, train);
  const std::array<Split, 1> only_train{Split::kTrain};
  const FilterIndex index = FilterIndex::build(store, only_train);
  CHECK(index.tails(0, 0) == std::vector<Index>{1});
  CHECK(index.heads(0, 1) == std::vector<Index>{0});
  CHECK(index.tails(1, 0).empty());
  CHECK_THROWS_AS((void)FilterIndex::build(store, {}), ConfigError);
}

TEST_CASE("filter index on kinships: sizes and membership agree with a linear scan") {
  const TripleStore store = load_dataset("kinships");
  const FilterIndex index = FilterIndex::build(store, kAllSplits);
  std::set<Triple> distinct;
  for (Split s : kAllSplits) distinct.insert(store.split(s).begin(), store.split(s).end());
  CHECK(index.tail_entries() == distinct.size());
  CHECK(index.head_entries() == distinct.size());

  Rng rng(5);
  for (int q = 0; q < 1000; ++q) {
    const Triple t{static_cast<Index>(rng.below(104)), static_cast<Index>(rng.below(25)),
                   static_cast<Index>(rng.below(104))};
    bool found = false;
    for (Split s : kAllSplits) {
      for (const Triple& x : store.split(s)) found = found || x == t;
    }
    CHECK(index.contains(t) == found);
    const auto& heads = index.heads(t.relation, t.tail);
    CHECK(std::binary_search(heads.begin(), heads.end(), t.head) == found);
  }
}

TEST_CASE("store json round trip") {
  const TripleStore store = add_inverse_relations(load_dataset("nations"));
  const TripleStore back = TripleStore::from_json(store.to_json());
  CHECK(back.entity_labels() == store.entity_labels());
  CHECK(back.relation_labels() == store.relation_labels());
  CHECK(back.num_base_relations() == store.num_base_relations());
  CHECK(back.inverse_augmented());
  for (Split s : kAllSplits) CHECK(back.split(s) == store.split(s));
}
