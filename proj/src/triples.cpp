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

#include "kge/triples.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <map>
#include <set>

#include "kge/error.hpp"

namespace kge {

std::string_view split_name(Split split) {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kValid: return "valid";
    case Split::kTest: return "test";
  }
  return "unknown";
}

Split parse_split(std::string_view name) {
  if (name == "train") return Split::kTrain;
  if (name == "valid" || name == "validation") return Split::kValid;
  if (name == "test") return Split::kTest;
  throw ConfigError("unknown split '" + std::string(name) + "'");
}

std::vector<LabeledTriple> parse_tsv(std::istream& in, char delimiter, std::string_view source) {
  std::vector<LabeledTriple> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
      const std::size_t pos = line.find(delimiter, start);
      fields.push_back(line.substr(start, pos - start));
      if (pos == std::string::npos) break;
      start = pos + 1;
    }
    if (fields.size() != 3) {
      throw DataError(std::string(source) + ": line " + std::to_string(line_no) + " has " +
                      std::to_string(fields.size()) + " fields, expected 3");
    }
    out.push_back({std::move(fields[0]), std::move(fields[1]), std::move(fields[2])});
  }
  if (out.empty()) throw DataError(std::string(source) + ": no triples");
  return out;
}

std::vector<LabeledTriple> load_tsv(const std::filesystem::path& path, char delimiter) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  return parse_tsv(in, delimiter, path.string());
}

TripleStore TripleStore::build(std::span<const LabeledTriple> train, std::span<const LabeledTriple> valid,
                               std::span<const LabeledTriple> test) {
  TripleStore store;
  auto intern = [](std::unordered_map<std::string, Index>& ids, std::vector<std::string>& labels,
                   const std::string& label) {
    auto [it, inserted] = ids.try_emplace(label, static_cast<Index>(labels.size()));
    if (inserted) labels.push_back(label);
    return it->second;
  };

  const std::array<std::span<const LabeledTriple>, 3> raw{train, valid, test};
  for (std::size_t s = 0; s < raw.size(); ++s) {
    std::set<Triple> seen;
    for (const LabeledTriple& t : raw[s]) {
      const Triple id{intern(store.entity_ids_, store.entities_, t.head),
                      intern(store.relation_ids_, store.relations_, t.relation),
                      intern(store.entity_ids_, store.entities_, t.tail)};
      if (seen.insert(id).second) {
        store.splits_[s].push_back(id);
      } else {
        ++store.report_.duplicates_removed[s];
      }
    }
  }
  std::vector<bool> in_train(store.entities_.size(), false);
  for (const Triple& t : store.splits_[0]) {
    in_train[static_cast<std::size_t>(t.head)] = true;
    in_train[static_cast<std::size_t>(t.tail)] = true;
  }
  store.report_.entities_without_training_triples =
      static_cast<std::size_t>(std::count(in_train.begin(), in_train.end(), false));
  store.base_relations_ = store.num_relations();
  return store;
}

Index TripleStore::inverse_of(Index relation) const {
  if (!inverse_augmented_) throw DataError("inverse_of: store has no inverse relations");
  if (relation < 0 || relation >= base_relations_) {
    throw DataError("inverse_of: relation " + std::to_string(relation) + " is not a base relation");
  }
  return relation + base_relations_;
}

std::optional<Index> TripleStore::entity_id(std::string_view label) const {
  const auto it = entity_ids_.find(std::string(label));
  return it == entity_ids_.end() ? std::nullopt : std::optional<Index>(it->second);
}

std::optional<Index> TripleStore::relation_id(std::string_view label) const {
  const auto it = relation_ids_.find(std::string(label));
  return it == relation_ids_.end() ? std::nullopt : std::optional<Index>(it->second);
}

Triple TripleStore::encode(const LabeledTriple& t) const {
  const auto h = entity_id(t.head);
  const auto r = relation_id(t.relation);
  const auto tl = entity_id(t.tail);
  if (!h || !r || !tl) {
    throw DataError("encode: unknown label in (" + t.head + ", " + t.relation + ", " + t.tail + ")");
  }
  return {*h, *r, *tl};
}

LabeledTriple TripleStore::decode(const Triple& t) const {
  return {entities_.at(static_cast<std::size_t>(t.head)), relations_.at(static_cast<std::size_t>(t.relation)),
          entities_.at(static_cast<std::size_t>(t.tail))};
}

nlohmann::json TripleStore::to_json() const {
  nlohmann::json j;
  j["entities"] = entities_;
  j["relations"] = relations_;
  j["num_base_relations"] = base_relations_;
  j["inverse_augmented"] = inverse_augmented_;
  nlohmann::json splits = nlohmann::json::object();
  for (Split s : kAllSplits) {
    nlohmann::json rows = nlohmann::json::array();
    for (const Triple& t : split(s)) rows.push_back({t.head, t.relation, t.tail});
    splits[std::string(split_name(s))] = std::move(rows);
  }
  j["splits"] = std::move(splits);
  return j;
}

TripleStore TripleStore::from_json(const nlohmann::json& j) {
  TripleStore store;
  store.entities_ = j.at("entities").get<std::vector<std::string>>();
  store.relations_ = j.at("relations").get<std::vector<std::string>>();
  for (std::size_t i = 0; i < store.entities_.size(); ++i) store.entity_ids_[store.entities_[i]] = static_cast<Index>(i);
  for (std::size_t i = 0; i < store.relations_.size(); ++i) {
    store.relation_ids_[store.relations_[i]] = static_cast<Index>(i);
  }
  store.base_relations_ = j.at("num_base_relations").get<Index>();
  store.inverse_augmented_ = j.at("inverse_augmented").get<bool>();
  for (Split s : kAllSplits) {
    for (const auto& row : j.at("splits").at(std::string(split_name(s)))) {
      const Triple t{row.at(0).get<Index>(), row.at(1).get<Index>(), row.at(2).get<Index>()};
      if (t.head < 0 || t.head >= store.num_entities() || t.tail < 0 || t.tail >= store.num_entities() ||
          t.relation < 0 || t.relation >= store.num_relations()) {
        throw DataError("store json: triple id out of range");
      }
      store.splits_[static_cast<std::size_t>(s)].push_back(t);
    }
  }
  return store;
}

TripleStore load_store(const std::filesystem::path& train, const std::filesystem::path& valid,
                       const std::filesystem::path& test) {
  return TripleStore::build(load_tsv(train), load_tsv(valid), load_tsv(test));
}

TripleStore add_inverse_relations(const TripleStore& store) {
  if (store.inverse_augmented_) throw DataError("add_inverse_relations: store is already inverse-augmented");
  TripleStore out = store;
  const Index base = store.num_relations();
  for (Index r = 0; r < base; ++r) {
    std::string label = store.relations_[static_cast<std::size_t>(r)] + std::string(kInverseSuffix);
    out.relation_ids_[label] = base + r;
    out.relations_.push_back(std::move(label));
  }
  auto& train = out.splits_[static_cast<std::size_t>(Split::kTrain)];
  const std::size_t n = train.size();
  train.reserve(2 * n);
  for (std::size_t i = 0; i < n; ++i) {
    const Triple t = train[i];
    train.push_back({t.tail, t.relation + base, t.head});
  }
  out.base_relations_ = base;
  out.inverse_augmented_ = true;
  return out;
}

double RelationStats::head_corruption_probability(Index relation) const {
  const auto r = static_cast<std::size_t>(relation);
  return tph.at(r) / (tph.at(r) + hpt.at(r));
}

RelationStats relation_stats(const TripleStore& store) {
  const auto n = static_cast<std::size_t>(store.num_relations());
  std::vector<std::map<Index, std::size_t>> tails_per_head(n), heads_per_tail(n);
  for (const Triple& t : store.split(Split::kTrain)) {
    ++tails_per_head[static_cast<std::size_t>(t.relation)][t.head];
    ++heads_per_tail[static_cast<std::size_t>(t.relation)][t.tail];
  }
  RelationStats stats;
  stats.tph.assign(n, 1.0);
  stats.hpt.assign(n, 1.0);
  auto average = [](const std::map<Index, std::size_t>& counts) {
    double total = 0;
    for (const auto& [_, c] : counts) total += static_cast<double>(c);
    return total / static_cast<double>(counts.size());
  };
  for (std::size_t r = 0; r < n; ++r) {
    if (tails_per_head[r].empty()) {
      stats.without_triples.push_back(static_cast<Index>(r));
      continue;
    }
    stats.tph[r] = average(tails_per_head[r]);
    stats.hpt[r] = average(heads_per_tail[r]);
  }
  return stats;
}

FilterIndex FilterIndex::build(const TripleStore& store, std::span<const Split> splits) {
  if (splits.empty()) throw ConfigError("filter index needs at least one split");
  FilterIndex index;
  for (Split s : splits) {
    for (const Triple& t : store.split(s)) {
      index.tails_[key(t.head, t.relation)].push_back(t.tail);
      index.heads_[key(t.relation, t.tail)].push_back(t.head);
    }
  }
  auto normalize = [](auto& map) {
    for (auto& [_, v] : map) {
      std::sort(v.begin(), v.end());
      v.erase(std::unique(v.begin(), v.end()), v.end());
    }
  };
  normalize(index.tails_);
  normalize(index.heads_);
  return index;
}

namespace {
const std::vector<Index>& empty_ids() {
  static const std::vector<Index> empty;
  return empty;
}
}  // namespace

const std::vector<Index>& FilterIndex::tails(Index head, Index relation) const {
  const auto it = tails_.find(key(head, relation));
  return it == tails_.end() ? empty_ids() : it->second;
}

const std::vector<Index>& FilterIndex::heads(Index relation, Index tail) const {
  const auto it = heads_.find(key(relation, tail));
  return it == heads_.end() ? empty_ids() : it->second;
}

bool FilterIndex::contains(const Triple& t) const {
  const auto& v = tails(t.head, t.relation);
  return std::binary_search(v.begin(), v.end(), t.tail);
}

std::size_t FilterIndex::tail_entries() const {
  std::size_t n = 0;
  for (const auto& [_, v] : tails_) n += v.size();
  return n;
}

std::size_t FilterIndex::head_entries() const {
  std::size_t n = 0;
  for (const auto& [_, v] : heads_) n += v.size();
  return n;
}

}  // namespace kge
