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

#include <array>
#include <compare>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "kge/tensor.hpp"

namespace kge {

enum class Split : std::uint8_t { kTrain = 0, kValid = 1, kTest = 2 };

inline constexpr std::array<Split, 3> kAllSplits{Split::kTrain, Split::kValid, Split::kTest};

std::string_view split_name(Split split);
Split parse_split(std::string_view name);

struct LabeledTriple {
  std::string head;
  std::string relation;
  std::string tail;

  friend bool operator==(const LabeledTriple&, const LabeledTriple&) = default;
};

struct Triple {
  Index head = 0;
  Index relation = 0;
  Index tail = 0;

  friend auto operator<=>(const Triple&, const Triple&) = default;
};

/// Suffix appended to a relation label to name its inverse.
inline constexpr std::string_view kInverseSuffix = "__inverse";

/// Reads UTF-8 delimited triples, one per line. Blank lines are skipped; any
/// other line must hold exactly three fields. Throws DataError naming the line.
std::vector<LabeledTriple> load_tsv(const std::filesystem::path& path, char delimiter = '\t');
std::vector<LabeledTriple> parse_tsv(std::istream& in, char delimiter, std::string_view source);

struct BuildReport {
  std::array<std::size_t, 3> duplicates_removed{};
  /// Entities that never occur in the training split.
  std::size_t entities_without_training_triples = 0;
};

/// Integer-encoded knowledge graph with train/valid/test splits.
///
/// Ids are dense and assigned by first appearance scanning train, then valid,
/// then test. Immutable once built; safe to share across threads.
class TripleStore {
 public:
  static TripleStore build(std::span<const LabeledTriple> train, std::span<const LabeledTriple> valid,
                           std::span<const LabeledTriple> test);

  Index num_entities() const { return static_cast<Index>(entities_.size()); }
  Index num_relations() const { return static_cast<Index>(relations_.size()); }
  /// Relation count before inverse augmentation.
  Index num_base_relations() const { return base_relations_; }
  bool inverse_augmented() const { return inverse_augmented_; }
  /// Inverse id of a base relation; requires an augmented store.
  Index inverse_of(Index relation) const;

  const std::vector<Triple>& split(Split s) const { return splits_[static_cast<std::size_t>(s)]; }
  const std::vector<std::string>& entity_labels() const { return entities_; }
  const std::vector<std::string>& relation_labels() const { return relations_; }
  std::optional<Index> entity_id(std::string_view label) const;
  std::optional<Index> relation_id(std::string_view label) const;

  Triple encode(const LabeledTriple& t) const;
  LabeledTriple decode(const Triple& t) const;

  const BuildReport& report() const { return report_; }

  /// Vocabularies plus id-encoded splits.
  nlohmann::json to_json() const;
  static TripleStore from_json(const nlohmann::json& j);

 private:
  friend TripleStore add_inverse_relations(const TripleStore& store);

  std::vector<std::string> entities_;
  std::vector<std::string> relations_;
  std::unordered_map<std::string, Index> entity_ids_;
  std::unordered_map<std::string, Index> relation_ids_;
  std::array<std::vector<Triple>, 3> splits_;
  Index base_relations_ = 0;
  bool inverse_augmented_ = false;
  BuildReport report_;
};

/// Loads and encodes the three TSV splits.
TripleStore load_store(const std::filesystem::path& train, const std::filesystem::path& valid,
                       const std::filesystem::path& test);

/// Doubles the relation set: relation r + |R| is the inverse of r, and every
/// training triple (h, r, t) gains (t, r + |R|, h). Validation and test splits
/// are left untouched. Throws DataError on an already augmented store.
TripleStore add_inverse_relations(const TripleStore& store);

/// Average tails per head and heads per tail for every relation (training split).
struct RelationStats {
  std::vector<double> tph;
  std::vector<double> hpt;
  /// Relations without training triples; they fall back to tph = hpt = 1.
  std::vector<Index> without_triples;

  double head_corruption_probability(Index relation) const;
};

RelationStats relation_stats(const TripleStore& store);

/// Known true triples of the covered splits, indexed in both directions.
class FilterIndex {
 public:
  static FilterIndex build(const TripleStore& store, std::span<const Split> splits);

  /// True tails of (h, r), sorted; empty for unseen pairs.
  const std::vector<Index>& tails(Index head, Index relation) const;
  /// True heads of (r, t), sorted.
  const std::vector<Index>& heads(Index relation, Index tail) const;
  bool contains(const Triple& t) const;

  std::size_t tail_entries() const;
  std::size_t head_entries() const;

 private:
  static std::uint64_t key(Index a, Index b) {
    return (static_cast<std::uint64_t>(a) << 32) | static_cast<std::uint64_t>(b);
  }

  std::unordered_map<std::uint64_t, std::vector<Index>> tails_;
  std::unordered_map<std::uint64_t, std::vector<Index>> heads_;
};

}  // namespace kge
