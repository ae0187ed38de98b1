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
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "kge/interactions.hpp"
#include "kge/triples.hpp"

namespace kge {

enum class RankType : std::uint8_t { kOptimistic, kPessimistic, kRealistic };
enum class Side : std::uint8_t { kHead, kTail, kBoth };

inline constexpr std::array<RankType, 3> kAllRankTypes{RankType::kOptimistic, RankType::kPessimistic,
                                                       RankType::kRealistic};
inline constexpr std::array<Side, 3> kAllSides{Side::kHead, Side::kTail, Side::kBoth};
inline constexpr std::array<int, 4> kHitsAt{1, 3, 5, 10};

std::string_view rank_type_name(RankType type);
RankType parse_rank_type(std::string_view name);
std::string_view side_name(Side side);
Side parse_side(std::string_view name);

struct Rank {
  double optimistic = 1;
  double pessimistic = 1;
  double realistic = 1;
  /// ξ: competing candidates, excluding the evaluated triple itself.
  Index candidates = 0;

  double get(RankType type) const;
};

/// Ranks the entry at `truth` among `scores`, skipping `excluded` positions
/// (sorted, may contain `truth`, which is never excluded). NaN scores rank last.
Rank rank_of(std::span<const double> scores, Index truth, std::span<const Index> excluded = {});

struct RankingResult {
  /// One entry per evaluated triple, in input order.
  std::vector<Rank> head;
  std::vector<Rank> tail;
};

struct RankOptions {
  /// Known true triples removed from candidate sets (filtered setting).
  const FilterIndex* filter = nullptr;
  /// Head queries (?, r, t) answered as tail queries (t, r + offset, ?).
  std::optional<Index> inverse_offset;
  Index batch_size = 256;
};

RankingResult compute_ranks(const Model& model, std::span<const Triple> triples, const RankOptions& options = {});

struct Metrics {
  double mr = 0;
  double amr = 0;
  double mrr = 0;
  /// Hits@1, @3, @5, @10.
  std::array<double, 4> hits{};

  double hits_at(int k) const;
};

enum class MetricName : std::uint8_t { kMR, kAMR, kMRR, kHits1, kHits3, kHits5, kHits10 };
std::string_view metric_name(MetricName m);
MetricName parse_metric(std::string_view name);
bool higher_is_better(MetricName m);

Metrics aggregate(std::span<const Rank> ranks, RankType type);

class MetricReport {
 public:
  static MetricReport from(const RankingResult& result);

  const Metrics& get(Side side, RankType type) const;
  double value(MetricName metric, Side side = Side::kBoth, RankType type = RankType::kRealistic) const;
  Index size() const { return count_; }

  nlohmann::json to_json() const;
  static MetricReport from_json(const nlohmann::json& j);
  static std::string csv_header();
  /// One row per side × rank type.
  std::vector<std::string> csv_rows() const;

 private:
  std::array<std::array<Metrics, 3>, 3> table_{};
  Index count_ = 0;
};

MetricReport aggregate_metrics(const RankingResult& result);

}  // namespace kge
