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

#include "kge/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "kge/error.hpp"

namespace kge {

namespace {

constexpr std::array<std::string_view, 7> kMetricNames{"mr", "amr", "mrr", "hits_at_1", "hits_at_3", "hits_at_5",
                                                       "hits_at_10"};

double metric_of(const Metrics& m, MetricName metric) {
  switch (metric) {
    case MetricName::kMR: return m.mr;
    case MetricName::kAMR: return m.amr;
    case MetricName::kMRR: return m.mrr;
    case MetricName::kHits1: return m.hits[0];
    case MetricName::kHits3: return m.hits[1];
    case MetricName::kHits5: return m.hits[2];
    case MetricName::kHits10: return m.hits[3];
  }
  return 0;
}

nlohmann::json metrics_json(const Metrics& m) {
  nlohmann::json j = nlohmann::json::object();
  for (std::size_t i = 0; i < kMetricNames.size(); ++i) {
    j[std::string(kMetricNames[i])] = metric_of(m, static_cast<MetricName>(i));
  }
  return j;
}

Metrics metrics_from_json(const nlohmann::json& j) {
  Metrics m;
  m.mr = j.at("mr").get<double>();
  m.amr = j.at("amr").get<double>();
  m.mrr = j.at("mrr").get<double>();
  for (std::size_t i = 0; i < kHitsAt.size(); ++i) {
    m.hits[i] = j.at("hits_at_" + std::to_string(kHitsAt[i])).get<double>();
  }
  return m;
}

double sanitize(double s) { return std::isnan(s) ? -INFINITY : s; }

void check_triples(const Model& model, std::span<const Triple> triples, const RankOptions& options) {
  for (const Triple& t : triples) {
    const bool ok = t.head >= 0 && t.head < model.num_entities() && t.tail >= 0 && t.tail < model.num_entities() &&
                    t.relation >= 0 && t.relation < model.num_relations() &&
                    (!options.inverse_offset || t.relation + *options.inverse_offset < model.num_relations());
    if (!ok) {
      throw DataError("evaluation triple (" + std::to_string(t.head) + ", " + std::to_string(t.relation) + ", " +
                      std::to_string(t.tail) + ") references an unknown id");
    }
  }
}

}  // namespace

std::string_view rank_type_name(RankType type) {
  switch (type) {
    case RankType::kOptimistic: return "optimistic";
    case RankType::kPessimistic: return "pessimistic";
    case RankType::kRealistic: return "realistic";
  }
  return "unknown";
}

RankType parse_rank_type(std::string_view name) {
  for (RankType t : kAllRankTypes) {
    if (rank_type_name(t) == name) return t;
  }
  throw ConfigError("unknown rank type '" + std::string(name) + "'");
}

std::string_view side_name(Side side) {
  switch (side) {
    case Side::kHead: return "head";
    case Side::kTail: return "tail";
    case Side::kBoth: return "both";
  }
  return "unknown";
}

Side parse_side(std::string_view name) {
  for (Side s : kAllSides) {
    if (side_name(s) == name) return s;
  }
  throw ConfigError("unknown side '" + std::string(name) + "'");
}

double Rank::get(RankType type) const {
  switch (type) {
    case RankType::kOptimistic: return optimistic;
    case RankType::kPessimistic: return pessimistic;
    case RankType::kRealistic: return realistic;
  }
  return realistic;
}

Rank rank_of(std::span<const double> scores, Index truth, std::span<const Index> excluded) {
  const auto n = static_cast<Index>(scores.size());
  if (truth < 0 || truth >= n) throw std::out_of_range("rank_of: true index out of range");
  const double target = sanitize(scores[static_cast<std::size_t>(truth)]);
  Index greater = 0;
  Index equal = 0;
  Index skipped = 0;
  auto next_excluded = excluded.begin();
  for (Index i = 0; i < n; ++i) {
    while (next_excluded != excluded.end() && *next_excluded < i) ++next_excluded;
    if (i == truth) continue;
    if (next_excluded != excluded.end() && *next_excluded == i) {
      ++skipped;
      continue;
    }
    const double s = sanitize(scores[static_cast<std::size_t>(i)]);
    if (s > target) {
      ++greater;
    } else if (s == target) {
      ++equal;
    }
  }
  Rank r;
  r.optimistic = 1.0 + static_cast<double>(greater);
  r.pessimistic = 1.0 + static_cast<double>(greater + equal);
  r.realistic = 0.5 * (r.optimistic + r.pessimistic);
  r.candidates = n - 1 - skipped;
  return r;
}

RankingResult compute_ranks(const Model& model, std::span<const Triple> triples, const RankOptions& options) {
  if (options.batch_size < 1) throw std::invalid_argument("evaluation batch size must be >= 1");
  check_triples(model, triples, options);
  const Interaction& interaction = model.interaction();
  const Index n = model.num_entities();
  RankingResult result;
  result.head.resize(triples.size());
  result.tail.resize(triples.size());
  static const std::vector<Index> kNone;

  for (std::size_t begin = 0; begin < triples.size(); begin += static_cast<std::size_t>(options.batch_size)) {
    const std::size_t end = std::min(triples.size(), begin + static_cast<std::size_t>(options.batch_size));
    std::vector<Index> heads, relations, tails, inverse;
    for (std::size_t i = begin; i < end; ++i) {
      heads.push_back(triples[i].head);
      relations.push_back(triples[i].relation);
      tails.push_back(triples[i].tail);
      if (options.inverse_offset) inverse.push_back(triples[i].relation + *options.inverse_offset);
    }
    Graph g;
    Binding p(g, model.parameters());
    const Tensor tail_scores = interaction.score_tails(p, heads, relations).value();
    const Tensor head_scores = options.inverse_offset ? interaction.score_tails(p, tails, inverse).value()
                                                      : interaction.score_heads(p, relations, tails).value();
    for (std::size_t i = begin; i < end; ++i) {
      const Triple& t = triples[i];
      const auto row = static_cast<Index>(i - begin);
      const std::span<const double> tail_row(tail_scores.ptr() + row * n, static_cast<std::size_t>(n));
      const std::span<const double> head_row(head_scores.ptr() + row * n, static_cast<std::size_t>(n));
      const auto& tail_filter = options.filter ? options.filter->tails(t.head, t.relation) : kNone;
      const auto& head_filter = options.filter ? options.filter->heads(t.relation, t.tail) : kNone;
      result.tail[i] = rank_of(tail_row, t.tail, tail_filter);
      result.head[i] = rank_of(head_row, t.head, head_filter);
    }
  }
  return result;
}

double Metrics::hits_at(int k) const {
  for (std::size_t i = 0; i < kHitsAt.size(); ++i) {
    if (kHitsAt[i] == k) return hits[i];
  }
  throw std::invalid_argument("hits@" + std::to_string(k) + " is not reported");
}

std::string_view metric_name(MetricName m) { return kMetricNames[static_cast<std::size_t>(m)]; }

MetricName parse_metric(std::string_view name) {
  std::string key(name);
  std::transform(key.begin(), key.end(), key.begin(), [](unsigned char c) { return std::tolower(c); });
  if (key == "hits@1") return MetricName::kHits1;
  if (key == "hits@3") return MetricName::kHits3;
  if (key == "hits@5") return MetricName::kHits5;
  if (key == "hits@10") return MetricName::kHits10;
  for (std::size_t i = 0; i < kMetricNames.size(); ++i) {
    if (kMetricNames[i] == key) return static_cast<MetricName>(i);
  }
  throw ConfigError("unknown metric '" + std::string(name) + "'");
}

bool higher_is_better(MetricName m) { return m != MetricName::kMR && m != MetricName::kAMR; }

Metrics aggregate(std::span<const Rank> ranks, RankType type) {
  if (ranks.empty()) throw std::invalid_argument("cannot aggregate an empty ranking");
  Metrics m;
  double expected = 0;
  for (const Rank& r : ranks) {
    const double v = r.get(type);
    m.mr += v;
    m.mrr += 1.0 / v;
    expected += 0.5 * (static_cast<double>(r.candidates) + 1.0);
    for (std::size_t i = 0; i < kHitsAt.size(); ++i) {
      if (v <= kHitsAt[i]) m.hits[i] += 1;
    }
  }
  const auto count = static_cast<double>(ranks.size());
  m.mr /= count;
  m.mrr /= count;
  m.amr = m.mr / (expected / count);
  for (double& h : m.hits) h /= count;
  return m;
}

MetricReport MetricReport::from(const RankingResult& result) {
  if (result.head.empty() || result.head.size() != result.tail.size()) {
    throw std::invalid_argument("cannot aggregate an empty ranking");
  }
  std::vector<Rank> both(result.head);
  both.insert(both.end(), result.tail.begin(), result.tail.end());
  MetricReport report;
  report.count_ = static_cast<Index>(result.head.size());
  for (RankType type : kAllRankTypes) {
    const auto t = static_cast<std::size_t>(type);
    report.table_[static_cast<std::size_t>(Side::kHead)][t] = aggregate(result.head, type);
    report.table_[static_cast<std::size_t>(Side::kTail)][t] = aggregate(result.tail, type);
    report.table_[static_cast<std::size_t>(Side::kBoth)][t] = aggregate(both, type);
  }
  return report;
}

MetricReport aggregate_metrics(const RankingResult& result) { return MetricReport::from(result); }

const Metrics& MetricReport::get(Side side, RankType type) const {
  return table_[static_cast<std::size_t>(side)][static_cast<std::size_t>(type)];
}

double MetricReport::value(MetricName metric, Side side, RankType type) const {
  return metric_of(get(side, type), metric);
}

nlohmann::json MetricReport::to_json() const {
  nlohmann::json j;
  j["count"] = count_;
  for (Side side : kAllSides) {
    for (RankType type : kAllRankTypes) {
      j[std::string(side_name(side))][std::string(rank_type_name(type))] = metrics_json(get(side, type));
    }
  }
  return j;
}

MetricReport MetricReport::from_json(const nlohmann::json& j) {
  MetricReport report;
  try {
    report.count_ = j.at("count").get<Index>();
    for (Side side : kAllSides) {
      for (RankType type : kAllRankTypes) {
        report.table_[static_cast<std::size_t>(side)][static_cast<std::size_t>(type)] =
            metrics_from_json(j.at(std::string(side_name(side))).at(std::string(rank_type_name(type))));
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("metric report: ") + e.what());
  }
  return report;
}

std::string MetricReport::csv_header() {
  std::string header = "side,rank_type";
  for (std::string_view name : kMetricNames) header += "," + std::string(name);
  return header;
}

std::vector<std::string> MetricReport::csv_rows() const {
  std::vector<std::string> rows;
  for (Side side : kAllSides) {
    for (RankType type : kAllRankTypes) {
      std::ostringstream row;
      row.precision(17);
      row << side_name(side) << ',' << rank_type_name(type);
      for (std::size_t i = 0; i < kMetricNames.size(); ++i) row << ',' << metric_of(get(side, type), static_cast<MetricName>(i));
      rows.push_back(row.str());
    }
  }
  return rows;
}

}  // namespace kge
