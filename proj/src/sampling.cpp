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

#include "kge/sampling.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <string>

#include "kge/error.hpp"
#include "kge/losses.hpp"

namespace kge {

namespace {

constexpr int kFilterAttempts = 1000;

void require_entities(Index num_entities) {
  if (num_entities < 2) {
    throw std::invalid_argument("corruption needs at least 2 entities, got " + std::to_string(num_entities));
  }
}

Index other_entity(Index original, Index num_entities, Rng& rng) {
  auto e = static_cast<Index>(rng.below(static_cast<std::uint64_t>(num_entities - 1)));
  return e >= original ? e + 1 : e;
}

Triple corrupt_side(const Triple& triple, bool head, Index num_entities, Rng& rng) {
  Triple out = triple;
  if (head) {
    out.head = other_entity(triple.head, num_entities, rng);
  } else {
    out.tail = other_entity(triple.tail, num_entities, rng);
  }
  return out;
}

}  // namespace

std::string_view sampler_name(SamplerKind kind) { return kind == SamplerKind::kUniform ? "uniform" : "bernoulli"; }

SamplerKind parse_sampler(std::string_view name) {
  if (name == "uniform" || name == "UNS") return SamplerKind::kUniform;
  if (name == "bernoulli" || name == "BNS") return SamplerKind::kBernoulli;
  throw ConfigError("unknown negative sampler '" + std::string(name) + "'");
}

Triple uniform_corrupt(const Triple& triple, Rng& rng, Index num_entities) {
  require_entities(num_entities);
  return corrupt_side(triple, rng.bernoulli(0.5), num_entities, rng);
}

Triple bernoulli_corrupt(const Triple& triple, const RelationStats& stats, Rng& rng, Index num_entities) {
  require_entities(num_entities);
  const double p = stats.head_corruption_probability(triple.relation);
  return corrupt_side(triple, rng.bernoulli(p), num_entities, rng);
}

std::vector<std::vector<Index>> epoch_partition(Index n, Index batch_size, Rng& rng) {
  if (batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  rng.shuffle(std::span<Index>(order));
  std::vector<std::vector<Index>> batches;
  for (Index begin = 0; begin < n; begin += batch_size) {
    const Index end = std::min(n, begin + batch_size);
    batches.emplace_back(order.begin() + begin, order.begin() + end);
  }
  return batches;
}

NegativeSampler::NegativeSampler(SamplerKind kind, Index num_entities, Index negatives_per_positive,
                                 const RelationStats* stats, const FilterIndex* filter)
    : kind_(kind), num_entities_(num_entities), k_(negatives_per_positive), stats_(stats), filter_(filter) {
  require_entities(num_entities);
  if (k_ < 1) throw std::invalid_argument("negatives per positive must be >= 1");
  if (kind_ == SamplerKind::kBernoulli && stats_ == nullptr) {
    throw std::invalid_argument("Bernoulli sampling needs relation statistics");
  }
}

Triple NegativeSampler::corrupt(const Triple& triple, Rng& rng) const {
  auto draw = [&] {
    return kind_ == SamplerKind::kUniform ? uniform_corrupt(triple, rng, num_entities_)
                                          : bernoulli_corrupt(triple, *stats_, rng, num_entities_);
  };
  Triple negative = draw();
  if (filter_ != nullptr) {
    for (int attempt = 1; attempt < kFilterAttempts && filter_->contains(negative); ++attempt) negative = draw();
  }
  return negative;
}

BatchSLCWA NegativeSampler::make_batch(std::span<const Triple> positives, Rng& rng) const {
  BatchSLCWA batch;
  batch.positives.assign(positives.begin(), positives.end());
  const std::size_t total = positives.size() * static_cast<std::size_t>(k_);
  batch.negatives.reserve(total);
  batch.pairing.reserve(total);
  for (std::size_t i = 0; i < positives.size(); ++i) {
    for (Index j = 0; j < k_; ++j) {
      batch.negatives.push_back(corrupt(positives[i], rng));
      batch.pairing.push_back(static_cast<Index>(i));
    }
  }
  return batch;
}

BatchSLCWA make_slcwa_batch(std::span<const Triple> train, std::span<const Index> batch, const NegativeSampler& sampler,
                            Rng& rng) {
  std::vector<Triple> positives;
  positives.reserve(batch.size());
  for (Index i : batch) positives.push_back(train[static_cast<std::size_t>(i)]);
  return sampler.make_batch(positives, rng);
}

LcwaGroups LcwaGroups::build(std::span<const Triple> train) {
  std::map<std::pair<Index, Index>, std::vector<Index>> grouped;
  for (const Triple& t : train) grouped[{t.head, t.relation}].push_back(t.tail);
  LcwaGroups groups;
  for (auto& [key, tails] : grouped) {
    std::sort(tails.begin(), tails.end());
    tails.erase(std::unique(tails.begin(), tails.end()), tails.end());
    groups.heads.push_back(key.first);
    groups.relations.push_back(key.second);
    groups.tails.push_back(std::move(tails));
  }
  return groups;
}

BatchLCWA make_lcwa_batch(const LcwaGroups& groups, std::span<const Index> batch, Index num_entities,
                          double label_smoothing, LabelConvention convention) {
  if (batch.empty()) throw std::invalid_argument("LCWA batch is empty");
  BatchLCWA out;
  Tensor labels(Shape{static_cast<Index>(batch.size()), num_entities});
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const auto g = static_cast<std::size_t>(batch[b]);
    out.heads.push_back(groups.heads.at(g));
    out.relations.push_back(groups.relations.at(g));
    for (Index tail : groups.tails.at(g)) {
      if (tail < 0 || tail >= num_entities) throw DataError("LCWA group references unknown entity");
      labels(static_cast<Index>(b), tail) = 1.0;
    }
  }
  out.labels = smooth_labels(labels, label_smoothing, convention);
  return out;
}

}  // namespace kge
