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

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "kge/losses.hpp"
#include "kge/random.hpp"
#include "kge/tensor.hpp"
#include "kge/triples.hpp"

namespace kge {

enum class SamplerKind : std::uint8_t { kUniform, kBernoulli };

std::string_view sampler_name(SamplerKind kind);
SamplerKind parse_sampler(std::string_view name);

/// Replaces the head or the tail (½ each) by a uniformly drawn different entity.
Triple uniform_corrupt(const Triple& triple, Rng& rng, Index num_entities);

/// Replaces the head with probability tph / (tph + hpt) of the relation, else the tail.
Triple bernoulli_corrupt(const Triple& triple, const RelationStats& stats, Rng& rng, Index num_entities);

/// Shuffled partition of [0, n) into consecutive batches; the last one may be short.
std::vector<std::vector<Index>> epoch_partition(Index n, Index batch_size, Rng& rng);

struct BatchSLCWA {
  std::vector<Triple> positives;
  /// K per positive, grouped by positive.
  std::vector<Triple> negatives;
  /// Position in `positives` of each negative's source.
  std::vector<Index> pairing;
};

class NegativeSampler {
 public:
  /// `stats` is required for the Bernoulli kind. When `filter` is given,
  /// corruptions found in it are redrawn (bounded number of attempts).
  NegativeSampler(SamplerKind kind, Index num_entities, Index negatives_per_positive,
                  const RelationStats* stats = nullptr, const FilterIndex* filter = nullptr);

  SamplerKind kind() const { return kind_; }
  Index negatives_per_positive() const { return k_; }

  Triple corrupt(const Triple& triple, Rng& rng) const;
  BatchSLCWA make_batch(std::span<const Triple> positives, Rng& rng) const;

 private:
  SamplerKind kind_;
  Index num_entities_;
  Index k_;
  const RelationStats* stats_;
  const FilterIndex* filter_;
};

/// Convenience form: batch `batch` of a partition over `train`.
BatchSLCWA make_slcwa_batch(std::span<const Triple> train, std::span<const Index> batch, const NegativeSampler& sampler,
                            Rng& rng);

/// Distinct (h, r) pairs of a training split with their true tails.
struct LcwaGroups {
  std::vector<Index> heads;
  std::vector<Index> relations;
  std::vector<std::vector<Index>> tails;

  Index size() const { return static_cast<Index>(heads.size()); }
  static LcwaGroups build(std::span<const Triple> train);
};

struct BatchLCWA {
  std::vector<Index> heads;
  std::vector<Index> relations;
  /// [B, |E|]
  Tensor labels;
};

/// Label rows for the selected groups, smoothed per `convention`.
BatchLCWA make_lcwa_batch(const LcwaGroups& groups, std::span<const Index> batch, Index num_entities,
                          double label_smoothing, LabelConvention convention);

}  // namespace kge
