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
#include <iosfwd>

#include <json.hpp>

#include "kge/interactions.hpp"
#include "kge/training.hpp"
#include "kge/triples.hpp"

namespace kge {

/// One KGEM configuration: interaction model, training setup, and whether
/// inverse relations are modelled explicitly.
struct ExperimentConfig {
  InteractionSpec model;
  TrainingConfig training;
  bool inverse_relations = false;

  void validate() const;
  nlohmann::json to_json() const;
  static ExperimentConfig from_json(const nlohmann::json& j);

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

/// The base store, augmented when the configuration asks for inverse relations.
TripleStore prepare_store(const TripleStore& base, bool inverse_relations);

/// Initializes a model from `seed` and trains it with early stopping on `store`.
TrainingOutcome run_experiment(const ExperimentConfig& config, const TripleStore& store, std::uint64_t seed,
                               std::ostream* trace_out = nullptr);

}  // namespace kge
