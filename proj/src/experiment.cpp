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

#include "kge/experiment.hpp"

#include "kge/error.hpp"

namespace kge {

void ExperimentConfig::validate() const {
  model.validate();
  training.validate();
}

nlohmann::json ExperimentConfig::to_json() const {
  return {{"model", model.to_json()}, {"training", training.to_json()}, {"inverse_relations", inverse_relations}};
}

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("experiment: expected an object");
  for (const auto& [key, _] : j.items()) {
    if (key != "model" && key != "training" && key != "inverse_relations") {
      throw ConfigError("experiment: unknown field '" + key + "'");
    }
  }
  ExperimentConfig c;
  if (!j.contains("model")) throw ConfigError("experiment: missing field 'model'");
  c.model = InteractionSpec::from_json(j.at("model"));
  if (j.contains("training")) c.training = TrainingConfig::from_json(j.at("training"));
  if (j.contains("inverse_relations")) {
    if (!j.at("inverse_relations").is_boolean()) throw ConfigError("experiment: inverse_relations must be a boolean");
    c.inverse_relations = j.at("inverse_relations").get<bool>();
  }
  c.validate();
  return c;
}

TripleStore prepare_store(const TripleStore& base, bool inverse_relations) {
  if (!inverse_relations || base.inverse_augmented()) return base;
  return add_inverse_relations(base);
}

TrainingOutcome run_experiment(const ExperimentConfig& config, const TripleStore& store, std::uint64_t seed,
                               std::ostream* trace_out) {
  config.validate();
  if (config.inverse_relations != store.inverse_augmented()) {
    throw std::invalid_argument("run_experiment: store augmentation does not match the configuration");
  }
  Model model(config.model, store.num_entities(), store.num_relations(), seed);
  return train_with_early_stopping(std::move(model), store, config.training, seed, trace_out);
}

}  // namespace kge
