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

#include <vector>

#include "kge/interactions.hpp"
#include "support.hpp"

namespace kge::testing {

/// Small configurations covering every kind plus the variant switches.
inline std::vector<InteractionSpec> small_specs() {
  std::vector<InteractionSpec> specs;
  for (InteractionKind kind : kAllInteractions) {
    InteractionSpec s;
    s.kind = kind;
    s.embedding_dim = 4;
    switch (kind) {
      case InteractionKind::kTransR:
      case InteractionKind::kTuckER: s.relation_dim = 3; break;
      case InteractionKind::kTransD: s.relation_dim = 3; break;
      case InteractionKind::kERMLP: s.hidden = 5; break;
      case InteractionKind::kNTN: s.hidden = 2; break;
      case InteractionKind::kConvKB: s.filters = 3; break;
      case InteractionKind::kConvE:
        s.filters = 2;
        s.kernel_height = 2;
        s.kernel_width = 2;
        break;
      default: break;
    }
    specs.push_back(s);
  }
  InteractionSpec transe2;
  transe2.kind = InteractionKind::kTransE;
  transe2.embedding_dim = 4;
  transe2.p = 2;
  specs.push_back(transe2);
  InteractionSpec transd_pad;
  transd_pad.kind = InteractionKind::kTransD;
  transd_pad.embedding_dim = 4;
  transd_pad.relation_dim = 6;
  specs.push_back(transd_pad);
  InteractionSpec kg2e_el;
  kg2e_el.kind = InteractionKind::kKG2E;
  kg2e_el.embedding_dim = 4;
  kg2e_el.similarity = GaussianSimilarity::kExpectedLikelihood;
  specs.push_back(kg2e_el);
  return specs;
}

inline std::string describe(const InteractionSpec& s) { return s.to_json().dump(); }

/// Parameters drawn uniformly in [-1, 1] (covariances in [0.5, 2]) so that
/// affine layers and biases are exercised away from their initial values.
inline ModelParameters random_parameters(const InteractionSpec& spec, Index entities, Index relations, Rng& rng) {
  ModelParameters params = init_parameters(spec, entities, relations, rng());
  for (auto& slot : params) {
    for (Index i = 0; i < slot.value.size(); ++i) {
      slot.value[i] = slot.layout.covariance ? rng.uniform(0.5, 2.0) : rng.uniform(-1.0, 1.0);
    }
  }
  return params;
}

/// All parameters flattened into one vector, layout order.
inline Tensor flatten(const ModelParameters& params) {
  Tensor flat({params.scalar_count()});
  Index offset = 0;
  for (const auto& slot : params) {
    std::copy_n(slot.value.ptr(), slot.value.size(), flat.ptr() + offset);
    offset += slot.value.size();
  }
  return flat;
}

/// Binds every parameter of `binding` to the matching segment of `flat`.
inline void bind_flat(Binding& binding, const ModelParameters& params, Var flat) {
  Index offset = 0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Index n = params[i].value.size();
    binding.bind(i, reshape(slice(flat, 0, offset, offset + n), params[i].value.shape()));
    offset += n;
  }
}

/// Gradient check of sum_i w_i f(h_i, r_i, t_i) with respect to every
/// parameter, at one random parameter point away from kinks.
inline GradientCheck score_gradient_check(const InteractionSpec& spec, Rng& rng, double step = 1e-4) {
  constexpr Index kEntities = 4, kRelations = 2;
  const Model model(spec, kEntities, kRelations, rng());
  const std::vector<Index> h{0, 1, 3}, r{0, 1, 1}, t{2, 1, 0};
  const Tensor weights({3}, {0.7, -1.3, 0.4});
  const ModelParameters shape_source = model.parameters();
  const ScalarFunction f = [&](Graph& g, Var flat) {
    Binding binding(g, shape_source);
    bind_flat(binding, shape_source, flat);
    return sum(model.interaction().score_triples(binding, h, r, t) * constant(g, weights));
  };
  const auto draw = [&] { return flatten(random_parameters(spec, kEntities, kRelations, rng)); };
  return check_away_from_kinks(f, draw, step, 10 * step);
}

}  // namespace kge::testing
