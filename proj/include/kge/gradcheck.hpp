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

#include <functional>
#include <optional>

#include "kge/graph.hpp"

namespace kge {

/// Builds a scalar from a leaf holding the evaluation point.
using ScalarFunction = std::function<Var(Graph&, Var)>;

struct GradientCheck {
  /// max_i |analytic_i - numeric_i| / max(1, |numeric_i|)
  double max_relative_error = 0.0;
  /// Set when f was non-finite at some probe; names the perturbed coordinate.
  std::optional<Index> nonfinite_coordinate;
  /// Distance to the nearest non-differentiable point seen at `point`.
  double kink_margin = 0.0;

  bool passed(double tolerance) const { return !nonfinite_coordinate && max_relative_error <= tolerance; }
};

/// Compares reverse-mode gradients against central differences with `step`.
GradientCheck finite_difference_check(const ScalarFunction& f, const Tensor& point, double step);

}  // namespace kge
