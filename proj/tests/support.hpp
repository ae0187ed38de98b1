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

#include <cmath>
#include <functional>

#include "kge/gradcheck.hpp"
#include "kge/random.hpp"
#include "kge/tensor.hpp"

namespace kge::testing {

inline Tensor random_tensor(Rng& rng, Shape shape, double lo = -2.0, double hi = 2.0) {
  Tensor t(std::move(shape));
  for (Index i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

/// Gradient check at a random point, redrawn while the point sits within
/// `margin` of a kink (relu/L1/sqrt/clamp boundaries).
inline GradientCheck check_away_from_kinks(const ScalarFunction& f, const std::function<Tensor()>& draw,
                                           double step, double margin) {
  for (int attempt = 0; attempt < 1000; ++attempt) {
    const GradientCheck result = finite_difference_check(f, draw(), step);
    if (result.kink_margin > margin) return result;
  }
  GradientCheck failed;
  failed.max_relative_error = INFINITY;
  return failed;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  return (a.data() - b.data()).cwiseAbs().maxCoeff();
}

}  // namespace kge::testing
