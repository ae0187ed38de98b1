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

#include "kge/gradcheck.hpp"

#include <cmath>

namespace kge {

namespace {

double evaluate(const ScalarFunction& f, const Tensor& point) {
  Graph g;
  const Var x = variable(g, point);
  return f(g, x).value().item();
}

}  // namespace

GradientCheck finite_difference_check(const ScalarFunction& f, const Tensor& point, double step) {
  if (!(step > 0)) throw std::invalid_argument("finite_difference_check: step must be positive");
  GradientCheck result;

  Graph g;
  const Var x = variable(g, point);
  const Var y = f(g, x);
  if (!std::isfinite(y.value().item())) {
    result.nonfinite_coordinate = -1;
    return result;
  }
  result.kink_margin = g.kink_margin();
  const Gradients grads = g.backward(y.id);
  const Tensor* analytic = grads.find(x.id);

  Tensor probe = point;
  for (Index i = 0; i < point.size(); ++i) {
    const double original = probe[i];
    probe[i] = original + step;
    const double up = evaluate(f, probe);
    probe[i] = original - step;
    const double down = evaluate(f, probe);
    probe[i] = original;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      result.nonfinite_coordinate = i;
      return result;
    }
    const double numeric = (up - down) / (2.0 * step);
    const double exact = analytic ? (*analytic)[i] : 0.0;
    const double err = std::abs(exact - numeric) / std::max(1.0, std::abs(numeric));
    result.max_relative_error = std::max(result.max_relative_error, err);
  }
  return result;
}

}  // namespace kge
