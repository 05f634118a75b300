/*
 * Copyright 2026 The CBLiP Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <algorithm>
#include <vector>

#include "cblip/numerics/finite_diff.hpp"
#include "cblip/numerics/tape.hpp"

namespace cblip::testing {

/// Largest relative error between backward() and central differences over
/// every coordinate of `params`. `build(tape)` must return a 1×1 Var and be
/// a deterministic function of the parameter values.
template <typename Build>
double max_gradient_error(const std::vector<Parameter<double>*>& params, Build&& build,
                          double eps = 1e-5) {
  for (auto* p : params) p->zero_grad();
  {
    Tape<double> tape;
    const Var<double> loss = build(tape);
    tape.backward(loss);
  }
  double worst = 0.0;
  for (auto* p : params) {
    const auto f = [&](const Tensor<double>&) {
      Tape<double> tape(/*record=*/false);
      return build(tape).value()[0];
    };
    const Tensor<double> numeric = finite_diff_grad(f, p->value, eps);
    for (std::size_t i = 0; i < numeric.size(); ++i) {
      worst = std::max(worst, relative_error(p->grad[i], numeric[i]));
    }
  }
  return worst;
}

}  // namespace cblip::testing
