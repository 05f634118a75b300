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

#include <cmath>
#include <cstdint>
#include <vector>

#include "cblip/numerics/parameters.hpp"

namespace cblip {

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Moment buffers for every parameter of a store, in store order.
template <typename T>
struct AdamState {
  AdamOptions options;
  std::vector<Tensor<T>> first_moment;
  std::vector<Tensor<T>> second_moment;
  std::uint64_t step = 0;

  AdamState() = default;
  AdamState(const ParameterStore<T>& params, AdamOptions opts) : options(opts) {
    for (const auto& p : params) {
      first_moment.emplace_back(p.value.shape());
      second_moment.emplace_back(p.value.shape());
    }
  }
};

/// One bias-corrected Adam update from the gradients stored in `params`.
/// Gradients are left untouched; callers zero them between steps.
template <typename T>
void adam_step(ParameterStore<T>& params, AdamState<T>& state) {
  if (state.first_moment.size() != params.size()) {
    throw ContractError("adam_step: state was built for a different store");
  }
  ++state.step;
  const auto& o = state.options;
  const double c1 = 1.0 - std::pow(o.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(o.beta2, static_cast<double>(state.step));
  std::size_t k = 0;
  for (auto& p : params) {
    auto& m = state.first_moment[k];
    auto& v = state.second_moment[k];
    if (m.shape() != p.value.shape()) {
      throw DimensionError("adam_step: moment shape mismatch for " + p.name);
    }
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad[i];
      const double mi = o.beta1 * m[i] + (1.0 - o.beta1) * g;
      const double vi = o.beta2 * v[i] + (1.0 - o.beta2) * g * g;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      const double update = o.lr * (mi / c1) / (std::sqrt(vi / c2) + o.epsilon);
      p.value[i] = static_cast<T>(p.value[i] - update);
    }
    ++k;
  }
}

}  // namespace cblip
