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
#include <cmath>
#include <functional>

#include "cblip/numerics/tensor.hpp"

namespace cblip {

/// Central-difference gradient of a scalar function, one coordinate at a
/// time. `x` is perturbed in place and restored.
template <typename T, typename F>
Tensor<T> finite_diff_grad(F&& f, Tensor<T>& x, T eps) {
  Tensor<T> g(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const T saved = x[i];
    x[i] = saved + eps;
    const T up = f(x);
    x[i] = saved - eps;
    const T down = f(x);
    x[i] = saved;
    g[i] = (up - down) / (T{2} * eps);
  }
  return g;
}

/// |a - b| / max(|a|, |b|, floor). The floor keeps near-zero gradients from
/// turning rounding noise into large ratios.
template <typename T>
T relative_error(T a, T b, T floor = T(1e-3)) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

}  // namespace cblip
