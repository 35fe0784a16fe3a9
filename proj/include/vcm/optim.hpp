// Copyright 2026 The vcm-postproc Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "vcm/error.hpp"

namespace vcm {

/// Adam optimizer state over a flat parameter vector.
template <typename T>
struct OptimizerState {
  std::int64_t step = 0;
  std::vector<T> first_moments;
  std::vector<T> second_moments;
  double lr = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  OptimizerState() = default;
  explicit OptimizerState(std::size_t parameter_count, double learning_rate = 1e-5)
      : first_moments(parameter_count, T(0)),
        second_moments(parameter_count, T(0)),
        lr(learning_rate) {}
};

/// One bias-corrected Adam step. Elementwise, so updating a flat vector equals
/// updating any partition of it with matching state slices.
template <typename T>
void adam_update(std::span<T> params, std::span<const T> grads,
                 OptimizerState<T>& state) {
  if (grads.size() != params.size() ||
      state.first_moments.size() != params.size() ||
      state.second_moments.size() != params.size()) {
    fail(ErrorKind::kShape, "adam_update: parameter, gradient and moment "
                            "sizes differ");
  }
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(state.beta1, t);
  const double correction2 = 1.0 - std::pow(state.beta2, t);
  const T b1 = static_cast<T>(state.beta1);
  const T b2 = static_cast<T>(state.beta2);
  const T step_size = static_cast<T>(state.lr / correction1);
  const T inv_sqrt_c2 = static_cast<T>(1.0 / std::sqrt(correction2));
  const T eps = static_cast<T>(state.epsilon);
  auto& m = state.first_moments;
  auto& v = state.second_moments;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const T g = grads[i];
    m[i] = b1 * m[i] + (T(1) - b1) * g;
    v[i] = b2 * v[i] + (T(1) - b2) * g * g;
    params[i] -= step_size * m[i] / (std::sqrt(v[i]) * inv_sqrt_c2 + eps);
  }
}

}  // namespace vcm
