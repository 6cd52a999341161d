// Copyright (c) 2026 The psyn Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "psyn/tensor.h"

namespace psyn {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

// Builds a scalar loss from the tensor under test. The tensor is perturbed in
// place, so `f` may equally ignore its argument and read a parameter that
// shares storage with it.
using ScalarFn = std::function<Tensor(const Tensor&)>;

// Compares backward() gradients against central differences
// (f(x+h) - f(x-h)) / 2h, elementwise error |a - n| / max(1e-8, |a| + |n|).
//
// `max_elements` > 0 checks a seeded random subset of coordinates.
// Throws DeterminismError if two plain evaluations of f disagree.
GradCheckResult check_gradients(const ScalarFn& f, Tensor x, float h = 1e-3f, std::size_t max_elements = 0,
                                std::uint64_t seed = 0);

// Directional variant: compares <grad, v> from backward() with
// (f(x + h v) - f(x - h v)) / 2h, same error formula, for `directions`
// seeded unit directions over all `inputs` jointly. v_i is sign(grad_i) |r_i|
// with r_i standard normal, so every coordinate adds a positive term to the
// analytic side while a wrong sign or magnitude still moves the numeric side.
using LossFn = std::function<Tensor()>;
GradCheckResult check_directional_gradients(const LossFn& f, std::vector<Tensor> inputs, std::size_t directions = 4,
                                            float h = 1e-3f, std::uint64_t seed = 0);

}  // namespace psyn
