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

#include "psyn/gradcheck.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace psyn {

GradCheckResult check_gradients(const ScalarFn& f, Tensor x, float h, std::size_t max_elements,
                                std::uint64_t seed) {
  if (!(h > 0.0f)) throw ConfigError("gradient check step must be positive");
  const bool had_grad_flag = x.requires_grad();
  x.set_requires_grad(true);
  x.zero_grad();

  std::vector<float> analytic;
  float taped_value = 0.0f;
  {
    Tape tape;
    Tensor loss;
    {
      Tape::Scope scope(tape);
      loss = f(x);
    }
    taped_value = loss.item();
    tape.backward(loss);
    analytic = x.grad();
  }

  const float first = f(x).item();
  const float second = f(x).item();
  if (first != second || first != taped_value) {
    throw DeterminismError("gradient check: function is not deterministic (" + std::to_string(first) + " vs " +
                           std::to_string(second) + ")");
  }

  std::vector<std::size_t> indices(x.size());
  std::iota(indices.begin(), indices.end(), 0);
  if (max_elements > 0 && max_elements < indices.size()) {
    std::mt19937_64 rng(seed);
    std::shuffle(indices.begin(), indices.end(), rng);
    indices.resize(max_elements);
    std::sort(indices.begin(), indices.end());
  }

  GradCheckResult result;
  auto values = x.data();
  for (std::size_t idx : indices) {
    const float original = values[idx];
    const float up = original + h;
    const float down = original - h;
    values[idx] = up;
    const double f_up = f(x).item();
    values[idx] = down;
    const double f_down = f(x).item();
    values[idx] = original;

    const double numeric = (f_up - f_down) / (static_cast<double>(up) - static_cast<double>(down));
    const double a = analytic[idx];
    const double err = std::fabs(a - numeric) / std::max(1e-8, std::fabs(a) + std::fabs(numeric));
    ++result.checked;
    if (result.checked == 1 || err > result.max_rel_error) {
      result.max_rel_error = err;
      result.worst_index = idx;
      result.worst_analytic = a;
      result.worst_numeric = numeric;
    }
  }
  x.zero_grad();
  x.set_requires_grad(had_grad_flag);
  return result;
}

GradCheckResult check_directional_gradients(const LossFn& f, std::vector<Tensor> inputs, std::size_t directions,
                                            float h, std::uint64_t seed) {
  if (!(h > 0.0f)) throw ConfigError("gradient check step must be positive");
  if (inputs.empty()) throw ConfigError("gradient check needs at least one input");
  std::vector<bool> flags;
  for (auto& x : inputs) {
    flags.push_back(x.requires_grad());
    x.set_requires_grad(true);
    x.zero_grad();
  }

  float taped_value = 0.0f;
  {
    Tape tape;
    Tensor loss;
    {
      Tape::Scope scope(tape);
      loss = f();
    }
    taped_value = loss.item();
    tape.backward(loss);
  }
  std::vector<std::vector<float>> grads;
  for (auto& x : inputs) grads.push_back(x.grad());

  const float first = f().item();
  const float second = f().item();
  if (first != second || first != taped_value) {
    throw DeterminismError("gradient check: function is not deterministic (" + std::to_string(first) + " vs " +
                           std::to_string(second) + ")");
  }

  std::vector<std::vector<float>> originals;
  for (auto& x : inputs) originals.push_back(x.values());

  std::mt19937_64 rng(seed);
  std::normal_distribution<float> normal(0.0f, 1.0f);
  GradCheckResult result;
  for (std::size_t d = 0; d < directions; ++d) {
    std::vector<std::vector<float>> dir(inputs.size());
    double norm = 0.0;
    for (std::size_t k = 0; k < inputs.size(); ++k) {
      dir[k].resize(originals[k].size());
      for (std::size_t i = 0; i < dir[k].size(); ++i) {
        const float r = std::fabs(normal(rng));
        dir[k][i] = grads[k][i] < 0.0f ? -r : r;
        norm += static_cast<double>(r) * r;
      }
    }
    norm = std::sqrt(norm);
    for (auto& v : dir)
      for (auto& x : v) x = static_cast<float>(x / norm);
    // The analytic side uses the perturbation actually stored in float32.
    double analytic = 0.0;
    auto evaluate = [&](float t, double sign) {
      for (std::size_t k = 0; k < inputs.size(); ++k) {
        auto values = inputs[k].data();
        for (std::size_t i = 0; i < values.size(); ++i) {
          values[i] = originals[k][i] + t * dir[k][i];
          analytic += sign * static_cast<double>(grads[k][i]) *
                      (static_cast<double>(values[i]) - static_cast<double>(originals[k][i]));
        }
      }
      return static_cast<double>(f().item());
    };
    const double f_up = evaluate(h, 1.0);
    const double f_down = evaluate(-h, -1.0);
    analytic /= 2.0 * static_cast<double>(h);
    for (std::size_t k = 0; k < inputs.size(); ++k)
      std::copy(originals[k].begin(), originals[k].end(), inputs[k].data().begin());

    const double numeric = (f_up - f_down) / (2.0 * static_cast<double>(h));
    const double err = std::fabs(analytic - numeric) / std::max(1e-8, std::fabs(analytic) + std::fabs(numeric));
    ++result.checked;
    if (result.checked == 1 || err > result.max_rel_error) {
      result.max_rel_error = err;
      result.worst_index = d;
      result.worst_analytic = analytic;
      result.worst_numeric = numeric;
    }
  }
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    inputs[k].zero_grad();
    inputs[k].set_requires_grad(flags[k]);
  }
  return result;
}

}  // namespace psyn
