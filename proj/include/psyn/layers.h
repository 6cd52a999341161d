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

#include <string>
#include <utility>
#include <vector>

#include "psyn/ops.h"
#include "psyn/tensor.h"

namespace psyn {

// Named, ordered parameter home. Construction order fixes the serialization
// order, so two sets built from the same configuration line up by index.
class ParameterSet {
 public:
  Tensor add(const std::string& name, Shape shape);
  Tensor get(const std::string& name) const;
  bool contains(const std::string& name) const;

  const std::vector<std::pair<std::string, Tensor>>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  std::size_t element_count() const;

  void zero_grad();
  // Copies values by name; both sets must hold identical names and shapes.
  void copy_values_from(const ParameterSet& other);

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
};

// Glorot-style uniform bound sqrt(6 / (fan_in + fan_out)).
void init_uniform(Tensor& t, std::size_t fan_in, std::size_t fan_out, Rng& rng);
void init_identity(Tensor& t, float diagonal);

struct Linear {
  Tensor weight;  // [in x out]
  Tensor bias;    // [out], undefined when built without bias

  Linear() = default;
  Linear(ParameterSet& params, const std::string& name, std::size_t in, std::size_t out, Rng& rng,
         bool with_bias = true);
  Tensor operator()(const Tensor& x) const { return linear(x, weight, bias); }
};

struct Conv1d {
  Tensor kernel;  // [k x c_in x c_out]
  Tensor bias;    // [c_out]

  Conv1d() = default;
  Conv1d(ParameterSet& params, const std::string& name, std::size_t kernel_size, std::size_t in, std::size_t out,
         Rng& rng);
  Tensor operator()(const Tensor& x) const { return add_bias(conv1d(x, kernel), bias); }
};

struct LayerNorm {
  Tensor gain;
  Tensor bias;

  LayerNorm() = default;
  LayerNorm(ParameterSet& params, const std::string& name, std::size_t width);
  Tensor operator()(const Tensor& x) const { return layer_norm(x, gain, bias); }
};

struct Embedding {
  Tensor table;  // [vocab x width]

  Embedding() = default;
  Embedding(ParameterSet& params, const std::string& name, std::size_t vocab, std::size_t width, Rng& rng);
  Tensor operator()(std::span<const int> ids) const { return embedding(table, ids); }
};

}  // namespace psyn
