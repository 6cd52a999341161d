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

#include "psyn/layers.h"

#include <cmath>

namespace psyn {

Tensor ParameterSet::add(const std::string& name, Shape shape) {
  if (contains(name)) throw InvariantError("duplicate parameter name " + name);
  Tensor t(std::move(shape));
  t.set_requires_grad(true);
  entries_.emplace_back(name, t);
  return t;
}

Tensor ParameterSet::get(const std::string& name) const {
  for (const auto& [n, t] : entries_)
    if (n == name) return t;
  throw IndexError("unknown parameter " + name);
}

bool ParameterSet::contains(const std::string& name) const {
  for (const auto& entry : entries_)
    if (entry.first == name) return true;
  return false;
}

std::size_t ParameterSet::element_count() const {
  std::size_t n = 0;
  for (const auto& entry : entries_) n += entry.second.size();
  return n;
}

void ParameterSet::zero_grad() {
  for (auto& entry : entries_) entry.second.zero_grad();
}

void ParameterSet::copy_values_from(const ParameterSet& other) {
  if (other.entries_.size() != entries_.size()) throw InvariantError("parameter sets differ in size");
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    auto& [name, dst] = entries_[i];
    const auto& [other_name, src] = other.entries_[i];
    if (name != other_name || dst.shape() != src.shape()) {
      throw InvariantError("parameter mismatch at " + name + " vs " + other_name);
    }
    std::copy(src.data().begin(), src.data().end(), dst.data().begin());
  }
}

void init_uniform(Tensor& t, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const float bound = std::sqrt(6.0f / static_cast<float>(fan_in + fan_out));
  std::uniform_real_distribution<float> dist(-bound, bound);
  for (auto& v : t.data()) v = dist(rng);
}

void init_identity(Tensor& t, float diagonal) {
  if (t.rank() != 2 || t.rows() != t.cols()) throw DimensionError("init_identity needs a square matrix");
  std::fill(t.data().begin(), t.data().end(), 0.0f);
  for (std::size_t i = 0; i < t.rows(); ++i) t.at(i, i) = diagonal;
}

Linear::Linear(ParameterSet& params, const std::string& name, std::size_t in, std::size_t out, Rng& rng,
               bool with_bias) {
  weight = params.add(name + ".weight", {in, out});
  init_uniform(weight, in, out, rng);
  if (with_bias) bias = params.add(name + ".bias", {out});
}

Conv1d::Conv1d(ParameterSet& params, const std::string& name, std::size_t kernel_size, std::size_t in,
               std::size_t out, Rng& rng) {
  if (kernel_size % 2 == 0) throw ConfigError("conv kernel size must be odd, got " + std::to_string(kernel_size));
  kernel = params.add(name + ".kernel", {kernel_size, in, out});
  init_uniform(kernel, kernel_size * in, kernel_size * out, rng);
  bias = params.add(name + ".bias", {out});
}

LayerNorm::LayerNorm(ParameterSet& params, const std::string& name, std::size_t width) {
  gain = params.add(name + ".gain", {width});
  std::fill(gain.data().begin(), gain.data().end(), 1.0f);
  bias = params.add(name + ".bias", {width});
}

Embedding::Embedding(ParameterSet& params, const std::string& name, std::size_t vocab, std::size_t width,
                     Rng& rng) {
  table = params.add(name + ".table", {vocab, width});
  std::normal_distribution<float> dist(0.0f, 1.0f / std::sqrt(static_cast<float>(width)));
  for (auto& v : table.data()) v = dist(rng);
}

}  // namespace psyn
