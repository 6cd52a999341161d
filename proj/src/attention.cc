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

#include "psyn/attention.h"

#include <cmath>

namespace psyn {

QKV project_qkv(const Tensor& h, const LocalAttentionHead& head) {
  if (h.rank() != 2 || h.rows() == 0) throw DimensionError("project_qkv expects a non-empty [n x d_model] input");
  return {matmul(h, head.w_q), matmul(h, head.w_k), matmul(h, head.w_v)};
}

BandScores relative_scores_banded(const Tensor& q, const Tensor& k, std::span<const Tensor> w_loc, int window) {
  if (window < 0) throw ConfigError("maximum relative distance must be >= 0");
  if (w_loc.size() != 2 * static_cast<std::size_t>(window) + 1) {
    throw DimensionError("expected " + std::to_string(2 * window + 1) + " relative position matrices, got " +
                         std::to_string(w_loc.size()));
  }
  if (q.shape() != k.shape()) {
    throw DimensionError("queries " + shape_to_string(q.shape()) + " and keys " + shape_to_string(k.shape()) +
                         " differ in shape");
  }
  std::vector<Tensor> projected;
  projected.reserve(w_loc.size());
  for (const auto& w : w_loc) projected.push_back(matmul(q, w));
  return {band_dot(projected, k, window), band_mask(q.rows(), window), window};
}

Tensor relative_scores(const Tensor& q, const Tensor& k, std::span<const Tensor> w_loc, int window,
                       Mask* mask_out) {
  BandScores band = relative_scores_banded(q, k, w_loc, window);
  const std::size_t n = q.rows();
  if (mask_out) {
    *mask_out = Mask(n, n, false);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        const long offset = static_cast<long>(i) - static_cast<long>(j);
        if (std::labs(offset) <= window) mask_out->keep[i * n + j] = 1;
      }
  }
  return band_to_dense(band.scores, window);
}

LocalAttention::LocalAttention(ParameterSet& params, const std::string& name, std::size_t d_model,
                               std::size_t head_count, int max_distance, Rng& rng)
    : window(max_distance) {
  if (head_count == 0 || d_model % head_count != 0) {
    throw ConfigError("d_model " + std::to_string(d_model) + " is not divisible by " + std::to_string(head_count) +
                      " heads");
  }
  if (max_distance < 0) throw ConfigError("maximum relative distance must be >= 0");
  d_head = d_model / head_count;
  for (std::size_t h = 0; h < head_count; ++h) {
    const std::string prefix = name + ".head" + std::to_string(h);
    LocalAttentionHead head;
    head.w_q = params.add(prefix + ".w_q", {d_model, d_head});
    head.w_k = params.add(prefix + ".w_k", {d_model, d_head});
    head.w_v = params.add(prefix + ".w_v", {d_model, d_head});
    init_uniform(head.w_q, d_model, d_head, rng);
    init_uniform(head.w_k, d_model, d_head, rng);
    init_uniform(head.w_v, d_model, d_head, rng);
    for (int offset = -max_distance; offset <= max_distance; ++offset) {
      Tensor w = params.add(prefix + ".w_loc" + std::to_string(offset), {d_head, d_head});
      init_identity(w, offset == 0 ? 1.0f : 0.1f);
      head.w_loc.push_back(w);
    }
    heads.push_back(std::move(head));
  }
  w_out = params.add(name + ".w_out", {head_count * d_head, d_model});
  init_uniform(w_out, head_count * d_head, d_model, rng);
}

Tensor LocalAttention::head_weights(const Tensor& h, const LocalAttentionHead& head, QKV* qkv) const {
  QKV p = project_qkv(h, head);
  BandScores band = relative_scores_banded(p.q, p.k, head.w_loc, window);
  Tensor scaled = scale(band.scores, 1.0f / std::sqrt(static_cast<float>(d_head)));
  Tensor weights = masked_softmax(scaled, band.mask);
  if (qkv) *qkv = std::move(p);
  return weights;
}

Tensor LocalAttention::operator()(const Tensor& h) const {
  std::vector<Tensor> outputs;
  outputs.reserve(heads.size());
  for (const auto& head : heads) {
    QKV p;
    Tensor weights = head_weights(h, head, &p);
    outputs.push_back(band_apply(weights, p.v, window));
  }
  Tensor joined = outputs.size() == 1 ? outputs.front() : concat_cols(outputs);
  return matmul(joined, w_out);
}

std::vector<Tensor> LocalAttention::attention_weights(const Tensor& h) const {
  std::vector<Tensor> result;
  for (const auto& head : heads) result.push_back(head_weights(h, head, nullptr));
  return result;
}

LocalAttentionBlock::LocalAttentionBlock(ParameterSet& params, const std::string& name, const BlockConfig& config,
                                         Rng& rng)
    : attention(params, name + ".attn", config.d_model, config.heads, config.window, rng),
      norm1(params, name + ".norm1", config.d_model),
      conv1(params, name + ".conv1", config.kernel, config.d_model, config.d_ff, rng),
      conv2(params, name + ".conv2", config.kernel, config.d_ff, config.d_model, rng),
      norm2(params, name + ".norm2", config.d_model),
      dropout(config.dropout) {}

Tensor LocalAttentionBlock::operator()(const Tensor& h, Rng* dropout_rng) const {
  const bool train = dropout_rng != nullptr;
  static thread_local Rng unused;
  Rng& rng = train ? *dropout_rng : unused;
  Tensor y1 = norm1(add(h, psyn::dropout(attention(h), dropout, rng, train)));
  Tensor ff = conv2(relu(conv1(y1)));
  return norm2(add(y1, psyn::dropout(ff, dropout, rng, train)));
}

LocalAttentionStack::LocalAttentionStack(ParameterSet& params, const std::string& name, std::size_t count,
                                         const BlockConfig& config, Rng& rng) {
  for (std::size_t i = 0; i < count; ++i)
    blocks.emplace_back(params, name + ".block" + std::to_string(i), config, rng);
}

Tensor LocalAttentionStack::operator()(const Tensor& h, Rng* dropout_rng) const {
  Tensor x = h;
  for (const auto& block : blocks) x = block(x, dropout_rng);
  return x;
}

}  // namespace psyn
