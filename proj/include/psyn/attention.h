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
#include <vector>

#include "psyn/layers.h"

namespace psyn {

// One head of local attention: the q/k/v projections plus 2T+1 relative
// position matrices, w_loc[c] holding the matrix for offset i - j = c - T.
struct LocalAttentionHead {
  Tensor w_q;  // [d_model x d_head]
  Tensor w_k;
  Tensor w_v;
  std::vector<Tensor> w_loc;  // 2T+1 of [d_head x d_head]
};

struct QKV {
  Tensor q;
  Tensor k;
  Tensor v;
};

QKV project_qkv(const Tensor& h, const LocalAttentionHead& head);

// Scores in banded layout ([n x (2T+1)], see band_dot) with their validity mask.
struct BandScores {
  Tensor scores;
  Mask mask;
  int window = 0;
};

// A[i][j] = q_i^T W_loc[i-j] k_j evaluated only on |i - j| <= T.
BandScores relative_scores_banded(const Tensor& q, const Tensor& k, std::span<const Tensor> w_loc, int window);

// Dense n x n view of the same scores; out-of-window entries are 0 in the
// tensor and false in `mask_out`.
Tensor relative_scores(const Tensor& q, const Tensor& k, std::span<const Tensor> w_loc, int window,
                       Mask* mask_out = nullptr);

class LocalAttention {
 public:
  LocalAttention() = default;
  LocalAttention(ParameterSet& params, const std::string& name, std::size_t d_model, std::size_t heads,
                 int window, Rng& rng);

  // Per head masked_softmax(A / sqrt(d_head)) v, heads concatenated and
  // projected by w_out. Output shape equals input shape.
  Tensor operator()(const Tensor& h) const;

  // Post-softmax weights per head in banded layout.
  std::vector<Tensor> attention_weights(const Tensor& h) const;

  std::vector<LocalAttentionHead> heads;
  Tensor w_out;  // [(heads * d_head) x d_model]
  int window = 0;
  std::size_t d_head = 0;

 private:
  Tensor head_weights(const Tensor& h, const LocalAttentionHead& head, QKV* qkv) const;
};

struct BlockConfig {
  std::size_t d_model = 64;
  std::size_t heads = 2;
  int window = 4;
  std::size_t kernel = 3;
  std::size_t d_ff = 64;
  float dropout = 0.0f;
};

// y1 = LN(h + drop(attn(h))); y2 = LN(y1 + drop(conv2(relu(conv1(y1))))).
// No positional encoding anywhere: position enters only through w_loc.
class LocalAttentionBlock {
 public:
  LocalAttentionBlock() = default;
  LocalAttentionBlock(ParameterSet& params, const std::string& name, const BlockConfig& config, Rng& rng);

  // Dropout is active only when `dropout_rng` is supplied.
  Tensor operator()(const Tensor& h, Rng* dropout_rng = nullptr) const;

  LocalAttention attention;
  LayerNorm norm1;
  Conv1d conv1;
  Conv1d conv2;
  LayerNorm norm2;
  float dropout = 0.0f;
};

// A stack of blocks applied in order.
class LocalAttentionStack {
 public:
  LocalAttentionStack() = default;
  LocalAttentionStack(ParameterSet& params, const std::string& name, std::size_t count, const BlockConfig& config,
                      Rng& rng);
  Tensor operator()(const Tensor& h, Rng* dropout_rng = nullptr) const;

  std::vector<LocalAttentionBlock> blocks;
};

}  // namespace psyn
