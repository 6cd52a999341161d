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
#include <random>
#include <span>
#include <vector>

#include "psyn/tensor.h"

namespace psyn {

using Rng = std::mt19937_64;

// Row-major boolean matrix; `keep[i * cols + j] != 0` marks a usable entry.
struct Mask {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint8_t> keep;

  Mask() = default;
  Mask(std::size_t r, std::size_t c, bool value = true) : rows(r), cols(c), keep(r * c, value ? 1 : 0) {}
  bool operator()(std::size_t i, std::size_t j) const { return keep[i * cols + j] != 0; }
  std::size_t count() const;
};

// Every op below is differentiable in all Tensor arguments unless noted.
// Gradients are recorded only while a Tape is active on the calling thread.

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, float factor);
// x[m x n] + bias[n] broadcast over rows.
Tensor add_bias(const Tensor& x, const Tensor& bias);
// x W (+ b); `b` may be an undefined tensor.
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);
Tensor relu(const Tensor& x);
// Inverted dropout. Identity when `train` is false or p == 0.
Tensor dropout(const Tensor& x, float p, Rng& rng, bool train);
// Rows of `table` selected by `ids`; the gradient scatters back into the table.
Tensor embedding(const Tensor& table, std::span<const int> ids);

// Same-padded 1D convolution along the sequence axis.
// x: [n x c_in], kernel: [k x c_in x c_out] with k odd.
Tensor conv1d(const Tensor& x, const Tensor& kernel);

// Per-row normalization, population variance, eps inside the square root.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, float eps = 1e-5f);

// Row softmax over entries kept by `mask`; masked entries are exactly 0.
// Throws InvariantError on a row with nothing kept.
Tensor masked_softmax(const Tensor& scores, const Mask& mask);

Tensor concat_cols(std::span<const Tensor> parts);
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
// Mean absolute / squared error against a constant target.
Tensor l1_loss(const Tensor& pred, const Tensor& target);
Tensor mse_loss(const Tensor& pred, const Tensor& target);

// Row i repeated counts[i] times. Every count must be >= 1.
Tensor repeat_rows(const Tensor& x, std::span<const int> counts);
// Rows [begin, begin + count).
Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t count);
// Mean of each consecutive segment of counts[i] rows.
Tensor segment_mean(const Tensor& x, std::span<const int> counts);

// Banded score layout: column c of row i holds the pair (i, j = i - (c - T)),
// i.e. relative offset i - j = c - T.
Mask band_mask(std::size_t n, int window);
// scores[i][c] = projected[c][i] . keys[j]; projected[c] is q W_loc[c - T].
// Out-of-range (i, j) pairs hold 0 and are expected to be masked downstream.
Tensor band_dot(std::span<const Tensor> projected, const Tensor& keys, int window);
// out[i] = sum_c weights[i][c] * values[i - (c - T)] over in-range pairs.
Tensor band_apply(const Tensor& weights, const Tensor& values, int window);
// Expands a band matrix to dense n x n (zeros outside the band). Not differentiable.
Tensor band_to_dense(const Tensor& band, int window);

}  // namespace psyn
