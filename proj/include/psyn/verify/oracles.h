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

#include <cstddef>
#include <vector>

#include "psyn/alignment.h"
#include "psyn/attention.h"
#include "psyn/prosody.h"

// Straightforward 64-bit reference implementations used to check the fast
// paths. None of them share code with the library routines they check.
namespace psyn::oracle {

// Row-major double matrix.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> v;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), v(r * c, 0.0) {}
  double& operator()(std::size_t i, std::size_t j) { return v[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return v[i * cols + j]; }
};

Matrix from_tensor(const Tensor& t);
Matrix multiply(const Matrix& a, const Matrix& b);

// Diagonal Gaussian log density of every (frame, phoneme) pair, [n x m].
Matrix emission_table(const EmissionStats& stats, const Tensor& mel);

// Enumerates every split of n frames into m non-empty consecutive segments.
struct Segmentations {
  double log_sum = 0.0;   // log sum of path probabilities
  double best = 0.0;      // best path log probability
  std::size_t count = 0;  // number of segmentations, C(n-1, m-1)
};
Segmentations enumerate_segmentations(const Matrix& emissions);

// Attention computed the textbook way: full n x n scores, then mask.
// Returns per-head dense weights and the final projected output.
struct AttentionReference {
  std::vector<Matrix> weights;  // per head, [n x n]
  std::vector<Matrix> head_outputs;
  Matrix output;  // [n x d_model]
};
AttentionReference local_attention(const LocalAttention& attn, const Tensor& h);

// softmax(Q K^T / sqrt(d)) V without any position term.
Matrix scaled_dot_product(const Matrix& q, const Matrix& k, const Matrix& v);

// -log sum_c pi_c N(target; mu_c, diag(max(exp(s_c), floor))) averaged over rows.
double mdn_nll(const Tensor& head, const Tensor& target, std::size_t mixtures, std::size_t dim);

// Mixture mean and per-dimension variance of one phoneme's distribution.
struct Moments {
  std::vector<double> mean;
  std::vector<double> variance;
};
Moments mixture_moments(const MdnParams& params, std::size_t phoneme);

// |DFT| of a real frame by the O(N^2) definition, bins 0..N/2.
std::vector<double> dft_magnitude(const std::vector<double>& frame);

}  // namespace psyn::oracle
