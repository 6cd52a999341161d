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

#include <span>
#include <vector>

#include "psyn/tensor.h"

namespace psyn {

// Monotonic phoneme -> frame segmentation: one positive frame count per
// phoneme, in phoneme order.
struct Alignment {
  std::vector<int> durations;

  std::size_t phonemes() const { return durations.size(); }
  long frames() const;
  // Throws InvariantError unless every duration >= 1 and they sum to `frames`.
  void validate(long frames) const;
};

// Per-phoneme diagonal Gaussians over mel space; variance = exp(log_var).
struct EmissionStats {
  Tensor mean;     // [m x F]
  Tensor log_var;  // [m x F]

  std::size_t phonemes() const { return mean.rows(); }
};

// e[t][i] = log N(mel_t; mean_i, exp(log_var_i)), row-major [n x m], double.
std::vector<double> emission_log_densities(const EmissionStats& stats, const Tensor& mel);

// log sum over all monotonic segmentations of prod_t N(mel_t | phoneme a(t)),
// in 64-bit. Throws InvariantError (infeasible alignment) when m > n.
double forward_sum_log_likelihood(const EmissionStats& stats, const Tensor& mel);

// -forward_sum_log_likelihood as a differentiable scalar (gradients flow into
// mean and log_var through the state posteriors). Not normalized by n.
Tensor forward_sum_loss(const EmissionStats& stats, const Tensor& mel);

struct ViterbiResult {
  Alignment alignment;
  double log_prob = 0.0;
};

// Max-product segmentation. On a tie between staying in phoneme i and
// advancing from i - 1, advancing wins, so earlier phonemes come out longer.
ViterbiResult viterbi(const EmissionStats& stats, const Tensor& mel);
Alignment viterbi_durations(const EmissionStats& stats, const Tensor& mel);

// Row i repeated durations[i] times.
Tensor length_regulator(const Tensor& seq, const Alignment& alignment);

// round_half_even(exp(log_d) * scale), clamped below at 1.
Alignment durations_from_predictor(std::span<const float> log_durations, float scale = 1.0f);

}  // namespace psyn
