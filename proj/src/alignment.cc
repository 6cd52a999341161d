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

#include "psyn/alignment.h"

#include <algorithm>
#include <cfenv>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include "psyn/ops.h"

namespace psyn {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
const double kLog2Pi = std::log(2.0 * std::numbers::pi);

double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double hi = std::max(a, b);
  return hi + std::log1p(std::exp(std::min(a, b) - hi));
}

void check_inputs(const EmissionStats& stats, const Tensor& mel) {
  if (!stats.mean.defined() || stats.mean.rank() != 2 || stats.mean.shape() != stats.log_var.shape()) {
    throw DimensionError("emission stats need matching [m x F] mean and log_var");
  }
  if (mel.rank() != 2 || mel.cols() != stats.mean.cols()) {
    throw DimensionError("mel " + shape_to_string(mel.shape()) + " does not match emission width " +
                         std::to_string(stats.mean.cols()));
  }
  if (stats.mean.rows() > mel.rows()) {
    throw InvariantError("infeasible alignment: " + std::to_string(stats.mean.rows()) + " phonemes for " +
                         std::to_string(mel.rows()) + " frames");
  }
}

// alpha[t][i]: log prob of frames 0..t with frame t in phoneme i.
std::vector<double> forward_table(const std::vector<double>& e, std::size_t n, std::size_t m) {
  std::vector<double> alpha(n * m, kNegInf);
  alpha[0] = e[0];
  for (std::size_t t = 1; t < n; ++t) {
    const std::size_t hi = std::min(m - 1, t);
    const std::size_t lo = m > n - t ? m - (n - t) : 0;
    for (std::size_t i = lo; i <= hi; ++i) {
      double acc = alpha[(t - 1) * m + i];
      if (i > 0) acc = log_add(acc, alpha[(t - 1) * m + i - 1]);
      if (acc != kNegInf) alpha[t * m + i] = acc + e[t * m + i];
    }
  }
  return alpha;
}

// beta[t][i]: log prob of frames t+1..n-1 given frame t in phoneme i.
std::vector<double> backward_table(const std::vector<double>& e, std::size_t n, std::size_t m) {
  std::vector<double> beta(n * m, kNegInf);
  beta[(n - 1) * m + (m - 1)] = 0.0;
  for (std::size_t t = n - 1; t-- > 0;) {
    for (std::size_t i = 0; i < m; ++i) {
      double acc = beta[(t + 1) * m + i] == kNegInf ? kNegInf : beta[(t + 1) * m + i] + e[(t + 1) * m + i];
      if (i + 1 < m && beta[(t + 1) * m + i + 1] != kNegInf)
        acc = log_add(acc, beta[(t + 1) * m + i + 1] + e[(t + 1) * m + i + 1]);
      beta[t * m + i] = acc;
    }
  }
  return beta;
}

}  // namespace

long Alignment::frames() const { return std::accumulate(durations.begin(), durations.end(), 0L); }

void Alignment::validate(long expected_frames) const {
  if (durations.empty()) throw InvariantError("alignment has no phonemes");
  for (std::size_t i = 0; i < durations.size(); ++i) {
    if (durations[i] < 1) {
      throw InvariantError("duration " + std::to_string(durations[i]) + " of phoneme " + std::to_string(i) +
                           " must be >= 1");
    }
  }
  if (frames() != expected_frames) {
    throw InvariantError("durations sum to " + std::to_string(frames()) + " but there are " +
                         std::to_string(expected_frames) + " frames");
  }
}

std::vector<double> emission_log_densities(const EmissionStats& stats, const Tensor& mel) {
  check_inputs(stats, mel);
  const std::size_t n = mel.rows(), m = stats.phonemes(), width = mel.cols();
  std::vector<double> e(n * m);
  for (std::size_t i = 0; i < m; ++i) {
    auto mu = stats.mean.row(i);
    auto lv = stats.log_var.row(i);
    double norm = 0.0;
    std::vector<double> inv_var(width);
    for (std::size_t d = 0; d < width; ++d) {
      norm += kLog2Pi + lv[d];
      inv_var[d] = std::exp(-static_cast<double>(lv[d]));
    }
    for (std::size_t t = 0; t < n; ++t) {
      auto x = mel.row(t);
      double quad = 0.0;
      for (std::size_t d = 0; d < width; ++d) {
        const double diff = static_cast<double>(x[d]) - mu[d];
        quad += diff * diff * inv_var[d];
      }
      e[t * m + i] = -0.5 * (norm + quad);
    }
  }
  return e;
}

double forward_sum_log_likelihood(const EmissionStats& stats, const Tensor& mel) {
  const auto e = emission_log_densities(stats, mel);
  const std::size_t n = mel.rows(), m = stats.phonemes();
  return forward_table(e, n, m)[(n - 1) * m + (m - 1)];
}

Tensor forward_sum_loss(const EmissionStats& stats, const Tensor& mel) {
  const auto e = emission_log_densities(stats, mel);
  const std::size_t n = mel.rows(), m = stats.phonemes();
  auto alpha = forward_table(e, n, m);
  const double log_z = alpha[(n - 1) * m + (m - 1)];
  Tensor out = Tensor::scalar(static_cast<float>(-log_z));
  detail::check_finite(out, "forward_sum_loss");
  if (detail::should_record({&stats.mean, &stats.log_var})) {
    detail::record(out, [mean = stats.mean, log_var = stats.log_var, mel, e, alpha = std::move(alpha), log_z, n,
                         m](std::span<const float> g) mutable {
      const auto beta = backward_table(e, n, m);
      const std::size_t width = mel.cols();
      float* dmu = mean.requires_grad() ? mean.grad_buffer().data() : nullptr;
      float* dlv = log_var.requires_grad() ? log_var.grad_buffer().data() : nullptr;
      for (std::size_t i = 0; i < m; ++i) {
        auto mu = mean.row(i);
        auto lv = log_var.row(i);
        std::vector<double> acc_mu(width, 0.0), acc_lv(width, 0.0);
        for (std::size_t t = 0; t < n; ++t) {
          const double a = alpha[t * m + i], b = beta[t * m + i];
          if (a == kNegInf || b == kNegInf) continue;
          const double occupancy = std::exp(a + b - log_z);
          if (occupancy == 0.0) continue;
          auto x = mel.row(t);
          for (std::size_t d = 0; d < width; ++d) {
            const double inv_var = std::exp(-static_cast<double>(lv[d]));
            const double diff = static_cast<double>(x[d]) - mu[d];
            // loss = -log Z, d(log N)/dmu = diff / var, d(log N)/dlv = -1/2 + diff^2 / (2 var)
            acc_mu[d] -= occupancy * diff * inv_var;
            acc_lv[d] -= occupancy * (-0.5 + 0.5 * diff * diff * inv_var);
          }
        }
        for (std::size_t d = 0; d < width; ++d) {
          if (dmu) dmu[i * width + d] += static_cast<float>(g[0] * acc_mu[d]);
          if (dlv) dlv[i * width + d] += static_cast<float>(g[0] * acc_lv[d]);
        }
      }
    });
  }
  return out;
}

ViterbiResult viterbi(const EmissionStats& stats, const Tensor& mel) {
  const auto e = emission_log_densities(stats, mel);
  const std::size_t n = mel.rows(), m = stats.phonemes();
  std::vector<double> score(n * m, kNegInf);
  std::vector<std::uint8_t> advanced(n * m, 0);
  score[0] = e[0];
  for (std::size_t t = 1; t < n; ++t) {
    const std::size_t hi = std::min(m - 1, t);
    const std::size_t lo = m > n - t ? m - (n - t) : 0;
    for (std::size_t i = lo; i <= hi; ++i) {
      const double stay = score[(t - 1) * m + i];
      const double move = i > 0 ? score[(t - 1) * m + i - 1] : kNegInf;
      const bool take_move = i > 0 && move >= stay;
      const double best = take_move ? move : stay;
      if (best == kNegInf) continue;
      score[t * m + i] = best + e[t * m + i];
      advanced[t * m + i] = take_move ? 1 : 0;
    }
  }
  ViterbiResult result;
  result.log_prob = score[(n - 1) * m + (m - 1)];
  result.alignment.durations.assign(m, 0);
  std::size_t i = m - 1;
  for (std::size_t t = n; t-- > 0;) {
    ++result.alignment.durations[i];
    if (t > 0 && advanced[t * m + i]) --i;
  }
  result.alignment.validate(static_cast<long>(n));
  return result;
}

Alignment viterbi_durations(const EmissionStats& stats, const Tensor& mel) { return viterbi(stats, mel).alignment; }

Tensor length_regulator(const Tensor& seq, const Alignment& alignment) {
  if (seq.rank() != 2 || alignment.durations.size() != seq.rows()) {
    throw DimensionError("length_regulator: " + std::to_string(alignment.durations.size()) + " durations for " +
                         shape_to_string(seq.shape()));
  }
  return repeat_rows(seq, alignment.durations);
}

Alignment durations_from_predictor(std::span<const float> log_durations, float scale) {
  Alignment out;
  out.durations.reserve(log_durations.size());
  const int previous_mode = std::fegetround();
  std::fesetround(FE_TONEAREST);
  for (float ld : log_durations) {
    const double frames = std::nearbyint(std::exp(static_cast<double>(ld)) * scale);
    const double clamped = std::clamp(frames, 1.0, 1e6);
    out.durations.push_back(static_cast<int>(clamped));
  }
  std::fesetround(previous_mode);
  return out;
}

}  // namespace psyn
