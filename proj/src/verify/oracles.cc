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

#include "psyn/verify/oracles.h"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>

namespace psyn::oracle {

Matrix from_tensor(const Tensor& t) {
  Matrix m(t.rows(), t.cols());
  for (std::size_t i = 0; i < m.v.size(); ++i) m.v[i] = t.at(i);
  return m;
}

Matrix multiply(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows, b.cols);
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t j = 0; j < b.cols; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < a.cols; ++k) acc += a(i, k) * b(k, j);
      out(i, j) = acc;
    }
  return out;
}

Matrix emission_table(const EmissionStats& stats, const Tensor& mel) {
  const std::size_t n = mel.rows(), m = stats.mean.rows(), f = mel.cols();
  Matrix e(n, m);
  for (std::size_t t = 0; t < n; ++t)
    for (std::size_t i = 0; i < m; ++i) {
      double acc = 0.0;
      for (std::size_t d = 0; d < f; ++d) {
        const double lv = stats.log_var.at(i, d);
        const double diff = static_cast<double>(mel.at(t, d)) - stats.mean.at(i, d);
        acc -= 0.5 * (std::log(2.0 * std::numbers::pi) + lv + diff * diff / std::exp(lv));
      }
      e(t, i) = acc;
    }
  return e;
}

Segmentations enumerate_segmentations(const Matrix& e) {
  const std::size_t n = e.rows, m = e.cols;
  std::vector<double> paths;
  // Recursively choose the length of each segment.
  std::function<void(std::size_t, std::size_t, double)> walk = [&](std::size_t phoneme, std::size_t start,
                                                                    double acc) {
    if (phoneme == m) {
      if (start == n) paths.push_back(acc);
      return;
    }
    const std::size_t remaining = m - phoneme - 1;
    for (std::size_t end = start + 1; end + remaining <= n; ++end) {
      double seg = 0.0;
      for (std::size_t t = start; t < end; ++t) seg += e(t, phoneme);
      walk(phoneme + 1, end, acc + seg);
    }
  };
  walk(0, 0, 0.0);
  Segmentations s;
  s.count = paths.size();
  if (paths.empty()) {
    s.log_sum = s.best = -std::numeric_limits<double>::infinity();
    return s;
  }
  s.best = *std::max_element(paths.begin(), paths.end());
  double acc = 0.0;
  for (double p : paths) acc += std::exp(p - s.best);
  s.log_sum = s.best + std::log(acc);
  return s;
}

AttentionReference local_attention(const LocalAttention& attn, const Tensor& h) {
  const Matrix x = from_tensor(h);
  const std::size_t n = x.rows;
  const long window = attn.window;
  AttentionReference ref;
  Matrix joined(n, attn.heads.size() * attn.d_head);
  for (std::size_t hi = 0; hi < attn.heads.size(); ++hi) {
    const auto& head = attn.heads[hi];
    const Matrix q = multiply(x, from_tensor(head.w_q));
    const Matrix k = multiply(x, from_tensor(head.w_k));
    const Matrix v = multiply(x, from_tensor(head.w_v));
    Matrix scores(n, n);
    std::vector<bool> keep(n * n, false);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        const long offset = static_cast<long>(i) - static_cast<long>(j);
        if (std::labs(offset) > window) continue;
        const Matrix w = from_tensor(head.w_loc[static_cast<std::size_t>(offset + window)]);
        double acc = 0.0;
        for (std::size_t a = 0; a < attn.d_head; ++a)
          for (std::size_t b = 0; b < attn.d_head; ++b) acc += q(i, a) * w(a, b) * k(j, b);
        scores(i, j) = acc / std::sqrt(static_cast<double>(attn.d_head));
        keep[i * n + j] = true;
      }
    Matrix weights(n, n);
    for (std::size_t i = 0; i < n; ++i) {
      double hi_score = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < n; ++j)
        if (keep[i * n + j]) hi_score = std::max(hi_score, scores(i, j));
      double z = 0.0;
      for (std::size_t j = 0; j < n; ++j)
        if (keep[i * n + j]) z += std::exp(scores(i, j) - hi_score);
      for (std::size_t j = 0; j < n; ++j)
        weights(i, j) = keep[i * n + j] ? std::exp(scores(i, j) - hi_score) / z : 0.0;
    }
    Matrix out = multiply(weights, v);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t d = 0; d < attn.d_head; ++d) joined(i, hi * attn.d_head + d) = out(i, d);
    ref.weights.push_back(weights);
    ref.head_outputs.push_back(out);
  }
  ref.output = multiply(joined, from_tensor(attn.w_out));
  return ref;
}

Matrix scaled_dot_product(const Matrix& q, const Matrix& k, const Matrix& v) {
  const std::size_t n = q.rows;
  Matrix weights(n, k.rows);
  const double inv = 1.0 / std::sqrt(static_cast<double>(q.cols));
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> s(k.rows);
    double hi = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < k.rows; ++j) {
      double acc = 0.0;
      for (std::size_t d = 0; d < q.cols; ++d) acc += q(i, d) * k(j, d);
      s[j] = acc * inv;
      hi = std::max(hi, s[j]);
    }
    double z = 0.0;
    for (double x : s) z += std::exp(x - hi);
    for (std::size_t j = 0; j < k.rows; ++j) weights(i, j) = std::exp(s[j] - hi) / z;
  }
  return multiply(weights, v);
}

double mdn_nll(const Tensor& head, const Tensor& target, std::size_t mixtures, std::size_t dim) {
  const std::size_t m = head.rows();
  const double floor = 1e-6;
  double total = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    std::vector<double> logits(mixtures), joint(mixtures);
    for (std::size_t c = 0; c < mixtures; ++c) logits[c] = head.at(i, c * (1 + 2 * dim));
    const double hi = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    for (double l : logits) z += std::exp(l - hi);
    for (std::size_t c = 0; c < mixtures; ++c) {
      double lp = logits[c] - hi - std::log(z);
      for (std::size_t d = 0; d < dim; ++d) {
        const double mu = head.at(i, c * (1 + 2 * dim) + 1 + d);
        const double var = std::max(std::exp(static_cast<double>(head.at(i, c * (1 + 2 * dim) + 1 + dim + d))), floor);
        const double diff = static_cast<double>(target.at(i, d)) - mu;
        lp += -0.5 * std::log(2.0 * std::numbers::pi * var) - 0.5 * diff * diff / var;
      }
      joint[c] = lp;
    }
    const double best = *std::max_element(joint.begin(), joint.end());
    double acc = 0.0;
    for (double j : joint) acc += std::exp(j - best);
    total -= best + std::log(acc);
  }
  return total / static_cast<double>(m);
}

Moments mixture_moments(const MdnParams& p, std::size_t i) {
  Moments out;
  out.mean.assign(p.dim, 0.0);
  out.variance.assign(p.dim, 0.0);
  std::vector<double> w(p.mixtures);
  double hi = -std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < p.mixtures; ++c) hi = std::max(hi, static_cast<double>(p.logits[i * p.mixtures + c]));
  double z = 0.0;
  for (std::size_t c = 0; c < p.mixtures; ++c) z += w[c] = std::exp(p.logits[i * p.mixtures + c] - hi);
  for (auto& x : w) x /= z;
  for (std::size_t d = 0; d < p.dim; ++d) {
    double second = 0.0;
    for (std::size_t c = 0; c < p.mixtures; ++c) {
      const double mu = p.mean(i, c, d);
      const double var = std::max(std::exp(static_cast<double>(p.log_var(i, c, d))), 1e-6);
      out.mean[d] += w[c] * mu;
      second += w[c] * (var + mu * mu);
    }
    out.variance[d] = second - out.mean[d] * out.mean[d];
  }
  return out;
}

std::vector<double> dft_magnitude(const std::vector<double>& frame) {
  const std::size_t n = frame.size();
  std::vector<double> out(n / 2 + 1);
  for (std::size_t k = 0; k <= n / 2; ++k) {
    double re = 0.0, im = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
      const double angle = -2.0 * std::numbers::pi * static_cast<double>(k * t % n) / static_cast<double>(n);
      re += frame[t] * std::cos(angle);
      im += frame[t] * std::sin(angle);
    }
    out[k] = std::hypot(re, im);
  }
  return out;
}

}  // namespace psyn::oracle
