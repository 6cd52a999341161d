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

#include "psyn/ops.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace psyn {

std::size_t Mask::count() const {
  return static_cast<std::size_t>(std::count_if(keep.begin(), keep.end(), [](auto k) { return k != 0; }));
}

namespace {

void require_matrix(const Tensor& t, const char* op) {
  if (!t.defined() || t.rank() != 2) {
    throw DimensionError(std::string(op) + " expects a matrix, got " +
                         (t.defined() ? shape_to_string(t.shape()) : std::string("undefined")));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_to_string(a.shape()) + " vs " +
                         shape_to_string(b.shape()));
  }
}

void require_counts(std::span<const int> counts, std::size_t rows, const char* op) {
  if (counts.size() != rows) {
    throw DimensionError(std::string(op) + ": " + std::to_string(counts.size()) + " counts for " +
                         std::to_string(rows) + " rows");
  }
  for (std::size_t i = 0; i < counts.size(); ++i) {
    if (counts[i] < 1) {
      throw InvariantError(std::string(op) + ": count " + std::to_string(counts[i]) + " at position " +
                           std::to_string(i) + " must be >= 1");
    }
  }
}

// c[m x n] += a[m x k] * b[k x n]
void gemm_nn(const float* a, const float* b, float* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    float* crow = c + i * n;
    const float* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const float av = arow[p];
      if (av == 0.0f) continue;
      const float* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// c[m x k] += g[m x n] * b[k x n]^T
void gemm_nt(const float* g, const float* b, float* c, std::size_t m, std::size_t n, std::size_t k) {
  for (std::size_t i = 0; i < m; ++i) {
    const float* grow = g + i * n;
    float* crow = c + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const float* brow = b + p * n;
      float acc = 0.0f;
      for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
      crow[p] += acc;
    }
  }
}

// c[k x n] += a[m x k]^T * g[m x n]
void gemm_tn(const float* a, const float* g, float* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const float* arow = a + i * k;
    const float* grow = g + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const float av = arow[p];
      if (av == 0.0f) continue;
      float* crow = c + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * grow[j];
    }
  }
}

Tensor finish(Tensor out, const char* op) {
  detail::check_finite(out, op);
  return out;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw DimensionError("matmul: inner extents disagree, " + shape_to_string(a.shape()) + " x " +
                         shape_to_string(b.shape()));
  }
  Tensor out({m, n});
  gemm_nn(a.data().data(), b.data().data(), out.data().data(), m, k, n);
  if (detail::should_record({&a, &b})) {
    detail::record(out, [a, b, m, k, n](std::span<const float> g) mutable {
      if (a.requires_grad()) gemm_nt(g.data(), b.data().data(), a.grad_buffer().data(), m, n, k);
      if (b.requires_grad()) gemm_tn(a.data().data(), g.data(), b.grad_buffer().data(), m, k, n);
    });
  }
  return finish(out, "matmul");
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out(a.shape());
  auto o = out.data();
  auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] + y[i];
  if (detail::should_record({&a, &b})) {
    detail::record(out, [a, b](std::span<const float> g) mutable {
      for (const Tensor* t : {&a, &b}) {
        if (!t->requires_grad()) continue;
        auto d = t->grad_buffer();
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i];
      }
    });
  }
  return finish(out, "add");
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Tensor out(a.shape());
  auto o = out.data();
  auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] - y[i];
  if (detail::should_record({&a, &b})) {
    detail::record(out, [a, b](std::span<const float> g) mutable {
      if (a.requires_grad()) {
        auto d = a.grad_buffer();
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i];
      }
      if (b.requires_grad()) {
        auto d = b.grad_buffer();
        for (std::size_t i = 0; i < d.size(); ++i) d[i] -= g[i];
      }
    });
  }
  return finish(out, "sub");
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  Tensor out(a.shape());
  auto o = out.data();
  auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] * y[i];
  if (detail::should_record({&a, &b})) {
    detail::record(out, [a, b](std::span<const float> g) mutable {
      if (a.requires_grad()) {
        auto d = a.grad_buffer();
        auto y = b.data();
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i] * y[i];
      }
      if (b.requires_grad()) {
        auto d = b.grad_buffer();
        auto x = a.data();
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i] * x[i];
      }
    });
  }
  return finish(out, "mul");
}

Tensor scale(const Tensor& a, float factor) {
  Tensor out(a.shape());
  auto o = out.data();
  auto x = a.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] * factor;
  if (detail::should_record({&a})) {
    detail::record(out, [a, factor](std::span<const float> g) mutable {
      auto d = a.grad_buffer();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i] * factor;
    });
  }
  return finish(out, "scale");
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  require_matrix(x, "add_bias");
  const std::size_t m = x.rows(), n = x.cols();
  if (bias.size() != n) {
    throw DimensionError("add_bias: bias " + shape_to_string(bias.shape()) + " for input " +
                         shape_to_string(x.shape()));
  }
  Tensor out(x.shape());
  auto o = out.data();
  auto xv = x.data(), bv = bias.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) o[i * n + j] = xv[i * n + j] + bv[j];
  if (detail::should_record({&x, &bias})) {
    detail::record(out, [x, bias, m, n](std::span<const float> g) mutable {
      if (x.requires_grad()) {
        auto d = x.grad_buffer();
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i];
      }
      if (bias.requires_grad()) {
        auto d = bias.grad_buffer();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) d[j] += g[i * n + j];
      }
    });
  }
  return finish(out, "add_bias");
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  Tensor y = matmul(x, weight);
  return bias.defined() ? add_bias(y, bias) : y;
}

Tensor relu(const Tensor& x) {
  Tensor out(x.shape());
  auto o = out.data();
  auto v = x.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = v[i] > 0.0f ? v[i] : 0.0f;
  if (detail::should_record({&x})) {
    detail::record(out, [x](std::span<const float> g) mutable {
      auto d = x.grad_buffer();
      auto v = x.data();
      for (std::size_t i = 0; i < d.size(); ++i)
        if (v[i] > 0.0f) d[i] += g[i];
    });
  }
  return finish(out, "relu");
}

Tensor dropout(const Tensor& x, float p, Rng& rng, bool train) {
  if (p < 0.0f || p >= 1.0f) throw ConfigError("dropout rate must lie in [0, 1), got " + std::to_string(p));
  if (!train || p == 0.0f) return x;
  const float keep_scale = 1.0f / (1.0f - p);
  std::uniform_real_distribution<float> uniform(0.0f, 1.0f);
  std::vector<float> factors(x.size());
  for (auto& f : factors) f = uniform(rng) < p ? 0.0f : keep_scale;
  Tensor out(x.shape());
  auto o = out.data();
  auto v = x.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = v[i] * factors[i];
  if (detail::should_record({&x})) {
    detail::record(out, [x, factors = std::move(factors)](std::span<const float> g) mutable {
      auto d = x.grad_buffer();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i] * factors[i];
    });
  }
  return finish(out, "dropout");
}

Tensor embedding(const Tensor& table, std::span<const int> ids) {
  require_matrix(table, "embedding");
  if (ids.empty()) throw DimensionError("embedding: empty id list");
  const std::size_t vocab = table.rows(), width = table.cols();
  for (int id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= vocab) {
      throw IndexError("embedding: id " + std::to_string(id) + " outside table of " + std::to_string(vocab) +
                       " rows");
    }
  }
  Tensor out({ids.size(), width});
  auto o = out.data();
  auto t = table.data();
  for (std::size_t r = 0; r < ids.size(); ++r)
    std::copy_n(t.begin() + static_cast<std::ptrdiff_t>(ids[r] * width), width,
                o.begin() + static_cast<std::ptrdiff_t>(r * width));
  if (detail::should_record({&table})) {
    std::vector<int> idv(ids.begin(), ids.end());
    detail::record(out, [table, idv = std::move(idv), width](std::span<const float> g) mutable {
      auto d = table.grad_buffer();
      for (std::size_t r = 0; r < idv.size(); ++r)
        for (std::size_t j = 0; j < width; ++j) d[idv[r] * width + j] += g[r * width + j];
    });
  }
  return finish(out, "embedding");
}

Tensor conv1d(const Tensor& x, const Tensor& kernel) {
  require_matrix(x, "conv1d");
  if (!kernel.defined() || kernel.rank() != 3) throw DimensionError("conv1d: kernel must be [k x c_in x c_out]");
  const std::size_t n = x.rows(), cin = x.cols();
  const std::size_t k = kernel.dim(0), cout = kernel.dim(2);
  if (k % 2 == 0) throw ConfigError("conv1d: kernel size must be odd, got " + std::to_string(k));
  if (kernel.dim(1) != cin) {
    throw DimensionError("conv1d: input " + shape_to_string(x.shape()) + " does not match kernel " +
                         shape_to_string(kernel.shape()));
  }
  const long half = static_cast<long>(k / 2);
  const long len = static_cast<long>(n);
  Tensor out({n, cout});
  const float* xv = x.data().data();
  const float* kv = kernel.data().data();
  float* ov = out.data().data();
  for (std::size_t o = 0; o < k; ++o) {
    const long shift = static_cast<long>(o) - half;
    const long t0 = std::max(0L, -shift), t1 = std::min(len, len - shift);
    if (t1 <= t0) continue;
    gemm_nn(xv + (t0 + shift) * static_cast<long>(cin), kv + o * cin * cout, ov + t0 * static_cast<long>(cout),
            static_cast<std::size_t>(t1 - t0), cin, cout);
  }
  if (detail::should_record({&x, &kernel})) {
    detail::record(out, [x, kernel, k, cin, cout, half, len](std::span<const float> g) mutable {
      for (std::size_t o = 0; o < k; ++o) {
        const long shift = static_cast<long>(o) - half;
        const long t0 = std::max(0L, -shift), t1 = std::min(len, len - shift);
        if (t1 <= t0) continue;
        const auto rows = static_cast<std::size_t>(t1 - t0);
        const float* grows = g.data() + t0 * static_cast<long>(cout);
        const std::size_t xoff = static_cast<std::size_t>(t0 + shift) * cin;
        if (x.requires_grad())
          gemm_nt(grows, kernel.data().data() + o * cin * cout, x.grad_buffer().data() + xoff, rows, cout, cin);
        if (kernel.requires_grad())
          gemm_tn(x.data().data() + xoff, grows, kernel.grad_buffer().data() + o * cin * cout, rows, cin, cout);
      }
    });
  }
  return finish(out, "conv1d");
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, float eps) {
  require_matrix(x, "layer_norm");
  const std::size_t m = x.rows(), d = x.cols();
  if (gain.size() != d || bias.size() != d) {
    throw DimensionError("layer_norm: gain/bias width does not match input " + shape_to_string(x.shape()));
  }
  Tensor out(x.shape());
  std::vector<float> xhat(x.size());
  std::vector<float> inv_std(m);
  auto xv = x.data(), gv = gain.data(), bv = bias.data();
  auto o = out.data();
  for (std::size_t i = 0; i < m; ++i) {
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += xv[i * d + j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double c = xv[i * d + j] - mu;
      var += c * c;
    }
    var /= static_cast<double>(d);
    const double inv = 1.0 / std::sqrt(var + eps);
    inv_std[i] = static_cast<float>(inv);
    for (std::size_t j = 0; j < d; ++j) {
      const float h = static_cast<float>((xv[i * d + j] - mu) * inv);
      xhat[i * d + j] = h;
      o[i * d + j] = h * gv[j] + bv[j];
    }
  }
  if (detail::should_record({&x, &gain, &bias})) {
    detail::record(out, [x, gain, bias, xhat = std::move(xhat), inv_std = std::move(inv_std), m,
                         d](std::span<const float> g) mutable {
      if (gain.requires_grad()) {
        auto dg = gain.grad_buffer();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < d; ++j) dg[j] += g[i * d + j] * xhat[i * d + j];
      }
      if (bias.requires_grad()) {
        auto db = bias.grad_buffer();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < d; ++j) db[j] += g[i * d + j];
      }
      if (x.requires_grad()) {
        auto dx = x.grad_buffer();
        auto gv = gain.data();
        for (std::size_t i = 0; i < m; ++i) {
          double mean_dh = 0.0, mean_dh_h = 0.0;
          for (std::size_t j = 0; j < d; ++j) {
            const double dh = static_cast<double>(g[i * d + j]) * gv[j];
            mean_dh += dh;
            mean_dh_h += dh * xhat[i * d + j];
          }
          mean_dh /= static_cast<double>(d);
          mean_dh_h /= static_cast<double>(d);
          for (std::size_t j = 0; j < d; ++j) {
            const double dh = static_cast<double>(g[i * d + j]) * gv[j];
            dx[i * d + j] += static_cast<float>(inv_std[i] * (dh - mean_dh - xhat[i * d + j] * mean_dh_h));
          }
        }
      }
    });
  }
  return finish(out, "layer_norm");
}

Tensor masked_softmax(const Tensor& scores, const Mask& mask) {
  require_matrix(scores, "masked_softmax");
  const std::size_t m = scores.rows(), n = scores.cols();
  if (mask.rows != m || mask.cols != n) {
    throw DimensionError("masked_softmax: mask " + std::to_string(mask.rows) + "x" + std::to_string(mask.cols) +
                         " for scores " + shape_to_string(scores.shape()));
  }
  Tensor out(scores.shape());
  auto s = scores.data();
  auto o = out.data();
  for (std::size_t i = 0; i < m; ++i) {
    float hi = -std::numeric_limits<float>::infinity();
    for (std::size_t j = 0; j < n; ++j)
      if (mask(i, j)) hi = std::max(hi, s[i * n + j]);
    if (hi == -std::numeric_limits<float>::infinity()) {
      throw InvariantError("masked_softmax: row " + std::to_string(i) + " has no unmasked entry");
    }
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (!mask(i, j)) continue;
      const double e = std::exp(static_cast<double>(s[i * n + j]) - hi);
      o[i * n + j] = static_cast<float>(e);
      z += e;
    }
    for (std::size_t j = 0; j < n; ++j)
      o[i * n + j] = mask(i, j) ? static_cast<float>(o[i * n + j] / z) : 0.0f;
  }
  if (detail::should_record({&scores})) {
    detail::record(out, [scores, out_values = out.values(), m, n](std::span<const float> g) mutable {
      auto d = scores.grad_buffer();
      for (std::size_t i = 0; i < m; ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < n; ++j) dot += static_cast<double>(g[i * n + j]) * out_values[i * n + j];
        for (std::size_t j = 0; j < n; ++j)
          d[i * n + j] += static_cast<float>(out_values[i * n + j] * (g[i * n + j] - dot));
      }
    });
  }
  return finish(out, "masked_softmax");
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  const std::size_t m = parts.front().rows();
  std::size_t total = 0;
  for (const auto& p : parts) {
    require_matrix(p, "concat_cols");
    if (p.rows() != m) throw DimensionError("concat_cols: row counts differ");
    total += p.cols();
  }
  Tensor out({m, total});
  auto o = out.data();
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t w = p.cols();
    auto pv = p.data();
    for (std::size_t i = 0; i < m; ++i)
      std::copy_n(pv.begin() + static_cast<std::ptrdiff_t>(i * w), w,
                  o.begin() + static_cast<std::ptrdiff_t>(i * total + offset));
    offset += w;
  }
  if (detail::should_record(parts)) {
    std::vector<Tensor> inputs(parts.begin(), parts.end());
    detail::record(out, [inputs, m, total](std::span<const float> g) mutable {
      std::size_t offset = 0;
      for (auto& p : inputs) {
        const std::size_t w = p.cols();
        if (p.requires_grad()) {
          auto d = p.grad_buffer();
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < w; ++j) d[i * w + j] += g[i * total + offset + j];
        }
        offset += w;
      }
    });
  }
  return finish(out, "concat_cols");
}

Tensor sum(const Tensor& x) {
  double acc = 0.0;
  for (float v : x.data()) acc += v;
  Tensor out = Tensor::scalar(static_cast<float>(acc));
  if (detail::should_record({&x})) {
    detail::record(out, [x](std::span<const float> g) mutable {
      auto d = x.grad_buffer();
      for (auto& v : d) v += g[0];
    });
  }
  return finish(out, "sum");
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0f / static_cast<float>(x.size())); }

Tensor l1_loss(const Tensor& pred, const Tensor& target) {
  require_same_shape(pred, target, "l1_loss");
  auto p = pred.data(), t = target.data();
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) acc += std::fabs(static_cast<double>(p[i]) - t[i]);
  const double count = static_cast<double>(p.size());
  Tensor out = Tensor::scalar(static_cast<float>(acc / count));
  if (detail::should_record({&pred})) {
    detail::record(out, [pred, target, count](std::span<const float> g) mutable {
      auto d = pred.grad_buffer();
      auto p = pred.data(), t = target.data();
      const float step = static_cast<float>(g[0] / count);
      for (std::size_t i = 0; i < d.size(); ++i) {
        if (p[i] > t[i]) d[i] += step;
        else if (p[i] < t[i]) d[i] -= step;
      }
    });
  }
  return finish(out, "l1_loss");
}

Tensor mse_loss(const Tensor& pred, const Tensor& target) {
  require_same_shape(pred, target, "mse_loss");
  auto p = pred.data(), t = target.data();
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double e = static_cast<double>(p[i]) - t[i];
    acc += e * e;
  }
  const double count = static_cast<double>(p.size());
  Tensor out = Tensor::scalar(static_cast<float>(acc / count));
  if (detail::should_record({&pred})) {
    detail::record(out, [pred, target, count](std::span<const float> g) mutable {
      auto d = pred.grad_buffer();
      auto p = pred.data(), t = target.data();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += static_cast<float>(2.0 * g[0] * (p[i] - t[i]) / count);
    });
  }
  return finish(out, "mse_loss");
}

Tensor repeat_rows(const Tensor& x, std::span<const int> counts) {
  require_matrix(x, "repeat_rows");
  require_counts(counts, x.rows(), "repeat_rows");
  const std::size_t width = x.cols();
  const std::size_t total = static_cast<std::size_t>(std::accumulate(counts.begin(), counts.end(), 0L));
  Tensor out({total, width});
  auto o = out.data();
  auto xv = x.data();
  std::size_t r = 0;
  for (std::size_t i = 0; i < counts.size(); ++i)
    for (int c = 0; c < counts[i]; ++c, ++r)
      std::copy_n(xv.begin() + static_cast<std::ptrdiff_t>(i * width), width,
                  o.begin() + static_cast<std::ptrdiff_t>(r * width));
  if (detail::should_record({&x})) {
    std::vector<int> cv(counts.begin(), counts.end());
    detail::record(out, [x, cv = std::move(cv), width](std::span<const float> g) mutable {
      auto d = x.grad_buffer();
      std::size_t r = 0;
      for (std::size_t i = 0; i < cv.size(); ++i)
        for (int c = 0; c < cv[i]; ++c, ++r)
          for (std::size_t j = 0; j < width; ++j) d[i * width + j] += g[r * width + j];
    });
  }
  return finish(out, "repeat_rows");
}

Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t count) {
  require_matrix(x, "slice_rows");
  if (count == 0 || begin + count > x.rows()) {
    throw DimensionError("slice_rows: rows [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                         ") outside " + shape_to_string(x.shape()));
  }
  const std::size_t width = x.cols();
  Tensor out({count, width});
  auto xv = x.data();
  std::copy_n(xv.begin() + static_cast<std::ptrdiff_t>(begin * width), count * width, out.data().begin());
  if (detail::should_record({&x})) {
    detail::record(out, [x, begin, count, width](std::span<const float> g) mutable {
      auto d = x.grad_buffer();
      for (std::size_t i = 0; i < count * width; ++i) d[begin * width + i] += g[i];
    });
  }
  return finish(out, "slice_rows");
}

Tensor segment_mean(const Tensor& x, std::span<const int> counts) {
  require_matrix(x, "segment_mean");
  if (counts.empty()) throw DimensionError("segment_mean: no segments");
  for (std::size_t i = 0; i < counts.size(); ++i)
    if (counts[i] < 1) throw InvariantError("segment_mean: segment " + std::to_string(i) + " is empty");
  const std::size_t total = static_cast<std::size_t>(std::accumulate(counts.begin(), counts.end(), 0L));
  if (total != x.rows()) {
    throw InvariantError("segment_mean: segments cover " + std::to_string(total) + " rows, input has " +
                         std::to_string(x.rows()));
  }
  const std::size_t width = x.cols();
  Tensor out({counts.size(), width});
  auto o = out.data();
  auto xv = x.data();
  std::size_t r = 0;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    std::vector<double> acc(width, 0.0);
    for (int c = 0; c < counts[i]; ++c, ++r)
      for (std::size_t j = 0; j < width; ++j) acc[j] += xv[r * width + j];
    for (std::size_t j = 0; j < width; ++j) o[i * width + j] = static_cast<float>(acc[j] / counts[i]);
  }
  if (detail::should_record({&x})) {
    std::vector<int> cv(counts.begin(), counts.end());
    detail::record(out, [x, cv = std::move(cv), width](std::span<const float> g) mutable {
      auto d = x.grad_buffer();
      std::size_t r = 0;
      for (std::size_t i = 0; i < cv.size(); ++i) {
        const float inv = 1.0f / static_cast<float>(cv[i]);
        for (int c = 0; c < cv[i]; ++c, ++r)
          for (std::size_t j = 0; j < width; ++j) d[r * width + j] += g[i * width + j] * inv;
      }
    });
  }
  return finish(out, "segment_mean");
}

Mask band_mask(std::size_t n, int window) {
  if (window < 0) throw ConfigError("attention window must be >= 0");
  const std::size_t width = 2 * static_cast<std::size_t>(window) + 1;
  Mask mask(n, width, false);
  const long len = static_cast<long>(n);
  for (long i = 0; i < len; ++i)
    for (long c = 0; c < static_cast<long>(width); ++c) {
      const long j = i - (c - window);
      if (j >= 0 && j < len) mask.keep[static_cast<std::size_t>(i) * width + static_cast<std::size_t>(c)] = 1;
    }
  return mask;
}

Tensor band_dot(std::span<const Tensor> projected, const Tensor& keys, int window) {
  require_matrix(keys, "band_dot");
  const std::size_t width = 2 * static_cast<std::size_t>(window) + 1;
  if (projected.size() != width) {
    throw DimensionError("band_dot: expected " + std::to_string(width) + " projected query sets, got " +
                         std::to_string(projected.size()));
  }
  const std::size_t n = keys.rows(), d = keys.cols();
  for (const auto& p : projected) require_same_shape(p, keys, "band_dot");
  const long len = static_cast<long>(n);
  Tensor out({n, width});
  auto o = out.data();
  auto kv = keys.data();
  for (std::size_t c = 0; c < width; ++c) {
    auto pv = projected[c].data();
    const long offset = static_cast<long>(c) - window;
    for (long i = 0; i < len; ++i) {
      const long j = i - offset;
      if (j < 0 || j >= len) continue;
      float acc = 0.0f;
      for (std::size_t e = 0; e < d; ++e)
        acc += pv[static_cast<std::size_t>(i) * d + e] * kv[static_cast<std::size_t>(j) * d + e];
      o[static_cast<std::size_t>(i) * width + c] = acc;
    }
  }
  std::vector<Tensor> inputs(projected.begin(), projected.end());
  inputs.push_back(keys);
  if (detail::should_record(std::span<const Tensor>(inputs))) {
    detail::record(out, [inputs, n, d, width, window](std::span<const float> g) mutable {
      Tensor& k = inputs.back();
      const long len = static_cast<long>(n);
      for (std::size_t c = 0; c < width; ++c) {
        Tensor& p = inputs[c];
        const long offset = static_cast<long>(c) - window;
        float* dp = p.requires_grad() ? p.grad_buffer().data() : nullptr;
        float* dk = k.requires_grad() ? k.grad_buffer().data() : nullptr;
        const float* pv = p.data().data();
        const float* kv = k.data().data();
        for (long i = 0; i < len; ++i) {
          const long j = i - offset;
          if (j < 0 || j >= len) continue;
          const float gi = g[static_cast<std::size_t>(i) * width + c];
          if (gi == 0.0f) continue;
          const std::size_t io = static_cast<std::size_t>(i) * d, jo = static_cast<std::size_t>(j) * d;
          if (dp)
            for (std::size_t e = 0; e < d; ++e) dp[io + e] += gi * kv[jo + e];
          if (dk)
            for (std::size_t e = 0; e < d; ++e) dk[jo + e] += gi * pv[io + e];
        }
      }
    });
  }
  return finish(out, "band_dot");
}

Tensor band_apply(const Tensor& weights, const Tensor& values, int window) {
  require_matrix(weights, "band_apply");
  require_matrix(values, "band_apply");
  const std::size_t width = 2 * static_cast<std::size_t>(window) + 1;
  const std::size_t n = values.rows(), d = values.cols();
  if (weights.rows() != n || weights.cols() != width) {
    throw DimensionError("band_apply: weights " + shape_to_string(weights.shape()) + " for values " +
                         shape_to_string(values.shape()) + " and window " + std::to_string(window));
  }
  const long len = static_cast<long>(n);
  Tensor out({n, d});
  auto o = out.data();
  auto w = weights.data();
  auto v = values.data();
  for (long i = 0; i < len; ++i)
    for (std::size_t c = 0; c < width; ++c) {
      const long j = i - (static_cast<long>(c) - window);
      if (j < 0 || j >= len) continue;
      const float wi = w[static_cast<std::size_t>(i) * width + c];
      if (wi == 0.0f) continue;
      for (std::size_t e = 0; e < d; ++e)
        o[static_cast<std::size_t>(i) * d + e] += wi * v[static_cast<std::size_t>(j) * d + e];
    }
  if (detail::should_record({&weights, &values})) {
    detail::record(out, [weights, values, n, d, width, window](std::span<const float> g) mutable {
      const long len = static_cast<long>(n);
      float* dw = weights.requires_grad() ? weights.grad_buffer().data() : nullptr;
      float* dv = values.requires_grad() ? values.grad_buffer().data() : nullptr;
      const float* w = weights.data().data();
      const float* v = values.data().data();
      for (long i = 0; i < len; ++i)
        for (std::size_t c = 0; c < width; ++c) {
          const long j = i - (static_cast<long>(c) - window);
          if (j < 0 || j >= len) continue;
          const std::size_t io = static_cast<std::size_t>(i) * d, jo = static_cast<std::size_t>(j) * d;
          const std::size_t wi = static_cast<std::size_t>(i) * width + c;
          if (dw) {
            float acc = 0.0f;
            for (std::size_t e = 0; e < d; ++e) acc += g[io + e] * v[jo + e];
            dw[wi] += acc;
          }
          if (dv)
            for (std::size_t e = 0; e < d; ++e) dv[jo + e] += w[wi] * g[io + e];
        }
    });
  }
  return finish(out, "band_apply");
}

Tensor band_to_dense(const Tensor& band, int window) {
  require_matrix(band, "band_to_dense");
  const std::size_t n = band.rows(), width = band.cols();
  if (width != 2 * static_cast<std::size_t>(window) + 1) throw DimensionError("band_to_dense: width/window mismatch");
  Tensor out({n, n});
  const long len = static_cast<long>(n);
  for (long i = 0; i < len; ++i)
    for (std::size_t c = 0; c < width; ++c) {
      const long j = i - (static_cast<long>(c) - window);
      if (j >= 0 && j < len)
        out.at(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) = band.at(static_cast<std::size_t>(i), c);
    }
  return out;
}

}  // namespace psyn
