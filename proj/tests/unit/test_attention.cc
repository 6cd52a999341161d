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

#include "doctest.h"
#include "psyn/attention.h"
#include "psyn/errors.h"
#include "psyn/gradcheck.h"
#include "psyn/verify/oracles.h"
#include "support.h"

using namespace psyn;
using psyn::test::random_tensor;

namespace {

Tensor eye(std::size_t d) {
  Tensor t({d, d}, 0.0f);
  for (std::size_t i = 0; i < d; ++i) t.at(i, i) = 1.0f;
  return t;
}

}  // namespace

TEST_SUITE("attention") {
  TEST_CASE("identity projections return the input") {
    Rng rng(1);
    LocalAttentionHead head;
    head.w_q = eye(3);
    head.w_k = eye(3);
    head.w_v = eye(3);
    Tensor h = random_tensor({4, 3}, rng);
    const QKV qkv = project_qkv(h, head);
    CHECK(qkv.q.values() == h.values());
    CHECK(qkv.k.values() == h.values());
    CHECK(qkv.v.values() == h.values());
    Tensor one = random_tensor({1, 3}, rng);
    CHECK(project_qkv(one, head).q.rows() == 1);
  }

  TEST_CASE("projections match a 64-bit matmul") {
    Rng rng(2);
    LocalAttentionHead head;
    head.w_q = random_tensor({6, 3}, rng);
    head.w_k = random_tensor({6, 3}, rng);
    head.w_v = random_tensor({6, 3}, rng);
    Tensor h = random_tensor({5, 6}, rng);
    const QKV qkv = project_qkv(h, head);
    const auto ref = oracle::multiply(oracle::from_tensor(h), oracle::from_tensor(head.w_k));
    for (std::size_t i = 0; i < 5; ++i)
      for (std::size_t j = 0; j < 3; ++j) CHECK(std::abs(qkv.k.at(i, j) - ref(i, j)) < 1e-5);
  }

  TEST_CASE("relative scores: window of one is diagonal") {
    Rng rng(3);
    Tensor q = random_tensor({4, 2}, rng), k = random_tensor({4, 2}, rng);
    const std::vector<Tensor> w{eye(2)};
    Mask mask;
    Tensor a = relative_scores(q, k, w, 0, &mask);
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t j = 0; j < 4; ++j) {
        if (i == j) {
          CHECK(a.at(i, j) == doctest::Approx(q.at(i, 0) * k.at(i, 0) + q.at(i, 1) * k.at(i, 1)));
          CHECK(mask(i, j));
        } else {
          CHECK_FALSE(mask(i, j));
        }
      }
  }

  TEST_CASE("relative scores hand example") {
    Tensor q = Tensor::from_rows({{1, 0}, {0, 1}});
    Tensor k = Tensor::from_rows({{1, 1}, {2, 0}});
    const std::vector<Tensor> w{eye(2), eye(2), eye(2)};
    Tensor a = relative_scores(q, k, w, 1);
    CHECK(a.values() == std::vector<float>{1, 2, 1, 0});
  }

  TEST_CASE("tridiagonal band has 13 entries at n=5") {
    CHECK(band_mask(5, 1).count() == 13);
    Mask dense;
    Rng rng(4);
    Tensor q = random_tensor({5, 2}, rng);
    const std::vector<Tensor> w{eye(2), eye(2), eye(2)};
    relative_scores(q, q, w, 1, &dense);
    CHECK(dense.count() == 13);
  }

  TEST_CASE("W_loc count must be 2T+1") {
    Rng rng(5);
    Tensor q = random_tensor({3, 2}, rng);
    const std::vector<Tensor> w{eye(2), eye(2)};
    CHECK_THROWS_AS(relative_scores_banded(q, q, w, 1), DimensionError);
  }

  TEST_CASE("self-only window returns v") {
    Rng rng(6);
    ParameterSet params;
    LocalAttention attn(params, "a", 3, 1, 0, rng);
    attn.heads[0].w_loc[0] = eye(3);
    attn.w_out = eye(3);
    Tensor h = random_tensor({4, 3}, rng);
    const QKV qkv = project_qkv(h, attn.heads[0]);
    const Tensor out = attn(h);
    for (std::size_t i = 0; i < out.size(); ++i) CHECK(out.at(i) == doctest::Approx(qkv.v.at(i)).epsilon(1e-6));
  }

  TEST_CASE("banded path matches the dense oracle with tied matrices") {
    Rng rng(7);
    ParameterSet params;
    const int n = 6;
    LocalAttention attn(params, "a", 8, 2, n - 1, rng);
    Tensor w = random_tensor({4, 4}, rng, 0.5f);
    for (auto& head : attn.heads)
      for (auto& m : head.w_loc) m = w;
    Tensor h = random_tensor({n, 8}, rng);
    const Tensor out = attn(h);
    const auto ref = oracle::local_attention(attn, h);
    for (std::size_t i = 0; i < out.rows(); ++i)
      for (std::size_t j = 0; j < out.cols(); ++j) CHECK(std::abs(out.at(i, j) - ref.output(i, j)) < 1e-5);
  }

  TEST_CASE("interior translation equivariance") {
    Rng rng(8);
    ParameterSet params;
    const int T = 2;
    LocalAttention attn(params, "a", 4, 1, T, rng);
    Tensor base = random_tensor({12, 4}, rng);
    const std::size_t shift = 3;
    Tensor shifted({12, 4}, 0.0f);
    for (std::size_t i = 0; i + shift < 12; ++i)
      for (std::size_t c = 0; c < 4; ++c) shifted.at(i, c) = base.at(i + shift, c);
    for (std::size_t i = 12 - shift; i < 12; ++i)
      for (std::size_t c = 0; c < 4; ++c) shifted.at(i, c) = 7.0f;
    const Tensor a = attn(base), b = attn(shifted);
    // Row i of `shifted` sees rows i-T..i+T, identical to base rows i+shift-T..i+shift+T.
    for (std::size_t i = T; i + shift + T < 12; ++i)
      for (std::size_t c = 0; c < 4; ++c) CHECK(std::abs(b.at(i, c) - a.at(i + shift, c)) < 1e-5);
  }

  TEST_CASE("block with zeroed branches reduces to double layer norm") {
    Rng rng(9);
    ParameterSet params;
    BlockConfig cfg{8, 2, 2, 3, 8, 0.0f};
    LocalAttentionBlock block(params, "b", cfg, rng);
    for (auto& v : block.attention.w_out.data()) v = 0.0f;
    for (auto& v : block.conv2.kernel.data()) v = 0.0f;
    for (auto& v : block.conv2.bias.data()) v = 0.0f;
    Tensor h = random_tensor({5, 8}, rng);
    const Tensor expected = block.norm2(block.norm1(h));
    const Tensor out = block(h);
    for (std::size_t i = 0; i < out.size(); ++i) CHECK(out.at(i) == doctest::Approx(expected.at(i)).epsilon(1e-5));
  }

  TEST_CASE("block handles lengths well past its window") {
    Rng rng(10);
    ParameterSet params;
    BlockConfig cfg{8, 2, 2, 3, 8, 0.0f};
    LocalAttentionBlock block(params, "b", cfg, rng);
    const std::size_t count = params.element_count();
    for (std::size_t n : {1u, 2u, 20u, 64u}) {
      Tensor h = random_tensor({n, 8}, rng);
      CHECK(block(h).rows() == n);
    }
    CHECK(params.element_count() == count);
  }

  TEST_CASE("block gradient at n=4, d=8, T=2") {
    Rng rng(11);
    ParameterSet params;
    BlockConfig cfg{8, 2, 2, 3, 8, 0.0f};
    LocalAttentionBlock block(params, "b", cfg, rng);
    Tensor h = random_tensor({4, 8}, rng);
    Tensor w = random_tensor({4, 8}, rng);
    const auto r =
        check_directional_gradients([&] { return sum(mul(block(h), w)); }, {h}, 6, 1e-2f, 3);
    CHECK(r.max_rel_error < 1e-2);
  }

  TEST_CASE("initial relative matrices") {
    Rng rng(12);
    ParameterSet params;
    LocalAttention attn(params, "a", 4, 2, 3, rng);
    REQUIRE(attn.heads[0].w_loc.size() == 7);
    CHECK(attn.heads[0].w_loc[3].at(0, 0) == 1.0f);
    CHECK(attn.heads[0].w_loc[0].at(1, 1) == doctest::Approx(0.1f));
    CHECK(attn.heads[0].w_loc[0].at(0, 1) == 0.0f);
    CHECK(params.contains("a.head1.w_loc-3"));
  }
}
