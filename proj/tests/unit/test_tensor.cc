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
#include "psyn/errors.h"
#include "psyn/gradcheck.h"
#include "psyn/ops.h"
#include "support.h"

using namespace psyn;
using psyn::test::random_tensor;

TEST_SUITE("tensor") {
  TEST_CASE("shape invariants") {
    CHECK_THROWS_AS(Tensor(Shape{2, 0}), DimensionError);
    CHECK_THROWS_AS(Tensor(Shape{2, 2}, std::vector<float>{1, 2, 3}), DimensionError);
    Tensor t({2, 3}, 1.5f);
    CHECK(t.size() == 6);
    CHECK(t.at(1, 2) == 1.5f);
    CHECK_FALSE(t.has_grad());
    CHECK_THROWS_AS(t.reshaped({4}), DimensionError);
  }

  TEST_CASE("matmul examples") {
    Tensor eye = Tensor::from_rows({{1, 0}, {0, 1}});
    Tensor b = Tensor::from_rows({{1, 2}, {3, 4}});
    CHECK(matmul(eye, b).values() == b.values());
    Tensor row = Tensor::from_rows({{1, 2}});
    Tensor col = Tensor::from_rows({{3}, {4}});
    CHECK(matmul(row, col).item() == 11.0f);
  }

  TEST_CASE("matmul shape mismatch names both shapes") {
    Tensor a({2, 3}), b({2, 3});
    try {
      matmul(a, b);
      FAIL("expected DimensionError");
    } catch (const DimensionError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("[2x3]") != std::string::npos);
    }
  }

  TEST_CASE("gradient of sum(AB) wrt A is ones B^T") {
    Rng rng(3);
    Tensor a = random_tensor({3, 4}, rng);
    Tensor b = random_tensor({4, 2}, rng);
    a.set_requires_grad();
    Tape tape;
    {
      Tape::Scope scope(tape);
      tape.backward(sum(matmul(a, b)));
    }
    const auto g = a.grad();
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t k = 0; k < 4; ++k) CHECK(g[i * 4 + k] == doctest::Approx(b.at(k, 0) + b.at(k, 1)));
    const auto r = check_gradients([&](const Tensor& x) { return sum(matmul(x, b)); }, a);
    CHECK(r.max_rel_error < 1e-3);
  }

  TEST_CASE("conv1d identity and averaging kernels") {
    Tensor x = Tensor::from_rows({{1}, {2}, {3}});
    Tensor delta({3, 1, 1}, std::vector<float>{0, 1, 0});
    CHECK(conv1d(x, delta).values() == x.values());
    Tensor avg({3, 1, 1}, 1.0f / 3.0f);
    const auto y = conv1d(x, avg).values();
    CHECK(y[0] == doctest::Approx(1.0));
    CHECK(y[1] == doctest::Approx(2.0));
    CHECK(y[2] == doctest::Approx(5.0 / 3.0));
    CHECK_THROWS_AS(conv1d(x, Tensor({2, 1, 1})), ConfigError);
  }

  TEST_CASE("layer_norm examples") {
    Tensor gain({2}, 1.0f), bias({2}, 0.0f);
    const auto flat = layer_norm(Tensor::from_rows({{4, 4}}), gain, bias).values();
    CHECK(flat[0] == 0.0f);
    CHECK(flat[1] == 0.0f);
    const auto sym = layer_norm(Tensor::from_rows({{1, 3}}), gain, bias, 1e-12f).values();
    CHECK(sym[0] == doctest::Approx(-1.0));
    CHECK(sym[1] == doctest::Approx(1.0));
  }

  TEST_CASE("masked_softmax examples") {
    Mask single(1, 2, false);
    single.keep[1] = 1;
    const auto one = masked_softmax(Tensor::from_rows({{5, 7}}), single).values();
    CHECK(one[0] == 0.0f);
    CHECK(one[1] == 1.0f);
    const auto half = masked_softmax(Tensor::from_rows({{0, 0}}), Mask(1, 2)).values();
    CHECK(half[0] == 0.5f);
    CHECK(half[1] == 0.5f);
    const auto big = masked_softmax(Tensor::from_rows({{1000, 1001}}), Mask(1, 2)).values();
    const double e = std::exp(-1.0);
    CHECK(big[0] == doctest::Approx(e / (1 + e)).epsilon(1e-6));
    CHECK(big[1] == doctest::Approx(1 / (1 + e)).epsilon(1e-6));
    CHECK_THROWS_AS(masked_softmax(Tensor::from_rows({{1, 2}}), Mask(1, 2, false)), InvariantError);
  }

  TEST_CASE("masked_softmax gradient of first column") {
    Rng rng(5);
    Tensor s = random_tensor({4, 4}, rng);
    Mask m(4, 4);
    m.keep[1] = 0;
    m.keep[14] = 0;
    const auto r = check_gradients(
        [&](const Tensor& x) {
          Tensor p = masked_softmax(x, m);
          Tensor first({4, 4}, 0.0f);
          for (std::size_t i = 0; i < 4; ++i) first.at(i, 0) = 1.0f;
          return sum(mul(p, first));
        },
        s);
    CHECK(r.max_rel_error < 1e-3);
  }

  TEST_CASE("relu, dropout and embedding") {
    CHECK(relu(Tensor::from_rows({{-1, 2}})).values() == std::vector<float>{0, 2});
    Rng rng(1);
    Tensor x = random_tensor({3, 3}, rng);
    CHECK(dropout(x, 0.0f, rng, true).values() == x.values());
    CHECK(dropout(x, 0.5f, rng, false).values() == x.values());
    Tensor kept = dropout(Tensor({1, 1000}, 1.0f), 0.5f, rng, true);
    for (float v : kept.values()) CHECK((v == 0.0f || v == 2.0f));

    Tensor table = random_tensor({3, 2}, rng);
    table.set_requires_grad();
    const std::vector<int> ids{0, 0};
    Tape tape;
    {
      Tape::Scope scope(tape);
      tape.backward(sum(embedding(table, ids)));
    }
    CHECK(table.grad() == std::vector<float>{2, 2, 0, 0, 0, 0});
    const std::vector<int> bad{3};
    CHECK_THROWS_AS(embedding(table, bad), IndexError);
  }

  TEST_CASE("backward examples") {
    Tensor x = Tensor::from_rows({{1, 2}});
    x.set_requires_grad();
    Tape tape;
    {
      Tape::Scope scope(tape);
      tape.backward(sum(mul(x, x)));
    }
    CHECK(x.grad() == std::vector<float>{2, 4});

    Tensor y = Tensor::from_rows({{1, -2, 3}});
    y.set_requires_grad();
    Tape t2;
    Tensor loss;
    {
      Tape::Scope scope(t2);
      Tensor s = sum(y);
      t2.backward(s);
      loss = s;
    }
    CHECK(y.grad() == std::vector<float>{1, 1, 1});
    CHECK_THROWS_AS(t2.backward(loss), InvariantError);
  }

  TEST_CASE("backward rejects non-scalar loss") {
    Tensor x({2, 2}, 1.0f);
    x.set_requires_grad();
    Tape tape;
    Tape::Scope scope(tape);
    Tensor y = relu(x);
    CHECK_THROWS_AS(tape.backward(y), DimensionError);
  }

  TEST_CASE("check_gradients on identity sum and determinism guard") {
    Rng rng(2);
    Tensor x = random_tensor({2, 3}, rng);
    CHECK(check_gradients([](const Tensor& t) { return sum(t); }, x).max_rel_error < 1e-3);
    int calls = 0;
    CHECK_THROWS_AS(check_gradients(
                        [&](const Tensor& t) {
                          ++calls;
                          return scale(sum(t), static_cast<float>(calls));
                        },
                        x),
                    DeterminismError);
  }

  TEST_CASE("directional check catches a wrong gradient") {
    Rng rng(4);
    Tensor x = random_tensor({3, 3}, rng);
    CHECK(check_directional_gradients([&] { return sum(mul(x, x)); }, {x}).max_rel_error < 1e-3);
    // An extra tape entry doubles the seed, so backward reports 4y instead of 2y.
    Tensor y = random_tensor({3, 3}, rng);
    auto doubled = [&] {
      Tensor s = sum(mul(y, y));
      if (Tape::active()) Tape::active()->record([s] { s.grad_buffer()[0] *= 2.0f; });
      return s;
    };
    CHECK(check_directional_gradients(doubled, {y}).max_rel_error > 0.1);
  }
}
