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

#include <cmath>

#include "doctest.h"
#include "psyn/alignment.h"
#include "psyn/errors.h"
#include "psyn/gradcheck.h"
#include "psyn/verify/oracles.h"
#include "support.h"

using namespace psyn;
using psyn::test::random_tensor;

namespace {

EmissionStats random_stats(std::size_t m, Rng& rng, std::size_t f = 80) {
  return EmissionStats{random_tensor({m, f}, rng, 0.5f), random_tensor({m, f}, rng, 0.2f)};
}

double gaussian_row_logpdf(const EmissionStats& s, std::size_t i, const Tensor& mel, std::size_t t) {
  double acc = 0.0;
  for (std::size_t d = 0; d < mel.cols(); ++d) {
    const double lv = s.log_var.at(i, d);
    const double diff = mel.at(t, d) - s.mean.at(i, d);
    acc += -0.5 * (std::log(2.0 * M_PI) + lv + diff * diff / std::exp(lv));
  }
  return acc;
}

}  // namespace

TEST_SUITE("alignment") {
  TEST_CASE("single phoneme has one path") {
    Rng rng(1);
    const EmissionStats s = random_stats(1, rng);
    const Tensor mel = random_tensor({5, 80}, rng);
    double expected = 0.0;
    for (std::size_t t = 0; t < 5; ++t) expected -= gaussian_row_logpdf(s, 0, mel, t);
    CHECK(forward_sum_loss(s, mel).item() == doctest::Approx(expected).epsilon(1e-5));
    CHECK(viterbi_durations(s, mel).durations == std::vector<int>{5});
  }

  TEST_CASE("m == n forces the diagonal") {
    Rng rng(2);
    const EmissionStats s = random_stats(4, rng);
    const Tensor mel = random_tensor({4, 80}, rng);
    double expected = 0.0;
    for (std::size_t i = 0; i < 4; ++i) expected -= gaussian_row_logpdf(s, i, mel, i);
    CHECK(forward_sum_loss(s, mel).item() == doctest::Approx(expected).epsilon(1e-5));
    CHECK(viterbi_durations(s, mel).durations == std::vector<int>{1, 1, 1, 1});
  }

  TEST_CASE("m=2, n=3 equals the two-path sum") {
    Rng rng(3);
    const EmissionStats s = random_stats(2, rng, 4);
    const Tensor mel = random_tensor({3, 4}, rng);
    const double p12 = gaussian_row_logpdf(s, 0, mel, 0) + gaussian_row_logpdf(s, 1, mel, 1) +
                       gaussian_row_logpdf(s, 1, mel, 2);
    const double p21 = gaussian_row_logpdf(s, 0, mel, 0) + gaussian_row_logpdf(s, 0, mel, 1) +
                       gaussian_row_logpdf(s, 1, mel, 2);
    const double hi = std::max(p12, p21);
    const double expected = -(hi + std::log(std::exp(p12 - hi) + std::exp(p21 - hi)));
    CHECK(forward_sum_loss(s, mel).item() == doctest::Approx(expected).epsilon(1e-5));
    const auto e = oracle::enumerate_segmentations(oracle::emission_table(s, mel));
    CHECK(e.count == 2);
    CHECK(-forward_sum_log_likelihood(s, mel) == doctest::Approx(-e.log_sum).epsilon(1e-9));
  }

  TEST_CASE("infeasible alignment") {
    Rng rng(4);
    const EmissionStats s = random_stats(3, rng);
    const Tensor mel = random_tensor({2, 80}, rng);
    CHECK_THROWS_AS(forward_sum_loss(s, mel), InvariantError);
    CHECK_THROWS_AS(viterbi(s, mel), InvariantError);
  }

  TEST_CASE("viterbi recovers constructed segments") {
    Rng rng(5);
    EmissionStats s = random_stats(2, rng);
    for (auto& v : s.log_var.data()) v = -2.0f;
    Tensor mel({10, 80});
    for (std::size_t t = 0; t < 10; ++t)
      for (std::size_t d = 0; d < 80; ++d) mel.at(t, d) = s.mean.at(t < 6 ? 0 : 1, d);
    const ViterbiResult r = viterbi(s, mel);
    CHECK(r.alignment.durations == std::vector<int>{6, 4});
    CHECK(r.log_prob <= forward_sum_log_likelihood(s, mel));
  }

  TEST_CASE("viterbi ties favor longer early phonemes") {
    EmissionStats s{Tensor({2, 3}, 0.0f), Tensor({2, 3}, 0.0f)};
    const Tensor mel({5, 3}, 0.25f);
    CHECK(viterbi_durations(s, mel).durations == std::vector<int>{4, 1});
  }

  TEST_CASE("viterbi is a valid path below the forward total on random instances") {
    Rng rng(6);
    for (int trial = 0; trial < 20; ++trial) {
      const std::size_t m = 1 + trial % 5, n = m + trial % 7;
      const EmissionStats s = random_stats(m, rng, 6);
      const Tensor mel = random_tensor({n, 6}, rng);
      const ViterbiResult r = viterbi(s, mel);
      CHECK_NOTHROW(r.alignment.validate(static_cast<long>(n)));
      CHECK(r.log_prob <= forward_sum_log_likelihood(s, mel) + 1e-9);
    }
  }

  TEST_CASE("loss is sensitive to phoneme order") {
    Rng rng(7);
    const EmissionStats s = random_stats(3, rng, 8);
    const Tensor mel = random_tensor({6, 8}, rng);
    EmissionStats swapped{s.mean.clone(), s.log_var.clone()};
    for (std::size_t d = 0; d < 8; ++d) {
      std::swap(swapped.mean.at(0, d), swapped.mean.at(2, d));
      std::swap(swapped.log_var.at(0, d), swapped.log_var.at(2, d));
    }
    CHECK(forward_sum_loss(s, mel).item() != forward_sum_loss(swapped, mel).item());
  }

  TEST_CASE("forward-sum gradient") {
    Rng rng(8);
    EmissionStats s = random_stats(2, rng, 5);
    const Tensor mel = random_tensor({4, 5}, rng);
    const auto r = check_directional_gradients([&] { return forward_sum_loss(s, mel); }, {s.mean, s.log_var}, 6);
    CHECK(r.max_rel_error < 1e-3);
  }

  TEST_CASE("length regulator") {
    Tensor seq = Tensor::from_rows({{1, 10}, {2, 20}, {3, 30}});
    CHECK(length_regulator(seq, Alignment{{1, 1, 1}}).values() == seq.values());
    const Tensor out = length_regulator(seq, Alignment{{2, 1, 3}});
    CHECK(out.values() == std::vector<float>{1, 10, 1, 10, 2, 20, 3, 30, 3, 30, 3, 30});
    CHECK_THROWS_AS(length_regulator(seq, Alignment{{2, 0, 3}}), InvariantError);
    CHECK_THROWS_AS(length_regulator(seq, Alignment{{2, 1}}), DimensionError);

    Rng rng(9);
    Tensor a = random_tensor({3, 2}, rng), b = random_tensor({3, 2}, rng);
    const Alignment al{{2, 1, 3}};
    const auto lhs = length_regulator(add(a, b), al).values();
    const auto ra = length_regulator(a, al).values(), rb = length_regulator(b, al).values();
    for (std::size_t i = 0; i < lhs.size(); ++i) CHECK(lhs[i] == ra[i] + rb[i]);

    a.set_requires_grad();
    Tensor w = random_tensor({6, 2}, rng);
    Tape tape;
    {
      Tape::Scope scope(tape);
      tape.backward(sum(mul(length_regulator(a, al), w)));
    }
    const auto g = a.grad();
    CHECK(g[0] == doctest::Approx(w.at(0, 0) + w.at(1, 0)));
    CHECK(g[2] == doctest::Approx(w.at(2, 0)));
    CHECK(g[4] == doctest::Approx(w.at(3, 0) + w.at(4, 0) + w.at(5, 0)));
  }

  TEST_CASE("durations from the predictor") {
    const std::vector<float> zeros{0.0f, 0.0f};
    CHECK(durations_from_predictor(zeros).durations == std::vector<int>{1, 1});
    const std::vector<float> one{std::log(3.4f)};
    CHECK(durations_from_predictor(one).durations == std::vector<int>{3});
    const std::vector<float> unit{0.0f, -5.0f};
    CHECK(durations_from_predictor(unit, 2.5f).durations == std::vector<int>{2, 1});
    CHECK(durations_from_predictor(unit, 3.5f).durations == std::vector<int>{4, 1});

    Rng rng(10);
    std::uniform_real_distribution<float> u(1.0f, 3.0f);
    std::vector<float> logs(400);
    for (auto& v : logs) v = u(rng);
    const double base = static_cast<double>(durations_from_predictor(logs).frames());
    const double stretched = static_cast<double>(durations_from_predictor(logs, 1.5f).frames());
    CHECK(stretched / base == doctest::Approx(1.5).epsilon(0.01));
  }
}
