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

#include "psyn/verify/suites.h"

#include <chrono>
#include <map>
#include <cmath>
#include <functional>
#include <numbers>
#include <sstream>

#include "psyn/gradcheck.h"
#include "psyn/model.h"
#include "psyn/verify/oracles.h"

namespace psyn::verify {

bool SuiteReport::passed() const { return failures() == 0; }

std::size_t SuiteReport::failures() const {
  std::size_t n = 0;
  for (const auto& c : checks) n += c.passed ? 0 : 1;
  return n;
}

namespace {

using Clock = std::chrono::steady_clock;

Tensor random_tensor(Shape shape, Rng& rng, float scale = 1.0f) {
  Tensor t(std::move(shape));
  std::normal_distribution<float> dist(0.0f, scale);
  for (auto& v : t.data()) v = dist(rng);
  return t;
}

// Random values bounded away from zero, for ops with a kink at 0.
Tensor away_from_zero(Shape shape, Rng& rng, float margin = 0.1f) {
  Tensor t = random_tensor(std::move(shape), rng);
  for (auto& v : t.data())
    if (std::fabs(v) < margin) v = v < 0.0f ? v - margin : v + margin;
  return t;
}

// Scalar projection <y, w> with fixed random weights, so every output
// element contributes a distinct gradient.
class Projector {
 public:
  explicit Projector(std::uint64_t seed) : seed_(seed) {}
  Tensor operator()(const Tensor& y) const {
    Rng rng(seed_);
    return sum(mul(y, random_tensor(y.shape(), rng)));
  }

 private:
  std::uint64_t seed_;
};

std::string format_result(const GradCheckResult& r) {
  std::ostringstream os;
  os.precision(3);
  os << "max_rel_error=" << r.max_rel_error << " directions=" << r.checked << " analytic=" << r.worst_analytic
     << " numeric=" << r.worst_numeric;
  return os.str();
}

class GradientRunner {
 public:
  explicit GradientRunner(SuiteReport& report) : report_(report) {}

  // Directional checks of d f / d x for every listed input.
  void check(const std::string& name, double tol, const ScalarFn& f, const std::vector<Tensor>& inputs,
             float h = 1e-3f, std::size_t directions = 6) {
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      const std::string label = inputs.size() == 1 ? name : name + "[arg" + std::to_string(i) + "]";
      const Tensor x = inputs[i];
      run(label, tol,
          [&] { return check_directional_gradients([&] { return f(x); }, {x}, directions, h, seed_ + i); });
    }
  }

  // Checks every parameter of `params`, each with its own directions,
  // aggregated into one line naming the worst tensor.
  void check_params(const std::string& name, double tol, const std::function<Tensor()>& f, ParameterSet& params,
                    std::size_t directions, float h = 1e-3f,
                    const std::function<bool(const std::string&)>& filter = {}) {
    run(name, tol, [&] {
      GradCheckResult total;
      std::size_t tensors = 0;
      for (const auto& [pname, tensor] : params.entries()) {
        if (filter && !filter(pname)) continue;
        auto r = check_directional_gradients(f, {tensor}, directions, h, seed_ + tensors++);
        if (total.checked == 0 || r.max_rel_error > total.max_rel_error) {
          total.max_rel_error = r.max_rel_error;
          total.worst_index = r.worst_index;
          total.worst_analytic = r.worst_analytic;
          total.worst_numeric = r.worst_numeric;
          worst_param_ = pname;
        }
        total.checked += r.checked;
      }
      return total;
    });
  }

  // One joint direction set per top-level module ("encoder", "aligner", ...).
  void check_modules(const std::string& name, double tol, const std::function<Tensor()>& f, ParameterSet& params,
                     std::size_t directions, float h, const std::function<bool(const std::string&)>& filter) {
    std::map<std::string, std::vector<Tensor>> modules;
    for (const auto& [pname, tensor] : params.entries()) {
      if (filter(pname)) modules[pname.substr(0, pname.find('.'))].push_back(tensor);
    }
    run(name, tol, [&] {
      GradCheckResult total;
      std::size_t index = 0;
      for (const auto& [module, tensors] : modules) {
        auto r = check_directional_gradients(f, tensors, directions, h, seed_ + index++);
        if (total.checked == 0 || r.max_rel_error > total.max_rel_error) {
          total.max_rel_error = r.max_rel_error;
          total.worst_index = r.worst_index;
          total.worst_analytic = r.worst_analytic;
          total.worst_numeric = r.worst_numeric;
          worst_param_ = module;
        }
        total.checked += r.checked;
      }
      return total;
    });
  }

  std::uint64_t seed_ = 1;

 private:
  void run(const std::string& name, double tol, const std::function<GradCheckResult()>& body) {
    CheckResult c;
    c.name = name;
    worst_param_.clear();
    try {
      const GradCheckResult r = body();
      c.passed = r.max_rel_error < tol && r.checked > 0;
      c.detail = format_result(r) + (worst_param_.empty() ? "" : " worst_param=" + worst_param_);
    } catch (const std::exception& e) {
      c.passed = false;
      c.detail = std::string("exception: ") + e.what();
    }
    report_.checks.push_back(std::move(c));
  }

  SuiteReport& report_;
  std::string worst_param_;
};

ModelConfig tiny_config() {
  ModelConfig c;
  c.d_model = 8;
  c.heads = 2;
  c.kernel = 3;
  c.window = 2;
  c.aligner_blocks = 1;
  c.encoder_blocks = 1;
  c.decoder_blocks = 1;
  c.duration_blocks = 1;
  c.learner_layers = 2;
  c.predictor_convs = 1;
  c.predictor_blocks = 1;
  c.prosody_dim = 2;
  c.mixtures = 2;
  c.word_dim = 4;
  c.phoneme_inventory = 4;
  return c;
}

CheckResult make_check(const std::string& name, bool passed, const std::string& detail) {
  return CheckResult{name, passed, detail};
}

template <typename Fn>
void guarded(SuiteReport& report, const std::string& name, Fn&& fn) {
  try {
    report.checks.push_back(fn());
  } catch (const std::exception& e) {
    report.checks.push_back(make_check(name, false, std::string("exception: ") + e.what()));
  }
}

std::string num(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

}  // namespace

SuiteReport gradient_suite(std::uint64_t seed) {
  const auto start = Clock::now();
  SuiteReport report;
  report.suite = "gradients";
  GradientRunner g(report);
  g.seed_ = seed;
  Rng rng(seed);
  const double op_tol = 1e-3, block_tol = 1e-2;
  const float block_h = 1e-2f;
  const Projector proj(seed + 100);

  {
    Tensor a = random_tensor({3, 4}, rng), b = random_tensor({4, 5}, rng);
    g.check("matmul", op_tol, [&](const Tensor&) { return proj(matmul(a, b)); }, {a, b});
  }
  {
    Tensor a = random_tensor({3, 4}, rng), b = random_tensor({3, 4}, rng);
    g.check("add", op_tol, [&](const Tensor&) { return proj(add(a, b)); }, {a, b});
    g.check("sub", op_tol, [&](const Tensor&) { return proj(sub(a, b)); }, {a, b});
    g.check("mul", op_tol, [&](const Tensor&) { return proj(mul(a, b)); }, {a, b});
    g.check("scale", op_tol, [&](const Tensor&) { return proj(scale(a, -1.7f)); }, {a});
  }
  {
    Tensor x = random_tensor({4, 3}, rng), bias = random_tensor({3}, rng), w = random_tensor({3, 5}, rng),
           b = random_tensor({5}, rng);
    g.check("add_bias", op_tol, [&](const Tensor&) { return proj(add_bias(x, bias)); }, {x, bias});
    g.check("linear", op_tol, [&](const Tensor&) { return proj(linear(x, w, b)); }, {x, w, b});
  }
  {
    Tensor x = away_from_zero({4, 5}, rng);
    g.check("relu", op_tol, [&](const Tensor&) { return proj(relu(x)); }, {x});
    g.check("dropout", op_tol,
            [&](const Tensor&) {
              Rng mask_rng(seed + 7);
              return proj(dropout(x, 0.3f, mask_rng, true));
            },
            {x});
  }
  {
    Tensor table = random_tensor({5, 3}, rng);
    const std::vector<int> ids{0, 3, 3, 1, 4};
    g.check("embedding", op_tol, [&](const Tensor&) { return proj(embedding(table, ids)); }, {table});
  }
  for (std::size_t k : {1u, 3u, 5u}) {
    Tensor x = random_tensor({6, 3}, rng), kernel = random_tensor({k, 3, 4}, rng, 0.5f);
    g.check("conv1d_k" + std::to_string(k), op_tol, [&](const Tensor&) { return proj(conv1d(x, kernel)); },
            {x, kernel});
  }
  {
    Tensor x = random_tensor({4, 6}, rng), gain = random_tensor({6}, rng), bias = random_tensor({6}, rng);
    g.check("layer_norm", op_tol, [&](const Tensor&) { return proj(layer_norm(x, gain, bias)); }, {x, gain, bias});
  }
  {
    Tensor scores = random_tensor({5, 5}, rng);
    const Mask mask = band_mask(5, 2);
    g.check("masked_softmax", op_tol, [&](const Tensor&) { return proj(masked_softmax(scores, mask)); }, {scores});
  }
  {
    Tensor a = random_tensor({3, 2}, rng), b = random_tensor({3, 4}, rng);
    g.check("concat_cols", op_tol,
            [&](const Tensor&) {
              const std::vector<Tensor> parts{a, b};
              return proj(concat_cols(parts));
            },
            {a, b});
  }
  {
    Tensor x = random_tensor({3, 4}, rng), target = random_tensor({3, 4}, rng);
    for (std::size_t i = 0; i < x.size(); ++i)
      if (std::fabs(x.at(i) - target.at(i)) < 0.1f) x.at(i) += 0.2f;
    g.check("sum", op_tol, [&](const Tensor&) { return scale(sum(mul(x, x)), 0.5f); }, {x});
    g.check("mean", op_tol, [&](const Tensor&) { return mean(mul(x, x)); }, {x});
    g.check("l1_loss", op_tol, [&](const Tensor&) { return l1_loss(x, target); }, {x});
    g.check("mse_loss", op_tol, [&](const Tensor&) { return mse_loss(x, target); }, {x});
  }
  {
    Tensor x = random_tensor({4, 3}, rng);
    const std::vector<int> counts{2, 1, 3, 2};
    g.check("repeat_rows", op_tol, [&](const Tensor&) { return proj(repeat_rows(x, counts)); }, {x});
    Tensor frames = random_tensor({8, 3}, rng);
    g.check("segment_mean", op_tol, [&](const Tensor&) { return proj(segment_mean(frames, counts)); }, {frames});
    g.check("slice_rows", op_tol, [&](const Tensor&) { return proj(slice_rows(frames, 2, 5)); }, {frames});
  }
  {
    const int window = 2;
    std::vector<Tensor> projected;
    for (int c = 0; c < 2 * window + 1; ++c) projected.push_back(random_tensor({5, 3}, rng));
    Tensor keys = random_tensor({5, 3}, rng);
    std::vector<Tensor> inputs = projected;
    inputs.push_back(keys);
    g.check("band_dot", op_tol, [&](const Tensor&) { return proj(band_dot(projected, keys, window)); }, inputs);
    Tensor weights = random_tensor({5, 2 * window + 1}, rng), values = random_tensor({5, 3}, rng);
    g.check("band_apply", op_tol, [&](const Tensor&) { return proj(band_apply(weights, values, window)); },
            {weights, values});
  }
  {
    EmissionStats stats{random_tensor({3, 4}, rng, 0.5f), random_tensor({3, 4}, rng, 0.3f)};
    Tensor mel = random_tensor({6, 4}, rng);
    g.check("forward_sum_loss", op_tol, [&](const Tensor&) { return forward_sum_loss(stats, mel); },
            {stats.mean, stats.log_var});
  }
  {
    const std::size_t mixtures = 3, dim = 2;
    Tensor head = random_tensor({4, mdn_head_width(mixtures, dim)}, rng, 0.5f);
    Tensor target = random_tensor({4, dim}, rng);
    g.check("mdn_nll", op_tol, [&](const Tensor&) { return mdn_nll(head, target, mixtures, dim); }, {head});
  }

  // Composed blocks.
  {
    ParameterSet params;
    BlockConfig cfg{8, 2, 2, 3, 8, 0.0f};
    LocalAttentionBlock block(params, "block", cfg, rng);
    Tensor x = random_tensor({5, 8}, rng);
    g.check("local_attention_block[input]", block_tol, [&](const Tensor&) { return proj(block(x)); }, {x});
    g.check_params("local_attention_block[params]", block_tol, [&] { return proj(block(x)); }, params, 3, block_h);
  }
  {
    ParameterSet params;
    const ModelConfig cfg = tiny_config();
    ProsodyLearner learner(params, "learner", cfg, rng);
    Tensor mel = random_tensor({6, 80}, rng);
    const Alignment a{{2, 3, 1}};
    g.check("prosody_learner[input]", block_tol, [&](const Tensor&) { return proj(learner(mel, a)); }, {mel});
    g.check_params("prosody_learner[params]", block_tol, [&] { return proj(learner(mel, a)); }, params, 3, block_h);
  }
  {
    ParameterSet params;
    const ModelConfig cfg = tiny_config();
    ProsodyPredictor predictor(params, "predictor", cfg, rng);
    StubWordEmbeddings words(cfg.word_dim);
    PhonemeSequence seq{{1, 2, 0, 3}, 4, {"ab", "cd"}, {2, 2}};
    Tensor target = random_tensor({4, cfg.prosody_dim}, rng);
    g.check_params("prosody_predictor[params]", block_tol,
                   [&] { return mdn_nll(predictor(seq, words), target, cfg.mixtures, cfg.prosody_dim); }, params, 3, block_h);
  }
  {
    ModelConfig cfg = tiny_config();
    cfg.d_model = 16;
    TtsModel model(cfg, seed + 3);
    const std::vector<int> ids{0, 2, 1};
    Tensor prosody = random_tensor({3, cfg.d_model}, rng, 0.5f);
    auto f = [&] {
      EncoderOutput out = model.encoder_forward(ids, prosody);
      return add(add(proj(out.hidden), proj(out.log_durations)), add(proj(out.stats.mean), proj(out.stats.log_var)));
    };
    g.check("encoder_forward[prosody]", block_tol, [&](const Tensor&) { return f(); }, {prosody}, block_h);
    g.check_params("encoder_forward[params]", block_tol, f, model.params(), 3,
                   block_h, [](const std::string& n) { return n.rfind("predictor.", 0) != 0 &&
                                                            n.rfind("learner.", 0) != 0 &&
                                                            n.rfind("mapping.", 0) != 0 &&
                                                            n.rfind("decoder.", 0) != 0; });
  }
  {
    TtsModel model(tiny_config(), seed + 5);
    Utterance utt;
    utt.id = "grad";
    utt.phonemes = PhonemeSequence{{1, 3}, 4, {"x"}, {2}};
    utt.mel = random_tensor({6, 80}, rng, 0.5f);
    Stage1LossOptions options;
    g.check_modules("stage1_loss[params]", block_tol, [&] { return stage1_loss(model, utt, options).total; },
                    model.params(), 6, block_h,
                   [](const std::string& n) { return n.rfind("predictor.", 0) != 0; });
  }

  report.seconds = std::chrono::duration<double>(Clock::now() - start).count();
  return report;
}

SuiteReport attention_suite(std::uint64_t seed) {
  const auto start = Clock::now();
  SuiteReport report;
  report.suite = "attention";
  Rng rng(seed);

  // (a) normalization and exact zeros outside the window.
  guarded(report, "softmax_rows_and_band_zeros", [&] {
    double worst_sum = 0.0;
    std::size_t leaks = 0, cases = 0;
    for (std::size_t n : {1u, 2u, 7u, 16u}) {
      for (int window : {0, 1, 3, 20}) {
        ParameterSet params;
        LocalAttention attn(params, "attn", 8, 2, window, rng);
        for (const auto& [name, t] : params.entries()) {
          Tensor p = t;
          for (auto& v : p.data()) v += std::normal_distribution<float>(0.0f, 0.3f)(rng);
        }
        Tensor h = random_tensor({n, 8}, rng);
        for (const Tensor& band : attn.attention_weights(h)) {
          const Tensor dense = band_to_dense(band, window);
          for (std::size_t i = 0; i < n; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
              s += dense.at(i, j);
              const long offset = static_cast<long>(i) - static_cast<long>(j);
              if (std::labs(offset) > window && dense.at(i, j) != 0.0f) ++leaks;
            }
            worst_sum = std::max(worst_sum, std::fabs(s - 1.0));
            // Band cells that point outside the sequence must be exactly 0 too.
            for (int c = 0; c < 2 * window + 1; ++c) {
              const long j = static_cast<long>(i) - (c - window);
              if ((j < 0 || j >= static_cast<long>(n)) && band.at(i, static_cast<std::size_t>(c)) != 0.0f) ++leaks;
            }
          }
          ++cases;
        }
      }
    }
    return make_check("softmax_rows_and_band_zeros", worst_sum <= 1e-6 && leaks == 0,
                      "max_row_sum_error=" + num(worst_sum) + " nonzeros_outside_window=" + std::to_string(leaks) +
                          " heads_checked=" + std::to_string(cases));
  });

  // (b) one shared W for every offset and T >= n - 1 reduces to standard
  // attention with queries q W.
  guarded(report, "tied_matrix_reduces_to_dot_product", [&] {
    double worst = 0.0;
    for (std::size_t n : {1u, 4u, 9u}) {
      for (int extra : {0, 3}) {
        const int window = static_cast<int>(n) - 1 + extra;
        ParameterSet params;
        LocalAttention attn(params, "attn", 8, 2, window, rng);
        for (auto& head : attn.heads) {
          Tensor shared = random_tensor({attn.d_head, attn.d_head}, rng, 0.5f);
          for (auto& w : head.w_loc) std::copy(shared.data().begin(), shared.data().end(), w.data().begin());
        }
        Tensor h = random_tensor({n, 8}, rng);
        const Tensor out = attn(h);
        const oracle::Matrix x = oracle::from_tensor(h);
        oracle::Matrix joined(n, 8);
        for (std::size_t hi = 0; hi < attn.heads.size(); ++hi) {
          const auto& head = attn.heads[hi];
          const oracle::Matrix q =
              oracle::multiply(oracle::multiply(x, oracle::from_tensor(head.w_q)), oracle::from_tensor(head.w_loc[0]));
          const oracle::Matrix k = oracle::multiply(x, oracle::from_tensor(head.w_k));
          const oracle::Matrix v = oracle::multiply(x, oracle::from_tensor(head.w_v));
          const oracle::Matrix o = oracle::scaled_dot_product(q, k, v);
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t d = 0; d < attn.d_head; ++d) joined(i, hi * attn.d_head + d) = o(i, d);
        }
        const oracle::Matrix expected = oracle::multiply(joined, oracle::from_tensor(attn.w_out));
        for (std::size_t i = 0; i < expected.v.size(); ++i)
          worst = std::max(worst, std::fabs(expected.v[i] - out.at(i)));
      }
    }
    return make_check("tied_matrix_reduces_to_dot_product", worst <= 1e-5, "max_abs_error=" + num(worst));
  });

  // (c) banded fast path vs dense-then-mask reference.
  guarded(report, "banded_matches_dense_then_mask", [&] {
    double worst_w = 0.0, worst_o = 0.0;
    for (std::size_t n : {1u, 3u, 12u}) {
      for (int window : {0, 2, 5}) {
        ParameterSet params;
        LocalAttention attn(params, "attn", 8, 2, window, rng);
        for (auto& head : attn.heads)
          for (auto& w : head.w_loc)
            for (auto& v : w.data()) v += std::normal_distribution<float>(0.0f, 0.2f)(rng);
        Tensor h = random_tensor({n, 8}, rng);
        const auto ref = oracle::local_attention(attn, h);
        const auto bands = attn.attention_weights(h);
        for (std::size_t hi = 0; hi < bands.size(); ++hi) {
          const Tensor dense = band_to_dense(bands[hi], window);
          for (std::size_t i = 0; i < n * n; ++i)
            worst_w = std::max(worst_w, std::fabs(ref.weights[hi].v[i] - dense.at(i)));
        }
        const Tensor out = attn(h);
        for (std::size_t i = 0; i < out.size(); ++i) worst_o = std::max(worst_o, std::fabs(ref.output.v[i] - out.at(i)));
      }
    }
    return make_check("banded_matches_dense_then_mask", worst_w <= 1e-6 && worst_o <= 1e-6,
                      "max_weight_error=" + num(worst_w) + " max_output_error=" + num(worst_o));
  });

  // (d) no positional table: any length runs through a fixed block.
  guarded(report, "arbitrary_lengths", [&] {
    ParameterSet params;
    LocalAttentionBlock block(params, "block", BlockConfig{16, 2, 4, 3, 16, 0.0f}, rng);
    std::string lengths;
    bool ok = true;
    for (std::size_t n : {1u, 5u, 50u, 500u}) {
      Tensor y = block(random_tensor({n, 16}, rng));
      bool finite = true;
      for (float v : y.data()) finite = finite && std::isfinite(v);
      ok = ok && y.rows() == n && y.cols() == 16 && finite;
      lengths += (lengths.empty() ? "" : ",") + std::to_string(n);
    }
    return make_check("arbitrary_lengths", ok, "lengths=" + lengths);
  });

  report.seconds = std::chrono::duration<double>(Clock::now() - start).count();
  return report;
}

SuiteReport alignment_suite(std::uint64_t seed) {
  const auto start = Clock::now();
  SuiteReport report;
  report.suite = "alignment";
  Rng rng(seed);

  guarded(report, "forward_sum_matches_enumeration", [&] {
    double worst_ll = 0.0, worst_loss = 0.0, worst_best = 0.0;
    std::size_t invalid = 0, above = 0, instances = 0;
    std::size_t pairs_seen = 0;
    // Every (m, n) pair with 1 <= m <= n <= 6, cycled until 100 instances.
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (std::size_t n = 1; n <= 6; ++n)
      for (std::size_t m = 1; m <= n; ++m) pairs.emplace_back(m, n);
    for (std::size_t k = 0; k < 100; ++k) {
      const auto [m, n] = pairs[k % pairs.size()];
      const std::size_t f = 1 + k % 4;
      EmissionStats stats{random_tensor({m, f}, rng), random_tensor({m, f}, rng, 0.5f)};
      Tensor mel = random_tensor({n, f}, rng);
      const auto truth = oracle::enumerate_segmentations(oracle::emission_table(stats, mel));
      const double ll = forward_sum_log_likelihood(stats, mel);
      const double loss = forward_sum_loss(stats, mel).item();
      worst_ll = std::max(worst_ll, std::fabs(ll - truth.log_sum));
      worst_loss = std::max(worst_loss, std::fabs(-loss - truth.log_sum));
      const ViterbiResult vit = viterbi(stats, mel);
      try {
        vit.alignment.validate(static_cast<long>(n));
        if (vit.alignment.phonemes() != m) ++invalid;
      } catch (const Error&) {
        ++invalid;
      }
      if (vit.log_prob > ll) ++above;
      worst_best = std::max(worst_best, std::fabs(vit.log_prob - truth.best));
      ++instances;
      pairs_seen = std::max(pairs_seen, k + 1);
    }
    const bool ok = worst_ll <= 1e-4 && worst_loss <= 1e-4 && worst_best <= 1e-4 && invalid == 0 && above == 0;
    return make_check("forward_sum_matches_enumeration", ok,
                      "instances=" + std::to_string(instances) + " max_logz_error=" + num(worst_ll) +
                          " max_loss_error=" + num(worst_loss) + " max_viterbi_error=" + num(worst_best) +
                          " invalid_viterbi=" + std::to_string(invalid) +
                          " viterbi_above_forward=" + std::to_string(above));
  });

  guarded(report, "infeasible_alignment_rejected", [&] {
    EmissionStats stats{random_tensor({4, 2}, rng), random_tensor({4, 2}, rng)};
    Tensor mel = random_tensor({3, 2}, rng);
    bool threw = false;
    try {
      forward_sum_log_likelihood(stats, mel);
    } catch (const InvariantError&) {
      threw = true;
    }
    return make_check("infeasible_alignment_rejected", threw, "m=4 n=3");
  });

  guarded(report, "viterbi_tie_prefers_earlier_phoneme", [&] {
    // Identical emissions make every segmentation equally likely.
    EmissionStats stats{Tensor({2, 1}, 0.0f), Tensor({2, 1}, 0.0f)};
    Tensor mel({5, 1}, 0.0f);
    const Alignment a = viterbi_durations(stats, mel);
    return make_check("viterbi_tie_prefers_earlier_phoneme", a.durations == std::vector<int>{4, 1},
                      "durations=" + std::to_string(a.durations[0]) + "," + std::to_string(a.durations[1]));
  });

  report.seconds = std::chrono::duration<double>(Clock::now() - start).count();
  return report;
}

SuiteReport mdn_suite(std::uint64_t seed) {
  const auto start = Clock::now();
  SuiteReport report;
  report.suite = "mdn";
  Rng rng(seed);

  guarded(report, "unit_gaussian_closed_form", [&] {
    double worst = 0.0;
    for (std::size_t dim : {1u, 3u, 6u, 10u}) {
      Tensor target = random_tensor({3, dim}, rng);
      Tensor head({3, mdn_head_width(1, dim)}, 0.0f);
      for (std::size_t i = 0; i < 3; ++i) {
        head.at(i, 0) = 0.7f;  // any logit: one component has weight 1
        for (std::size_t d = 0; d < dim; ++d) head.at(i, 1 + d) = target.at(i, d);
      }
      const double expected = 0.5 * static_cast<double>(dim) * std::log(2.0 * std::numbers::pi);
      worst = std::max(worst, std::fabs(mdn_nll(head, target, 1, dim).item() - expected));
    }
    return make_check("unit_gaussian_closed_form", worst <= 1e-4, "max_abs_error=" + num(worst));
  });

  guarded(report, "nll_matches_reference", [&] {
    double worst = 0.0;
    for (int k = 0; k < 20; ++k) {
      const std::size_t mixtures = 1 + k % 4, dim = 1 + k % 3;
      Tensor head = random_tensor({5, mdn_head_width(mixtures, dim)}, rng);
      if (k % 5 == 0) head.at(0, 1 + dim) = -30.0f;  // exercises the variance floor
      Tensor target = random_tensor({5, dim}, rng);
      const double ref = oracle::mdn_nll(head, target, mixtures, dim);
      worst = std::max(worst, std::fabs(mdn_nll(head, target, mixtures, dim).item() - ref) / std::max(1.0, std::fabs(ref)));
    }
    return make_check("nll_matches_reference", worst <= 1e-5, "max_rel_error=" + num(worst));
  });

  guarded(report, "temperature_zero_returns_means", [&] {
    std::size_t mismatches = 0;
    for (int k = 0; k < 10; ++k) {
      Tensor head = random_tensor({6, mdn_head_width(3, 4)}, rng);
      const MdnParams p = MdnParams::from_head(head, 3, 4);
      Rng sample_rng(seed + static_cast<std::uint64_t>(k));
      const Tensor s = mdn_sample(p, sample_rng, 0.0f, SampleMode::kSample);
      for (std::size_t i = 0; i < p.phonemes; ++i) {
        bool matches_some = false;
        for (std::size_t c = 0; c < p.mixtures; ++c) {
          bool all = true;
          for (std::size_t d = 0; d < p.dim; ++d) all = all && s.at(i, d) == p.mean(i, c, d);
          matches_some = matches_some || all;
        }
        mismatches += matches_some ? 0 : 1;
      }
    }
    return make_check("temperature_zero_returns_means", mismatches == 0, "rows_off_mean=" + std::to_string(mismatches));
  });

  guarded(report, "monte_carlo_mean", [&] {
    const std::size_t samples = 100000;
    Tensor head({1, mdn_head_width(3, 2)}, 0.0f);
    const float values[] = {0.2f, -1.0f, 0.5f, -0.5f, 0.1f,   // logit, mu, log_var
                            -0.4f, 2.0f, -1.5f, 0.3f, -1.0f,  //
                            1.1f, 0.3f, 0.8f, -2.0f, 0.6f};
    std::copy(std::begin(values), std::end(values), head.data().begin());
    const MdnParams p = MdnParams::from_head(head, 3, 2);
    const auto moments = oracle::mixture_moments(p, 0);
    std::vector<double> acc(2, 0.0);
    Rng sample_rng(seed + 99);
    for (std::size_t s = 0; s < samples; ++s) {
      const Tensor x = mdn_sample(p, sample_rng, 1.0f, SampleMode::kSample);
      for (std::size_t d = 0; d < 2; ++d) acc[d] += x.at(0, d);
    }
    double worst_z = 0.0;
    for (std::size_t d = 0; d < 2; ++d) {
      const double mc = acc[d] / static_cast<double>(samples);
      const double se = std::sqrt(moments.variance[d] / static_cast<double>(samples));
      worst_z = std::max(worst_z, std::fabs(mc - moments.mean[d]) / se);
    }
    return make_check("monte_carlo_mean", worst_z < 3.0, "samples=100000 max_standard_errors=" + num(worst_z));
  });

  guarded(report, "argmax_deterministic", [&] {
    Tensor head = random_tensor({4, mdn_head_width(2, 3)}, rng);
    const MdnParams p = MdnParams::from_head(head, 2, 3);
    Rng a(1), b(2);
    const Tensor x = mdn_sample(p, a, 1.0f, SampleMode::kArgmax);
    const Tensor y = mdn_sample(p, b, 1.0f, SampleMode::kArgmax);
    return make_check("argmax_deterministic", x.values() == y.values(), "seeds=1,2");
  });

  report.seconds = std::chrono::duration<double>(Clock::now() - start).count();
  return report;
}

std::vector<std::string> suite_names() { return {"gradients", "attention", "alignment", "mdn"}; }

std::vector<SuiteReport> run_suites(const std::string& name, std::uint64_t seed) {
  std::vector<SuiteReport> out;
  if (name == "gradients" || name == "all") out.push_back(gradient_suite(seed));
  if (name == "attention" || name == "all") out.push_back(attention_suite(seed));
  if (name == "alignment" || name == "all") out.push_back(alignment_suite(seed));
  if (name == "mdn" || name == "all") out.push_back(mdn_suite(seed));
  if (out.empty()) throw ConfigError("unknown suite '" + name + "'; expected gradients, attention, alignment, mdn or all");
  return out;
}

}  // namespace psyn::verify
