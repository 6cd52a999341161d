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

#include "psyn/prosody.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace psyn {

ProsodyLearner::ProsodyLearner(ParameterSet& params, const std::string& name, const ModelConfig& config, Rng& rng)
    : input(params, name + ".input", config.mel_channels, config.d_model, rng) {
  for (std::size_t i = 0; i < config.learner_layers; ++i)
    layers.emplace_back(params, name + ".conv" + std::to_string(i), config.kernel, config.d_model, config.d_model,
                        rng);
  output = Linear(params, name + ".output", config.d_model, config.prosody_dim, rng);
}

namespace {

// Same-length convolution over edge-replicated rows, so constant input stays
// constant up to the sequence ends.
Tensor edge_padded(const Conv1d& conv, const Tensor& h) {
  const std::size_t half = conv.kernel.dim(0) / 2;
  if (half == 0) return conv(h);
  std::vector<int> counts(h.rows(), 1);
  counts.front() += static_cast<int>(half);
  counts.back() += static_cast<int>(half);
  return slice_rows(conv(repeat_rows(h, counts)), half, h.rows());
}

}  // namespace

Tensor ProsodyLearner::operator()(const Tensor& mel, const Alignment& alignment) const {
  alignment.validate(static_cast<long>(mel.rows()));
  Tensor h = input(mel);
  for (const auto& conv : layers) h = add(h, relu(edge_padded(conv, h)));
  return output(segment_mean(h, alignment.durations));
}

ProsodyMapping::ProsodyMapping(ParameterSet& params, const std::string& name, const ModelConfig& config, Rng& rng)
    : map(params, name, config.prosody_dim, config.d_model, rng) {}

Tensor ProsodyMapping::operator()(const Tensor& representation) const {
  if (representation.rank() != 2 || representation.cols() != map.weight.rows()) {
    throw DimensionError("prosody representation " + shape_to_string(representation.shape()) +
                         " does not match prosody dimension " + std::to_string(map.weight.rows()));
  }
  return map(representation);
}

namespace {

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace

std::vector<float> StubWordEmbeddings::vector_for(const std::string& word) const {
  Rng rng(fnv1a(word));
  std::normal_distribution<double> dist(0.0, 1.0);
  std::vector<double> v(dim_);
  double norm = 0.0;
  for (auto& x : v) {
    x = dist(rng);
    norm += x * x;
  }
  norm = std::sqrt(norm);
  std::vector<float> out(dim_);
  for (std::size_t i = 0; i < dim_; ++i) out[i] = static_cast<float>(v[i] / norm);
  return out;
}

Tensor StubWordEmbeddings::embed(std::span<const std::string> words) const {
  if (words.empty()) throw InputError("no words to embed");
  Tensor out({words.size(), dim_});
  for (std::size_t r = 0; r < words.size(); ++r) {
    const auto v = vector_for(words[r]);
    std::copy(v.begin(), v.end(), out.data().begin() + static_cast<std::ptrdiff_t>(r * dim_));
  }
  return out;
}

std::unique_ptr<WordEmbeddingProvider> stub_word_embeddings(std::size_t dim) {
  return std::make_unique<StubWordEmbeddings>(dim);
}

Tensor upsample_word_embeddings(const Tensor& words, std::span<const int> spans) {
  if (words.rank() != 2 || spans.size() != words.rows()) {
    throw InvariantError("word spans do not match the " + std::to_string(words.rows()) + " word vectors");
  }
  return length_regulator(words, Alignment{std::vector<int>(spans.begin(), spans.end())});
}

std::size_t mdn_head_width(std::size_t mixtures, std::size_t dim) { return mixtures * (1 + 2 * dim); }

MdnParams MdnParams::from_head(const Tensor& head, std::size_t mixtures, std::size_t dim) {
  const std::size_t width = mdn_head_width(mixtures, dim);
  if (head.rank() != 2 || head.cols() != width) {
    throw DimensionError("MDN head " + shape_to_string(head.shape()) + " does not match " +
                         std::to_string(mixtures) + " mixtures of dimension " + std::to_string(dim));
  }
  MdnParams p;
  p.phonemes = head.rows();
  p.mixtures = mixtures;
  p.dim = dim;
  p.logits.resize(p.phonemes * mixtures);
  p.means.resize(p.phonemes * mixtures * dim);
  p.log_vars.resize(p.phonemes * mixtures * dim);
  for (std::size_t i = 0; i < p.phonemes; ++i) {
    auto row = head.row(i);
    for (std::size_t c = 0; c < mixtures; ++c) {
      const std::size_t base = c * (1 + 2 * dim);
      p.logits[i * mixtures + c] = row[base];
      for (std::size_t d = 0; d < dim; ++d) {
        p.means[(i * mixtures + c) * dim + d] = row[base + 1 + d];
        p.log_vars[(i * mixtures + c) * dim + d] = row[base + 1 + dim + d];
      }
    }
  }
  return p;
}

std::vector<double> MdnParams::weights(std::size_t phoneme) const {
  std::vector<double> w(mixtures);
  double hi = -std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < mixtures; ++c) hi = std::max(hi, static_cast<double>(logits[phoneme * mixtures + c]));
  double z = 0.0;
  for (std::size_t c = 0; c < mixtures; ++c) {
    w[c] = std::exp(logits[phoneme * mixtures + c] - hi);
    z += w[c];
  }
  for (auto& v : w) v /= z;
  return w;
}

Tensor mdn_nll(const Tensor& head, const Tensor& target, std::size_t mixtures, std::size_t dim) {
  const std::size_t width = mdn_head_width(mixtures, dim);
  if (head.rank() != 2 || head.cols() != width) {
    throw DimensionError("MDN head " + shape_to_string(head.shape()) + " does not match width " +
                         std::to_string(width));
  }
  if (target.rank() != 2 || target.rows() != head.rows() || target.cols() != dim) {
    throw DimensionError("MDN target " + shape_to_string(target.shape()) + " does not match head " +
                         shape_to_string(head.shape()));
  }
  const std::size_t m = head.rows();
  const double log_floor = std::log(static_cast<double>(kMdnVarianceFloor));
  const double log_2pi = std::log(2.0 * std::numbers::pi);
  // resp[i][c]: posterior responsibility, prior[i][c]: softmax weight.
  std::vector<double> resp(m * mixtures), prior(m * mixtures);
  double total = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    auto row = head.row(i);
    auto t = target.row(i);
    double hi = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < mixtures; ++c) hi = std::max(hi, static_cast<double>(row[c * (1 + 2 * dim)]));
    double z = 0.0;
    for (std::size_t c = 0; c < mixtures; ++c) z += std::exp(row[c * (1 + 2 * dim)] - hi);
    const double log_z = hi + std::log(z);
    std::vector<double> joint(mixtures);
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < mixtures; ++c) {
      const std::size_t base = c * (1 + 2 * dim);
      const double log_pi = row[base] - log_z;
      prior[i * mixtures + c] = std::exp(log_pi);
      double ll = 0.0;
      for (std::size_t d = 0; d < dim; ++d) {
        const double s = std::max(static_cast<double>(row[base + 1 + dim + d]), log_floor);
        const double diff = static_cast<double>(t[d]) - row[base + 1 + d];
        ll += -0.5 * (log_2pi + s + diff * diff * std::exp(-s));
      }
      joint[c] = log_pi + ll;
      best = std::max(best, joint[c]);
    }
    double acc = 0.0;
    for (double j : joint) acc += std::exp(j - best);
    const double log_mix = best + std::log(acc);
    for (std::size_t c = 0; c < mixtures; ++c) resp[i * mixtures + c] = std::exp(joint[c] - log_mix);
    total -= log_mix;
  }
  Tensor out = Tensor::scalar(static_cast<float>(total / static_cast<double>(m)));
  detail::check_finite(out, "mdn_nll");
  if (detail::should_record({&head})) {
    detail::record(out, [head, target, resp = std::move(resp), prior = std::move(prior), mixtures, dim, m,
                         log_floor](std::span<const float> g) mutable {
      auto dh = head.grad_buffer();
      const std::size_t width = mdn_head_width(mixtures, dim);
      const double coef = g[0] / static_cast<double>(m);
      for (std::size_t i = 0; i < m; ++i) {
        auto row = head.row(i);
        auto t = target.row(i);
        for (std::size_t c = 0; c < mixtures; ++c) {
          const std::size_t base = c * (1 + 2 * dim);
          const double r = resp[i * mixtures + c];
          dh[i * width + base] += static_cast<float>(coef * (prior[i * mixtures + c] - r));
          for (std::size_t d = 0; d < dim; ++d) {
            const double raw_s = row[base + 1 + dim + d];
            const double s = std::max(raw_s, log_floor);
            const double inv_var = std::exp(-s);
            const double diff = static_cast<double>(t[d]) - row[base + 1 + d];
            dh[i * width + base + 1 + d] += static_cast<float>(-coef * r * diff * inv_var);
            if (raw_s > log_floor)
              dh[i * width + base + 1 + dim + d] +=
                  static_cast<float>(-coef * r * (-0.5 + 0.5 * diff * diff * inv_var));
          }
        }
      }
    });
  }
  return out;
}

Tensor mdn_sample(const MdnParams& params, Rng& rng, float temperature, SampleMode mode) {
  if (temperature < 0.0f) throw ConfigError("sampling temperature must be >= 0");
  Tensor out({params.phonemes, params.dim});
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t i = 0; i < params.phonemes; ++i) {
    const auto w = params.weights(i);
    std::size_t chosen = 0;
    if (mode == SampleMode::kArgmax) {
      chosen = static_cast<std::size_t>(std::max_element(w.begin(), w.end()) - w.begin());
    } else {
      std::discrete_distribution<std::size_t> pick(w.begin(), w.end());
      chosen = pick(rng);
    }
    for (std::size_t d = 0; d < params.dim; ++d) {
      double value = params.mean(i, chosen, d);
      if (mode == SampleMode::kSample) {
        const double var = std::max(std::exp(static_cast<double>(params.log_var(i, chosen, d))),
                                    static_cast<double>(kMdnVarianceFloor));
        const double noise = normal(rng);
        if (temperature > 0.0f) value += temperature * std::sqrt(var) * noise;
      }
      out.at(i, d) = static_cast<float>(value);
    }
  }
  return out;
}

ProsodyPredictor::ProsodyPredictor(ParameterSet& params, const std::string& name, const ModelConfig& config,
                                   Rng& rng)
    : embedding(params, name + ".embedding", config.phoneme_inventory, config.d_model, rng),
      mixtures(config.mixtures),
      dim(config.prosody_dim),
      use_word_embeddings(config.use_word_embeddings) {
  for (std::size_t i = 0; i < config.predictor_convs; ++i)
    convs.emplace_back(params, name + ".conv" + std::to_string(i), config.kernel, config.d_model, config.d_model,
                       rng);
  word_projection = Linear(params, name + ".word_projection", config.word_dim, config.d_model, rng);
  blocks = LocalAttentionStack(params, name + ".blocks", config.predictor_blocks, config.block(), rng);
  head = Linear(params, name + ".head", config.d_model, mdn_head_width(config.mixtures, config.prosody_dim), rng);
}

Tensor ProsodyPredictor::operator()(const PhonemeSequence& phonemes, const WordEmbeddingProvider& provider,
                                    Rng* dropout_rng) const {
  Tensor h = embedding(phonemes.ids);
  for (const auto& conv : convs) h = relu(conv(h));
  if (use_word_embeddings) {
    if (provider.dim() != word_projection.weight.rows()) {
      throw DimensionError("word embedding width " + std::to_string(provider.dim()) + " does not match " +
                           std::to_string(word_projection.weight.rows()));
    }
    Tensor words = provider.embed(phonemes.words);
    Tensor upsampled = upsample_word_embeddings(words, phonemes.spans);
    if (upsampled.rows() != h.rows()) throw InvariantError("word spans do not cover the phoneme sequence");
    h = add(h, word_projection(upsampled));
  }
  return head(blocks(h, dropout_rng));
}

}  // namespace psyn
