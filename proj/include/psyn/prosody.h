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

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "psyn/alignment.h"
#include "psyn/attention.h"
#include "psyn/config.h"
#include "psyn/features.h"

namespace psyn {

// Prosody representations are [m x D_p] tensors, prosody embeddings [m x d_model].

// Mel frames -> residual conv stack -> per-phoneme mean pooling over the
// aligned segment -> linear projection to D_p.
class ProsodyLearner {
 public:
  ProsodyLearner() = default;
  ProsodyLearner(ParameterSet& params, const std::string& name, const ModelConfig& config, Rng& rng);

  Tensor operator()(const Tensor& mel, const Alignment& alignment) const;

  Linear input;                // 80 -> d_model
  std::vector<Conv1d> layers;  // h = h + relu(conv(h))
  Linear output;               // d_model -> D_p
};

// The single affine map D_p -> d_model shared by training and inference.
class ProsodyMapping {
 public:
  ProsodyMapping() = default;
  ProsodyMapping(ParameterSet& params, const std::string& name, const ModelConfig& config, Rng& rng);

  Tensor operator()(const Tensor& representation) const;

  Linear map;
};

// Source of per-word semantic vectors (a pre-trained language model in a
// full system).
class WordEmbeddingProvider {
 public:
  virtual ~WordEmbeddingProvider() = default;
  virtual std::size_t dim() const = 0;
  // One row per word; deterministic for a fixed word list.
  virtual Tensor embed(std::span<const std::string> words) const = 0;
};

// Hash-seeded unit-norm vector per distinct word.
class StubWordEmbeddings : public WordEmbeddingProvider {
 public:
  explicit StubWordEmbeddings(std::size_t dim) : dim_(dim) {}
  std::size_t dim() const override { return dim_; }
  Tensor embed(std::span<const std::string> words) const override;
  std::vector<float> vector_for(const std::string& word) const;

 private:
  std::size_t dim_;
};

std::unique_ptr<WordEmbeddingProvider> stub_word_embeddings(std::size_t dim);

// Each word row repeated over its phoneme span (length_regulator semantics).
Tensor upsample_word_embeddings(const Tensor& words, std::span<const int> spans);

// Per-phoneme Gaussian mixture over the prosody representation. Raw head
// layout per phoneme is C groups of (logit, mean[D], log_var[D]).
struct MdnParams {
  std::size_t phonemes = 0;
  std::size_t mixtures = 0;
  std::size_t dim = 0;
  std::vector<float> logits;    // [m x C]
  std::vector<float> means;     // [m x C x D]
  std::vector<float> log_vars;  // [m x C x D]

  static MdnParams from_head(const Tensor& head, std::size_t mixtures, std::size_t dim);
  std::vector<double> weights(std::size_t phoneme) const;  // softmax of the logits
  float mean(std::size_t i, std::size_t c, std::size_t d) const { return means[(i * mixtures + c) * dim + d]; }
  float log_var(std::size_t i, std::size_t c, std::size_t d) const {
    return log_vars[(i * mixtures + c) * dim + d];
  }
};

inline constexpr float kMdnVarianceFloor = 1e-6f;

std::size_t mdn_head_width(std::size_t mixtures, std::size_t dim);

// Mean over phonemes of -log sum_c pi_c prod_d N(target_d; mu_cd, max(exp(s_cd), 1e-6)).
// Differentiable in `head`; `target` is a constant.
Tensor mdn_nll(const Tensor& head, const Tensor& target, std::size_t mixtures, std::size_t dim);

enum class SampleMode { kSample, kArgmax };

// kArgmax: mean of the heaviest component. kSample: categorical draw, then a
// Gaussian draw with std scaled by `temperature`.
Tensor mdn_sample(const MdnParams& params, Rng& rng, float temperature, SampleMode mode);

// Phoneme embedding -> conv stack -> + projected upsampled word embeddings ->
// local attention stack -> linear MDN head.
class ProsodyPredictor {
 public:
  ProsodyPredictor() = default;
  ProsodyPredictor(ParameterSet& params, const std::string& name, const ModelConfig& config, Rng& rng);

  // Returns the raw head [m x C(1 + 2 D_p)].
  Tensor operator()(const PhonemeSequence& phonemes, const WordEmbeddingProvider& provider,
                    Rng* dropout_rng = nullptr) const;

  Embedding embedding;
  std::vector<Conv1d> convs;
  Linear word_projection;
  LocalAttentionStack blocks;
  Linear head;
  std::size_t mixtures = 0;
  std::size_t dim = 0;
  bool use_word_embeddings = true;
};

}  // namespace psyn
