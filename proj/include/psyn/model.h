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

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "psyn/alignment.h"
#include "psyn/attention.h"
#include "psyn/config.h"
#include "psyn/features.h"
#include "psyn/prosody.h"

namespace psyn {

// One training or evaluation example.
struct Utterance {
  std::string id;
  PhonemeSequence phonemes;
  Tensor mel;                              // [n x 80]
  std::optional<Alignment> alignment;      // extracted alignment sidecar
  std::vector<int> reference_durations;    // ground truth, synthetic corpora only
  Tensor prosody_target;                   // [m x D_p] once extracted
  bool held_out = false;
};

struct EncoderOutput {
  Tensor hidden;         // [m x d_model]
  EmissionStats stats;   // alignment emissions
  Tensor log_durations;  // [m x 1]
};

// Where the prosody embedding of a reconstruction comes from.
enum class ProsodySource { kLearner, kZero };

// The full system: aligner, phoneme encoder with duration predictor, mel
// decoder, prosody learner/mapping and prosody predictor.
//
// Parameters live in one ParameterSet; the model is not copyable, replicas
// are built from the same config and synchronized with copy_values_from.
class TtsModel {
 public:
  explicit TtsModel(const ModelConfig& config, std::uint64_t seed = 1);
  TtsModel(const TtsModel&) = delete;
  TtsModel& operator=(const TtsModel&) = delete;

  const ModelConfig& config() const { return config_; }
  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }

  // Highest completed training stage (0, 1 or 2).
  int trained_stage() const { return trained_stage_; }
  void set_trained_stage(int stage) { trained_stage_ = stage; }

  Tensor embed_phonemes(std::span<const int> ids) const;
  // Aligner branch: phoneme embeddings only, so alignment does not depend on
  // prosody, which itself needs the alignment for pooling.
  EmissionStats emission_stats(const Tensor& phoneme_embedding, Rng* dropout_rng = nullptr) const;
  // Encoder and duration predictor over phoneme embedding + prosody embedding.
  EncoderOutput encode(const Tensor& phoneme_embedding, const Tensor& prosody_embedding,
                       Rng* dropout_rng = nullptr) const;
  // All three encoder-side outputs for a phoneme sequence.
  EncoderOutput encoder_forward(std::span<const int> ids, const Tensor& prosody_embedding,
                                Rng* dropout_rng = nullptr) const;
  // Length-regulated hidden states -> [n x 80].
  Tensor decoder_forward(const Tensor& expanded, Rng* dropout_rng = nullptr) const;

  Tensor learn_prosody(const Tensor& mel, const Alignment& alignment) const { return learner_(mel, alignment); }
  Tensor map_prosody(const Tensor& representation) const { return mapping_(representation); }
  Tensor predict_prosody(const PhonemeSequence& phonemes, const WordEmbeddingProvider& provider,
                         Rng* dropout_rng = nullptr) const {
    return predictor_(phonemes, provider, dropout_rng);
  }

  const ProsodyLearner& learner() const { return learner_; }
  const ProsodyMapping& mapping() const { return mapping_; }
  const ProsodyPredictor& predictor() const { return predictor_; }
  ProsodyPredictor& predictor() { return predictor_; }

 private:
  ModelConfig config_;
  ParameterSet params_;
  int trained_stage_ = 0;
  Embedding phonemes_;
  LocalAttentionStack aligner_;
  Linear align_mean_;
  Linear align_log_var_;
  LocalAttentionStack encoder_;
  LocalAttentionStack duration_stack_;
  Linear duration_head_;
  LocalAttentionStack decoder_;
  Linear mel_head_;
  ProsodyLearner learner_;
  ProsodyMapping mapping_;
  ProsodyPredictor predictor_;
};

// Prefix of the parameters that stage 2 trains; everything else is frozen.
inline constexpr const char* kPredictorPrefix = "predictor.";

struct Stage1Terms {
  Tensor total;
  Tensor mel_l1;         // undefined during alignment warm-up
  Tensor duration_mse;   // undefined during alignment warm-up
  Tensor align;          // forward-sum loss / n
  Alignment alignment;   // teacher alignment that was used
};

struct Stage1LossOptions {
  float lambda_dur = 0.1f;
  float lambda_align = 1.0f;
  bool align_only = false;      // warm-up phase
  bool use_sidecar_alignment = false;
};

// L = L1(mel) + lambda_dur * MSE(log durations) + lambda_align * forward_sum / n.
// The teacher alignment is the Viterbi path of the current aligner unless
// the utterance sidecar is requested.
Stage1Terms stage1_loss(const TtsModel& model, const Utterance& utt, const Stage1LossOptions& options,
                        Rng* dropout_rng = nullptr);

// Alignment used for teacher forcing: sidecar when present and requested,
// otherwise Viterbi over the aligner's emissions.
Alignment teacher_alignment(const TtsModel& model, const Utterance& utt, bool prefer_sidecar = false);

// Teacher-forced mel reconstruction with the given alignment.
Tensor reconstruct_mel(const TtsModel& model, const Utterance& utt, const Alignment& alignment,
                       ProsodySource source);

// Same, with an explicit prosody representation [m x D_p].
Tensor reconstruct_mel_with(const TtsModel& model, const Utterance& utt, const Alignment& alignment,
                            const Tensor& representation);

double mel_l1(const Tensor& a, const Tensor& b);

struct SynthesisResult {
  MelSpectrogram mel;
  Alignment durations;
  Tensor prosody;  // sampled representation [m x D_p]
};

struct SynthesisOptions {
  std::uint64_t seed = 0;
  float temperature = 1.0f;
  SampleMode mode = SampleMode::kArgmax;
  float duration_scale = 1.0f;
};

// predictor -> mdn_sample -> mapping -> encoder -> durations -> regulator ->
// decoder. Throws StageError unless the model completed stage 2.
SynthesisResult synthesize(const TtsModel& model, const PhonemeSequence& phonemes,
                           const WordEmbeddingProvider& provider, const SynthesisOptions& options);

}  // namespace psyn
