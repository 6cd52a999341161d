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

#include "psyn/model.h"

#include <cmath>

namespace psyn {

TtsModel::TtsModel(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  Rng rng(seed);
  const BlockConfig block = config_.block();
  const std::size_t d = config_.d_model;
  phonemes_ = Embedding(params_, "phoneme", config_.phoneme_inventory, d, rng);
  aligner_ = LocalAttentionStack(params_, "aligner", config_.aligner_blocks, block, rng);
  align_mean_ = Linear(params_, "aligner.mean", d, config_.mel_channels, rng);
  align_log_var_ = Linear(params_, "aligner.log_var", d, config_.mel_channels, rng);
  encoder_ = LocalAttentionStack(params_, "encoder", config_.encoder_blocks, block, rng);
  duration_stack_ = LocalAttentionStack(params_, "duration", config_.duration_blocks, block, rng);
  duration_head_ = Linear(params_, "duration.head", d, 1, rng);
  decoder_ = LocalAttentionStack(params_, "decoder", config_.decoder_blocks, block, rng);
  mel_head_ = Linear(params_, "decoder.mel", d, config_.mel_channels, rng);
  learner_ = ProsodyLearner(params_, "learner", config_, rng);
  mapping_ = ProsodyMapping(params_, "mapping", config_, rng);
  predictor_ = ProsodyPredictor(params_, "predictor", config_, rng);
}

Tensor TtsModel::embed_phonemes(std::span<const int> ids) const { return phonemes_(ids); }

EmissionStats TtsModel::emission_stats(const Tensor& phoneme_embedding, Rng* dropout_rng) const {
  Tensor h = aligner_(phoneme_embedding, dropout_rng);
  return {align_mean_(h), align_log_var_(h)};
}

EncoderOutput TtsModel::encode(const Tensor& phoneme_embedding, const Tensor& prosody_embedding,
                               Rng* dropout_rng) const {
  if (prosody_embedding.shape() != phoneme_embedding.shape()) {
    throw DimensionError("prosody embedding " + shape_to_string(prosody_embedding.shape()) +
                         " does not match phoneme embedding " + shape_to_string(phoneme_embedding.shape()));
  }
  EncoderOutput out;
  out.hidden = encoder_(add(phoneme_embedding, prosody_embedding), dropout_rng);
  out.log_durations = duration_head_(duration_stack_(out.hidden, dropout_rng));
  return out;
}

EncoderOutput TtsModel::encoder_forward(std::span<const int> ids, const Tensor& prosody_embedding,
                                        Rng* dropout_rng) const {
  Tensor emb = embed_phonemes(ids);
  EncoderOutput out = encode(emb, prosody_embedding, dropout_rng);
  out.stats = emission_stats(emb, dropout_rng);
  return out;
}

Tensor TtsModel::decoder_forward(const Tensor& expanded, Rng* dropout_rng) const {
  return mel_head_(decoder_(expanded, dropout_rng));
}

Alignment teacher_alignment(const TtsModel& model, const Utterance& utt, bool prefer_sidecar) {
  if (prefer_sidecar && utt.alignment) {
    utt.alignment->validate(static_cast<long>(utt.mel.rows()));
    return *utt.alignment;
  }
  EmissionStats stats = model.emission_stats(model.embed_phonemes(utt.phonemes.ids));
  return viterbi_durations(stats, utt.mel);
}

Stage1Terms stage1_loss(const TtsModel& model, const Utterance& utt, const Stage1LossOptions& options,
                        Rng* dropout_rng) {
  const auto frames = static_cast<float>(utt.mel.rows());
  Stage1Terms terms;
  Tensor emb = model.embed_phonemes(utt.phonemes.ids);
  EmissionStats stats = model.emission_stats(emb, dropout_rng);
  terms.align = scale(forward_sum_loss(stats, utt.mel), 1.0f / frames);
  if (options.align_only) {
    terms.total = scale(terms.align, options.lambda_align);
    return terms;
  }
  if (options.use_sidecar_alignment && utt.alignment) {
    terms.alignment = *utt.alignment;
    terms.alignment.validate(static_cast<long>(utt.mel.rows()));
  } else {
    terms.alignment = viterbi_durations(stats, utt.mel);
  }

  Tensor representation = model.learn_prosody(utt.mel, terms.alignment);
  EncoderOutput enc = model.encode(emb, model.map_prosody(representation), dropout_rng);
  Tensor predicted = model.decoder_forward(length_regulator(enc.hidden, terms.alignment), dropout_rng);
  terms.mel_l1 = l1_loss(predicted, utt.mel);

  Tensor target_log_d({terms.alignment.phonemes(), 1});
  for (std::size_t i = 0; i < terms.alignment.phonemes(); ++i)
    target_log_d.at(i) = std::log(static_cast<float>(terms.alignment.durations[i]));
  terms.duration_mse = mse_loss(enc.log_durations, target_log_d);

  terms.total = add(add(terms.mel_l1, scale(terms.duration_mse, options.lambda_dur)),
                    scale(terms.align, options.lambda_align));
  return terms;
}

Tensor reconstruct_mel_with(const TtsModel& model, const Utterance& utt, const Alignment& alignment,
                            const Tensor& representation) {
  Tensor emb = model.embed_phonemes(utt.phonemes.ids);
  EncoderOutput enc = model.encode(emb, model.map_prosody(representation));
  return model.decoder_forward(length_regulator(enc.hidden, alignment));
}

Tensor reconstruct_mel(const TtsModel& model, const Utterance& utt, const Alignment& alignment,
                       ProsodySource source) {
  alignment.validate(static_cast<long>(utt.mel.rows()));
  Tensor emb = model.embed_phonemes(utt.phonemes.ids);
  Tensor prosody = source == ProsodySource::kLearner
                       ? model.map_prosody(model.learn_prosody(utt.mel, alignment))
                       : Tensor(emb.shape(), 0.0f);
  EncoderOutput enc = model.encode(emb, prosody);
  return model.decoder_forward(length_regulator(enc.hidden, alignment));
}

double mel_l1(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError("mel_l1: " + shape_to_string(a.shape()) + " vs " + shape_to_string(b.shape()));
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += std::fabs(static_cast<double>(a.at(i)) - b.at(i));
  return acc / static_cast<double>(a.size());
}

SynthesisResult synthesize(const TtsModel& model, const PhonemeSequence& phonemes,
                           const WordEmbeddingProvider& provider, const SynthesisOptions& options) {
  if (model.trained_stage() < 2) {
    throw StageError("the prosody predictor is untrained; run stage-1 training, extract prosody targets, "
                     "then stage-2 training before synthesis");
  }
  phonemes.validate();
  const ModelConfig& cfg = model.config();
  if (phonemes.inventory_size > cfg.phoneme_inventory) {
    throw IndexError("phoneme inventory " + std::to_string(phonemes.inventory_size) + " exceeds model inventory " +
                     std::to_string(cfg.phoneme_inventory));
  }
  Rng rng(options.seed);
  SynthesisResult result;
  Tensor head = model.predict_prosody(phonemes, provider);
  result.prosody = mdn_sample(MdnParams::from_head(head, cfg.mixtures, cfg.prosody_dim), rng,
                              options.temperature, options.mode);
  EncoderOutput enc = model.encoder_forward(phonemes.ids, model.map_prosody(result.prosody));
  result.durations = durations_from_predictor(enc.log_durations.data(), options.duration_scale);
  result.mel.values = model.decoder_forward(length_regulator(enc.hidden, result.durations));
  return result;
}

}  // namespace psyn
