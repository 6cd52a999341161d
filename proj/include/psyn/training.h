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

#include <functional>
#include <limits>
#include <vector>

#include "psyn/config.h"
#include "psyn/model.h"
#include "psyn/optim.h"

namespace psyn {

struct StepRecord {
  int step = 0;  // 1-based
  double loss = 0.0;
  double mel_l1 = 0.0;    // batch mean; 0 during alignment warm-up
  double align = 0.0;     // forward-sum / n, batch mean
  double duration = 0.0;  // log-duration MSE, batch mean
  float lr = 0.0f;
};

using StepCallback = std::function<void(const StepRecord&)>;

struct Stage1Options {
  bool use_sidecar_alignment = false;  // teacher-force with utterance.alignment
};

struct Stage1Result {
  std::vector<StepRecord> curve;
  int steps_run = 0;
  bool stopped_early = false;
  double train_l1 = std::numeric_limits<double>::quiet_NaN();  // last evaluated
};

// Joint training of aligner, encoder, duration predictor, decoder and
// prosody learner on the non-held-out utterances. Utterances of a batch run
// on `train.workers` model replicas; gradients are summed in batch order so
// the result does not depend on the worker count. Marks the model stage 1.
Stage1Result stage1_train(TtsModel& model, Adam& adam, const std::vector<Utterance>& corpus,
                          const TrainConfig& train, const Stage1Options& options = {},
                          const StepCallback& on_step = {});

struct Stage2Result {
  std::vector<StepRecord> curve;  // loss = batch mean NLL
  double initial_nll = 0.0;       // full training set, before any update
  double final_nll = 0.0;
  int best_step = 0;              // step whose predictor weights were kept
  double validation_nll = 0.0;    // at best_step; 0 without a validation subset
};

// Fits the prosody predictor to the extracted targets. A seeded share of the
// training utterances (stage2_validation) is held back and the predictor
// weights with the lowest NLL on it are kept. Every parameter outside the
// predictor stays bit-identical. Marks the model stage 2.
Stage2Result stage2_train(TtsModel& model, Adam& adam, const std::vector<Utterance>& corpus,
                          const WordEmbeddingProvider& provider, const TrainConfig& train,
                          const StepCallback& on_step = {});

// Viterbi alignment of every utterance, stored in utterance.alignment.
void extract_alignments(const TtsModel& model, std::vector<Utterance>& corpus);

// Learner output per utterance (requires utterance.alignment), stored in
// utterance.prosody_target.
void extract_prosody_targets(const TtsModel& model, std::vector<Utterance>& corpus);

// Mean prosody NLL of the predictor over utterances with targets.
double prosody_nll(const TtsModel& model, const std::vector<Utterance>& corpus,
                   const WordEmbeddingProvider& provider);

struct EvalMetrics {
  std::size_t utterances = 0;
  double mel_l1 = 0.0;               // teacher-forced, learner prosody
  double mel_l1_zero_prosody = 0.0;  // same alignment, zero prosody embedding
  double duration_mae = std::numeric_limits<double>::quiet_NaN();            // Viterbi vs reference
  double predicted_duration_mae = std::numeric_limits<double>::quiet_NaN();  // duration predictor vs reference
  double prosody_nll = std::numeric_limits<double>::quiet_NaN();             // stage 2 only
};

// Metrics over the given utterances. Alignment is the model's Viterbi path
// unless `prefer_sidecar` and the utterance carries one. `provider` may be
// null, which skips the prosody NLL.
EvalMetrics evaluate(const TtsModel& model, const std::vector<Utterance>& corpus,
                     const WordEmbeddingProvider* provider, bool prefer_sidecar = false);

std::vector<Utterance> training_split(const std::vector<Utterance>& corpus);
std::vector<Utterance> held_out_split(const std::vector<Utterance>& corpus);

}  // namespace psyn
