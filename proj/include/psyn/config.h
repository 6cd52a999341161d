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
#include <filesystem>
#include <map>
#include <string>

#include "psyn/attention.h"

namespace psyn {

struct ModelConfig {
  std::size_t d_model = 64;
  std::size_t heads = 2;
  std::size_t kernel = 3;
  int window = 4;           // maximum relative distance T
  std::size_t d_ff = 0;     // 0: same as d_model
  std::size_t aligner_blocks = 1;
  std::size_t encoder_blocks = 2;
  std::size_t decoder_blocks = 2;
  std::size_t duration_blocks = 1;
  std::size_t learner_layers = 4;
  std::size_t predictor_convs = 3;
  std::size_t predictor_blocks = 2;
  std::size_t prosody_dim = 3;
  std::size_t mixtures = 2;
  std::size_t word_dim = 32;
  std::size_t phoneme_inventory = 0;
  std::size_t mel_channels = 80;
  float dropout = 0.0f;
  bool use_word_embeddings = true;

  static ModelConfig desk();
  static ModelConfig paper();

  std::size_t ff_width() const { return d_ff == 0 ? d_model : d_ff; }
  BlockConfig block() const;
  // Throws ConfigError naming the first bad field.
  void validate() const;
};

struct TrainConfig {
  int steps = 2000;
  int batch_size = 16;
  int workers = 1;
  std::uint64_t seed = 1;
  float lambda_dur = 0.1f;
  float lambda_align = 1.0f;
  float align_warmup_fraction = 0.2f;  // leading share of steps with alignment loss only
  float lr_scale = 0.2f;
  int lr_warmup = 100;
  float adam_beta1 = 0.9f;
  float adam_beta2 = 0.98f;
  float adam_eps = 1e-9f;
  float target_l1 = 0.0f;  // > 0: stop early once training mel L1 drops below it
  int eval_every = 100;
  int stage2_steps = 1500;
  float stage2_validation = 0.1f;  // share of training utterances for stage-2 early stopping

  void validate() const;
};

// Flat key=value settings with '#' comments.
using Settings = std::map<std::string, std::string>;

Settings parse_settings(const std::string& text);
Settings load_settings(const std::filesystem::path& path);
// Applies known keys; throws ConfigError on an unknown key or bad value.
void apply_settings(const Settings& settings, ModelConfig& model, TrainConfig& train);
std::string model_config_to_settings(const ModelConfig& config);
std::string train_config_to_settings(const TrainConfig& config);

}  // namespace psyn
