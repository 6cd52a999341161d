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

#include "psyn/config.h"

#include <fstream>
#include <functional>
#include <sstream>

namespace psyn {

ModelConfig ModelConfig::desk() { return ModelConfig{}; }

ModelConfig ModelConfig::paper() {
  ModelConfig c;
  c.d_model = 768;
  c.heads = 2;
  c.kernel = 3;
  c.window = 10;
  c.aligner_blocks = 6;
  c.encoder_blocks = 6;
  c.decoder_blocks = 6;
  c.duration_blocks = 3;
  c.learner_layers = 4;
  c.predictor_blocks = 4;
  c.prosody_dim = 3;
  c.mixtures = 4;
  c.word_dim = 768;
  c.dropout = 0.1f;
  return c;
}

BlockConfig ModelConfig::block() const {
  return BlockConfig{d_model, heads, window, kernel, ff_width(), dropout};
}

void ModelConfig::validate() const {
  auto positive = [](std::size_t v, const char* name) {
    if (v == 0) throw ConfigError(std::string(name) + " must be >= 1");
  };
  positive(d_model, "d_model");
  positive(heads, "heads");
  if (d_model % heads != 0) throw ConfigError("d_model must be divisible by heads");
  if (kernel % 2 == 0) throw ConfigError("kernel must be odd");
  if (window < 0) throw ConfigError("window must be >= 0");
  positive(aligner_blocks, "aligner_blocks");
  positive(encoder_blocks, "encoder_blocks");
  positive(decoder_blocks, "decoder_blocks");
  positive(duration_blocks, "duration_blocks");
  positive(learner_layers, "learner_layers");
  positive(predictor_convs, "predictor_convs");
  positive(predictor_blocks, "predictor_blocks");
  positive(prosody_dim, "prosody_dim");
  positive(mixtures, "mixtures");
  positive(word_dim, "word_dim");
  positive(phoneme_inventory, "phoneme_inventory");
  if (mel_channels != 80) throw ConfigError("mel_channels must be 80");
  if (dropout < 0.0f || dropout >= 1.0f) throw ConfigError("dropout must lie in [0, 1)");
}

void TrainConfig::validate() const {
  if (steps < 1) throw ConfigError("steps must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (workers < 1) throw ConfigError("workers must be >= 1");
  if (align_warmup_fraction < 0.0f || align_warmup_fraction >= 1.0f)
    throw ConfigError("align_warmup_fraction must lie in [0, 1)");
  if (lr_warmup < 1) throw ConfigError("lr_warmup must be >= 1");
  if (eval_every < 1) throw ConfigError("eval_every must be >= 1");
  if (stage2_steps < 1) throw ConfigError("stage2_steps must be >= 1");
  if (stage2_validation < 0.0f || stage2_validation >= 1.0f)
    throw ConfigError("stage2_validation must lie in [0, 1)");
}

Settings parse_settings(const std::string& text) {
  Settings out;
  std::istringstream in(text);
  int line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      if (b == std::string::npos) return std::string();
      const auto e = s.find_last_not_of(" \t\r");
      return s.substr(b, e - b + 1);
    };
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(line_no) + ": expected key=value");
    out[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return out;
}

Settings load_settings(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_settings(ss.str());
}

namespace {

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  std::istringstream is(value);
  T out{};
  is >> out;
  if (!is || !is.eof()) throw ConfigError("bad value '" + value + "' for " + key);
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "1" || value == "true") return true;
  if (value == "0" || value == "false") return false;
  throw ConfigError("bad boolean '" + value + "' for " + key);
}

}  // namespace

void apply_settings(const Settings& settings, ModelConfig& m, TrainConfig& t) {
  using Setter = std::function<void(const std::string&, const std::string&)>;
  auto size = [](std::size_t& field) -> Setter {
    return [&field](const std::string& k, const std::string& v) { field = parse_number<std::size_t>(k, v); };
  };
  auto integer = [](int& field) -> Setter {
    return [&field](const std::string& k, const std::string& v) { field = parse_number<int>(k, v); };
  };
  auto real = [](float& field) -> Setter {
    return [&field](const std::string& k, const std::string& v) { field = parse_number<float>(k, v); };
  };
  const std::map<std::string, Setter> table = {
      {"d_model", size(m.d_model)},
      {"heads", size(m.heads)},
      {"kernel", size(m.kernel)},
      {"window", integer(m.window)},
      {"d_ff", size(m.d_ff)},
      {"aligner_blocks", size(m.aligner_blocks)},
      {"encoder_blocks", size(m.encoder_blocks)},
      {"decoder_blocks", size(m.decoder_blocks)},
      {"duration_blocks", size(m.duration_blocks)},
      {"learner_layers", size(m.learner_layers)},
      {"predictor_convs", size(m.predictor_convs)},
      {"predictor_blocks", size(m.predictor_blocks)},
      {"prosody_dim", size(m.prosody_dim)},
      {"mixtures", size(m.mixtures)},
      {"word_dim", size(m.word_dim)},
      {"phoneme_inventory", size(m.phoneme_inventory)},
      {"mel_channels", size(m.mel_channels)},
      {"dropout", real(m.dropout)},
      {"use_word_embeddings",
       [&m](const std::string& k, const std::string& v) { m.use_word_embeddings = parse_bool(k, v); }},
      {"steps", integer(t.steps)},
      {"batch_size", integer(t.batch_size)},
      {"workers", integer(t.workers)},
      {"seed", [&t](const std::string& k, const std::string& v) { t.seed = parse_number<std::uint64_t>(k, v); }},
      {"lambda_dur", real(t.lambda_dur)},
      {"lambda_align", real(t.lambda_align)},
      {"align_warmup_fraction", real(t.align_warmup_fraction)},
      {"lr_scale", real(t.lr_scale)},
      {"lr_warmup", integer(t.lr_warmup)},
      {"adam_beta1", real(t.adam_beta1)},
      {"adam_beta2", real(t.adam_beta2)},
      {"adam_eps", real(t.adam_eps)},
      {"target_l1", real(t.target_l1)},
      {"eval_every", integer(t.eval_every)},
      {"stage2_steps", integer(t.stage2_steps)},
      {"stage2_validation", real(t.stage2_validation)},
  };
  for (const auto& [key, value] : settings) {
    auto it = table.find(key);
    if (it == table.end()) throw ConfigError("unknown config key '" + key + "'");
    it->second(key, value);
  }
}

std::string model_config_to_settings(const ModelConfig& c) {
  std::ostringstream os;
  os.precision(9);
  os << "d_model=" << c.d_model << "\nheads=" << c.heads << "\nkernel=" << c.kernel << "\nwindow=" << c.window
     << "\nd_ff=" << c.d_ff << "\naligner_blocks=" << c.aligner_blocks << "\nencoder_blocks=" << c.encoder_blocks
     << "\ndecoder_blocks=" << c.decoder_blocks << "\nduration_blocks=" << c.duration_blocks
     << "\nlearner_layers=" << c.learner_layers << "\npredictor_convs=" << c.predictor_convs
     << "\npredictor_blocks=" << c.predictor_blocks << "\nprosody_dim=" << c.prosody_dim
     << "\nmixtures=" << c.mixtures << "\nword_dim=" << c.word_dim << "\nphoneme_inventory=" << c.phoneme_inventory
     << "\nmel_channels=" << c.mel_channels << "\ndropout=" << c.dropout
     << "\nuse_word_embeddings=" << (c.use_word_embeddings ? 1 : 0) << '\n';
  return os.str();
}

std::string train_config_to_settings(const TrainConfig& t) {
  std::ostringstream os;
  os.precision(9);
  os << "steps=" << t.steps << "\nbatch_size=" << t.batch_size << "\nworkers=" << t.workers << "\nseed=" << t.seed
     << "\nlambda_dur=" << t.lambda_dur << "\nlambda_align=" << t.lambda_align
     << "\nalign_warmup_fraction=" << t.align_warmup_fraction << "\nlr_scale=" << t.lr_scale
     << "\nlr_warmup=" << t.lr_warmup << "\nadam_beta1=" << t.adam_beta1 << "\nadam_beta2=" << t.adam_beta2
     << "\nadam_eps=" << t.adam_eps << "\ntarget_l1=" << t.target_l1 << "\neval_every=" << t.eval_every
     << "\nstage2_steps=" << t.stage2_steps << "\nstage2_validation=" << t.stage2_validation << '\n';
  return os.str();
}

}  // namespace psyn
