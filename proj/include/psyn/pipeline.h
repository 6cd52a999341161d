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

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "psyn/checkpoint.h"
#include "psyn/config.h"
#include "psyn/corpus.h"
#include "psyn/training.h"

namespace psyn {

// Ordered key=value record, printed as one line.
class Metrics {
 public:
  Metrics& add(const std::string& key, const std::string& value);
  Metrics& add(const std::string& key, double value);
  Metrics& add(const std::string& key, long value);
  Metrics& add(const std::string& key, int value) { return add(key, static_cast<long>(value)); }
  Metrics& add(const std::string& key, std::size_t value) { return add(key, static_cast<long>(value)); }

  const std::vector<std::pair<std::string, std::string>>& fields() const { return fields_; }
  // Throws InputError when the key is absent.
  const std::string& get(const std::string& key) const;
  double number(const std::string& key) const { return std::stod(get(key)); }
  std::string line() const;

 private:
  std::vector<std::pair<std::string, std::string>> fields_;
};

struct RunSettings {
  ModelConfig model;
  TrainConfig train;
};

// "desk" or "paper"; anything else is a ConfigError.
RunSettings preset_settings(const std::string& name);
// Preset, then the optional config file, then the overrides, each on top of the last.
RunSettings resolve_settings(const std::string& preset, const std::optional<std::filesystem::path>& config_file,
                             const Settings& overrides);

struct LoadedCorpus {
  Manifest manifest;
  std::vector<Utterance> utterances;
};
LoadedCorpus load_corpus(const std::filesystem::path& manifest_path);

// `progress` receives one key=value line every eval_every steps when non-null.
Metrics train_stage1(const std::filesystem::path& manifest_path, const std::filesystem::path& out,
                     const RunSettings& settings, bool use_sidecar_alignment, std::ostream* progress);

// Stage-1 checkpoint in, stage-2 checkpoint out. Targets come from the
// manifest's prosody fields. Only training keys may appear in `overrides`.
Metrics train_stage2(const std::filesystem::path& checkpoint, const std::filesystem::path& manifest_path,
                     const std::filesystem::path& out, const Settings& overrides, std::ostream* progress);

// Viterbi durations for every entry, written to dur/<id>.dur next to the
// manifest and recorded in it.
Metrics align_corpus(const std::filesystem::path& checkpoint, const std::filesystem::path& manifest_path);

// Learner outputs for every entry, written to prosody/<id>.pros and recorded
// in the manifest. Uses the duration sidecar when present, else Viterbi.
Metrics extract_prosody(const std::filesystem::path& checkpoint, const std::filesystem::path& manifest_path);

// Held-out split metrics.
Metrics evaluate_checkpoint(const std::filesystem::path& checkpoint, const std::filesystem::path& manifest_path);

SynthesisResult synthesize_text(const TtsModel& model, const std::string& text, const Lexicon& lexicon,
                                const SynthesisOptions& options);

struct SweepEntry {
  std::size_t prosody_dim = 0;
  Metrics metrics;
};

// Stage 1 once per representation width, each from the same seed. Writes
// dp<k>.ckpt and sweep.txt (one key=value line per run) under `out`. A run counts as converged when its
// training L1 ends below train.target_l1 (0.05 when unset).
std::vector<SweepEntry> prosody_dim_sweep(const std::filesystem::path& manifest_path,
                                          const std::filesystem::path& out, RunSettings settings,
                                          const std::vector<std::size_t>& dims, std::ostream* progress);

}  // namespace psyn
