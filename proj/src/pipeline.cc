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

#include "psyn/pipeline.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "psyn/errors.h"

namespace psyn {

namespace fs = std::filesystem;

Metrics& Metrics::add(const std::string& key, const std::string& value) {
  fields_.emplace_back(key, value);
  return *this;
}

Metrics& Metrics::add(const std::string& key, double value) {
  std::ostringstream os;
  os << std::setprecision(6) << value;
  return add(key, os.str());
}

Metrics& Metrics::add(const std::string& key, long value) { return add(key, std::to_string(value)); }

const std::string& Metrics::get(const std::string& key) const {
  for (const auto& [k, v] : fields_)
    if (k == key) return v;
  throw InputError("no metric '" + key + "'");
}

std::string Metrics::line() const {
  std::string out;
  for (const auto& [k, v] : fields_) {
    if (!out.empty()) out += ' ';
    out += k + '=' + v;
  }
  return out;
}

RunSettings preset_settings(const std::string& name) {
  if (name == "desk") return RunSettings{ModelConfig::desk(), TrainConfig{}};
  if (name == "paper") return RunSettings{ModelConfig::paper(), TrainConfig{}};
  throw ConfigError("unknown preset '" + name + "' (expected desk or paper)");
}

RunSettings resolve_settings(const std::string& preset, const std::optional<fs::path>& config_file,
                             const Settings& overrides) {
  RunSettings s = preset_settings(preset);
  if (config_file) apply_settings(load_settings(*config_file), s.model, s.train);
  apply_settings(overrides, s.model, s.train);
  return s;
}

LoadedCorpus load_corpus(const fs::path& manifest_path) {
  LoadedCorpus c;
  c.manifest = load_manifest(manifest_path);
  c.utterances = load_utterances(c.manifest);
  return c;
}

namespace {

StepCallback progress_printer(std::ostream* progress, int stage, int every) {
  if (!progress) return {};
  return [progress, stage, every](const StepRecord& r) {
    if (r.step % std::max(every, 1) != 0) return;
    Metrics m;
    m.add("stage", stage).add("step", r.step).add("loss", r.loss);
    if (stage == 1) m.add("mel_l1", r.mel_l1).add("align", r.align).add("duration", r.duration);
    m.add("lr", static_cast<double>(r.lr));
    *progress << m.line() << '\n' << std::flush;
  };
}

void add_eval(Metrics& m, const EvalMetrics& e, const std::string& prefix) {
  m.add(prefix + "utterances", e.utterances);
  m.add(prefix + "mel_l1", e.mel_l1);
  m.add(prefix + "mel_l1_zero_prosody", e.mel_l1_zero_prosody);
  if (!std::isnan(e.duration_mae)) {
    m.add(prefix + "duration_mae", e.duration_mae);
    m.add(prefix + "predicted_duration_mae", e.predicted_duration_mae);
  }
  if (!std::isnan(e.prosody_nll)) m.add(prefix + "prosody_nll", e.prosody_nll);
}

void require_inventory(const TtsModel& model, const Manifest& manifest) {
  if (model.config().phoneme_inventory != manifest.inventory_size) {
    throw InputError("manifest inventory " + std::to_string(manifest.inventory_size) +
                     " does not match the checkpoint inventory " +
                     std::to_string(model.config().phoneme_inventory));
  }
}

std::string entry_file(const std::string& dir, const std::string& id, const std::string& ext) {
  return dir + "/" + id + ext;
}

}  // namespace

Metrics train_stage1(const fs::path& manifest_path, const fs::path& out, const RunSettings& settings,
                     bool use_sidecar_alignment, std::ostream* progress) {
  LoadedCorpus corpus = load_corpus(manifest_path);
  ModelConfig config = settings.model;
  config.phoneme_inventory = corpus.manifest.inventory_size;
  config.validate();
  settings.train.validate();

  TtsModel model(config, settings.train.seed);
  Adam adam(settings.train.adam_beta1, settings.train.adam_beta2, settings.train.adam_eps);
  Stage1Options options;
  options.use_sidecar_alignment = use_sidecar_alignment;
  const Stage1Result r = stage1_train(model, adam, corpus.utterances, settings.train, options,
                                      progress_printer(progress, 1, settings.train.eval_every));
  save_checkpoint(out, model, adam, settings.train, r.steps_run);

  Metrics m;
  m.add("stage", 1).add("steps", r.steps_run).add("stopped_early", r.stopped_early ? 1 : 0);
  m.add("final_loss", r.curve.empty() ? 0.0 : r.curve.back().loss);
  m.add("train_mel_l1", r.train_l1);
  const auto held = held_out_split(corpus.utterances);
  if (!held.empty()) add_eval(m, evaluate(model, held, nullptr, use_sidecar_alignment), "test_");
  m.add("checkpoint", out.string());
  return m;
}

Metrics train_stage2(const fs::path& checkpoint, const fs::path& manifest_path, const fs::path& out,
                     const Settings& overrides, std::ostream* progress) {
  Checkpoint ck = load_checkpoint(checkpoint);
  TtsModel& model = *ck.model;
  if (model.trained_stage() < 1)
    throw StageError("stage 2 needs a stage-1 checkpoint; " + checkpoint.string() + " has not finished stage 1");
  ModelConfig config = model.config();
  TrainConfig train = ck.train;
  apply_settings(overrides, config, train);
  if (model_config_to_settings(config) != model_config_to_settings(model.config()))
    throw ConfigError("model settings cannot change in stage 2");
  train.validate();

  LoadedCorpus corpus = load_corpus(manifest_path);
  require_inventory(model, corpus.manifest);
  for (const auto& u : corpus.utterances) {
    if (!u.held_out && !u.prosody_target.defined())
      throw InputError("manifest entry '" + u.id + "' has no prosody target; run extract-prosody first");
  }
  auto words = stub_word_embeddings(config.word_dim);
  Adam adam(train.adam_beta1, train.adam_beta2, train.adam_eps);
  const Stage2Result r =
      stage2_train(model, adam, corpus.utterances, *words, train, progress_printer(progress, 2, train.eval_every));
  save_checkpoint(out, model, adam, train, ck.step);

  Metrics m;
  m.add("stage", 2).add("steps", static_cast<long>(r.curve.size()));
  m.add("initial_nll", r.initial_nll).add("final_nll", r.final_nll);
  m.add("best_step", r.best_step).add("validation_nll", r.validation_nll);
  m.add("nll_reduction", (r.initial_nll - r.final_nll) / std::max(1e-12, std::fabs(r.initial_nll)));
  m.add("checkpoint", out.string());
  return m;
}

Metrics align_corpus(const fs::path& checkpoint, const fs::path& manifest_path) {
  Checkpoint ck = load_checkpoint(checkpoint);
  if (ck.model->trained_stage() < 1) throw StageError("alignment needs a stage-1 checkpoint");
  LoadedCorpus corpus = load_corpus(manifest_path);
  require_inventory(*ck.model, corpus.manifest);
  double err = 0.0;
  std::size_t compared = 0;
  for (std::size_t k = 0; k < corpus.utterances.size(); ++k) {
    const Utterance& u = corpus.utterances[k];
    ManifestEntry& e = corpus.manifest.entries[k];
    const Alignment a = teacher_alignment(*ck.model, u, false);
    e.durations = entry_file("dur", e.id, ".dur");
    write_durations(corpus.manifest.resolve(e.durations), a);
    if (u.reference_durations.size() == a.phonemes()) {
      for (std::size_t i = 0; i < a.phonemes(); ++i) err += std::abs(a.durations[i] - u.reference_durations[i]);
      compared += a.phonemes();
    }
  }
  save_manifest(manifest_path, corpus.manifest);
  Metrics m;
  m.add("aligned", corpus.utterances.size());
  if (compared > 0) m.add("duration_mae", err / static_cast<double>(compared));
  return m;
}

Metrics extract_prosody(const fs::path& checkpoint, const fs::path& manifest_path) {
  Checkpoint ck = load_checkpoint(checkpoint);
  if (ck.model->trained_stage() < 1) throw StageError("prosody extraction needs a stage-1 checkpoint");
  LoadedCorpus corpus = load_corpus(manifest_path);
  require_inventory(*ck.model, corpus.manifest);
  for (auto& u : corpus.utterances)
    if (!u.alignment) u.alignment = teacher_alignment(*ck.model, u, false);
  extract_prosody_targets(*ck.model, corpus.utterances);
  for (std::size_t k = 0; k < corpus.utterances.size(); ++k) {
    ManifestEntry& e = corpus.manifest.entries[k];
    e.prosody = entry_file("prosody", e.id, ".pros");
    write_prosody(corpus.manifest.resolve(e.prosody), corpus.utterances[k].prosody_target);
  }
  save_manifest(manifest_path, corpus.manifest);
  Metrics m;
  m.add("extracted", corpus.utterances.size()).add("prosody_dim", ck.model->config().prosody_dim);
  return m;
}

Metrics evaluate_checkpoint(const fs::path& checkpoint, const fs::path& manifest_path) {
  Checkpoint ck = load_checkpoint(checkpoint);
  if (ck.model->trained_stage() < 1) throw StageError("evaluation needs a stage-1 checkpoint");
  LoadedCorpus corpus = load_corpus(manifest_path);
  require_inventory(*ck.model, corpus.manifest);
  auto held = held_out_split(corpus.utterances);
  if (held.empty()) throw InputError("manifest has no test-split entries");
  // Held-out NLL is measured against the learner's own representation.
  for (auto& u : held) u.prosody_target = Tensor();
  auto words = stub_word_embeddings(ck.model->config().word_dim);
  Metrics m;
  m.add("stage", ck.model->trained_stage());
  add_eval(m, evaluate(*ck.model, held, words.get(), false), "test_");
  return m;
}

SynthesisResult synthesize_text(const TtsModel& model, const std::string& text, const Lexicon& lexicon,
                                const SynthesisOptions& options) {
  const PhonemeSequence seq = text_to_phonemes(text, lexicon);
  auto words = stub_word_embeddings(model.config().word_dim);
  return synthesize(model, seq, *words, options);
}

std::vector<SweepEntry> prosody_dim_sweep(const fs::path& manifest_path, const fs::path& out, RunSettings settings,
                                          const std::vector<std::size_t>& dims, std::ostream* progress) {
  if (dims.empty()) throw ConfigError("sweep needs at least one prosody dimension");
  if (settings.train.target_l1 <= 0.0f) settings.train.target_l1 = 0.05f;
  fs::create_directories(out);
  std::vector<SweepEntry> entries;
  std::ostringstream report;
  for (std::size_t dim : dims) {
    RunSettings s = settings;
    s.model.prosody_dim = dim;
    const fs::path ckpt = out / ("dp" + std::to_string(dim) + ".ckpt");
    Metrics run = train_stage1(manifest_path, ckpt, s, false, progress);
    SweepEntry e;
    e.prosody_dim = dim;
    e.metrics.add("prosody_dim", dim);
    for (const auto& [k, v] : run.fields())
      if (k != "stage" && k != "checkpoint") e.metrics.add(k, v);
    e.metrics.add("converged", run.number("train_mel_l1") < settings.train.target_l1 ? 1 : 0);
    report << e.metrics.line() << '\n';
    entries.push_back(std::move(e));
  }
  std::ofstream(out / "sweep.txt") << report.str();
  return entries;
}

}  // namespace psyn
