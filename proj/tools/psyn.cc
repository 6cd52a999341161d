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

// psyn command-line driver. Every command prints key=value lines on stdout
// and exits 0 on success, 1 on validation errors, 2 on numeric failures.

#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "psyn/corpus.h"
#include "psyn/errors.h"
#include "psyn/pipeline.h"
#include "psyn/verify/suites.h"

namespace fs = std::filesystem;
using namespace psyn;

namespace {

// Flags shared by train and sweep.
struct ConfigFlags {
  std::string preset = "desk";
  std::string config;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::optional<int> steps;
  std::optional<int> workers;

  void attach(CLI::App* cmd) {
    cmd->add_option("--preset", preset, "desk or paper")->check(CLI::IsMember({"desk", "paper"}));
    cmd->add_option("--config", config, "key=value config file")->check(CLI::ExistingFile);
    cmd->add_option("--set", sets, "override, key=value (repeatable)");
    cmd->add_option("--seed", seed);
    cmd->add_option("--steps", steps);
    cmd->add_option("--workers", workers);
  }

  Settings overrides() const {
    Settings s;
    for (const auto& kv : sets) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects key=value, got '" + kv + "'");
      s[kv.substr(0, eq)] = kv.substr(eq + 1);
    }
    if (seed) s["seed"] = std::to_string(*seed);
    if (steps) s["steps"] = std::to_string(*steps);
    if (workers) s["workers"] = std::to_string(*workers);
    return s;
  }

  RunSettings resolve() const {
    return resolve_settings(preset, config.empty() ? std::nullopt : std::optional<fs::path>(config), overrides());
  }
};

int print(const Metrics& m) {
  std::cout << m.line() << '\n';
  return 0;
}

SampleMode parse_mode(const std::string& mode) { return mode == "sample" ? SampleMode::kSample : SampleMode::kArgmax; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"psyn: feed-forward TTS with local attention and learned prosody"};
  app.require_subcommand(1);

  // prepare
  auto* prepare = app.add_subcommand("prepare", "build a corpus (MELB files + manifest)");
  bool synthetic = false;
  std::string wav_dir, prep_out;
  double split = 0.98;
  std::uint64_t prep_seed = 1;
  std::size_t utterances = 100;
  auto* syn_flag = prepare->add_flag("--synthetic", synthetic, "generate the toy corpus");
  auto* wav_opt = prepare->add_option("--wav-dir", wav_dir, "directory of <name>.wav + <name>.txt");
  syn_flag->excludes(wav_opt);
  prepare->add_option("--out", prep_out)->required();
  prepare->add_option("--split", split, "training fraction");
  prepare->add_option("--seed", prep_seed);
  prepare->add_option("--utterances", utterances, "synthetic corpus size");

  // train
  auto* train = app.add_subcommand("train", "stage-1 or stage-2 training");
  int stage = 0;
  std::string manifest, out, checkpoint;
  bool sidecar = false;
  ConfigFlags train_flags;
  train->add_option("--stage", stage)->required()->check(CLI::IsMember({1, 2}));
  train->add_option("--manifest", manifest)->required();
  train->add_option("--out", out, "checkpoint to write")->required();
  train->add_option("--checkpoint", checkpoint, "stage-1 checkpoint (stage 2)");
  train->add_flag("--sidecar-alignment", sidecar, "teacher-force with manifest duration sidecars");
  train_flags.attach(train);

  // align / extract-prosody / eval
  auto* align = app.add_subcommand("align", "write Viterbi duration sidecars");
  align->add_option("--checkpoint", checkpoint)->required();
  align->add_option("--manifest", manifest)->required();
  auto* extract = app.add_subcommand("extract-prosody", "write per-utterance prosody targets");
  extract->add_option("--checkpoint", checkpoint)->required();
  extract->add_option("--manifest", manifest)->required();
  auto* eval = app.add_subcommand("eval", "held-out metrics");
  eval->add_option("--checkpoint", checkpoint)->required();
  eval->add_option("--manifest", manifest)->required();

  // synth
  auto* synth = app.add_subcommand("synth", "synthesize mel spectrograms");
  std::string text, lexicon_path, mode = "argmax";
  SynthesisOptions synth_options;
  synth->add_option("--checkpoint", checkpoint)->required();
  auto* text_opt = synth->add_option("--text", text, "text to synthesize");
  auto* manifest_opt = synth->add_option("--manifest", manifest, "synthesize every test-split entry");
  text_opt->excludes(manifest_opt);
  synth->add_option("--lexicon", lexicon_path, "lexicon for --text");
  synth->add_option("--mode", mode)->check(CLI::IsMember({"argmax", "sample"}));
  synth->add_option("--seed", synth_options.seed);
  synth->add_option("--temperature", synth_options.temperature)->check(CLI::NonNegativeNumber);
  synth->add_option("--duration-scale", synth_options.duration_scale)->check(CLI::PositiveNumber);
  synth->add_option("--out", out, "MELB file (--text) or directory (--manifest)")->required();

  // verify
  auto* verify = app.add_subcommand("verify", "run the property suites");
  std::string suite = "all";
  std::uint64_t verify_seed = 1;
  bool verbose = false;
  verify->add_option("--suite", suite)->check(CLI::IsMember({"gradients", "attention", "alignment", "mdn", "all"}));
  verify->add_option("--seed", verify_seed);
  verify->add_flag("--verbose", verbose, "print passing checks too");

  // sweep
  auto* sweep = app.add_subcommand("sweep", "stage-1 runs over prosody dimensions");
  std::vector<std::size_t> dims{1, 3, 6, 10};
  ConfigFlags sweep_flags;
  sweep->add_option("--manifest", manifest)->required();
  sweep->add_option("--out", out, "output directory")->required();
  sweep->add_option("--dims", dims)->delimiter(',');
  sweep_flags.attach(sweep);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*prepare) {
      if (!synthetic && wav_dir.empty()) throw InputError("prepare needs --synthetic or --wav-dir");
      Manifest m;
      if (synthetic) {
        SyntheticCorpusOptions o;
        o.utterances = utterances;
        o.split = split;
        o.seed = prep_seed;
        m = generate_synthetic_corpus(prep_out, o);
      } else {
        m = prepare_wav_corpus(wav_dir, prep_out, split, prep_seed);
      }
      std::size_t train_count = 0;
      for (const auto& e : m.entries) train_count += e.held_out ? 0 : 1;
      Metrics r;
      r.add("utterances", m.entries.size()).add("train", train_count).add("test", m.entries.size() - train_count);
      r.add("inventory", m.inventory_size).add("manifest", (fs::path(prep_out) / "manifest.tsv").string());
      return print(r);
    }
    if (*train) {
      if (stage == 1) return print(train_stage1(manifest, out, train_flags.resolve(), sidecar, &std::cout));
      if (checkpoint.empty()) throw InputError("stage 2 needs --checkpoint with a stage-1 model");
      if (train_flags.preset != "desk" || !train_flags.config.empty())
        throw ConfigError("stage 2 takes its model from --checkpoint; use --set for training keys");
      return print(train_stage2(checkpoint, manifest, out, train_flags.overrides(), &std::cout));
    }
    if (*align) return print(align_corpus(checkpoint, manifest));
    if (*extract) return print(extract_prosody(checkpoint, manifest));
    if (*eval) return print(evaluate_checkpoint(checkpoint, manifest));
    if (*synth) {
      synth_options.mode = parse_mode(mode);
      Checkpoint ck = load_checkpoint(checkpoint);
      if (!text.empty()) {
        if (lexicon_path.empty()) throw InputError("--text needs --lexicon");
        const SynthesisResult r = synthesize_text(*ck.model, text, Lexicon::load(lexicon_path), synth_options);
        write_melb(out, r.mel.values);
        Metrics m;
        m.add("frames", r.mel.frames()).add("phonemes", r.durations.phonemes()).add("out", out);
        return print(m);
      }
      if (manifest.empty()) throw InputError("synth needs --text or --manifest");
      const LoadedCorpus corpus = load_corpus(manifest);
      auto words = stub_word_embeddings(ck.model->config().word_dim);
      std::size_t written = 0;
      for (const auto& u : corpus.utterances) {
        if (!u.held_out) continue;
        const SynthesisResult r = synthesize(*ck.model, u.phonemes, *words, synth_options);
        const fs::path file = fs::path(out) / (u.id + ".melb");
        write_melb(file, r.mel.values);
        Metrics m;
        m.add("id", u.id).add("frames", r.mel.frames()).add("out", file.string());
        print(m);
        ++written;
      }
      Metrics m;
      m.add("synthesized", written);
      return print(m);
    }
    if (*verify) {
      bool ok = true;
      for (const auto& report : verify::run_suites(suite, verify_seed)) {
        for (const auto& c : report.checks) {
          if (c.passed && !verbose) continue;
          std::cout << "suite=" << report.suite << " check=" << c.name << " status=" << (c.passed ? "ok" : "FAIL")
                    << ' ' << c.detail << '\n';
        }
        Metrics m;
        m.add("suite", report.suite).add("checks", report.checks.size()).add("failures", report.failures());
        m.add("seconds", report.seconds);
        print(m);
        ok = ok && report.passed();
      }
      return ok ? 0 : 1;
    }
    if (*sweep) {
      for (const auto& entry : prosody_dim_sweep(manifest, out, sweep_flags.resolve(), dims, &std::cerr))
        print(entry.metrics);
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
