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

// End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
// exits non-zero when any criterion fails.
//
// Usage: acceptance [work_dir]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "psyn/binary_io.h"
#include "psyn/checkpoint.h"
#include "psyn/corpus.h"
#include "psyn/pipeline.h"
#include "psyn/training.h"
#include "psyn/verify/suites.h"

namespace fs = std::filesystem;
using namespace psyn;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

struct Outcome {
  int id = 0;
  std::string title;
  bool passed = false;
  std::string detail;
};

std::vector<Outcome> outcomes;

void report(int id, const std::string& title, bool passed, const std::string& detail) {
  outcomes.push_back({id, title, passed, detail});
  std::cout << (passed ? "PASS" : "FAIL") << " criterion " << id << " (" << title << "): " << detail << std::endl;
}

std::string suite_detail(const verify::SuiteReport& r) {
  std::ostringstream os;
  os << "checks=" << r.checks.size() << " failures=" << r.failures() << " seconds=" << r.seconds;
  for (const auto& c : r.checks)
    if (!c.passed) os << " failed=" << c.name << "{" << c.detail << "}";
  return os.str();
}

// Mean absolute difference over the frames both mels have.
double prefix_l1(const Tensor& a, const Tensor& b) {
  const std::size_t frames = std::min(a.rows(), b.rows());
  double acc = 0.0;
  for (std::size_t t = 0; t < frames; ++t)
    for (std::size_t c = 0; c < a.cols(); ++c) acc += std::fabs(a.at(t, c) - b.at(t, c));
  return acc / static_cast<double>(frames * a.cols());
}

std::vector<double> curve_losses(const Stage1Result& r) {
  std::vector<double> out;
  for (const auto& s : r.curve) out.push_back(s.loss);
  return out;
}

void suites() {
  const auto g = verify::gradient_suite(1);
  report(1, "gradient suite", g.passed() && g.seconds < 120.0, suite_detail(g));
  const auto a = verify::attention_suite(1);
  report(2, "attention semantics", a.passed(), suite_detail(a));
  const auto al = verify::alignment_suite(1);
  report(3, "alignment oracle", al.passed(), suite_detail(al));
  const auto m = verify::mdn_suite(1);
  report(4, "mdn identities", m.passed(), suite_detail(m));
}

struct EndToEnd {
  fs::path manifest;
  fs::path stage1;
  fs::path stage2;
  bool ok = false;
};

EndToEnd end_to_end(const fs::path& work) {
  EndToEnd run;
  const auto start = Clock::now();
  const fs::path corpus_dir = work / "corpus";
  SyntheticCorpusOptions opts;
  generate_synthetic_corpus(corpus_dir, opts);
  run.manifest = corpus_dir / "manifest.tsv";
  run.stage1 = work / "stage1.ckpt";
  run.stage2 = work / "stage2.ckpt";

  const RunSettings settings = preset_settings("desk");
  const Metrics s1 = train_stage1(run.manifest, run.stage1, settings, false, &std::cerr);
  std::cerr << s1.line() << std::endl;
  const Metrics al = align_corpus(run.stage1, run.manifest);
  extract_prosody(run.stage1, run.manifest);
  const Metrics s2 = train_stage2(run.stage1, run.manifest, run.stage2, {}, &std::cerr);
  std::cerr << s2.line() << std::endl;
  const double elapsed = seconds_since(start);

  const double train_l1 = s1.number("train_mel_l1");
  const double test_l1 = s1.number("test_mel_l1");
  const double mae = al.number("duration_mae");
  const double reduction = s2.number("nll_reduction");
  run.ok = train_l1 < 0.05 && test_l1 < 0.10 && mae < 1.0 && reduction >= 0.5 && elapsed <= 900.0;
  std::ostringstream os;
  os << "train_mel_l1=" << train_l1 << " test_mel_l1=" << test_l1 << " duration_mae=" << mae
     << " initial_nll=" << s2.get("initial_nll") << " final_nll=" << s2.get("final_nll")
     << " nll_reduction=" << reduction << " seconds=" << elapsed;
  report(5, "toy end-to-end", run.ok, os.str());
  return run;
}

void prosody_separation(const EndToEnd& run) {
  const Checkpoint ck = load_checkpoint(run.stage1);
  const LoadedCorpus corpus = load_corpus(run.manifest);
  std::size_t checked = 0, violations = 0;
  double worst_gap = std::numeric_limits<double>::infinity();
  double mean_oracle = 0.0, mean_zero = 0.0;
  for (const auto& u : corpus.utterances) {
    if (u.held_out) continue;
    const Alignment a = teacher_alignment(*ck.model, u, false);
    const double oracle = mel_l1(reconstruct_mel(*ck.model, u, a, ProsodySource::kLearner), u.mel);
    const double zero = mel_l1(reconstruct_mel(*ck.model, u, a, ProsodySource::kZero), u.mel);
    ++checked;
    if (!(oracle < zero)) ++violations;
    worst_gap = std::min(worst_gap, zero - oracle);
    mean_oracle += oracle;
    mean_zero += zero;
  }
  std::ostringstream os;
  os << "utterances=" << checked << " violations=" << violations << " min_gap=" << worst_gap
     << " mean_oracle_l1=" << mean_oracle / static_cast<double>(checked)
     << " mean_zero_l1=" << mean_zero / static_cast<double>(checked);
  report(6, "prosody separation", checked > 0 && violations == 0, os.str());
}

void variability(const EndToEnd& run) {
  const Checkpoint ck = load_checkpoint(run.stage2);
  const LoadedCorpus corpus = load_corpus(run.manifest);
  const auto words = stub_word_embeddings(ck.model->config().word_dim);
  std::size_t checked = 0;
  double min_diff = std::numeric_limits<double>::infinity();
  bool argmax_identical = true;
  for (const auto& u : corpus.utterances) {
    if (!u.held_out) continue;
    SynthesisOptions a, b;
    a.mode = b.mode = SampleMode::kSample;
    a.seed = 1;
    b.seed = 2;
    const double diff =
        prefix_l1(synthesize(*ck.model, u.phonemes, *words, a).mel.values, synthesize(*ck.model, u.phonemes, *words, b).mel.values);
    min_diff = std::min(min_diff, diff);
    SynthesisOptions x, y;
    x.seed = 1;
    y.seed = 2;
    argmax_identical = argmax_identical && synthesize(*ck.model, u.phonemes, *words, x).mel.values.values() ==
                                               synthesize(*ck.model, u.phonemes, *words, y).mel.values.values();
    ++checked;
  }
  std::ostringstream os;
  os << "held_out_texts=" << checked << " min_sample_l1=" << min_diff
     << " argmax_bit_identical=" << (argmax_identical ? 1 : 0);
  report(7, "variability", checked > 0 && min_diff > 0.01 && argmax_identical, os.str());
}

void dimension_sweep(const EndToEnd& run, const fs::path& work) {
  const auto start = Clock::now();
  RunSettings settings = preset_settings("desk");
  settings.train.target_l1 = 0.05f;
  const fs::path out = work / "sweep";
  const auto entries = prosody_dim_sweep(run.manifest, out, settings, {1, 3, 6, 10}, nullptr);
  bool all = entries.size() == 4;
  std::ostringstream os;
  for (const auto& e : entries) {
    all = all && e.metrics.get("converged") == "1";
    os << "dp" << e.prosody_dim << "{steps=" << e.metrics.get("steps") << " train_mel_l1=" << e.metrics.get("train_mel_l1")
       << " test_mel_l1=" << e.metrics.get("test_mel_l1") << "} ";
  }
  const bool report_written = fs::exists(out / "sweep.txt") && fs::file_size(out / "sweep.txt") > 0;
  os << "report=" << (out / "sweep.txt").string() << " seconds=" << seconds_since(start);
  report(8, "dimension sweep", all && report_written, os.str());
}

void serialization(const EndToEnd& run) {
  const std::string bytes = read_file_bytes(run.stage2);
  const Checkpoint ck = deserialize_checkpoint(bytes);
  const bool checkpoint_exact = serialize_checkpoint(*ck.model, ck.adam, ck.train, ck.step) == bytes;

  const Manifest manifest = load_manifest(run.manifest);
  bool melb_exact = true;
  for (const auto& e : manifest.entries) {
    const std::string raw = read_file_bytes(manifest.resolve(e.mel));
    melb_exact = melb_exact && encode_melb(decode_melb(raw)) == raw;
  }

  // Short fixed-seed runs at several worker counts.
  const LoadedCorpus corpus = load_corpus(run.manifest);
  std::vector<std::vector<double>> curves;
  std::vector<std::string> finals;
  for (int workers : {1, 1, 2, 4}) {
    RunSettings s = preset_settings("desk");
    s.model.phoneme_inventory = corpus.manifest.inventory_size;
    s.train.steps = 30;
    s.train.workers = workers;
    TtsModel model(s.model, s.train.seed);
    Adam adam(s.train.adam_beta1, s.train.adam_beta2, s.train.adam_eps);
    curves.push_back(curve_losses(stage1_train(model, adam, corpus.utterances, s.train)));
    // The recorded settings carry the worker count; parameters and optimizer
    // state are what must match.
    TrainConfig recorded = s.train;
    recorded.workers = 1;
    finals.push_back(serialize_checkpoint(model, adam, recorded, 30));
  }
  bool curves_identical = true;
  for (std::size_t i = 1; i < curves.size(); ++i)
    curves_identical = curves_identical && curves[i] == curves[0] && finals[i] == finals[0];

  std::ostringstream os;
  os << "checkpoint_bit_exact=" << checkpoint_exact << " melb_bit_exact=" << melb_exact
     << " melb_files=" << manifest.entries.size() << " curves_identical_workers_1_1_2_4=" << curves_identical;
  report(9, "serialization and determinism", checkpoint_exact && melb_exact && curves_identical, os.str());
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path work = argc > 1 ? fs::path(argv[1]) : fs::temp_directory_path() / "psyn_acceptance";
  fs::remove_all(work);
  fs::create_directories(work);
  try {
    suites();
    const EndToEnd run = end_to_end(work);
    prosody_separation(run);
    variability(run);
    dimension_sweep(run, work);
    serialization(run);
  } catch (const std::exception& e) {
    std::cout << "FAIL acceptance run aborted: " << e.what() << std::endl;
    return 1;
  }
  const auto failed = std::count_if(outcomes.begin(), outcomes.end(), [](const Outcome& o) { return !o.passed; });
  std::cout << "summary: " << outcomes.size() - failed << "/" << outcomes.size() << " criteria passed" << std::endl;
  return failed == 0 && outcomes.size() == 9 ? 0 : 1;
}
