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

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <optional>
#include <string>
#include <vector>

#include "psyn/alignment.h"
#include "psyn/checkpoint.h"
#include "psyn/corpus.h"
#include "psyn/features.h"
#include "psyn/pipeline.h"
#include "psyn/prosody.h"
#include "psyn/verify/suites.h"

namespace py = pybind11;
namespace fs = std::filesystem;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

psyn::Tensor to_matrix(const FloatArray& a, const char* what) {
  if (a.ndim() != 2) throw psyn::DimensionError(std::string(what) + " must be a 2-D array");
  const auto rows = static_cast<std::size_t>(a.shape(0)), cols = static_cast<std::size_t>(a.shape(1));
  return psyn::Tensor({rows, cols}, std::vector<float>(a.data(), a.data() + a.size()));
}

FloatArray to_array(const psyn::Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  FloatArray out(shape);
  std::copy(t.values().begin(), t.values().end(), out.mutable_data());
  return out;
}

py::dict to_dict(const psyn::Metrics& m) {
  py::dict d;
  for (const auto& [k, v] : m.fields()) {
    try {
      std::size_t used = 0;
      const double x = std::stod(v, &used);
      if (used == v.size()) {
        d[k.c_str()] = x;
        continue;
      }
    } catch (const std::exception&) {
    }
    d[k.c_str()] = v;
  }
  return d;
}

psyn::Settings to_settings(const std::optional<py::dict>& overrides) {
  psyn::Settings s;
  if (!overrides) return s;
  for (const auto& [k, v] : *overrides) s[py::str(k)] = py::str(v);
  return s;
}

psyn::SynthesisOptions synthesis_options(const std::string& mode, std::uint64_t seed, float temperature,
                                         float duration_scale) {
  psyn::SynthesisOptions o;
  if (mode == "sample") o.mode = psyn::SampleMode::kSample;
  else if (mode == "argmax") o.mode = psyn::SampleMode::kArgmax;
  else throw psyn::ConfigError("mode must be 'argmax' or 'sample', got '" + mode + "'");
  o.seed = seed;
  o.temperature = temperature;
  o.duration_scale = duration_scale;
  return o;
}

py::dict synthesis_dict(const psyn::SynthesisResult& r) {
  py::dict d;
  d["mel"] = to_array(r.mel.values);
  d["durations"] = r.durations.durations;
  d["prosody"] = to_array(r.prosody);
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Feed-forward TTS with local attention and learned prosody";

  py::register_exception<psyn::Error>(m, "PsynError", PyExc_RuntimeError);

  m.def("wav_to_mel", [](const FloatArray& wav, int sample_rate) {
    if (wav.ndim() != 1) throw psyn::DimensionError("wav must be a 1-D array");
    return to_array(psyn::wav_to_mel(std::span<const float>(wav.data(), wav.size()), sample_rate).values);
  }, py::arg("wav"), py::arg("sample_rate") = psyn::kSampleRate, "Log-mel spectrogram [frames x 80].");

  m.def("read_melb", [](const fs::path& p) { return to_array(psyn::read_melb(p)); }, py::arg("path"));
  m.def("write_melb", [](const fs::path& p, const FloatArray& mel) { psyn::write_melb(p, to_matrix(mel, "mel")); },
        py::arg("path"), py::arg("mel"));

  m.def("forward_sum_log_likelihood", [](const FloatArray& mean, const FloatArray& log_var, const FloatArray& mel) {
    const psyn::EmissionStats s{to_matrix(mean, "mean"), to_matrix(log_var, "log_var")};
    return psyn::forward_sum_log_likelihood(s, to_matrix(mel, "mel"));
  }, py::arg("mean"), py::arg("log_var"), py::arg("mel"));

  m.def("viterbi", [](const FloatArray& mean, const FloatArray& log_var, const FloatArray& mel) {
    const psyn::EmissionStats s{to_matrix(mean, "mean"), to_matrix(log_var, "log_var")};
    const psyn::ViterbiResult r = psyn::viterbi(s, to_matrix(mel, "mel"));
    return py::make_tuple(r.alignment.durations, r.log_prob);
  }, py::arg("mean"), py::arg("log_var"), py::arg("mel"), "Returns (durations, log_prob).");

  m.def("mdn_nll", [](const FloatArray& head, const FloatArray& target, std::size_t mixtures) {
    const psyn::Tensor t = to_matrix(target, "target");
    return static_cast<double>(psyn::mdn_nll(to_matrix(head, "head"), t, mixtures, t.cols()).item());
  }, py::arg("head"), py::arg("target"), py::arg("mixtures"));

  m.def("generate_synthetic_corpus", [](const fs::path& out, std::size_t utterances, double split, std::uint64_t seed) {
    psyn::SyntheticCorpusOptions o;
    o.utterances = utterances;
    o.split = split;
    o.seed = seed;
    psyn::generate_synthetic_corpus(out, o);
    return (out / "manifest.tsv").string();
  }, py::arg("out"), py::arg("utterances") = 100, py::arg("split") = 0.98, py::arg("seed") = 1,
     "Writes a toy corpus and returns the manifest path.");

  m.def("train_stage1", [](const fs::path& manifest, const fs::path& out, const std::string& preset,
                           std::optional<py::dict> overrides, bool sidecar) {
    const psyn::RunSettings s = psyn::resolve_settings(preset, std::nullopt, to_settings(overrides));
    psyn::Metrics r;
    {
      py::gil_scoped_release release;
      r = psyn::train_stage1(manifest, out, s, sidecar, nullptr);
    }
    return to_dict(r);
  }, py::arg("manifest"), py::arg("out"), py::arg("preset") = "desk", py::arg("overrides") = py::none(),
     py::arg("sidecar_alignment") = false);

  m.def("train_stage2", [](const fs::path& checkpoint, const fs::path& manifest, const fs::path& out,
                           std::optional<py::dict> overrides) {
    const psyn::Settings s = to_settings(overrides);
    psyn::Metrics r;
    {
      py::gil_scoped_release release;
      r = psyn::train_stage2(checkpoint, manifest, out, s, nullptr);
    }
    return to_dict(r);
  }, py::arg("checkpoint"), py::arg("manifest"), py::arg("out"), py::arg("overrides") = py::none());

  m.def("align", [](const fs::path& c, const fs::path& man) { return to_dict(psyn::align_corpus(c, man)); },
        py::arg("checkpoint"), py::arg("manifest"));
  m.def("extract_prosody", [](const fs::path& c, const fs::path& man) { return to_dict(psyn::extract_prosody(c, man)); },
        py::arg("checkpoint"), py::arg("manifest"));
  m.def("evaluate", [](const fs::path& c, const fs::path& man) { return to_dict(psyn::evaluate_checkpoint(c, man)); },
        py::arg("checkpoint"), py::arg("manifest"));

  m.def("synthesize", [](const fs::path& checkpoint, const std::string& text, const fs::path& lexicon,
                         const std::string& mode, std::uint64_t seed, float temperature, float duration_scale) {
    const psyn::Checkpoint ck = psyn::load_checkpoint(checkpoint);
    const psyn::Lexicon lex = psyn::Lexicon::load(lexicon);
    return synthesis_dict(
        psyn::synthesize_text(*ck.model, text, lex, synthesis_options(mode, seed, temperature, duration_scale)));
  }, py::arg("checkpoint"), py::arg("text"), py::arg("lexicon"), py::arg("mode") = "argmax", py::arg("seed") = 0,
     py::arg("temperature") = 1.0f, py::arg("duration_scale") = 1.0f,
     "Returns a dict with 'mel' [frames x 80], 'durations' and 'prosody'.");

  m.def("verify", [](const std::string& suite, std::uint64_t seed) {
    py::list out;
    for (const auto& r : psyn::verify::run_suites(suite, seed)) {
      py::dict d;
      d["suite"] = r.suite;
      d["passed"] = r.passed();
      d["failures"] = r.failures();
      d["seconds"] = r.seconds;
      out.append(d);
    }
    return out;
  }, py::arg("suite") = "all", py::arg("seed") = 1);
}
