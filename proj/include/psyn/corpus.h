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
#include <optional>
#include <string>
#include <vector>

#include "psyn/alignment.h"
#include "psyn/features.h"
#include "psyn/model.h"

namespace psyn {

inline constexpr std::string_view kMelMagic = "MELB0001";
inline constexpr std::string_view kProsodyMagic = "PROS0001";

// MELB: magic, u32 frames, u32 channels (80), row-major float32.
std::string encode_melb(const Tensor& mel);
Tensor decode_melb(std::string_view bytes, const std::string& what = "MELB");
void write_melb(const std::filesystem::path& path, const Tensor& mel);
Tensor read_melb(const std::filesystem::path& path);
// Frame count from the header only; validates magic, channels and length.
std::size_t melb_frames(const std::filesystem::path& path);

// PROS: magic, u32 rows (phonemes), u32 cols (D_p), row-major float32.
void write_prosody(const std::filesystem::path& path, const Tensor& representation);
Tensor read_prosody(const std::filesystem::path& path);

// Duration sidecar: one line of space-separated frame counts.
void write_durations(const std::filesystem::path& path, const Alignment& alignment);
Alignment read_durations(const std::filesystem::path& path);

// One manifest line: tab-separated key=value fields. Paths are relative to
// the manifest directory.
struct ManifestEntry {
  std::string id;
  std::vector<int> phonemes;
  std::vector<std::string> words;
  std::vector<int> spans;
  std::string mel;
  std::string durations;      // optional sidecar
  std::string prosody;        // optional target file
  std::vector<int> reference_durations;
  bool held_out = false;
  int line = 0;  // 1-based source line, 0 when built in memory
};

struct Manifest {
  std::filesystem::path directory;
  std::size_t inventory_size = 0;
  std::vector<ManifestEntry> entries;

  std::filesystem::path resolve(const std::string& relative) const { return directory / relative; }
};

// Header line "psyn-manifest inventory=<n>", then one entry per line.
Manifest parse_manifest(const std::string& text, const std::filesystem::path& directory);
std::string format_manifest(const Manifest& manifest);
// Parses and validates every invariant (files exist, spans sum to the phoneme
// count, ids inside the inventory, mel files hold 80 channels and at least
// one frame per phoneme) before returning. Errors name the line and field.
Manifest load_manifest(const std::filesystem::path& path);
void save_manifest(const std::filesystem::path& path, const Manifest& manifest);

std::vector<Utterance> load_utterances(const Manifest& manifest);

struct SyntheticCorpusOptions {
  std::size_t utterances = 100;
  double split = 0.98;
  std::uint64_t seed = 1;
  std::size_t phonemes = 10;
  std::size_t vocabulary = 16;
};

// Toy corpus: every phoneme id owns a smooth spectral template, frames are
// template + per-phoneme prosody level times a fixed contour, held constant
// over the phoneme's seeded duration. Ground-truth durations go into the
// manifest. Writes manifest.tsv, lexicon.tsv and mel/*.melb under `out`.
Manifest generate_synthetic_corpus(const std::filesystem::path& out, const SyntheticCorpusOptions& options);

// Real audio: <name>.wav with a <name>.txt transcript. Uses <wav_dir>/lexicon.tsv
// when present, else a character lexicon over the transcripts.
Manifest prepare_wav_corpus(const std::filesystem::path& wav_dir, const std::filesystem::path& out, double split,
                            std::uint64_t seed);

// Number of training utterances for a split fraction (at least one).
std::size_t training_count(std::size_t utterances, double split);

}  // namespace psyn
