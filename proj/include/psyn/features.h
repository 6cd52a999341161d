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

#include <complex>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "psyn/tensor.h"

namespace psyn {

// Analysis parameters of the acoustic front end.
inline constexpr int kSampleRate = 22050;
inline constexpr int kFftSize = 1024;
inline constexpr int kWindowSize = 1024;
inline constexpr int kHopSize = 256;
inline constexpr int kMelChannels = 80;
inline constexpr int kSpectrumBins = kFftSize / 2 + 1;
inline constexpr double kMelLowHz = 60.0;
inline constexpr double kMelHighHz = 7600.0;
inline constexpr float kLogFloor = 1e-5f;

struct MelSpectrogram {
  Tensor values;  // [frames x 80] log-mel magnitudes
  int sample_rate = kSampleRate;
  int hop = kHopSize;

  std::size_t frames() const { return values.rows(); }
  // Throws InvariantError unless 80 channels, >= 1 frame, all finite.
  void validate() const;
};

struct Spectrogram {
  std::size_t frames = 0;
  std::vector<std::complex<float>> bins;  // [frames x 513]

  std::complex<float> at(std::size_t frame, std::size_t bin) const { return bins[frame * kSpectrumBins + bin]; }
  Tensor magnitude() const;
};

// Frame count of a centered STFT: 1 + floor(samples / hop).
std::size_t stft_frame_count(std::size_t samples);

// Periodic Hann window of kWindowSize samples.
std::vector<float> hann_window();

// Centered STFT (reflect padding of kFftSize / 2 on both sides).
Spectrogram stft(std::span<const float> wav);

struct MelFilterbank {
  Tensor weights;                 // [80 x 513]
  std::vector<double> edges_hz;   // 82 mel-spaced corner frequencies
};

double hz_to_mel(double hz);
double mel_to_hz(double mel);
const MelFilterbank& mel_filterbank();

// log(max(filterbank . |STFT|, 1e-5)). `sample_rate` must equal 22050.
MelSpectrogram wav_to_mel(std::span<const float> wav, int sample_rate = kSampleRate);

struct WavData {
  std::vector<float> samples;  // mono, scaled to [-1, 1)
  int sample_rate = 0;
};

// 16-bit PCM mono RIFF/WAVE only.
WavData read_wav(const std::filesystem::path& path);
void write_wav(const std::filesystem::path& path, std::span<const float> samples, int sample_rate);

struct PhonemeSequence {
  std::vector<int> ids;
  std::size_t inventory_size = 0;
  std::vector<std::string> words;  // one entry per word span
  std::vector<int> spans;          // phonemes per word, summing to ids.size()

  void validate() const;
};

// Lowercases, turns rhythm marks #1..#4 into spaces, collapses whitespace.
std::string normalize_text(std::string_view text);

class Lexicon {
 public:
  enum class Mode { kCharacters, kWords, kIds };

  // Each character of `alphabet` maps to its index; include ' ' to keep spaces.
  static Lexicon characters(std::string_view alphabet);
  // Whitespace-delimited words looked up in `entries`.
  static Lexicon words(std::map<std::string, std::vector<int>> entries, std::size_t inventory_size);
  // Whitespace-delimited integer ids passed through unchanged.
  static Lexicon ids(std::size_t inventory_size);

  Mode mode() const { return mode_; }
  std::size_t inventory_size() const { return inventory_size_; }
  const std::map<std::string, std::vector<int>>& entries() const { return entries_; }

  // Lexicon file: first line "mode=<characters|words|ids> inventory=<n>",
  // then "alphabet=<chars>" or "<word>\t<id id ...>" lines.
  static Lexicon load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

 private:
  friend PhonemeSequence text_to_phonemes(std::string_view text, const Lexicon& lexicon);
  Mode mode_ = Mode::kCharacters;
  std::size_t inventory_size_ = 0;
  std::string alphabet_;
  std::map<std::string, std::vector<int>> entries_;
};

// Throws InputError on empty text or an unknown symbol.
PhonemeSequence text_to_phonemes(std::string_view text, const Lexicon& lexicon);

}  // namespace psyn
