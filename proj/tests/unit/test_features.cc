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

#include <cmath>
#include <numbers>

#include "doctest.h"
#include "psyn/errors.h"
#include "psyn/features.h"
#include "psyn/verify/oracles.h"
#include "support.h"

using namespace psyn;

namespace {

std::vector<float> sine(double hz, std::size_t samples) {
  std::vector<float> wav(samples);
  for (std::size_t i = 0; i < samples; ++i)
    wav[i] = static_cast<float>(0.5 * std::sin(2.0 * std::numbers::pi * hz * static_cast<double>(i) / kSampleRate));
  return wav;
}

}  // namespace

TEST_SUITE("features") {
  TEST_CASE("silence gives zero magnitudes and a floored mel") {
    const std::vector<float> wav(4096, 0.0f);
    const Spectrogram s = stft(wav);
    for (const auto& b : s.bins) CHECK(std::abs(b) == 0.0f);
    const MelSpectrogram mel = wav_to_mel(wav);
    for (float v : mel.values.values()) CHECK(v == std::log(kLogFloor));
  }

  TEST_CASE("1 kHz sine peaks at bin 46") {
    const auto wav = sine(1000.0, 8192);
    const Tensor mag = stft(wav).magnitude();
    const std::size_t frame = 10;
    std::size_t best = 0;
    for (std::size_t b = 0; b < static_cast<std::size_t>(kSpectrumBins); ++b)
      if (mag.at(frame, b) > mag.at(frame, best)) best = b;
    CHECK(best == 46);
  }

  TEST_CASE("FFT magnitudes match the O(N^2) DFT and Parseval") {
    Rng rng(3);
    std::normal_distribution<float> normal(0.0f, 0.3f);
    std::vector<float> wav(3000);
    for (auto& v : wav) v = normal(rng);
    const Spectrogram s = stft(wav);
    // Frame 4 covers samples 4*256-512 .. +1024, all inside the signal.
    const std::size_t t = 4;
    const auto window = hann_window();
    std::vector<double> frame(kFftSize);
    double energy = 0.0;
    for (int i = 0; i < kFftSize; ++i) {
      frame[i] = static_cast<double>(wav[t * kHopSize - kFftSize / 2 + i]) * window[i];
      energy += frame[i] * frame[i];
    }
    const auto ref = oracle::dft_magnitude(frame);
    double spectral = 0.0;
    for (int b = 0; b < kSpectrumBins; ++b) {
      const double m = std::abs(s.at(t, b));
      CHECK(std::abs(m - ref[b]) < 1e-3 * (1.0 + ref[b]));
      const double weight = (b == 0 || b == kFftSize / 2) ? 1.0 : 2.0;
      spectral += weight * m * m;
    }
    CHECK(std::abs(spectral / kFftSize - energy) < 1e-3 * energy);
  }

  TEST_CASE("frame counts follow the centered formula") {
    CHECK(stft_frame_count(22050) == 87);
    for (std::size_t n = 1024; n <= 22050; n += 997) {
      const std::vector<float> wav(n, 0.0f);
      CHECK(stft(wav).frames == 1 + n / kHopSize);
    }
    Rng rng(5);
    std::uniform_real_distribution<float> u(-0.5f, 0.5f);
    std::vector<float> noise(22050);
    for (auto& v : noise) v = u(rng);
    const MelSpectrogram a = wav_to_mel(noise), b = wav_to_mel(noise);
    CHECK(a.frames() == 87);
    CHECK(a.values.cols() == 80);
    CHECK(a.values.values() == b.values.values());
  }

  TEST_CASE("stft and mel reject bad input") {
    CHECK_THROWS_AS(stft(std::vector<float>{}), InputError);
    CHECK_THROWS_AS(wav_to_mel(std::vector<float>(2048, 0.0f), 16000), InputError);
  }

  TEST_CASE("mel filterbank shape and edges") {
    const MelFilterbank& fb = mel_filterbank();
    CHECK(fb.weights.rows() == 80);
    CHECK(fb.weights.cols() == 513);
    CHECK(fb.edges_hz.front() == doctest::Approx(60.0));
    CHECK(fb.edges_hz.back() == doctest::Approx(7600.0));
    CHECK(hz_to_mel(700.0) == doctest::Approx(2595.0 * std::log10(2.0)));
    const double bin_hz = static_cast<double>(kSampleRate) / kFftSize;
    for (std::size_t f = 0; f < 80; ++f) {
      std::size_t peaks = 0, first = 513, last = 0;
      float best = 0.0f;
      for (std::size_t b = 0; b < 513; ++b) {
        const float w = fb.weights.at(f, b);
        CHECK(w >= 0.0f);
        if (w > 0.0f) {
          first = std::min(first, b);
          last = std::max(last, b);
        }
        best = std::max(best, w);
      }
      for (std::size_t b = 0; b < 513; ++b)
        if (fb.weights.at(f, b) == best) ++peaks;
      CHECK(peaks == 1);
      if (f == 0) CHECK(std::abs(static_cast<double>(first) * bin_hz - 60.0) <= bin_hz);
      if (f == 79) CHECK(std::abs(static_cast<double>(last) * bin_hz - 7600.0) <= bin_hz);
    }
    for (std::size_t b = 0; b < 513; ++b) {
      const double hz = static_cast<double>(b) * bin_hz;
      if (hz <= 60.0 || hz >= 7600.0) continue;
      double column = 0.0;
      for (std::size_t f = 0; f < 80; ++f) column += fb.weights.at(f, b);
      CHECK(column > 0.0);
    }
  }

  TEST_CASE("wav round trip") {
    const auto dir = psyn::test::scratch_dir("wav");
    const auto wav = sine(440.0, 5000);
    write_wav(dir / "a.wav", wav, kSampleRate);
    const WavData back = read_wav(dir / "a.wav");
    CHECK(back.sample_rate == kSampleRate);
    REQUIRE(back.samples.size() == wav.size());
    for (std::size_t i = 0; i < wav.size(); ++i) CHECK(std::abs(back.samples[i] - wav[i]) < 1.0f / 32767.0f);
  }

  TEST_CASE("text frontend") {
    const Lexicon chars = Lexicon::characters("ab ");
    const PhonemeSequence seq = text_to_phonemes("ab a", chars);
    CHECK(seq.ids == std::vector<int>{0, 1, 2, 0});
    CHECK(seq.words == std::vector<std::string>{"ab", "a"});
    CHECK(seq.spans == std::vector<int>{3, 1});
    CHECK_THROWS_AS(text_to_phonemes("", chars), InputError);
    CHECK_THROWS_AS(text_to_phonemes("abc", chars), InputError);
    CHECK(normalize_text("Ni3#1 hao3#4") == "ni3 hao3");
    const Lexicon words = Lexicon::words({{"hi", {0, 1}}, {"yo", {2}}}, 3);
    CHECK(text_to_phonemes("hi yo", words).ids == std::vector<int>{0, 1, 2});
    CHECK(text_to_phonemes("2 0 1", Lexicon::ids(3)).ids == std::vector<int>{2, 0, 1});
    CHECK_THROWS_AS(text_to_phonemes("3", Lexicon::ids(3)), IndexError);
  }
}
