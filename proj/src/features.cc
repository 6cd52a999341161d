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

#include "psyn/features.h"

#include <fftw3.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <mutex>
#include <numbers>
#include <sstream>

namespace psyn {

void MelSpectrogram::validate() const {
  if (!values.defined() || values.rank() != 2) throw InvariantError("mel spectrogram must be a matrix");
  if (values.cols() != static_cast<std::size_t>(kMelChannels)) {
    throw InvariantError("mel spectrogram must have 80 channels, got " + std::to_string(values.cols()));
  }
  for (float v : values.data())
    if (!std::isfinite(v)) throw InvariantError("mel spectrogram holds a non-finite value");
}

Tensor Spectrogram::magnitude() const {
  Tensor out({frames, static_cast<std::size_t>(kSpectrumBins)});
  auto o = out.data();
  for (std::size_t i = 0; i < bins.size(); ++i) o[i] = std::abs(bins[i]);
  return out;
}

std::size_t stft_frame_count(std::size_t samples) { return 1 + samples / kHopSize; }

std::vector<float> hann_window() {
  std::vector<float> w(kWindowSize);
  for (int n = 0; n < kWindowSize; ++n)
    w[n] = static_cast<float>(0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * n / kWindowSize));
  return w;
}

namespace {

long reflect_index(long i, long len) {
  if (len == 1) return 0;
  const long period = 2 * (len - 1);
  i %= period;
  if (i < 0) i += period;
  return i < len ? i : period - i;
}

// FFTW planning is not thread-safe; execution on distinct buffers is.
std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

class RealFft {
 public:
  RealFft() {
    std::lock_guard lock(fftw_planner_mutex());
    in_ = fftwf_alloc_real(kFftSize);
    out_ = fftwf_alloc_complex(kSpectrumBins);
    plan_ = fftwf_plan_dft_r2c_1d(kFftSize, in_, out_, FFTW_ESTIMATE);
  }
  ~RealFft() {
    std::lock_guard lock(fftw_planner_mutex());
    fftwf_destroy_plan(plan_);
    fftwf_free(in_);
    fftwf_free(out_);
  }
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  float* input() { return in_; }
  void run(std::complex<float>* dst) {
    fftwf_execute(plan_);
    for (int k = 0; k < kSpectrumBins; ++k) dst[k] = {out_[k][0], out_[k][1]};
  }

 private:
  float* in_ = nullptr;
  fftwf_complex* out_ = nullptr;
  fftwf_plan plan_ = nullptr;
};

}  // namespace

Spectrogram stft(std::span<const float> wav) {
  if (wav.empty()) throw InputError("stft: empty signal");
  const long len = static_cast<long>(wav.size());
  const long pad = kFftSize / 2;
  const auto window = hann_window();
  Spectrogram spectrum;
  spectrum.frames = stft_frame_count(wav.size());
  spectrum.bins.resize(spectrum.frames * kSpectrumBins);
  RealFft fft;
  float* in = fft.input();
  for (std::size_t f = 0; f < spectrum.frames; ++f) {
    const long start = static_cast<long>(f) * kHopSize - pad;
    for (long n = 0; n < kFftSize; ++n) in[n] = wav[static_cast<std::size_t>(reflect_index(start + n, len))] * window[n];
    fft.run(spectrum.bins.data() + f * kSpectrumBins);
  }
  return spectrum;
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

namespace {

MelFilterbank build_filterbank() {
  MelFilterbank fb;
  const double lo = hz_to_mel(kMelLowHz), hi = hz_to_mel(kMelHighHz);
  fb.edges_hz.resize(kMelChannels + 2);
  for (int i = 0; i < kMelChannels + 2; ++i) fb.edges_hz[i] = mel_to_hz(lo + (hi - lo) * i / (kMelChannels + 1));
  fb.weights = Tensor({static_cast<std::size_t>(kMelChannels), static_cast<std::size_t>(kSpectrumBins)});
  for (int m = 0; m < kMelChannels; ++m) {
    const double left = fb.edges_hz[m], center = fb.edges_hz[m + 1], right = fb.edges_hz[m + 2];
    for (int k = 0; k < kSpectrumBins; ++k) {
      const double f = static_cast<double>(k) * kSampleRate / kFftSize;
      const double up = (f - left) / (center - left);
      const double down = (right - f) / (right - center);
      fb.weights.at(m, k) = static_cast<float>(std::max(0.0, std::min(up, down)));
    }
  }
  return fb;
}

}  // namespace

const MelFilterbank& mel_filterbank() {
  static const MelFilterbank fb = build_filterbank();
  return fb;
}

MelSpectrogram wav_to_mel(std::span<const float> wav, int sample_rate) {
  if (sample_rate != kSampleRate) {
    throw InputError("expected " + std::to_string(kSampleRate) + " Hz audio, got " + std::to_string(sample_rate));
  }
  const Spectrogram spectrum = stft(wav);
  const Tensor mag = spectrum.magnitude();
  const Tensor& fb = mel_filterbank().weights;
  MelSpectrogram mel;
  mel.values = Tensor({spectrum.frames, static_cast<std::size_t>(kMelChannels)});
  for (std::size_t t = 0; t < spectrum.frames; ++t) {
    auto frame = mag.row(t);
    for (int m = 0; m < kMelChannels; ++m) {
      auto w = fb.row(m);
      double acc = 0.0;
      for (int k = 0; k < kSpectrumBins; ++k) acc += static_cast<double>(w[k]) * frame[k];
      mel.values.at(t, m) = std::log(std::max(static_cast<float>(acc), kLogFloor));
    }
  }
  return mel;
}

namespace {

std::uint32_t read_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
std::uint16_t read_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}
void put_u32(std::string& s, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_u16(std::string& s, std::uint16_t v) {
  s.push_back(static_cast<char>(v & 0xff));
  s.push_back(static_cast<char>(v >> 8));
}

}  // namespace

WavData read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  auto fail = [&](const std::string& why) { return InputError(path.string() + ": " + why); };
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 || std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    throw fail("not a RIFF/WAVE file");
  bool have_fmt = false;
  WavData wav;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* chunk = bytes.data() + pos;
    const std::uint32_t size = read_u32(chunk + 4);
    if (pos + 8 + size > bytes.size()) throw fail("truncated chunk");
    const unsigned char* body = chunk + 8;
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (size < 16) throw fail("short fmt chunk");
      if (read_u16(body) != 1) throw fail("only PCM audio is supported");
      if (read_u16(body + 2) != 1) throw fail("only mono audio is supported");
      wav.sample_rate = static_cast<int>(read_u32(body + 4));
      if (read_u16(body + 14) != 16) throw fail("only 16-bit samples are supported");
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      if (!have_fmt) throw fail("data chunk before fmt chunk");
      wav.samples.resize(size / 2);
      for (std::size_t i = 0; i < wav.samples.size(); ++i) {
        const auto raw = static_cast<std::int16_t>(read_u16(body + 2 * i));
        wav.samples[i] = static_cast<float>(raw) / 32768.0f;
      }
      return wav;
    }
    pos += 8 + size + (size & 1);
  }
  throw fail("no data chunk");
}

void write_wav(const std::filesystem::path& path, std::span<const float> samples, int sample_rate) {
  std::string s = "RIFF";
  const auto data_bytes = static_cast<std::uint32_t>(samples.size() * 2);
  put_u32(s, 36 + data_bytes);
  s += "WAVEfmt ";
  put_u32(s, 16);
  put_u16(s, 1);
  put_u16(s, 1);
  put_u32(s, static_cast<std::uint32_t>(sample_rate));
  put_u32(s, static_cast<std::uint32_t>(sample_rate * 2));
  put_u16(s, 2);
  put_u16(s, 16);
  s += "data";
  put_u32(s, data_bytes);
  for (float v : samples) {
    const float clipped = std::clamp(v, -1.0f, 1.0f);
    put_u16(s, static_cast<std::uint16_t>(static_cast<std::int16_t>(std::lround(clipped * 32767.0f))));
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

void PhonemeSequence::validate() const {
  if (ids.empty()) throw InputError("phoneme sequence is empty");
  for (int id : ids)
    if (id < 0 || static_cast<std::size_t>(id) >= inventory_size)
      throw IndexError("phoneme id " + std::to_string(id) + " outside inventory of " + std::to_string(inventory_size));
  long total = 0;
  for (int s : spans) {
    if (s < 1) throw InvariantError("word span must cover at least one phoneme");
    total += s;
  }
  if (!spans.empty() && total != static_cast<long>(ids.size()))
    throw InvariantError("word spans cover " + std::to_string(total) + " phonemes, sequence has " +
                         std::to_string(ids.size()));
  if (words.size() != spans.size()) throw InvariantError("word list and span list differ in length");
}

std::string normalize_text(std::string_view text) {
  std::string marked;
  marked.reserve(text.size());
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] == '#' && i + 1 < text.size() && text[i + 1] >= '1' && text[i + 1] <= '4') {
      marked.push_back(' ');
      ++i;
      continue;
    }
    marked.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(text[i]))));
  }
  std::string out;
  bool pending_space = false;
  for (char c : marked) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(c);
  }
  return out;
}

Lexicon Lexicon::characters(std::string_view alphabet) {
  Lexicon lex;
  lex.mode_ = Mode::kCharacters;
  lex.alphabet_ = std::string(alphabet);
  lex.inventory_size_ = alphabet.size();
  return lex;
}

Lexicon Lexicon::words(std::map<std::string, std::vector<int>> entries, std::size_t inventory_size) {
  Lexicon lex;
  lex.mode_ = Mode::kWords;
  lex.entries_ = std::move(entries);
  lex.inventory_size_ = inventory_size;
  return lex;
}

Lexicon Lexicon::ids(std::size_t inventory_size) {
  Lexicon lex;
  lex.mode_ = Mode::kIds;
  lex.inventory_size_ = inventory_size;
  return lex;
}

namespace {

std::vector<std::string> split_whitespace(std::string_view s) {
  std::vector<std::string> out;
  std::istringstream is{std::string(s)};
  for (std::string tok; is >> tok;) out.push_back(tok);
  return out;
}

}  // namespace

PhonemeSequence text_to_phonemes(std::string_view text, const Lexicon& lexicon) {
  const std::string norm = normalize_text(text);
  if (norm.empty()) throw InputError("text is empty after normalization");
  PhonemeSequence seq;
  seq.inventory_size = lexicon.inventory_size_;
  switch (lexicon.mode_) {
    case Lexicon::Mode::kCharacters: {
      // A word owns its characters plus the space that follows it.
      std::string word;
      int span = 0;
      for (std::size_t i = 0; i < norm.size(); ++i) {
        const char c = norm[i];
        const auto pos = lexicon.alphabet_.find(c);
        if (pos == std::string::npos) throw InputError(std::string("unknown symbol '") + c + "' in text");
        seq.ids.push_back(static_cast<int>(pos));
        ++span;
        if (c != ' ') word.push_back(c);
        if (c == ' ' || i + 1 == norm.size()) {
          seq.words.push_back(word);
          seq.spans.push_back(span);
          word.clear();
          span = 0;
        }
      }
      break;
    }
    case Lexicon::Mode::kWords:
      for (const auto& tok : split_whitespace(norm)) {
        auto it = lexicon.entries_.find(tok);
        if (it == lexicon.entries_.end()) throw InputError("unknown symbol '" + tok + "' in text");
        seq.ids.insert(seq.ids.end(), it->second.begin(), it->second.end());
        seq.words.push_back(tok);
        seq.spans.push_back(static_cast<int>(it->second.size()));
      }
      break;
    case Lexicon::Mode::kIds:
      for (const auto& tok : split_whitespace(norm)) {
        int id = 0;
        std::size_t used = 0;
        try {
          id = std::stoi(tok, &used);
        } catch (const std::exception&) {
          used = 0;
        }
        if (used != tok.size()) throw InputError("unknown symbol '" + tok + "' in text");
        seq.ids.push_back(id);
        seq.words.push_back(tok);
        seq.spans.push_back(1);
      }
      break;
  }
  seq.validate();
  return seq;
}

Lexicon Lexicon::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open lexicon " + path.string());
  std::string header;
  std::getline(in, header);
  std::string mode;
  std::size_t inventory = 0;
  for (const auto& field : split_whitespace(header)) {
    const auto eq = field.find('=');
    if (eq == std::string::npos) continue;
    const auto key = field.substr(0, eq), value = field.substr(eq + 1);
    if (key == "mode") mode = value;
    if (key == "inventory") inventory = std::stoul(value);
  }
  if (mode == "ids") return ids(inventory);
  if (mode == "characters") {
    std::string line;
    std::getline(in, line);
    if (line.rfind("alphabet=", 0) != 0) throw FormatError(path.string() + ": missing alphabet line");
    return characters(line.substr(9));
  }
  if (mode == "words") {
    std::map<std::string, std::vector<int>> entries;
    for (std::string line; std::getline(in, line);) {
      if (line.empty()) continue;
      const auto tab = line.find('\t');
      if (tab == std::string::npos) throw FormatError(path.string() + ": malformed entry '" + line + "'");
      std::vector<int> idv;
      for (const auto& t : split_whitespace(line.substr(tab + 1))) idv.push_back(std::stoi(t));
      entries[line.substr(0, tab)] = std::move(idv);
    }
    return words(std::move(entries), inventory);
  }
  throw FormatError(path.string() + ": unknown lexicon mode '" + mode + "'");
}

void Lexicon::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write lexicon " + path.string());
  const char* name = mode_ == Mode::kCharacters ? "characters" : mode_ == Mode::kWords ? "words" : "ids";
  out << "mode=" << name << " inventory=" << inventory_size_ << '\n';
  if (mode_ == Mode::kCharacters) out << "alphabet=" << alphabet_ << '\n';
  if (mode_ == Mode::kWords) {
    for (const auto& [word, idv] : entries_) {
      out << word << '\t';
      for (std::size_t i = 0; i < idv.size(); ++i) out << (i ? " " : "") << idv[i];
      out << '\n';
    }
  }
}

}  // namespace psyn
