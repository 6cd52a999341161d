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

#include "psyn/corpus.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <numbers>
#include <numeric>
#include <set>
#include <sstream>

#include "psyn/binary_io.h"

namespace psyn {

namespace fs = std::filesystem;

constexpr std::size_t kChannels = kMelChannels;

std::string encode_melb(const Tensor& mel) {
  if (mel.rank() != 2 || mel.cols() != kChannels)
    throw DimensionError("MELB payload must be [frames x 80], got " + shape_to_string(mel.shape()));
  ByteWriter w;
  w.bytes(kMelMagic);
  w.u32(static_cast<std::uint32_t>(mel.rows()));
  w.u32(static_cast<std::uint32_t>(mel.cols()));
  w.floats(mel.data());
  return w.take();
}

Tensor decode_melb(std::string_view bytes, const std::string& what) {
  ByteReader r(bytes, what);
  r.expect_magic(kMelMagic);
  const std::uint32_t frames = r.u32();
  const std::uint32_t channels = r.u32();
  if (channels != kChannels)
    throw FormatError(what + ": " + std::to_string(channels) + " channels, expected 80");
  if (r.remaining() != static_cast<std::size_t>(frames) * channels * 4)
    throw FormatError(what + ": payload holds " + std::to_string(r.remaining()) + " bytes, header promises " +
                      std::to_string(static_cast<std::size_t>(frames) * channels * 4));
  Tensor mel({frames, channels});
  r.floats(mel.data());
  return mel;
}

void write_melb(const fs::path& path, const Tensor& mel) { write_file_bytes(path, encode_melb(mel)); }

Tensor read_melb(const fs::path& path) { return decode_melb(read_file_bytes(path), path.string()); }

std::size_t melb_frames(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  std::string header(16, '\0');
  in.read(header.data(), 16);
  header.resize(static_cast<std::size_t>(in.gcount()));
  ByteReader r(header, path.string());
  r.expect_magic(kMelMagic);
  const std::uint32_t frames = r.u32();
  const std::uint32_t channels = r.u32();
  if (channels != kChannels)
    throw FormatError(path.string() + ": " + std::to_string(channels) + " channels, expected 80");
  const auto expected = 16 + static_cast<std::uintmax_t>(frames) * channels * 4;
  if (fs::file_size(path) != expected)
    throw FormatError(path.string() + ": file size does not match " + std::to_string(frames) + " frames");
  return frames;
}

void write_prosody(const fs::path& path, const Tensor& representation) {
  if (representation.rank() != 2) throw DimensionError("prosody target must be a matrix");
  ByteWriter w;
  w.bytes(kProsodyMagic);
  w.u32(static_cast<std::uint32_t>(representation.rows()));
  w.u32(static_cast<std::uint32_t>(representation.cols()));
  w.floats(representation.data());
  write_file_bytes(path, w.str());
}

Tensor read_prosody(const fs::path& path) {
  const std::string bytes = read_file_bytes(path);
  ByteReader r(bytes, path.string());
  r.expect_magic(kProsodyMagic);
  const std::uint32_t rows = r.u32();
  const std::uint32_t cols = r.u32();
  if (r.remaining() != static_cast<std::size_t>(rows) * cols * 4)
    throw FormatError(path.string() + ": payload does not match " + std::to_string(rows) + "x" + std::to_string(cols));
  Tensor t({rows, cols});
  r.floats(t.data());
  return t;
}

void write_durations(const fs::path& path, const Alignment& alignment) {
  std::ostringstream os;
  for (std::size_t i = 0; i < alignment.durations.size(); ++i) os << (i ? " " : "") << alignment.durations[i];
  os << '\n';
  write_file_bytes(path, os.str());
}

namespace {

std::vector<int> parse_ints(const std::string& text, const std::string& what) {
  std::vector<int> out;
  std::istringstream is(text);
  for (std::string tok; is >> tok;) {
    std::size_t used = 0;
    int v = 0;
    try {
      v = std::stoi(tok, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != tok.size()) throw InputError(what + ": '" + tok + "' is not an integer");
    out.push_back(v);
  }
  return out;
}

std::vector<std::string> split_words(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream is(text);
  for (std::string tok; is >> tok;) out.push_back(tok);
  return out;
}

template <typename T>
std::string join(const std::vector<T>& values) {
  std::ostringstream os;
  for (std::size_t i = 0; i < values.size(); ++i) os << (i ? " " : "") << values[i];
  return os.str();
}

}  // namespace

Alignment read_durations(const fs::path& path) {
  std::string text = read_file_bytes(path);
  Alignment a{parse_ints(text, path.string())};
  if (a.durations.empty()) throw InputError(path.string() + ": no durations");
  return a;
}

Manifest parse_manifest(const std::string& text, const fs::path& directory) {
  Manifest m;
  m.directory = directory;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  bool header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::string where = "manifest line " + std::to_string(line_no);
    if (!header) {
      std::istringstream hs(line);
      std::string tag, field;
      hs >> tag >> field;
      if (tag != "psyn-manifest" || field.rfind("inventory=", 0) != 0)
        throw FormatError(where + ": expected header 'psyn-manifest inventory=<n>'");
      const auto inv = parse_ints(field.substr(10), where + ": field 'inventory'");
      if (inv.size() != 1 || inv[0] < 1) throw InputError(where + ": field 'inventory' must be >= 1");
      m.inventory_size = static_cast<std::size_t>(inv[0]);
      header = true;
      continue;
    }
    ManifestEntry e;
    e.line = line_no;
    std::istringstream fields(line);
    for (std::string field; std::getline(fields, field, '\t');) {
      const auto eq = field.find('=');
      if (eq == std::string::npos) throw FormatError(where + ": field '" + field + "' is not key=value");
      const std::string key = field.substr(0, eq), value = field.substr(eq + 1);
      const std::string what = where + ": field '" + key + "'";
      if (key == "id") e.id = value;
      else if (key == "phonemes") e.phonemes = parse_ints(value, what);
      else if (key == "words") e.words = split_words(value);
      else if (key == "spans") e.spans = parse_ints(value, what);
      else if (key == "mel") e.mel = value;
      else if (key == "dur") e.durations = value;
      else if (key == "prosody") e.prosody = value;
      else if (key == "gt_durations") e.reference_durations = parse_ints(value, what);
      else if (key == "split") {
        if (value != "train" && value != "test") throw InputError(what + ": must be train or test");
        e.held_out = value == "test";
      } else {
        throw InputError(what + ": unknown field");
      }
    }
    m.entries.push_back(std::move(e));
  }
  if (!header) throw FormatError("manifest is empty");
  return m;
}

std::string format_manifest(const Manifest& m) {
  std::ostringstream os;
  os << "psyn-manifest inventory=" << m.inventory_size << '\n';
  for (const auto& e : m.entries) {
    os << "id=" << e.id << "\tphonemes=" << join(e.phonemes) << "\twords=" << join(e.words)
       << "\tspans=" << join(e.spans) << "\tmel=" << e.mel;
    if (!e.durations.empty()) os << "\tdur=" << e.durations;
    if (!e.prosody.empty()) os << "\tprosody=" << e.prosody;
    if (!e.reference_durations.empty()) os << "\tgt_durations=" << join(e.reference_durations);
    os << "\tsplit=" << (e.held_out ? "test" : "train") << '\n';
  }
  return os.str();
}

Manifest load_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open manifest " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  Manifest m = parse_manifest(ss.str(), path.parent_path());

  std::set<std::string> ids;
  for (std::size_t k = 0; k < m.entries.size(); ++k) {
    const auto& e = m.entries[k];
    const std::string where = (e.line > 0 ? "manifest line " + std::to_string(e.line) : "manifest entry " + std::to_string(k + 1)) +
                              (e.id.empty() ? "" : " (" + e.id + ")");
    auto fail = [&](const std::string& field, const std::string& msg) {
      throw InputError(where + ": field '" + field + "': " + msg);
    };
    if (e.id.empty()) fail("id", "missing");
    if (!ids.insert(e.id).second) fail("id", "duplicate");
    if (e.phonemes.empty()) fail("phonemes", "empty");
    for (int id : e.phonemes)
      if (id < 0 || static_cast<std::size_t>(id) >= m.inventory_size)
        fail("phonemes", "id " + std::to_string(id) + " outside inventory of " + std::to_string(m.inventory_size));
    if (e.spans.empty()) fail("spans", "empty");
    if (e.words.size() != e.spans.size()) fail("words", "count differs from span count");
    for (int s : e.spans)
      if (s < 1) fail("spans", "every span must be >= 1");
    if (std::accumulate(e.spans.begin(), e.spans.end(), 0L) != static_cast<long>(e.phonemes.size()))
      fail("spans", "sum differs from the phoneme count");
    if (e.mel.empty()) fail("mel", "missing");
    if (!fs::exists(m.resolve(e.mel))) fail("mel", "file " + m.resolve(e.mel).string() + " does not exist");
    std::size_t frames = 0;
    try {
      frames = melb_frames(m.resolve(e.mel));
    } catch (const Error& err) {
      fail("mel", err.what());
    }
    if (frames < e.phonemes.size()) fail("mel", "fewer frames than phonemes");
    if (!e.durations.empty()) {
      if (!fs::exists(m.resolve(e.durations))) fail("dur", "file " + m.resolve(e.durations).string() + " does not exist");
      const Alignment a = read_durations(m.resolve(e.durations));
      if (a.phonemes() != e.phonemes.size()) fail("dur", "count differs from the phoneme count");
      try {
        a.validate(static_cast<long>(frames));
      } catch (const Error& err) {
        fail("dur", err.what());
      }
    }
    if (!e.prosody.empty() && !fs::exists(m.resolve(e.prosody)))
      fail("prosody", "file " + m.resolve(e.prosody).string() + " does not exist");
    if (!e.reference_durations.empty()) {
      if (e.reference_durations.size() != e.phonemes.size()) fail("gt_durations", "count differs from the phoneme count");
      try {
        Alignment{e.reference_durations}.validate(static_cast<long>(frames));
      } catch (const Error& err) {
        fail("gt_durations", err.what());
      }
    }
  }
  return m;
}

void save_manifest(const fs::path& path, const Manifest& manifest) {
  write_file_bytes(path, format_manifest(manifest));
}

std::vector<Utterance> load_utterances(const Manifest& manifest) {
  std::vector<Utterance> out;
  out.reserve(manifest.entries.size());
  for (const auto& e : manifest.entries) {
    Utterance u;
    u.id = e.id;
    u.phonemes.ids = e.phonemes;
    u.phonemes.inventory_size = manifest.inventory_size;
    u.phonemes.words = e.words;
    u.phonemes.spans = e.spans;
    u.phonemes.validate();
    u.mel = read_melb(manifest.resolve(e.mel));
    if (!e.durations.empty()) u.alignment = read_durations(manifest.resolve(e.durations));
    if (!e.prosody.empty()) u.prosody_target = read_prosody(manifest.resolve(e.prosody));
    u.reference_durations = e.reference_durations;
    u.held_out = e.held_out;
    out.push_back(std::move(u));
  }
  return out;
}

std::size_t training_count(std::size_t utterances, double split) {
  if (split <= 0.0 || split > 1.0) throw ConfigError("split must lie in (0, 1]");
  const auto n = static_cast<std::size_t>(std::llround(split * static_cast<double>(utterances)));
  return std::clamp<std::size_t>(n, 1, utterances);
}

namespace {

// Marks all but training_count(n, split) entries as held out, chosen by a
// seeded shuffle.
void assign_split(Manifest& m, double split, std::uint64_t seed) {
  std::vector<std::size_t> order(m.entries.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::shuffle(order.begin(), order.end(), rng);
  const std::size_t train = training_count(m.entries.size(), split);
  for (std::size_t k = 0; k < order.size(); ++k) m.entries[order[k]].held_out = k >= train;
}

std::string utterance_name(std::size_t index) {
  std::ostringstream os;
  os << "utt" << std::setfill('0') << std::setw(4) << index;
  return os.str();
}

}  // namespace

Manifest generate_synthetic_corpus(const fs::path& out, const SyntheticCorpusOptions& options) {
  if (options.utterances == 0) throw ConfigError("synthetic corpus needs at least one utterance");
  if (options.phonemes < 2) throw ConfigError("synthetic corpus needs at least two phonemes");
  Rng rng(options.seed);
  const std::size_t P = options.phonemes;

  std::vector<std::vector<float>> templates(P, std::vector<float>(kChannels));
  for (std::size_t p = 0; p < P; ++p) {
    const double f = 1.0 + 0.45 * static_cast<double>(p);
    const double phase = 0.9 * static_cast<double>(p);
    const double g = 0.5 + 0.3 * static_cast<double>(p);
    for (std::size_t c = 0; c < kChannels; ++c) {
      const double x = static_cast<double>(c) / static_cast<double>(kChannels);
      templates[p][c] = static_cast<float>(0.6 * std::sin(2.0 * std::numbers::pi * f * x + phase) +
                                           0.3 * std::cos(2.0 * std::numbers::pi * g * x));
    }
  }
  std::vector<float> contour(kChannels);
  for (std::size_t c = 0; c < kChannels; ++c)
    contour[c] = static_cast<float>(0.4 * std::cos(2.0 * std::numbers::pi * static_cast<double>(c) / 16.0));
  std::vector<int> base(P);
  for (std::size_t p = 0; p < P; ++p) base[p] = 2 + static_cast<int>((p * 7) % 4);

  std::uniform_int_distribution<int> phone(0, static_cast<int>(P) - 1);
  std::uniform_int_distribution<int> word_len(1, 3);
  std::map<std::string, std::vector<int>> lexicon;
  std::vector<std::string> vocab;
  for (std::size_t w = 0; w < options.vocabulary; ++w) {
    std::ostringstream name;
    name << 'w' << std::setfill('0') << std::setw(2) << w;
    std::vector<int> ids;
    const int len = word_len(rng);
    while (static_cast<int>(ids.size()) < len) {
      const int p = phone(rng);
      if (!ids.empty() && ids.back() == p) continue;
      ids.push_back(p);
    }
    lexicon[name.str()] = ids;
    vocab.push_back(name.str());
  }

  Manifest m;
  m.directory = out;
  m.inventory_size = P;
  std::uniform_int_distribution<int> word_count(2, 4);
  std::uniform_int_distribution<std::size_t> pick_word(0, vocab.size() - 1);
  std::uniform_int_distribution<int> jitter(-1, 1);
  std::bernoulli_distribution sign;
  std::uniform_real_distribution<float> level_jitter(-0.15f, 0.15f);
  std::uniform_real_distribution<float> phone_jitter(-0.1f, 0.1f);

  for (std::size_t u = 0; u < options.utterances; ++u) {
    ManifestEntry e;
    e.id = utterance_name(u);
    const int words = word_count(rng);
    std::vector<float> levels;
    while (static_cast<int>(e.words.size()) < words) {
      const std::string& w = vocab[pick_word(rng)];
      const auto& ids = lexicon[w];
      if (!e.phonemes.empty() && e.phonemes.back() == ids.front()) continue;
      const float level = (sign(rng) ? 1.0f : -1.0f) * (0.6f + level_jitter(rng));
      e.words.push_back(w);
      e.spans.push_back(static_cast<int>(ids.size()));
      for (int id : ids) {
        e.phonemes.push_back(id);
        levels.push_back(level + phone_jitter(rng));
      }
    }
    for (int id : e.phonemes) e.reference_durations.push_back(std::max(1, base[static_cast<std::size_t>(id)] + jitter(rng)));
    const auto frames = static_cast<std::size_t>(std::accumulate(e.reference_durations.begin(), e.reference_durations.end(), 0));
    Tensor mel({frames, kChannels});
    std::size_t t = 0;
    for (std::size_t i = 0; i < e.phonemes.size(); ++i) {
      const auto& tpl = templates[static_cast<std::size_t>(e.phonemes[i])];
      for (int k = 0; k < e.reference_durations[i]; ++k, ++t)
        for (std::size_t c = 0; c < kChannels; ++c) mel.at(t, c) = tpl[c] + levels[i] * contour[c];
    }
    e.mel = "mel/" + e.id + ".melb";
    write_melb(out / e.mel, mel);
    m.entries.push_back(std::move(e));
  }
  assign_split(m, options.split, options.seed);
  Lexicon::words(lexicon, P).save(out / "lexicon.tsv");
  save_manifest(out / "manifest.tsv", m);
  return m;
}

Manifest prepare_wav_corpus(const fs::path& wav_dir, const fs::path& out, double split, std::uint64_t seed) {
  if (!fs::is_directory(wav_dir)) throw InputError("not a directory: " + wav_dir.string());
  std::vector<fs::path> wavs;
  for (const auto& entry : fs::directory_iterator(wav_dir))
    if (entry.is_regular_file() && entry.path().extension() == ".wav") wavs.push_back(entry.path());
  std::sort(wavs.begin(), wavs.end());
  if (wavs.empty()) throw InputError("no .wav files in " + wav_dir.string());

  std::vector<std::string> transcripts;
  for (const auto& w : wavs) {
    auto txt = w;
    txt.replace_extension(".txt");
    if (!fs::exists(txt)) throw InputError("missing transcript " + txt.string());
    transcripts.push_back(read_file_bytes(txt));
  }
  Lexicon lexicon = Lexicon::ids(1);
  if (fs::exists(wav_dir / "lexicon.tsv")) {
    lexicon = Lexicon::load(wav_dir / "lexicon.tsv");
  } else {
    std::set<char> chars;
    for (const auto& t : transcripts)
      for (char c : normalize_text(t)) chars.insert(c);
    lexicon = Lexicon::characters(std::string(chars.begin(), chars.end()));
  }

  Manifest m;
  m.directory = out;
  m.inventory_size = lexicon.inventory_size();
  for (std::size_t k = 0; k < wavs.size(); ++k) {
    const WavData wav = read_wav(wavs[k]);
    const MelSpectrogram mel = wav_to_mel(wav.samples, wav.sample_rate);
    const PhonemeSequence seq = text_to_phonemes(transcripts[k], lexicon);
    if (mel.frames() < seq.ids.size())
      throw InputError(wavs[k].string() + ": " + std::to_string(mel.frames()) + " frames for " +
                       std::to_string(seq.ids.size()) + " phonemes");
    ManifestEntry e;
    e.id = wavs[k].stem().string();
    e.phonemes = seq.ids;
    e.words = seq.words;
    e.spans = seq.spans;
    e.mel = "mel/" + e.id + ".melb";
    write_melb(out / e.mel, mel.values);
    m.entries.push_back(std::move(e));
  }
  assign_split(m, split, seed);
  lexicon.save(out / "lexicon.tsv");
  save_manifest(out / "manifest.tsv", m);
  return m;
}

}  // namespace psyn
