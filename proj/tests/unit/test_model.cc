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
#include <set>

#include "doctest.h"
#include "psyn/binary_io.h"
#include "psyn/checkpoint.h"
#include "psyn/config.h"
#include "psyn/corpus.h"
#include "psyn/errors.h"
#include "psyn/model.h"
#include "psyn/optim.h"
#include "psyn/training.h"
#include "support.h"

using namespace psyn;

namespace {

ModelConfig tiny_config(std::size_t inventory) {
  ModelConfig c;
  c.d_model = 8;
  c.heads = 2;
  c.window = 2;
  c.aligner_blocks = 1;
  c.encoder_blocks = 1;
  c.decoder_blocks = 1;
  c.duration_blocks = 1;
  c.learner_layers = 1;
  c.predictor_convs = 1;
  c.predictor_blocks = 1;
  c.word_dim = 4;
  c.phoneme_inventory = inventory;
  return c;
}

TrainConfig tiny_train(int steps) {
  TrainConfig t;
  t.steps = steps;
  t.batch_size = 4;
  t.stage2_steps = steps;
  t.eval_every = 1000;
  return t;
}

struct TinyCorpus {
  Manifest manifest;
  std::vector<Utterance> utterances;
};

TinyCorpus tiny_corpus(const std::string& name, std::size_t count = 8) {
  SyntheticCorpusOptions opts;
  opts.utterances = count;
  opts.split = 0.75;
  opts.seed = 3;
  const auto dir = psyn::test::scratch_dir(name);
  TinyCorpus c;
  c.manifest = generate_synthetic_corpus(dir, opts);
  c.utterances = load_utterances(c.manifest);
  return c;
}

std::vector<std::vector<float>> snapshot(const ParameterSet& params) {
  std::vector<std::vector<float>> out;
  for (const auto& [name, t] : params.entries()) out.push_back(t.values());
  return out;
}

}  // namespace

TEST_SUITE("model") {
  TEST_CASE("noam schedule") {
    CHECK(noam_lr(1, 64, 100, 1.0f) == doctest::Approx(std::pow(64.0, -0.5) * std::pow(100.0, -1.5)));
    CHECK(noam_lr(100, 64, 100, 1.0f) == doctest::Approx(std::pow(64.0, -0.5) * 0.1));
    CHECK(noam_lr(400, 64, 100, 1.0f) == doctest::Approx(std::pow(64.0, -0.5) * 0.05));
    CHECK(noam_lr(100, 64, 100, 0.2f) == doctest::Approx(0.2 * std::pow(64.0, -0.5) * 0.1));
    CHECK(noam_lr(99, 64, 100, 1.0f) < noam_lr(100, 64, 100, 1.0f));
    CHECK(noam_lr(101, 64, 100, 1.0f) < noam_lr(100, 64, 100, 1.0f));
  }

  TEST_CASE("settings parsing and validation") {
    const Settings s = parse_settings("# comment\nd_model = 16\n\nsteps=5\n");
    CHECK(s.at("d_model") == "16");
    ModelConfig m = ModelConfig::desk();
    TrainConfig t;
    apply_settings(s, m, t);
    CHECK(m.d_model == 16);
    CHECK(t.steps == 5);
    CHECK_THROWS_AS(apply_settings({{"no_such_key", "1"}}, m, t), ConfigError);
    CHECK_THROWS_AS(apply_settings({{"d_model", "abc"}}, m, t), ConfigError);
    m.heads = 3;
    CHECK_THROWS_AS(m.validate(), ConfigError);
    ModelConfig round = ModelConfig::paper();
    round.phoneme_inventory = 40;
    ModelConfig back = ModelConfig::desk();
    TrainConfig unused;
    apply_settings(parse_settings(model_config_to_settings(round)), back, unused);
    CHECK(model_config_to_settings(back) == model_config_to_settings(round));
  }

  TEST_CASE("full-size preset sizes") {
    const ModelConfig p = ModelConfig::paper();
    CHECK(p.d_model == 768);
    CHECK(p.window == 10);
    CHECK(p.encoder_blocks == 6);
    CHECK(p.decoder_blocks == 6);
    CHECK(p.duration_blocks == 3);
    CHECK(p.prosody_dim == 3);
  }

  TEST_CASE("binary readers reject truncation") {
    ByteWriter w;
    w.u32(7);
    w.u64(1ull << 40);
    const std::string bytes = w.str();
    ByteReader r(bytes, "blob");
    CHECK(r.u32() == 7);
    CHECK(r.u64() == (1ull << 40));
    CHECK_NOTHROW(r.expect_end());
    ByteReader short_read(std::string_view(bytes).substr(0, 6), "blob");
    short_read.u32();
    CHECK_THROWS_AS(short_read.u64(), FormatError);
  }

  TEST_CASE("MELB, PROS and duration files round trip") {
    const auto dir = psyn::test::scratch_dir("files");
    Rng rng(1);
    const Tensor mel = psyn::test::random_tensor({7, 80}, rng);
    write_melb(dir / "a.melb", mel);
    CHECK(read_melb(dir / "a.melb").values() == mel.values());
    CHECK(melb_frames(dir / "a.melb") == 7);
    std::string bytes = encode_melb(mel);
    CHECK_THROWS_AS(decode_melb(std::string_view(bytes).substr(0, bytes.size() - 4)), FormatError);
    bytes[0] = 'X';
    CHECK_THROWS_AS(decode_melb(bytes), FormatError);
    CHECK_THROWS_AS(encode_melb(Tensor({3, 40})), DimensionError);

    const Tensor pros = psyn::test::random_tensor({4, 3}, rng);
    write_prosody(dir / "a.pros", pros);
    const Tensor back = read_prosody(dir / "a.pros");
    CHECK(back.shape() == pros.shape());
    CHECK(back.values() == pros.values());

    write_durations(dir / "a.dur", Alignment{{3, 1, 4}});
    CHECK(read_durations(dir / "a.dur").durations == std::vector<int>{3, 1, 4});
  }

  TEST_CASE("manifest format and validation") {
    auto corpus = tiny_corpus("manifest", 6);
    const Manifest& m = corpus.manifest;
    CHECK(m.entries.size() == 6);
    const std::string text = format_manifest(m);
    CHECK(format_manifest(parse_manifest(text, m.directory)) == text);

    Manifest bad = m;
    bad.entries[2].spans.back() += 1;
    save_manifest(m.directory / "bad.tsv", bad);
    try {
      load_manifest(m.directory / "bad.tsv");
      FAIL("expected an error");
    } catch (const Error& e) {
      INFO(std::string(e.what()));
      CHECK(std::string(e.what()).find("line 4") != std::string::npos);
    }

    Manifest missing = m;
    missing.entries[0].mel = "mel/none.melb";
    save_manifest(m.directory / "missing.tsv", missing);
    CHECK_THROWS_AS(load_manifest(m.directory / "missing.tsv"), InputError);

    Manifest out_of_range = m;
    out_of_range.entries[1].phonemes[0] = static_cast<int>(m.inventory_size);
    save_manifest(m.directory / "range.tsv", out_of_range);
    CHECK_THROWS(load_manifest(m.directory / "range.tsv"));
  }

  TEST_CASE("synthetic corpus is seed-deterministic with a 98/2 split") {
    SyntheticCorpusOptions opts;
    opts.seed = 7;
    const auto a = psyn::test::scratch_dir("seed_a"), b = psyn::test::scratch_dir("seed_b");
    const Manifest ma = generate_synthetic_corpus(a, opts);
    const Manifest mb = generate_synthetic_corpus(b, opts);
    CHECK(read_file_bytes(a / "manifest.tsv") == read_file_bytes(b / "manifest.tsv"));
    for (const auto& e : ma.entries) CHECK(read_file_bytes(a / e.mel) == read_file_bytes(b / e.mel));
    std::size_t held = 0;
    for (const auto& e : mb.entries) held += e.held_out ? 1 : 0;
    CHECK(ma.entries.size() == 100);
    CHECK(held == 2);
    CHECK(training_count(100, 0.98) == 98);
    CHECK(training_count(3, 0.01) == 1);
  }

  TEST_CASE("parameter names are unique and the aligner sees phonemes only") {
    TtsModel model(tiny_config(10), 1);
    std::set<std::string> names;
    for (const auto& [name, t] : model.params().entries()) CHECK(names.insert(name).second);
    Rng rng(2);
    const std::vector<int> ids{1, 2, 3};
    const Tensor emb = model.embed_phonemes(ids);
    const Tensor zero({3, 8}, 0.0f);
    const Tensor other = psyn::test::random_tensor({3, 8}, rng);
    const EncoderOutput a = model.encoder_forward(ids, zero), b = model.encoder_forward(ids, other);
    CHECK(a.stats.mean.values() == b.stats.mean.values());
    CHECK(a.stats.mean.values() == model.emission_stats(emb).mean.values());
    CHECK(a.hidden.values() != b.hidden.values());
    CHECK(a.log_durations.rows() == 3);
  }

  TEST_CASE("stage 1 loss terms") {
    auto corpus = tiny_corpus("loss", 4);
    TtsModel model(tiny_config(corpus.manifest.inventory_size), 1);
    const Utterance& utt = corpus.utterances[0];
    Stage1LossOptions warm;
    warm.align_only = true;
    const Stage1Terms w = stage1_loss(model, utt, warm);
    CHECK_FALSE(w.mel_l1.defined());
    CHECK(w.total.item() == doctest::Approx(w.align.item()));
    const Stage1Terms full = stage1_loss(model, utt, Stage1LossOptions{});
    CHECK(full.alignment.frames() == static_cast<long>(utt.mel.rows()));
    const double expected = full.mel_l1.item() + 0.1 * full.duration_mse.item() + full.align.item();
    CHECK(full.total.item() == doctest::Approx(expected).epsilon(1e-5));
    Stage1LossOptions side;
    side.use_sidecar_alignment = true;
    Utterance with_sidecar = utt;
    with_sidecar.alignment = Alignment{utt.reference_durations};
    CHECK(stage1_loss(model, with_sidecar, side).alignment.durations == utt.reference_durations);
  }

  TEST_CASE("checkpoint round trip is bit-exact") {
    auto corpus = tiny_corpus("ckpt", 6);
    TtsModel model(tiny_config(corpus.manifest.inventory_size), 5);
    Adam adam;
    const TrainConfig train = tiny_train(3);
    stage1_train(model, adam, corpus.utterances, train);
    const std::string bytes = serialize_checkpoint(model, adam, train, 3);
    const Checkpoint back = deserialize_checkpoint(bytes);
    CHECK(back.step == 3);
    CHECK(back.model->trained_stage() == 1);
    CHECK(snapshot(back.model->params()) == snapshot(model.params()));
    CHECK(serialize_checkpoint(*back.model, back.adam, back.train, back.step) == bytes);

    std::string corrupt = bytes;
    corrupt[0] = 'Q';
    CHECK_THROWS_AS(deserialize_checkpoint(corrupt), FormatError);
    CHECK_THROWS_AS(deserialize_checkpoint(std::string_view(bytes).substr(0, bytes.size() - 1)), FormatError);
  }

  TEST_CASE("worker count does not change the training curve") {
    auto corpus = tiny_corpus("workers", 8);
    std::vector<std::vector<std::vector<float>>> finals;
    std::vector<std::vector<double>> curves;
    for (int workers : {1, 3}) {
      TtsModel model(tiny_config(corpus.manifest.inventory_size), 9);
      Adam adam;
      TrainConfig train = tiny_train(4);
      train.workers = workers;
      const Stage1Result r = stage1_train(model, adam, corpus.utterances, train);
      std::vector<double> curve;
      for (const auto& s : r.curve) curve.push_back(s.loss);
      curves.push_back(curve);
      finals.push_back(snapshot(model.params()));
    }
    CHECK(curves[0] == curves[1]);
    CHECK(finals[0] == finals[1]);
  }

  TEST_CASE("stage 2 trains only the predictor and enables synthesis") {
    auto corpus = tiny_corpus("stage2", 8);
    TtsModel model(tiny_config(corpus.manifest.inventory_size), 4);
    Adam adam;
    const TrainConfig train = tiny_train(3);
    const auto provider = stub_word_embeddings(4);
    CHECK_THROWS_AS(stage2_train(model, adam, corpus.utterances, *provider, train), StageError);
    stage1_train(model, adam, corpus.utterances, train);
    CHECK_THROWS_AS(synthesize(model, corpus.utterances[0].phonemes, *provider, {}), StageError);

    extract_alignments(model, corpus.utterances);
    extract_prosody_targets(model, corpus.utterances);
    for (const auto& u : corpus.utterances) {
      CHECK(u.prosody_target.rows() == u.phonemes.ids.size());
      CHECK(u.prosody_target.cols() == 3);
    }
    const auto before = model.params().entries();
    std::vector<std::vector<float>> frozen;
    for (const auto& [name, t] : before) frozen.push_back(t.values());
    Adam adam2;
    const Stage2Result r = stage2_train(model, adam2, corpus.utterances, *provider, train);
    CHECK(std::isfinite(r.initial_nll));
    CHECK(model.trained_stage() == 2);
    bool predictor_moved = false;
    for (std::size_t i = 0; i < before.size(); ++i) {
      const auto& [name, t] = model.params().entries()[i];
      if (name.rfind(kPredictorPrefix, 0) == 0) {
        predictor_moved = predictor_moved || t.values() != frozen[i];
      } else {
        CHECK_MESSAGE(t.values() == frozen[i], name);
      }
    }
    CHECK(predictor_moved);

    const PhonemeSequence& seq = corpus.utterances[0].phonemes;
    SynthesisOptions argmax;
    const SynthesisResult s = synthesize(model, seq, *provider, argmax);
    CHECK(s.mel.frames() == static_cast<std::size_t>(s.durations.frames()));
    CHECK(s.durations.durations.size() == seq.ids.size());
    CHECK(s.mel.values.cols() == 80);
    argmax.seed = 77;
    CHECK(synthesize(model, seq, *provider, argmax).mel.values.values() == s.mel.values.values());
    SynthesisOptions stretched;
    stretched.duration_scale = 2.0f;
    CHECK(synthesize(model, seq, *provider, stretched).durations.frames() >= s.durations.frames());
  }

  TEST_CASE("stage 2 keeps the predictor with the lowest validation NLL") {
    auto corpus = tiny_corpus("stage2val", 10);
    TtsModel model(tiny_config(corpus.manifest.inventory_size), 4);
    Adam adam;
    TrainConfig train = tiny_train(4);
    train.eval_every = 2;
    train.stage2_validation = 0.2f;
    const auto provider = stub_word_embeddings(4);
    stage1_train(model, adam, corpus.utterances, train);
    extract_alignments(model, corpus.utterances);
    extract_prosody_targets(model, corpus.utterances);

    TtsModel copy(tiny_config(corpus.manifest.inventory_size), 4);
    copy.params().copy_values_from(model.params());
    copy.set_trained_stage(1);
    Adam a1, a2;
    const Stage2Result r = stage2_train(model, a1, corpus.utterances, *provider, train);
    CHECK(r.curve.size() == 4);
    CHECK((r.best_step == 0 || r.best_step == 2 || r.best_step == 4));
    CHECK(std::isfinite(r.validation_nll));

    train.stage2_validation = 0.0f;
    const Stage2Result full = stage2_train(copy, a2, corpus.utterances, *provider, train);
    CHECK(full.best_step == 4);
    CHECK(full.validation_nll == 0.0);

    train.stage2_validation = 1.0f;
    CHECK_THROWS_AS(train.validate(), ConfigError);
  }

  TEST_CASE("zero prosody differs from learner prosody only in the embedding") {
    auto corpus = tiny_corpus("zero", 4);
    TtsModel model(tiny_config(corpus.manifest.inventory_size), 6);
    const Utterance& utt = corpus.utterances[0];
    const Alignment al{utt.reference_durations};
    const Tensor zero = reconstruct_mel(model, utt, al, ProsodySource::kZero);
    const Tensor learned = reconstruct_mel(model, utt, al, ProsodySource::kLearner);
    CHECK(zero.rows() == utt.mel.rows());
    CHECK(learned.rows() == utt.mel.rows());
    const Tensor rep = model.learn_prosody(utt.mel, al);
    CHECK(reconstruct_mel_with(model, utt, al, rep).values() == learned.values());
    CHECK(mel_l1(zero, zero) == 0.0);
  }
}
