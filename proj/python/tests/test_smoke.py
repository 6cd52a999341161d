# Copyright (c) 2026 The psyn Authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

import math

import numpy as np
import pytest

import psyn

TINY = {
    "d_model": 8,
    "aligner_blocks": 1,
    "encoder_blocks": 1,
    "decoder_blocks": 1,
    "learner_layers": 1,
    "predictor_blocks": 1,
    "word_dim": 4,
    "steps": 6,
    "stage2_steps": 6,
    "batch_size": 4,
}


def test_mel_shape_and_floor():
    mel = psyn.wav_to_mel(np.zeros(22050, dtype=np.float32))
    assert mel.shape == (87, 80)
    assert np.all(mel == np.float32(math.log(1e-5)))
    with pytest.raises(psyn.PsynError):
        psyn.wav_to_mel(np.zeros(100, dtype=np.float32), sample_rate=16000)


def test_melb_round_trip(tmp_path):
    mel = np.random.default_rng(0).normal(size=(5, 80)).astype(np.float32)
    psyn.write_melb(tmp_path / "a.melb", mel)
    assert np.array_equal(psyn.read_melb(tmp_path / "a.melb"), mel)


def test_alignment_bindings():
    rng = np.random.default_rng(1)
    mean = rng.normal(size=(2, 4)).astype(np.float32)
    log_var = np.zeros((2, 4), dtype=np.float32)
    mel = rng.normal(size=(5, 4)).astype(np.float32)
    durations, log_prob = psyn.viterbi(mean, log_var, mel)
    assert sum(durations) == 5 and min(durations) >= 1
    assert log_prob <= psyn.forward_sum_log_likelihood(mean, log_var, mel)


def test_mdn_unit_gaussian():
    target = np.array([[0.3, -1.0, 2.0]], dtype=np.float32)
    head = np.concatenate([[0.0], target[0], np.zeros(3)]).astype(np.float32)[None, :]
    assert psyn.mdn_nll(head, target, 1) == pytest.approx(1.5 * math.log(2 * math.pi), abs=1e-4)


def test_suites_pass():
    reports = psyn.verify("all")
    assert {r["suite"] for r in reports} == {"gradients", "attention", "alignment", "mdn"}
    assert all(r["passed"] for r in reports)


def test_pipeline(tmp_path):
    manifest = psyn.generate_synthetic_corpus(tmp_path / "corpus", utterances=6, split=0.67, seed=2)
    s1 = psyn.train_stage1(manifest, tmp_path / "s1.ckpt", overrides=TINY)
    assert s1["stage"] == 1 and s1["steps"] == 6
    with pytest.raises(psyn.PsynError, match="extract-prosody"):
        psyn.train_stage2(tmp_path / "s1.ckpt", manifest, tmp_path / "s2.ckpt")
    assert psyn.align(tmp_path / "s1.ckpt", manifest)["aligned"] == 6
    assert psyn.extract_prosody(tmp_path / "s1.ckpt", manifest)["prosody_dim"] == 3
    s2 = psyn.train_stage2(tmp_path / "s1.ckpt", manifest, tmp_path / "s2.ckpt")
    assert s2["stage"] == 2
    assert "test_mel_l1" in psyn.evaluate(tmp_path / "s2.ckpt", manifest)

    lexicon = tmp_path / "corpus" / "lexicon.tsv"
    text = open(tmp_path / "corpus" / "manifest.tsv").read().splitlines()[1]
    words = dict(f.split("=", 1) for f in text.split("\t"))["words"].replace(",", " ")
    a = psyn.synthesize(tmp_path / "s2.ckpt", words, lexicon, mode="argmax", seed=1)
    b = psyn.synthesize(tmp_path / "s2.ckpt", words, lexicon, mode="argmax", seed=2)
    assert a["mel"].shape == (sum(a["durations"]), 80)
    assert np.array_equal(a["mel"], b["mel"])
    with pytest.raises(psyn.PsynError):
        psyn.synthesize(tmp_path / "s1.ckpt", words, lexicon)
