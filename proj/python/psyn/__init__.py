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

"""Feed-forward TTS with local attention and learned prosody."""

from ._core import (
    PsynError,
    align,
    evaluate,
    extract_prosody,
    forward_sum_log_likelihood,
    generate_synthetic_corpus,
    mdn_nll,
    read_melb,
    synthesize,
    train_stage1,
    train_stage2,
    verify,
    viterbi,
    wav_to_mel,
    write_melb,
)

__all__ = [
    "PsynError",
    "align",
    "evaluate",
    "extract_prosody",
    "forward_sum_log_likelihood",
    "generate_synthetic_corpus",
    "mdn_nll",
    "read_melb",
    "synthesize",
    "train_stage1",
    "train_stage2",
    "verify",
    "viterbi",
    "wav_to_mel",
    "write_melb",
]
