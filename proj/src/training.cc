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

#include "psyn/training.h"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <memory>
#include <numeric>
#include <sstream>
#include <thread>

namespace psyn {
namespace {

// Epoch-wise shuffled batches; the whole set every step when it is smaller
// than a batch.
class BatchSampler {
 public:
  BatchSampler(std::size_t count, std::size_t batch, std::uint64_t seed)
      : count_(count), batch_(batch), rng_(seed ^ 0x5bd1e995ULL) {
    order_.resize(count_);
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    cursor_ = count_;
  }

  std::vector<std::size_t> next() {
    if (batch_ >= count_) return std::vector<std::size_t>(order_.begin(), order_.end());
    std::vector<std::size_t> out;
    while (out.size() < batch_) {
      if (cursor_ == count_) {
        std::shuffle(order_.begin(), order_.end(), rng_);
        cursor_ = 0;
      }
      out.push_back(order_[cursor_++]);
    }
    return out;
  }

 private:
  std::size_t count_;
  std::size_t batch_;
  Rng rng_;
  std::vector<std::size_t> order_;
  std::size_t cursor_;
};

Rng utterance_rng(std::uint64_t seed, int step, std::size_t position) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(step), static_cast<std::uint32_t>(position)};
  return Rng(seq);
}

struct UtteranceOutcome {
  double loss = 0.0;
  double mel_l1 = 0.0;
  double align = 0.0;
  double duration = 0.0;
};

using LossFn = std::function<std::pair<Tensor, UtteranceOutcome>(const TtsModel&, const Utterance&, Rng*)>;

// Runs one batch over worker replicas and leaves the batch-mean gradient of
// the selected parameters in `model`. Gradient slots are reduced serially in
// batch order.
class BatchRunner {
 public:
  BatchRunner(const TtsModel& model, int workers, std::function<bool(const std::string&)> filter)
      : filter_(std::move(filter)) {
    for (int w = 0; w < workers; ++w) replicas_.push_back(std::make_unique<TtsModel>(model.config()));
    const auto& entries = model.params().entries();
    for (std::size_t p = 0; p < entries.size(); ++p) {
      if (filter_ && !filter_(entries[p].first)) continue;
      selected_.push_back(p);
      offsets_.push_back(width_);
      width_ += entries[p].second.size();
    }
  }

  UtteranceOutcome run(TtsModel& model, const std::vector<const Utterance*>& batch, std::uint64_t seed, int step,
                       bool dropout, const LossFn& loss_fn) {
    const std::size_t count = batch.size();
    slots_.resize(count);
    std::vector<UtteranceOutcome> outcomes(count);
    for (auto& replica : replicas_) replica->params().copy_values_from(model.params());

    const std::size_t workers = std::min(replicas_.size(), count);
    std::vector<std::exception_ptr> errors(workers);
    auto work = [&](std::size_t w) {
      try {
        TtsModel& replica = *replicas_[w];
        for (std::size_t b = w; b < count; b += workers) {
          replica.params().zero_grad();
          Rng rng = utterance_rng(seed, step, b);
          Tape tape;
          {
            Tape::Scope scope(tape);
            auto [total, outcome] = loss_fn(replica, *batch[b], dropout ? &rng : nullptr);
            outcomes[b] = outcome;
            tape.backward(total);
          }
          auto& slot = slots_[b];
          slot.assign(width_, 0.0f);
          const auto& entries = replica.params().entries();
          for (std::size_t k = 0; k < selected_.size(); ++k) {
            const Tensor& t = entries[selected_[k]].second;
            if (!t.has_grad()) continue;
            const auto& g = t.impl()->grad;
            std::copy(g.begin(), g.end(), slot.begin() + static_cast<std::ptrdiff_t>(offsets_[k]));
          }
        }
      } catch (...) {
        errors[w] = std::current_exception();
      }
    };
    std::vector<std::thread> threads;
    for (std::size_t w = 1; w < workers; ++w) threads.emplace_back(work, w);
    work(0);
    for (auto& t : threads) t.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);

    model.params().zero_grad();
    const float inv = 1.0f / static_cast<float>(count);
    const auto& entries = model.params().entries();
    for (std::size_t k = 0; k < selected_.size(); ++k) {
      Tensor t = entries[selected_[k]].second;
      auto g = t.grad_buffer();
      for (std::size_t b = 0; b < count; ++b) {
        const float* src = slots_[b].data() + offsets_[k];
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += src[i];
      }
      for (auto& v : g) v *= inv;
    }

    UtteranceOutcome mean;
    for (const auto& o : outcomes) {
      mean.loss += o.loss;
      mean.mel_l1 += o.mel_l1;
      mean.align += o.align;
      mean.duration += o.duration;
    }
    mean.loss /= static_cast<double>(count);
    mean.mel_l1 /= static_cast<double>(count);
    mean.align /= static_cast<double>(count);
    mean.duration /= static_cast<double>(count);
    return mean;
  }

 private:
  std::function<bool(const std::string&)> filter_;
  std::vector<std::unique_ptr<TtsModel>> replicas_;
  std::vector<std::size_t> selected_;
  std::vector<std::size_t> offsets_;
  std::size_t width_ = 0;
  std::vector<std::vector<float>> slots_;
};

bool is_predictor(const std::string& name) { return name.rfind(kPredictorPrefix, 0) == 0; }

void check_finite_loss(double loss, int step, double last_finite) {
  if (std::isfinite(loss)) return;
  std::ostringstream os;
  os << "training diverged at step " << step << " (last finite loss " << last_finite << ")";
  throw NumericError(os.str());
}

double teacher_forced_l1(const TtsModel& model, const std::vector<const Utterance*>& utts, bool prefer_sidecar) {
  double acc = 0.0;
  for (const Utterance* u : utts) {
    const Alignment a = teacher_alignment(model, *u, prefer_sidecar);
    acc += mel_l1(reconstruct_mel(model, *u, a, ProsodySource::kLearner), u->mel);
  }
  return utts.empty() ? 0.0 : acc / static_cast<double>(utts.size());
}

std::vector<const Utterance*> train_pointers(const std::vector<Utterance>& corpus) {
  std::vector<const Utterance*> out;
  for (const auto& u : corpus)
    if (!u.held_out) out.push_back(&u);
  return out;
}

double mean_nll(const TtsModel& model, const std::vector<const Utterance*>& utts,
                const WordEmbeddingProvider& provider) {
  double acc = 0.0;
  for (const Utterance* u : utts)
    acc += mdn_nll(model.predict_prosody(u->phonemes, provider), u->prosody_target, model.config().mixtures,
                   model.config().prosody_dim)
               .item();
  return acc / static_cast<double>(utts.size());
}

std::vector<std::vector<float>> predictor_snapshot(const TtsModel& model) {
  std::vector<std::vector<float>> out;
  for (const auto& [name, t] : model.params().entries())
    if (is_predictor(name)) out.push_back(t.values());
  return out;
}

void restore_predictor(TtsModel& model, const std::vector<std::vector<float>>& snapshot) {
  std::size_t i = 0;
  for (const auto& [name, t] : model.params().entries()) {
    if (!is_predictor(name)) continue;
    Tensor dst = t;
    std::copy(snapshot[i].begin(), snapshot[i].end(), dst.data().begin());
    ++i;
  }
}

}  // namespace

Stage1Result stage1_train(TtsModel& model, Adam& adam, const std::vector<Utterance>& corpus,
                          const TrainConfig& train, const Stage1Options& options, const StepCallback& on_step) {
  train.validate();
  const auto utts = train_pointers(corpus);
  if (utts.empty()) throw InputError("no training utterances");
  for (const Utterance* u : utts) {
    u->phonemes.validate();
    if (u->mel.rank() != 2 || u->mel.cols() != model.config().mel_channels)
      throw DimensionError("utterance " + u->id + ": mel must have 80 channels");
    if (u->mel.rows() < u->phonemes.ids.size())
      throw InvariantError("utterance " + u->id + ": fewer frames than phonemes");
    if (options.use_sidecar_alignment && !u->alignment)
      throw InputError("utterance " + u->id + ": missing alignment");
  }

  const int warmup_steps = static_cast<int>(std::floor(train.align_warmup_fraction * static_cast<float>(train.steps)));
  BatchSampler sampler(utts.size(), static_cast<std::size_t>(train.batch_size), train.seed);
  BatchRunner runner(model, train.workers, [](const std::string& n) { return !is_predictor(n); });
  const bool dropout = model.config().dropout > 0.0f;

  Stage1Result result;
  double last_finite = 0.0;
  for (int step = 1; step <= train.steps; ++step) {
    Stage1LossOptions loss_options;
    loss_options.lambda_dur = train.lambda_dur;
    loss_options.lambda_align = train.lambda_align;
    loss_options.align_only = step <= warmup_steps;
    loss_options.use_sidecar_alignment = options.use_sidecar_alignment;

    std::vector<const Utterance*> batch;
    for (std::size_t i : sampler.next()) batch.push_back(utts[i]);

    const UtteranceOutcome mean = runner.run(
        model, batch, train.seed, step, dropout,
        [&loss_options](const TtsModel& replica, const Utterance& utt, Rng* rng) {
          Stage1Terms terms = stage1_loss(replica, utt, loss_options, rng);
          UtteranceOutcome o;
          o.loss = terms.total.item();
          o.align = terms.align.item();
          if (terms.mel_l1.defined()) o.mel_l1 = terms.mel_l1.item();
          if (terms.duration_mse.defined()) o.duration = terms.duration_mse.item();
          return std::make_pair(terms.total, o);
        });
    check_finite_loss(mean.loss, step, last_finite);
    last_finite = mean.loss;

    const float lr = noam_lr(step, model.config().d_model, train.lr_warmup, train.lr_scale);
    adam.step(model.params(), lr, [](const std::string& n) { return !is_predictor(n); });

    StepRecord rec{step, mean.loss, mean.mel_l1, mean.align, mean.duration, lr};
    result.curve.push_back(rec);
    result.steps_run = step;
    if (on_step) on_step(rec);

    if (train.target_l1 > 0.0f && step > warmup_steps && step % train.eval_every == 0) {
      result.train_l1 = teacher_forced_l1(model, utts, options.use_sidecar_alignment);
      if (result.train_l1 < train.target_l1) {
        result.stopped_early = true;
        break;
      }
    }
  }
  if (!result.stopped_early) result.train_l1 = teacher_forced_l1(model, utts, options.use_sidecar_alignment);
  model.set_trained_stage(std::max(model.trained_stage(), 1));
  return result;
}

Stage2Result stage2_train(TtsModel& model, Adam& adam, const std::vector<Utterance>& corpus,
                          const WordEmbeddingProvider& provider, const TrainConfig& train,
                          const StepCallback& on_step) {
  train.validate();
  if (model.trained_stage() < 1) throw StageError("stage 2 needs a stage-1 checkpoint; run stage-1 training first");
  const auto utts = train_pointers(corpus);
  if (utts.empty()) throw InputError("no training utterances");
  const std::size_t dp = model.config().prosody_dim;
  for (const Utterance* u : utts) {
    if (!u->prosody_target.defined())
      throw InputError("utterance " + u->id + ": missing prosody target; run extract-prosody first");
    if (u->prosody_target.rank() != 2 || u->prosody_target.cols() != dp ||
        u->prosody_target.rows() != u->phonemes.ids.size()) {
      throw DimensionError("utterance " + u->id + ": prosody target " +
                           shape_to_string(u->prosody_target.shape()) + " does not match " +
                           std::to_string(u->phonemes.ids.size()) + " phonemes x D_p=" + std::to_string(dp));
    }
  }

  Stage2Result result;
  result.initial_nll = prosody_nll(model, corpus, provider);

  // Seeded validation subset of the training split for early stopping.
  std::vector<std::size_t> order(utts.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng split_rng(train.seed + 2);
  std::shuffle(order.begin(), order.end(), split_rng);
  std::size_t n_val = static_cast<std::size_t>(std::lround(train.stage2_validation * static_cast<double>(utts.size())));
  n_val = std::min(n_val, utts.size() - 1);
  std::vector<const Utterance*> fit, val;
  for (std::size_t i = 0; i < order.size(); ++i) (i < n_val ? val : fit).push_back(utts[order[i]]);
  std::sort(fit.begin(), fit.end());
  std::vector<std::vector<float>> best;
  double best_nll = std::numeric_limits<double>::infinity();
  auto track = [&](int step) {
    const double v = mean_nll(model, val, provider);
    if (v < best_nll) {
      best_nll = v;
      best = predictor_snapshot(model);
      result.best_step = step;
    }
  };
  if (!val.empty()) track(0);

  BatchSampler sampler(fit.size(), static_cast<std::size_t>(train.batch_size), train.seed + 1);
  BatchRunner runner(model, train.workers, is_predictor);
  const bool dropout = model.config().dropout > 0.0f;
  const std::size_t mixtures = model.config().mixtures;
  double last_finite = result.initial_nll;
  for (int step = 1; step <= train.stage2_steps; ++step) {
    std::vector<const Utterance*> batch;
    for (std::size_t i : sampler.next()) batch.push_back(fit[i]);
    const UtteranceOutcome mean = runner.run(
        model, batch, train.seed + 1, step, dropout,
        [&provider, mixtures, dp](const TtsModel& replica, const Utterance& utt, Rng* rng) {
          Tensor nll = mdn_nll(replica.predict_prosody(utt.phonemes, provider, rng), utt.prosody_target, mixtures, dp);
          UtteranceOutcome o;
          o.loss = nll.item();
          return std::make_pair(nll, o);
        });
    check_finite_loss(mean.loss, step, last_finite);
    last_finite = mean.loss;
    const float lr = noam_lr(step, model.config().d_model, train.lr_warmup, train.lr_scale);
    adam.step(model.params(), lr, is_predictor);
    StepRecord rec{step, mean.loss, 0.0, 0.0, 0.0, lr};
    result.curve.push_back(rec);
    if (on_step) on_step(rec);
    if (!val.empty() && (step % train.eval_every == 0 || step == train.stage2_steps)) track(step);
  }
  if (!val.empty()) {
    restore_predictor(model, best);
    result.validation_nll = best_nll;
  } else {
    result.best_step = train.stage2_steps;
  }
  result.final_nll = prosody_nll(model, corpus, provider);
  model.set_trained_stage(2);
  return result;
}

void extract_alignments(const TtsModel& model, std::vector<Utterance>& corpus) {
  for (auto& u : corpus) u.alignment = teacher_alignment(model, u, false);
}

void extract_prosody_targets(const TtsModel& model, std::vector<Utterance>& corpus) {
  if (model.trained_stage() < 1) throw StageError("prosody extraction needs a stage-1 checkpoint");
  for (auto& u : corpus) {
    if (!u.alignment) throw InputError("utterance " + u.id + ": missing alignment; run align first");
    u.prosody_target = model.learn_prosody(u.mel, *u.alignment);
  }
}

double prosody_nll(const TtsModel& model, const std::vector<Utterance>& corpus,
                   const WordEmbeddingProvider& provider) {
  double acc = 0.0;
  std::size_t count = 0;
  for (const auto& u : corpus) {
    if (u.held_out || !u.prosody_target.defined()) continue;
    acc += mdn_nll(model.predict_prosody(u.phonemes, provider), u.prosody_target, model.config().mixtures,
                   model.config().prosody_dim)
               .item();
    ++count;
  }
  if (count == 0) throw InputError("no prosody targets");
  return acc / static_cast<double>(count);
}

EvalMetrics evaluate(const TtsModel& model, const std::vector<Utterance>& corpus,
                     const WordEmbeddingProvider* provider, bool prefer_sidecar) {
  EvalMetrics m;
  double dur_err = 0.0, pred_err = 0.0, nll = 0.0;
  std::size_t dur_count = 0, nll_count = 0;
  for (const auto& u : corpus) {
    const Alignment a = teacher_alignment(model, u, prefer_sidecar);
    const Tensor representation = model.learn_prosody(u.mel, a);
    m.mel_l1 += mel_l1(reconstruct_mel_with(model, u, a, representation), u.mel);
    m.mel_l1_zero_prosody += mel_l1(reconstruct_mel(model, u, a, ProsodySource::kZero), u.mel);
    if (u.reference_durations.size() == a.phonemes()) {
      EncoderOutput enc = model.encode(model.embed_phonemes(u.phonemes.ids), model.map_prosody(representation));
      const Alignment predicted = durations_from_predictor(enc.log_durations.data());
      for (std::size_t i = 0; i < a.phonemes(); ++i) {
        dur_err += std::abs(a.durations[i] - u.reference_durations[i]);
        pred_err += std::abs(predicted.durations[i] - u.reference_durations[i]);
      }
      dur_count += a.phonemes();
    }
    if (provider && model.trained_stage() >= 2) {
      nll += mdn_nll(model.predict_prosody(u.phonemes, *provider),
                     u.prosody_target.defined() ? u.prosody_target : representation, model.config().mixtures,
                     model.config().prosody_dim)
                 .item();
      ++nll_count;
    }
    ++m.utterances;
  }
  if (m.utterances == 0) throw InputError("no utterances to evaluate");
  m.mel_l1 /= static_cast<double>(m.utterances);
  m.mel_l1_zero_prosody /= static_cast<double>(m.utterances);
  if (dur_count > 0) {
    m.duration_mae = dur_err / static_cast<double>(dur_count);
    m.predicted_duration_mae = pred_err / static_cast<double>(dur_count);
  }
  if (nll_count > 0) m.prosody_nll = nll / static_cast<double>(nll_count);
  return m;
}

std::vector<Utterance> training_split(const std::vector<Utterance>& corpus) {
  std::vector<Utterance> out;
  for (const auto& u : corpus)
    if (!u.held_out) out.push_back(u);
  return out;
}

std::vector<Utterance> held_out_split(const std::vector<Utterance>& corpus) {
  std::vector<Utterance> out;
  for (const auto& u : corpus)
    if (u.held_out) out.push_back(u);
  return out;
}

}  // namespace psyn
