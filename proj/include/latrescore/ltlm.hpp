// latrescore/ltlm.hpp

// Copyright 2026 The latrescore Authors
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
//
// Lattice transformer LM: a non-causal encoder over the arc set of an
// augmented lattice. Each arc embeds as word + source-state + destination-
// state embeddings (the two positional tables are separate parameters);
// the model emits, per arc, the probability of lying on the oracle path,
// for the whole lattice in one model call. A causal variant sharing the
// same blocks serves as the autoregressive N-best baseline scorer.

#ifndef LATRESCORE_LTLM_HPP_
#define LATRESCORE_LTLM_HPP_

#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "latrescore/align.hpp"
#include "latrescore/checkpoint.hpp"
#include "latrescore/error.hpp"
#include "latrescore/lattice.hpp"
#include "latrescore/rng.hpp"
#include "latrescore/tensor.hpp"

namespace latrescore {

// Counts forward invocations across all models in the process; rescoring
// reports read deltas of this counter.
inline std::atomic<uint64_t> &model_call_counter() {
  static std::atomic<uint64_t> counter{0};
  return counter;
}

struct LtLmConfig {
  int vocab_size = 0;
  int dim = 64;
  int layers = 2;
  int heads = 4;
  int ffn = 128;
  int max_positions = 256;
  double dropout = 0.1;
  uint64_t seed = 1;

  void check() const {
    if (vocab_size <= 0) throw ConfigError("vocab_size must be positive");
    if (dim % heads != 0) throw ConfigError("dim must be divisible by heads");
    if (max_positions < 2) throw ConfigError("max_positions too small");
  }
};

// Transformer over arcs (oracle-membership head) or tokens (causal LM
// head); `causal` picks the variant.
struct LtLm {
  LtLmConfig config;
  bool causal = false;
  std::map<std::string, Tensor> params;
};

namespace ltlm_detail {

inline void init_linear(LtLm &model, const std::string &name, int64_t in,
                        int64_t out, bool with_bias = true) {
  Rng rng(derive_seed(model.config.seed, name));
  model.params[name + ".w"] =
      randn(Shape{in, out}, rng, 1.0 / std::sqrt(static_cast<double>(in)));
  if (with_bias) model.params[name + ".b"] = Tensor(Shape{out});
}

inline void init_norm(LtLm &model, const std::string &name) {
  model.params[name + ".gain"] = Tensor(Shape{model.config.dim}, 1.0);
  model.params[name + ".bias"] = Tensor(Shape{model.config.dim});
}

}  // namespace ltlm_detail

inline LtLm init_ltlm(const LtLmConfig &config, bool causal = false) {
  config.check();
  LtLm model;
  model.config = config;
  model.causal = causal;
  int64_t d = config.dim;
  {
    Rng rng(derive_seed(config.seed, "word_emb"));
    model.params["word_emb"] = randn(Shape{config.vocab_size, d}, rng, 0.02);
  }
  if (causal) {
    Rng rng(derive_seed(config.seed, "pos_emb"));
    model.params["pos_emb"] = randn(Shape{config.max_positions, d}, rng, 0.02);
  } else {
    Rng rs(derive_seed(config.seed, "src_pos_emb"));
    model.params["src_pos_emb"] =
        randn(Shape{config.max_positions, d}, rs, 0.02);
    Rng rd(derive_seed(config.seed, "dst_pos_emb"));
    model.params["dst_pos_emb"] =
        randn(Shape{config.max_positions, d}, rd, 0.02);
  }
  for (int l = 0; l < config.layers; ++l) {
    std::string p = "layer" + std::to_string(l);
    ltlm_detail::init_norm(model, p + ".ln1");
    ltlm_detail::init_linear(model, p + ".attn.q", d, d);
    // No key bias: softmax cancels a uniform shift of the scores, which
    // would leave the bias with an identically zero gradient.
    ltlm_detail::init_linear(model, p + ".attn.k", d, d, /*with_bias=*/false);
    ltlm_detail::init_linear(model, p + ".attn.v", d, d);
    ltlm_detail::init_linear(model, p + ".attn.o", d, d);
    ltlm_detail::init_norm(model, p + ".ln2");
    ltlm_detail::init_linear(model, p + ".ff.1", d, config.ffn);
    ltlm_detail::init_linear(model, p + ".ff.2", config.ffn, d);
  }
  ltlm_detail::init_norm(model, "final_ln");
  ltlm_detail::init_linear(model, "out_proj", d,
                           causal ? config.vocab_size : 1);
  return model;
}

// One batch of padded lattices flattened to arc lists. Padded slots carry
// mask 0 and are ignored by the loss and all outputs.
struct ArcBatch {
  int64_t batch = 0;
  int64_t max_arcs = 0;
  std::vector<int64_t> words;  // batch * max_arcs
  std::vector<int64_t> srcs;
  std::vector<int64_t> dsts;
  Tensor mask;     // (batch, max_arcs), {0,1}
  Tensor targets;  // (batch, max_arcs), {0,1}
  std::vector<std::string> utt_ids;
  std::vector<int64_t> arc_counts;
};

// Flattens augmented, topologically sorted lattices into a padded batch.
// `targets` may be empty (inference).
inline ArcBatch build_arc_batch(const std::vector<const Lattice *> &lattices,
                                const std::vector<const ArcTargets *> &targets,
                                const LtLmConfig &config) {
  if (!targets.empty() && targets.size() != lattices.size()) {
    throw ShapeMismatchError("targets count must match lattices");
  }
  ArcBatch b;
  b.batch = static_cast<int64_t>(lattices.size());
  for (const Lattice *lat : lattices) {
    b.max_arcs = std::max(b.max_arcs, static_cast<int64_t>(lat->arcs.size()));
    if (lat->num_states > config.max_positions) {
      throw PositionOverflowError("lattice " + lat->utterance_id + " has " +
                                  std::to_string(lat->num_states) +
                                  " states, positional table holds " +
                                  std::to_string(config.max_positions));
    }
  }
  int64_t slots = b.batch * b.max_arcs;
  b.words.assign(slots, 0);
  b.srcs.assign(slots, 0);
  b.dsts.assign(slots, 0);
  b.mask = Tensor(Shape{b.batch, b.max_arcs});
  b.targets = Tensor(Shape{b.batch, b.max_arcs});
  for (int64_t i = 0; i < b.batch; ++i) {
    const Lattice &lat = *lattices[i];
    b.utt_ids.push_back(lat.utterance_id);
    b.arc_counts.push_back(static_cast<int64_t>(lat.arcs.size()));
    for (size_t a = 0; a < lat.arcs.size(); ++a) {
      int64_t slot = i * b.max_arcs + static_cast<int64_t>(a);
      const Arc &arc = lat.arcs[a];
      if (arc.word < 0 || arc.word >= config.vocab_size) {
        throw DataError("word id " + std::to_string(arc.word) +
                        " outside the model vocabulary");
      }
      b.words[slot] = arc.word;
      b.srcs[slot] = arc.src;
      b.dsts[slot] = arc.dst;
      b.mask[slot] = 1.0;
      if (!targets.empty()) b.targets[slot] = targets[i]->labels[a];
    }
  }
  return b;
}

namespace ltlm_detail {

inline uint64_t drop_key(const LtLm &model, const std::string &site,
                         int64_t step) {
  return hash_combine(hash_combine(model.config.seed, hash_string(site)),
                      static_cast<uint64_t>(step));
}

struct ParamValues {
  std::map<std::string, Value> values;
  Value at(const std::string &name) const { return values.at(name); }
};

inline ParamValues stage_params(Tape &tape, const LtLm &model,
                                bool requires_grad) {
  ParamValues pv;
  for (const auto &[name, tensor] : model.params) {
    pv.values[name] = tape.input(tensor, requires_grad);
  }
  return pv;
}

inline Value linear(Tape &tape, const ParamValues &pv, const std::string &name,
                    Value x) {
  return tape.add(tape.matmul(x, pv.at(name + ".w")), pv.at(name + ".b"));
}

inline Value norm(Tape &tape, const ParamValues &pv, const std::string &name,
                  Value x) {
  return tape.layer_norm(x, pv.at(name + ".gain"), pv.at(name + ".bias"));
}

// Pre-norm encoder block; attn_mask has shape (B,1,*,T) broadcast over
// heads, masking attention keys (and queries, via the causal variant).
inline Value encoder_block(Tape &tape, const LtLm &model,
                           const ParamValues &pv, int layer, Value x,
                           Value attn_mask, int64_t batch, int64_t len,
                           bool train, int64_t step) {
  const LtLmConfig &c = model.config;
  std::string p = "layer" + std::to_string(layer);
  int64_t h = c.heads;
  int64_t dh = c.dim / c.heads;

  Value ln = norm(tape, pv, p + ".ln1", x);
  auto heads_of = [&](Value t) {
    return tape.transpose(tape.reshape(t, Shape{batch, len, h, dh}),
                          {0, 2, 1, 3});
  };
  Value q = heads_of(linear(tape, pv, p + ".attn.q", ln));
  Value k = heads_of(tape.matmul(ln, pv.at(p + ".attn.k.w")));
  Value v = heads_of(linear(tape, pv, p + ".attn.v", ln));
  Value scores = tape.scale(tape.matmul(q, tape.transpose(k, {0, 1, 3, 2})),
                            1.0 / std::sqrt(static_cast<double>(dh)));
  Value attn = tape.masked_softmax(scores, attn_mask);
  Value ctx = tape.reshape(
      tape.transpose(tape.matmul(attn, v), {0, 2, 1, 3}),
      Shape{batch, len, c.dim});
  Value attn_out = linear(tape, pv, p + ".attn.o", ctx);
  if (train && c.dropout > 0.0) {
    attn_out = tape.dropout(attn_out, c.dropout,
                            drop_key(model, p + ".attn.drop", step));
  }
  x = tape.add(x, attn_out);

  Value ln2 = norm(tape, pv, p + ".ln2", x);
  Value ff = linear(tape, pv, p + ".ff.2",
                    tape.relu(linear(tape, pv, p + ".ff.1", ln2)));
  if (train && c.dropout > 0.0) {
    ff = tape.dropout(ff, c.dropout, drop_key(model, p + ".ff.drop", step));
  }
  return tape.add(x, ff);
}

}  // namespace ltlm_detail

// Per-arc embedding: word row + source-position row + destination-position
// row, summed elementwise.
inline Value embed_arcs(Tape &tape, const ltlm_detail::ParamValues &pv,
                        const ArcBatch &batch) {
  Shape ids_shape{batch.batch, batch.max_arcs};
  Value w = tape.embedding_gather(pv.at("word_emb"), batch.words, ids_shape);
  Value s = tape.embedding_gather(pv.at("src_pos_emb"), batch.srcs, ids_shape);
  Value d = tape.embedding_gather(pv.at("dst_pos_emb"), batch.dsts, ids_shape);
  return tape.add(tape.add(w, s), d);
}

struct LtLmOutput {
  Value logits;  // (B, max_arcs)
  ltlm_detail::ParamValues staged;
};

// Full-attention forward over the arc set: one model call per batch,
// whatever the arc count. Returns per-arc oracle-membership logits.
inline LtLmOutput ltlm_forward(Tape &tape, const LtLm &model,
                               const ArcBatch &batch, bool train = false,
                               int64_t step = 0, bool requires_grad = false) {
  if (model.causal) throw ConfigError("ltlm_forward needs a lattice model");
  const LtLmConfig &c = model.config;
  ltlm_detail::ParamValues pv =
      ltlm_detail::stage_params(tape, model, requires_grad);
  Value x = embed_arcs(tape, pv, batch);
  if (train && c.dropout > 0.0) {
    x = tape.dropout(x, c.dropout,
                     ltlm_detail::drop_key(model, "emb.drop", step));
  }
  // Arcs attend to every valid arc of their own lattice, never across
  // batch entries: mask keys per batch row.
  Value key_mask = tape.reshape(tape.input(batch.mask),
                                Shape{batch.batch, 1, 1, batch.max_arcs});
  for (int l = 0; l < c.layers; ++l) {
    x = ltlm_detail::encoder_block(tape, model, pv, l, x, key_mask,
                                   batch.batch, batch.max_arcs, train, step);
  }
  x = ltlm_detail::norm(tape, pv, "final_ln", x);
  Value logits = tape.reshape(ltlm_detail::linear(tape, pv, "out_proj", x),
                              Shape{batch.batch, batch.max_arcs});
  model_call_counter().fetch_add(1, std::memory_order_relaxed);
  return {logits, std::move(pv)};
}

// Mean BCE over valid arcs, in logit space.
inline Value ltlm_bce_loss(Tape &tape, Value logits, const ArcBatch &batch) {
  return tape.bce_with_logits(logits, batch.targets, batch.mask);
}

// Eval-mode per-arc probabilities for one batch (single model call).
inline std::vector<std::vector<double>> ltlm_arc_probabilities(
    const LtLm &model, const ArcBatch &batch) {
  Tape tape;
  LtLmOutput out = ltlm_forward(tape, model, batch);
  const Tensor &logits = tape.value(out.logits);
  std::vector<std::vector<double>> probs(batch.batch);
  for (int64_t i = 0; i < batch.batch; ++i) {
    probs[i].resize(batch.arc_counts[i]);
    for (int64_t a = 0; a < batch.arc_counts[i]; ++a) {
      probs[i][a] = tdetail::sigmoid_stable(logits[i * batch.max_arcs + a]);
    }
  }
  return probs;
}

// --- causal variant (N-best baseline scorer) ---

struct SeqBatch {
  int64_t batch = 0;
  int64_t max_len = 0;               // includes <s> and </s>
  std::vector<int64_t> tokens;       // batch * max_len, padded with 0
  Tensor mask;                       // (batch, max_len)
  std::vector<int64_t> next_tokens;  // teacher targets, batch * max_len
  std::vector<double> next_mask;     // 1 where a next token exists
};

inline SeqBatch build_seq_batch(
    const std::vector<std::vector<WordId>> &sentences,
    const LtLmConfig &config) {
  SeqBatch b;
  b.batch = static_cast<int64_t>(sentences.size());
  std::vector<std::vector<int64_t>> wrapped;
  for (const auto &s : sentences) {
    std::vector<int64_t> toks;
    toks.push_back(kBosId);
    for (WordId w : s) {
      toks.push_back(w >= 0 && w < config.vocab_size && w != kEpsId ? w
                                                                    : kUnkId);
    }
    toks.push_back(kEosId);
    if (static_cast<int>(toks.size()) > config.max_positions) {
      throw PositionOverflowError("sentence longer than max_positions");
    }
    b.max_len = std::max(b.max_len, static_cast<int64_t>(toks.size()));
    wrapped.push_back(std::move(toks));
  }
  int64_t slots = b.batch * b.max_len;
  b.tokens.assign(slots, 0);
  b.mask = Tensor(Shape{b.batch, b.max_len});
  b.next_tokens.assign(slots, 0);
  b.next_mask.assign(slots, 0.0);
  for (int64_t i = 0; i < b.batch; ++i) {
    const auto &toks = wrapped[i];
    for (size_t t = 0; t < toks.size(); ++t) {
      int64_t slot = i * b.max_len + static_cast<int64_t>(t);
      b.tokens[slot] = toks[t];
      b.mask[slot] = 1.0;
      if (t + 1 < toks.size()) {
        b.next_tokens[slot] = toks[t + 1];
        b.next_mask[slot] = 1.0;
      }
    }
  }
  return b;
}

struct ArLmOutput {
  Value logits;  // (B, T, vocab)
  ltlm_detail::ParamValues staged;
};

inline ArLmOutput arlm_forward(Tape &tape, const LtLm &model,
                               const SeqBatch &batch, bool train = false,
                               int64_t step = 0, bool requires_grad = false) {
  if (!model.causal) throw ConfigError("arlm_forward needs a causal model");
  const LtLmConfig &c = model.config;
  ltlm_detail::ParamValues pv =
      ltlm_detail::stage_params(tape, model, requires_grad);
  Shape ids_shape{batch.batch, batch.max_len};
  std::vector<int64_t> positions(batch.batch * batch.max_len);
  for (int64_t i = 0; i < batch.batch; ++i) {
    for (int64_t t = 0; t < batch.max_len; ++t) {
      positions[i * batch.max_len + t] = t;
    }
  }
  Value x = tape.add(
      tape.embedding_gather(pv.at("word_emb"), batch.tokens, ids_shape),
      tape.embedding_gather(pv.at("pos_emb"), positions, ids_shape));
  if (train && c.dropout > 0.0) {
    x = tape.dropout(x, c.dropout,
                     ltlm_detail::drop_key(model, "emb.drop", step));
  }
  // Causal mask && key validity: (B,1,T,T).
  Tensor causal(Shape{batch.batch, 1, batch.max_len, batch.max_len});
  for (int64_t i = 0; i < batch.batch; ++i) {
    for (int64_t tq = 0; tq < batch.max_len; ++tq) {
      for (int64_t tk = 0; tk <= tq; ++tk) {
        causal[(i * batch.max_len + tq) * batch.max_len + tk] =
            batch.mask[i * batch.max_len + tk];
      }
    }
  }
  Value attn_mask = tape.input(causal);
  for (int l = 0; l < c.layers; ++l) {
    x = ltlm_detail::encoder_block(tape, model, pv, l, x, attn_mask,
                                   batch.batch, batch.max_len, train, step);
  }
  x = ltlm_detail::norm(tape, pv, "final_ln", x);
  Value logits = ltlm_detail::linear(tape, pv, "out_proj", x);
  model_call_counter().fetch_add(1, std::memory_order_relaxed);
  return {logits, std::move(pv)};
}

inline Value arlm_xent_loss(Tape &tape, Value logits, const SeqBatch &batch,
                            const LtLmConfig &config) {
  Value flat = tape.reshape(logits, Shape{batch.batch * batch.max_len,
                                          config.vocab_size});
  return tape.softmax_xent(flat, batch.next_tokens, batch.next_mask);
}

// Total log-probability (nats) of one sentence under the causal model:
// sum over positions of log P(w_t | w_<t). One model call per hypothesis.
inline double ar_score(const LtLm &model,
                       const std::vector<WordId> &sentence) {
  SeqBatch batch = build_seq_batch({sentence}, model.config);
  Tape tape;
  ArLmOutput out = arlm_forward(tape, model, batch);
  const Tensor &logits = tape.value(out.logits);
  int64_t vocab = model.config.vocab_size;
  double total = 0.0;
  for (int64_t t = 0; t + 1 < batch.max_len; ++t) {
    if (batch.next_mask[t] == 0.0) break;
    const double *row = logits.data.data() + t * vocab;
    double maxv = row[0];
    for (int64_t j = 1; j < vocab; ++j) maxv = std::max(maxv, row[j]);
    double lse = 0.0;
    for (int64_t j = 0; j < vocab; ++j) lse += std::exp(row[j] - maxv);
    lse = maxv + std::log(lse);
    total += row[batch.next_tokens[t]] - lse;
  }
  return total;
}

// --- training ---

struct TrainSchedule {
  int epochs = 6;
  int batch_size = 16;
  double lr = 3e-4;
  int64_t warmup_steps = 100;
  int64_t max_steps = -1;  // stop after this many optimizer steps (tests)
};

struct LtLmDataset {
  std::vector<Lattice> lattices;  // augmented + sorted
  std::vector<ArcTargets> targets;
};

// Augments and labels raw lattices against their references. Oracle tie
// draws are fixed once per (utterance, global seed), so every epoch sees
// the same targets.
inline LtLmDataset build_ltlm_dataset(
    const std::vector<Lattice> &raw,
    const std::map<std::string, std::vector<WordId>> &refs,
    uint64_t global_seed) {
  LtLmDataset ds;
  for (const Lattice &lat : raw) {
    auto rit = refs.find(lat.utterance_id);
    if (rit == refs.end()) {
      throw MissingReferenceError("no reference for " + lat.utterance_id);
    }
    Lattice aug = augment(is_augmented(lat) ? lat : topo_sort(lat));
    Rng rng(derive_seed(global_seed, "oracle/" + lat.utterance_id));
    ds.targets.push_back(oracle_path(aug, rit->second, rng));
    ds.lattices.push_back(std::move(aug));
  }
  if (ds.lattices.empty()) throw EmptyDatasetError("no training lattices");
  return ds;
}

struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0;
  double eval_loss = 0.0;
  double eval_accuracy = 0.0;  // threshold 0.5 over valid arcs
  double eval_auc = 0.0;       // oracle arcs ranked above the rest
};

// Rank statistic: probability that a random oracle arc scores above a
// random non-oracle arc (ties count half).
inline double arc_auc(const std::vector<double> &probs,
                      const std::vector<uint8_t> &labels) {
  double pos = 0, neg = 0, won = 0;
  for (size_t i = 0; i < probs.size(); ++i) {
    if (!labels[i]) continue;
    for (size_t j = 0; j < probs.size(); ++j) {
      if (labels[j]) continue;
      won += probs[i] > probs[j] ? 1.0 : (probs[i] == probs[j] ? 0.5 : 0.0);
    }
  }
  for (uint8_t l : labels) (l ? pos : neg) += 1.0;
  return pos > 0 && neg > 0 ? won / (pos * neg) : 1.0;
}

struct TrainPosition {
  int epoch = 0;
  int64_t batch_index = 0;  // within the epoch
  int64_t step = 0;         // global optimizer steps taken
};

struct TrainResult {
  std::vector<EpochStats> history;
  TrainPosition position;  // where training stopped
};

inline AdamState make_adam(const TrainSchedule &schedule) {
  AdamState state;
  state.config.lr = schedule.lr;
  state.config.warmup_steps = schedule.warmup_steps;
  return state;
}

// Deterministic training loop: per-epoch shuffling, dropout streams and
// oracle targets all derive from the model seed. `on_epoch` (optional) runs
// after each epoch; `resume` continues an interrupted run bit-exactly.
inline TrainResult train_ltlm_loop(
    LtLm &model, AdamState &adam, const LtLmDataset &train_set,
    const LtLmDataset *eval_set, const TrainSchedule &schedule,
    const std::function<void(const EpochStats &)> &on_epoch = nullptr,
    TrainPosition resume = {}) {
  if (train_set.lattices.empty()) throw EmptyDatasetError("empty train set");
  TrainResult result;
  int64_t step = resume.step;
  const int64_t n = static_cast<int64_t>(train_set.lattices.size());

  for (int epoch = resume.epoch; epoch < schedule.epochs; ++epoch) {
    std::vector<int64_t> order(n);
    for (int64_t i = 0; i < n; ++i) order[i] = i;
    Rng shuffle_rng(derive_seed(model.config.seed,
                                "shuffle/" + std::to_string(epoch)));
    shuffle_rng.shuffle(order);

    double loss_sum = 0.0;
    int64_t loss_batches = 0;
    int64_t batch_ordinal = epoch == resume.epoch ? resume.batch_index : 0;
    for (int64_t start = batch_ordinal * schedule.batch_size; start < n;
         start += schedule.batch_size, ++batch_ordinal) {
      if (schedule.max_steps >= 0 && step >= schedule.max_steps) {
        result.position = {epoch, batch_ordinal, step};
        return result;
      }
      int64_t end = std::min(n, start + schedule.batch_size);
      std::vector<const Lattice *> lats;
      std::vector<const ArcTargets *> tgts;
      for (int64_t i = start; i < end; ++i) {
        lats.push_back(&train_set.lattices[order[i]]);
        tgts.push_back(&train_set.targets[order[i]]);
      }
      ArcBatch batch = build_arc_batch(lats, tgts, model.config);
      Tape tape;
      LtLmOutput out = ltlm_forward(tape, model, batch, /*train=*/true, step,
                                    /*requires_grad=*/true);
      Value loss = ltlm_bce_loss(tape, out.logits, batch);
      tape.backward(loss);
      std::map<std::string, Tensor> grads;
      for (const auto &[name, value] : out.staged.values) {
        grads[name] = tape.grad(value);
      }
      adam_step(adam, model.params, grads);
      loss_sum += tape.value(loss).item();
      loss_batches++;
      step++;
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = loss_batches ? loss_sum / loss_batches : 0.0;
    if (eval_set && !eval_set->lattices.empty()) {
      double eval_loss = 0.0;
      int64_t eval_batches = 0;
      double acc_hits = 0.0, acc_total = 0.0, auc_sum = 0.0;
      for (size_t i = 0; i < eval_set->lattices.size();
           i += schedule.batch_size) {
        size_t end = std::min(eval_set->lattices.size(),
                              i + schedule.batch_size);
        std::vector<const Lattice *> lats;
        std::vector<const ArcTargets *> tgts;
        for (size_t j = i; j < end; ++j) {
          lats.push_back(&eval_set->lattices[j]);
          tgts.push_back(&eval_set->targets[j]);
        }
        ArcBatch batch = build_arc_batch(lats, tgts, model.config);
        Tape tape;
        LtLmOutput out = ltlm_forward(tape, model, batch);
        eval_loss += tape.value(ltlm_bce_loss(tape, out.logits, batch)).item();
        eval_batches++;
        const Tensor &logits = tape.value(out.logits);
        for (size_t j = i; j < end; ++j) {
          const ArcTargets &t = *tgts[j - i];
          std::vector<double> probs(t.labels.size());
          for (size_t a = 0; a < t.labels.size(); ++a) {
            double p = tdetail::sigmoid_stable(
                logits[(j - i) * batch.max_arcs + a]);
            probs[a] = p;
            acc_hits += (p >= 0.5) == (t.labels[a] == 1);
            acc_total += 1.0;
          }
          auc_sum += arc_auc(probs, t.labels);
        }
      }
      stats.eval_loss = eval_loss / eval_batches;
      stats.eval_accuracy = acc_total > 0 ? acc_hits / acc_total : 0.0;
      stats.eval_auc = auc_sum / static_cast<double>(eval_set->lattices.size());
    }
    result.history.push_back(stats);
    if (on_epoch) on_epoch(stats);
  }
  result.position = {schedule.epochs, 0, step};
  return result;
}

// Causal-LM training over raw sentences (the N-best baseline model).
inline TrainResult train_arlm_loop(
    LtLm &model, AdamState &adam,
    const std::vector<std::vector<WordId>> &sentences,
    const std::vector<std::vector<WordId>> *eval_sentences,
    const TrainSchedule &schedule,
    const std::function<void(const EpochStats &)> &on_epoch = nullptr,
    TrainPosition resume = {}) {
  if (sentences.empty()) throw EmptyDatasetError("empty AR training corpus");
  TrainResult result;
  int64_t step = resume.step;
  const int64_t n = static_cast<int64_t>(sentences.size());

  for (int epoch = resume.epoch; epoch < schedule.epochs; ++epoch) {
    std::vector<int64_t> order(n);
    for (int64_t i = 0; i < n; ++i) order[i] = i;
    Rng shuffle_rng(derive_seed(model.config.seed,
                                "shuffle/" + std::to_string(epoch)));
    shuffle_rng.shuffle(order);

    double loss_sum = 0.0;
    int64_t loss_batches = 0;
    int64_t batch_ordinal = epoch == resume.epoch ? resume.batch_index : 0;
    for (int64_t start = batch_ordinal * schedule.batch_size; start < n;
         start += schedule.batch_size, ++batch_ordinal) {
      if (schedule.max_steps >= 0 && step >= schedule.max_steps) {
        result.position = {epoch, batch_ordinal, step};
        return result;
      }
      int64_t end = std::min(n, start + schedule.batch_size);
      std::vector<std::vector<WordId>> chunk;
      for (int64_t i = start; i < end; ++i) chunk.push_back(sentences[order[i]]);
      SeqBatch batch = build_seq_batch(chunk, model.config);
      Tape tape;
      ArLmOutput out = arlm_forward(tape, model, batch, /*train=*/true, step,
                                    /*requires_grad=*/true);
      Value loss = arlm_xent_loss(tape, out.logits, batch, model.config);
      tape.backward(loss);
      std::map<std::string, Tensor> grads;
      for (const auto &[name, value] : out.staged.values) {
        grads[name] = tape.grad(value);
      }
      adam_step(adam, model.params, grads);
      loss_sum += tape.value(loss).item();
      loss_batches++;
      step++;
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = loss_batches ? loss_sum / loss_batches : 0.0;
    if (eval_sentences && !eval_sentences->empty()) {
      double eval_loss = 0.0;
      int64_t eval_batches = 0;
      for (size_t i = 0; i < eval_sentences->size();
           i += schedule.batch_size) {
        size_t end = std::min(eval_sentences->size(),
                              i + static_cast<size_t>(schedule.batch_size));
        std::vector<std::vector<WordId>> chunk(eval_sentences->begin() + i,
                                               eval_sentences->begin() + end);
        SeqBatch batch = build_seq_batch(chunk, model.config);
        Tape tape;
        ArLmOutput out = arlm_forward(tape, model, batch);
        eval_loss +=
            tape.value(arlm_xent_loss(tape, out.logits, batch, model.config))
                .item();
        eval_batches++;
      }
      stats.eval_loss = eval_loss / eval_batches;
    }
    result.history.push_back(stats);
    if (on_epoch) on_epoch(stats);
  }
  result.position = {schedule.epochs, 0, step};
  return result;
}

// --- checkpoint adapters ---

inline nlohmann::json ltlm_config_json(const LtLmConfig &c) {
  return {{"vocab_size", c.vocab_size}, {"dim", c.dim},
          {"layers", c.layers},         {"heads", c.heads},
          {"ffn", c.ffn},               {"max_positions", c.max_positions},
          {"dropout", c.dropout},       {"seed", c.seed}};
}

inline LtLmConfig ltlm_config_from_json(const nlohmann::json &j) {
  LtLmConfig c;
  c.vocab_size = j.at("vocab_size").get<int>();
  c.dim = j.at("dim").get<int>();
  c.layers = j.at("layers").get<int>();
  c.heads = j.at("heads").get<int>();
  c.ffn = j.at("ffn").get<int>();
  c.max_positions = j.at("max_positions").get<int>();
  c.dropout = j.at("dropout").get<double>();
  c.seed = j.at("seed").get<uint64_t>();
  return c;
}

inline void save_ltlm(const LtLm &model, const AdamState &adam,
                      const TrainPosition &pos, const std::string &path,
                      const nlohmann::json &extra_meta = {}) {
  Checkpoint ckpt;
  ckpt.tensors = model.params;
  for (const auto &[name, t] : adam.m) ckpt.tensors["adam_m/" + name] = t;
  for (const auto &[name, t] : adam.v) ckpt.tensors["adam_v/" + name] = t;
  ckpt.meta["config"] = ltlm_config_json(model.config);
  ckpt.meta["causal"] = model.causal;
  ckpt.meta["adam"] = {{"lr", adam.config.lr},
                       {"beta1", adam.config.beta1},
                       {"beta2", adam.config.beta2},
                       {"eps", adam.config.eps},
                       {"warmup_steps", adam.config.warmup_steps},
                       {"step", adam.step}};
  ckpt.meta["position"] = {{"epoch", pos.epoch},
                           {"batch_index", pos.batch_index},
                           {"step", pos.step}};
  if (!extra_meta.is_null() && !extra_meta.empty()) {
    ckpt.meta["extra"] = extra_meta;
  }
  save_checkpoint(ckpt, path);
}

struct LoadedLtLm {
  LtLm model;
  AdamState adam;
  TrainPosition position;
  nlohmann::json meta;
};

inline LoadedLtLm load_ltlm(const std::string &path) {
  Checkpoint ckpt = load_checkpoint(path);
  LoadedLtLm out;
  out.model.config = ltlm_config_from_json(ckpt.meta.at("config"));
  out.model.causal = ckpt.meta.value("causal", false);
  const auto &aj = ckpt.meta.at("adam");
  out.adam.config.lr = aj.at("lr").get<double>();
  out.adam.config.beta1 = aj.at("beta1").get<double>();
  out.adam.config.beta2 = aj.at("beta2").get<double>();
  out.adam.config.eps = aj.at("eps").get<double>();
  out.adam.config.warmup_steps = aj.at("warmup_steps").get<int64_t>();
  out.adam.step = aj.at("step").get<int64_t>();
  const auto &pj = ckpt.meta.at("position");
  out.position.epoch = pj.at("epoch").get<int>();
  out.position.batch_index = pj.at("batch_index").get<int64_t>();
  out.position.step = pj.at("step").get<int64_t>();
  out.meta = ckpt.meta;
  for (auto &[name, t] : ckpt.tensors) {
    if (name.rfind("adam_m/", 0) == 0) {
      out.adam.m[name.substr(7)] = std::move(t);
    } else if (name.rfind("adam_v/", 0) == 0) {
      out.adam.v[name.substr(7)] = std::move(t);
    } else {
      out.model.params[name] = std::move(t);
    }
  }
  return out;
}

}  // namespace latrescore

#endif  // LATRESCORE_LTLM_HPP_
