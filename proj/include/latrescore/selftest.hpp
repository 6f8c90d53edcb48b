// latrescore/selftest.hpp

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
// Built-in invariant suite: brute-force agreement for oracle/best-path,
// serialization round trips, n-gram normalization, gradient checks and
// determinism, runnable from the CLI without any test framework.

#ifndef LATRESCORE_SELFTEST_HPP_
#define LATRESCORE_SELFTEST_HPP_

#include <cmath>
#include <functional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "latrescore/align.hpp"
#include "latrescore/latgen.hpp"
#include "latrescore/lattice.hpp"
#include "latrescore/lattice_io.hpp"
#include "latrescore/ltlm.hpp"
#include "latrescore/ngram.hpp"
#include "latrescore/rescore.hpp"
#include "latrescore/rng.hpp"

namespace latrescore {

namespace selftest_detail {

inline Lattice random_lattice(Rng &rng, size_t max_paths = 64) {
  for (;;) {
    Lattice lat;
    int n = 3 + static_cast<int>(rng.uniform_int(8));
    lat.num_states = n;
    auto add = [&](StateId s, StateId d) {
      lat.arcs.push_back({s, d, 4 + static_cast<WordId>(rng.uniform_int(10)),
                          5.0 * rng.uniform(), 5.0 * rng.uniform()});
    };
    for (StateId s = 0; s + 1 < n; ++s) add(s, s + 1);
    for (StateId s = 0; s + 2 < n; ++s) {
      if (rng.uniform() < 0.3) {
        add(s, s + 2 + static_cast<StateId>(rng.uniform_int(n - s - 2)));
      }
    }
    lat.final_states[n - 1] = rng.uniform();
    try {
      enumerate_paths(lat, max_paths);
      return lat;
    } catch (const TooManyPathsError &) {
    }
  }
}

}  // namespace selftest_detail

// Runs every check, printing one PASS/FAIL line each; returns the number
// of failures.
inline int run_selftest(std::ostream &out, bool quick = false) {
  int failures = 0;
  auto check = [&](const std::string &name, const std::function<bool()> &fn) {
    bool ok = false;
    std::string detail;
    try {
      ok = fn();
    } catch (const std::exception &e) {
      detail = e.what();
    }
    out << (ok ? "PASS " : "FAIL ") << name;
    if (!ok && !detail.empty()) out << " (" << detail << ")";
    out << "\n";
    if (!ok) failures++;
  };
  const int lattice_trials = quick ? 10 : 40;

  check("oracle matches brute force", [&]() {
    Rng rng(101);
    for (int t = 0; t < lattice_trials; ++t) {
      Lattice lat = selftest_detail::random_lattice(rng);
      std::vector<WordId> ref;
      for (int i = 0; i < 4; ++i) {
        ref.push_back(4 + static_cast<WordId>(rng.uniform_int(10)));
      }
      Rng pick(rng.next_u64());
      int64_t got = oracle_path(lat, ref, pick).oracle_stats.errors();
      int64_t best = -1;
      for (const PathEntry &p : enumerate_paths(lat)) {
        int64_t e = edit_distance(strip_auxiliary(p.words), ref).errors();
        if (best < 0 || e < best) best = e;
      }
      if (got != best) return false;
    }
    return true;
  });

  check("best path and n-best match brute force", [&]() {
    Rng rng(103);
    ScoreWeights w;
    for (int t = 0; t < lattice_trials; ++t) {
      Lattice lat = selftest_detail::random_lattice(rng);
      auto paths = enumerate_paths(lat);
      double best_cost = kInfCost;
      std::vector<WordId> best_words;
      for (const auto &p : paths) {
        double acc = 0.0;
        for (int ai : p.arc_indices) acc += combined_arc_cost(lat.arcs[ai], w);
        acc += w.l1 * lat.final_states.at(p.states.back());
        if (acc < best_cost) {
          best_cost = acc;
          best_words = p.words;
        }
      }
      BestPath got = best_path(lat, w);
      if (got.words != strip_auxiliary(best_words)) return false;
      if (got.combined_cost != best_cost) return false;
      auto hyps = nbest_extract(lat, 5, w);
      if (hyps.empty() || hyps[0].words != got.words) return false;
    }
    return true;
  });

  check("lattice text round trip", [&]() {
    Rng rng(105);
    SymbolTable symbols;
    for (int i = 0; i < 10; ++i) symbols.add("w" + std::to_string(i));
    for (int t = 0; t < (quick ? 20 : 100); ++t) {
      LatticeArchive archive;
      Lattice lat = validate(selftest_detail::random_lattice(rng), true).lattice;
      lat.utterance_id = "u" + std::to_string(t);
      archive.lattices.push_back(lat);
      std::ostringstream text;
      write_lattice_text(archive, text, symbols);
      std::istringstream in(text.str());
      if (!(parse_lattice_text(in, symbols) == archive)) return false;
    }
    return true;
  });

  check("ngram contexts normalize to one", [&]() {
    Rng rng(107);
    SymbolTable vocab;
    for (int i = 0; i < 6; ++i) vocab.add("w" + std::to_string(i));
    std::vector<std::vector<WordId>> corpus;
    for (int i = 0; i < 25; ++i) {
      std::vector<WordId> s;
      int len = 1 + static_cast<int>(rng.uniform_int(6));
      for (int j = 0; j < len; ++j) {
        s.push_back(4 + static_cast<WordId>(rng.uniform_int(6)));
      }
      corpus.push_back(s);
    }
    NgramModel m = train_ngram(corpus, 3, vocab);
    auto mass = [&](const NgramKey &ctx) {
      double total = 0.0;
      for (WordId w = 0; w < vocab.size(); ++w) {
        if (!ngram_predictable(w)) continue;
        total += std::pow(10.0, m.log10_prob(ctx, w));
      }
      return total;
    };
    if (std::abs(mass({}) - 1.0) > 1e-6) return false;
    for (int n = 1; n < 3; ++n) {
      for (const auto &[ctx, entry] : m.table(n)) {
        if (entry.has_bow && std::abs(mass(ctx) - 1.0) > 1e-6) return false;
      }
    }
    return true;
  });

  check("tiny model gradients match finite differences", [&]() {
    LtLmConfig config;
    config.vocab_size = 16;
    config.dim = 16;
    config.layers = 2;
    config.heads = 2;
    config.ffn = 32;
    config.max_positions = 64;
    config.dropout = 0.0;
    config.seed = 7;
    LtLm model = init_ltlm(config);
    Rng lrng(11);
    Lattice lat = augment(topo_sort(
        validate(selftest_detail::random_lattice(lrng), true).lattice));
    Rng pick(13);
    ArcTargets targets = oracle_path(lat, {4, 5}, pick);
    ArcBatch batch = build_arc_batch({&lat}, {&targets}, config);
    std::vector<std::string> names;
    std::vector<Tensor> params;
    for (const auto &[n, t] : model.params) {
      names.push_back(n);
      params.push_back(t);
    }
    auto run = [&](const std::vector<Tensor> &p, Tape *tape,
                   std::vector<Value> *handles) {
      LtLm m = model;
      for (size_t i = 0; i < names.size(); ++i) m.params[names[i]] = p[i];
      LtLmOutput o = ltlm_forward(*tape, m, batch, false, 0, true);
      if (handles) {
        for (const auto &n : names) handles->push_back(o.staged.at(n));
      }
      return ltlm_bce_loss(*tape, o.logits, batch);
    };
    Tape tape;
    std::vector<Value> handles;
    Value loss = run(params, &tape, &handles);
    tape.backward(loss);
    std::vector<Tensor> analytic;
    for (Value h : handles) analytic.push_back(tape.grad(h));
    double err = grad_check(
        [&](const std::vector<Tensor> &p) {
          Tape t;
          return t.value(run(p, &t, nullptr)).item();
        },
        params, analytic, 1e-5, quick ? 10 : 30, 99);
    return err < 1e-4;
  });

  check("arc permutation equivariance", [&]() {
    LtLmConfig config;
    config.vocab_size = 16;
    config.dim = 16;
    config.layers = 1;
    config.heads = 2;
    config.ffn = 32;
    config.max_positions = 64;
    config.dropout = 0.0;
    config.seed = 5;
    LtLm model = init_ltlm(config);
    Rng rng(109);
    for (int t = 0; t < (quick ? 3 : 10); ++t) {
      Lattice lat = augment(topo_sort(
          validate(selftest_detail::random_lattice(rng), true).lattice));
      auto base = ltlm_arc_probabilities(
          model, build_arc_batch({&lat}, {}, config))[0];
      std::vector<size_t> perm(lat.arcs.size());
      for (size_t i = 0; i < perm.size(); ++i) perm[i] = i;
      rng.shuffle(perm);
      Lattice shuffled = lat;
      for (size_t i = 0; i < perm.size(); ++i) {
        shuffled.arcs[i] = lat.arcs[perm[i]];
      }
      auto moved = ltlm_arc_probabilities(
          model, build_arc_batch({&shuffled}, {}, config))[0];
      for (size_t i = 0; i < perm.size(); ++i) {
        if (std::abs(moved[i] - base[perm[i]]) >= 1e-9) return false;
      }
    }
    return true;
  });

  check("fam rows stay normalized", [&]() {
    Rng rng(111);
    std::map<std::string, std::vector<int>> ali;
    std::map<std::string, std::vector<std::vector<double>>> post;
    const int A = 8;
    for (int u = 0; u < 10; ++u) {
      std::string id = "u" + std::to_string(u);
      for (int t = 0; t < 200; ++t) {
        int cls = static_cast<int>(rng.uniform_int(A));
        ali[id].push_back(cls);
        std::vector<double> row(A, 0.02);
        row[cls] = 1.0;
        double sum = 0.02 * (A - 1) + 1.0;
        for (double &v : row) v /= sum;
        post[id].push_back(row);
      }
    }
    FakeAcousticModel fam = estimate_fam(ali, post, A);
    validate_fam(fam);  // throws on violation
    return true;
  });

  check("training is deterministic", [&]() {
    auto train_once = [&]() {
      LtLmConfig config;
      config.vocab_size = 16;
      config.dim = 16;
      config.layers = 1;
      config.heads = 2;
      config.ffn = 32;
      config.max_positions = 64;
      config.dropout = 0.1;
      config.seed = 17;
      Rng rng(113);
      std::vector<Lattice> raw;
      std::map<std::string, std::vector<WordId>> refs;
      for (int i = 0; i < 6; ++i) {
        Lattice lat =
            validate(selftest_detail::random_lattice(rng), true).lattice;
        lat.utterance_id = "d" + std::to_string(i);
        refs[lat.utterance_id] = {4, 7};
        raw.push_back(lat);
      }
      LtLmDataset ds = build_ltlm_dataset(raw, refs, config.seed);
      LtLm model = init_ltlm(config);
      TrainSchedule schedule;
      schedule.epochs = 2;
      schedule.batch_size = 3;
      schedule.lr = 1e-3;
      AdamState adam = make_adam(schedule);
      train_ltlm_loop(model, adam, ds, nullptr, schedule);
      return model.params;
    };
    auto a = train_once();
    auto b = train_once();
    for (const auto &[name, t] : a) {
      if (!(b.at(name) == t)) return false;
    }
    return true;
  });

  return failures;
}

}  // namespace latrescore

#endif  // LATRESCORE_SELFTEST_HPP_
