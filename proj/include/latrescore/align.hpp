// latrescore/align.hpp

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

#ifndef LATRESCORE_ALIGN_HPP_
#define LATRESCORE_ALIGN_HPP_

#include <algorithm>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "latrescore/error.hpp"
#include "latrescore/lattice.hpp"
#include "latrescore/rng.hpp"

namespace latrescore {

struct EditStats {
  int64_t substitutions = 0;
  int64_t insertions = 0;
  int64_t deletions = 0;
  int64_t ref_len = 0;

  int64_t errors() const { return substitutions + insertions + deletions; }
  double wer_percent() const {
    return ref_len > 0 ? 100.0 * static_cast<double>(errors()) /
                             static_cast<double>(ref_len)
                       : (errors() > 0 ? 100.0 : 0.0);
  }
  EditStats &operator+=(const EditStats &o) {
    substitutions += o.substitutions;
    insertions += o.insertions;
    deletions += o.deletions;
    ref_len += o.ref_len;
    return *this;
  }
};

// Minimal S+I+D alignment of hyp against ref. Insertions are hyp words
// absent from ref; deletions are ref words missing from hyp. The backtrace
// prefers substitution over insertion over deletion on ties, giving a
// deterministic breakdown.
template <typename T>
EditStats edit_distance(const std::vector<T> &hyp, const std::vector<T> &ref) {
  size_t n = hyp.size(), m = ref.size();
  std::vector<std::vector<int>> d(n + 1, std::vector<int>(m + 1, 0));
  for (size_t i = 0; i <= n; ++i) d[i][0] = static_cast<int>(i);
  for (size_t j = 0; j <= m; ++j) d[0][j] = static_cast<int>(j);
  for (size_t i = 1; i <= n; ++i) {
    for (size_t j = 1; j <= m; ++j) {
      int sub = d[i - 1][j - 1] + (hyp[i - 1] == ref[j - 1] ? 0 : 1);
      int ins = d[i - 1][j] + 1;
      int del = d[i][j - 1] + 1;
      d[i][j] = std::min(sub, std::min(ins, del));
    }
  }
  EditStats stats;
  stats.ref_len = static_cast<int64_t>(m);
  size_t i = n, j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0 &&
        d[i][j] == d[i - 1][j - 1] + (hyp[i - 1] == ref[j - 1] ? 0 : 1)) {
      if (hyp[i - 1] != ref[j - 1]) stats.substitutions++;
      --i;
      --j;
    } else if (i > 0 && d[i][j] == d[i - 1][j] + 1) {
      stats.insertions++;
      --i;
    } else {
      stats.deletions++;
      --j;
    }
  }
  return stats;
}

// Per-arc binary oracle labels: label[i] = 1 iff arc i lies on the chosen
// oracle path.
struct ArcTargets {
  std::vector<uint8_t> labels;
  std::vector<int> oracle_path;  // arc indices in path order
  EditStats oracle_stats;
};

inline bool is_auxiliary_word(WordId w) {
  return w == kEpsId || w == kBosId || w == kEosId;
}

inline std::vector<WordId> strip_auxiliary(const std::vector<WordId> &words) {
  std::vector<WordId> out;
  out.reserve(words.size());
  for (WordId w : words) {
    if (!is_auxiliary_word(w)) out.push_back(w);
  }
  return out;
}

// Finds a complete path minimizing word errors against `ref`; among minimal
// paths one is drawn via count-based backtrace sampling so the draw is
// uniform over minimal alignments. DP over the (state, ref position) grid:
// a non-auxiliary arc (x->y, w) induces a substitution/match step
// (i -> i+1, cost [w != ref[i]]) and an insertion step (i -> i, cost 1);
// a deletion step (i -> i+1, cost 1) stays within a state. Auxiliary
// <s>/</s>/<eps> arcs cross states for free and never contribute errors.
inline ArcTargets oracle_path(const Lattice &lat,
                              const std::vector<WordId> &ref_in, Rng &rng) {
  detail::check_state_range(lat);
  if (lat.final_states.empty()) {
    throw MalformedLatticeError("oracle_path: no final state (" +
                                lat.utterance_id + ")");
  }
  std::vector<WordId> ref = strip_auxiliary(ref_in);
  const int R = static_cast<int>(ref.size());
  const int S = lat.num_states;
  const int kInf = 1 << 29;

  std::vector<StateId> order = detail::topo_order(lat);
  std::vector<std::vector<int>> out = detail::out_arcs_index(lat);
  std::vector<std::vector<int>> in_arcs(S);
  for (int ai = 0; ai < static_cast<int>(lat.arcs.size()); ++ai) {
    in_arcs[lat.arcs[ai].dst].push_back(ai);
  }

  auto cell = [R](StateId s, int i) { return s * (R + 1) + i; };
  std::vector<int> cost(static_cast<size_t>(S) * (R + 1), kInf);
  std::vector<double> count(static_cast<size_t>(S) * (R + 1), 0.0);
  cost[cell(lat.initial_state, 0)] = 0;
  count[cell(lat.initial_state, 0)] = 1.0;

  auto relax = [&](int from, int to, int w) {
    if (cost[from] >= kInf) return;
    int c = cost[from] + w;
    if (c < cost[to]) {
      cost[to] = c;
      count[to] = count[from];
    } else if (c == cost[to]) {
      count[to] += count[from];
    }
  };

  for (StateId s : order) {
    // Deletion closure within the state, ascending i.
    for (int i = 1; i <= R; ++i) relax(cell(s, i - 1), cell(s, i), 1);
    for (int ai : out[s]) {
      const Arc &a = lat.arcs[ai];
      if (is_auxiliary_word(a.word)) {
        for (int i = 0; i <= R; ++i) relax(cell(s, i), cell(a.dst, i), 0);
      } else {
        for (int i = 0; i < R; ++i) {
          relax(cell(s, i), cell(a.dst, i + 1), a.word == ref[i] ? 0 : 1);
        }
        for (int i = 0; i <= R; ++i) relax(cell(s, i), cell(a.dst, i), 1);
      }
    }
  }

  // Pick the terminating final state among minimal-cost candidates.
  int best = kInf;
  for (const auto &[f, c] : lat.final_states) {
    (void)c;
    best = std::min(best, cost[cell(f, R)]);
  }
  if (best >= kInf) {
    throw MalformedLatticeError("oracle_path: no complete path (" +
                                lat.utterance_id + ")");
  }
  std::vector<StateId> final_candidates;
  std::vector<double> final_weights;
  for (const auto &[f, c] : lat.final_states) {
    (void)c;
    if (cost[cell(f, R)] == best) {
      final_candidates.push_back(f);
      final_weights.push_back(count[cell(f, R)]);
    }
  }
  StateId cur_state = final_candidates[rng.categorical(final_weights)];
  int cur_i = R;

  // Backtrace, sampling predecessors weighted by their path counts.
  std::vector<int> path_rev;
  while (cur_state != lat.initial_state || cur_i != 0) {
    int here = cost[cell(cur_state, cur_i)];
    struct Pred {
      StateId state;
      int i;
      int arc;  // -1 for deletion steps
    };
    std::vector<Pred> preds;
    std::vector<double> weights;
    auto consider = [&](StateId ps, int pi, int w, int arc) {
      if (pi < 0 || pi > R) return;
      int pc = cost[cell(ps, pi)];
      if (pc < kInf && pc + w == here) {
        preds.push_back({ps, pi, arc});
        weights.push_back(count[cell(ps, pi)]);
      }
    };
    consider(cur_state, cur_i - 1, 1, -1);  // deletion
    for (int ai : in_arcs[cur_state]) {
      const Arc &a = lat.arcs[ai];
      if (is_auxiliary_word(a.word)) {
        consider(a.src, cur_i, 0, ai);
      } else {
        if (cur_i > 0) {
          consider(a.src, cur_i - 1, a.word == ref[cur_i - 1] ? 0 : 1, ai);
        }
        consider(a.src, cur_i, 1, ai);  // insertion
      }
    }
    const Pred &p = preds[rng.categorical(weights)];
    if (p.arc >= 0) path_rev.push_back(p.arc);
    cur_state = p.state;
    cur_i = p.i;
  }
  std::reverse(path_rev.begin(), path_rev.end());

  ArcTargets targets;
  targets.labels.assign(lat.arcs.size(), 0);
  targets.oracle_path = path_rev;
  std::vector<WordId> words;
  for (int ai : path_rev) {
    targets.labels[ai] = 1;
    words.push_back(lat.arcs[ai].word);
  }
  targets.oracle_stats = edit_distance(strip_auxiliary(words), ref);
  return targets;
}

// Corpus WER: 100 * total errors / total reference length. A missing
// hypothesis counts as all deletions.
template <typename T>
EditStats corpus_edit_stats(
    const std::map<std::string, std::vector<T>> &hyps,
    const std::map<std::string, std::vector<T>> &refs) {
  for (const auto &[utt, words] : hyps) {
    (void)words;
    if (!refs.count(utt)) {
      throw MissingReferenceError("no reference for utterance '" + utt + "'");
    }
  }
  EditStats total;
  for (const auto &[utt, ref] : refs) {
    auto it = hyps.find(utt);
    if (it == hyps.end()) {
      EditStats s;
      s.deletions = static_cast<int64_t>(ref.size());
      s.ref_len = static_cast<int64_t>(ref.size());
      total += s;
    } else {
      total += edit_distance(it->second, ref);
    }
  }
  return total;
}

template <typename T>
double corpus_wer(const std::map<std::string, std::vector<T>> &hyps,
                  const std::map<std::string, std::vector<T>> &refs) {
  return corpus_edit_stats(hyps, refs).wer_percent();
}

}  // namespace latrescore

#endif  // LATRESCORE_ALIGN_HPP_
