// latrescore/lattice.hpp

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

#ifndef LATRESCORE_LATTICE_HPP_
#define LATRESCORE_LATTICE_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <queue>
#include <string>
#include <unordered_map>
#include <vector>

#include "latrescore/error.hpp"

namespace latrescore {

using StateId = int32_t;
using WordId = int32_t;

// Reserved symbol ids, immutable in every SymbolTable.
constexpr WordId kEpsId = 0;
constexpr WordId kBosId = 1;  // <s>
constexpr WordId kEosId = 2;  // </s>
constexpr WordId kUnkId = 3;

constexpr double kInfCost = std::numeric_limits<double>::infinity();

// Bidirectional token <-> id map with four reserved entries.
class SymbolTable {
 public:
  SymbolTable() {
    add_internal("<eps>");
    add_internal("<s>");
    add_internal("</s>");
    add_internal("<unk>");
  }

  // Returns the id of `token`, adding it if absent.
  WordId add(const std::string &token) {
    auto it = ids_.find(token);
    if (it != ids_.end()) return it->second;
    return add_internal(token);
  }

  // Returns the id of `token` or -1.
  WordId find(const std::string &token) const {
    auto it = ids_.find(token);
    return it == ids_.end() ? -1 : it->second;
  }

  bool contains(WordId id) const {
    return id >= 0 && static_cast<size_t>(id) < tokens_.size();
  }

  const std::string &token(WordId id) const {
    if (!contains(id)) throw Error("symbol id out of range");
    return tokens_[id];
  }

  WordId size() const { return static_cast<WordId>(tokens_.size()); }

  static bool reserved(WordId id) { return id >= 0 && id <= 3; }

  bool operator==(const SymbolTable &o) const { return tokens_ == o.tokens_; }

 private:
  WordId add_internal(const std::string &token) {
    WordId id = static_cast<WordId>(tokens_.size());
    tokens_.push_back(token);
    ids_.emplace(token, id);
    return id;
  }

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, WordId> ids_;
};

// Lattice edge. Costs are negative natural-log probabilities (nats):
// lm_cost holds the first-pass n-gram score, ac_cost the acoustic score.
struct Arc {
  StateId src = 0;
  StateId dst = 0;
  WordId word = 0;
  double lm_cost = 0.0;
  double ac_cost = 0.0;

  bool operator==(const Arc &o) const {
    return src == o.src && dst == o.dst && word == o.word &&
           lm_cost == o.lm_cost && ac_cost == o.ac_cost;
  }
};

// Weighted directed acyclic word graph. final_states maps a state to its
// final cost (nats); a complete path runs from initial_state to some final
// state and its total cost includes that state's final cost.
struct Lattice {
  std::string utterance_id;
  StateId num_states = 0;
  StateId initial_state = 0;
  std::vector<Arc> arcs;
  std::map<StateId, double> final_states;

  bool operator==(const Lattice &o) const {
    return utterance_id == o.utterance_id && num_states == o.num_states &&
           initial_state == o.initial_state && arcs == o.arcs &&
           final_states == o.final_states;
  }
};

// Scale factors of the combined cost a*ac + l1*lm (+ l2*rescore).
struct ScoreWeights {
  double a = 1.0;
  double l1 = 1.0;
  double l2 = 0.8;
};

inline double combined_arc_cost(const Arc &arc, const ScoreWeights &w) {
  return w.a * arc.ac_cost + w.l1 * arc.lm_cost;
}

// States allowed before augmentation; the two auxiliary states added by
// augment() must still fit the 256-row positional embedding tables.
constexpr StateId kMaxLatticeStates = 254;

struct ValidationResult {
  Lattice lattice;                   // trimmed copy when trim was requested
  std::vector<std::string> issues;   // human-readable findings
  bool ok = true;                    // no issues found
};

namespace detail {

inline std::vector<std::vector<int>> out_arcs_index(const Lattice &lat) {
  std::vector<std::vector<int>> out(lat.num_states);
  for (int i = 0; i < static_cast<int>(lat.arcs.size()); ++i) {
    out[lat.arcs[i].src].push_back(i);
  }
  return out;
}

// Kahn topological order with a min-index heap; throws on cycles.
inline std::vector<StateId> topo_order(const Lattice &lat) {
  std::vector<int> indegree(lat.num_states, 0);
  for (const Arc &a : lat.arcs) indegree[a.dst]++;
  std::priority_queue<StateId, std::vector<StateId>, std::greater<StateId>> q;
  for (StateId s = 0; s < lat.num_states; ++s) {
    if (indegree[s] == 0) q.push(s);
  }
  auto out = out_arcs_index(lat);
  std::vector<StateId> order;
  order.reserve(lat.num_states);
  while (!q.empty()) {
    StateId s = q.top();
    q.pop();
    order.push_back(s);
    for (int ai : out[s]) {
      if (--indegree[lat.arcs[ai].dst] == 0) q.push(lat.arcs[ai].dst);
    }
  }
  if (static_cast<StateId>(order.size()) != lat.num_states) {
    throw CyclicLatticeError("lattice contains a cycle (" +
                             lat.utterance_id + ")");
  }
  return order;
}

inline void check_state_range(const Lattice &lat) {
  if (lat.num_states <= 0 || lat.initial_state < 0 ||
      lat.initial_state >= lat.num_states) {
    throw NoInitialStateError("initial state out of range (" +
                              lat.utterance_id + ")");
  }
  for (const Arc &a : lat.arcs) {
    if (a.src < 0 || a.src >= lat.num_states || a.dst < 0 ||
        a.dst >= lat.num_states) {
      throw MalformedLatticeError("arc state out of range (" +
                                  lat.utterance_id + ")");
    }
  }
  for (const auto &[s, c] : lat.final_states) {
    (void)c;
    if (s < 0 || s >= lat.num_states) {
      throw MalformedLatticeError("final state out of range (" +
                                  lat.utterance_id + ")");
    }
  }
}

}  // namespace detail

// Checks structural invariants; with trim=true also removes every state not
// on a complete initial->final path (and the arcs touching them).
// Throws CyclicLatticeError / NoInitialStateError / NoFinalStateError for
// unrecoverable defects; lesser findings are reported in `issues`.
inline ValidationResult validate(const Lattice &lat, bool trim = false) {
  detail::check_state_range(lat);
  if (lat.final_states.empty()) {
    throw NoFinalStateError("lattice has no final state (" +
                            lat.utterance_id + ")");
  }
  detail::topo_order(lat);  // cycle check

  ValidationResult result;
  for (const Arc &a : lat.arcs) {
    if (!std::isfinite(a.lm_cost) || !std::isfinite(a.ac_cost)) {
      throw MalformedLatticeError("non-finite arc cost (" + lat.utterance_id +
                                  ")");
    }
  }
  for (const auto &[s, c] : lat.final_states) {
    (void)s;
    if (!std::isfinite(c)) {
      throw MalformedLatticeError("non-finite final cost (" +
                                  lat.utterance_id + ")");
    }
  }

  // Forward / backward reachability.
  std::vector<char> reach(lat.num_states, 0), coreach(lat.num_states, 0);
  {
    auto out = detail::out_arcs_index(lat);
    std::vector<StateId> stack{lat.initial_state};
    reach[lat.initial_state] = 1;
    while (!stack.empty()) {
      StateId s = stack.back();
      stack.pop_back();
      for (int ai : out[s]) {
        StateId d = lat.arcs[ai].dst;
        if (!reach[d]) {
          reach[d] = 1;
          stack.push_back(d);
        }
      }
    }
    std::vector<std::vector<int>> in(lat.num_states);
    for (int i = 0; i < static_cast<int>(lat.arcs.size()); ++i) {
      in[lat.arcs[i].dst].push_back(i);
    }
    std::vector<StateId> bstack;
    for (const auto &[s, c] : lat.final_states) {
      (void)c;
      if (!coreach[s]) {
        coreach[s] = 1;
        bstack.push_back(s);
      }
    }
    while (!bstack.empty()) {
      StateId s = bstack.back();
      bstack.pop_back();
      for (int ai : in[s]) {
        StateId d = lat.arcs[ai].src;
        if (!coreach[d]) {
          coreach[d] = 1;
          bstack.push_back(d);
        }
      }
    }
  }

  int dead = 0;
  for (StateId s = 0; s < lat.num_states; ++s) {
    if (!reach[s] || !coreach[s]) dead++;
  }
  if (!reach[lat.initial_state] || !coreach[lat.initial_state]) {
    throw NoFinalStateError("no complete path exists (" + lat.utterance_id +
                            ")");
  }
  if (dead > 0) {
    result.ok = false;
    result.issues.push_back(std::to_string(dead) +
                            " state(s) not on any complete path");
  }

  if (!trim || dead == 0) {
    result.lattice = lat;
    return result;
  }

  // Relabel surviving states in ascending order.
  std::vector<StateId> remap(lat.num_states, -1);
  StateId next = 0;
  for (StateId s = 0; s < lat.num_states; ++s) {
    if (reach[s] && coreach[s]) remap[s] = next++;
  }
  Lattice trimmed;
  trimmed.utterance_id = lat.utterance_id;
  trimmed.num_states = next;
  trimmed.initial_state = remap[lat.initial_state];
  for (const Arc &a : lat.arcs) {
    if (remap[a.src] >= 0 && remap[a.dst] >= 0) {
      trimmed.arcs.push_back(
          {remap[a.src], remap[a.dst], a.word, a.lm_cost, a.ac_cost});
    }
  }
  for (const auto &[s, c] : lat.final_states) {
    if (remap[s] >= 0) trimmed.final_states[remap[s]] = c;
  }
  result.lattice = trimmed;
  return result;
}

// Relabels states so that every arc satisfies src < dst and the initial
// state is 0. The hypothesis set and all path costs are unchanged; ties
// (states of equal depth) break by ascending original index.
inline Lattice topo_sort(const Lattice &lat) {
  detail::check_state_range(lat);
  std::vector<StateId> order = detail::topo_order(lat);
  // order[k] = original state at sorted position k. The initial state has
  // indegree 0 and the min-index heap emits it first among depth-0 states;
  // other indegree-0 states (unreachable) may precede it only if their index
  // is smaller, which would break initial=0. Force the initial state first.
  auto it = std::find(order.begin(), order.end(), lat.initial_state);
  std::rotate(order.begin(), it, it + 1);

  std::vector<StateId> remap(lat.num_states);
  for (StateId k = 0; k < lat.num_states; ++k) remap[order[k]] = k;

  Lattice sorted;
  sorted.utterance_id = lat.utterance_id;
  sorted.num_states = lat.num_states;
  sorted.initial_state = 0;
  sorted.arcs.reserve(lat.arcs.size());
  for (const Arc &a : lat.arcs) {
    sorted.arcs.push_back(
        {remap[a.src], remap[a.dst], a.word, a.lm_cost, a.ac_cost});
  }
  std::sort(sorted.arcs.begin(), sorted.arcs.end(),
            [](const Arc &x, const Arc &y) {
              if (x.src != y.src) return x.src < y.src;
              if (x.dst != y.dst) return x.dst < y.dst;
              return x.word < y.word;
            });
  for (const auto &[s, c] : lat.final_states) sorted.final_states[remap[s]] = c;
  return sorted;
}

inline bool is_augmented(const Lattice &lat) {
  for (const Arc &a : lat.arcs) {
    if (a.word == kBosId) return true;
  }
  return false;
}

// Adds a super-initial state with one <s> arc into the old initial state and
// one </s> arc from each final state into a new super-final state. Final
// costs migrate onto the </s> arcs' lm_cost, so the result has a single
// zero-cost final state. The result is topologically sorted; every complete
// path maps 1:1 onto an input path with identical total cost.
inline Lattice augment(const Lattice &lat) {
  if (is_augmented(lat)) {
    throw AlreadyAugmentedError("lattice already carries <s> arcs (" +
                                lat.utterance_id + ")");
  }
  if (lat.num_states > kMaxLatticeStates) {
    throw PositionOverflowError(
        "lattice has " + std::to_string(lat.num_states) + " states, max " +
        std::to_string(kMaxLatticeStates) + " before augmentation (" +
        lat.utterance_id + "); prune harder upstream");
  }
  if (lat.final_states.empty()) {
    throw NoFinalStateError("lattice has no final state (" +
                            lat.utterance_id + ")");
  }
  Lattice aug;
  aug.utterance_id = lat.utterance_id;
  aug.num_states = lat.num_states + 2;
  StateId super_init = lat.num_states;
  StateId super_final = lat.num_states + 1;
  aug.initial_state = super_init;
  aug.arcs = lat.arcs;
  aug.arcs.push_back({super_init, lat.initial_state, kBosId, 0.0, 0.0});
  for (const auto &[s, c] : lat.final_states) {
    aug.arcs.push_back({s, super_final, kEosId, c, 0.0});
  }
  aug.final_states[super_final] = 0.0;
  return topo_sort(aug);
}

// One complete path: word labels plus summed costs. The final cost of the
// terminating state is folded into lm_cost.
struct PathEntry {
  std::vector<WordId> words;
  double lm_cost = 0.0;
  double ac_cost = 0.0;
  std::vector<StateId> states;
  std::vector<int> arc_indices;
};

// Enumerates all complete paths in deterministic lexicographic order by
// state sequence. Test oracle; throws TooManyPathsError past `limit`.
inline std::vector<PathEntry> enumerate_paths(const Lattice &lat,
                                              size_t limit = 100000) {
  detail::check_state_range(lat);
  auto out = detail::out_arcs_index(lat);
  for (auto &v : out) {
    std::sort(v.begin(), v.end(), [&](int x, int y) {
      const Arc &a = lat.arcs[x], &b = lat.arcs[y];
      if (a.dst != b.dst) return a.dst < b.dst;
      if (a.word != b.word) return a.word < b.word;
      return x < y;
    });
  }
  detail::topo_order(lat);  // cycle guard before DFS

  std::vector<PathEntry> paths;
  PathEntry cur;
  cur.states.push_back(lat.initial_state);

  // Iterative DFS; emitting at a final state before extending keeps the
  // output ordered (a prefix sorts before its extensions).
  struct Frame {
    StateId state;
    size_t next_arc = 0;
  };
  std::vector<Frame> stack{{lat.initial_state, 0}};
  while (!stack.empty()) {
    Frame &f = stack.back();
    if (f.next_arc == 0) {
      auto fit = lat.final_states.find(f.state);
      if (fit != lat.final_states.end()) {
        if (paths.size() >= limit) {
          throw TooManyPathsError("more than " + std::to_string(limit) +
                                  " paths (" + lat.utterance_id + ")");
        }
        PathEntry done = cur;
        done.lm_cost += fit->second;
        paths.push_back(std::move(done));
      }
    }
    if (f.next_arc < out[f.state].size()) {
      int ai = out[f.state][f.next_arc++];
      const Arc &a = lat.arcs[ai];
      cur.words.push_back(a.word);
      cur.lm_cost += a.lm_cost;
      cur.ac_cost += a.ac_cost;
      cur.states.push_back(a.dst);
      cur.arc_indices.push_back(ai);
      stack.push_back({a.dst, 0});
    } else {
      stack.pop_back();
      if (!stack.empty()) {
        int ai = cur.arc_indices.back();
        const Arc &a = lat.arcs[ai];
        cur.words.pop_back();
        cur.lm_cost -= a.lm_cost;
        cur.ac_cost -= a.ac_cost;
        cur.states.pop_back();
        cur.arc_indices.pop_back();
      }
    }
  }
  return paths;
}

namespace detail {

// Cheapest combined cost from the initial state to every state.
inline std::vector<double> forward_costs(const Lattice &lat,
                                         const ScoreWeights &w,
                                         const std::vector<double> *extra =
                                             nullptr) {
  std::vector<StateId> order = topo_order(lat);
  std::vector<double> fwd(lat.num_states, kInfCost);
  fwd[lat.initial_state] = 0.0;
  auto out = out_arcs_index(lat);
  for (StateId s : order) {
    if (fwd[s] == kInfCost) continue;
    for (int ai : out[s]) {
      const Arc &a = lat.arcs[ai];
      double c = fwd[s] + combined_arc_cost(a, w) + (extra ? (*extra)[ai] : 0.0);
      if (c < fwd[a.dst]) fwd[a.dst] = c;
    }
  }
  return fwd;
}

// Cheapest combined cost from every state to a final state (final cost
// weighted by l1, matching the </s>-arc migration convention).
inline std::vector<double> backward_costs(const Lattice &lat,
                                          const ScoreWeights &w,
                                          const std::vector<double> *extra =
                                              nullptr) {
  std::vector<StateId> order = topo_order(lat);
  std::vector<double> bwd(lat.num_states, kInfCost);
  for (const auto &[s, c] : lat.final_states) bwd[s] = w.l1 * c;
  auto out = out_arcs_index(lat);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    StateId s = *it;
    for (int ai : out[s]) {
      const Arc &a = lat.arcs[ai];
      if (bwd[a.dst] == kInfCost) continue;
      double c = combined_arc_cost(a, w) + (extra ? (*extra)[ai] : 0.0) +
                 bwd[a.dst];
      if (c < bwd[s]) bwd[s] = c;
    }
  }
  return bwd;
}

}  // namespace detail

struct ViterbiPath {
  std::vector<int> arc_indices;
  std::vector<WordId> words;  // raw labels, auxiliary tokens included
  double combined_cost = 0.0;  // forward sum along the path, final included
};

namespace detail {

// Cheapest complete path under the combined cost, with an optional extra
// per-arc cost vector. Backward DP plus forward greedy reconstruction, so
// ties resolve to the lexicographically smallest state sequence (a final
// state stops before any equal-cost continuation).
inline ViterbiPath viterbi_path(const Lattice &lat, const ScoreWeights &w,
                                const std::vector<double> *extra = nullptr) {
  if (extra && extra->size() != lat.arcs.size()) {
    throw MalformedLatticeError("extra cost vector length mismatch");
  }
  std::vector<double> bwd = backward_costs(lat, w, extra);
  if (bwd[lat.initial_state] == kInfCost) {
    throw MalformedLatticeError("no complete path (" + lat.utterance_id + ")");
  }
  auto out = out_arcs_index(lat);
  for (auto &v : out) {
    std::sort(v.begin(), v.end(), [&](int x, int y) {
      const Arc &a = lat.arcs[x], &b = lat.arcs[y];
      if (a.dst != b.dst) return a.dst < b.dst;
      if (a.word != b.word) return a.word < b.word;
      return x < y;
    });
  }
  ViterbiPath path;
  StateId s = lat.initial_state;
  size_t guard = lat.arcs.size() + 1;
  for (;;) {
    auto fit = lat.final_states.find(s);
    if (fit != lat.final_states.end() && w.l1 * fit->second == bwd[s]) break;
    int chosen = -1;
    for (int ai : out[s]) {
      const Arc &a = lat.arcs[ai];
      double c = combined_arc_cost(a, w) + (extra ? (*extra)[ai] : 0.0) +
                 bwd[a.dst];
      if (c == bwd[s]) {
        chosen = ai;
        break;
      }
    }
    if (chosen < 0 || guard-- == 0) {
      throw MalformedLatticeError("viterbi reconstruction failed (" +
                                  lat.utterance_id + ")");
    }
    path.arc_indices.push_back(chosen);
    path.words.push_back(lat.arcs[chosen].word);
    s = lat.arcs[chosen].dst;
  }
  // Canonical cost: forward sum in path order plus the final cost.
  double acc = 0.0;
  for (int ai : path.arc_indices) {
    acc += combined_arc_cost(lat.arcs[ai], w) + (extra ? (*extra)[ai] : 0.0);
  }
  path.combined_cost = acc + w.l1 * lat.final_states.at(s);
  return path;
}

}  // namespace detail

// Removes every arc whose best complete-path combined cost through it
// exceeds the global best by more than `beam` nats, then trims. The global
// best path always survives; beam = infinity is the identity (up to trim).
inline Lattice prune(const Lattice &lat, double beam,
                     const ScoreWeights &weights = {}) {
  if (beam < 0.0) throw Error("prune: beam must be >= 0");
  ValidationResult vr = validate(lat, /*trim=*/true);
  const Lattice &in = vr.lattice;
  if (std::isinf(beam)) return in;

  std::vector<double> fwd = detail::forward_costs(in, weights);
  std::vector<double> bwd = detail::backward_costs(in, weights);
  double best = bwd[in.initial_state];

  Lattice kept = in;
  kept.arcs.clear();
  for (const Arc &a : in.arcs) {
    double through = fwd[a.src] + combined_arc_cost(a, weights) + bwd[a.dst];
    if (through <= best + beam) kept.arcs.push_back(a);
  }
  return validate(kept, /*trim=*/true).lattice;
}

}  // namespace latrescore

#endif  // LATRESCORE_LATTICE_HPP_
