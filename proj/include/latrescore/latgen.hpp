// latrescore/latgen.hpp

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
// Artificial lattice generation from text: a sentence expands into an
// alignment graph over acoustic classes, a random path through it is
// stretched into a per-frame fake alignment, frame posteriors are drawn
// from the fake acoustic model, and a time-synchronous beam decoder turns
// the posteriors back into a word lattice.

#ifndef LATRESCORE_LATGEN_HPP_
#define LATRESCORE_LATGEN_HPP_

#include <algorithm>
#include <atomic>
#include <cmath>
#include <istream>
#include <map>
#include <ostream>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include "latrescore/align.hpp"
#include "latrescore/error.hpp"
#include "latrescore/lattice.hpp"
#include "latrescore/lattice_io.hpp"
#include "latrescore/ngram.hpp"
#include "latrescore/rng.hpp"

namespace latrescore {

// --- lexicon ---

struct Lexicon {
  int num_classes = 0;  // acoustic class inventory size A
  std::map<WordId, std::vector<std::vector<int>>> prons;

  const std::vector<std::vector<int>> *find(WordId w) const {
    auto it = prons.find(w);
    return it == prons.end() ? nullptr : &it->second;
  }
};

inline Lexicon read_lexicon(std::istream &in, const SymbolTable &symbols,
                            int num_classes) {
  Lexicon lex;
  lex.num_classes = num_classes;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    detail::FieldSplit fs = detail::split_fields(line);
    if (fs.fields.size() < 2) {
      throw SyntaxError(lineno, 1, "expected 'word<TAB>class class ...'");
    }
    WordId w = symbols.find(fs.fields[0]);
    if (w < 0) {
      throw UnknownSymbolError("lexicon word '" + fs.fields[0] +
                               "' not in symbol table");
    }
    std::vector<int> classes;
    for (size_t i = 1; i < fs.fields.size(); ++i) {
      int64_t c = 0;
      if (!detail::parse_int(fs.fields[i], &c) || c < 0 || c >= num_classes) {
        throw SyntaxError(lineno, fs.cols[i], "bad class id '" + fs.fields[i] +
                                                  "'");
      }
      classes.push_back(static_cast<int>(c));
    }
    lex.prons[w].push_back(std::move(classes));
  }
  return lex;
}

inline void write_lexicon(const Lexicon &lex, std::ostream &out,
                          const SymbolTable &symbols) {
  for (const auto &[w, prons] : lex.prons) {
    for (const auto &p : prons) {
      out << symbols.token(w) << "\t";
      for (size_t i = 0; i < p.size(); ++i) {
        if (i) out << " ";
        out << p[i];
      }
      out << "\n";
    }
  }
}

// --- duration model ---

// Per-class empirical run-length histograms plus a pooled fallback.
struct DurationModel {
  std::map<int, std::map<int, double>> per_class;
  std::map<int, double> fallback;

  const std::map<int, double> &histogram(int cls) const {
    auto it = per_class.find(cls);
    return it == per_class.end() ? fallback : it->second;
  }

  int sample(int cls, Rng &rng, int min_len = 1) const {
    const auto &hist = histogram(cls);
    double r = rng.uniform();
    double acc = 0.0;
    int last = 1;
    for (const auto &[len, p] : hist) {
      acc += p;
      last = len;
      if (r < acc) return std::max(len, min_len);
    }
    return std::max(last, min_len);
  }

  double mean(int cls) const {
    double m = 0.0;
    for (const auto &[len, p] : histogram(cls)) m += len * p;
    return m;
  }
};

// Run-length statistics with add-one smoothing over the observed support
// [1, max observed length] per class; unseen classes fall back to the
// pooled histogram.
inline DurationModel estimate_duration_model(
    const std::map<std::string, std::vector<int>> &alignments) {
  if (alignments.empty()) throw EmptyInputError("no alignments");
  std::map<int, std::map<int, int64_t>> counts;
  std::map<int, int64_t> pooled;
  for (const auto &[utt, frames] : alignments) {
    (void)utt;
    size_t i = 0;
    while (i < frames.size()) {
      size_t j = i;
      while (j < frames.size() && frames[j] == frames[i]) ++j;
      int len = static_cast<int>(j - i);
      counts[frames[i]][len]++;
      pooled[len]++;
      i = j;
    }
  }
  DurationModel model;
  auto normalize = [](const std::map<int, int64_t> &hist) {
    int max_len = hist.rbegin()->first;
    std::map<int, double> out;
    double total = 0.0;
    for (int len = 1; len <= max_len; ++len) {
      auto it = hist.find(len);
      double c = (it == hist.end() ? 0.0 : static_cast<double>(it->second)) +
                 1.0;  // add-one over the observed support
      out[len] = c;
      total += c;
    }
    for (auto &[len, p] : out) {
      (void)len;
      p /= total;
    }
    return out;
  };
  for (const auto &[cls, hist] : counts) model.per_class[cls] = normalize(hist);
  model.fallback = normalize(pooled);
  return model;
}

inline void write_duration_model(const DurationModel &model,
                                 std::ostream &out) {
  auto write_hist = [&](const std::string &head,
                        const std::map<int, double> &hist) {
    out << head << ":";
    for (const auto &[len, p] : hist) {
      out << " " << len << ":" << detail::format_double(p);
    }
    out << "\n";
  };
  for (const auto &[cls, hist] : model.per_class) {
    write_hist(std::to_string(cls), hist);
  }
  write_hist("global", model.fallback);
}

inline DurationModel read_duration_model(std::istream &in) {
  DurationModel model;
  std::string line;
  int lineno = 0;
  bool saw_global = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    size_t colon = line.find(':');
    if (colon == std::string::npos) {
      throw SyntaxError(lineno, 1, "expected 'class: len:prob ...'");
    }
    std::string head = line.substr(0, colon);
    std::map<int, double> hist;
    detail::FieldSplit fs = detail::split_fields(line.substr(colon + 1));
    for (size_t i = 0; i < fs.fields.size(); ++i) {
      size_t c2 = fs.fields[i].find(':');
      int64_t len = 0;
      double p = 0.0;
      if (c2 == std::string::npos ||
          !detail::parse_int(fs.fields[i].substr(0, c2), &len) ||
          !detail::parse_double(fs.fields[i].substr(c2 + 1), &p) || len < 1) {
        throw SyntaxError(lineno, 1, "bad duration entry '" + fs.fields[i] +
                                         "'");
      }
      hist[static_cast<int>(len)] = p;
    }
    if (head == "global") {
      model.fallback = hist;
      saw_global = true;
    } else {
      int64_t cls = 0;
      if (!detail::parse_int(head, &cls) || cls < 0) {
        throw SyntaxError(lineno, 1, "bad class id '" + head + "'");
      }
      model.per_class[static_cast<int>(cls)] = hist;
    }
  }
  if (!saw_global) throw DataError("duration model lacks a global fallback");
  return model;
}

// --- fake acoustic model ---

// Row i holds the average posterior distribution over classes observed on
// frames whose true class is i. Rows sum to 1; the diagonal is the row
// maximum (enforced at estimation).
struct FakeAcousticModel {
  int num_classes = 0;
  std::vector<double> rows;  // num_classes * num_classes, row-major

  double at(int i, int j) const { return rows[i * num_classes + j]; }
  std::vector<double> row(int i) const {
    return std::vector<double>(rows.begin() + i * num_classes,
                               rows.begin() + (i + 1) * num_classes);
  }
};

inline void validate_fam(const FakeAcousticModel &fam) {
  for (int i = 0; i < fam.num_classes; ++i) {
    double sum = 0.0, maxv = 0.0;
    for (int j = 0; j < fam.num_classes; ++j) {
      if (fam.at(i, j) < 0.0) throw DataError("negative FAM entry");
      sum += fam.at(i, j);
      maxv = std::max(maxv, fam.at(i, j));
    }
    if (std::abs(sum - 1.0) > 1e-9) {
      throw DataError("FAM row " + std::to_string(i) + " sums to " +
                      std::to_string(sum));
    }
    if (fam.at(i, i) < maxv) {
      throw DataError("FAM row " + std::to_string(i) +
                      " is not diagonal-dominant");
    }
  }
}

inline FakeAcousticModel estimate_fam(
    const std::map<std::string, std::vector<int>> &alignments,
    const std::map<std::string, std::vector<std::vector<double>>> &posteriors,
    int num_classes) {
  FakeAcousticModel fam;
  fam.num_classes = num_classes;
  fam.rows.assign(static_cast<size_t>(num_classes) * num_classes, 0.0);
  std::vector<int64_t> frames_per_class(num_classes, 0);
  for (const auto &[utt, frames] : alignments) {
    auto pit = posteriors.find(utt);
    if (pit == posteriors.end()) {
      throw FrameCountMismatchError("no posteriors for " + utt);
    }
    const auto &post = pit->second;
    if (post.size() != frames.size()) {
      throw FrameCountMismatchError(
          "posterior/alignment frame counts differ for " + utt);
    }
    for (size_t t = 0; t < frames.size(); ++t) {
      int cls = frames[t];
      if (cls < 0 || cls >= num_classes ||
          static_cast<int>(post[t].size()) != num_classes) {
        throw DataError("bad class id or posterior width for " + utt);
      }
      for (int j = 0; j < num_classes; ++j) {
        fam.rows[cls * num_classes + j] += post[t][j];
      }
      frames_per_class[cls]++;
    }
  }
  for (int i = 0; i < num_classes; ++i) {
    double *row = fam.rows.data() + static_cast<size_t>(i) * num_classes;
    if (frames_per_class[i] == 0) {
      // Never-aligned class: smoothed identity row.
      for (int j = 0; j < num_classes; ++j) row[j] = 1e-6;
      row[i] = 1.0;
    } else {
      for (int j = 0; j < num_classes; ++j) {
        row[j] = row[j] / static_cast<double>(frames_per_class[i]) + 1e-6;
      }
    }
    // Realism guard: the true class must stay the most likely one.
    double maxv = 0.0;
    for (int j = 0; j < num_classes; ++j) maxv = std::max(maxv, row[j]);
    if (row[i] < maxv) row[i] = maxv + 1e-6;
    double sum = 0.0;
    for (int j = 0; j < num_classes; ++j) sum += row[j];
    for (int j = 0; j < num_classes; ++j) row[j] /= sum;
  }
  validate_fam(fam);
  return fam;
}

inline void write_fam(const FakeAcousticModel &fam, std::ostream &out) {
  out << "A=" << fam.num_classes << "\n";
  for (int i = 0; i < fam.num_classes; ++i) {
    for (int j = 0; j < fam.num_classes; ++j) {
      if (j) out << " ";
      out << detail::format_double(fam.at(i, j));
    }
    out << "\n";
  }
}

inline FakeAcousticModel read_fam(std::istream &in) {
  std::string line;
  if (!std::getline(in, line) || line.rfind("A=", 0) != 0) {
    throw SyntaxError(1, 1, "expected 'A=<n>' header");
  }
  int64_t n = 0;
  if (!detail::parse_int(line.substr(2), &n) || n <= 0 || n > 4096) {
    throw SyntaxError(1, 3, "bad class count");
  }
  FakeAcousticModel fam;
  fam.num_classes = static_cast<int>(n);
  fam.rows.reserve(static_cast<size_t>(n) * n);
  int lineno = 1;
  for (int i = 0; i < n; ++i) {
    if (!std::getline(in, line)) {
      throw SyntaxError(lineno, 1, "truncated FAM matrix");
    }
    ++lineno;
    detail::FieldSplit fs = detail::split_fields(line);
    if (fs.fields.size() != static_cast<size_t>(n)) {
      throw SyntaxError(lineno, 1, "FAM row has wrong width");
    }
    for (size_t j = 0; j < fs.fields.size(); ++j) {
      double v = 0.0;
      if (!detail::parse_double(fs.fields[j], &v)) {
        throw SyntaxError(lineno, fs.cols[j], "bad FAM entry");
      }
      fam.rows.push_back(v);
    }
  }
  validate_fam(fam);
  return fam;
}

// --- alignment graph and fake alignments ---

// Linear word chain expanded by pronunciation alternatives.
struct AlignmentGraph {
  std::vector<WordId> words;
  // alternatives[w][p] = class sequence of pronunciation p of word w
  std::vector<std::vector<std::vector<int>>> alternatives;

  double path_count() const {
    double n = 1.0;
    for (const auto &alts : alternatives) n *= static_cast<double>(alts.size());
    return n;
  }
};

// Deterministic spelling-based pronunciation for out-of-lexicon words;
// adjacent repeats are bumped to the next class.
inline std::vector<int> grapheme_pronunciation(const std::string &token,
                                               int num_classes) {
  std::vector<int> classes;
  for (unsigned char c : token) {
    int cls = static_cast<int>(mix64(c) % static_cast<uint64_t>(num_classes));
    if (!classes.empty() && classes.back() == cls) {
      cls = (cls + 1) % num_classes;
    }
    classes.push_back(cls);
  }
  if (classes.empty()) classes.push_back(0);
  return classes;
}

inline AlignmentGraph build_alignment_graph(
    const std::vector<WordId> &text, const Lexicon &lexicon,
    const SymbolTable *symbols = nullptr, bool grapheme_fallback = false) {
  AlignmentGraph graph;
  for (WordId w : text) {
    const auto *prons = lexicon.find(w);
    if (prons == nullptr || prons->empty()) {
      if (grapheme_fallback && symbols != nullptr && symbols->contains(w)) {
        graph.words.push_back(w);
        graph.alternatives.push_back(
            {grapheme_pronunciation(symbols->token(w), lexicon.num_classes)});
        continue;
      }
      std::string name = symbols && symbols->contains(w)
                             ? symbols->token(w)
                             : ("id " + std::to_string(w));
      throw UnpronounceableWordError("no pronunciation for '" + name + "'");
    }
    graph.words.push_back(w);
    graph.alternatives.push_back(*prons);
  }
  return graph;
}

// Per-frame class sequence produced by sampling one pronunciation path and
// stretching every class run by a sampled duration.
struct FakeAlignment {
  std::string utterance_id;
  std::vector<int> frames;
  struct WordSpan {
    WordId word;
    int begin = 0;  // inclusive frame
    int end = 0;    // exclusive frame
  };
  std::vector<WordSpan> words;
};

// Samples a pronunciation path uniformly, collapses identical adjacent
// classes into single runs, then stretches each run by N frames from its
// duration distribution. A run covering k collapsed arcs keeps N >= k so
// the original path stays decodable.
inline FakeAlignment sample_fake_alignment(const AlignmentGraph &graph,
                                           const DurationModel &durations,
                                           Rng &rng) {
  FakeAlignment fali;
  struct Run {
    int cls;
    int merged_arcs;
    int last_word;  // index of the last word contributing to the run
  };
  std::vector<Run> runs;
  std::vector<int> word_last_run(graph.words.size(), -1);
  for (size_t w = 0; w < graph.words.size(); ++w) {
    const auto &alts = graph.alternatives[w];
    const auto &pron = alts[rng.uniform_int(alts.size())];
    for (int cls : pron) {
      if (!runs.empty() && runs.back().cls == cls) {
        runs.back().merged_arcs++;
        runs.back().last_word = static_cast<int>(w);
      } else {
        runs.push_back({cls, 1, static_cast<int>(w)});
      }
      word_last_run[w] = static_cast<int>(runs.size()) - 1;
    }
  }
  std::vector<int> run_end(runs.size(), 0);
  for (size_t r = 0; r < runs.size(); ++r) {
    int n = durations.sample(runs[r].cls, rng, runs[r].merged_arcs);
    for (int i = 0; i < n; ++i) fali.frames.push_back(runs[r].cls);
    run_end[r] = static_cast<int>(fali.frames.size());
  }
  int begin = 0;
  for (size_t w = 0; w < graph.words.size(); ++w) {
    int end = word_last_run[w] >= 0 ? run_end[word_last_run[w]] : begin;
    fali.words.push_back({graph.words[w], begin, end});
    begin = end;
  }
  return fali;
}

// Frame posteriors: the FAM row of the frame's class, optionally redrawn
// from a Dirichlet centered on that row (concentration kappa).
inline std::vector<std::vector<double>> synthesize_posteriors(
    const FakeAlignment &fali, const FakeAcousticModel &fam, Rng &rng,
    double kappa = 0.0) {
  std::vector<std::vector<double>> post;
  post.reserve(fali.frames.size());
  for (int cls : fali.frames) {
    std::vector<double> row = fam.row(cls);
    if (kappa > 0.0) row = rng.dirichlet(row, kappa);
    post.push_back(std::move(row));
  }
  return post;
}

// --- time-synchronous decoding ---

struct DecodeConfig {
  double beam = 8.0;        // token beam (nats) around the frame best
  int max_active = 200;     // token count cap per frame
  double prune_beam = 4.0;  // output lattice beam
  double lm_scale = 1.0;
  double ac_scale = 1.0;
  int max_states = kMaxLatticeStates;
};

namespace latgen_detail {

// Prefix tree over pronunciation class sequences.
struct PrefixTree {
  struct Node {
    int cls = -1;
    std::map<int, int> children;
    std::vector<WordId> words;  // words whose pronunciation ends here
  };
  std::vector<Node> nodes;

  explicit PrefixTree(const Lexicon &lexicon) {
    nodes.push_back({});
    for (const auto &[word, prons] : lexicon.prons) {
      for (const auto &pron : prons) {
        int at = 0;
        for (int cls : pron) {
          auto it = nodes[at].children.find(cls);
          if (it == nodes[at].children.end()) {
            nodes.push_back({});
            nodes.back().cls = cls;
            it = nodes[at].children.emplace(cls,
                                            static_cast<int>(nodes.size()) - 1)
                     .first;
          }
          at = it->second;
        }
        nodes[at].words.push_back(word);
      }
    }
  }
};

struct Token {
  double total = kInfCost;   // combined search cost
  double word_ac = 0.0;      // raw acoustic cost inside the current word
  StateId src_state = 0;     // lattice state where the current word began
};

}  // namespace latgen_detail

// Token-passing decode of a posterior matrix into a word lattice. Lattice
// states are (end frame, LM state) pairs; inferior word-link arrivals at an
// existing state become alternative arcs. Throws DeadEndError when every
// token dies (beam too small).
inline Lattice decode_to_lattice(
    const std::vector<std::vector<double>> &posteriors, const Lexicon &lexicon,
    const NgramModel &lm, const DecodeConfig &config,
    const std::string &utterance_id = "gen") {
  if (posteriors.empty()) throw DataError("empty posterior matrix");
  const int T = static_cast<int>(posteriors.size());
  const int A = lexicon.num_classes;
  for (const auto &row : posteriors) {
    if (static_cast<int>(row.size()) != A) {
      throw DataError("posterior width mismatch");
    }
  }
  latgen_detail::PrefixTree tree(lexicon);

  // Interned LM states and lattice states.
  std::vector<NgramState> lm_states{lm.begin_state()};
  std::map<NgramState, int> lm_ids{{lm_states[0], 0}};
  auto intern_lm = [&](const NgramState &s) {
    auto it = lm_ids.find(s);
    if (it != lm_ids.end()) return it->second;
    lm_states.push_back(s);
    return lm_ids.emplace(s, static_cast<int>(lm_states.size()) - 1)
        .first->second;
  };
  // Lattice state 0 is the super-initial (frame -1, begin LM state).
  std::map<std::pair<int, int>, StateId> lattice_ids;
  StateId num_lattice_states = 1;
  auto intern_lattice = [&](int frame, int lm_id) {
    auto key = std::make_pair(frame, lm_id);
    auto it = lattice_ids.find(key);
    if (it != lattice_ids.end()) return it->second;
    return lattice_ids.emplace(key, num_lattice_states++).first->second;
  };

  struct ArcCosts {
    double lm = 0.0;
    double ac = 0.0;
  };
  std::map<std::tuple<StateId, StateId, WordId>, ArcCosts> arcs;
  std::map<StateId, double> final_costs;

  using TokenKey = std::pair<int, int>;  // (tree node, lm state id)
  std::map<TokenKey, latgen_detail::Token> tokens;
  tokens[{0, 0}] = {0.0, 0.0, 0};

  auto acoustic_cost = [&](int t, int cls) {
    return -std::log(std::max(posteriors[t][cls], 1e-10));
  };

  for (int t = 0; t < T; ++t) {
    std::map<TokenKey, latgen_detail::Token> next;
    auto offer = [&](int node, int lm_id, const latgen_detail::Token &tok) {
      auto [it, inserted] = next.emplace(TokenKey{node, lm_id}, tok);
      if (!inserted && tok.total < it->second.total) it->second = tok;
    };
    // A word completing at frame t: record its arc and respawn at the root.
    auto complete_words = [&](int node, int lm_id,
                              const latgen_detail::Token &tok) {
      for (WordId w : tree.nodes[node].words) {
        auto [logp, next_state] = lm.score_step(lm_states[lm_id], w);
        double lm_cost = -logp;
        int next_lm = intern_lm(next_state);
        StateId dst = intern_lattice(t, next_lm);
        auto key = std::make_tuple(tok.src_state, dst, w);
        auto [ait, fresh] = arcs.emplace(key, ArcCosts{lm_cost, tok.word_ac});
        if (!fresh && tok.word_ac + lm_cost < ait->second.ac + ait->second.lm) {
          ait->second = {lm_cost, tok.word_ac};
        }
        latgen_detail::Token spawn;
        spawn.total = tok.total + config.lm_scale * lm_cost;
        spawn.word_ac = 0.0;
        spawn.src_state = dst;
        offer(0, next_lm, spawn);
        if (t == T - 1) {
          double eos_cost = -lm.score_step(next_state, kEosId).first;
          auto fit = final_costs.find(dst);
          if (fit == final_costs.end() || eos_cost < fit->second) {
            final_costs[dst] = eos_cost;
          }
        }
      }
    };

    for (const auto &[key, tok] : tokens) {
      auto [node, lm_id] = key;
      // Self-loop on the current class.
      if (node != 0) {
        double c = acoustic_cost(t, tree.nodes[node].cls);
        latgen_detail::Token stay = tok;
        stay.total += config.ac_scale * c;
        stay.word_ac += c;
        offer(node, lm_id, stay);
        complete_words(node, lm_id, stay);
      }
      // Advance one class edge.
      for (const auto &[cls, child] : tree.nodes[node].children) {
        double c = acoustic_cost(t, cls);
        latgen_detail::Token moved = tok;
        moved.total += config.ac_scale * c;
        moved.word_ac += c;
        offer(child, lm_id, moved);
        complete_words(child, lm_id, moved);
      }
    }
    if (next.empty()) {
      throw DeadEndError("all decoder tokens died at frame " +
                         std::to_string(t) + " (" + utterance_id + ")");
    }
    // Beam and histogram pruning.
    double best = kInfCost;
    for (const auto &[key, tok] : next) best = std::min(best, tok.total);
    std::vector<std::pair<TokenKey, latgen_detail::Token>> kept;
    for (const auto &entry : next) {
      if (entry.second.total <= best + config.beam) kept.push_back(entry);
    }
    if (static_cast<int>(kept.size()) > config.max_active) {
      std::sort(kept.begin(), kept.end(), [](const auto &a, const auto &b) {
        if (a.second.total != b.second.total) {
          return a.second.total < b.second.total;
        }
        return a.first < b.first;
      });
      kept.resize(config.max_active);
    }
    tokens.clear();
    for (auto &entry : kept) tokens.insert(std::move(entry));
  }

  if (final_costs.empty()) {
    throw DeadEndError("no word ends at the last frame (" + utterance_id +
                       ")");
  }

  Lattice lat;
  lat.utterance_id = utterance_id;
  lat.num_states = num_lattice_states;
  lat.initial_state = 0;
  for (const auto &[key, costs] : arcs) {
    auto [src, dst, word] = key;
    lat.arcs.push_back({src, dst, word, costs.lm, costs.ac});
  }
  lat.final_states = final_costs;
  lat = topo_sort(validate(lat, /*trim=*/true).lattice);
  return prune(lat, config.prune_beam);
}

// Retry wrapper: doubles the beam on dead ends and tightens the output
// beam when the lattice exceeds the state budget.
inline Lattice decode_with_retry(
    const std::vector<std::vector<double>> &posteriors, const Lexicon &lexicon,
    const NgramModel &lm, DecodeConfig config, const std::string &utterance_id,
    int max_retries = 3) {
  for (int attempt = 0;; ++attempt) {
    try {
      Lattice lat =
          decode_to_lattice(posteriors, lexicon, lm, config, utterance_id);
      while (lat.num_states > config.max_states && config.prune_beam > 0.5) {
        config.prune_beam -= 1.0;
        if (config.prune_beam < 0.5) config.prune_beam = 0.5;
        lat = prune(lat, config.prune_beam);
      }
      if (lat.num_states > config.max_states) {
        throw PositionOverflowError("lattice for " + utterance_id +
                                    " still oversized after re-pruning");
      }
      return lat;
    } catch (const DeadEndError &) {
      if (attempt >= max_retries) throw;
      config.beam *= 2.0;
      config.max_active *= 2;
    }
  }
}

// --- corpus generation ---

struct GenerationConfig {
  DecodeConfig decode;
  double kappa = 0.0;  // 0 = deterministic FAM rows
  int retries = 3;
  int jobs = 1;
  bool grapheme_fallback = false;  // strict mode drops unknown-word texts
  uint64_t seed = 1;
};

struct GenerationResult {
  LatticeArchive archive;
  std::map<std::string, ArcTargets> targets;
  std::vector<std::string> failures;  // "<utt>: <reason>"
  EditStats oracle_stats;             // oracle path vs source text
  EditStats first_pass_stats;         // cheapest-path words vs source text
  double avg_arcs = 0.0;
  double avg_states = 0.0;
  double avg_paths_hint = 0.0;  // arcs per word, density diagnostic
};

// One lattice per input sentence; failures are per-utterance, never a
// global abort. Deterministic: every utterance derives its own rng from
// (seed, utterance id), so generation parallelizes without reordering
// effects.
inline GenerationResult generate_corpus(
    const std::map<std::string, std::vector<WordId>> &texts,
    const Lexicon &lexicon, const NgramModel &lm,
    const DurationModel &durations, const FakeAcousticModel &fam,
    const GenerationConfig &config, const SymbolTable *symbols = nullptr) {
  GenerationResult result;
  std::vector<std::pair<std::string, const std::vector<WordId> *>> items;
  for (const auto &[utt, words] : texts) items.emplace_back(utt, &words);

  struct Slot {
    bool ok = false;
    Lattice lattice;
    ArcTargets targets;
    EditStats first_pass;
    std::string failure;
  };
  std::vector<Slot> slots(items.size());

  auto work = [&](size_t i) {
    const auto &[utt, words] = items[i];
    Slot &slot = slots[i];
    try {
      Rng rng(derive_seed(config.seed, "gen/" + utt));
      AlignmentGraph graph = build_alignment_graph(
          *words, lexicon, symbols, config.grapheme_fallback);
      FakeAlignment fali = sample_fake_alignment(graph, durations, rng);
      fali.utterance_id = utt;
      auto posteriors = synthesize_posteriors(fali, fam, rng, config.kappa);
      Lattice lat = decode_with_retry(posteriors, lexicon, lm, config.decode,
                                      utt, config.retries);
      lat.utterance_id = utt;
      Rng oracle_rng(derive_seed(config.seed, "oracle/" + utt));
      slot.targets = oracle_path(lat, *words, oracle_rng);
      ViterbiPath best = detail::viterbi_path(lat, ScoreWeights{});
      slot.first_pass = edit_distance(strip_auxiliary(best.words), *words);
      slot.lattice = std::move(lat);
      slot.ok = true;
    } catch (const Error &e) {
      slot.failure = utt + ": " + e.what();
    }
  };

  int jobs = std::max(1, config.jobs);
  if (jobs == 1) {
    for (size_t i = 0; i < items.size(); ++i) work(i);
  } else {
    std::vector<std::thread> pool;
    std::atomic<size_t> cursor{0};
    for (int j = 0; j < jobs; ++j) {
      pool.emplace_back([&]() {
        for (;;) {
          size_t i = cursor.fetch_add(1);
          if (i >= items.size()) return;
          work(i);
        }
      });
    }
    for (auto &th : pool) th.join();
  }

  int64_t total_arcs = 0, total_states = 0, total_words = 0;
  for (size_t i = 0; i < items.size(); ++i) {
    Slot &slot = slots[i];
    if (!slot.ok) {
      result.failures.push_back(slot.failure);
      continue;
    }
    total_arcs += static_cast<int64_t>(slot.lattice.arcs.size());
    total_states += slot.lattice.num_states;
    total_words += static_cast<int64_t>(items[i].second->size());
    result.oracle_stats += slot.targets.oracle_stats;
    result.first_pass_stats += slot.first_pass;
    result.targets[items[i].first] = std::move(slot.targets);
    result.archive.lattices.push_back(std::move(slot.lattice));
    result.archive.transcripts[items[i].first] = *items[i].second;
  }
  size_t n = result.archive.lattices.size();
  if (n > 0) {
    result.avg_arcs = static_cast<double>(total_arcs) / n;
    result.avg_states = static_cast<double>(total_states) / n;
    result.avg_paths_hint =
        total_words > 0
            ? static_cast<double>(total_arcs) / static_cast<double>(total_words)
            : 0.0;
  }
  return result;
}

}  // namespace latrescore

#endif  // LATRESCORE_LATGEN_HPP_
