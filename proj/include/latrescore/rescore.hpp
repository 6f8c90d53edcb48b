// latrescore/rescore.hpp

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
// Hypothesis selection and score combination. Single-shot rescoring feeds
// a whole lattice through the lattice transformer once, converts the
// per-arc oracle probabilities to costs and picks the best path; the
// N-best baseline re-ranks extracted hypotheses with the causal model, one
// model call per hypothesis. Reports carry instrumented call counts and
// processed sequence lengths.

#ifndef LATRESCORE_RESCORE_HPP_
#define LATRESCORE_RESCORE_HPP_

#include <algorithm>
#include <chrono>
#include <cmath>
#include <istream>
#include <map>
#include <ostream>
#include <queue>
#include <set>
#include <string>
#include <vector>

#include "latrescore/align.hpp"
#include "latrescore/error.hpp"
#include "latrescore/lattice.hpp"
#include "latrescore/lattice_io.hpp"
#include "latrescore/ltlm.hpp"

namespace latrescore {

struct BestPath {
  std::vector<WordId> words;  // auxiliary tokens stripped
  double combined_cost = 0.0;
};

// Cheapest complete path under a*ac + l1*lm (+ optional per-arc extra
// cost); ties resolve to the lexicographically smallest state sequence.
inline BestPath best_path(const Lattice &lat, const ScoreWeights &weights = {},
                          const std::vector<double> *extra_arc_costs =
                              nullptr) {
  ViterbiPath vp = detail::viterbi_path(lat, weights, extra_arc_costs);
  return {strip_auxiliary(vp.words), vp.combined_cost};
}

struct Hypothesis {
  std::vector<WordId> words;  // auxiliary tokens stripped
  double ac_cost = 0.0;
  double lm_cost = 0.0;  // includes the terminal final cost
  double combined_cost = 0.0;
};

// Top-N distinct word sequences by combined first-pass cost. Lazy
// best-first expansion with the exact cost-to-final heuristic; paths
// spelling the same words keep the cheapest cost.
inline std::vector<Hypothesis> nbest_extract(const Lattice &lat, int n,
                                             const ScoreWeights &weights = {},
                                             size_t pop_cap = 2000000) {
  if (n <= 0) return {};
  std::vector<double> bwd = detail::backward_costs(lat, weights);
  if (bwd[lat.initial_state] == kInfCost) {
    throw MalformedLatticeError("no complete path (" + lat.utterance_id + ")");
  }
  auto out = detail::out_arcs_index(lat);

  struct Node {
    int parent = -1;
    int arc = -1;
    StateId state = 0;
    double g = 0.0;   // combined cost so far, accumulated in path order
    double ac = 0.0;  // raw acoustic sum
    double lm = 0.0;  // raw language sum
  };
  std::vector<Node> arena;
  arena.push_back({-1, -1, lat.initial_state, 0.0, 0.0, 0.0});

  struct Entry {
    double f = 0.0;
    uint64_t seq = 0;
    int node = 0;
    bool complete = false;
    bool operator>(const Entry &o) const {
      if (f != o.f) return f > o.f;
      if (complete != o.complete) return !complete;  // completions first
      return seq > o.seq;
    }
  };
  std::priority_queue<Entry, std::vector<Entry>, std::greater<Entry>> heap;
  uint64_t seq = 0;
  heap.push({bwd[lat.initial_state], seq++, 0, false});

  std::map<std::vector<WordId>, Hypothesis> found;
  double nth_cost = kInfCost;
  size_t pops = 0;

  auto collected_enough = [&](double top_f) {
    if (static_cast<int>(found.size()) < n) return false;
    return top_f > nth_cost + 1e-9;
  };

  while (!heap.empty() && pops++ < pop_cap) {
    Entry e = heap.top();
    if (collected_enough(e.f)) break;
    heap.pop();
    const Node node = arena[e.node];
    if (e.complete) {
      Hypothesis hyp;
      std::vector<WordId> raw;
      for (int at = e.node; at > 0; at = arena[at].parent) {
        raw.push_back(lat.arcs[arena[at].arc].word);
      }
      std::reverse(raw.begin(), raw.end());
      hyp.words = strip_auxiliary(raw);
      hyp.ac_cost = node.ac;
      hyp.lm_cost = node.lm + lat.final_states.at(node.state);
      hyp.combined_cost = e.f;
      auto [it, fresh] = found.emplace(hyp.words, hyp);
      if (!fresh && hyp.combined_cost < it->second.combined_cost) {
        it->second = hyp;
      }
      if (static_cast<int>(found.size()) >= n) {
        // Track the current n-th best completed cost.
        std::vector<double> costs;
        costs.reserve(found.size());
        for (const auto &[w, h] : found) costs.push_back(h.combined_cost);
        std::nth_element(costs.begin(), costs.begin() + (n - 1), costs.end());
        nth_cost = costs[n - 1];
      }
      continue;
    }
    auto fit = lat.final_states.find(node.state);
    if (fit != lat.final_states.end()) {
      heap.push({node.g + weights.l1 * fit->second, seq++, e.node, true});
    }
    for (int ai : out[node.state]) {
      const Arc &a = lat.arcs[ai];
      if (bwd[a.dst] == kInfCost) continue;
      Node child;
      child.parent = e.node;
      child.arc = ai;
      child.state = a.dst;
      child.g = node.g + combined_arc_cost(a, weights);
      child.ac = node.ac + a.ac_cost;
      child.lm = node.lm + a.lm_cost;
      arena.push_back(child);
      heap.push({child.g + bwd[a.dst], seq++,
                 static_cast<int>(arena.size()) - 1, false});
    }
  }

  std::vector<Hypothesis> result;
  for (auto &[words, hyp] : found) result.push_back(hyp);
  std::sort(result.begin(), result.end(), [](const Hypothesis &x,
                                             const Hypothesis &y) {
    if (x.combined_cost != y.combined_cost) {
      return x.combined_cost < y.combined_cost;
    }
    return x.words < y.words;
  });
  if (static_cast<int>(result.size()) > n) result.resize(n);
  return result;
}

// --- reports ---

struct RescoreReport {
  std::string method;
  struct UttResult {
    std::string utt;
    std::vector<std::string> words;
    double cost = 0.0;
  };
  std::vector<UttResult> utterances;  // sorted by utterance id
  std::vector<std::string> skipped;   // "<utt>: <reason>"
  bool has_wer = false;
  EditStats corpus_stats;
  uint64_t model_calls = 0;
  std::vector<int64_t> seq_lens;  // per processed unit (lattice/hypothesis)
  double wall_time_s = 0.0;

  double wer_percent() const { return corpus_stats.wer_percent(); }
  double avg_seq_len() const {
    if (seq_lens.empty()) return 0.0;
    double s = 0.0;
    for (int64_t v : seq_lens) s += static_cast<double>(v);
    return s / static_cast<double>(seq_lens.size());
  }
};

namespace rescore_detail {

inline std::vector<std::string> to_tokens(const std::vector<WordId> &words,
                                          const SymbolTable &symbols) {
  std::vector<std::string> out;
  out.reserve(words.size());
  for (WordId w : words) out.push_back(symbols.token(w));
  return out;
}

inline void finalize_report(
    RescoreReport &report,
    const std::map<std::string, std::vector<WordId>> &hyps,
    const std::map<std::string, std::vector<WordId>> *refs) {
  std::sort(report.utterances.begin(), report.utterances.end(),
            [](const auto &a, const auto &b) { return a.utt < b.utt; });
  if (refs != nullptr) {
    report.corpus_stats = corpus_edit_stats(hyps, *refs);
    report.has_wer = true;
  }
}

}  // namespace rescore_detail

struct SingleShotOptions {
  ScoreWeights weights;
  int batch_size = 16;
  double prob_floor = 1e-6;  // clamp for -log(p)
};

// Eq-style combination over augmented lattices: cost = a*ac + l1*lm +
// l2*(-log p_arc) with p from one LT-LM call per batch. Oversized lattices
// are skipped with a diagnostic.
inline RescoreReport single_shot_rescore(
    const LatticeArchive &archive, const LtLm &model,
    const SymbolTable &symbols, const SingleShotOptions &options = {},
    const std::map<std::string, std::vector<WordId>> *refs = nullptr) {
  auto start = std::chrono::steady_clock::now();
  RescoreReport report;
  report.method = "single-shot";
  uint64_t calls_before = model_call_counter().load();

  std::vector<Lattice> prepared;
  std::map<std::string, std::vector<WordId>> hyps;
  for (const Lattice &raw : archive.lattices) {
    try {
      Lattice aug = is_augmented(raw) ? raw : augment(topo_sort(raw));
      if (aug.num_states > model.config.max_positions) {
        throw PositionOverflowError("lattice has " +
                                    std::to_string(aug.num_states) +
                                    " states after augmentation");
      }
      prepared.push_back(std::move(aug));
    } catch (const Error &e) {
      report.skipped.push_back(raw.utterance_id + ": " + e.what());
    }
  }

  for (size_t i = 0; i < prepared.size();
       i += static_cast<size_t>(options.batch_size)) {
    size_t end = std::min(prepared.size(),
                          i + static_cast<size_t>(options.batch_size));
    std::vector<const Lattice *> lats;
    for (size_t j = i; j < end; ++j) lats.push_back(&prepared[j]);
    ArcBatch batch = build_arc_batch(lats, {}, model.config);
    auto probs = ltlm_arc_probabilities(model, batch);  // one model call
    for (size_t j = i; j < end; ++j) {
      const Lattice &lat = prepared[j];
      std::vector<double> extra(lat.arcs.size());
      for (size_t a = 0; a < lat.arcs.size(); ++a) {
        double p = std::clamp(probs[j - i][a], options.prob_floor,
                              1.0 - options.prob_floor);
        extra[a] = options.weights.l2 * -std::log(p);
      }
      BestPath best = best_path(lat, options.weights, &extra);
      report.utterances.push_back(
          {lat.utterance_id,
           rescore_detail::to_tokens(best.words, symbols), best.combined_cost});
      hyps[lat.utterance_id] = best.words;
      report.seq_lens.push_back(static_cast<int64_t>(lat.arcs.size()));
    }
  }

  report.model_calls = model_call_counter().load() - calls_before;
  rescore_detail::finalize_report(report, hyps, refs);
  report.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count();
  return report;
}

// First-pass selection only (the l2 = 0 baseline row).
inline RescoreReport first_pass_report(
    const LatticeArchive &archive, const SymbolTable &symbols,
    const ScoreWeights &weights = {},
    const std::map<std::string, std::vector<WordId>> *refs = nullptr) {
  auto start = std::chrono::steady_clock::now();
  RescoreReport report;
  report.method = "first-pass";
  std::map<std::string, std::vector<WordId>> hyps;
  for (const Lattice &lat : archive.lattices) {
    BestPath best = best_path(lat, weights);
    report.utterances.push_back(
        {lat.utterance_id, rescore_detail::to_tokens(best.words, symbols),
         best.combined_cost});
    hyps[lat.utterance_id] = best.words;
    report.seq_lens.push_back(static_cast<int64_t>(best.words.size()));
  }
  rescore_detail::finalize_report(report, hyps, refs);
  report.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count();
  return report;
}

struct NbestOptions {
  ScoreWeights weights;
  int n = 50;
};

// Baseline: rescore each of the top-N hypotheses with the causal model,
// cost = a*ac + l1*lm + l2*(-ar_score); one model call per hypothesis.
inline RescoreReport nbest_rescore(
    const LatticeArchive &archive, const LtLm &ar_model,
    const SymbolTable &symbols, const NbestOptions &options = {},
    const std::map<std::string, std::vector<WordId>> *refs = nullptr) {
  auto start = std::chrono::steady_clock::now();
  RescoreReport report;
  report.method = std::to_string(options.n) + "-best";
  uint64_t calls_before = model_call_counter().load();
  std::map<std::string, std::vector<WordId>> hyps;
  for (const Lattice &lat : archive.lattices) {
    std::vector<Hypothesis> candidates =
        nbest_extract(lat, options.n, options.weights);
    if (candidates.empty()) {
      report.skipped.push_back(lat.utterance_id + ": no hypotheses");
      continue;
    }
    double best_cost = kInfCost;
    const Hypothesis *best = nullptr;
    for (const Hypothesis &hyp : candidates) {
      double ar = ar_score(ar_model, hyp.words);
      double cost = options.weights.a * hyp.ac_cost +
                    options.weights.l1 * hyp.lm_cost +
                    options.weights.l2 * -ar;
      report.seq_lens.push_back(static_cast<int64_t>(hyp.words.size()));
      if (cost < best_cost) {
        best_cost = cost;
        best = &hyp;
      }
    }
    report.utterances.push_back(
        {lat.utterance_id, rescore_detail::to_tokens(best->words, symbols),
         best_cost});
    hyps[lat.utterance_id] = best->words;
  }
  report.model_calls = model_call_counter().load() - calls_before;
  rescore_detail::finalize_report(report, hyps, refs);
  report.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count();
  return report;
}

// --- report file format ---
//
//   #latrescore-report v1
//   method <name>
//   calls <n>
//   seqlen <n1> <n2> ...
//   wer <percent|na>
//   stats <sub> <ins> <del> <reflen>
//   skipped <utt>: <reason>       (zero or more)
//   utt <id> <cost> <w1> <w2> ...
//
// Stable field order; wall time deliberately excluded so reruns diff clean.

inline void write_report(const RescoreReport &report, std::ostream &out) {
  out << "#latrescore-report v1\n";
  out << "method " << report.method << "\n";
  out << "calls " << report.model_calls << "\n";
  out << "seqlen";
  for (int64_t v : report.seq_lens) out << " " << v;
  out << "\n";
  if (report.has_wer) {
    out << "wer " << detail::format_double(report.wer_percent()) << "\n";
    out << "stats " << report.corpus_stats.substitutions << " "
        << report.corpus_stats.insertions << " "
        << report.corpus_stats.deletions << " " << report.corpus_stats.ref_len
        << "\n";
  } else {
    out << "wer na\n";
  }
  for (const std::string &s : report.skipped) out << "skipped " << s << "\n";
  for (const auto &utt : report.utterances) {
    out << "utt " << utt.utt << " " << detail::format_double(utt.cost);
    for (const std::string &w : utt.words) out << " " << w;
    out << "\n";
  }
}

inline RescoreReport read_report(std::istream &in) {
  RescoreReport report;
  std::string line;
  int lineno = 0;
  if (!std::getline(in, line) || line != "#latrescore-report v1") {
    throw SyntaxError(1, 1, "missing report header");
  }
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    detail::FieldSplit fs = detail::split_fields(line);
    const std::string &key = fs.fields[0];
    if (key == "method" && fs.fields.size() == 2) {
      report.method = fs.fields[1];
    } else if (key == "calls" && fs.fields.size() == 2) {
      int64_t v = 0;
      if (!detail::parse_int(fs.fields[1], &v) || v < 0) {
        throw SyntaxError(lineno, fs.cols[1], "bad call count");
      }
      report.model_calls = static_cast<uint64_t>(v);
    } else if (key == "seqlen") {
      for (size_t i = 1; i < fs.fields.size(); ++i) {
        int64_t v = 0;
        if (!detail::parse_int(fs.fields[i], &v)) {
          throw SyntaxError(lineno, fs.cols[i], "bad sequence length");
        }
        report.seq_lens.push_back(v);
      }
    } else if (key == "wer") {
      report.has_wer = fs.fields.size() == 2 && fs.fields[1] != "na";
    } else if (key == "stats" && fs.fields.size() == 5) {
      int64_t s = 0, i = 0, d = 0, r = 0;
      if (!detail::parse_int(fs.fields[1], &s) ||
          !detail::parse_int(fs.fields[2], &i) ||
          !detail::parse_int(fs.fields[3], &d) ||
          !detail::parse_int(fs.fields[4], &r)) {
        throw SyntaxError(lineno, 1, "bad stats line");
      }
      report.corpus_stats = {s, i, d, r};
    } else if (key == "skipped") {
      report.skipped.push_back(line.substr(8));
    } else if (key == "utt" && fs.fields.size() >= 3) {
      RescoreReport::UttResult utt;
      utt.utt = fs.fields[1];
      if (!detail::parse_double(fs.fields[2], &utt.cost)) {
        throw SyntaxError(lineno, fs.cols[2], "bad cost");
      }
      utt.words.assign(fs.fields.begin() + 3, fs.fields.end());
      report.utterances.push_back(std::move(utt));
    } else {
      throw SyntaxError(lineno, 1, "unrecognized report line '" + key + "'");
    }
  }
  return report;
}

// --- method comparison ---

struct StatsTable {
  struct Row {
    std::string method;
    double avg_seq_len = 0.0;
    uint64_t model_calls = 0;
    double wall_time_s = 0.0;
    double wer_percent = 0.0;
    bool has_wer = false;
  };
  std::vector<Row> rows;

  std::string render_text() const {
    char buf[160];
    std::string out;
    snprintf(buf, sizeof(buf), "%-16s %12s %12s %12s %8s\n", "method",
             "av.seq.len", "model calls", "wall time s", "WER%");
    out += buf;
    for (const Row &r : rows) {
      snprintf(buf, sizeof(buf), "%-16s %12.2f %12llu %12.3f %8s\n",
               r.method.c_str(), r.avg_seq_len,
               static_cast<unsigned long long>(r.model_calls), r.wall_time_s,
               r.has_wer ? (std::to_string(r.wer_percent).substr(0, 5)).c_str()
                         : "na");
      out += buf;
    }
    return out;
  }

  std::string render_tsv() const {
    std::string out = "method\tavg_seq_len\tmodel_calls\twall_time_s\twer\n";
    for (const Row &r : rows) {
      out += r.method + "\t" + detail::format_double(r.avg_seq_len) + "\t" +
             std::to_string(r.model_calls) + "\t" +
             detail::format_double(r.wall_time_s) + "\t" +
             (r.has_wer ? detail::format_double(r.wer_percent)
                        : std::string("na")) +
             "\n";
    }
    return out;
  }
};

// Side-by-side comparison; every report must cover the same utterances.
inline StatsTable stats_compare(const std::vector<RescoreReport> &reports) {
  if (reports.size() < 2) {
    throw ConfigError("stats_compare needs at least two reports");
  }
  std::set<std::string> base;
  for (const auto &utt : reports[0].utterances) base.insert(utt.utt);
  for (const RescoreReport &r : reports) {
    std::set<std::string> s;
    for (const auto &utt : r.utterances) s.insert(utt.utt);
    if (s != base) {
      throw MismatchedUtteranceSetsError(
          "report '" + r.method + "' covers a different utterance set");
    }
  }
  StatsTable table;
  for (const RescoreReport &r : reports) {
    table.rows.push_back({r.method, r.avg_seq_len(), r.model_calls,
                          r.wall_time_s, r.wer_percent(), r.has_wer});
  }
  return table;
}

}  // namespace latrescore

#endif  // LATRESCORE_RESCORE_HPP_
