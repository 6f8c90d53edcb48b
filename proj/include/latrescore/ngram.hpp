// latrescore/ngram.hpp

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
// Backoff n-gram language model with Witten-Bell smoothing. Probabilities
// are kept in log10 internally (the ARPA on-disk convention, so round trips
// are bit-exact) and exposed in nats through the scoring API.

#ifndef LATRESCORE_NGRAM_HPP_
#define LATRESCORE_NGRAM_HPP_

#include <cmath>
#include <cstdint>
#include <istream>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "latrescore/error.hpp"
#include "latrescore/lattice.hpp"
#include "latrescore/lattice_io.hpp"

namespace latrescore {

constexpr double kLn10 = 2.302585092994046;

// Tokens a model may predict: everything except <eps> and <s>.
inline bool ngram_predictable(WordId w) { return w != kEpsId && w != kBosId; }

struct NgramEntry {
  double logp10 = 0.0;  // log10 P(last | prefix)
  double bow10 = 0.0;   // log10 backoff weight, valid when has_bow
  bool has_bow = false;

  bool operator==(const NgramEntry &o) const {
    return logp10 == o.logp10 && bow10 == o.bow10 && has_bow == o.has_bow;
  }
};

using NgramKey = std::vector<WordId>;

// LM context: the token history retained by the model, newest token last.
struct NgramState {
  NgramKey context;
  bool operator==(const NgramState &o) const { return context == o.context; }
  bool operator<(const NgramState &o) const { return context < o.context; }
};

class NgramModel {
 public:
  NgramModel() = default;
  NgramModel(int order, SymbolTable vocab)
      : order_(order), vocab_(std::move(vocab)), tables_(order) {
    if (order < 1 || order > 4) throw ConfigError("ngram order must be 1..4");
  }

  int order() const { return order_; }
  const SymbolTable &vocab() const { return vocab_; }

  const std::map<NgramKey, NgramEntry> &table(int n) const {
    return tables_[n - 1];
  }
  std::map<NgramKey, NgramEntry> &mutable_table(int n) {
    return tables_[n - 1];
  }

  WordId normalize_word(WordId w) const {
    if (w < 0 || w >= vocab_.size() || w == kEpsId) return kUnkId;
    return w;
  }

  // log10 P(w | context) with backoff.
  double log10_prob(const NgramKey &context, WordId word) const {
    WordId w = normalize_word(word);
    NgramKey h = context;
    if (static_cast<int>(h.size()) > order_ - 1) {
      h.erase(h.begin(), h.end() - (order_ - 1));
    }
    double bow_acc = 0.0;
    for (;;) {
      NgramKey key = h;
      key.push_back(w);
      auto &tbl = tables_[key.size() - 1];
      auto it = tbl.find(key);
      if (it != tbl.end()) return bow_acc + it->second.logp10;
      if (h.empty()) {
        // Every predictable word has a unigram entry; only <s> ends here.
        return bow_acc - 99.0;
      }
      auto &ctx_tbl = tables_[h.size() - 1];
      auto cit = ctx_tbl.find(h);
      if (cit != ctx_tbl.end() && cit->second.has_bow) {
        bow_acc += cit->second.bow10;
      }
      h.erase(h.begin());
    }
  }

  // Exact backoff evaluation in nats plus the successor state: the longest
  // suffix of (context, word) the model retains.
  std::pair<double, NgramState> score_step(const NgramState &state,
                                           WordId word) const {
    WordId w = normalize_word(word);
    double logp = log10_prob(state.context, w) * kLn10;
    NgramKey next = state.context;
    next.push_back(w);
    if (static_cast<int>(next.size()) > order_ - 1) {
      next.erase(next.begin(), next.end() - (order_ - 1));
    }
    while (!next.empty() && !is_context(next)) next.erase(next.begin());
    return {logp, NgramState{next}};
  }

  NgramState begin_state() const {
    NgramKey ctx;
    if (order_ > 1) ctx.push_back(kBosId);
    return NgramState{ctx};
  }

  // Total log-probability (nats) of a sentence wrapped in <s>...</s>.
  double score_sentence(const std::vector<WordId> &words) const {
    NgramState state = begin_state();
    double total = 0.0;
    for (WordId w : words) {
      auto [lp, next] = score_step(state, w);
      total += lp;
      state = next;
    }
    auto [lp, next] = score_step(state, kEosId);
    (void)next;
    return total + lp;
  }

  bool operator==(const NgramModel &o) const {
    return order_ == o.order_ && vocab_ == o.vocab_ && tables_ == o.tables_;
  }

 private:
  bool is_context(const NgramKey &h) const {
    if (h.empty() || static_cast<int>(h.size()) >= order_) return false;
    auto &tbl = tables_[h.size() - 1];
    auto it = tbl.find(h);
    return it != tbl.end() && it->second.has_bow;
  }

  int order_ = 3;
  SymbolTable vocab_;
  std::vector<std::map<NgramKey, NgramEntry>> tables_;
};

// Witten-Bell training. Each sentence is implicitly wrapped in <s>...</s>;
// the recursion terminates in a uniform distribution over predictable
// tokens, so every context normalizes to exactly 1 and unseen words keep a
// floor probability through <unk>.
inline NgramModel train_ngram(const std::vector<std::vector<WordId>> &corpus,
                              int order, const SymbolTable &vocab) {
  if (corpus.empty()) throw EmptyCorpusError("ngram training corpus is empty");
  NgramModel model(order, vocab);

  std::vector<std::map<NgramKey, int64_t>> counts(order);
  for (const auto &sentence : corpus) {
    std::vector<WordId> toks;
    toks.reserve(sentence.size() + 2);
    toks.push_back(kBosId);
    for (WordId w : sentence) toks.push_back(model.normalize_word(w));
    toks.push_back(kEosId);
    for (int n = 1; n <= order; ++n) {
      for (size_t i = 0; i + n <= toks.size(); ++i) {
        // Do not count <s> as a predicted token.
        if (toks[i + n - 1] == kBosId) continue;
        NgramKey key(toks.begin() + i, toks.begin() + i + n);
        counts[n - 1][key]++;
      }
    }
  }

  // Context statistics: total continuation count and distinct-type count.
  std::vector<std::map<NgramKey, std::pair<int64_t, int64_t>>> ctx(order);
  for (int n = 1; n <= order; ++n) {
    for (const auto &[key, c] : counts[n - 1]) {
      NgramKey h(key.begin(), key.end() - 1);
      auto &stat = ctx[n - 1][h];
      stat.first += c;
      stat.second += 1;
    }
  }

  int num_predictable = 0;
  for (WordId w = 0; w < vocab.size(); ++w) {
    if (ngram_predictable(w)) num_predictable++;
  }
  const double uniform = 1.0 / num_predictable;

  // Interpolated probabilities, lowest order first.
  std::vector<std::map<NgramKey, double>> probs(order);
  {
    auto &stat = ctx[0][NgramKey{}];
    double denom = static_cast<double>(stat.first + stat.second);
    for (WordId w = 0; w < vocab.size(); ++w) {
      if (!ngram_predictable(w)) continue;
      NgramKey key{w};
      auto it = counts[0].find(key);
      double c = it == counts[0].end() ? 0.0 : static_cast<double>(it->second);
      probs[0][key] = (c + stat.second * uniform) / denom;
    }
  }
  for (int n = 2; n <= order; ++n) {
    for (const auto &[key, c] : counts[n - 1]) {
      NgramKey h(key.begin(), key.end() - 1);
      NgramKey lower(key.begin() + 1, key.end());
      const auto &stat = ctx[n - 1].at(h);
      double denom = static_cast<double>(stat.first + stat.second);
      double lower_p = probs[n - 2].at(lower);
      probs[n - 1][key] =
          (static_cast<double>(c) + stat.second * lower_p) / denom;
    }
  }

  // Assemble entries: log10 probs plus backoff weights on contexts.
  for (int n = 1; n <= order; ++n) {
    for (const auto &[key, p] : probs[n - 1]) {
      model.mutable_table(n)[key].logp10 = std::log10(p);
    }
  }
  // <s> participates only as a context; conventional placeholder prob.
  model.mutable_table(1)[NgramKey{kBosId}].logp10 = -99.0;
  for (int n = 2; n <= order; ++n) {
    for (const auto &[h, stat] : ctx[n - 1]) {
      double bow = static_cast<double>(stat.second) /
                   static_cast<double>(stat.first + stat.second);
      auto &entry = model.mutable_table(n - 1)[h];
      entry.bow10 = std::log10(bow);
      entry.has_bow = true;
    }
  }
  return model;
}

// --- ARPA-style text serialization ---

inline void write_arpa(const NgramModel &model, std::ostream &out) {
  out << "\\data\\\n";
  for (int n = 1; n <= model.order(); ++n) {
    out << "ngram " << n << "=" << model.table(n).size() << "\n";
  }
  out << "\n";
  for (int n = 1; n <= model.order(); ++n) {
    out << "\\" << n << "-grams:\n";
    for (const auto &[key, entry] : model.table(n)) {
      out << detail::format_double(entry.logp10) << "\t";
      for (size_t i = 0; i < key.size(); ++i) {
        if (i) out << " ";
        out << model.vocab().token(key[i]);
      }
      if (entry.has_bow) out << "\t" << detail::format_double(entry.bow10);
      out << "\n";
    }
    out << "\n";
  }
  out << "\\end\\\n";
}

inline NgramModel read_arpa(std::istream &in, const SymbolTable &vocab) {
  auto fail = [](int line, const std::string &msg) {
    throw MalformedArpaError("line " + std::to_string(line) + ": " + msg);
  };
  std::string line;
  int lineno = 0;
  auto next_line = [&]() -> bool {
    if (!std::getline(in, line)) return false;
    ++lineno;
    return true;
  };

  while (next_line() && line.empty()) {
  }
  if (line != "\\data\\") fail(lineno, "expected \\data\\ header");
  std::vector<int64_t> declared;
  while (next_line() && !line.empty()) {
    detail::FieldSplit fs = detail::split_fields(line);
    int64_t n = 0, cnt = 0;
    if (fs.fields.size() != 2 || fs.fields[0] != "ngram") {
      fail(lineno, "expected 'ngram N=count'");
    }
    size_t eq = fs.fields[1].find('=');
    if (eq == std::string::npos ||
        !detail::parse_int(fs.fields[1].substr(0, eq), &n) ||
        !detail::parse_int(fs.fields[1].substr(eq + 1), &cnt) || n < 1 ||
        n > 4 || cnt < 0) {
      fail(lineno, "bad ngram count line");
    }
    if (static_cast<size_t>(n) != declared.size() + 1) {
      fail(lineno, "ngram orders must be declared consecutively");
    }
    declared.push_back(cnt);
  }
  if (declared.empty()) fail(lineno, "no ngram counts declared");

  NgramModel model(static_cast<int>(declared.size()), vocab);
  for (int n = 1; n <= model.order(); ++n) {
    while (next_line() && line.empty()) {
    }
    if (line != "\\" + std::to_string(n) + "-grams:") {
      fail(lineno, "expected \\" + std::to_string(n) + "-grams: section");
    }
    int64_t read_count = 0;
    while (next_line() && !line.empty()) {
      detail::FieldSplit fs = detail::split_fields(line);
      if (fs.fields.size() != static_cast<size_t>(n) + 1 &&
          fs.fields.size() != static_cast<size_t>(n) + 2) {
        fail(lineno, "expected logp, " + std::to_string(n) +
                         " tokens, optional bow");
      }
      NgramEntry entry;
      if (!detail::parse_double(fs.fields[0], &entry.logp10)) {
        fail(lineno, "bad log probability '" + fs.fields[0] + "'");
      }
      NgramKey key;
      for (int i = 0; i < n; ++i) {
        WordId w = vocab.find(fs.fields[1 + i]);
        if (w < 0) fail(lineno, "token '" + fs.fields[1 + i] +
                                    "' not in symbol table");
        key.push_back(w);
      }
      if (fs.fields.size() == static_cast<size_t>(n) + 2) {
        if (!detail::parse_double(fs.fields[n + 1], &entry.bow10)) {
          fail(lineno, "bad backoff weight");
        }
        entry.has_bow = true;
      }
      if (!model.mutable_table(n).emplace(key, entry).second) {
        fail(lineno, "duplicate ngram");
      }
      read_count++;
    }
    if (read_count != declared[n - 1]) {
      fail(lineno, "section " + std::to_string(n) + " has " +
                       std::to_string(read_count) + " entries, header says " +
                       std::to_string(declared[n - 1]));
    }
  }
  while (next_line() && line.empty()) {
  }
  if (line != "\\end\\") fail(lineno, "expected \\end\\");
  return model;
}

}  // namespace latrescore

#endif  // LATRESCORE_NGRAM_HPP_
