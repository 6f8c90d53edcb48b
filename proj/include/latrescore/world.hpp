// latrescore/world.hpp

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
// Synthetic toy world: a CV-syllable vocabulary over phone-like acoustic
// classes, bigram-flavored text sources, a ground-truth confusion matrix,
// and labeled alignments with noisy posteriors standing in for a small
// transcribed audio set. Everything derives from one seed.

#ifndef LATRESCORE_WORLD_HPP_
#define LATRESCORE_WORLD_HPP_

#include <cstring>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "latrescore/error.hpp"
#include "latrescore/latgen.hpp"
#include "latrescore/lattice.hpp"
#include "latrescore/ngram.hpp"
#include "latrescore/rng.hpp"

namespace latrescore {

struct WorldConfig {
  int num_classes = 24;  // >= 8; 5 vowel classes, the rest consonants
  int vocab_words = 50;
  int train_sentences = 2000;
  int eval_sentences = 200;
  int min_sentence_len = 3;
  int max_sentence_len = 9;
  double leak = 0.3;            // off-diagonal confusion mass
  double duration_mean = 2.5;   // geometric law, truncated at 8 frames
  int alignment_utterances = 150;
  double posterior_concentration = 50.0;
  double second_pron_fraction = 0.2;
  uint64_t seed = 1;
};

struct World {
  WorldConfig config;
  SymbolTable symbols;
  Lexicon lexicon;
  std::map<std::string, std::vector<WordId>> train_texts;
  std::map<std::string, std::vector<WordId>> eval_texts;
  FakeAcousticModel true_confusion;
  std::map<std::string, std::vector<int>> alignments;
  std::map<std::string, std::vector<std::vector<double>>> posteriors;
  FakeAcousticModel fam;     // estimated from alignments + posteriors
  DurationModel durations;   // estimated from alignments
};

namespace world_detail {

constexpr const char *kConsonants = "bdfghjklmnprstvwz";
constexpr const char *kVowels = "aeiou";

// Class ids: consonants first, vowels last.
struct LetterMap {
  std::string consonants;
  std::string vowels;
  std::map<char, int> classes;
};

inline LetterMap letter_map(int num_classes) {
  if (num_classes < 8) throw ConfigError("world needs at least 8 classes");
  LetterMap m;
  m.vowels = kVowels;
  int consonant_count = std::min<int>(static_cast<int>(strlen(kConsonants)),
                                      num_classes - 5);
  m.consonants = std::string(kConsonants).substr(0, consonant_count);
  int next = 0;
  for (char c : m.consonants) m.classes[c] = next++;
  for (char v : m.vowels) m.classes[v] = next++;
  return m;
}

inline std::vector<int> spell(const std::string &word, const LetterMap &m) {
  std::vector<int> classes;
  for (char c : word) classes.push_back(m.classes.at(c));
  return classes;
}

// Ring confusion within letter categories: consonants mix with adjacent
// consonant classes, vowels with vowels, plus a flat epsilon.
inline FakeAcousticModel confusion_matrix(int num_classes,
                                          const LetterMap &m, double leak) {
  int consonants = static_cast<int>(m.consonants.size());
  FakeAcousticModel fam;
  fam.num_classes = num_classes;
  fam.rows.assign(static_cast<size_t>(num_classes) * num_classes, 1e-4);
  auto bump = [&](int i, int j, double v) {
    fam.rows[i * num_classes + j] += v;
  };
  for (int i = 0; i < num_classes; ++i) {
    bump(i, i, 1.0 - leak);
    int lo, n;
    if (i < consonants) {
      lo = 0;
      n = consonants;
    } else if (i < consonants + 5) {
      lo = consonants;
      n = 5;
    } else {
      lo = i;  // unused filler class: keep its mass on itself
      n = 1;
    }
    if (n == 1) {
      bump(i, i, leak);
    } else {
      bump(i, lo + ((i - lo) + 1) % n, leak / 2);
      bump(i, lo + ((i - lo) + n - 1) % n, leak / 2);
    }
  }
  for (int i = 0; i < num_classes; ++i) {
    double sum = 0.0;
    for (int j = 0; j < num_classes; ++j) sum += fam.at(i, j);
    for (int j = 0; j < num_classes; ++j) {
      fam.rows[i * num_classes + j] /= sum;
    }
  }
  validate_fam(fam);
  return fam;
}

inline int true_duration(double mean, Rng &rng) {
  double p = 1.0 / std::max(1.0, mean);
  int len = 1;
  while (len < 8 && rng.uniform() >= p) ++len;
  return len;
}

}  // namespace world_detail

inline World make_world(const WorldConfig &config) {
  World world;
  world.config = config;
  world_detail::LetterMap letters = world_detail::letter_map(config.num_classes);
  world.lexicon.num_classes = config.num_classes;

  // Vocabulary: unique CV-syllable words with unique pronunciations. Words
  // end in vowels and start with consonants, so adjacent arcs in any
  // sentence never carry the same class. Each base word spawns sibling
  // words one ring-confusion away, mirroring how real vocabularies contain
  // acoustically close pairs; those siblings are what populate lattice
  // alternatives later.
  Rng vocab_rng(derive_seed(config.seed, "world/vocab"));
  std::set<std::string> word_strings;
  std::set<std::vector<int>> pron_set;
  std::vector<WordId> vocab;
  auto try_add = [&](const std::string &word) -> bool {
    if (word_strings.count(word)) return false;
    std::vector<int> pron = world_detail::spell(word, letters);
    if (!pron_set.insert(pron).second) return false;
    word_strings.insert(word);
    WordId id = world.symbols.add(word);
    world.lexicon.prons[id] = {pron};
    vocab.push_back(id);
    return true;
  };
  auto ring_mutate = [&](const std::string &word) {
    std::string out = word;
    size_t pos = vocab_rng.uniform_int(out.size());
    const std::string &group =
        letters.vowels.find(out[pos]) != std::string::npos
            ? letters.vowels
            : letters.consonants;
    size_t at = group.find(out[pos]);
    size_t step = vocab_rng.uniform() < 0.5 ? 1 : group.size() - 1;
    out[pos] = group[(at + step) % group.size()];
    return out;
  };
  while (static_cast<int>(vocab.size()) < config.vocab_words) {
    int syllables = 1 + static_cast<int>(vocab_rng.uniform_int(3));
    std::string word;
    for (int s = 0; s < syllables; ++s) {
      word += letters.consonants[vocab_rng.uniform_int(
          letters.consonants.size())];
      word += letters.vowels[vocab_rng.uniform_int(letters.vowels.size())];
    }
    if (!try_add(word)) continue;
    int siblings = 1 + static_cast<int>(vocab_rng.uniform_int(2));
    for (int s = 0;
         s < siblings && static_cast<int>(vocab.size()) < config.vocab_words;
         ++s) {
      try_add(ring_mutate(word));
    }
  }
  // Some words get a vowel-variant second pronunciation.
  for (WordId id : vocab) {
    if (vocab_rng.uniform() >= config.second_pron_fraction) continue;
    std::vector<int> alt = world.lexicon.prons[id][0];
    size_t last_vowel = alt.size() - 1;
    int consonants = static_cast<int>(letters.consonants.size());
    int vowel = alt[last_vowel] - consonants;
    int replacement = consonants +
                      static_cast<int>((vowel + 1 +
                                        vocab_rng.uniform_int(4)) % 5);
    alt[last_vowel] = replacement;
    if (pron_set.insert(alt).second) {
      world.lexicon.prons[id].push_back(alt);
    }
  }

  // Bigram-flavored text source: each word prefers a successor pool but
  // the mixture stays broad, so the n-gram cannot sharpen into a lookup
  // table and competing words keep comparable language scores.
  Rng chain_rng(derive_seed(config.seed, "world/chain"));
  std::map<WordId, std::vector<WordId>> successors;
  for (WordId w : vocab) {
    std::vector<WordId> pool;
    for (int i = 0; i < 12; ++i) {
      pool.push_back(vocab[chain_rng.uniform_int(vocab.size())]);
    }
    successors[w] = pool;
  }
  auto sample_sentence = [&](Rng &rng) {
    int len = config.min_sentence_len +
              static_cast<int>(rng.uniform_int(
                  config.max_sentence_len - config.min_sentence_len + 1));
    std::vector<WordId> sentence;
    WordId cur = vocab[rng.uniform_int(vocab.size())];
    sentence.push_back(cur);
    for (int i = 1; i < len; ++i) {
      if (rng.uniform() < 0.7) {
        const auto &pool = successors[cur];
        cur = pool[rng.uniform_int(pool.size())];
      } else {
        cur = vocab[rng.uniform_int(vocab.size())];
      }
      sentence.push_back(cur);
    }
    return sentence;
  };
  {
    Rng rng(derive_seed(config.seed, "world/train_texts"));
    for (int i = 0; i < config.train_sentences; ++i) {
      char buf[32];
      snprintf(buf, sizeof(buf), "train_%06d", i);
      world.train_texts[buf] = sample_sentence(rng);
    }
  }
  {
    Rng rng(derive_seed(config.seed, "world/eval_texts"));
    for (int i = 0; i < config.eval_sentences; ++i) {
      char buf[32];
      snprintf(buf, sizeof(buf), "eval_%06d", i);
      world.eval_texts[buf] = sample_sentence(rng);
    }
  }

  world.true_confusion = world_detail::confusion_matrix(
      config.num_classes, letters, config.leak);

  // Labeled data: alignments through the lexicon under the true duration
  // law, posteriors drawn around the true confusion rows.
  Rng label_rng(derive_seed(config.seed, "world/labels"));
  auto sentences_it = world.train_texts.begin();
  for (int u = 0; u < config.alignment_utterances; ++u) {
    char buf[32];
    snprintf(buf, sizeof(buf), "labeled_%06d", u);
    std::vector<WordId> sentence;
    if (sentences_it != world.train_texts.end()) {
      sentence = sentences_it->second;
      ++sentences_it;
    } else {
      sentence = sample_sentence(label_rng);
    }
    std::vector<int> frames;
    for (WordId w : sentence) {
      const auto &prons = world.lexicon.prons[w];
      const auto &pron = prons[label_rng.uniform_int(prons.size())];
      for (int cls : pron) {
        int n = world_detail::true_duration(config.duration_mean, label_rng);
        for (int i = 0; i < n; ++i) frames.push_back(cls);
      }
    }
    std::vector<std::vector<double>> post;
    post.reserve(frames.size());
    for (int cls : frames) {
      post.push_back(label_rng.dirichlet(world.true_confusion.row(cls),
                                         config.posterior_concentration));
    }
    world.alignments[buf] = std::move(frames);
    world.posteriors[buf] = std::move(post);
  }

  world.durations = estimate_duration_model(world.alignments);
  world.fam = estimate_fam(world.alignments, world.posteriors,
                           config.num_classes);
  return world;
}

}  // namespace latrescore

#endif  // LATRESCORE_WORLD_HPP_
