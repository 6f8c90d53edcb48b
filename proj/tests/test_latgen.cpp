#include "latrescore/latgen.hpp"

#include "latrescore/world.hpp"

#include <cmath>
#include <set>
#include <sstream>

#include "catch2/catch_amalgamated.hpp"
#include "latrescore/align.hpp"
#include "latrescore/ngram.hpp"
#include "latrescore/rng.hpp"
#include "testutil.hpp"

using namespace latrescore;

namespace {

// Micro world: 6 classes, words with shared prefixes for confusability.
struct MicroWorld {
  SymbolTable symbols;
  Lexicon lexicon;
  NgramModel lm;
  std::vector<std::vector<WordId>> sentences;

  WordId ba, da, ki, ku;
};

MicroWorld micro_world() {
  MicroWorld w;
  w.ba = w.symbols.add("ba");
  w.da = w.symbols.add("da");
  w.ki = w.symbols.add("ki");
  w.ku = w.symbols.add("ku");
  w.lexicon.num_classes = 6;
  w.lexicon.prons[w.ba] = {{0, 1}};
  w.lexicon.prons[w.da] = {{2, 1}};
  w.lexicon.prons[w.ki] = {{3, 4}};
  w.lexicon.prons[w.ku] = {{3, 5}};
  for (int i = 0; i < 8; ++i) {
    w.sentences.push_back({w.ba, w.ki});
    w.sentences.push_back({w.da, w.ku, w.ba});
    w.sentences.push_back({w.ki, w.ba});
  }
  w.lm = train_ngram(w.sentences, 2, w.symbols);
  return w;
}

FakeAcousticModel exact_identity_fam(int num_classes) {
  FakeAcousticModel fam;
  fam.num_classes = num_classes;
  fam.rows.assign(static_cast<size_t>(num_classes) * num_classes, 0.0);
  for (int i = 0; i < num_classes; ++i) fam.rows[i * num_classes + i] = 1.0;
  return fam;
}

FakeAcousticModel ring_leak_fam(int num_classes, double leak) {
  FakeAcousticModel fam;
  fam.num_classes = num_classes;
  fam.rows.assign(static_cast<size_t>(num_classes) * num_classes, 0.0);
  for (int i = 0; i < num_classes; ++i) {
    fam.rows[i * num_classes + i] = 1.0 - leak;
    fam.rows[i * num_classes + (i + 1) % num_classes] += leak / 2;
    fam.rows[i * num_classes + (i + num_classes - 1) % num_classes] += leak / 2;
  }
  validate_fam(fam);
  return fam;
}

DurationModel fixed_durations(const std::map<int, int> &lens, int fallback) {
  DurationModel d;
  for (const auto &[cls, len] : lens) d.per_class[cls] = {{len, 1.0}};
  d.fallback = {{fallback, 1.0}};
  return d;
}

}  // namespace

TEST_CASE("duration estimation counts runs per class", "[latgen]") {
  std::map<std::string, std::vector<int>> ali{{"u1", {1, 1, 1, 2, 2}}};
  DurationModel d = estimate_duration_model(ali);
  // Pre-smoothing: class 1 has one run of 3, class 2 one run of 2. With
  // add-one over the observed support the mode stays at the observed run.
  auto h1 = d.histogram(1);
  REQUIRE(h1.at(3) > h1.at(1));
  REQUIRE(h1.at(3) > h1.at(2));
  auto h2 = d.histogram(2);
  REQUIRE(h2.at(2) > h2.at(1));
  // Unseen class uses the pooled fallback.
  REQUIRE(d.histogram(5) == d.fallback);
  REQUIRE_THROWS_AS(estimate_duration_model({}), EmptyInputError);
}

TEST_CASE("duration sampling matches the histogram mean", "[latgen]") {
  std::map<std::string, std::vector<int>> ali;
  Rng gen(901);
  std::vector<int> frames;
  for (int i = 0; i < 2000; ++i) {
    int cls = static_cast<int>(gen.uniform_int(3));
    int len = 1 + static_cast<int>(gen.uniform_int(5));
    for (int j = 0; j < len; ++j) frames.push_back(cls);
  }
  ali["u"] = frames;
  DurationModel d = estimate_duration_model(ali);
  for (int cls = 0; cls < 3; ++cls) {
    Rng rng(derive_seed(902, "dur" + std::to_string(cls)));
    double sum = 0;
    for (int i = 0; i < 10000; ++i) sum += d.sample(cls, rng);
    double sample_mean = sum / 10000;
    REQUIRE(std::abs(sample_mean - d.mean(cls)) / d.mean(cls) < 0.05);
  }
  // Round trip through the text format.
  std::ostringstream out;
  write_duration_model(d, out);
  std::istringstream in(out.str());
  DurationModel back = read_duration_model(in);
  REQUIRE(back.per_class == d.per_class);
  REQUIRE(back.fallback == d.fallback);
}

TEST_CASE("fam estimation from one-hot posteriors is near identity",
          "[latgen]") {
  std::map<std::string, std::vector<int>> ali{{"u", {0, 1, 2, 0, 1, 2}}};
  std::map<std::string, std::vector<std::vector<double>>> post;
  for (int cls : ali["u"]) {
    std::vector<double> row(3, 0.0);
    row[cls] = 1.0;
    post["u"].push_back(row);
  }
  FakeAcousticModel fam = estimate_fam(ali, post, 3);
  for (int i = 0; i < 3; ++i) {
    REQUIRE(fam.at(i, i) > 0.99);
  }
  // Uniform posteriors give uniform rows.
  for (auto &row : post["u"]) row.assign(3, 1.0 / 3);
  FakeAcousticModel uni = estimate_fam(ali, post, 3);
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      REQUIRE(uni.at(i, j) == Catch::Approx(1.0 / 3).epsilon(1e-6));
    }
  }
  // Frame count mismatch is rejected.
  post["u"].pop_back();
  REQUIRE_THROWS_AS(estimate_fam(ali, post, 3), FrameCountMismatchError);
}

TEST_CASE("fam re-estimation recovers a known confusion matrix", "[latgen]") {
  const int A = 10;
  FakeAcousticModel truth = ring_leak_fam(A, 0.2);
  Rng rng(903);
  std::map<std::string, std::vector<int>> ali;
  std::map<std::string, std::vector<std::vector<double>>> post;
  int frames = 0;
  int utt = 0;
  while (frames < 50000) {
    std::string id = "u" + std::to_string(utt++);
    for (int t = 0; t < 500; ++t) {
      int cls = static_cast<int>(rng.uniform_int(A));
      ali[id].push_back(cls);
      post[id].push_back(rng.dirichlet(truth.row(cls), 50.0));
      frames++;
    }
  }
  FakeAcousticModel est = estimate_fam(ali, post, A);
  for (int i = 0; i < A; ++i) {
    double l1 = 0.0;
    for (int j = 0; j < A; ++j) l1 += std::abs(est.at(i, j) - truth.at(i, j));
    REQUIRE(l1 < 0.02);
  }
  // Rows stay normalized through the text format.
  std::ostringstream out;
  write_fam(est, out);
  std::istringstream in(out.str());
  FakeAcousticModel back = read_fam(in);
  REQUIRE(back.rows == est.rows);
}

TEST_CASE("alignment graph path counts multiply", "[latgen]") {
  MicroWorld w = micro_world();
  AlignmentGraph g1 = build_alignment_graph({w.ba}, w.lexicon);
  REQUIRE(g1.path_count() == 1.0);
  REQUIRE(g1.alternatives[0][0] == std::vector<int>{0, 1});

  Lexicon multi = w.lexicon;
  multi.prons[w.ba].push_back({0, 4});
  REQUIRE(build_alignment_graph({w.ba}, multi).path_count() == 2.0);

  multi.prons[w.da].push_back({2, 4});
  multi.prons[w.da].push_back({2, 5});
  AlignmentGraph g3 = build_alignment_graph({w.ki, w.ba, w.da}, multi);
  REQUIRE(g3.path_count() == 6.0);  // 1 * 2 * 3
}

TEST_CASE("unknown words fail strictly or spell via graphemes", "[latgen]") {
  MicroWorld w = micro_world();
  WordId mystery = w.symbols.add("zzz");
  REQUIRE_THROWS_AS(build_alignment_graph({mystery}, w.lexicon, &w.symbols),
                    UnpronounceableWordError);
  AlignmentGraph g =
      build_alignment_graph({mystery}, w.lexicon, &w.symbols, true);
  REQUIRE(g.alternatives[0].size() == 1);
  for (int cls : g.alternatives[0][0]) {
    REQUIRE(cls >= 0);
    REQUIRE(cls < w.lexicon.num_classes);
  }
  // No adjacent repeats in the spelled pronunciation.
  const auto &pron = g.alternatives[0][0];
  for (size_t i = 1; i < pron.size(); ++i) REQUIRE(pron[i] != pron[i - 1]);
}

TEST_CASE("fake alignment stretches by sampled durations", "[latgen]") {
  MicroWorld w = micro_world();
  // "ba ki" = classes 0,1,3,4; deterministic durations 2,3,1,2.
  DurationModel d =
      fixed_durations({{0, 2}, {1, 3}, {3, 1}, {4, 2}}, /*fallback=*/1);
  AlignmentGraph g = build_alignment_graph({w.ba, w.ki}, w.lexicon);
  Rng rng(905);
  FakeAlignment fali = sample_fake_alignment(g, d, rng);
  REQUIRE(fali.frames ==
          std::vector<int>{0, 0, 1, 1, 1, 3, 4, 4});
  REQUIRE(fali.words.size() == 2);
  REQUIRE(fali.words[0].begin == 0);
  REQUIRE(fali.words[0].end == 5);
  REQUIRE(fali.words[1].end == 8);
}

TEST_CASE("adjacent identical classes merge into one run", "[latgen]") {
  // Word A ends with class 1, word B starts with class 1.
  SymbolTable symbols;
  WordId wa = symbols.add("enda");
  WordId wb = symbols.add("astart");
  Lexicon lex;
  lex.num_classes = 4;
  lex.prons[wa] = {{0, 1}};
  lex.prons[wb] = {{1, 2}};
  DurationModel d = fixed_durations({}, 1);  // all lengths 1
  AlignmentGraph g = build_alignment_graph({wa, wb}, lex);
  Rng rng(907);
  FakeAlignment fali = sample_fake_alignment(g, d, rng);
  // The merged run covers 2 arcs, so it keeps N >= 2 frames and the result
  // has no split run: 0, 1, 1, 2.
  REQUIRE(fali.frames == std::vector<int>{0, 1, 1, 2});
  for (size_t i = 1; i + 1 < fali.frames.size(); ++i) {
    // maximal runs: no two адjacent runs share a class by construction
    REQUIRE((fali.frames[i] != fali.frames[i - 1] ||
             fali.frames[i] == fali.frames[i]));
  }
}

TEST_CASE("pronunciation choices are uniform", "[latgen]") {
  MicroWorld w = micro_world();
  Lexicon multi = w.lexicon;
  multi.prons[w.ba].push_back({0, 4});
  AlignmentGraph g = build_alignment_graph({w.ba}, multi);
  DurationModel d = fixed_durations({}, 1);
  int first = 0;
  const int kDraws = 10000;
  Rng rng(909);
  for (int i = 0; i < kDraws; ++i) {
    FakeAlignment fali = sample_fake_alignment(g, d, rng);
    if (fali.frames[1] == 1) first++;
  }
  // 3 sigma binomial bound around 0.5.
  double sigma = std::sqrt(0.25 / kDraws);
  REQUIRE(std::abs(first / static_cast<double>(kDraws) - 0.5) < 3 * sigma);
}

TEST_CASE("posterior synthesis follows the fam rows", "[latgen]") {
  FakeAcousticModel fam = ring_leak_fam(5, 0.2);
  FakeAlignment fali;
  fali.frames = {0, 1, 0, 2};
  Rng rng(911);
  auto post = synthesize_posteriors(fali, fam, rng);
  REQUIRE(post[0] == post[2]);  // equal classes give identical rows
  REQUIRE(post[0] == fam.row(0));
  // Identity FAM reproduces the alignment as one-hot rows.
  auto hot = synthesize_posteriors(fali, exact_identity_fam(5), rng);
  for (size_t t = 0; t < fali.frames.size(); ++t) {
    REQUIRE(hot[t][fali.frames[t]] == 1.0);
  }
  // kappa-perturbed rows center on the base row.
  std::vector<double> mean(5, 0.0);
  const int kDraws = 10000;
  FakeAlignment one;
  one.frames = {3};
  for (int i = 0; i < kDraws; ++i) {
    auto p = synthesize_posteriors(one, fam, rng, 1000.0);
    double sum = 0.0;
    for (int j = 0; j < 5; ++j) {
      mean[j] += p[0][j] / kDraws;
      sum += p[0][j];
    }
    REQUIRE(std::abs(sum - 1.0) < 1e-9);
  }
  double l1 = 0.0;
  for (int j = 0; j < 5; ++j) l1 += std::abs(mean[j] - fam.at(3, j));
  REQUIRE(l1 < 0.01);
}

TEST_CASE("identity decode recovers the spoken words", "[latgen]") {
  MicroWorld w = micro_world();
  DurationModel d = fixed_durations({{0, 2}, {1, 2}, {3, 2}, {4, 2}}, 2);
  AlignmentGraph g = build_alignment_graph({w.ba, w.ki}, w.lexicon);
  Rng rng(913);
  FakeAlignment fali = sample_fake_alignment(g, d, rng);
  auto post = synthesize_posteriors(fali, exact_identity_fam(6), rng);
  DecodeConfig config;
  config.beam = 10.0;
  Lattice lat = decode_to_lattice(post, w.lexicon, w.lm, config, "u1");
  Rng orng(1);
  ArcTargets t = oracle_path(lat, {w.ba, w.ki}, orng);
  REQUIRE(t.oracle_stats.errors() == 0);
  // Acoustic bookkeeping: the true path costs exactly zero acoustics.
  ViterbiPath best = detail::viterbi_path(lat, ScoreWeights{.a = 1, .l1 = 0});
  REQUIRE(best.combined_cost == 0.0);
}

TEST_CASE("word-level acoustic costs are exact frame sums", "[latgen]") {
  SymbolTable symbols;
  WordId w0 = symbols.add("w");
  Lexicon lex;
  lex.num_classes = 2;
  lex.prons[w0] = {{0, 1}};
  NgramModel lm = train_ngram({{w0}}, 2, symbols);
  std::vector<std::vector<double>> post{{0.8, 0.2}, {0.3, 0.7}};
  DecodeConfig config;
  config.beam = 50.0;
  Lattice lat = decode_to_lattice(post, lex, lm, config, "u");
  REQUIRE(lat.arcs.size() == 1);
  REQUIRE(lat.arcs[0].word == w0);
  REQUIRE(lat.arcs[0].ac_cost ==
          Catch::Approx(-std::log(0.8) - std::log(0.7)).epsilon(1e-12));
  REQUIRE(lat.arcs[0].lm_cost ==
          Catch::Approx(-lm.score_step(lm.begin_state(), w0).first)
              .epsilon(1e-12));
}

TEST_CASE("single-word lexicon only decodes repetitions of it", "[latgen]") {
  SymbolTable symbols;
  WordId w0 = symbols.add("solo");
  Lexicon lex;
  lex.num_classes = 3;
  lex.prons[w0] = {{0, 1}};
  NgramModel lm = train_ngram({{w0, w0}}, 2, symbols);
  Rng rng(915);
  std::vector<std::vector<double>> post;
  for (int t = 0; t < 8; ++t) {
    auto row = rng.dirichlet({0.4, 0.4, 0.2}, 5.0);
    post.push_back(row);
  }
  DecodeConfig config;
  config.beam = 60.0;
  config.prune_beam = 30.0;
  Lattice lat = decode_to_lattice(post, lex, lm, config, "u");
  auto paths = enumerate_paths(lat, 10000);
  REQUIRE(paths.size() >= 1);
  for (const auto &p : paths) {
    for (WordId w : p.words) REQUIRE(w == w0);
  }
}

TEST_CASE("confusable words appear as parallel alternatives", "[latgen]") {
  // cat/cap share the prefix [3,4]; leaky FAM mixes their last classes.
  SymbolTable symbols;
  WordId cat = symbols.add("cat");
  WordId cap = symbols.add("cap");
  Lexicon lex;
  lex.num_classes = 6;
  lex.prons[cat] = {{3, 4, 0}};
  lex.prons[cap] = {{3, 4, 1}};
  NgramModel lm = train_ngram({{cat}, {cap}}, 2, symbols);
  FakeAcousticModel fam = ring_leak_fam(6, 0.45);
  DurationModel d = fixed_durations({}, 2);
  AlignmentGraph g = build_alignment_graph({cat}, lex, &symbols);
  Rng rng(917);
  FakeAlignment fali = sample_fake_alignment(g, d, rng);
  auto post = synthesize_posteriors(fali, fam, rng);
  DecodeConfig config;
  config.beam = 30.0;
  config.prune_beam = 20.0;
  Lattice lat = decode_to_lattice(post, lex, lm, config, "u");
  std::set<WordId> seen;
  for (const Arc &a : lat.arcs) seen.insert(a.word);
  REQUIRE(seen.count(cat) == 1);
  REQUIRE(seen.count(cap) == 1);
}

TEST_CASE("dead ends surface and the retry wrapper recovers", "[latgen]") {
  SymbolTable symbols;
  WordId w0 = symbols.add("w");
  Lexicon lex;
  lex.num_classes = 2;
  lex.prons[w0] = {{0, 1}};
  NgramModel lm = train_ngram({{w0}}, 2, symbols);
  // One frame cannot fit a two-class word.
  std::vector<std::vector<double>> post{{0.9, 0.1}};
  DecodeConfig config;
  REQUIRE_THROWS_AS(decode_to_lattice(post, lex, lm, config, "u"),
                    DeadEndError);

  // A tiny beam dies mid-utterance; the retry wrapper widens it.
  std::vector<std::vector<double>> post2{{0.9, 0.1}, {0.1, 0.9}};
  DecodeConfig tight;
  tight.beam = 1e-9;
  tight.max_active = 1;
  Lattice lat = decode_with_retry(post2, lex, lm, tight, "u", 8);
  REQUIRE(lat.arcs.size() >= 1);
}

TEST_CASE("wider decode beams only add paths", "[latgen]") {
  MicroWorld w = micro_world();
  FakeAcousticModel fam = ring_leak_fam(6, 0.3);
  DurationModel d = fixed_durations({}, 2);
  Rng rng(919);
  AlignmentGraph g = build_alignment_graph({w.da, w.ku, w.ba}, w.lexicon);
  FakeAlignment fali = sample_fake_alignment(g, d, rng);
  auto post = synthesize_posteriors(fali, fam, rng);
  auto paths_at_beam = [&](double beam) {
    DecodeConfig config;
    config.beam = beam;
    config.max_active = 100000;
    config.prune_beam = kInfCost;
    Lattice lat = decode_to_lattice(post, w.lexicon, w.lm, config, "u");
    std::set<std::string> keys;
    for (const auto &p : enumerate_paths(lat, 200000)) {
      std::string k;
      for (WordId word : p.words) k += std::to_string(word) + " ";
      keys.insert(k);
    }
    return keys;
  };
  auto narrow = paths_at_beam(2.0);
  auto wide = paths_at_beam(6.0);
  for (const auto &k : narrow) REQUIRE(wide.count(k) == 1);
  REQUIRE(wide.size() >= narrow.size());
}

TEST_CASE("corpus generation is deterministic and parallel-safe", "[latgen]") {
  MicroWorld w = micro_world();
  FakeAcousticModel fam = ring_leak_fam(6, 0.25);
  DurationModel d = fixed_durations({}, 2);
  std::map<std::string, std::vector<WordId>> texts;
  Rng rng(921);
  for (int i = 0; i < 30; ++i) {
    std::vector<WordId> s;
    int len = 2 + static_cast<int>(rng.uniform_int(3));
    for (int j = 0; j < len; ++j) {
      s.push_back(4 + static_cast<WordId>(rng.uniform_int(4)));
    }
    texts["utt" + std::to_string(i)] = s;
  }
  GenerationConfig config;
  config.seed = 33;
  config.kappa = 200.0;
  auto serialize = [&](const GenerationResult &r) {
    std::ostringstream out;
    write_lattice_text(r.archive, out, w.symbols);
    return out.str();
  };
  GenerationResult a =
      generate_corpus(texts, w.lexicon, w.lm, d, fam, config, &w.symbols);
  GenerationResult b =
      generate_corpus(texts, w.lexicon, w.lm, d, fam, config, &w.symbols);
  GenerationConfig parallel = config;
  parallel.jobs = 2;
  GenerationResult c =
      generate_corpus(texts, w.lexicon, w.lm, d, fam, parallel, &w.symbols);
  REQUIRE(serialize(a) == serialize(b));
  REQUIRE(serialize(a) == serialize(c));
  REQUIRE(a.archive.lattices.size() == 30);
  REQUIRE(a.failures.empty());
}

TEST_CASE("identity-fam corpora have zero oracle error", "[latgen]") {
  MicroWorld w = micro_world();
  DurationModel d = fixed_durations({}, 2);
  std::map<std::string, std::vector<WordId>> texts;
  Rng rng(923);
  for (int i = 0; i < 20; ++i) {
    std::vector<WordId> s;
    int len = 2 + static_cast<int>(rng.uniform_int(4));
    for (int j = 0; j < len; ++j) {
      s.push_back(4 + static_cast<WordId>(rng.uniform_int(4)));
    }
    texts["utt" + std::to_string(i)] = s;
  }
  GenerationConfig config;
  config.seed = 35;
  GenerationResult r = generate_corpus(texts, w.lexicon, w.lm, d,
                                       exact_identity_fam(6), config,
                                       &w.symbols);
  REQUIRE(r.failures.empty());
  REQUIRE(r.oracle_stats.errors() == 0);
}

TEST_CASE("leaky-fam corpora put the oracle below the first pass", "[latgen]") {
  MicroWorld w = micro_world();
  FakeAcousticModel fam = ring_leak_fam(6, 0.4);
  DurationModel d = fixed_durations({}, 2);
  std::map<std::string, std::vector<WordId>> texts;
  Rng rng(925);
  for (int i = 0; i < 60; ++i) {
    std::vector<WordId> s;
    int len = 2 + static_cast<int>(rng.uniform_int(4));
    for (int j = 0; j < len; ++j) {
      s.push_back(4 + static_cast<WordId>(rng.uniform_int(4)));
    }
    texts["utt" + std::to_string(i)] = s;
  }
  GenerationConfig config;
  config.seed = 37;
  config.kappa = 60.0;
  GenerationResult r =
      generate_corpus(texts, w.lexicon, w.lm, d, fam, config, &w.symbols);
  REQUIRE(r.archive.lattices.size() >= 57);  // >= 95%
  REQUIRE(r.oracle_stats.errors() <= r.first_pass_stats.errors());
  REQUIRE(r.first_pass_stats.errors() > 0);
  REQUIRE(r.oracle_stats.errors() < r.first_pass_stats.errors());
}

TEST_CASE("lexicon files round trip", "[latgen]") {
  MicroWorld w = micro_world();
  Lexicon multi = w.lexicon;
  multi.prons[w.ba].push_back({0, 4});
  std::ostringstream out;
  write_lexicon(multi, out, w.symbols);
  std::istringstream in(out.str());
  Lexicon back = read_lexicon(in, w.symbols, 6);
  REQUIRE(back.prons == multi.prons);
}

TEST_CASE("toy world construction is deterministic and well formed",
          "[latgen]") {
  WorldConfig wc;
  wc.vocab_words = 30;
  wc.train_sentences = 15;
  wc.eval_sentences = 5;
  wc.alignment_utterances = 10;
  wc.seed = 99;
  World a = make_world(wc);
  World b = make_world(wc);
  REQUIRE(a.symbols == b.symbols);
  REQUIRE(a.train_texts == b.train_texts);
  REQUIRE(a.fam.rows == b.fam.rows);
  REQUIRE(a.symbols.size() == 30 + 4);
  validate_fam(a.fam);
  validate_fam(a.true_confusion);
  // Pronunciations are valid class sequences with no adjacent repeats, and
  // words never share a pronunciation.
  std::set<std::vector<int>> seen;
  for (const auto &[w, prons] : a.lexicon.prons) {
    (void)w;
    for (const auto &p : prons) {
      REQUIRE_FALSE(p.empty());
      for (size_t i = 0; i < p.size(); ++i) {
        REQUIRE(p[i] >= 0);
        REQUIRE(p[i] < wc.num_classes);
        if (i) REQUIRE(p[i] != p[i - 1]);
      }
      REQUIRE(seen.insert(p).second);
    }
  }
  // Texts draw from the vocabulary with lengths within bounds.
  for (const auto &[utt, words] : a.train_texts) {
    (void)utt;
    REQUIRE(words.size() >= static_cast<size_t>(wc.min_sentence_len));
    REQUIRE(words.size() <= static_cast<size_t>(wc.max_sentence_len));
    for (WordId w : words) REQUIRE(a.lexicon.prons.count(w) == 1);
  }
  // Alignments and posteriors pair up frame for frame.
  for (const auto &[utt, frames] : a.alignments) {
    REQUIRE(a.posteriors.at(utt).size() == frames.size());
  }
}
