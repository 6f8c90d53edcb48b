// latrescore/pipeline.hpp

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
// File-level experiment steps shared by the command-line tool and the
// acceptance suite: make-world, lattice generation, model training and
// rescoring, each writing its outputs plus a manifest.

#ifndef LATRESCORE_PIPELINE_HPP_
#define LATRESCORE_PIPELINE_HPP_

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "latrescore/config.hpp"
#include "latrescore/latgen.hpp"
#include "latrescore/lattice_io.hpp"
#include "latrescore/ltlm.hpp"
#include "latrescore/ngram.hpp"
#include "latrescore/rescore.hpp"
#include "latrescore/world.hpp"

namespace latrescore {

namespace pipeline_detail {

inline std::string slurp(const std::string &path) { return read_file(path); }

template <typename F>
void with_output(const std::string &path, F &&fn) {
  std::ostringstream out;
  fn(out);
  write_file(path, out.str());
}

}  // namespace pipeline_detail

// World directory layout: words.syms, lexicon.txt, train.ref, eval.ref,
// alignments.ali, fam.txt, durations.txt, confusion.txt, manifest.json.
inline World pipeline_make_world(const ExperimentConfig &config,
                                 const std::string &out_dir) {
  std::filesystem::create_directories(out_dir);
  World world = make_world(config.world);
  namespace pd = pipeline_detail;
  pd::with_output(out_dir + "/words.syms",
                  [&](std::ostream &o) { write_symbol_table(world.symbols, o); });
  pd::with_output(out_dir + "/lexicon.txt", [&](std::ostream &o) {
    write_lexicon(world.lexicon, o, world.symbols);
  });
  pd::with_output(out_dir + "/train.ref", [&](std::ostream &o) {
    write_refs(world.train_texts, o, world.symbols);
  });
  pd::with_output(out_dir + "/eval.ref", [&](std::ostream &o) {
    write_refs(world.eval_texts, o, world.symbols);
  });
  pd::with_output(out_dir + "/alignments.ali", [&](std::ostream &o) {
    write_alignments(world.alignments, o);
  });
  pd::with_output(out_dir + "/fam.txt",
                  [&](std::ostream &o) { write_fam(world.fam, o); });
  pd::with_output(out_dir + "/confusion.txt", [&](std::ostream &o) {
    write_fam(world.true_confusion, o);
  });
  pd::with_output(out_dir + "/durations.txt", [&](std::ostream &o) {
    write_duration_model(world.durations, o);
  });
  write_manifest(out_dir, "make-world", config);
  return world;
}

struct WorldFiles {
  SymbolTable symbols;
  Lexicon lexicon;
  FakeAcousticModel fam;
  DurationModel durations;
};

inline WorldFiles load_world_dir(const std::string &dir, int num_classes) {
  WorldFiles files;
  {
    std::istringstream in(pipeline_detail::slurp(dir + "/words.syms"));
    files.symbols = read_symbol_table(in);
  }
  {
    std::istringstream in(pipeline_detail::slurp(dir + "/lexicon.txt"));
    files.lexicon = read_lexicon(in, files.symbols, num_classes);
  }
  {
    std::istringstream in(pipeline_detail::slurp(dir + "/fam.txt"));
    files.fam = read_fam(in);
  }
  {
    std::istringstream in(pipeline_detail::slurp(dir + "/durations.txt"));
    files.durations = read_duration_model(in);
  }
  return files;
}

inline std::map<std::string, std::vector<WordId>> load_refs_file(
    const std::string &path, const SymbolTable &symbols) {
  std::istringstream in(pipeline_detail::slurp(path));
  return read_refs(in, symbols);
}

struct LatgenOutput {
  GenerationResult result;
  NgramModel lm;
};

// Generates one lattice per text line. The first-pass n-gram trains on
// `lm_text_path` (falling back to the input texts themselves) unless an
// ARPA file is given.
inline LatgenOutput pipeline_latgen(const ExperimentConfig &config,
                                    const std::string &world_dir,
                                    const std::string &texts_path,
                                    const std::string &out_dir,
                                    const std::string &out_name,
                                    const std::string &lm_text_path = "",
                                    const std::string &lm_arpa_path = "") {
  std::filesystem::create_directories(out_dir);
  WorldFiles files = load_world_dir(world_dir, config.world.num_classes);
  auto texts = load_refs_file(texts_path, files.symbols);

  LatgenOutput out;
  if (!lm_arpa_path.empty()) {
    std::istringstream in(pipeline_detail::slurp(lm_arpa_path));
    out.lm = read_arpa(in, files.symbols);
  } else {
    std::string source = lm_text_path.empty() ? texts_path : lm_text_path;
    auto lm_texts = load_refs_file(source, files.symbols);
    std::vector<std::vector<WordId>> corpus;
    for (const auto &[utt, words] : lm_texts) corpus.push_back(words);
    out.lm = train_ngram(corpus, config.ngram_order, files.symbols);
    pipeline_detail::with_output(out_dir + "/" + out_name + ".arpa.txt",
                                 [&](std::ostream &o) { write_arpa(out.lm, o); });
  }

  out.result = generate_corpus(texts, files.lexicon, out.lm, files.durations,
                               files.fam, config.generation, &files.symbols);
  pipeline_detail::with_output(
      out_dir + "/" + out_name + ".lat.txt", [&](std::ostream &o) {
        write_lattice_text(out.result.archive, o, files.symbols);
      });
  nlohmann::json extra;
  extra["lattices"] = out.result.archive.lattices.size();
  extra["failures"] = out.result.failures.size();
  extra["avg_arcs"] = out.result.avg_arcs;
  extra["avg_states"] = out.result.avg_states;
  extra["arcs_per_word"] = out.result.avg_paths_hint;
  extra["oracle_wer"] = out.result.oracle_stats.wer_percent();
  extra["first_pass_wer"] = out.result.first_pass_stats.wer_percent();
  write_manifest(out_dir, "latgen " + out_name, config, extra);
  return out;
}

// Loads archives + reference files into a labeled training set.
inline LtLmDataset load_ltlm_dataset(const std::vector<std::string> &lat_paths,
                                     const std::vector<std::string> &ref_paths,
                                     const SymbolTable &symbols,
                                     uint64_t seed) {
  std::vector<Lattice> lattices;
  std::map<std::string, std::vector<WordId>> refs;
  for (const std::string &path : lat_paths) {
    std::istringstream in(pipeline_detail::slurp(path));
    LatticeArchive archive = parse_lattice_text(in, symbols);
    for (Lattice &lat : archive.lattices) lattices.push_back(std::move(lat));
  }
  for (const std::string &path : ref_paths) {
    for (auto &[utt, words] : load_refs_file(path, symbols)) {
      refs[utt] = words;
    }
  }
  return build_ltlm_dataset(lattices, refs, seed);
}

struct TrainedLtLm {
  LtLm model;
  std::vector<EpochStats> history;
};

// Trains the lattice model on a mix of archives, checkpointing per epoch
// into <out_dir>/ltlm_epochN.ckpt plus a final <out_dir>/ltlm.ckpt.
inline TrainedLtLm pipeline_train_ltlm(
    const ExperimentConfig &config, const std::string &world_dir,
    const std::vector<std::string> &lat_paths,
    const std::vector<std::string> &ref_paths, const std::string &out_dir,
    const std::vector<std::string> &eval_lat_paths = {},
    const std::vector<std::string> &eval_ref_paths = {},
    std::ostream *log = nullptr) {
  std::filesystem::create_directories(out_dir);
  WorldFiles files = load_world_dir(world_dir, config.world.num_classes);

  LtLmConfig model_config = config.ltlm;
  model_config.vocab_size = files.symbols.size();
  LtLmDataset train_set = load_ltlm_dataset(lat_paths, ref_paths,
                                            files.symbols, model_config.seed);
  LtLmDataset eval_set;
  if (!eval_lat_paths.empty()) {
    eval_set = load_ltlm_dataset(eval_lat_paths, eval_ref_paths, files.symbols,
                                 model_config.seed);
  }

  TrainedLtLm trained;
  trained.model = init_ltlm(model_config);
  AdamState adam = make_adam(config.ltlm_schedule);
  TrainResult result = train_ltlm_loop(
      trained.model, adam, train_set,
      eval_set.lattices.empty() ? nullptr : &eval_set, config.ltlm_schedule,
      [&](const EpochStats &stats) {
        if (log) {
          *log << "epoch " << stats.epoch << " loss "
               << detail::format_double(stats.train_loss);
          if (!eval_set.lattices.empty()) {
            *log << " eval_loss " << detail::format_double(stats.eval_loss)
                 << " eval_acc " << detail::format_double(stats.eval_accuracy)
                 << " eval_auc " << detail::format_double(stats.eval_auc);
          }
          *log << "\n";
        }
        TrainPosition pos{stats.epoch + 1, 0, 0};
        save_ltlm(trained.model, adam, pos,
                  out_dir + "/ltlm_epoch" + std::to_string(stats.epoch) +
                      ".ckpt",
                  config.to_json());
      });
  trained.history = result.history;
  save_ltlm(trained.model, adam, result.position, out_dir + "/ltlm.ckpt",
            config.to_json());
  nlohmann::json extra;
  extra["train_lattices"] = train_set.lattices.size();
  extra["final_train_loss"] =
      result.history.empty() ? 0.0 : result.history.back().train_loss;
  write_manifest(out_dir, "train-ltlm", config, extra);
  return trained;
}

inline TrainedLtLm pipeline_train_arlm(const ExperimentConfig &config,
                                       const std::string &world_dir,
                                       const std::string &texts_path,
                                       const std::string &out_dir,
                                       std::ostream *log = nullptr) {
  std::filesystem::create_directories(out_dir);
  WorldFiles files = load_world_dir(world_dir, config.world.num_classes);
  LtLmConfig model_config = config.arlm;
  model_config.vocab_size = files.symbols.size();
  std::vector<std::vector<WordId>> corpus;
  for (auto &[utt, words] : load_refs_file(texts_path, files.symbols)) {
    corpus.push_back(words);
  }
  TrainedLtLm trained;
  trained.model = init_ltlm(model_config, /*causal=*/true);
  AdamState adam = make_adam(config.arlm_schedule);
  TrainResult result = train_arlm_loop(
      trained.model, adam, corpus, nullptr, config.arlm_schedule,
      [&](const EpochStats &stats) {
        if (log) {
          *log << "epoch " << stats.epoch << " loss "
               << detail::format_double(stats.train_loss) << "\n";
        }
      });
  trained.history = result.history;
  save_ltlm(trained.model, adam, result.position, out_dir + "/arlm.ckpt",
            config.to_json());
  nlohmann::json extra;
  extra["train_sentences"] = corpus.size();
  write_manifest(out_dir, "train-arlm", config, extra);
  return trained;
}

struct RescoreInputs {
  LatticeArchive archive;
  std::map<std::string, std::vector<WordId>> refs;
  SymbolTable symbols;
};

inline RescoreInputs load_rescore_inputs(const ExperimentConfig &config,
                                         const std::string &world_dir,
                                         const std::string &lat_path,
                                         const std::string &refs_path) {
  RescoreInputs inputs;
  WorldFiles files = load_world_dir(world_dir, config.world.num_classes);
  inputs.symbols = files.symbols;
  std::istringstream in(pipeline_detail::slurp(lat_path));
  inputs.archive = parse_lattice_text(in, inputs.symbols);
  if (!refs_path.empty()) {
    inputs.refs = load_refs_file(refs_path, inputs.symbols);
  }
  return inputs;
}

inline RescoreReport pipeline_rescore_single_shot(
    const ExperimentConfig &config, const std::string &world_dir,
    const std::string &lat_path, const std::string &ckpt_path,
    const std::string &refs_path, const std::string &out_dir) {
  std::filesystem::create_directories(out_dir);
  RescoreInputs inputs =
      load_rescore_inputs(config, world_dir, lat_path, refs_path);
  LoadedLtLm loaded = load_ltlm(ckpt_path);
  if (loaded.model.causal) {
    throw ConfigError("single-shot rescoring needs a lattice model");
  }
  SingleShotOptions options;
  options.weights = config.weights;
  options.batch_size = config.rescore_batch;
  RescoreReport report = single_shot_rescore(
      inputs.archive, loaded.model, inputs.symbols, options,
      refs_path.empty() ? nullptr : &inputs.refs);
  pipeline_detail::with_output(out_dir + "/single_shot.report",
                               [&](std::ostream &o) { write_report(report, o); });
  write_manifest(out_dir, "rescore single-shot", config);
  return report;
}

inline RescoreReport pipeline_rescore_nbest(
    const ExperimentConfig &config, const std::string &world_dir,
    const std::string &lat_path, const std::string &ckpt_path,
    const std::string &refs_path, const std::string &out_dir) {
  std::filesystem::create_directories(out_dir);
  RescoreInputs inputs =
      load_rescore_inputs(config, world_dir, lat_path, refs_path);
  LoadedLtLm loaded = load_ltlm(ckpt_path);
  if (!loaded.model.causal) {
    throw ConfigError("nbest rescoring needs a causal model");
  }
  NbestOptions options;
  options.weights = config.weights;
  options.n = config.nbest_n;
  RescoreReport report =
      nbest_rescore(inputs.archive, loaded.model, inputs.symbols, options,
                    refs_path.empty() ? nullptr : &inputs.refs);
  pipeline_detail::with_output(
      out_dir + "/nbest_" + std::to_string(options.n) + ".report",
      [&](std::ostream &o) { write_report(report, o); });
  write_manifest(out_dir, "rescore nbest", config);
  return report;
}

inline RescoreReport pipeline_first_pass(const ExperimentConfig &config,
                                         const std::string &world_dir,
                                         const std::string &lat_path,
                                         const std::string &refs_path,
                                         const std::string &out_dir) {
  std::filesystem::create_directories(out_dir);
  RescoreInputs inputs =
      load_rescore_inputs(config, world_dir, lat_path, refs_path);
  RescoreReport report =
      first_pass_report(inputs.archive, inputs.symbols, config.weights,
                        refs_path.empty() ? nullptr : &inputs.refs);
  pipeline_detail::with_output(out_dir + "/first_pass.report",
                               [&](std::ostream &o) { write_report(report, o); });
  write_manifest(out_dir, "rescore first-pass", config);
  return report;
}

}  // namespace latrescore

#endif  // LATRESCORE_PIPELINE_HPP_
