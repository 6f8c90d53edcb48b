// tools/latrescore_main.cpp

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
// Command-line front end. Every run is seeded through the experiment
// config (flags override file values) and writes a manifest beside its
// outputs. Exit codes: 0 success, 2 config error, 3 data error, 4 runtime
// failure.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "latrescore/config.hpp"
#include "latrescore/pipeline.hpp"
#include "latrescore/selftest.hpp"

namespace {

using namespace latrescore;

ExperimentConfig load_config(const std::string &config_path,
                             const std::vector<std::string> &sets,
                             uint64_t seed_flag, bool seed_given) {
  ExperimentConfig config;
  if (!config_path.empty()) {
    std::istringstream in(read_file(config_path));
    config.apply(parse_key_values(in));
  }
  for (const std::string &kv : sets) {
    size_t eq = kv.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("--set expects key=value, got '" + kv + "'");
    }
    config.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (seed_given) config.set("seed", std::to_string(seed_flag));
  config.sync_seeds();
  return config;
}

int cmd_make_world(const ExperimentConfig &config, const std::string &out) {
  World world = pipeline_make_world(config, out);
  std::printf("world written to %s: %d words, %d classes, %zu/%zu sentences\n",
              out.c_str(), config.world.vocab_words, config.world.num_classes,
              world.train_texts.size(), world.eval_texts.size());
  return 0;
}

int cmd_latgen(const ExperimentConfig &config, const std::string &world_dir,
               const std::string &texts, const std::string &out,
               const std::string &name, const std::string &lm_text,
               const std::string &lm_arpa) {
  LatgenOutput result = pipeline_latgen(config, world_dir, texts, out, name,
                                        lm_text, lm_arpa);
  const GenerationResult &r = result.result;
  std::printf("%zu lattices -> %s/%s.lat.txt (%zu failures)\n",
              r.archive.lattices.size(), out.c_str(), name.c_str(),
              r.failures.size());
  std::printf("avg arcs %.1f, avg states %.1f, arcs/word %.2f\n", r.avg_arcs,
              r.avg_states, r.avg_paths_hint);
  std::printf("oracle WER %.2f%%, first-pass WER %.2f%%\n",
              r.oracle_stats.wer_percent(), r.first_pass_stats.wer_percent());
  for (const std::string &f : r.failures) {
    std::fprintf(stderr, "skipped %s\n", f.c_str());
  }
  return 0;
}

int cmd_train_ltlm(const ExperimentConfig &config, const std::string &world_dir,
                   const std::vector<std::string> &lattices,
                   const std::vector<std::string> &refs,
                   const std::vector<std::string> &eval_lattices,
                   const std::vector<std::string> &eval_refs,
                   const std::string &out) {
  TrainedLtLm trained = pipeline_train_ltlm(config, world_dir, lattices, refs,
                                            out, eval_lattices, eval_refs,
                                            &std::cout);
  std::printf("checkpoint written to %s/ltlm.ckpt (final loss %.4f)\n",
              out.c_str(),
              trained.history.empty() ? 0.0
                                      : trained.history.back().train_loss);
  return 0;
}

int cmd_train_arlm(const ExperimentConfig &config, const std::string &world_dir,
                   const std::string &texts, const std::string &out) {
  TrainedLtLm trained =
      pipeline_train_arlm(config, world_dir, texts, out, &std::cout);
  std::printf("checkpoint written to %s/arlm.ckpt (final loss %.4f)\n",
              out.c_str(),
              trained.history.empty() ? 0.0
                                      : trained.history.back().train_loss);
  return 0;
}

void print_report_summary(const RescoreReport &report) {
  std::printf("method %s: %zu utterances, %llu model calls, av seq len %.1f\n",
              report.method.c_str(), report.utterances.size(),
              static_cast<unsigned long long>(report.model_calls),
              report.avg_seq_len());
  if (report.has_wer) {
    std::printf("WER %.2f%% (S=%lld I=%lld D=%lld / %lld)\n",
                report.wer_percent(),
                static_cast<long long>(report.corpus_stats.substitutions),
                static_cast<long long>(report.corpus_stats.insertions),
                static_cast<long long>(report.corpus_stats.deletions),
                static_cast<long long>(report.corpus_stats.ref_len));
  }
  for (const std::string &s : report.skipped) {
    std::fprintf(stderr, "skipped %s\n", s.c_str());
  }
}

int cmd_rescore(const ExperimentConfig &config, const std::string &mode,
                const std::string &world_dir, const std::string &lattices,
                const std::string &ckpt, const std::string &refs,
                const std::string &out) {
  RescoreReport report;
  if (mode == "single-shot") {
    if (ckpt.empty()) throw ConfigError("single-shot needs --ckpt");
    report = pipeline_rescore_single_shot(config, world_dir, lattices, ckpt,
                                          refs, out);
  } else if (mode == "nbest") {
    if (ckpt.empty()) throw ConfigError("nbest needs --ckpt");
    report =
        pipeline_rescore_nbest(config, world_dir, lattices, ckpt, refs, out);
  } else if (mode == "first-pass") {
    report = pipeline_first_pass(config, world_dir, lattices, refs, out);
  } else {
    throw ConfigError("unknown rescore mode '" + mode +
                      "' (single-shot, nbest, first-pass)");
  }
  print_report_summary(report);
  return 0;
}

int cmd_wer(const std::string &hyp_path, const std::string &ref_path) {
  std::istringstream hin(read_file(hyp_path));
  std::istringstream rin(read_file(ref_path));
  auto hyps = read_token_lines(hin);
  auto refs = read_token_lines(rin);
  EditStats stats = corpus_edit_stats(hyps, refs);
  std::printf("WER %.2f%% (S=%lld I=%lld D=%lld / %lld)\n",
              stats.wer_percent(), static_cast<long long>(stats.substitutions),
              static_cast<long long>(stats.insertions),
              static_cast<long long>(stats.deletions),
              static_cast<long long>(stats.ref_len));
  return 0;
}

int cmd_oracle_wer(const ExperimentConfig &config, const std::string &world_dir,
                   const std::string &lat_path, const std::string &refs_path) {
  RescoreInputs inputs =
      load_rescore_inputs(config, world_dir, lat_path, refs_path);
  EditStats total;
  for (const Lattice &lat : inputs.archive.lattices) {
    auto rit = inputs.refs.find(lat.utterance_id);
    if (rit == inputs.refs.end()) {
      throw MissingReferenceError("no reference for " + lat.utterance_id);
    }
    Rng rng(derive_seed(config.seed, "oracle/" + lat.utterance_id));
    total += oracle_path(topo_sort(lat), rit->second, rng).oracle_stats;
  }
  std::printf("oracle WER %.2f%% (S=%lld I=%lld D=%lld / %lld)\n",
              total.wer_percent(), static_cast<long long>(total.substitutions),
              static_cast<long long>(total.insertions),
              static_cast<long long>(total.deletions),
              static_cast<long long>(total.ref_len));
  return 0;
}

int cmd_stats(const std::vector<std::string> &report_paths, bool tsv) {
  std::vector<RescoreReport> reports;
  for (const std::string &path : report_paths) {
    std::istringstream in(read_file(path));
    reports.push_back(read_report(in));
  }
  StatsTable table = stats_compare(reports);
  std::fputs(tsv ? table.render_tsv().c_str() : table.render_text().c_str(),
             stdout);
  return 0;
}

}  // namespace

int main(int argc, char **argv) {
  CLI::App app{"lattice rescoring toolkit"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> sets;
  uint64_t seed_flag = 0;
  app.add_option("--config", config_path, "experiment config file")
      ->envname("LATRESCORE_CONFIG");
  app.add_option("--set", sets, "override a config key (key=value)");
  CLI::Option *seed_opt =
      app.add_option("--seed", seed_flag, "override the global seed");

  auto *make_world_cmd = app.add_subcommand("make-world",
                                            "synthesize the toy world");
  std::string mw_out;
  make_world_cmd->add_option("--out", mw_out, "output directory")->required();

  auto *latgen_cmd =
      app.add_subcommand("latgen", "generate artificial lattices from text");
  std::string lg_world, lg_texts, lg_out, lg_name = "lattices", lg_lm_text,
                                          lg_lm_arpa;
  latgen_cmd->add_option("--world", lg_world, "world directory")->required();
  latgen_cmd->add_option("--texts", lg_texts, "source texts (.ref)")
      ->required();
  latgen_cmd->add_option("--out", lg_out, "output directory")->required();
  latgen_cmd->add_option("--name", lg_name, "output archive basename");
  latgen_cmd->add_option("--lm-text", lg_lm_text,
                         "texts for the first-pass n-gram (default: --texts)");
  latgen_cmd->add_option("--lm-arpa", lg_lm_arpa,
                         "pre-trained first-pass model (.arpa.txt)");
  int lg_jobs = 0;
  CLI::Option *jobs_opt =
      latgen_cmd->add_option("--jobs", lg_jobs, "generation worker count");

  auto *train_ltlm_cmd =
      app.add_subcommand("train-ltlm", "train the lattice transformer");
  std::vector<std::string> tl_lattices, tl_refs, tl_eval_lattices,
      tl_eval_refs;
  std::string tl_world, tl_out;
  train_ltlm_cmd->add_option("--world", tl_world, "world directory")
      ->required();
  train_ltlm_cmd
      ->add_option("--mix", tl_lattices,
                   "training lattice archives (.lat.txt), mixed")
      ->required();
  train_ltlm_cmd->add_option("--refs", tl_refs, "reference texts (.ref)")
      ->required();
  train_ltlm_cmd->add_option("--eval-mix", tl_eval_lattices,
                             "held-out lattice archives");
  train_ltlm_cmd->add_option("--eval-refs", tl_eval_refs,
                             "held-out references");
  train_ltlm_cmd->add_option("--out", tl_out, "checkpoint directory")
      ->required();

  auto *train_arlm_cmd =
      app.add_subcommand("train-arlm", "train the causal baseline LM");
  std::string ta_world, ta_texts, ta_out;
  train_arlm_cmd->add_option("--world", ta_world, "world directory")
      ->required();
  train_arlm_cmd->add_option("--texts", ta_texts, "training texts (.ref)")
      ->required();
  train_arlm_cmd->add_option("--out", ta_out, "checkpoint directory")
      ->required();

  auto *rescore_cmd = app.add_subcommand("rescore", "rescore a lattice set");
  std::string rs_mode, rs_world, rs_lattices, rs_ckpt, rs_refs, rs_out;
  double rs_l2 = 0.0;
  int rs_n = 0, rs_batch = 0;
  rescore_cmd
      ->add_option("--mode", rs_mode, "single-shot | nbest | first-pass")
      ->required();
  rescore_cmd->add_option("--world", rs_world, "world directory")->required();
  rescore_cmd->add_option("--lattices", rs_lattices, "lattice archive")
      ->required();
  rescore_cmd->add_option("--ckpt", rs_ckpt, "model checkpoint");
  rescore_cmd->add_option("--refs", rs_refs, "references for WER");
  rescore_cmd->add_option("--out", rs_out, "output directory")->required();
  CLI::Option *l2_opt =
      rescore_cmd->add_option("--l2", rs_l2, "rescoring LM weight");
  CLI::Option *n_opt = rescore_cmd->add_option("--n", rs_n, "N-best size");
  CLI::Option *batch_opt =
      rescore_cmd->add_option("--batch", rs_batch, "single-shot batch size");

  auto *wer_cmd = app.add_subcommand("wer", "corpus WER between token files");
  std::string w_hyp, w_ref;
  wer_cmd->add_option("--hyp", w_hyp, "hypothesis file")->required();
  wer_cmd->add_option("--ref", w_ref, "reference file")->required();

  auto *oracle_cmd =
      app.add_subcommand("oracle-wer", "oracle WER of a lattice set");
  std::string ow_world, ow_lattices, ow_refs;
  oracle_cmd->add_option("--world", ow_world, "world directory")->required();
  oracle_cmd->add_option("--lattices", ow_lattices, "lattice archive")
      ->required();
  oracle_cmd->add_option("--refs", ow_refs, "references")->required();

  auto *stats_cmd = app.add_subcommand("stats", "compare rescoring reports");
  std::vector<std::string> st_reports;
  bool st_tsv = false;
  stats_cmd->add_option("--reports", st_reports, "report files (2+)")
      ->required();
  stats_cmd->add_flag("--tsv", st_tsv, "machine-readable output");

  auto *selftest_cmd =
      app.add_subcommand("selftest", "run the built-in invariant suite");
  bool quick = false;
  selftest_cmd->add_flag("--quick", quick, "smaller trial counts");

  CLI11_PARSE(app, argc, argv);

  try {
    ExperimentConfig config =
        load_config(config_path, sets, seed_flag, seed_opt->count() > 0);
    if (make_world_cmd->parsed()) return cmd_make_world(config, mw_out);
    if (latgen_cmd->parsed()) {
      if (jobs_opt->count() > 0) {
        config.set("gen.jobs", std::to_string(lg_jobs));
      }
      return cmd_latgen(config, lg_world, lg_texts, lg_out, lg_name,
                        lg_lm_text, lg_lm_arpa);
    }
    if (train_ltlm_cmd->parsed()) {
      return cmd_train_ltlm(config, tl_world, tl_lattices, tl_refs,
                            tl_eval_lattices, tl_eval_refs, tl_out);
    }
    if (train_arlm_cmd->parsed()) {
      return cmd_train_arlm(config, ta_world, ta_texts, ta_out);
    }
    if (rescore_cmd->parsed()) {
      if (l2_opt->count() > 0) {
        config.set("weights.l2", detail::format_double(rs_l2));
      }
      if (n_opt->count() > 0) config.set("nbest.n", std::to_string(rs_n));
      if (batch_opt->count() > 0) {
        config.set("rescore.batch", std::to_string(rs_batch));
      }
      return cmd_rescore(config, rs_mode, rs_world, rs_lattices, rs_ckpt,
                         rs_refs, rs_out);
    }
    if (wer_cmd->parsed()) return cmd_wer(w_hyp, w_ref);
    if (oracle_cmd->parsed()) {
      return cmd_oracle_wer(config, ow_world, ow_lattices, ow_refs);
    }
    if (stats_cmd->parsed()) return cmd_stats(st_reports, st_tsv);
    if (selftest_cmd->parsed()) {
      int failures = run_selftest(std::cout, quick);
      if (failures > 0) {
        std::fprintf(stderr, "%d selftest failure(s)\n", failures);
        return 4;
      }
      std::printf("selftest ok\n");
      return 0;
    }
  } catch (const ConfigError &e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const DataError &e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 3;
  } catch (const std::exception &e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 4;
  }
  return 0;
}
