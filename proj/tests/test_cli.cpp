#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "catch2/catch_amalgamated.hpp"
#include "latrescore/rescore.hpp"

#ifndef LATRESCORE_CLI_PATH
#define LATRESCORE_CLI_PATH "latrescore"
#endif

namespace {

namespace fs = std::filesystem;
using latrescore::read_file;
using latrescore::write_file;

struct RunResult {
  int exit_code = -1;
  std::string output;
};

RunResult run_cli(const std::string &args, const fs::path &dir) {
  fs::path log = dir / "cli_output.txt";
  std::string cmd = std::string(LATRESCORE_CLI_PATH) + " " + args + " > " +
                    log.string() + " 2>&1";
  int raw = std::system(cmd.c_str());
  RunResult result;
  result.exit_code = WEXITSTATUS(raw);
  result.output = read_file(log.string());
  return result;
}

fs::path fresh_dir(const std::string &name) {
  fs::path dir = fs::temp_directory_path() / ("latrescore_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// Small world shared by the pipeline smoke tests.
const std::string kTinyWorldArgs =
    "--seed 7 --set world.train_sentences=24 --set world.eval_sentences=8 "
    "--set world.alignment_utterances=24 --set world.leak=0.5 "
    "--set world.duration_mean=2.0 --set gen.kappa=5 --set ngram.order=1";

}  // namespace

TEST_CASE("wer subcommand reports zero on identical files", "[cli]") {
  fs::path dir = fresh_dir("wer");
  write_file((dir / "a.ref").string(), "u1\tfoo bar baz\nu2\tqux\n");
  RunResult r = run_cli("wer --hyp " + (dir / "a.ref").string() + " --ref " +
                            (dir / "a.ref").string(),
                        dir);
  REQUIRE(r.exit_code == 0);
  REQUIRE(r.output.find("WER 0.00%") != std::string::npos);

  write_file((dir / "b.ref").string(), "u1\tfoo bar zap\nu2\tqux\n");
  RunResult r2 = run_cli("wer --hyp " + (dir / "b.ref").string() + " --ref " +
                             (dir / "a.ref").string(),
                         dir);
  REQUIRE(r2.exit_code == 0);
  REQUIRE(r2.output.find("WER 25.00%") != std::string::npos);
}

TEST_CASE("error classes map to distinct exit codes", "[cli]") {
  fs::path dir = fresh_dir("codes");
  // Unknown config key -> ConfigError -> 2.
  RunResult bad_key = run_cli("--set nosuch.key=1 make-world --out " +
                                  (dir / "w").string(),
                              dir);
  REQUIRE(bad_key.exit_code == 2);
  // Missing input file -> DataError -> 3.
  RunResult missing = run_cli(
      "wer --hyp /nonexistent.ref --ref /nonexistent.ref", dir);
  REQUIRE(missing.exit_code == 3);
}

TEST_CASE("pipeline smoke: world, lattices, training, rescoring", "[cli]") {
  fs::path dir = fresh_dir("pipeline");
  fs::path world = dir / "world";
  RunResult mw = run_cli(kTinyWorldArgs + " make-world --out " +
                             world.string(),
                         dir);
  INFO(mw.output);
  REQUIRE(mw.exit_code == 0);
  REQUIRE(fs::exists(world / "manifest.json"));

  RunResult lg = run_cli(kTinyWorldArgs + " latgen --world " + world.string() +
                             " --texts " + (world / "train.ref").string() +
                             " --out " + (dir / "gen").string() +
                             " --name train",
                         dir);
  INFO(lg.output);
  REQUIRE(lg.exit_code == 0);
  REQUIRE(fs::exists(dir / "gen" / "train.lat.txt"));

  // Deterministic rerun produces identical bytes.
  std::string first_bytes = read_file((dir / "gen" / "train.lat.txt").string());
  RunResult lg2 = run_cli(kTinyWorldArgs + " latgen --world " +
                              world.string() + " --texts " +
                              (world / "train.ref").string() + " --out " +
                              (dir / "gen2").string() + " --name train",
                          dir);
  REQUIRE(lg2.exit_code == 0);
  REQUIRE(read_file((dir / "gen2" / "train.lat.txt").string()) == first_bytes);

  RunResult ow = run_cli(kTinyWorldArgs + " oracle-wer --world " +
                             world.string() + " --lattices " +
                             (dir / "gen" / "train.lat.txt").string() +
                             " --refs " + (world / "train.ref").string(),
                         dir);
  INFO(ow.output);
  REQUIRE(ow.exit_code == 0);
  REQUIRE(ow.output.find("oracle WER") != std::string::npos);

  // Tiny LT-LM training.
  std::string tiny_model =
      " --set ltlm.dim=16 --set ltlm.heads=2 --set ltlm.ffn=32 "
      "--set ltlm.layers=1 --set ltlm.epochs=1 --set ltlm.batch=8";
  RunResult tr = run_cli(kTinyWorldArgs + tiny_model + " train-ltlm --world " +
                             world.string() + " --mix " +
                             (dir / "gen" / "train.lat.txt").string() +
                             " --refs " + (world / "train.ref").string() +
                             " --out " + (dir / "ltlm").string(),
                         dir);
  INFO(tr.output);
  REQUIRE(tr.exit_code == 0);
  REQUIRE(fs::exists(dir / "ltlm" / "ltlm.ckpt"));

  // Single-shot with l2=0 equals the first-pass column.
  RunResult fp = run_cli(kTinyWorldArgs + " rescore --mode first-pass" +
                             " --world " + world.string() + " --lattices " +
                             (dir / "gen" / "train.lat.txt").string() +
                             " --refs " + (world / "train.ref").string() +
                             " --out " + (dir / "fp").string(),
                         dir);
  INFO(fp.output);
  REQUIRE(fp.exit_code == 0);
  RunResult ss = run_cli(kTinyWorldArgs + " rescore --mode single-shot --l2 0" +
                             " --world " + world.string() + " --lattices " +
                             (dir / "gen" / "train.lat.txt").string() +
                             " --ckpt " +
                             (dir / "ltlm" / "ltlm.ckpt").string() +
                             " --refs " + (world / "train.ref").string() +
                             " --out " + (dir / "ss0").string(),
                         dir);
  INFO(ss.output);
  REQUIRE(ss.exit_code == 0);

  std::istringstream fp_in(
      read_file((dir / "fp" / "first_pass.report").string()));
  std::istringstream ss_in(
      read_file((dir / "ss0" / "single_shot.report").string()));
  latrescore::RescoreReport fp_report = latrescore::read_report(fp_in);
  latrescore::RescoreReport ss_report = latrescore::read_report(ss_in);
  REQUIRE(fp_report.utterances.size() == ss_report.utterances.size());
  for (size_t i = 0; i < fp_report.utterances.size(); ++i) {
    REQUIRE(fp_report.utterances[i].words == ss_report.utterances[i].words);
  }

  // AR model + nbest + stats table.
  std::string tiny_ar =
      " --set arlm.dim=16 --set arlm.heads=2 --set arlm.ffn=32 "
      "--set arlm.layers=1 --set arlm.epochs=1 --set arlm.batch=8";
  RunResult ta = run_cli(kTinyWorldArgs + tiny_ar + " train-arlm --world " +
                             world.string() + " --texts " +
                             (world / "train.ref").string() + " --out " +
                             (dir / "arlm").string(),
                         dir);
  INFO(ta.output);
  REQUIRE(ta.exit_code == 0);
  RunResult nb = run_cli(kTinyWorldArgs + " rescore --mode nbest --n 10" +
                             " --world " + world.string() + " --lattices " +
                             (dir / "gen" / "train.lat.txt").string() +
                             " --ckpt " +
                             (dir / "arlm" / "arlm.ckpt").string() +
                             " --refs " + (world / "train.ref").string() +
                             " --out " + (dir / "nb").string(),
                         dir);
  INFO(nb.output);
  REQUIRE(nb.exit_code == 0);

  RunResult st = run_cli(
      "stats --reports " + (dir / "fp" / "first_pass.report").string() + " " +
          (dir / "ss0" / "single_shot.report").string() + " " +
          (dir / "nb" / "nbest_10.report").string() + " --tsv",
      dir);
  INFO(st.output);
  REQUIRE(st.exit_code == 0);
  REQUIRE(st.output.find("single-shot") != std::string::npos);
  REQUIRE(st.output.find("10-best") != std::string::npos);
}

TEST_CASE("config file values load and flags win", "[cli]") {
  fs::path dir = fresh_dir("config");
  write_file((dir / "exp.conf").string(),
             "seed = 5\nworld.vocab = 30\nworld.train_sentences = 10\n"
             "world.eval_sentences = 4\nworld.alignment_utterances = 10\n"
             "# comment line\nltlm.dim = 16\n");
  RunResult r = run_cli("--config " + (dir / "exp.conf").string() +
                            " make-world --out " + (dir / "w1").string(),
                        dir);
  INFO(r.output);
  REQUIRE(r.exit_code == 0);
  REQUIRE(r.output.find("30 words") != std::string::npos);

  RunResult r2 = run_cli("--config " + (dir / "exp.conf").string() +
                             " --set world.vocab=20 make-world --out " +
                             (dir / "w2").string(),
                         dir);
  REQUIRE(r2.exit_code == 0);
  REQUIRE(r2.output.find("20 words") != std::string::npos);

  // Manifest echoes the effective config.
  std::string manifest = read_file((dir / "w2" / "manifest.json").string());
  REQUIRE(manifest.find("\"vocab\": 20") != std::string::npos);
  REQUIRE(manifest.find("config_hash") != std::string::npos);
}
