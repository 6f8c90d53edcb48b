// latrescore/config.hpp

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
// Flat key=value experiment configuration (command-line flags override
// file values) and the reproducibility manifest written beside every
// output directory.

#ifndef LATRESCORE_CONFIG_HPP_
#define LATRESCORE_CONFIG_HPP_

#include <map>
#include <sstream>
#include <string>

#include "json.hpp"
#include "latrescore/error.hpp"
#include "latrescore/latgen.hpp"
#include "latrescore/lattice_io.hpp"
#include "latrescore/ltlm.hpp"
#include "latrescore/rescore.hpp"
#include "latrescore/rng.hpp"
#include "latrescore/world.hpp"

namespace latrescore {

constexpr const char *kToolkitVersion = "0.1.0";

// "key = value" lines; '#' starts a comment.
inline std::map<std::string, std::string> parse_key_values(
    std::istream &in) {
  std::map<std::string, std::string> kv;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    detail::FieldSplit fs = detail::split_fields(line);
    if (fs.fields.empty()) continue;
    size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) +
                        ": expected 'key = value'");
    }
    auto trim = [](std::string s) {
      size_t a = s.find_first_not_of(" \t");
      size_t b = s.find_last_not_of(" \t");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty()) {
      throw ConfigError("config line " + std::to_string(lineno) +
                        ": empty key or value");
    }
    kv[key] = value;
  }
  return kv;
}

struct ExperimentConfig {
  uint64_t seed = 1;
  WorldConfig world;
  GenerationConfig generation;
  int ngram_order = 3;
  LtLmConfig ltlm;            // vocab_size resolved at run time
  TrainSchedule ltlm_schedule;
  LtLmConfig arlm;
  TrainSchedule arlm_schedule;
  ScoreWeights weights;
  int rescore_batch = 16;
  int nbest_n = 50;

  ExperimentConfig() {
    ltlm.dim = 64;
    ltlm.layers = 2;
    ltlm.heads = 4;
    ltlm.ffn = 128;
    ltlm.dropout = 0.1;
    ltlm_schedule.epochs = 6;
    ltlm_schedule.batch_size = 16;
    ltlm_schedule.lr = 3e-4;
    ltlm_schedule.warmup_steps = 100;
    arlm = ltlm;
    arlm_schedule = ltlm_schedule;
    arlm_schedule.epochs = 3;
    generation.kappa = 50.0;
  }

  void apply(const std::map<std::string, std::string> &kv) {
    for (const auto &[key, value] : kv) set(key, value);
    sync_seeds();
  }

  void set(const std::string &key, const std::string &value) {
    auto as_int = [&]() {
      int64_t v = 0;
      if (!detail::parse_int(value, &v)) {
        throw ConfigError("key '" + key + "': expected an integer, got '" +
                          value + "'");
      }
      return v;
    };
    auto as_double = [&]() {
      double v = 0.0;
      if (!detail::parse_double(value, &v)) {
        throw ConfigError("key '" + key + "': expected a number, got '" +
                          value + "'");
      }
      return v;
    };
    if (key == "seed") seed = static_cast<uint64_t>(as_int());
    else if (key == "world.classes") world.num_classes = static_cast<int>(as_int());
    else if (key == "world.vocab") world.vocab_words = static_cast<int>(as_int());
    else if (key == "world.train_sentences") world.train_sentences = static_cast<int>(as_int());
    else if (key == "world.eval_sentences") world.eval_sentences = static_cast<int>(as_int());
    else if (key == "world.min_len") world.min_sentence_len = static_cast<int>(as_int());
    else if (key == "world.max_len") world.max_sentence_len = static_cast<int>(as_int());
    else if (key == "world.leak") world.leak = as_double();
    else if (key == "world.duration_mean") world.duration_mean = as_double();
    else if (key == "world.alignment_utterances") world.alignment_utterances = static_cast<int>(as_int());
    else if (key == "world.posterior_concentration") world.posterior_concentration = as_double();
    else if (key == "world.second_pron_fraction") world.second_pron_fraction = as_double();
    else if (key == "gen.beam") generation.decode.beam = as_double();
    else if (key == "gen.max_active") generation.decode.max_active = static_cast<int>(as_int());
    else if (key == "gen.prune_beam") generation.decode.prune_beam = as_double();
    else if (key == "gen.kappa") generation.kappa = as_double();
    else if (key == "gen.jobs") generation.jobs = static_cast<int>(as_int());
    else if (key == "gen.retries") generation.retries = static_cast<int>(as_int());
    else if (key == "ngram.order") ngram_order = static_cast<int>(as_int());
    else if (key == "ltlm.dim") ltlm.dim = static_cast<int>(as_int());
    else if (key == "ltlm.layers") ltlm.layers = static_cast<int>(as_int());
    else if (key == "ltlm.heads") ltlm.heads = static_cast<int>(as_int());
    else if (key == "ltlm.ffn") ltlm.ffn = static_cast<int>(as_int());
    else if (key == "ltlm.max_positions") ltlm.max_positions = static_cast<int>(as_int());
    else if (key == "ltlm.dropout") ltlm.dropout = as_double();
    else if (key == "ltlm.epochs") ltlm_schedule.epochs = static_cast<int>(as_int());
    else if (key == "ltlm.batch") ltlm_schedule.batch_size = static_cast<int>(as_int());
    else if (key == "ltlm.lr") ltlm_schedule.lr = as_double();
    else if (key == "ltlm.warmup") ltlm_schedule.warmup_steps = as_int();
    else if (key == "arlm.dim") arlm.dim = static_cast<int>(as_int());
    else if (key == "arlm.layers") arlm.layers = static_cast<int>(as_int());
    else if (key == "arlm.heads") arlm.heads = static_cast<int>(as_int());
    else if (key == "arlm.ffn") arlm.ffn = static_cast<int>(as_int());
    else if (key == "arlm.dropout") arlm.dropout = as_double();
    else if (key == "arlm.epochs") arlm_schedule.epochs = static_cast<int>(as_int());
    else if (key == "arlm.batch") arlm_schedule.batch_size = static_cast<int>(as_int());
    else if (key == "arlm.lr") arlm_schedule.lr = as_double();
    else if (key == "arlm.warmup") arlm_schedule.warmup_steps = as_int();
    else if (key == "weights.a") weights.a = as_double();
    else if (key == "weights.l1") weights.l1 = as_double();
    else if (key == "weights.l2") weights.l2 = as_double();
    else if (key == "rescore.batch") rescore_batch = static_cast<int>(as_int());
    else if (key == "nbest.n") nbest_n = static_cast<int>(as_int());
    else throw ConfigError("unknown config key '" + key + "'");
  }

  // Seeds of sub-components derive from the global seed.
  void sync_seeds() {
    world.seed = seed;
    generation.seed = derive_seed(seed, "generation");
    ltlm.seed = derive_seed(seed, "ltlm");
    arlm.seed = derive_seed(seed, "arlm");
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["seed"] = seed;
    j["world"] = {{"classes", world.num_classes},
                  {"vocab", world.vocab_words},
                  {"train_sentences", world.train_sentences},
                  {"eval_sentences", world.eval_sentences},
                  {"min_len", world.min_sentence_len},
                  {"max_len", world.max_sentence_len},
                  {"leak", world.leak},
                  {"duration_mean", world.duration_mean},
                  {"alignment_utterances", world.alignment_utterances},
                  {"posterior_concentration", world.posterior_concentration},
                  {"second_pron_fraction", world.second_pron_fraction}};
    j["gen"] = {{"beam", generation.decode.beam},
                {"max_active", generation.decode.max_active},
                {"prune_beam", generation.decode.prune_beam},
                {"kappa", generation.kappa},
                {"jobs", generation.jobs},
                {"retries", generation.retries}};
    j["ngram"] = {{"order", ngram_order}};
    j["ltlm"] = ltlm_config_json(ltlm);
    j["ltlm_schedule"] = {{"epochs", ltlm_schedule.epochs},
                          {"batch", ltlm_schedule.batch_size},
                          {"lr", ltlm_schedule.lr},
                          {"warmup", ltlm_schedule.warmup_steps}};
    j["arlm"] = ltlm_config_json(arlm);
    j["arlm_schedule"] = {{"epochs", arlm_schedule.epochs},
                          {"batch", arlm_schedule.batch_size},
                          {"lr", arlm_schedule.lr},
                          {"warmup", arlm_schedule.warmup_steps}};
    j["weights"] = {{"a", weights.a}, {"l1", weights.l1}, {"l2", weights.l2}};
    j["rescore"] = {{"batch", rescore_batch}};
    j["nbest"] = {{"n", nbest_n}};
    return j;
  }
};

// Reproducibility manifest beside every output. Deliberately carries no
// timestamps: reruns must be byte-identical.
inline void write_manifest(const std::string &dir, const std::string &command,
                           const ExperimentConfig &config,
                           const nlohmann::json &extra = {}) {
  nlohmann::json manifest;
  manifest["toolkit_version"] = kToolkitVersion;
  manifest["command"] = command;
  manifest["seed"] = config.seed;
  manifest["config"] = config.to_json();
  manifest["config_hash"] = hash_string(config.to_json().dump());
  if (!extra.is_null() && !extra.empty()) manifest["outputs"] = extra;
  write_file(dir + "/manifest.json", manifest.dump(2) + "\n");
}

}  // namespace latrescore

#endif  // LATRESCORE_CONFIG_HPP_
