// latrescore/lattice_io.hpp

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
// Text formats, all UTF-8 with LF line endings:
//   .lat.txt  lattice archive. One record per lattice: utterance-id line,
//             arc lines "src dst token lm_cost ac_cost", final lines
//             "state final_cost", one terminating blank line. State 0 is
//             the initial state.
//   .syms     symbol table, "token<TAB>id" lines, dense ids, ids 0-3
//             reserved for <eps> <s> </s> <unk>.
//   .ref      transcripts, "utt_id<TAB>word word ..." lines.
//   .ali      alignments, "utt_id<TAB>class_id class_id ..." lines.
// Costs print with the shortest round-trip decimal representation, so
// parse(write(x)) reproduces x bit-exactly.

#ifndef LATRESCORE_LATTICE_IO_HPP_
#define LATRESCORE_LATTICE_IO_HPP_

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "latrescore/error.hpp"
#include "latrescore/lattice.hpp"

namespace latrescore {

struct LatticeArchive {
  std::vector<Lattice> lattices;
  // Optional reference transcripts keyed by utterance id.
  std::map<std::string, std::vector<WordId>> transcripts;

  const Lattice *find(const std::string &utt) const {
    for (const Lattice &l : lattices) {
      if (l.utterance_id == utt) return &l;
    }
    return nullptr;
  }

  bool operator==(const LatticeArchive &o) const {
    return lattices == o.lattices && transcripts == o.transcripts;
  }
};

namespace detail {

// Shortest decimal representation that parses back to the same double.
inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline bool parse_double(const std::string &s, double *out) {
  auto res = std::from_chars(s.data(), s.data() + s.size(), *out);
  return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

inline bool parse_int(const std::string &s, int64_t *out) {
  auto res = std::from_chars(s.data(), s.data() + s.size(), *out);
  return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

struct FieldSplit {
  std::vector<std::string> fields;
  std::vector<int> cols;  // 1-based start column per field
};

inline FieldSplit split_fields(const std::string &line) {
  FieldSplit out;
  size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
    if (i >= line.size()) break;
    size_t start = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t') ++i;
    out.fields.push_back(line.substr(start, i - start));
    out.cols.push_back(static_cast<int>(start) + 1);
  }
  return out;
}

inline StateId parse_state(const std::string &s, int line, int col) {
  int64_t v = 0;
  if (!parse_int(s, &v) || v < 0 || v > 1000000000) {
    throw SyntaxError(line, col, "expected a state index, got '" + s + "'");
  }
  return static_cast<StateId>(v);
}

inline double parse_cost(const std::string &s, int line, int col) {
  double v = 0.0;
  if (!parse_double(s, &v)) {
    throw SyntaxError(line, col, "expected a cost, got '" + s + "'");
  }
  if (!std::isfinite(v)) {
    throw SyntaxError(line, col, "non-finite cost '" + s + "'");
  }
  return v;
}

}  // namespace detail

// Parses a lattice archive. In strict mode an unknown token raises
// UnknownSymbolError; otherwise it maps to <unk>.
inline LatticeArchive parse_lattice_text(std::istream &in,
                                         const SymbolTable &symbols,
                                         bool strict = true) {
  LatticeArchive archive;
  std::unordered_set<std::string> seen_ids;

  std::string line;
  int lineno = 0;
  bool in_record = false;
  bool saw_final = false;
  Lattice cur;
  StateId max_state = -1;

  auto flush_record = [&]() {
    if (!in_record) return;
    if (cur.final_states.empty()) {
      throw SyntaxError(lineno, 1,
                        "record '" + cur.utterance_id + "' has no final line");
    }
    cur.num_states = max_state + 1;
    cur.initial_state = 0;
    archive.lattices.push_back(std::move(cur));
    cur = Lattice();
    in_record = false;
    saw_final = false;
    max_state = -1;
  };

  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') {
      throw SyntaxError(lineno, static_cast<int>(line.size()),
                        "CR line ending; expected LF");
    }
    detail::FieldSplit fs = detail::split_fields(line);
    if (fs.fields.empty()) {
      flush_record();
      continue;
    }
    if (!in_record) {
      if (fs.fields.size() != 1) {
        throw SyntaxError(lineno, fs.cols[1],
                          "utterance id line must be a single token");
      }
      if (!seen_ids.insert(fs.fields[0]).second) {
        throw DuplicateUtteranceIdError("duplicate utterance id '" +
                                        fs.fields[0] + "' at line " +
                                        std::to_string(lineno));
      }
      cur.utterance_id = fs.fields[0];
      in_record = true;
      continue;
    }
    if (fs.fields.size() == 5) {
      if (saw_final) {
        throw SyntaxError(lineno, fs.cols[0], "arc line after final line");
      }
      Arc arc;
      arc.src = detail::parse_state(fs.fields[0], lineno, fs.cols[0]);
      arc.dst = detail::parse_state(fs.fields[1], lineno, fs.cols[1]);
      WordId w = symbols.find(fs.fields[2]);
      if (w < 0) {
        if (strict) {
          throw UnknownSymbolError("unknown token '" + fs.fields[2] +
                                   "' at line " + std::to_string(lineno));
        }
        w = kUnkId;
      }
      arc.word = w;
      arc.lm_cost = detail::parse_cost(fs.fields[3], lineno, fs.cols[3]);
      arc.ac_cost = detail::parse_cost(fs.fields[4], lineno, fs.cols[4]);
      max_state = std::max(max_state, std::max(arc.src, arc.dst));
      cur.arcs.push_back(arc);
    } else if (fs.fields.size() == 2) {
      saw_final = true;
      StateId s = detail::parse_state(fs.fields[0], lineno, fs.cols[0]);
      double c = detail::parse_cost(fs.fields[1], lineno, fs.cols[1]);
      if (cur.final_states.count(s)) {
        throw SyntaxError(lineno, fs.cols[0],
                          "duplicate final state " + std::to_string(s));
      }
      cur.final_states[s] = c;
      max_state = std::max(max_state, s);
    } else {
      throw SyntaxError(lineno, fs.cols[0],
                        "expected 5 fields (arc) or 2 fields (final), got " +
                            std::to_string(fs.fields.size()));
    }
  }
  flush_record();
  return archive;
}

// Serializes an archive in canonical form. Lattices must use state 0 as the
// initial state and reference every state (the format cannot represent
// anything else); run topo_sort / validate(trim) first.
inline void write_lattice_text(const LatticeArchive &archive,
                               std::ostream &out, const SymbolTable &symbols) {
  for (const Lattice &lat : archive.lattices) {
    if (lat.initial_state != 0) {
      throw MalformedLatticeError(
          "text format requires initial state 0; topo_sort first (" +
          lat.utterance_id + ")");
    }
    StateId max_state = -1;
    for (const Arc &a : lat.arcs) {
      max_state = std::max(max_state, std::max(a.src, a.dst));
    }
    for (const auto &[s, c] : lat.final_states) {
      (void)c;
      max_state = std::max(max_state, s);
    }
    if (max_state + 1 != lat.num_states) {
      throw MalformedLatticeError(
          "trailing unreferenced states are not representable; trim first (" +
          lat.utterance_id + ")");
    }
    out << lat.utterance_id << "\n";
    for (const Arc &a : lat.arcs) {
      out << a.src << " " << a.dst << " " << symbols.token(a.word) << " "
          << detail::format_double(a.lm_cost) << " "
          << detail::format_double(a.ac_cost) << "\n";
    }
    for (const auto &[s, c] : lat.final_states) {
      out << s << " " << detail::format_double(c) << "\n";
    }
    out << "\n";
  }
}

inline SymbolTable read_symbol_table(std::istream &in) {
  std::vector<std::pair<std::string, int64_t>> entries;
  std::unordered_set<std::string> tokens;
  std::unordered_set<int64_t> ids;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    detail::FieldSplit fs = detail::split_fields(line);
    if (fs.fields.size() != 2) {
      throw SyntaxError(lineno, 1, "expected 'token<TAB>id'");
    }
    int64_t id = 0;
    if (!detail::parse_int(fs.fields[1], &id) || id < 0) {
      throw SyntaxError(lineno, fs.cols[1], "bad symbol id '" + fs.fields[1] +
                                                "'");
    }
    if (!tokens.insert(fs.fields[0]).second) {
      throw DuplicateTokenError("duplicate token '" + fs.fields[0] +
                                "' at line " + std::to_string(lineno));
    }
    if (!ids.insert(id).second) {
      throw DuplicateIdError("duplicate id " + std::to_string(id) +
                             " at line " + std::to_string(lineno));
    }
    entries.emplace_back(fs.fields[0], id);
  }
  static const char *kReserved[4] = {"<eps>", "<s>", "</s>", "<unk>"};
  std::vector<std::string> by_id(entries.size());
  for (const auto &[tok, id] : entries) {
    if (id >= static_cast<int64_t>(entries.size())) {
      throw DataError("symbol ids are not dense: id " + std::to_string(id) +
                      " with " + std::to_string(entries.size()) + " entries");
    }
    by_id[id] = tok;
  }
  for (int i = 0; i < 4; ++i) {
    if (static_cast<size_t>(i) >= by_id.size() || by_id[i] != kReserved[i]) {
      throw ReservedIdViolationError(std::string("id ") + std::to_string(i) +
                                     " must map to " + kReserved[i]);
    }
  }
  SymbolTable table;
  for (size_t i = 4; i < by_id.size(); ++i) table.add(by_id[i]);
  return table;
}

inline void write_symbol_table(const SymbolTable &table, std::ostream &out) {
  for (WordId id = 0; id < table.size(); ++id) {
    out << table.token(id) << "\t" << id << "\n";
  }
}

// Transcript / alignment readers share the "utt<TAB>items..." layout.
inline std::map<std::string, std::vector<std::string>> read_token_lines(
    std::istream &in) {
  std::map<std::string, std::vector<std::string>> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    detail::FieldSplit fs = detail::split_fields(line);
    if (fs.fields.empty()) continue;
    std::string utt = fs.fields[0];
    if (out.count(utt)) {
      throw DuplicateUtteranceIdError("duplicate utterance id '" + utt +
                                      "' at line " + std::to_string(lineno));
    }
    out[utt] = std::vector<std::string>(fs.fields.begin() + 1,
                                        fs.fields.end());
  }
  return out;
}

inline std::map<std::string, std::vector<WordId>> read_refs(
    std::istream &in, const SymbolTable &symbols, bool strict = false) {
  std::map<std::string, std::vector<WordId>> out;
  for (auto &[utt, toks] : read_token_lines(in)) {
    std::vector<WordId> words;
    words.reserve(toks.size());
    for (const std::string &t : toks) {
      WordId w = symbols.find(t);
      if (w < 0) {
        if (strict) throw UnknownSymbolError("unknown token '" + t + "'");
        w = kUnkId;
      }
      words.push_back(w);
    }
    out[utt] = std::move(words);
  }
  return out;
}

inline void write_refs(const std::map<std::string, std::vector<WordId>> &refs,
                       std::ostream &out, const SymbolTable &symbols) {
  for (const auto &[utt, words] : refs) {
    out << utt;
    out << "\t";
    for (size_t i = 0; i < words.size(); ++i) {
      if (i) out << " ";
      out << symbols.token(words[i]);
    }
    out << "\n";
  }
}

inline std::map<std::string, std::vector<int>> read_alignments(
    std::istream &in) {
  std::map<std::string, std::vector<int>> out;
  for (auto &[utt, toks] : read_token_lines(in)) {
    std::vector<int> classes;
    classes.reserve(toks.size());
    for (const std::string &t : toks) {
      int64_t v = 0;
      if (!detail::parse_int(t, &v) || v < 0) {
        throw DataError("bad class id '" + t + "' in alignment for " + utt);
      }
      classes.push_back(static_cast<int>(v));
    }
    out[utt] = std::move(classes);
  }
  return out;
}

inline void write_alignments(
    const std::map<std::string, std::vector<int>> &ali, std::ostream &out) {
  for (const auto &[utt, classes] : ali) {
    out << utt << "\t";
    for (size_t i = 0; i < classes.size(); ++i) {
      if (i) out << " ";
      out << classes[i];
    }
    out << "\n";
  }
}

// --- small file helpers used across the toolkit ---

inline std::string read_file(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string &path, const std::string &content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  out << content;
  if (!out) throw DataError("write failed for " + path);
}

}  // namespace latrescore

#endif  // LATRESCORE_LATTICE_IO_HPP_
