// latrescore/checkpoint.hpp

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
// Versioned checkpoint container: 8-byte magic, little-endian u64 header
// length, JSON header (metadata + tensor directory), then raw f64 payloads
// in directory order. Load/save round trips are bit-exact.

#ifndef LATRESCORE_CHECKPOINT_HPP_
#define LATRESCORE_CHECKPOINT_HPP_

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "latrescore/error.hpp"
#include "latrescore/tensor.hpp"

namespace latrescore {

static_assert(std::endian::native == std::endian::little,
              "checkpoint payloads are little-endian");

struct Checkpoint {
  std::map<std::string, Tensor> tensors;
  nlohmann::json meta;
};

constexpr char kCheckpointMagic[9] = "LRCKPT01";

inline void save_checkpoint(const Checkpoint &ckpt, const std::string &path) {
  nlohmann::json header;
  header["format_version"] = 1;
  header["meta"] = ckpt.meta;
  nlohmann::json dir = nlohmann::json::array();
  for (const auto &[name, tensor] : ckpt.tensors) {
    dir.push_back({{"name", name}, {"shape", tensor.shape}});
  }
  header["tensors"] = dir;
  std::string json_bytes = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint " + path);
  out.write(kCheckpointMagic, 8);
  uint64_t len = json_bytes.size();
  out.write(reinterpret_cast<const char *>(&len), sizeof(len));
  out.write(json_bytes.data(), static_cast<std::streamsize>(json_bytes.size()));
  for (const auto &[name, tensor] : ckpt.tensors) {
    (void)name;
    out.write(reinterpret_cast<const char *>(tensor.data.data()),
              static_cast<std::streamsize>(tensor.data.size() *
                                           sizeof(double)));
  }
  if (!out) throw DataError("write failed for checkpoint " + path);
}

inline Checkpoint load_checkpoint(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kCheckpointMagic, 8) != 0) {
    throw DataError("bad checkpoint magic in " + path);
  }
  uint64_t len = 0;
  in.read(reinterpret_cast<char *>(&len), sizeof(len));
  if (!in || len > (1ULL << 32)) throw DataError("bad header length in " + path);
  std::string json_bytes(len, '\0');
  in.read(json_bytes.data(), static_cast<std::streamsize>(len));
  if (!in) throw DataError("truncated checkpoint header in " + path);
  nlohmann::json header = nlohmann::json::parse(json_bytes, nullptr, false);
  if (header.is_discarded() || header.value("format_version", 0) != 1) {
    throw DataError("unsupported checkpoint header in " + path);
  }
  Checkpoint ckpt;
  ckpt.meta = header.value("meta", nlohmann::json::object());
  for (const auto &entry : header.at("tensors")) {
    std::string name = entry.at("name").get<std::string>();
    Shape shape = entry.at("shape").get<Shape>();
    Tensor t(shape);
    in.read(reinterpret_cast<char *>(t.data.data()),
            static_cast<std::streamsize>(t.data.size() * sizeof(double)));
    if (!in) throw DataError("truncated tensor '" + name + "' in " + path);
    ckpt.tensors.emplace(std::move(name), std::move(t));
  }
  return ckpt;
}

}  // namespace latrescore

#endif  // LATRESCORE_CHECKPOINT_HPP_
