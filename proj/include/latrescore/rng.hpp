// latrescore/rng.hpp

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

#ifndef LATRESCORE_RNG_HPP_
#define LATRESCORE_RNG_HPP_

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "latrescore/error.hpp"

namespace latrescore {

// Splitmix64 finalizer. Bijective over 64-bit integers.
inline uint64_t mix64(uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline uint64_t hash_combine(uint64_t a, uint64_t b) {
  return mix64(a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2)));
}

// FNV-1a over bytes, then mixed. Used to derive per-utterance seeds.
inline uint64_t hash_string(const std::string &s) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return mix64(h);
}

inline uint64_t derive_seed(uint64_t global_seed, const std::string &name) {
  return hash_combine(global_seed, hash_string(name));
}

// Deterministic splitmix64 stream. The seed is scrambled once so that
// nearby integer seeds start far apart in the counter domain; without
// this, Rng(s+1) would replay Rng(s) shifted by one draw.
class Rng {
 public:
  explicit Rng(uint64_t seed = 0) : state_(mix64(seed ^ 0x5851f42d4c957f2dULL)) {}

  uint64_t next_u64() { return mix64(state_++); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return (next_u64() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, n). n must be > 0.
  uint64_t uniform_int(uint64_t n) {
    // Rejection sampling to avoid modulo bias.
    uint64_t threshold = (0ULL - n) % n;
    for (;;) {
      uint64_t r = next_u64();
      if (r >= threshold) return r % n;
    }
  }

  // Standard normal via Box-Muller. Unbuffered: one draw per two uniforms.
  double gaussian() {
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  // Index sample from unnormalized non-negative weights.
  size_t categorical(const std::vector<double> &weights) {
    double total = 0.0;
    for (double w : weights) total += w;
    if (!(total > 0.0)) throw Error("categorical: weights sum to zero");
    double r = uniform() * total;
    double acc = 0.0;
    for (size_t i = 0; i < weights.size(); ++i) {
      acc += weights[i];
      if (r < acc) return i;
    }
    return weights.size() - 1;
  }

  // Gamma(alpha, 1) via Marsaglia-Tsang; alpha < 1 handled by boosting.
  double gamma(double alpha) {
    if (!(alpha > 0.0)) throw Error("gamma: alpha must be positive");
    if (alpha < 1.0) {
      double u = uniform();
      while (u <= 0.0) u = uniform();
      return gamma(alpha + 1.0) * std::pow(u, 1.0 / alpha);
    }
    double d = alpha - 1.0 / 3.0;
    double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x = gaussian();
      double v = 1.0 + c * x;
      if (v <= 0.0) continue;
      v = v * v * v;
      double u = uniform();
      while (u <= 0.0) u = uniform();
      if (std::log(u) < 0.5 * x * x + d - d * v + d * std::log(v)) {
        return d * v;
      }
    }
  }

  // Dirichlet(concentration * mean) draw; returns a normalized vector.
  std::vector<double> dirichlet(const std::vector<double> &mean,
                                double concentration) {
    std::vector<double> out(mean.size());
    double total = 0.0;
    for (size_t i = 0; i < mean.size(); ++i) {
      double a = mean[i] * concentration;
      out[i] = a > 0.0 ? gamma(a) : 0.0;
      total += out[i];
    }
    if (total <= 0.0) return mean;
    for (double &v : out) v /= total;
    return out;
  }

  // Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::vector<T> &v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = uniform_int(i);
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  uint64_t state_;
};

// Counter-based stream: value(i) is a pure function of (key, i). Used for
// dropout masks keyed on (seed, layer id, step) so replays are exact.
class CounterRng {
 public:
  explicit CounterRng(uint64_t key) : key_(key) {}

  double uniform(uint64_t index) const {
    return (mix64(key_ + index * 0x9e3779b97f4a7c15ULL) >> 11) * 0x1.0p-53;
  }

 private:
  uint64_t key_;
};

}  // namespace latrescore

#endif  // LATRESCORE_RNG_HPP_
