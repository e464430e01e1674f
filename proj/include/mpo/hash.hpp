// Copyright 2026 The MPO Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace mpo {

// Reproducible 64-bit hashing and seeded randomness.
//
// stable_hash is FNV-1a (64-bit offset basis 0xcbf29ce484222325, prime
// 0x100000001b3) over the little-endian bytes of each part, with a 0x1f unit
// separator between parts, finished with the splitmix64 mixer. The result is
// identical on every platform and compiler.
class StableHasher {
 public:
  StableHasher& add(std::string_view text) {
    separator();
    for (unsigned char c : text) byte(c);
    return *this;
  }

  StableHasher& add(std::uint64_t value) {
    separator();
    for (int i = 0; i < 8; ++i) byte(static_cast<unsigned char>((value >> (8 * i)) & 0xffu));
    return *this;
  }

  std::uint64_t finish() const { return mix(state_); }

  static std::uint64_t mix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

 private:
  void byte(unsigned char c) {
    state_ ^= c;
    state_ *= 0x100000001b3ULL;
  }
  void separator() {
    if (!first_) byte(0x1f);
    first_ = false;
  }

  std::uint64_t state_ = 0xcbf29ce484222325ULL;
  bool first_ = true;
};

template <typename... Parts>
std::uint64_t stable_hash(const Parts&... parts) {
  StableHasher h;
  (h.add(parts), ...);
  return h.finish();
}

// Seed of one rollout: stable_hash(base_seed, task_id, plan_id or "none", rollout_index).
inline std::uint64_t rollout_seed(std::uint64_t base_seed, std::string_view task_id,
                                  std::string_view plan_id, std::uint64_t rollout_index) {
  return stable_hash(base_seed, task_id, plan_id.empty() ? std::string_view("none") : plan_id,
                     rollout_index);
}

// mt19937_64 is fully specified by the standard; the distributions are not,
// so draws are derived by hand.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // Uniform in [0, 1) with 53 bits of precision.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, n), n > 0. Rejection sampling avoids modulo bias.
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % n);
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return x % n;
  }

  double normal() {
    // Box-Muller, cosine branch only.
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  template <typename Container>
  void shuffle(Container& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::swap(items[i - 1], items[static_cast<std::size_t>(below(i))]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace mpo
