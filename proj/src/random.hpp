//
// Copyright 2026 The gradbroker Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//
#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string_view>

namespace gradbroker {

/// Seeded random source with samplers pinned by this codebase rather than by
/// the standard library's implementation-defined distributions, so that a
/// given seed produces the same byte-for-byte stream on every build.
class RandomSource {
 public:
  explicit RandomSource(std::uint64_t seed);

  std::uint64_t next_u64();

  /// Uniform double in [0, 1), 53 bits of precision.
  double uniform();

  /// Uniform double in [lo, hi).
  double uniform_range(double lo, double hi);

  /// Uniform integer in [0, bound). bound must be > 0.
  std::uint64_t uniform_int(std::uint64_t bound);

  /// Standard normal via Box-Muller.
  double normal();

  /// Gamma(shape, scale) via Marsaglia-Tsang; requires shape >= 1.
  double gamma(double shape, double scale);

  void fill_bytes(unsigned char* out, std::size_t n);

  /// Independent child stream derived from the original seed and a label.
  /// Stable under reordering of draws on the parent.
  RandomSource derive(std::string_view label) const;

  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

/// splitmix64 step; used for seed derivation.
std::uint64_t splitmix64(std::uint64_t x);

}  // namespace gradbroker
