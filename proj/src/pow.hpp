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

#include <array>
#include <atomic>
#include <cstdint>
#include <string>

#include "random.hpp"

namespace gradbroker {

inline constexpr int kDefaultDifficultyCap = 12;
inline constexpr std::size_t kMaxSolutionBytes = 64;

std::string to_hex(const unsigned char* data, std::size_t n);
std::string sha256_hex(const unsigned char* data, std::size_t n);
std::string sha256_hex(const std::string& data);

/// Hash challenge: an accepted solution s must give hex(SHA-256(nonce || s))
/// with at least `difficulty` trailing '0' characters.
struct Puzzle {
  std::array<unsigned char, 32> nonce{};
  int difficulty = 0;

  std::string nonce_hex() const { return to_hex(nonce.data(), nonce.size()); }
};

/// Raw solution bytes, at most kMaxSolutionBytes long.
using Solution = std::string;

Puzzle new_puzzle(RandomSource& rng, int difficulty,
                  int cap = kDefaultDifficultyCap);

/// Builds a Puzzle from a 64-char lowercase hex nonce (wire form).
Puzzle puzzle_from_hex(const std::string& nonce_hex, int difficulty);

struct SolveResult {
  Solution solution;
  std::uint64_t attempts = 0;
  bool cancelled = false;
};

/// Searches candidate solutions "0", "1", "2", ... (ASCII decimal counter)
/// until verify succeeds. Expected attempts = 16^difficulty. A non-null
/// cancel flag aborts the search between candidates.
SolveResult solve(const Puzzle& puzzle,
                  const std::atomic<bool>* cancel = nullptr);

bool verify(const Puzzle& puzzle, const Solution& solution);

}  // namespace gradbroker
