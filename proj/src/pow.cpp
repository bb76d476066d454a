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
#include "pow.hpp"

#include <openssl/evp.h>

#include <stdexcept>

namespace gradbroker {

namespace {
constexpr char kHexDigits[] = "0123456789abcdef";

int hex_value(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}
}  // namespace

std::string to_hex(const unsigned char* data, std::size_t n) {
  std::string out;
  out.reserve(2 * n);
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back(kHexDigits[data[i] >> 4]);
    out.push_back(kHexDigits[data[i] & 0xf]);
  }
  return out;
}

std::string sha256_hex(const unsigned char* data, std::size_t n) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data, n, digest, &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("sha256_hex: digest failure");
  }
  return to_hex(digest, len);
}

std::string sha256_hex(const std::string& data) {
  return sha256_hex(reinterpret_cast<const unsigned char*>(data.data()),
                    data.size());
}

Puzzle new_puzzle(RandomSource& rng, int difficulty, int cap) {
  if (difficulty < 0 || difficulty > cap) {
    throw std::invalid_argument("new_puzzle: difficulty outside [0, cap]");
  }
  Puzzle p;
  p.difficulty = difficulty;
  rng.fill_bytes(p.nonce.data(), p.nonce.size());
  return p;
}

Puzzle puzzle_from_hex(const std::string& nonce_hex, int difficulty) {
  if (nonce_hex.size() != 64) {
    throw std::invalid_argument("puzzle_from_hex: nonce must be 64 hex chars");
  }
  Puzzle p;
  p.difficulty = difficulty;
  for (std::size_t i = 0; i < 32; ++i) {
    const int hi = hex_value(nonce_hex[2 * i]);
    const int lo = hex_value(nonce_hex[2 * i + 1]);
    if (hi < 0 || lo < 0) {
      throw std::invalid_argument("puzzle_from_hex: bad hex digit");
    }
    p.nonce[i] = static_cast<unsigned char>((hi << 4) | lo);
  }
  return p;
}

bool verify(const Puzzle& puzzle, const Solution& solution) {
  if (solution.size() > kMaxSolutionBytes) return false;
  std::string input(reinterpret_cast<const char*>(puzzle.nonce.data()),
                    puzzle.nonce.size());
  input += solution;
  const std::string hex = sha256_hex(input);
  if (puzzle.difficulty <= 0) return true;
  if (static_cast<std::size_t>(puzzle.difficulty) > hex.size()) return false;
  for (std::size_t i = hex.size() - puzzle.difficulty; i < hex.size(); ++i) {
    if (hex[i] != '0') return false;
  }
  return true;
}

SolveResult solve(const Puzzle& puzzle, const std::atomic<bool>* cancel) {
  SolveResult result;
  for (std::uint64_t counter = 0;; ++counter) {
    if (cancel != nullptr && cancel->load(std::memory_order_relaxed)) {
      result.cancelled = true;
      return result;
    }
    Solution candidate = std::to_string(counter);
    ++result.attempts;
    if (verify(puzzle, candidate)) {
      result.solution = std::move(candidate);
      return result;
    }
  }
}

}  // namespace gradbroker
