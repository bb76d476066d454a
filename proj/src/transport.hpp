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

#include <cstdint>
#include <stdexcept>
#include <string>

#include "message.hpp"
#include "pow.hpp"
#include "random.hpp"

namespace gradbroker {

struct TransportConfig {
  enum class Kind { in_process, tcp };
  Kind kind = Kind::in_process;
  double latency_ms_max = 0.0;
  std::uint64_t seed = 0;
};

/// Broker-side response delay, uniform on [0, latency_ms_max]. Stands in for
/// the network indirection the protocol is designed to tolerate.
double draw_latency_ms(RandomSource& rng, double latency_ms_max);

class TransportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One logical client-to-broker connection. Implementations: the
/// deterministic in-process simulator and the TCP transport. Blocking calls
/// suspend the calling client; in the simulator "time" is virtual.
class ClientConnection {
 public:
  virtual ~ClientConnection() = default;

  /// Sends one message and blocks until the broker's reply arrives.
  virtual Message request(const Message& msg) = 0;

  virtual void sleep_ms(double ms) = 0;

  /// Produces a verified solution for the puzzle. Over TCP this grinds the
  /// full search. The simulator may grind a reduced-difficulty variant while
  /// charging the full expected cost to the virtual clock, so that high
  /// penalty difficulties throttle clients in simulated time without
  /// burning real CPU.
  virtual Solution solve_puzzle(const Puzzle& puzzle) = 0;
};

}  // namespace gradbroker
