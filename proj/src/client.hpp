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
#include <optional>
#include <string>

#include "numeric.hpp"
#include "privacy.hpp"
#include "transport.hpp"

namespace gradbroker {

struct ClientConfig {
  std::string model_id;
  PrivacyConfig privacy;  // epsilon, batch size, k preference
  HyperParams hyper;
  LabeledDataset data;
  std::uint64_t seed = 0;
  std::optional<std::int64_t> max_local_iterations;
  double poll_backoff_ms = 100.0;
  double think_ms = 1.0;  // charged local compute per iteration
};

enum class ClientExit {
  complete,              // broker reached its iteration budget
  blacklisted,
  max_local_iterations,
  rejected,              // fatal broker error (schema mismatch etc.)
  transport_error,
};

struct ClientResult {
  ClientExit exit = ClientExit::rejected;
  std::string client_token;
  std::int64_t local_iterations = 0;
  ParameterVector last_model;
  std::int64_t last_iteration = 0;
  std::string detail;
};

std::string to_string(ClientExit exit);

/// Admission handshake: join, grind the admission puzzle, solve.
/// Throws ProtocolError on a broker error reply.
struct Admission {
  std::string client_token;
  std::string status;  // "waiting" | "active"
  std::optional<ParameterVector> model;
  std::optional<std::int64_t> iteration;
  Solution admission_solution;  // reused for the first update
};
Admission admit_client(const std::string& model_id, int dim, int k,
                       ClientConnection& conn);

/// Polls until the task is active or complete; returns the final ack.
/// Throws ProtocolError on a broker error reply.
PollAckMsg poll_until_ready(const std::string& model_id,
                            const std::string& client_token,
                            ClientConnection& conn, double backoff_ms);

/// Full honest-client loop: admit, wait for activation, then repeatedly pull
/// the model from the last ack, subsample a batch with replacement, push the
/// privatized delta, and grind the next puzzle.
ClientResult run_honest_client(const ClientConfig& cfg, ClientConnection& conn);

}  // namespace gradbroker
