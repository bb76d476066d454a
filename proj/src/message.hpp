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
#include <stdexcept>
#include <string>
#include <variant>

#include "numeric.hpp"

namespace gradbroker {

enum class ErrorCode {
  bad_solution,
  not_admitted,
  not_started,
  paused_below_min,
  schema_mismatch,
  model_complete,
  blacklisted,
  malformed,
};

std::string to_string(ErrorCode code);
ErrorCode error_code_from_string(const std::string& s);

class ProtocolError : public std::runtime_error {
 public:
  ProtocolError(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

// One struct per wire message type. Field names match the JSON schema.

struct CurateMsg {
  std::string model_id;
  int dim = 0;
  int min_clients = 0;
  int max_clients = 0;
  std::int64_t max_iterations = 0;
  LabeledDataset validation_set;
  bool operator==(const CurateMsg&) const = default;
};

struct CurateAckMsg {
  std::string model_id;
  std::string address;
  bool operator==(const CurateAckMsg&) const = default;
};

struct JoinMsg {
  std::string model_id;
  bool operator==(const JoinMsg&) const = default;
};

struct PuzzleMsg {
  std::string model_id;
  std::string nonce_hex;
  int difficulty = 0;
  bool operator==(const PuzzleMsg&) const = default;
};

struct SolveMsg {
  std::string model_id;
  std::string solution;
  int k = 1;
  int dim = 0;
  bool operator==(const SolveMsg&) const = default;
};

struct SolveAckMsg {
  std::string client_token;
  std::string status;  // "waiting" | "active"
  std::optional<ParameterVector> model;
  std::optional<std::int64_t> iteration;
  bool operator==(const SolveAckMsg&) const = default;
};

struct PollMsg {
  std::string model_id;
  std::string client_token;
  bool operator==(const PollMsg&) const = default;
};

struct PollAckMsg {
  std::string status;  // "waiting" | "active" | "complete"
  std::optional<ParameterVector> model;
  std::optional<std::int64_t> iteration;
  bool operator==(const PollAckMsg&) const = default;
};

struct GradientUpdateMsg {
  std::string model_id;
  std::string client_token;
  std::string solution;
  ParameterVector delta;
  bool operator==(const GradientUpdateMsg&) const = default;
};

struct UpdateAckMsg {
  ParameterVector model;
  std::int64_t iteration = 0;
  std::string nonce_hex;
  int difficulty = 0;
  bool operator==(const UpdateAckMsg&) const = default;
};

struct ErrorMsg {
  ErrorCode code = ErrorCode::malformed;
  std::string message;
  bool operator==(const ErrorMsg&) const = default;
};

using Message =
    std::variant<CurateMsg, CurateAckMsg, JoinMsg, PuzzleMsg, SolveMsg,
                 SolveAckMsg, PollMsg, PollAckMsg, GradientUpdateMsg,
                 UpdateAckMsg, ErrorMsg>;

/// Serializes a message to its JSON wire form (no framing).
std::string encode(const Message& msg);

/// Parses a JSON wire payload. Throws ProtocolError (code malformed) on
/// bad JSON, an unknown type tag, or missing/mistyped fields.
Message decode(const std::string& payload);

}  // namespace gradbroker
