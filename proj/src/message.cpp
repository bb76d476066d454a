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
#include "message.hpp"

#include <json.hpp>

namespace gradbroker {

using nlohmann::json;

std::string to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::bad_solution: return "bad_solution";
    case ErrorCode::not_admitted: return "not_admitted";
    case ErrorCode::not_started: return "not_started";
    case ErrorCode::paused_below_min: return "paused_below_min";
    case ErrorCode::schema_mismatch: return "schema_mismatch";
    case ErrorCode::model_complete: return "model_complete";
    case ErrorCode::blacklisted: return "blacklisted";
    case ErrorCode::malformed: return "malformed";
  }
  return "malformed";
}

ErrorCode error_code_from_string(const std::string& s) {
  if (s == "bad_solution") return ErrorCode::bad_solution;
  if (s == "not_admitted") return ErrorCode::not_admitted;
  if (s == "not_started") return ErrorCode::not_started;
  if (s == "paused_below_min") return ErrorCode::paused_below_min;
  if (s == "schema_mismatch") return ErrorCode::schema_mismatch;
  if (s == "model_complete") return ErrorCode::model_complete;
  if (s == "blacklisted") return ErrorCode::blacklisted;
  if (s == "malformed") return ErrorCode::malformed;
  throw ProtocolError(ErrorCode::malformed, "unknown error code: " + s);
}

namespace {

json dataset_to_json(const LabeledDataset& data) {
  return json{{"features", data.features}, {"labels", data.labels}};
}

LabeledDataset dataset_from_json(const json& j) {
  LabeledDataset out;
  out.features = j.at("features").get<std::vector<std::vector<double>>>();
  out.labels = j.at("labels").get<std::vector<int>>();
  if (out.features.size() != out.labels.size()) {
    throw ProtocolError(ErrorCode::malformed,
                        "validation_set rows and labels differ in count");
  }
  return out;
}

struct Encoder {
  json operator()(const CurateMsg& m) const {
    return json{{"type", "curate"},
                {"model_id", m.model_id},
                {"dim", m.dim},
                {"min_clients", m.min_clients},
                {"max_clients", m.max_clients},
                {"max_iterations", m.max_iterations},
                {"validation_set", dataset_to_json(m.validation_set)}};
  }
  json operator()(const CurateAckMsg& m) const {
    return json{{"type", "curate_ack"},
                {"model_id", m.model_id},
                {"address", m.address}};
  }
  json operator()(const JoinMsg& m) const {
    return json{{"type", "join"}, {"model_id", m.model_id}};
  }
  json operator()(const PuzzleMsg& m) const {
    return json{{"type", "puzzle"},
                {"model_id", m.model_id},
                {"nonce_hex", m.nonce_hex},
                {"difficulty", m.difficulty}};
  }
  json operator()(const SolveMsg& m) const {
    return json{{"type", "solve"},
                {"model_id", m.model_id},
                {"solution", m.solution},
                {"k", m.k},
                {"dim", m.dim}};
  }
  json operator()(const SolveAckMsg& m) const {
    json j{{"type", "solve_ack"},
           {"client_token", m.client_token},
           {"status", m.status}};
    if (m.model) j["model"] = *m.model;
    if (m.iteration) j["iteration"] = *m.iteration;
    return j;
  }
  json operator()(const PollMsg& m) const {
    return json{{"type", "poll"},
                {"model_id", m.model_id},
                {"client_token", m.client_token}};
  }
  json operator()(const PollAckMsg& m) const {
    json j{{"type", "poll_ack"}, {"status", m.status}};
    if (m.model) j["model"] = *m.model;
    if (m.iteration) j["iteration"] = *m.iteration;
    return j;
  }
  json operator()(const GradientUpdateMsg& m) const {
    return json{{"type", "gradient_update"},
                {"model_id", m.model_id},
                {"client_token", m.client_token},
                {"solution", m.solution},
                {"delta", m.delta}};
  }
  json operator()(const UpdateAckMsg& m) const {
    return json{{"type", "update_ack"},
                {"model", m.model},
                {"iteration", m.iteration},
                {"nonce_hex", m.nonce_hex},
                {"difficulty", m.difficulty}};
  }
  json operator()(const ErrorMsg& m) const {
    return json{{"type", "error"},
                {"code", to_string(m.code)},
                {"message", m.message}};
  }
};

Message decode_typed(const json& j, const std::string& type) {
  if (type == "curate") {
    CurateMsg m;
    m.model_id = j.at("model_id").get<std::string>();
    m.dim = j.at("dim").get<int>();
    m.min_clients = j.at("min_clients").get<int>();
    m.max_clients = j.at("max_clients").get<int>();
    m.max_iterations = j.at("max_iterations").get<std::int64_t>();
    m.validation_set = dataset_from_json(j.at("validation_set"));
    return m;
  }
  if (type == "curate_ack") {
    CurateAckMsg m;
    m.model_id = j.at("model_id").get<std::string>();
    m.address = j.at("address").get<std::string>();
    return m;
  }
  if (type == "join") {
    JoinMsg m;
    m.model_id = j.at("model_id").get<std::string>();
    return m;
  }
  if (type == "puzzle") {
    PuzzleMsg m;
    m.model_id = j.at("model_id").get<std::string>();
    m.nonce_hex = j.at("nonce_hex").get<std::string>();
    m.difficulty = j.at("difficulty").get<int>();
    return m;
  }
  if (type == "solve") {
    SolveMsg m;
    m.model_id = j.at("model_id").get<std::string>();
    m.solution = j.at("solution").get<std::string>();
    m.k = j.at("k").get<int>();
    m.dim = j.at("dim").get<int>();
    return m;
  }
  if (type == "solve_ack") {
    SolveAckMsg m;
    m.client_token = j.at("client_token").get<std::string>();
    m.status = j.at("status").get<std::string>();
    if (j.contains("model")) m.model = j.at("model").get<ParameterVector>();
    if (j.contains("iteration")) m.iteration = j.at("iteration").get<std::int64_t>();
    return m;
  }
  if (type == "poll") {
    PollMsg m;
    m.model_id = j.at("model_id").get<std::string>();
    m.client_token = j.at("client_token").get<std::string>();
    return m;
  }
  if (type == "poll_ack") {
    PollAckMsg m;
    m.status = j.at("status").get<std::string>();
    if (j.contains("model")) m.model = j.at("model").get<ParameterVector>();
    if (j.contains("iteration")) m.iteration = j.at("iteration").get<std::int64_t>();
    return m;
  }
  if (type == "gradient_update") {
    GradientUpdateMsg m;
    m.model_id = j.at("model_id").get<std::string>();
    m.client_token = j.at("client_token").get<std::string>();
    m.solution = j.at("solution").get<std::string>();
    m.delta = j.at("delta").get<ParameterVector>();
    return m;
  }
  if (type == "update_ack") {
    UpdateAckMsg m;
    m.model = j.at("model").get<ParameterVector>();
    m.iteration = j.at("iteration").get<std::int64_t>();
    m.nonce_hex = j.at("nonce_hex").get<std::string>();
    m.difficulty = j.at("difficulty").get<int>();
    return m;
  }
  if (type == "error") {
    ErrorMsg m;
    m.code = error_code_from_string(j.at("code").get<std::string>());
    m.message = j.at("message").get<std::string>();
    return m;
  }
  throw ProtocolError(ErrorCode::malformed, "unknown message type: " + type);
}

}  // namespace

std::string encode(const Message& msg) {
  return std::visit(Encoder{}, msg).dump();
}

Message decode(const std::string& payload) {
  json j;
  try {
    j = json::parse(payload);
  } catch (const json::exception& e) {
    throw ProtocolError(ErrorCode::malformed,
                        std::string("bad JSON: ") + e.what());
  }
  try {
    if (!j.is_object()) {
      throw ProtocolError(ErrorCode::malformed, "payload is not an object");
    }
    const std::string type = j.at("type").get<std::string>();
    return decode_typed(j, type);
  } catch (const json::exception& e) {
    throw ProtocolError(ErrorCode::malformed,
                        std::string("bad message: ") + e.what());
  }
}

}  // namespace gradbroker
