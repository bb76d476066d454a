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
#include "client.hpp"

#include <algorithm>

#include "pow.hpp"

namespace gradbroker {

std::string to_string(ClientExit exit) {
  switch (exit) {
    case ClientExit::complete: return "complete";
    case ClientExit::blacklisted: return "blacklisted";
    case ClientExit::max_local_iterations: return "max_local_iterations";
    case ClientExit::rejected: return "rejected";
    case ClientExit::transport_error: return "transport_error";
  }
  return "rejected";
}

namespace {

[[noreturn]] void raise_error(const ErrorMsg& err) {
  throw ProtocolError(err.code, err.message);
}

LabeledDataset subsample_batch(const LabeledDataset& data, int batch_size,
                               RandomSource& rng) {
  const std::size_t b =
      std::min<std::size_t>(static_cast<std::size_t>(std::max(batch_size, 1)),
                            data.size());
  LabeledDataset batch;
  batch.features.reserve(b);
  batch.labels.reserve(b);
  for (std::size_t i = 0; i < b; ++i) {
    const std::size_t idx = rng.uniform_int(data.size());
    batch.features.push_back(data.features[idx]);
    batch.labels.push_back(data.labels[idx]);
  }
  return batch;
}

}  // namespace

Admission admit_client(const std::string& model_id, int dim, int k,
                       ClientConnection& conn) {
  Message reply = conn.request(JoinMsg{model_id});
  if (const auto* err = std::get_if<ErrorMsg>(&reply)) raise_error(*err);
  const auto* puzzle_msg = std::get_if<PuzzleMsg>(&reply);
  if (puzzle_msg == nullptr) {
    throw ProtocolError(ErrorCode::malformed, "expected puzzle after join");
  }
  const Puzzle puzzle =
      puzzle_from_hex(puzzle_msg->nonce_hex, puzzle_msg->difficulty);
  const Solution solution = conn.solve_puzzle(puzzle);

  reply = conn.request(SolveMsg{model_id, solution, k, dim});
  if (const auto* err = std::get_if<ErrorMsg>(&reply)) raise_error(*err);
  const auto* ack = std::get_if<SolveAckMsg>(&reply);
  if (ack == nullptr) {
    throw ProtocolError(ErrorCode::malformed, "expected solve_ack after solve");
  }
  Admission result;
  result.client_token = ack->client_token;
  result.status = ack->status;
  result.model = ack->model;
  result.iteration = ack->iteration;
  result.admission_solution = solution;
  return result;
}

PollAckMsg poll_until_ready(const std::string& model_id,
                            const std::string& client_token,
                            ClientConnection& conn, double backoff_ms) {
  for (;;) {
    conn.sleep_ms(backoff_ms);
    Message reply = conn.request(PollMsg{model_id, client_token});
    if (const auto* err = std::get_if<ErrorMsg>(&reply)) raise_error(*err);
    const auto* ack = std::get_if<PollAckMsg>(&reply);
    if (ack == nullptr) {
      throw ProtocolError(ErrorCode::malformed, "expected poll_ack after poll");
    }
    if (ack->status != "waiting") return *ack;
  }
}

ClientResult run_honest_client(const ClientConfig& cfg, ClientConnection& conn) {
  ClientResult result;
  RandomSource rng(cfg.seed);
  try {
    const Admission admission =
        admit_client(cfg.model_id, static_cast<int>(cfg.data.dim()),
                     cfg.privacy.min_clients, conn);
    result.client_token = admission.client_token;
    ParameterVector model;
    std::int64_t iteration = 0;
    if (admission.status == "active" && admission.model.has_value()) {
      model = *admission.model;
      iteration = admission.iteration.value_or(0);
    } else {
      const PollAckMsg ready = poll_until_ready(
          cfg.model_id, admission.client_token, conn, cfg.poll_backoff_ms);
      if (!ready.model.has_value()) {
        throw ProtocolError(ErrorCode::malformed, "ready ack without model");
      }
      model = *ready.model;
      iteration = ready.iteration.value_or(0);
      if (ready.status == "complete") {
        result.exit = ClientExit::complete;
        result.last_model = model;
        result.last_iteration = iteration;
        return result;
      }
    }

    Solution solution = admission.admission_solution;
    for (;;) {
      if (cfg.max_local_iterations &&
          result.local_iterations >= *cfg.max_local_iterations) {
        result.exit = ClientExit::max_local_iterations;
        break;
      }
      if (cfg.think_ms > 0.0) conn.sleep_ms(cfg.think_ms);
      const LabeledDataset batch =
          subsample_batch(cfg.data, cfg.privacy.batch_size, rng);
      const ParameterVector delta =
          dp_delta(model, batch, cfg.hyper, cfg.privacy, iteration + 1, rng);
      Message reply = conn.request(GradientUpdateMsg{
          cfg.model_id, admission.client_token, solution, delta});

      if (const auto* ack = std::get_if<UpdateAckMsg>(&reply)) {
        model = ack->model;
        iteration = ack->iteration;
        ++result.local_iterations;
        solution = conn.solve_puzzle(
            puzzle_from_hex(ack->nonce_hex, ack->difficulty));
        continue;
      }
      const auto* err = std::get_if<ErrorMsg>(&reply);
      if (err == nullptr) {
        throw ProtocolError(ErrorCode::malformed, "unexpected update reply");
      }
      if (err->code == ErrorCode::model_complete) {
        result.exit = ClientExit::complete;
        break;
      }
      if (err->code == ErrorCode::blacklisted) {
        result.exit = ClientExit::blacklisted;
        break;
      }
      if (err->code == ErrorCode::paused_below_min ||
          err->code == ErrorCode::not_started) {
        const PollAckMsg ready = poll_until_ready(
            cfg.model_id, admission.client_token, conn, cfg.poll_backoff_ms);
        if (!ready.model.has_value()) {
          throw ProtocolError(ErrorCode::malformed, "ready ack without model");
        }
        model = *ready.model;
        iteration = ready.iteration.value_or(iteration);
        if (ready.status == "complete") {
          result.exit = ClientExit::complete;
          break;
        }
        continue;  // recompute the delta; the stored solution is still armed
      }
      raise_error(*err);
    }

    if (result.exit == ClientExit::complete) {
      // Fetch the published model.
      Message reply =
          conn.request(PollMsg{cfg.model_id, admission.client_token});
      if (const auto* ack = std::get_if<PollAckMsg>(&reply)) {
        if (ack->model.has_value()) {
          model = *ack->model;
          iteration = ack->iteration.value_or(iteration);
        }
      }
    }
    result.last_model = model;
    result.last_iteration = iteration;
    return result;
  } catch (const ProtocolError& e) {
    result.exit = ClientExit::rejected;
    result.detail = std::string(to_string(e.code())) + ": " + e.what();
    return result;
  } catch (const TransportError& e) {
    result.exit = ClientExit::transport_error;
    result.detail = e.what();
    return result;
  }
}

}  // namespace gradbroker
