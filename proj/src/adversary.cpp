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
#include "adversary.hpp"

#include <algorithm>
#include <stdexcept>
#include <thread>

#include "pow.hpp"

namespace gradbroker {

ParameterVector recover_victim_delta(const ParameterVector& m_new,
                                     const ParameterVector& m_old,
                                     const ParameterVector& own_delta) {
  if (m_new.size() != m_old.size() || m_new.size() != own_delta.size()) {
    throw std::invalid_argument("recover_victim_delta: dimension mismatch");
  }
  ParameterVector out(m_new.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = m_new[i] - m_old[i] - own_delta[i];
  }
  return out;
}

double reconstruction_error(const ParameterVector& shadow,
                            const ParameterVector& victim_optimal,
                            const LabeledDataset& test) {
  if (test.size() == 0) {
    throw std::invalid_argument("reconstruction_error: empty test set");
  }
  std::size_t disagree = 0;
  for (const auto& row : test.features) {
    if (predict(shadow, row) != predict(victim_optimal, row)) ++disagree;
  }
  return static_cast<double>(disagree) / static_cast<double>(test.size());
}

LabeledDataset make_poisoned_dataset(const LabeledDataset& data) {
  LabeledDataset out = data;
  for (int& y : out.labels) y = 1 - y;
  return out;
}

AttackerResult run_inversion_attacker(const AttackerConfig& cfg,
                                      ClientConnection& conn) {
  AttackerResult result;
  const ClientConfig& base = cfg.base;
  RandomSource rng(base.seed);
  try {
    const int dim = static_cast<int>(base.data.dim());
    const Admission admission =
        admit_client(base.model_id, dim, base.privacy.min_clients, conn);
    result.client_token = admission.client_token;
    ParameterVector model;
    std::int64_t iteration = 0;
    if (admission.status == "active" && admission.model.has_value()) {
      model = *admission.model;
      iteration = admission.iteration.value_or(0);
    } else {
      const PollAckMsg ready = poll_until_ready(
          base.model_id, admission.client_token, conn, base.poll_backoff_ms);
      if (!ready.model.has_value()) {
        throw ProtocolError(ErrorCode::malformed, "ready ack without model");
      }
      model = *ready.model;
      iteration = ready.iteration.value_or(0);
      if (ready.status == "complete") {
        result.exit = ClientExit::complete;
        result.shadow = model;
        return result;
      }
    }

    // Every delta the attacker ever observes, minus its own, belongs to the
    // other clients; their running sum on top of the first observed model is
    // the shadow model.
    result.shadow = model;
    Solution solution = admission.admission_solution;
    const ParameterVector zero(model.size(), 0.0);

    for (;;) {
      if (result.rounds_completed >= cfg.rounds) {
        result.exit = ClientExit::max_local_iterations;
        break;
      }
      if (base.think_ms > 0.0) conn.sleep_ms(base.think_ms);
      ParameterVector own_delta;
      if (cfg.send_zero_gradients) {
        own_delta = zero;
      } else {
        LabeledDataset batch;
        const std::size_t b = std::min<std::size_t>(
            static_cast<std::size_t>(std::max(base.privacy.batch_size, 1)),
            base.data.size());
        for (std::size_t i = 0; i < b; ++i) {
          const std::size_t idx = rng.uniform_int(base.data.size());
          batch.features.push_back(base.data.features[idx]);
          batch.labels.push_back(base.data.labels[idx]);
        }
        own_delta = dp_delta(model, batch, base.hyper, base.privacy,
                             iteration + 1, rng);
      }
      Message reply = conn.request(GradientUpdateMsg{
          base.model_id, admission.client_token, solution, own_delta});

      if (const auto* ack = std::get_if<UpdateAckMsg>(&reply)) {
        const ParameterVector recovered =
            recover_victim_delta(ack->model, model, own_delta);
        for (std::size_t i = 0; i < result.shadow.size(); ++i) {
          result.shadow[i] += recovered[i];
        }
        model = ack->model;
        iteration = ack->iteration;
        ++result.rounds_completed;
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
            base.model_id, admission.client_token, conn, base.poll_backoff_ms);
        if (!ready.model.has_value()) {
          throw ProtocolError(ErrorCode::malformed, "ready ack without model");
        }
        // The jump from the stale model is entirely other clients' work.
        const ParameterVector recovered =
            recover_victim_delta(*ready.model, model, zero);
        for (std::size_t i = 0; i < result.shadow.size(); ++i) {
          result.shadow[i] += recovered[i];
        }
        model = *ready.model;
        iteration = ready.iteration.value_or(iteration);
        if (ready.status == "complete") {
          result.exit = ClientExit::complete;
          break;
        }
        continue;
      }
      throw ProtocolError(err->code, err->message);
    }
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

std::vector<ClientConfig> make_sybil_configs(const ClientConfig& tmpl,
                                             int count) {
  if (count < 1) throw std::invalid_argument("sybil count must be >= 1");
  std::vector<ClientConfig> out;
  out.reserve(count);
  RandomSource base(tmpl.seed);
  for (int i = 0; i < count; ++i) {
    ClientConfig cfg = tmpl;
    cfg.seed = base.derive("sybil/" + std::to_string(i)).seed();
    out.push_back(std::move(cfg));
  }
  return out;
}

std::vector<ClientResult> run_sybil_group(
    const ClientConfig& tmpl, int count,
    const std::vector<ClientConnection*>& conns) {
  if (count < 1) throw std::invalid_argument("sybil count must be >= 1");
  if (conns.size() != static_cast<std::size_t>(count)) {
    throw std::invalid_argument("need one connection per sybil");
  }
  const std::vector<ClientConfig> configs = make_sybil_configs(tmpl, count);
  std::vector<ClientResult> results(count);
  std::vector<std::thread> threads;
  threads.reserve(count);
  for (int i = 0; i < count; ++i) {
    threads.emplace_back([&, i] {
      results[i] = run_honest_client(configs[i], *conns[i]);
    });
  }
  for (auto& t : threads) t.join();
  return results;
}

}  // namespace gradbroker
