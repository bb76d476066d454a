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
#include "broker.hpp"

#include <algorithm>
#include <cmath>

namespace gradbroker {

namespace {

bool all_finite(const ParameterVector& v) {
  for (double x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

}  // namespace

Broker::Broker(LearningTask task, BrokerConfig config)
    : task_(std::move(task)), config_(config), rng_(config.seed) {
  if (task_.dim < 1) throw std::invalid_argument("task dim must be >= 1");
  if (task_.min_clients < 1) throw std::invalid_argument("min_clients must be >= 1");
  if (task_.min_clients > task_.max_clients) {
    throw std::invalid_argument("min_clients must be <= max_clients");
  }
  if (task_.max_iterations < 1) {
    throw std::invalid_argument("max_iterations must be >= 1");
  }
  if (task_.validation_set.size() == 0) {
    throw std::invalid_argument("validation set must be non-empty");
  }
  if (task_.validation_set.dim() != static_cast<std::size_t>(task_.dim)) {
    throw std::invalid_argument("validation set dimension must match task dim");
  }
  for (int y : task_.validation_set.labels) {
    if (y != 0 && y != 1) throw std::invalid_argument("validation labels must be 0/1");
  }
  if (config_.validation_rate < 0.0 || config_.validation_rate > 1.0) {
    throw std::invalid_argument("validation_rate must be in [0,1]");
  }
  if (config_.roni_threshold < 0.0) {
    throw std::invalid_argument("roni_threshold must be >= 0");
  }
  if (config_.difficulty_cap < 0) throw std::invalid_argument("difficulty_cap must be >= 0");
  if (config_.admission_difficulty < 0 ||
      config_.admission_difficulty > config_.difficulty_cap) {
    throw std::invalid_argument("admission_difficulty outside [0, cap]");
  }
  if (config_.update_difficulty < 0 ||
      config_.update_difficulty > config_.difficulty_cap) {
    throw std::invalid_argument("update_difficulty outside [0, cap]");
  }
  if (config_.max_real_difficulty < 0) {
    throw std::invalid_argument("max_real_difficulty must be >= 0");
  }
  if (config_.metrics_every < 1) {
    throw std::invalid_argument("metrics_every must be >= 1");
  }
  w_g_.assign(task_.dim, 0.0);
}

void Broker::set_clock(std::function<std::int64_t()> now_fn) {
  std::lock_guard<std::mutex> lock(mu_);
  now_fn_ = std::move(now_fn);
}

void Broker::set_metrics_dataset(std::shared_ptr<const LabeledDataset> data) {
  std::lock_guard<std::mutex> lock(mu_);
  metrics_dataset_ = std::move(data);
}

void Broker::set_metrics_sink(std::function<void(const BrokerMetricsRow&)> sink) {
  std::lock_guard<std::mutex> lock(mu_);
  metrics_sink_ = std::move(sink);
}

std::int64_t Broker::now_locked() {
  if (now_fn_) return now_fn_();
  return default_clock_++;
}

ErrorMsg Broker::make_error(ErrorCode code, const std::string& message) {
  return ErrorMsg{code, message};
}

std::string Broker::handle_payload(int conn_id, const std::string& payload) {
  Message request;
  try {
    request = decode(payload);
  } catch (const ProtocolError& e) {
    return encode(Message{make_error(e.code(), e.what())});
  }
  return encode(handle(conn_id, request));
}

Message Broker::handle(int conn_id, const Message& msg) {
  try {
    if (const auto* m = std::get_if<JoinMsg>(&msg)) return handle_join(conn_id, *m);
    if (const auto* m = std::get_if<SolveMsg>(&msg)) return handle_solve(conn_id, *m);
    if (const auto* m = std::get_if<PollMsg>(&msg)) return handle_poll(*m);
    if (const auto* m = std::get_if<GradientUpdateMsg>(&msg)) {
      return handle_gradient_update(*m);
    }
    return make_error(ErrorCode::malformed, "unsupported message type");
  } catch (const ProtocolError& e) {
    return make_error(e.code(), e.what());
  } catch (const std::exception& e) {
    return make_error(ErrorCode::malformed, e.what());
  }
}

Message Broker::handle_join(int conn_id, const JoinMsg& msg) {
  std::lock_guard<std::mutex> lock(mu_);
  const std::int64_t now = now_locked();
  sweep_expired_locked(now);
  if (msg.model_id != task_.model_id) {
    return make_error(ErrorCode::malformed, "unknown model_id");
  }
  if (complete_) return make_error(ErrorCode::model_complete, "model complete");
  int occupied = static_cast<int>(clients_.size());
  for (const auto& [id, rec] : provisional_) {
    if (id != conn_id) ++occupied;
  }
  if (occupied >= task_.max_clients) {
    return make_error(ErrorCode::not_admitted, "max clients reached");
  }
  ClientRecord rec;
  rec.outstanding_puzzle = make_puzzle_locked(config_.admission_difficulty);
  rec.last_seen = now;
  provisional_[conn_id] = rec;
  return PuzzleMsg{task_.model_id, rec.outstanding_puzzle.nonce_hex(),
                   config_.admission_difficulty};
}

Message Broker::handle_solve(int conn_id, const SolveMsg& msg) {
  std::lock_guard<std::mutex> lock(mu_);
  const std::int64_t now = now_locked();
  sweep_expired_locked(now);
  if (msg.model_id != task_.model_id) {
    return make_error(ErrorCode::malformed, "unknown model_id");
  }
  if (complete_) return make_error(ErrorCode::model_complete, "model complete");
  auto it = provisional_.find(conn_id);
  if (it == provisional_.end()) {
    return make_error(ErrorCode::not_admitted, "no outstanding admission puzzle");
  }
  it->second.last_seen = now;
  if (msg.dim != task_.dim) {
    provisional_.erase(it);
    return make_error(ErrorCode::schema_mismatch,
                      "feature count does not match the task schema");
  }
  if (msg.k < 1) return make_error(ErrorCode::malformed, "k must be >= 1");
  if (!verify(it->second.outstanding_puzzle, msg.solution)) {
    return make_error(ErrorCode::bad_solution, "admission solution rejected");
  }
  ClientRecord rec = std::move(it->second);
  provisional_.erase(it);
  rec.client_token = make_token_locked();
  rec.admitted = true;
  rec.index = next_index_++;
  rec.difficulty = config_.update_difficulty;
  rec.k = msg.k;
  rec.roni_total = 0.0;
  rec.last_seen = now;
  difficulty_by_index_.push_back(rec.difficulty);
  const std::string token = rec.client_token;
  clients_[token] = std::move(rec);

  SolveAckMsg ack;
  ack.client_token = token;
  if (training_active_locked()) {
    ever_active_ = true;
    ack.status = "active";
    ack.model = w_g_;
    ack.iteration = t_;
  } else {
    ack.status = "waiting";
  }
  return ack;
}

Message Broker::handle_poll(const PollMsg& msg) {
  std::lock_guard<std::mutex> lock(mu_);
  const std::int64_t now = now_locked();
  sweep_expired_locked(now);
  if (msg.model_id != task_.model_id) {
    return make_error(ErrorCode::malformed, "unknown model_id");
  }
  auto it = clients_.find(msg.client_token);
  if (it == clients_.end()) {
    return make_error(ErrorCode::not_admitted, "unknown client token");
  }
  ClientRecord& rec = it->second;
  rec.last_seen = now;
  PollAckMsg ack;
  if (complete_) {
    ack.status = "complete";
    ack.model = w_g_;
    ack.iteration = t_;
    return ack;
  }
  if (!training_active_locked()) {
    ack.status = "waiting";
    return ack;
  }
  ever_active_ = true;
  ack.status = "active";
  ack.iteration = t_;
  ack.model = w_g_;
  if (round_) {
    if (round_->to_serve.erase(msg.client_token) > 0) {
      round_->awaiting.insert(msg.client_token);
      ack.model = round_->snapshot;
    } else if (round_->awaiting.count(msg.client_token) > 0) {
      ack.model = round_->snapshot;
    }
  }
  return ack;
}

Message Broker::handle_gradient_update(const GradientUpdateMsg& msg) {
  std::lock_guard<std::mutex> lock(mu_);
  const std::int64_t now = now_locked();
  sweep_expired_locked(now);
  if (msg.model_id != task_.model_id) {
    return make_error(ErrorCode::malformed, "unknown model_id");
  }
  auto it = clients_.find(msg.client_token);
  if (it == clients_.end()) {
    return make_error(ErrorCode::not_admitted, "unknown client token");
  }
  ClientRecord& rec = it->second;
  rec.last_seen = now;
  if (complete_) return make_error(ErrorCode::model_complete, "model complete");
  if (rec.blacklisted) {
    return make_error(ErrorCode::blacklisted, "client is blacklisted");
  }
  if (msg.delta.size() != static_cast<std::size_t>(task_.dim)) {
    return make_error(ErrorCode::schema_mismatch, "delta length does not match dim");
  }
  if (!all_finite(msg.delta)) {
    return make_error(ErrorCode::malformed, "delta has non-finite entries");
  }
  if (!training_active_locked()) {
    if (ever_active_) {
      return make_error(ErrorCode::paused_below_min,
                        "training paused: below client minimum");
    }
    return make_error(ErrorCode::not_started, "training has not started");
  }
  ever_active_ = true;
  if (!verify(rec.outstanding_puzzle, msg.solution)) {
    return make_error(ErrorCode::bad_solution, "puzzle solution rejected");
  }

  const bool is_validation_response =
      round_.has_value() && round_->awaiting.count(msg.client_token) > 0;

  for (std::size_t i = 0; i < w_g_.size(); ++i) w_g_[i] += msg.delta[i];
  ++t_;

  if (is_validation_response) {
    score_response_locked(rec, msg.delta, now);
  }

  if (t_ % config_.metrics_every == 0 || t_ >= task_.max_iterations) {
    emit_metrics_locked(now);
  }

  if (t_ >= task_.max_iterations) {
    complete_ = true;
    round_.reset();
  } else if (!round_ && config_.validation_rate > 0.0 &&
             rng_.uniform() < config_.validation_rate) {
    start_round_locked(msg.client_token, now);
  }

  UpdateAckMsg ack;
  ack.model = w_g_;
  if (round_) {
    if (round_->to_serve.erase(msg.client_token) > 0) {
      round_->awaiting.insert(msg.client_token);
      ack.model = round_->snapshot;
    } else if (round_->awaiting.count(msg.client_token) > 0) {
      ack.model = round_->snapshot;
    }
  }
  ack.iteration = t_;
  const Puzzle next = arm_puzzle_locked(rec);
  ack.nonce_hex = next.nonce_hex();
  ack.difficulty = rec.difficulty;
  return ack;
}

bool Broker::training_active_locked() const {
  int n = 0;
  int max_k = 0;
  for (const auto& [token, rec] : clients_) {
    if (rec.blacklisted) continue;
    ++n;
    max_k = std::max(max_k, rec.k);
  }
  if (n == 0) return false;
  return n >= task_.min_clients && n >= max_k;
}

void Broker::sweep_expired_locked(std::int64_t now) {
  if (config_.client_timeout > 0) {
    for (auto it = clients_.begin(); it != clients_.end();) {
      if (now - it->second.last_seen > config_.client_timeout) {
        if (round_) {
          round_->to_serve.erase(it->first);
          round_->awaiting.erase(it->first);
        }
        it = clients_.erase(it);
      } else {
        ++it;
      }
    }
    for (auto it = provisional_.begin(); it != provisional_.end();) {
      if (now - it->second.last_seen > config_.client_timeout) {
        it = provisional_.erase(it);
      } else {
        ++it;
      }
    }
  }
  maybe_close_round_locked();
  if (round_ && config_.client_timeout > 0 &&
      now - round_->started_at > config_.client_timeout) {
    round_.reset();
  }
}

void Broker::maybe_close_round_locked() {
  if (round_ && round_->to_serve.empty() && round_->awaiting.empty()) {
    round_.reset();
  }
}

void Broker::start_round_locked(const std::string& trigger_token,
                                std::int64_t now) {
  ValidationRound round;
  round.snapshot = w_g_;
  round.err_base = classification_error(w_g_, task_.validation_set);
  round.started_at = now;
  for (const auto& [token, rec] : clients_) {
    if (rec.blacklisted || token == trigger_token) continue;
    round.to_serve.insert(token);
  }
  // The triggering ack already serves the snapshot (equal to the live model
  // at this instant), so the trigger skips straight to the scored stage.
  round.awaiting.insert(trigger_token);
  round_ = std::move(round);
}

void Broker::score_response_locked(ClientRecord& rec,
                                   const ParameterVector& delta,
                                   std::int64_t now) {
  ParameterVector probe = round_->snapshot;
  for (std::size_t i = 0; i < probe.size(); ++i) probe[i] += delta[i];
  const double r_c =
      round_->err_base - classification_error(probe, task_.validation_set);
  rec.roni_total += r_c;
  round_->awaiting.erase(rec.client_token);
  if (rec.roni_total < -config_.roni_threshold) {
    penalize_locked(rec, now);
  }
  maybe_close_round_locked();
}

void Broker::penalize_locked(ClientRecord& rec, std::int64_t now) {
  rec.difficulty += 1;
  rec.roni_total = 0.0;
  if (rec.difficulty >= config_.difficulty_cap) {
    rec.difficulty = config_.difficulty_cap;
    rec.blacklisted = true;
  }
  difficulty_by_index_[rec.index] = rec.difficulty;
  penalties_.push_back(PenaltyEvent{now, t_, rec.client_token, rec.index,
                                    rec.difficulty, rec.blacklisted});
}

void Broker::emit_metrics_locked(std::int64_t now) {
  if (!metrics_sink_ || t_ == last_metrics_iteration_) return;
  BrokerMetricsRow row;
  row.wall_ms = now;
  row.iteration = t_;
  row.validation_error = classification_error(w_g_, task_.validation_set);
  row.training_error = metrics_dataset_
                           ? classification_error(w_g_, *metrics_dataset_)
                           : row.validation_error;
  row.difficulties = difficulty_by_index_;
  last_metrics_iteration_ = t_;
  metrics_sink_(row);
}

Puzzle Broker::arm_puzzle_locked(ClientRecord& rec) {
  rec.outstanding_puzzle = make_puzzle_locked(rec.difficulty);
  return rec.outstanding_puzzle;
}

Puzzle Broker::make_puzzle_locked(int advertised_difficulty) const {
  const int effective =
      std::min(advertised_difficulty, config_.max_real_difficulty);
  return new_puzzle(rng_, effective, config_.difficulty_cap);
}

std::string Broker::make_token_locked() {
  unsigned char raw[8];
  rng_.fill_bytes(raw, sizeof(raw));
  return "c" + std::to_string(next_index_) + "-" + to_hex(raw, sizeof(raw));
}

bool Broker::training_active() const {
  std::lock_guard<std::mutex> lock(mu_);
  return training_active_locked();
}

bool Broker::complete() const {
  std::lock_guard<std::mutex> lock(mu_);
  return complete_;
}

std::int64_t Broker::iteration() const {
  std::lock_guard<std::mutex> lock(mu_);
  return t_;
}

ParameterVector Broker::model() const {
  std::lock_guard<std::mutex> lock(mu_);
  return w_g_;
}

ParameterVector Broker::publish_model() const {
  std::lock_guard<std::mutex> lock(mu_);
  if (!complete_) throw std::logic_error("model is not complete");
  return w_g_;
}

std::optional<ClientRecord> Broker::find_client(const std::string& token) const {
  std::lock_guard<std::mutex> lock(mu_);
  auto it = clients_.find(token);
  if (it == clients_.end()) return std::nullopt;
  return it->second;
}

std::vector<ClientRecord> Broker::client_records() const {
  std::lock_guard<std::mutex> lock(mu_);
  std::vector<ClientRecord> out;
  out.reserve(clients_.size());
  for (const auto& [token, rec] : clients_) out.push_back(rec);
  std::sort(out.begin(), out.end(),
            [](const ClientRecord& a, const ClientRecord& b) {
              return a.index < b.index;
            });
  return out;
}

int Broker::admitted_count() const {
  std::lock_guard<std::mutex> lock(mu_);
  return static_cast<int>(clients_.size());
}

std::vector<int> Broker::difficulties_by_index() const {
  std::lock_guard<std::mutex> lock(mu_);
  return difficulty_by_index_;
}

}  // namespace gradbroker
