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

#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "message.hpp"
#include "numeric.hpp"
#include "pow.hpp"
#include "random.hpp"

namespace gradbroker {

struct LearningTask {
  std::string model_id;
  int dim = 0;
  int min_clients = 1;
  int max_clients = 1;
  std::int64_t max_iterations = 1;
  LabeledDataset validation_set;
};

struct BrokerConfig {
  double validation_rate = 0.1;
  double roni_threshold = 0.02;
  int admission_difficulty = 4;
  int update_difficulty = 0;
  int difficulty_cap = 12;
  // Puzzles above this difficulty are verified at this difficulty instead,
  // while the advertised difficulty still sets the client's (virtual) cost.
  // The deterministic simulator lowers it so that penalty-inflated puzzles
  // stay solvable in real CPU time; over TCP it stays at the cap.
  int max_real_difficulty = kDefaultDifficultyCap;
  std::int64_t client_timeout = 30000;  // in clock units (ms over TCP)
  int metrics_every = 10;
  std::uint64_t seed = 1;
};

struct ClientRecord {
  std::string client_token;
  int index = -1;  // admission order, stable for metrics columns
  int difficulty = 0;
  double roni_total = 0.0;
  int k = 1;
  std::int64_t last_seen = 0;
  Puzzle outstanding_puzzle;
  bool admitted = false;
  bool blacklisted = false;
};

struct PenaltyEvent {
  std::int64_t wall_ms = 0;
  std::int64_t iteration = 0;
  std::string client_token;
  int client_index = -1;
  int new_difficulty = 0;
  bool blacklisted = false;
};

struct BrokerMetricsRow {
  std::int64_t wall_ms = 0;
  std::int64_t iteration = 0;
  double training_error = 0.0;
  double validation_error = 0.0;
  std::vector<int> difficulties;  // by admission index
};

/// Coordinator for one learning task: admits clients behind hash puzzles,
/// applies asynchronous deltas to the global model, runs disguised
/// validation rounds that score each client's influence on a held-out set,
/// and ratchets puzzle difficulty for clients whose accumulated influence
/// is negative. Thread-safe; all handlers serialize on one internal mutex.
class Broker {
 public:
  Broker(LearningTask task, BrokerConfig config);

  /// Clock used for timeouts, metrics and penalty timestamps, in
  /// milliseconds (virtual in-process, wall over TCP). Default: a counter
  /// that advances once per handled message.
  void set_clock(std::function<std::int64_t()> now_fn);

  /// Optional dataset for the training_error metrics column (typically the
  /// full training shard); validation_error always uses the task's set.
  void set_metrics_dataset(std::shared_ptr<const LabeledDataset> data);

  void set_metrics_sink(std::function<void(const BrokerMetricsRow&)> sink);

  /// Wire entry point shared by the transports: decode, dispatch, encode.
  /// conn_id ties a join to the following solve on the same connection.
  std::string handle_payload(int conn_id, const std::string& payload);

  Message handle(int conn_id, const Message& msg);

  Message handle_join(int conn_id, const JoinMsg& msg);
  Message handle_solve(int conn_id, const SolveMsg& msg);
  Message handle_poll(const PollMsg& msg);
  Message handle_gradient_update(const GradientUpdateMsg& msg);

  bool training_active() const;
  bool complete() const;
  std::int64_t iteration() const;
  ParameterVector model() const;

  /// Final model; throws std::logic_error before completion.
  ParameterVector publish_model() const;

  const LearningTask& task() const { return task_; }
  const std::vector<PenaltyEvent>& penalty_events() const { return penalties_; }

  /// Registry lookup for tests and the harness summary.
  std::optional<ClientRecord> find_client(const std::string& token) const;
  std::vector<ClientRecord> client_records() const;
  int admitted_count() const;

  /// Last known puzzle difficulty per admission index, including clients that
  /// have since expired or been blacklisted.
  std::vector<int> difficulties_by_index() const;

 private:
  struct ValidationRound {
    ParameterVector snapshot;  // model the round's responses are scored against
    double err_base = 0.0;
    std::set<std::string> to_serve;  // will receive the snapshot on next ack
    std::set<std::string> awaiting;  // received it; next update is scored
    std::int64_t started_at = 0;
  };

  std::int64_t now_locked();
  void sweep_expired_locked(std::int64_t now);
  bool training_active_locked() const;
  void maybe_close_round_locked();
  void start_round_locked(const std::string& trigger_token, std::int64_t now);
  void score_response_locked(ClientRecord& rec, const ParameterVector& delta,
                             std::int64_t now);
  void penalize_locked(ClientRecord& rec, std::int64_t now);
  void emit_metrics_locked(std::int64_t now);
  Puzzle arm_puzzle_locked(ClientRecord& rec);
  Puzzle make_puzzle_locked(int advertised_difficulty) const;
  std::string make_token_locked();
  static ErrorMsg make_error(ErrorCode code, const std::string& message);

  LearningTask task_;
  BrokerConfig config_;

  mutable std::mutex mu_;
  mutable RandomSource rng_;
  std::function<std::int64_t()> now_fn_;
  std::int64_t default_clock_ = 0;
  std::shared_ptr<const LabeledDataset> metrics_dataset_;
  std::function<void(const BrokerMetricsRow&)> metrics_sink_;

  ParameterVector w_g_;
  std::int64_t t_ = 0;
  bool complete_ = false;
  bool ever_active_ = false;

  std::map<int, ClientRecord> provisional_;       // keyed by conn_id
  std::map<std::string, ClientRecord> clients_;   // keyed by token
  int next_index_ = 0;
  std::vector<int> difficulty_by_index_;
  std::optional<ValidationRound> round_;
  std::vector<PenaltyEvent> penalties_;
  std::int64_t last_metrics_iteration_ = -1;
};

}  // namespace gradbroker
