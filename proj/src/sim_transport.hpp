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

#include <condition_variable>
#include <functional>
#include <memory>
#include <mutex>
#include <queue>
#include <thread>
#include <vector>

#include "broker.hpp"
#include "transport.hpp"

namespace gradbroker {

struct SimConfig {
  double latency_ms_max = 0.0;
  std::uint64_t seed = 0;
  // Virtual cost model for puzzle grinding.
  double pow_ms_per_attempt = 0.001;
  // Puzzles above this difficulty are ground at this difficulty while the
  // full expected cost is charged to the virtual clock. Must match the
  // broker's max_real_difficulty.
  int max_real_difficulty = 3;
  std::int64_t max_steps = 5'000'000;  // safety stop
};

struct TranscriptEntry {
  int client_id = -1;
  enum class Dir { to_broker, to_client } dir = Dir::to_broker;
  std::int64_t step = 0;   // scheduler step at handling time
  double virtual_ms = 0.0; // virtual clock at handling time
  std::string payload;     // JSON wire form
};

/// Deterministic single-winner scheduler: client bodies run on real threads,
/// but exactly one is runnable at a time and turns are ordered by a virtual
/// clock (ties broken FIFO), so a fixed seed yields a bit-identical run.
/// Broker handling happens inline during the sender's turn; the response is
/// delivered after an injected latency delay on the virtual clock.
class SimNet {
 public:
  SimNet(Broker& broker, SimConfig config);
  ~SimNet();

  SimNet(const SimNet&) = delete;
  SimNet& operator=(const SimNet&) = delete;

  /// Registers a client body; it runs when run() is called. The returned id
  /// doubles as the broker connection id. start_ms staggers admission.
  int add_client(std::function<void(ClientConnection&)> body,
                 double start_ms = 0.0);

  /// Dispatches events until every client body returns (or the step cap).
  void run();

  std::int64_t steps() const { return steps_; }
  double now_ms() const { return now_ms_; }
  bool hit_step_limit() const { return hit_step_limit_; }
  const std::vector<TranscriptEntry>& transcript() const { return transcript_; }

  /// Rethrows the first client exception not already surfaced, if any.
  void rethrow_client_error();

 private:
  class Connection;
  friend class Connection;

  struct Event {
    double at = 0.0;
    std::uint64_t seq = 0;
    int task = -1;
    bool operator>(const Event& other) const {
      if (at != other.at) return at > other.at;
      return seq > other.seq;
    }
  };

  struct Task {
    int id = -1;
    std::function<void(ClientConnection&)> body;
    std::unique_ptr<Connection> conn;
    std::thread thread;
    double start_ms = 0.0;
    bool finished = false;
    std::exception_ptr error;
  };

  void task_main(Task& task);
  // Pushes a wake-up for the calling task and hands the token back to the
  // scheduler; returns when the token comes back. Throws on abort.
  void yield_until(int task_id, double wake_at);

  Broker& broker_;
  SimConfig config_;
  RandomSource latency_rng_;

  std::mutex mu_;
  std::condition_variable cv_;
  int running_ = -1;  // task id holding the token; -1 means the scheduler
  bool aborting_ = false;
  bool started_ = false;
  std::priority_queue<Event, std::vector<Event>, std::greater<Event>> events_;
  std::uint64_t next_seq_ = 0;
  double now_ms_ = 0.0;
  std::int64_t steps_ = 0;
  bool hit_step_limit_ = false;
  std::vector<std::unique_ptr<Task>> tasks_;
  std::vector<TranscriptEntry> transcript_;
};

}  // namespace gradbroker
