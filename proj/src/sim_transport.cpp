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
#include "sim_transport.hpp"

#include <cmath>

namespace gradbroker {

class SimNet::Connection : public ClientConnection {
 public:
  Connection(SimNet& net, int id) : net_(net), id_(id) {}

  Message request(const Message& msg) override {
    const std::string payload = encode(msg);
    double latency;
    std::string reply;
    {
      std::lock_guard<std::mutex> lock(net_.mu_);
      net_.transcript_.push_back(TranscriptEntry{
          id_, TranscriptEntry::Dir::to_broker, net_.steps_, net_.now_ms_,
          payload});
    }
    reply = net_.broker_.handle_payload(id_, payload);
    {
      std::lock_guard<std::mutex> lock(net_.mu_);
      net_.transcript_.push_back(TranscriptEntry{
          id_, TranscriptEntry::Dir::to_client, net_.steps_, net_.now_ms_,
          reply});
      latency = draw_latency_ms(net_.latency_rng_, net_.config_.latency_ms_max);
    }
    net_.yield_until(id_, net_.now_ms_ + latency);
    return decode(reply);
  }

  void sleep_ms(double ms) override {
    if (ms < 0.0) throw std::invalid_argument("sleep_ms: negative duration");
    net_.yield_until(id_, net_.now_ms_ + ms);
  }

  Solution solve_puzzle(const Puzzle& puzzle) override {
    const int effective =
        std::min(puzzle.difficulty, net_.config_.max_real_difficulty);
    Puzzle ground = puzzle;
    ground.difficulty = effective;
    const SolveResult result = solve(ground);
    const double scale =
        std::pow(16.0, static_cast<double>(puzzle.difficulty - effective));
    const double charge_ms = static_cast<double>(result.attempts) * scale *
                             net_.config_.pow_ms_per_attempt;
    net_.yield_until(id_, net_.now_ms_ + charge_ms);
    return result.solution;
  }

 private:
  SimNet& net_;
  int id_;
};

SimNet::SimNet(Broker& broker, SimConfig config)
    : broker_(broker),
      config_(config),
      latency_rng_(RandomSource(config.seed).derive("latency")) {
  broker_.set_clock(
      [this] { return static_cast<std::int64_t>(std::llround(now_ms_)); });
}

SimNet::~SimNet() {
  if (started_) {
    for (auto& task : tasks_) {
      if (task->thread.joinable()) task->thread.join();
    }
  }
}

int SimNet::add_client(std::function<void(ClientConnection&)> body,
                       double start_ms) {
  if (started_) throw std::logic_error("add_client after run");
  const int id = static_cast<int>(tasks_.size());
  auto task = std::make_unique<Task>();
  task->id = id;
  task->body = std::move(body);
  task->start_ms = start_ms;
  task->conn = std::make_unique<Connection>(*this, id);
  tasks_.push_back(std::move(task));
  return id;
}

void SimNet::run() {
  if (started_) throw std::logic_error("run called twice");
  started_ = true;

  std::unique_lock<std::mutex> lock(mu_);
  for (auto& task : tasks_) {
    events_.push(Event{task->start_ms, next_seq_++, task->id});
    Task* raw = task.get();
    task->thread = std::thread([this, raw] { task_main(*raw); });
  }

  while (!events_.empty()) {
    if (steps_ >= config_.max_steps && !aborting_) {
      aborting_ = true;
      hit_step_limit_ = true;
    }
    const Event ev = events_.top();
    events_.pop();
    Task& task = *tasks_[ev.task];
    if (task.finished) continue;
    if (ev.at > now_ms_) now_ms_ = ev.at;
    ++steps_;
    running_ = ev.task;
    cv_.notify_all();
    cv_.wait(lock, [this] { return running_ == -1; });
  }
  lock.unlock();

  for (auto& task : tasks_) {
    if (task->thread.joinable()) task->thread.join();
  }
}

void SimNet::task_main(Task& task) {
  {
    std::unique_lock<std::mutex> lock(mu_);
    cv_.wait(lock, [this, &task] { return running_ == task.id; });
  }
  try {
    task.body(*task.conn);
  } catch (...) {
    task.error = std::current_exception();
  }
  {
    std::lock_guard<std::mutex> lock(mu_);
    task.finished = true;
    running_ = -1;
  }
  cv_.notify_all();
}

void SimNet::yield_until(int task_id, double wake_at) {
  std::unique_lock<std::mutex> lock(mu_);
  events_.push(Event{wake_at, next_seq_++, task_id});
  running_ = -1;
  cv_.notify_all();
  cv_.wait(lock, [this, task_id] { return running_ == task_id; });
  if (aborting_) {
    throw TransportError("simulation aborted: step limit reached");
  }
}

void SimNet::rethrow_client_error() {
  for (auto& task : tasks_) {
    if (task->error) std::rethrow_exception(task->error);
  }
}

}  // namespace gradbroker
