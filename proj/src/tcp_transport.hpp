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

#include <atomic>
#include <chrono>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "broker.hpp"
#include "framing.hpp"
#include "transport.hpp"

namespace gradbroker {

/// Serves one broker over loopback TCP: one thread per connection, one
/// request-response exchange per frame, uniform response latency injection.
class TcpBrokerServer {
 public:
  TcpBrokerServer(Broker& broker, double latency_ms_max, std::uint64_t seed);
  ~TcpBrokerServer();

  TcpBrokerServer(const TcpBrokerServer&) = delete;
  TcpBrokerServer& operator=(const TcpBrokerServer&) = delete;

  /// Binds 127.0.0.1:port (0 picks an ephemeral port) and starts serving.
  void start(int port = 0);

  int port() const { return port_; }
  std::string address() const;

  /// Stops accepting, closes live connections, joins all threads.
  void stop();

 private:
  void accept_loop();
  void serve_connection(int fd, int conn_id);

  Broker& broker_;
  double latency_ms_max_;
  RandomSource latency_rng_;
  std::mutex rng_mu_;

  int listen_fd_ = -1;
  int port_ = 0;
  std::atomic<bool> stopping_{false};
  std::thread accept_thread_;
  std::mutex conns_mu_;
  std::vector<int> open_fds_;
  std::vector<std::thread> conn_threads_;
  int next_conn_id_ = 0;
  std::chrono::steady_clock::time_point started_at_;
};

/// Blocking client connection over TCP; puzzles are ground for real and
/// sleeps are wall-clock.
class TcpClientConnection : public ClientConnection {
 public:
  /// address is "host:port" with a numeric IPv4 host or "localhost".
  explicit TcpClientConnection(const std::string& address);
  ~TcpClientConnection() override;

  TcpClientConnection(const TcpClientConnection&) = delete;
  TcpClientConnection& operator=(const TcpClientConnection&) = delete;

  Message request(const Message& msg) override;
  void sleep_ms(double ms) override;
  Solution solve_puzzle(const Puzzle& puzzle) override;

 private:
  int fd_ = -1;
  std::unique_ptr<ByteStream> stream_;
};

}  // namespace gradbroker
