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
#include "tcp_transport.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>

namespace gradbroker {

namespace {

class FdByteStream : public ByteStream {
 public:
  explicit FdByteStream(int fd) : fd_(fd) {}

  void write_all(const unsigned char* data, std::size_t n) override {
    std::size_t sent = 0;
    while (sent < n) {
      const ssize_t r = ::send(fd_, data + sent, n - sent, MSG_NOSIGNAL);
      if (r < 0) {
        if (errno == EINTR) continue;
        throw TransportError(std::string("send failed: ") + std::strerror(errno));
      }
      sent += static_cast<std::size_t>(r);
    }
  }

  std::size_t read_some(unsigned char* out, std::size_t n) override {
    for (;;) {
      const ssize_t r = ::recv(fd_, out, n, 0);
      if (r < 0) {
        if (errno == EINTR) continue;
        return 0;
      }
      return static_cast<std::size_t>(r);
    }
  }

 private:
  int fd_;
};

void close_fd(int fd) {
  if (fd >= 0) ::close(fd);
}

sockaddr_in make_loopback(int port) {
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(static_cast<std::uint16_t>(port));
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  return addr;
}

}  // namespace

TcpBrokerServer::TcpBrokerServer(Broker& broker, double latency_ms_max,
                                 std::uint64_t seed)
    : broker_(broker),
      latency_ms_max_(latency_ms_max),
      latency_rng_(RandomSource(seed).derive("latency")) {}

TcpBrokerServer::~TcpBrokerServer() { stop(); }

void TcpBrokerServer::start(int port) {
  listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (listen_fd_ < 0) throw TransportError("socket() failed");
  const int one = 1;
  ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  sockaddr_in addr = make_loopback(port);
  if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
    close_fd(listen_fd_);
    listen_fd_ = -1;
    throw TransportError(std::string("bind failed: ") + std::strerror(errno));
  }
  if (::listen(listen_fd_, 64) != 0) {
    close_fd(listen_fd_);
    listen_fd_ = -1;
    throw TransportError("listen failed");
  }
  socklen_t len = sizeof(addr);
  ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);

  started_at_ = std::chrono::steady_clock::now();
  broker_.set_clock([this] {
    return std::chrono::duration_cast<std::chrono::milliseconds>(
               std::chrono::steady_clock::now() - started_at_)
        .count();
  });
  accept_thread_ = std::thread([this] { accept_loop(); });
}

std::string TcpBrokerServer::address() const {
  return "127.0.0.1:" + std::to_string(port_);
}

void TcpBrokerServer::accept_loop() {
  for (;;) {
    const int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) {
      if (errno == EINTR) continue;
      return;  // listener closed
    }
    if (stopping_.load()) {
      close_fd(fd);
      return;
    }
    std::lock_guard<std::mutex> lock(conns_mu_);
    const int conn_id = next_conn_id_++;
    open_fds_.push_back(fd);
    conn_threads_.emplace_back(
        [this, fd, conn_id] { serve_connection(fd, conn_id); });
  }
}

void TcpBrokerServer::serve_connection(int fd, int conn_id) {
  FdByteStream stream(fd);
  try {
    for (;;) {
      const std::string payload = read_frame(stream);
      if (latency_ms_max_ > 0.0) {
        double delay;
        {
          std::lock_guard<std::mutex> lock(rng_mu_);
          delay = draw_latency_ms(latency_rng_, latency_ms_max_);
        }
        std::this_thread::sleep_for(std::chrono::duration<double, std::milli>(delay));
      }
      const std::string reply = broker_.handle_payload(conn_id, payload);
      write_frame(stream, reply);
    }
  } catch (const FramingError&) {
    // client went away or sent garbage; drop the connection
  } catch (const TransportError&) {
  }
  close_fd(fd);
}

void TcpBrokerServer::stop() {
  if (listen_fd_ < 0) return;
  stopping_.store(true);
  ::shutdown(listen_fd_, SHUT_RDWR);
  close_fd(listen_fd_);
  listen_fd_ = -1;
  if (accept_thread_.joinable()) accept_thread_.join();
  std::lock_guard<std::mutex> lock(conns_mu_);
  for (int fd : open_fds_) ::shutdown(fd, SHUT_RDWR);
  for (auto& t : conn_threads_) {
    if (t.joinable()) t.join();
  }
  open_fds_.clear();
  conn_threads_.clear();
}

TcpClientConnection::TcpClientConnection(const std::string& address) {
  const auto colon = address.rfind(':');
  if (colon == std::string::npos) {
    throw TransportError("address must be host:port");
  }
  std::string host = address.substr(0, colon);
  if (host == "localhost") host = "127.0.0.1";
  const int port = std::stoi(address.substr(colon + 1));
  fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd_ < 0) throw TransportError("socket() failed");
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(static_cast<std::uint16_t>(port));
  if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
    close_fd(fd_);
    throw TransportError("unparseable host: " + host);
  }
  if (::connect(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
    close_fd(fd_);
    throw TransportError(std::string("connect failed: ") + std::strerror(errno));
  }
  const int one = 1;
  ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
  stream_ = std::make_unique<FdByteStream>(fd_);
}

TcpClientConnection::~TcpClientConnection() { close_fd(fd_); }

Message TcpClientConnection::request(const Message& msg) {
  try {
    write_frame(*stream_, encode(msg));
    return decode(read_frame(*stream_));
  } catch (const FramingError& e) {
    throw TransportError(std::string("connection lost: ") + e.what());
  }
}

void TcpClientConnection::sleep_ms(double ms) {
  if (ms < 0.0) throw std::invalid_argument("sleep_ms: negative duration");
  std::this_thread::sleep_for(std::chrono::duration<double, std::milli>(ms));
}

Solution TcpClientConnection::solve_puzzle(const Puzzle& puzzle) {
  return solve(puzzle).solution;
}

}  // namespace gradbroker
