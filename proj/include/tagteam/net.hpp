#pragma once

// TCP binding of the transport layer (POSIX sockets).

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <list>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "tagteam/transport.hpp"

namespace tagteam::net {

/// Serves the broker over TCP, one reader and one writer thread per
/// connection. A session that sends a malformed or reserved packet is
/// dropped; the server keeps running.
class TcpBrokerServer {
 public:
  explicit TcpBrokerServer(transport::Broker& broker);
  ~TcpBrokerServer();
  TcpBrokerServer(const TcpBrokerServer&) = delete;
  TcpBrokerServer& operator=(const TcpBrokerServer&) = delete;

  /// Binds and starts accepting. Port 0 picks an ephemeral port. Throws
  /// Error(Runtime) on bind failure.
  void start(const std::string& host, std::uint16_t port);
  void stop();
  std::uint16_t port() const noexcept { return port_; }
  std::size_t dropped_sessions() const noexcept { return dropped_.load(); }

 private:
  struct Connection;

  void accept_loop();
  void serve(std::shared_ptr<Connection> conn);
  void reap_finished();

  transport::Broker& broker_;
  int listen_fd_ = -1;
  std::uint16_t port_ = 0;
  std::atomic<bool> running_{false};
  std::atomic<std::size_t> dropped_{0};
  std::thread acceptor_;
  std::mutex conns_mutex_;
  std::list<std::shared_ptr<Connection>> conns_;
};

class TcpClient final : public transport::Client {
 public:
  /// Connects and completes the CONNECT/CONNACK handshake.
  TcpClient(const std::string& host, std::uint16_t port, std::string client_id,
            std::chrono::milliseconds timeout = std::chrono::seconds(5));
  ~TcpClient() override;
  TcpClient(const TcpClient&) = delete;
  TcpClient& operator=(const TcpClient&) = delete;

  const std::string& id() const override { return id_; }
  /// Blocks until SUBACK.
  void subscribe(const std::string& filter) override;
  void publish(const std::string& topic, std::string payload) override;
  std::vector<transport::Publish> drain() override;

  /// Blocks until at least `count` deliveries are buffered or the timeout
  /// expires; returns what was received.
  std::vector<transport::Publish> receive(std::size_t count, std::chrono::milliseconds timeout);
  void ping();
  void disconnect();

 private:
  void send(const transport::Packet& p);
  /// Reads once from the socket, waiting at most `timeout`. False on timeout.
  bool pump(std::chrono::milliseconds timeout);
  transport::Packet await_control(std::chrono::milliseconds timeout);

  std::string id_;
  int fd_ = -1;
  std::chrono::milliseconds timeout_;
  std::uint16_t next_packet_id_ = 1;
  transport::StreamDecoder decoder_;
  std::deque<transport::Publish> inbox_;
  std::deque<transport::Packet> control_;
};

}  // namespace tagteam::net
