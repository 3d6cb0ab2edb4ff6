#include "tagteam/net.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

#include "tagteam/error.hpp"

namespace tagteam::net {

using transport::Bytes;
using transport::Packet;
using transport::Publish;

namespace {

[[noreturn]] void fail(const std::string& what) {
  throw Error(ErrorKind::Runtime, what + ": " + std::strerror(errno));
}

bool send_all(int fd, const Bytes& bytes) {
  std::size_t sent = 0;
  while (sent < bytes.size()) {
    const ssize_t n = ::send(fd, bytes.data() + sent, bytes.size() - sent, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      return false;
    }
    sent += static_cast<std::size_t>(n);
  }
  return true;
}

addrinfo* resolve(const std::string& host, std::uint16_t port, bool passive) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  if (passive) hints.ai_flags = AI_PASSIVE;
  addrinfo* res = nullptr;
  const std::string service = std::to_string(port);
  const int rc = ::getaddrinfo(host.empty() ? nullptr : host.c_str(), service.c_str(), &hints, &res);
  if (rc != 0) throw Error(ErrorKind::Runtime, "resolve " + host + ": " + ::gai_strerror(rc));
  return res;
}

}  // namespace

// Outbound bytes are queued and written by a dedicated thread so a slow
// reader never stalls a dispatch that holds the broker lock.
struct TcpBrokerServer::Connection {
  int fd = -1;
  std::mutex mutex;
  std::condition_variable cv;
  std::deque<Bytes> outbox;
  bool closing = false;
  std::atomic<bool> finished{false};
  std::thread reader;
  std::thread writer;

  void enqueue(Bytes b) {
    {
      std::lock_guard lock(mutex);
      if (closing) return;
      outbox.push_back(std::move(b));
    }
    cv.notify_one();
  }

  void write_loop() {
    std::unique_lock lock(mutex);
    while (true) {
      cv.wait(lock, [&] { return closing || !outbox.empty(); });
      if (outbox.empty() && closing) {
        ::shutdown(fd, SHUT_WR);
        return;
      }
      Bytes next = std::move(outbox.front());
      outbox.pop_front();
      lock.unlock();
      const bool ok = send_all(fd, next);
      lock.lock();
      if (!ok) {
        closing = true;
        outbox.clear();
      }
    }
  }

  void shutdown() {
    {
      std::lock_guard lock(mutex);
      closing = true;
    }
    cv.notify_all();
    ::shutdown(fd, SHUT_RDWR);
  }
};

TcpBrokerServer::TcpBrokerServer(transport::Broker& broker) : broker_(broker) {}

TcpBrokerServer::~TcpBrokerServer() { stop(); }

void TcpBrokerServer::start(const std::string& host, std::uint16_t port) {
  addrinfo* res = resolve(host, port, true);
  listen_fd_ = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
  if (listen_fd_ < 0) {
    ::freeaddrinfo(res);
    fail("socket");
  }
  const int yes = 1;
  ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
  if (::bind(listen_fd_, res->ai_addr, res->ai_addrlen) < 0) {
    ::freeaddrinfo(res);
    const int saved = errno;
    ::close(listen_fd_);
    listen_fd_ = -1;
    errno = saved;
    fail("bind " + host + ":" + std::to_string(port));
  }
  ::freeaddrinfo(res);
  if (::listen(listen_fd_, 16) < 0) fail("listen");

  sockaddr_in addr{};
  socklen_t len = sizeof(addr);
  ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);

  running_ = true;
  acceptor_ = std::thread([this] { accept_loop(); });
}

void TcpBrokerServer::accept_loop() {
  while (running_) {
    pollfd pfd{listen_fd_, POLLIN, 0};
    const int rc = ::poll(&pfd, 1, 100);
    if (rc <= 0) continue;
    const int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) continue;
    const int yes = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &yes, sizeof(yes));
    auto conn = std::make_shared<Connection>();
    conn->fd = fd;
    std::lock_guard lock(conns_mutex_);
    reap_finished();
    conns_.push_back(conn);
    conn->writer = std::thread([conn] { conn->write_loop(); });
    conn->reader = std::thread([this, conn] { serve(conn); });
  }
}

void TcpBrokerServer::serve(std::shared_ptr<Connection> conn) {
  transport::BrokerSession session(broker_, [conn](Bytes b) { conn->enqueue(std::move(b)); });
  std::uint8_t buf[4096];
  while (running_) {
    const ssize_t n = ::recv(conn->fd, buf, sizeof(buf), 0);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) break;
    if (!session.on_bytes(std::span<const std::uint8_t>(buf, static_cast<std::size_t>(n)))) {
      if (!session.last_error().empty()) ++dropped_;
      break;
    }
  }
  session.close();
  // let queued bytes (e.g. a final response) drain before closing the socket
  {
    std::lock_guard lock(conn->mutex);
    conn->closing = true;
  }
  conn->cv.notify_all();
  ::shutdown(conn->fd, SHUT_RD);
  conn->finished = true;
}

// Caller holds conns_mutex_.
void TcpBrokerServer::reap_finished() {
  for (auto it = conns_.begin(); it != conns_.end();) {
    auto& c = *it;
    if (!c->finished) {
      ++it;
      continue;
    }
    c->shutdown();
    if (c->reader.joinable()) c->reader.join();
    if (c->writer.joinable()) c->writer.join();
    ::close(c->fd);
    it = conns_.erase(it);
  }
}

void TcpBrokerServer::stop() {
  if (!running_.exchange(false)) return;
  if (acceptor_.joinable()) acceptor_.join();
  std::list<std::shared_ptr<Connection>> conns;
  {
    std::lock_guard lock(conns_mutex_);
    conns.swap(conns_);
  }
  for (auto& c : conns) c->shutdown();
  for (auto& c : conns) {
    if (c->reader.joinable()) c->reader.join();
    if (c->writer.joinable()) c->writer.join();
    ::close(c->fd);
  }
  if (listen_fd_ >= 0) ::close(listen_fd_);
  listen_fd_ = -1;
}

// --- TcpClient --------------------------------------------------------------

TcpClient::TcpClient(const std::string& host, std::uint16_t port, std::string client_id,
                     std::chrono::milliseconds timeout)
    : id_(std::move(client_id)), timeout_(timeout) {
  addrinfo* res = resolve(host, port, false);
  fd_ = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
  if (fd_ < 0) {
    ::freeaddrinfo(res);
    fail("socket");
  }
  if (::connect(fd_, res->ai_addr, res->ai_addrlen) < 0) {
    ::freeaddrinfo(res);
    const int saved = errno;
    ::close(fd_);
    fd_ = -1;
    errno = saved;
    fail("connect " + host + ":" + std::to_string(port));
  }
  ::freeaddrinfo(res);
  const int yes = 1;
  ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &yes, sizeof(yes));

  send(transport::Connect{id_});
  const Packet ack = await_control(timeout_);
  if (!std::holds_alternative<transport::ConnAck>(ack)) {
    throw Error(ErrorKind::Protocol, "expected CONNACK");
  }
}

TcpClient::~TcpClient() {
  if (fd_ >= 0) {
    try {
      send(transport::Disconnect{});
    } catch (...) {
    }
    ::close(fd_);
  }
}

void TcpClient::send(const Packet& p) {
  if (fd_ < 0) throw Error(ErrorKind::Session, "client is disconnected");
  if (!send_all(fd_, transport::encode_packet(p))) fail("send");
}

bool TcpClient::pump(std::chrono::milliseconds timeout) {
  pollfd pfd{fd_, POLLIN, 0};
  const int rc = ::poll(&pfd, 1, static_cast<int>(timeout.count()));
  if (rc < 0 && errno == EINTR) return false;
  if (rc < 0) fail("poll");
  if (rc == 0) return false;
  std::uint8_t buf[4096];
  const ssize_t n = ::recv(fd_, buf, sizeof(buf), 0);
  if (n == 0) throw Error(ErrorKind::Session, "broker closed the connection");
  if (n < 0) fail("recv");
  decoder_.feed(std::span<const std::uint8_t>(buf, static_cast<std::size_t>(n)));
  while (auto p = decoder_.next()) {
    if (auto* pub = std::get_if<Publish>(&*p)) {
      inbox_.push_back(std::move(*pub));
    } else {
      control_.push_back(std::move(*p));
    }
  }
  return true;
}

Packet TcpClient::await_control(std::chrono::milliseconds timeout) {
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  while (control_.empty()) {
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
        deadline - std::chrono::steady_clock::now());
    if (left.count() <= 0) throw Error(ErrorKind::Session, "timed out waiting for broker");
    pump(left);
  }
  Packet p = std::move(control_.front());
  control_.pop_front();
  return p;
}

void TcpClient::subscribe(const std::string& filter) {
  const std::uint16_t id = next_packet_id_++;
  send(transport::Subscribe{id, filter});
  const Packet ack = await_control(timeout_);
  const auto* sub = std::get_if<transport::SubAck>(&ack);
  if (sub == nullptr || sub->packet_id != id) throw Error(ErrorKind::Protocol, "expected SUBACK");
}

void TcpClient::publish(const std::string& topic, std::string payload) {
  send(Publish{topic, std::move(payload)});
}

std::vector<Publish> TcpClient::drain() {
  while (pump(std::chrono::milliseconds(0))) {
  }
  std::vector<Publish> out(std::make_move_iterator(inbox_.begin()), std::make_move_iterator(inbox_.end()));
  inbox_.clear();
  return out;
}

std::vector<Publish> TcpClient::receive(std::size_t count, std::chrono::milliseconds timeout) {
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  while (inbox_.size() < count) {
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
        deadline - std::chrono::steady_clock::now());
    if (left.count() <= 0) break;
    pump(left);
  }
  return drain();
}

void TcpClient::ping() {
  send(transport::PingReq{});
  const Packet resp = await_control(timeout_);
  if (!std::holds_alternative<transport::PingResp>(resp)) throw Error(ErrorKind::Protocol, "expected PINGRESP");
}

void TcpClient::disconnect() {
  if (fd_ < 0) return;
  send(transport::Disconnect{});
  ::close(fd_);
  fd_ = -1;
}

}  // namespace tagteam::net
