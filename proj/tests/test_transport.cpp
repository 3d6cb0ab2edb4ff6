#include <doctest.h>

#include <atomic>
#include <chrono>
#include <map>
#include <thread>

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include "generators.hpp"
#include "tagteam/error.hpp"
#include "tagteam/net.hpp"
#include "tagteam/transport.hpp"

using namespace tagteam;
using namespace tagteam::transport;

namespace {

Bytes bytes(std::initializer_list<int> xs) {
  Bytes out;
  for (int x : xs) out.push_back(static_cast<std::uint8_t>(x));
  return out;
}

std::uint32_t decode_length(const Bytes& b) {
  std::uint32_t value = 0;
  std::uint32_t mult = 1;
  for (auto byte : b) {
    value += (byte & 0x7F) * mult;
    mult *= 128;
  }
  return value;
}

}  // namespace

TEST_SUITE("transport") {
  TEST_CASE("remaining length encoding") {
    CHECK(encode_remaining_length(0) == bytes({0x00}));
    CHECK(encode_remaining_length(127) == bytes({0x7F}));
    CHECK(encode_remaining_length(321) == bytes({0xC1, 0x02}));
    CHECK(encode_remaining_length(128) == bytes({0x80, 0x01}));
    CHECK(encode_remaining_length(16383) == bytes({0xFF, 0x7F}));
    CHECK(encode_remaining_length(268'435'455) == bytes({0xFF, 0xFF, 0xFF, 0x7F}));
    CHECK_THROWS_AS(encode_remaining_length(268'435'456), Error);
    for (std::uint32_t n : {0u, 1u, 127u, 128u, 2'097'151u, 2'097'152u, 268'435'455u}) {
      CHECK(decode_length(encode_remaining_length(n)) == n);
    }
  }

  TEST_CASE("fixed header examples") {
    CHECK(encode_packet(PingReq{}) == bytes({0xC0, 0x00}));
    CHECK(encode_packet(PingResp{}) == bytes({0xD0, 0x00}));
    CHECK(encode_packet(Disconnect{}) == bytes({0xE0, 0x00}));
    CHECK(encode_packet(Publish{"a", ""}) == bytes({0x30, 0x03, 0x00, 0x01, 0x61}));
    CHECK(encode_packet(ConnAck{}) == bytes({0x20, 0x02, 0x00, 0x00}));
    CHECK(encode_packet(SubAck{0x0102}) == bytes({0x90, 0x03, 0x01, 0x02, 0x00}));
    CHECK(encode_packet(Subscribe{7, "a/#"}) == bytes({0x82, 0x08, 0x00, 0x07, 0x00, 0x03, 'a', '/', '#', 0x00}));
    CHECK(encode_packet(Connect{"c"}) ==
          bytes({0x10, 0x0D, 0x00, 0x04, 'M', 'Q', 'T', 'T', 0x04, 0x02, 0x00, 0x3C, 0x00, 0x01, 'c'}));
  }

  TEST_CASE("encode rejects invariant violations naming the field") {
    auto message_of = [](const Packet& p) {
      try {
        encode_packet(p);
      } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Encoding);
        return std::string(e.what());
      }
      return std::string();
    };
    CHECK(message_of(Publish{"", "x"}).find("topic") != std::string::npos);
    CHECK(message_of(Publish{"a/+", "x"}).find("topic") != std::string::npos);
    CHECK(message_of(Publish{"a/#", "x"}).find("topic") != std::string::npos);
    CHECK(message_of(Publish{std::string("a\0b", 3), "x"}).find("topic") != std::string::npos);
    CHECK(message_of(Publish{"a", std::string(kMaxPayload + 1, 'x')}).find("payload") != std::string::npos);
    CHECK(message_of(Subscribe{1, "a/#/b"}).find("filter") != std::string::npos);
    CHECK(message_of(Subscribe{1, "a/b+"}).find("filter") != std::string::npos);
    CHECK(message_of(Subscribe{1, ""}).find("filter") != std::string::npos);
    CHECK(message_of(Connect{"\xC3"}).find("client_id") != std::string::npos);
  }

  TEST_CASE("decode edge cases") {
    CHECK(decode_packet(bytes({})).status == DecodeStatus::NeedMore);
    CHECK(decode_packet(bytes({0xC0})).status == DecodeStatus::NeedMore);
    CHECK(decode_packet(bytes({0x30, 0x05, 0x00, 0x01})).status == DecodeStatus::NeedMore);
    CHECK(decode_packet(bytes({0xF0, 0x00})).status == DecodeStatus::ProtocolError);
    CHECK(decode_packet(bytes({0x00, 0x00})).status == DecodeStatus::ProtocolError);
    // unsupported QoS 1 publish
    CHECK(decode_packet(bytes({0x32, 0x05, 0x00, 0x01, 'a', 0x00, 0x01})).status == DecodeStatus::ProtocolError);
    // PINGREQ with flags set
    CHECK(decode_packet(bytes({0xC1, 0x00})).status == DecodeStatus::ProtocolError);
    // PUBACK is outside the subset
    CHECK(decode_packet(bytes({0x40, 0x02, 0x00, 0x01})).status == DecodeStatus::ProtocolError);
    // five-byte remaining length
    CHECK(decode_packet(bytes({0x30, 0xFF, 0xFF, 0xFF, 0xFF, 0x01})).status == DecodeStatus::ProtocolError);
    // invalid UTF-8 topic
    CHECK(decode_packet(bytes({0x30, 0x03, 0x00, 0x01, 0xFF})).status == DecodeStatus::ProtocolError);
    // wrong protocol level
    CHECK(decode_packet(bytes({0x10, 0x0D, 0x00, 0x04, 'M', 'Q', 'T', 'T', 0x05, 0x02, 0x00, 0x3C, 0x00, 0x01, 'c'}))
              .status == DecodeStatus::ProtocolError);

    const auto r = decode_packet(bytes({0xC0, 0x00, 0xE0}));
    REQUIRE(r.status == DecodeStatus::Ok);
    CHECK(r.consumed == 2);
    CHECK(std::holds_alternative<PingReq>(*r.packet));
  }

  TEST_CASE("codec round trip over generated packets") {
    testing::Gen gen(2024);
    for (int i = 0; i < 2000; ++i) {
      const Packet p = testing::random_packet(gen);
      const Bytes wire = encode_packet(p);
      const auto r = decode_packet(wire);
      REQUIRE(r.status == DecodeStatus::Ok);
      CHECK(r.consumed == wire.size());
      CHECK(*r.packet == p);
    }
  }

  TEST_CASE("stream decoder is independent of chunking") {
    testing::Gen gen(99);
    std::vector<Packet> packets;
    Bytes stream;
    for (int i = 0; i < 200; ++i) {
      packets.push_back(testing::random_packet(gen));
      const Bytes b = encode_packet(packets.back());
      stream.insert(stream.end(), b.begin(), b.end());
    }
    for (int trial = 0; trial < 20; ++trial) {
      StreamDecoder dec;
      std::vector<Packet> got;
      std::size_t pos = 0;
      while (pos < stream.size()) {
        const std::size_t n = std::min(stream.size() - pos, gen.index(trial == 0 ? 1 : 64) + 1);
        dec.feed(std::span(stream).subspan(pos, n));
        pos += n;
        while (auto p = dec.next()) got.push_back(*p);
      }
      CHECK(got == packets);
      CHECK(dec.buffered() == 0);
    }
  }

  TEST_CASE("stream decoder fails hard on a protocol error") {
    StreamDecoder dec;
    dec.feed(bytes({0xC0, 0x00, 0xF0, 0x00}));
    CHECK(dec.next().has_value());
    CHECK_THROWS_AS(dec.next(), Error);
    CHECK_THROWS_AS(dec.next(), Error);
  }

  TEST_CASE("topic matching") {
    CHECK(topic_matches("tagteam/pose", "tagteam/pose"));
    CHECK(topic_matches("tagteam/#", "tagteam/cues/left"));
    CHECK_FALSE(topic_matches("tagteam/+", "tagteam/a/b"));
    CHECK(topic_matches("tagteam/+", "tagteam/a"));
    CHECK(topic_matches("tagteam/#", "tagteam"));
    CHECK(topic_matches("+/+", "a/b"));
    CHECK_FALSE(topic_matches("tagteam/pose", "tagteam/pose/x"));
    CHECK_FALSE(topic_matches("tagteam/pose/x", "tagteam/pose"));
    CHECK(topic_matches("+", "a"));
    CHECK_FALSE(topic_matches("+", "a/b"));
    CHECK(topic_matches("a//b", "a//b"));
    CHECK(topic_matches("a/+/b", "a//b"));
  }

  TEST_CASE("multi-level wildcard alone matches every topic") {
    testing::Gen gen(7);
    for (int i = 0; i < 1000; ++i) CHECK(topic_matches("#", testing::topic_like(gen)));
  }

  TEST_CASE("broker_dispatch examples") {
    BrokerState s;
    s.sessions = {"a", "b", "pub"};
    s.subscriptions["a"] = {"tagteam/pose"};
    s.subscriptions["b"] = {"tagteam/pose"};
    CHECK(broker_dispatch(s, "pub", Publish{"tagteam/pose", "x"}).size() == 2);

    BrokerState d;
    d.sessions = {"c"};
    d.subscriptions["c"] = {"tagteam/#", "tagteam/pose"};
    const auto one = broker_dispatch(d, "c", Publish{"tagteam/pose", "x"});
    REQUIRE(one.size() == 1);
    CHECK(one[0].client_id == "c");  // self-subscribed publisher receives its own message

    BrokerState none;
    none.sessions = {"p"};
    CHECK(broker_dispatch(none, "p", Publish{"tagteam/pose", "x"}).empty());

    CHECK_THROWS_AS(broker_dispatch(none, "ghost", Publish{"tagteam/pose", "x"}), Error);
  }

  TEST_CASE("broker collapses duplicate filters and forgets disconnected clients") {
    Broker broker;
    std::vector<Publish> got;
    broker.connect("a", [&](const Publish& p) { got.push_back(p); });
    broker.subscribe("a", "x/#");
    broker.subscribe("a", "x/#");
    CHECK(broker.snapshot().subscriptions.at("a").size() == 1);
    CHECK(broker.publish("a", Publish{"x/y", "1"}) == 1);
    broker.disconnect("a");
    const auto s = broker.snapshot();
    CHECK(s.sessions.empty());
    CHECK(s.subscriptions.empty());
    CHECK_THROWS_AS(broker.subscribe("a", "x"), Error);
  }

  TEST_CASE("session takeover does not let the old session evict the new one") {
    Broker broker;
    const auto first = broker.connect("dup", nullptr);
    const auto second = broker.connect("dup", nullptr);
    CHECK(first != second);
    broker.disconnect("dup", first);
    CHECK(broker.snapshot().sessions.contains("dup"));
    broker.disconnect("dup", second);
    CHECK_FALSE(broker.snapshot().sessions.contains("dup"));
  }

  TEST_CASE("loopback fan-out preserves per-publisher order") {
    Broker broker;
    LoopbackClient p1(broker, "p1");
    LoopbackClient p2(broker, "p2");
    LoopbackClient s1(broker, "s1");
    LoopbackClient s2(broker, "s2");
    s1.subscribe("tagteam/pose");
    s2.subscribe("tagteam/#");
    for (int i = 0; i < 50; ++i) {
      p1.publish("tagteam/pose", "p1:" + std::to_string(i));
      p2.publish("tagteam/pose", "p2:" + std::to_string(i));
    }
    for (auto* sub : {&s1, &s2}) {
      const auto got = sub->drain();
      REQUIRE(got.size() == 100);
      int n1 = 0;
      int n2 = 0;
      for (const auto& p : got) {
        if (p.payload.rfind("p1:", 0) == 0) CHECK(p.payload == "p1:" + std::to_string(n1++));
        if (p.payload.rfind("p2:", 0) == 0) CHECK(p.payload == "p2:" + std::to_string(n2++));
      }
    }
    CHECK(p1.drain().empty());
  }

  TEST_CASE("reserved packet type terminates only the offending session") {
    Broker broker;
    LoopbackClient good(broker, "good");
    LoopbackClient bad(broker, "bad");
    good.subscribe("t");
    CHECK_FALSE(bad.send_raw(bytes({0xF0, 0x00})));
    CHECK_FALSE(bad.connected());
    CHECK_FALSE(broker.snapshot().sessions.contains("bad"));
    CHECK_THROWS_AS(bad.publish("t", "x"), Error);
    good.publish("t", "still here");
    CHECK(good.drain().size() == 1);
  }

  TEST_CASE("session requires CONNECT first") {
    Broker broker;
    std::vector<Bytes> written;
    BrokerSession session(broker, [&](Bytes b) { written.push_back(std::move(b)); });
    CHECK_FALSE(session.on_bytes(encode_packet(Publish{"t", "x"})));
    CHECK(session.last_error().find("CONNECT") != std::string::npos);
    CHECK(written.empty());
  }

  TEST_CASE("ping over loopback session") {
    Broker broker;
    std::vector<Packet> got;
    StreamDecoder dec;
    BrokerSession session(broker, [&](Bytes b) {
      dec.feed(b);
      while (auto p = dec.next()) got.push_back(*p);
    });
    Bytes in = encode_packet(Connect{"x"});
    const Bytes ping = encode_packet(PingReq{});
    in.insert(in.end(), ping.begin(), ping.end());
    CHECK(session.on_bytes(in));
    REQUIRE(got.size() == 2);
    CHECK(std::holds_alternative<ConnAck>(got[0]));
    CHECK(std::holds_alternative<PingResp>(got[1]));
    CHECK_FALSE(session.on_bytes(encode_packet(Disconnect{})));
    CHECK(broker.snapshot().sessions.empty());
  }
}

TEST_SUITE("net") {
  TEST_CASE("TCP broker delivers between sessions") {
    Broker broker;
    net::TcpBrokerServer server(broker);
    server.start("127.0.0.1", 0);
    REQUIRE(server.port() != 0);

    net::TcpClient sub("127.0.0.1", server.port(), "sub");
    sub.subscribe("tagteam/#");
    net::TcpClient pub("127.0.0.1", server.port(), "pub");
    pub.ping();
    for (int i = 0; i < 100; ++i) pub.publish("tagteam/pose", std::to_string(i));
    const auto got = sub.receive(100, std::chrono::seconds(5));
    REQUIRE(got.size() == 100);
    for (int i = 0; i < 100; ++i) CHECK(got[static_cast<std::size_t>(i)].payload == std::to_string(i));
    server.stop();
  }

  TEST_CASE("TCP server survives a session sending a reserved packet") {
    Broker broker;
    net::TcpBrokerServer server(broker);
    server.start("127.0.0.1", 0);
    net::TcpClient sub("127.0.0.1", server.port(), "sub");
    sub.subscribe("t");

    const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    REQUIRE(fd >= 0);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(server.port());
    ::inet_pton(AF_INET, "127.0.0.1", &addr.sin_addr);
    REQUIRE(::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) == 0);
    Bytes raw = encode_packet(Connect{"rogue"});
    raw.push_back(0xF0);
    raw.push_back(0x00);
    REQUIRE(::send(fd, raw.data(), raw.size(), 0) == static_cast<ssize_t>(raw.size()));
    std::uint8_t buf[64];
    ssize_t n = 0;
    std::size_t total = 0;
    while ((n = ::recv(fd, buf, sizeof buf, 0)) > 0) total += static_cast<std::size_t>(n);
    CHECK(total == 4);  // CONNACK, then the server closes the socket
    ::close(fd);

    for (int i = 0; i < 50 && server.dropped_sessions() == 0; ++i)
      std::this_thread::sleep_for(std::chrono::milliseconds(10));
    CHECK(server.dropped_sessions() == 1);

    net::TcpClient pub("127.0.0.1", server.port(), "pub");
    pub.publish("t", "after");
    const auto got = sub.receive(1, std::chrono::seconds(5));
    REQUIRE(got.size() == 1);
    CHECK(got[0].payload == "after");
    server.stop();
  }

  TEST_CASE("concurrent TCP publishers keep per-publisher order") {
    Broker broker;
    net::TcpBrokerServer server(broker);
    server.start("127.0.0.1", 0);
    net::TcpClient sub("127.0.0.1", server.port(), "sub");
    sub.subscribe("#");
    constexpr int kPublishers = 4;
    constexpr int kEach = 200;
    std::vector<std::thread> threads;
    for (int p = 0; p < kPublishers; ++p) {
      threads.emplace_back([&, p] {
        net::TcpClient c("127.0.0.1", server.port(), "p" + std::to_string(p));
        for (int i = 0; i < kEach; ++i) c.publish("t/" + std::to_string(p), std::to_string(i));
        c.ping();
        c.disconnect();
      });
    }
    for (auto& t : threads) t.join();
    const auto got = sub.receive(kPublishers * kEach, std::chrono::seconds(10));
    REQUIRE(got.size() == kPublishers * kEach);
    std::map<std::string, int> next;
    for (const auto& p : got) {
      CHECK(p.payload == std::to_string(next[p.topic]));
      ++next[p.topic];
    }
    server.stop();
  }

  TEST_CASE("client connect to a closed port fails") {
    Broker broker;
    net::TcpBrokerServer server(broker);
    server.start("127.0.0.1", 0);
    const auto port = server.port();
    server.stop();
    CHECK_THROWS_AS(net::TcpClient("127.0.0.1", port, "x", std::chrono::milliseconds(500)), Error);
  }
}
