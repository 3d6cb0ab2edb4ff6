#include "tagteam/transport.hpp"

#include <algorithm>
#include <utility>

#include "tagteam/error.hpp"

namespace tagteam::transport {

namespace {

enum PacketType : std::uint8_t {
  kConnect = 1,
  kConnAck = 2,
  kPublish = 3,
  kSubscribe = 8,
  kSubAck = 9,
  kPingReq = 12,
  kPingResp = 13,
  kDisconnect = 14,
};

constexpr std::uint8_t kProtocolLevel = 4;
constexpr std::uint16_t kKeepAlive = 60;
constexpr std::uint8_t kCleanSession = 0x02;

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

void put_u16(Bytes& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v & 0xFF));
}

void put_string(Bytes& out, std::string_view s) {
  put_u16(out, static_cast<std::uint16_t>(s.size()));
  out.insert(out.end(), s.begin(), s.end());
}

void check_string(std::string_view s, const char* field) {
  if (s.size() > 0xFFFF) throw Error(ErrorKind::Encoding, std::string(field) + ": longer than 65535 bytes");
  if (!is_valid_utf8(s)) throw Error(ErrorKind::Encoding, std::string(field) + ": not valid UTF-8");
  if (s.find('\0') != std::string_view::npos) {
    throw Error(ErrorKind::Encoding, std::string(field) + ": contains NUL");
  }
}

Bytes frame(std::uint8_t header, const Bytes& body) {
  Bytes out;
  out.reserve(body.size() + 5);
  out.push_back(header);
  const Bytes len = encode_remaining_length(static_cast<std::uint32_t>(body.size()));
  out.insert(out.end(), len.begin(), len.end());
  out.insert(out.end(), body.begin(), body.end());
  return out;
}

struct Malformed {
  std::string reason;
};

// Cursor over the variable header + payload of one packet.
class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> body) : body_(body) {}

  std::uint8_t u8() {
    need(1);
    return body_[pos_++];
  }
  std::uint16_t u16() {
    need(2);
    const auto v = static_cast<std::uint16_t>((body_[pos_] << 8) | body_[pos_ + 1]);
    pos_ += 2;
    return v;
  }
  std::string str(const char* field) {
    const std::uint16_t n = u16();
    need(n);
    std::string s(reinterpret_cast<const char*>(body_.data() + pos_), n);
    pos_ += n;
    if (!is_valid_utf8(s) || s.find('\0') != std::string::npos) {
      throw Malformed{std::string(field) + ": malformed UTF-8 string"};
    }
    return s;
  }
  std::string rest() {
    std::string s(reinterpret_cast<const char*>(body_.data() + pos_), body_.size() - pos_);
    pos_ = body_.size();
    return s;
  }
  void finish(const char* packet) const {
    if (pos_ != body_.size()) throw Malformed{std::string(packet) + ": trailing bytes in packet"};
  }

 private:
  void need(std::size_t n) const {
    if (body_.size() - pos_ < n) throw Malformed{"packet body shorter than its fields"};
  }

  std::span<const std::uint8_t> body_;
  std::size_t pos_ = 0;
};

Packet parse_body(std::uint8_t type, std::uint8_t flags, std::span<const std::uint8_t> body) {
  Reader r(body);
  auto expect_flags = [&](std::uint8_t want, const char* name) {
    if (flags != want) throw Malformed{std::string(name) + ": invalid fixed-header flags"};
  };
  switch (type) {
    case kConnect: {
      expect_flags(0, "CONNECT");
      if (r.str("protocol name") != "MQTT") throw Malformed{"CONNECT: protocol name is not MQTT"};
      if (r.u8() != kProtocolLevel) throw Malformed{"CONNECT: unsupported protocol level"};
      const std::uint8_t connect_flags = r.u8();
      if (connect_flags != kCleanSession) {
        throw Malformed{"CONNECT: only clean sessions without will or credentials are supported"};
      }
      r.u16();  // keep-alive; not enforced
      Connect c{r.str("client_id")};
      r.finish("CONNECT");
      return c;
    }
    case kConnAck: {
      expect_flags(0, "CONNACK");
      if (r.u8() != 0) throw Malformed{"CONNACK: session-present must be 0"};
      if (r.u8() != 0) throw Malformed{"CONNACK: connection refused"};
      r.finish("CONNACK");
      return ConnAck{};
    }
    case kPublish: {
      if (flags != 0) throw Malformed{"PUBLISH: only QoS 0 without DUP/RETAIN is supported"};
      Publish p;
      p.topic = r.str("topic");
      if (p.topic.empty() || p.topic.find_first_of("+#") != std::string::npos) {
        throw Malformed{"PUBLISH: invalid topic"};
      }
      p.payload = r.rest();
      if (p.payload.size() > kMaxPayload) throw Malformed{"PUBLISH: payload exceeds cap"};
      return p;
    }
    case kSubscribe: {
      expect_flags(0x2, "SUBSCRIBE");
      Subscribe s;
      s.packet_id = r.u16();
      s.filter = r.str("filter");
      if (r.u8() > 2) throw Malformed{"SUBSCRIBE: invalid requested QoS"};
      r.finish("SUBSCRIBE");
      try {
        validate_filter(s.filter);
      } catch (const Error& e) {
        throw Malformed{e.what()};
      }
      return s;
    }
    case kSubAck: {
      expect_flags(0, "SUBACK");
      SubAck a{r.u16()};
      if (r.u8() != 0) throw Malformed{"SUBACK: only granted QoS 0 is supported"};
      r.finish("SUBACK");
      return a;
    }
    case kPingReq:
      expect_flags(0, "PINGREQ");
      r.finish("PINGREQ");
      return PingReq{};
    case kPingResp:
      expect_flags(0, "PINGRESP");
      r.finish("PINGRESP");
      return PingResp{};
    case kDisconnect:
      expect_flags(0, "DISCONNECT");
      r.finish("DISCONNECT");
      return Disconnect{};
    case 0:
    case 15:
      throw Malformed{"reserved packet type " + std::to_string(type)};
    default:
      throw Malformed{"unsupported packet type " + std::to_string(type)};
  }
}

std::vector<std::string_view> split_levels(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t slash = s.find('/', start);
    if (slash == std::string_view::npos) {
      out.push_back(s.substr(start));
      return out;
    }
    out.push_back(s.substr(start, slash - start));
    start = slash + 1;
  }
}

}  // namespace

std::string_view packet_name(const Packet& p) noexcept {
  constexpr std::string_view names[] = {"CONNECT",  "CONNACK",  "PUBLISH",  "SUBSCRIBE",
                                        "SUBACK",   "PINGREQ",  "PINGRESP", "DISCONNECT"};
  return names[p.index()];
}

bool is_valid_utf8(std::string_view s) noexcept {
  std::size_t i = 0;
  while (i < s.size()) {
    const auto c = static_cast<unsigned char>(s[i]);
    std::size_t len = 0;
    std::uint32_t cp = 0;
    if (c < 0x80) {
      ++i;
      continue;
    } else if ((c & 0xE0) == 0xC0) {
      len = 2;
      cp = c & 0x1F;
    } else if ((c & 0xF0) == 0xE0) {
      len = 3;
      cp = c & 0x0F;
    } else if ((c & 0xF8) == 0xF0) {
      len = 4;
      cp = c & 0x07;
    } else {
      return false;
    }
    if (i + len > s.size()) return false;
    for (std::size_t k = 1; k < len; ++k) {
      const auto cc = static_cast<unsigned char>(s[i + k]);
      if ((cc & 0xC0) != 0x80) return false;
      cp = (cp << 6) | (cc & 0x3F);
    }
    // overlong forms, surrogates, out of range
    if ((len == 2 && cp < 0x80) || (len == 3 && cp < 0x800) || (len == 4 && cp < 0x10000)) return false;
    if (cp >= 0xD800 && cp <= 0xDFFF) return false;
    if (cp > 0x10FFFF) return false;
    i += len;
  }
  return true;
}

void validate_topic(std::string_view topic) {
  if (topic.empty()) throw Error(ErrorKind::Encoding, "topic: must be non-empty");
  if (topic.find_first_of("+#") != std::string_view::npos) {
    throw Error(ErrorKind::Encoding, "topic: wildcard characters are not allowed");
  }
  check_string(topic, "topic");
}

void validate_filter(std::string_view filter) {
  if (filter.empty()) throw Error(ErrorKind::Encoding, "filter: must be non-empty");
  check_string(filter, "filter");
  const auto levels = split_levels(filter);
  for (std::size_t i = 0; i < levels.size(); ++i) {
    const auto level = levels[i];
    if (level.find('#') != std::string_view::npos &&
        (level.size() != 1 || i + 1 != levels.size())) {
      throw Error(ErrorKind::Encoding, "filter: '#' must be the whole final level");
    }
    if (level.find('+') != std::string_view::npos && level.size() != 1) {
      throw Error(ErrorKind::Encoding, "filter: '+' must occupy a whole level");
    }
  }
}

Bytes encode_remaining_length(std::uint32_t n) {
  if (n > kMaxRemainingLength) {
    throw Error(ErrorKind::Encoding, "remaining length " + std::to_string(n) + " out of range");
  }
  Bytes out;
  do {
    std::uint8_t byte = n % 128;
    n /= 128;
    if (n > 0) byte |= 0x80;
    out.push_back(byte);
  } while (n > 0);
  return out;
}

Bytes encode_packet(const Packet& packet) {
  return std::visit(
      Overloaded{
          [](const Connect& c) {
            check_string(c.client_id, "client_id");
            Bytes body;
            put_string(body, "MQTT");
            body.push_back(kProtocolLevel);
            body.push_back(kCleanSession);
            put_u16(body, kKeepAlive);
            put_string(body, c.client_id);
            return frame(kConnect << 4, body);
          },
          [](const ConnAck&) { return frame(kConnAck << 4, Bytes{0x00, 0x00}); },
          [](const Publish& p) {
            validate_topic(p.topic);
            if (p.payload.size() > kMaxPayload) {
              throw Error(ErrorKind::Encoding, "payload: exceeds 256 KiB cap");
            }
            Bytes body;
            body.reserve(2 + p.topic.size() + p.payload.size());
            put_string(body, p.topic);
            body.insert(body.end(), p.payload.begin(), p.payload.end());
            return frame(kPublish << 4, body);
          },
          [](const Subscribe& s) {
            validate_filter(s.filter);
            Bytes body;
            put_u16(body, s.packet_id);
            put_string(body, s.filter);
            body.push_back(0x00);
            return frame((kSubscribe << 4) | 0x2, body);
          },
          [](const SubAck& a) {
            Bytes body;
            put_u16(body, a.packet_id);
            body.push_back(0x00);
            return frame(kSubAck << 4, body);
          },
          [](const PingReq&) { return frame(kPingReq << 4, {}); },
          [](const PingResp&) { return frame(kPingResp << 4, {}); },
          [](const Disconnect&) { return frame(kDisconnect << 4, {}); },
      },
      packet);
}

DecodeResult decode_packet(std::span<const std::uint8_t> bytes) {
  DecodeResult result;
  if (bytes.empty()) return result;
  const std::uint8_t type = bytes[0] >> 4;
  const std::uint8_t flags = bytes[0] & 0x0F;
  if (type == 0 || type == 15) {
    result.status = DecodeStatus::ProtocolError;
    result.error = "reserved packet type " + std::to_string(type);
    return result;
  }

  std::uint32_t remaining = 0;
  std::uint32_t multiplier = 1;
  std::size_t pos = 1;
  while (true) {
    if (pos > 4) {
      result.status = DecodeStatus::ProtocolError;
      result.error = "remaining length longer than 4 bytes";
      return result;
    }
    if (pos >= bytes.size()) return result;
    const std::uint8_t b = bytes[pos++];
    remaining += static_cast<std::uint32_t>(b & 0x7F) * multiplier;
    multiplier *= 128;
    if ((b & 0x80) == 0) break;
  }
  if (remaining > kMaxPayload + 0x10000 + 16) {
    result.status = DecodeStatus::ProtocolError;
    result.error = "packet exceeds size cap";
    return result;
  }
  if (bytes.size() - pos < remaining) return result;

  try {
    result.packet = parse_body(type, flags, bytes.subspan(pos, remaining));
  } catch (const Malformed& m) {
    result.status = DecodeStatus::ProtocolError;
    result.error = m.reason;
    return result;
  }
  result.status = DecodeStatus::Ok;
  result.consumed = pos + remaining;
  return result;
}

void StreamDecoder::feed(std::span<const std::uint8_t> chunk) {
  if (offset_ > 0 && offset_ == buffer_.size()) {
    buffer_.clear();
    offset_ = 0;
  }
  buffer_.insert(buffer_.end(), chunk.begin(), chunk.end());
}

std::optional<Packet> StreamDecoder::next() {
  if (failed_) throw Error(ErrorKind::Protocol, "stream decoder used after protocol error");
  auto view = std::span<const std::uint8_t>(buffer_).subspan(offset_);
  DecodeResult r = decode_packet(view);
  switch (r.status) {
    case DecodeStatus::NeedMore:
      return std::nullopt;
    case DecodeStatus::ProtocolError:
      failed_ = true;
      throw Error(ErrorKind::Protocol, r.error);
    case DecodeStatus::Ok:
      break;
  }
  offset_ += r.consumed;
  if (offset_ > 4096 && offset_ * 2 > buffer_.size()) {
    buffer_.erase(buffer_.begin(), buffer_.begin() + static_cast<std::ptrdiff_t>(offset_));
    offset_ = 0;
  }
  return std::move(r.packet);
}

bool topic_matches(std::string_view filter, std::string_view topic) {
  const auto f = split_levels(filter);
  const auto t = split_levels(topic);
  std::size_t i = 0;
  for (; i < f.size(); ++i) {
    if (f[i] == "#") return true;
    if (i >= t.size()) return false;
    if (f[i] != "+" && f[i] != t[i]) return false;
  }
  return i == t.size();
}

std::vector<Delivery> broker_dispatch(const BrokerState& state, std::string_view from,
                                      const Publish& p) {
  if (state.sessions.find(std::string(from)) == state.sessions.end()) {
    throw Error(ErrorKind::Session, "publish from unknown client '" + std::string(from) + "'");
  }
  std::vector<Delivery> out;
  for (const auto& [client, filters] : state.subscriptions) {
    const bool match = std::any_of(filters.begin(), filters.end(),
                                   [&](const std::string& f) { return topic_matches(f, p.topic); });
    if (match) out.push_back(Delivery{client, p});
  }
  return out;
}

// --- Broker -----------------------------------------------------------------

std::uint64_t Broker::connect(const std::string& client_id, Sink sink) {
  std::lock_guard lock(mutex_);
  state_.sessions.insert(client_id);
  state_.subscriptions.erase(client_id);
  const std::uint64_t token = next_token_++;
  sinks_[client_id] = Attached{std::move(sink), token};
  return token;
}

void Broker::subscribe(const std::string& client_id, const std::string& filter) {
  validate_filter(filter);
  std::lock_guard lock(mutex_);
  if (!state_.sessions.contains(client_id)) {
    throw Error(ErrorKind::Session, "subscribe from unknown client '" + client_id + "'");
  }
  state_.subscriptions[client_id].insert(filter);
}

void Broker::disconnect(const std::string& client_id, std::uint64_t token) {
  std::lock_guard lock(mutex_);
  auto it = sinks_.find(client_id);
  if (it == sinks_.end()) return;
  if (token != 0 && it->second.token != token) return;
  sinks_.erase(it);
  state_.sessions.erase(client_id);
  state_.subscriptions.erase(client_id);
}

std::size_t Broker::publish(const std::string& from, const Publish& p) {
  std::lock_guard lock(mutex_);
  const auto deliveries = broker_dispatch(state_, from, p);
  for (const auto& d : deliveries) {
    auto it = sinks_.find(d.client_id);
    if (it != sinks_.end() && it->second.sink) it->second.sink(d.publish);
  }
  return deliveries.size();
}

BrokerState Broker::snapshot() const {
  std::lock_guard lock(mutex_);
  return state_;
}

// --- BrokerSession ----------------------------------------------------------

BrokerSession::BrokerSession(Broker& broker, Writer writer)
    : broker_(broker), writer_(std::move(writer)), alive_(std::make_shared<bool>(true)) {}

BrokerSession::~BrokerSession() { close(); }

void BrokerSession::close() {
  if (!open_) return;
  open_ = false;
  *alive_ = false;
  if (connected_) broker_.disconnect(client_id_, token_);
  connected_ = false;
}

bool BrokerSession::on_bytes(std::span<const std::uint8_t> bytes) {
  if (!open_) return false;
  decoder_.feed(bytes);
  try {
    while (open_) {
      auto p = decoder_.next();
      if (!p) break;
      handle(*p);
    }
  } catch (const Error& e) {
    last_error_ = e.what();
    close();
  }
  return open_;
}

void BrokerSession::handle(const Packet& p) {
  if (!connected_ && !std::holds_alternative<Connect>(p)) {
    throw Error(ErrorKind::Protocol, "first packet must be CONNECT");
  }
  std::visit(Overloaded{
                 [&](const Connect& c) {
                   if (connected_) throw Error(ErrorKind::Protocol, "second CONNECT on a session");
                   client_id_ = c.client_id;
                   std::weak_ptr<bool> alive = alive_;
                   Writer writer = writer_;
                   token_ = broker_.connect(client_id_, [alive, writer](const Publish& pub) {
                     auto flag = alive.lock();
                     if (flag && *flag) writer(encode_packet(pub));
                   });
                   connected_ = true;
                   writer_(encode_packet(ConnAck{}));
                 },
                 [&](const Publish& pub) { broker_.publish(client_id_, pub); },
                 [&](const Subscribe& s) {
                   broker_.subscribe(client_id_, s.filter);
                   writer_(encode_packet(SubAck{s.packet_id}));
                 },
                 [&](const PingReq&) { writer_(encode_packet(PingResp{})); },
                 [&](const Disconnect&) { close(); },
                 [&](const auto& other) {
                   throw Error(ErrorKind::Protocol,
                               std::string(packet_name(Packet{other})) + " is not valid from a client");
                 },
             },
             p);
}

// --- LoopbackClient ---------------------------------------------------------

LoopbackClient::LoopbackClient(Broker& broker, std::string client_id) : id_(std::move(client_id)) {
  session_ = std::make_unique<BrokerSession>(broker, [this](Bytes b) { on_bytes(std::move(b)); });
  send(Connect{id_});
  std::lock_guard lock(mutex_);
  const bool acked = std::any_of(control_.begin(), control_.end(),
                                 [](const Packet& p) { return std::holds_alternative<ConnAck>(p); });
  if (!acked) throw Error(ErrorKind::Session, "loopback connect was not acknowledged");
}

LoopbackClient::~LoopbackClient() { session_.reset(); }

void LoopbackClient::send(const Packet& p) {
  const Bytes bytes = encode_packet(p);
  if (!session_->on_bytes(bytes) && !std::holds_alternative<Disconnect>(p)) {
    throw Error(ErrorKind::Session, "loopback session closed: " + session_->last_error());
  }
}

bool LoopbackClient::send_raw(std::span<const std::uint8_t> bytes) { return session_->on_bytes(bytes); }

bool LoopbackClient::connected() const { return session_->open(); }

void LoopbackClient::on_bytes(Bytes bytes) {
  std::lock_guard lock(mutex_);
  decoder_.feed(bytes);
  while (auto p = decoder_.next()) {
    if (auto* pub = std::get_if<Publish>(&*p)) {
      inbox_.push_back(std::move(*pub));
    } else {
      control_.push_back(std::move(*p));
    }
  }
}

void LoopbackClient::subscribe(const std::string& filter) {
  send(Subscribe{next_packet_id_++, filter});
}

void LoopbackClient::publish(const std::string& topic, std::string payload) {
  send(Publish{topic, std::move(payload)});
}

std::vector<Publish> LoopbackClient::drain() {
  std::lock_guard lock(mutex_);
  std::vector<Publish> out(std::make_move_iterator(inbox_.begin()), std::make_move_iterator(inbox_.end()));
  inbox_.clear();
  return out;
}

void LoopbackClient::disconnect() { send(Disconnect{}); }

}  // namespace tagteam::transport
