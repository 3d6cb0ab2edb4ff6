#pragma once

// Minimal MQTT 3.1.1 subset: QoS 0, clean sessions, no retain, no wills,
// no authentication, one filter per SUBSCRIBE.

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace tagteam::transport {

using Bytes = std::vector<std::uint8_t>;

inline constexpr std::size_t kMaxPayload = 256 * 1024;
inline constexpr std::uint32_t kMaxRemainingLength = 268'435'455;
inline constexpr std::uint16_t kDefaultPort = 1883;

namespace topics {
inline constexpr std::string_view kPose = "tagteam/pose";
inline constexpr std::string_view kCommand = "tagteam/cmd";
inline constexpr std::string_view kDetections = "tagteam/detections";
inline constexpr std::string_view kCues = "tagteam/cues";
}  // namespace topics

struct Connect {
  std::string client_id;
  friend bool operator==(const Connect&, const Connect&) = default;
};
struct ConnAck {
  friend bool operator==(const ConnAck&, const ConnAck&) = default;
};
struct Publish {
  std::string topic;
  std::string payload;
  friend bool operator==(const Publish&, const Publish&) = default;
};
struct Subscribe {
  std::uint16_t packet_id = 0;
  std::string filter;
  friend bool operator==(const Subscribe&, const Subscribe&) = default;
};
struct SubAck {
  std::uint16_t packet_id = 0;
  friend bool operator==(const SubAck&, const SubAck&) = default;
};
struct PingReq {
  friend bool operator==(const PingReq&, const PingReq&) = default;
};
struct PingResp {
  friend bool operator==(const PingResp&, const PingResp&) = default;
};
struct Disconnect {
  friend bool operator==(const Disconnect&, const Disconnect&) = default;
};

using Packet =
    std::variant<Connect, ConnAck, Publish, Subscribe, SubAck, PingReq, PingResp, Disconnect>;

std::string_view packet_name(const Packet& p) noexcept;

// --- validation -------------------------------------------------------------

bool is_valid_utf8(std::string_view s) noexcept;
/// Throws Error(Encoding) naming the field on failure.
void validate_topic(std::string_view topic);
void validate_filter(std::string_view filter);

// --- codec ------------------------------------------------------------------

Bytes encode_remaining_length(std::uint32_t n);
Bytes encode_packet(const Packet& p);

enum class DecodeStatus { Ok, NeedMore, ProtocolError };

struct DecodeResult {
  DecodeStatus status = DecodeStatus::NeedMore;
  std::optional<Packet> packet;
  std::size_t consumed = 0;
  std::string error;
};

/// Decodes one packet from the front of `bytes`. Trailing bytes are left
/// unconsumed. A ProtocolError means the connection must be dropped.
DecodeResult decode_packet(std::span<const std::uint8_t> bytes);

/// Incremental framer over a byte stream fed in arbitrary chunks.
class StreamDecoder {
 public:
  void feed(std::span<const std::uint8_t> chunk);
  /// Next complete packet, or nullopt when more bytes are needed. Throws
  /// Error(Protocol) on malformed input; the decoder is unusable afterwards.
  std::optional<Packet> next();
  std::size_t buffered() const noexcept { return buffer_.size() - offset_; }

 private:
  Bytes buffer_;
  std::size_t offset_ = 0;
  bool failed_ = false;
};

// --- routing ----------------------------------------------------------------

/// Level-wise MQTT match: '+' is exactly one level, trailing '#' is zero or
/// more remaining levels.
bool topic_matches(std::string_view filter, std::string_view topic);

struct BrokerState {
  std::set<std::string> sessions;
  std::map<std::string, std::set<std::string>> subscriptions;
};

struct Delivery {
  std::string client_id;
  Publish publish;
  friend bool operator==(const Delivery&, const Delivery&) = default;
};

/// One delivery per client holding at least one matching filter, in client id
/// order. Throws Error(Session) when `from` has no session.
std::vector<Delivery> broker_dispatch(const BrokerState& state, std::string_view from,
                                      const Publish& p);

/// Thread-safe broker core. Transport bindings attach a sink per session; a
/// publish is routed and handed to every sink while holding the state lock,
/// so subscription changes never interleave with a single dispatch.
class Broker {
 public:
  using Sink = std::function<void(const Publish&)>;

  /// Registers a session and returns its token. An existing session with
  /// the same id is replaced (its subscriptions are dropped).
  std::uint64_t connect(const std::string& client_id, Sink sink);
  void subscribe(const std::string& client_id, const std::string& filter);
  /// Removes the session; a nonzero token only removes that generation.
  void disconnect(const std::string& client_id, std::uint64_t token = 0);
  /// Returns the number of deliveries made.
  std::size_t publish(const std::string& from, const Publish& p);

  BrokerState snapshot() const;

 private:
  mutable std::mutex mutex_;
  BrokerState state_;
  struct Attached {
    Sink sink;
    std::uint64_t token = 0;
  };
  std::map<std::string, Attached> sinks_;
  std::uint64_t next_token_ = 1;
};

/// Protocol state machine for one connection, independent of the byte
/// transport. Feed it inbound bytes; it writes response and delivery bytes
/// through `writer`.
class BrokerSession {
 public:
  using Writer = std::function<void(Bytes)>;

  BrokerSession(Broker& broker, Writer writer);
  ~BrokerSession();
  BrokerSession(const BrokerSession&) = delete;
  BrokerSession& operator=(const BrokerSession&) = delete;

  /// Returns false once the session is closed (DISCONNECT or protocol error).
  bool on_bytes(std::span<const std::uint8_t> bytes);
  void close();

  bool open() const noexcept { return open_; }
  const std::string& client_id() const noexcept { return client_id_; }
  const std::string& last_error() const noexcept { return last_error_; }

 private:
  void handle(const Packet& p);

  Broker& broker_;
  Writer writer_;
  std::shared_ptr<bool> alive_;
  StreamDecoder decoder_;
  std::string client_id_;
  std::string last_error_;
  std::uint64_t token_ = 0;
  bool connected_ = false;
  bool open_ = true;
};

// --- client side ------------------------------------------------------------

/// Pub/sub endpoint used by agents. Implementations: in-process loopback and
/// TCP.
class Client {
 public:
  virtual ~Client() = default;
  virtual const std::string& id() const = 0;
  virtual void subscribe(const std::string& filter) = 0;
  virtual void publish(const std::string& topic, std::string payload) = 0;
  /// Non-blocking; returns every delivery received so far.
  virtual std::vector<Publish> drain() = 0;
};

/// Client wired straight into a BrokerSession through the codec, with no OS
/// networking. Deliveries are synchronous: they are in the inbox by the time
/// publish() returns.
class LoopbackClient final : public Client {
 public:
  LoopbackClient(Broker& broker, std::string client_id);
  ~LoopbackClient() override;

  const std::string& id() const override { return id_; }
  void subscribe(const std::string& filter) override;
  void publish(const std::string& topic, std::string payload) override;
  std::vector<Publish> drain() override;
  void disconnect();

  /// Raw byte injection, for exercising the session's error handling.
  bool send_raw(std::span<const std::uint8_t> bytes);
  bool connected() const;

 private:
  void send(const Packet& p);
  void on_bytes(Bytes bytes);

  std::string id_;
  std::uint16_t next_packet_id_ = 1;
  mutable std::mutex mutex_;
  StreamDecoder decoder_;
  std::deque<Publish> inbox_;
  std::vector<Packet> control_;
  std::unique_ptr<BrokerSession> session_;
};

}  // namespace tagteam::transport
