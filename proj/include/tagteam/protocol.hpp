#pragma once

// Application payloads carried on the pub/sub topics. Encoding is canonical
// JSON: fixed key order, numbers printed with 9 significant digits, -0
// printed as 0. Every message carries a schema version field "v".

#include <cstdint>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "tagteam/geometry.hpp"

namespace tagteam::protocol {

inline constexpr int kSchemaVersion = 1;

struct PoseMsg {
  std::string source;
  geometry::Pose pose;  // wearable frame
  std::uint64_t sequence = 0;
  friend bool operator==(const PoseMsg&, const PoseMsg&) = default;
};

/// Absolute drone-frame target plus commanded speed. Yaw is a heading in the
/// shared horizontal convention.
struct CommandMsg {
  geometry::Vec3 target;
  double yaw = 0.0;
  double speed = 0.0;
  std::uint64_t sequence = 0;
  friend bool operator==(const CommandMsg&, const CommandMsg&) = default;
};

/// Orders the follower to leave the human and visit drone-frame waypoints.
/// Shares the command topic with CommandMsg, discriminated by "kind".
struct DetachMsg {
  std::vector<geometry::Vec3> waypoints;
  std::uint64_t sequence = 0;
  friend bool operator==(const DetachMsg&, const DetachMsg&) = default;
};

struct DetectionMsg {
  std::string object_id;
  std::string label;
  geometry::Vec3 position;  // world frame
  double confidence = 0.0;
  double timestamp = 0.0;
  friend bool operator==(const DetectionMsg&, const DetectionMsg&) = default;
};

struct CueMsg {
  std::string object_id;
  std::string label;
  double distance = 0.0;
  double azimuth = 0.0;
  bool blind_spot = false;
  double timestamp = 0.0;
  friend bool operator==(const CueMsg&, const CueMsg&) = default;
};

using Message = std::variant<PoseMsg, CommandMsg, DetachMsg, DetectionMsg, CueMsg>;

/// Topic a message is published on.
std::string_view topic_for(const Message& m) noexcept;

/// Throws Error(Validation) naming the field when an invariant fails.
void validate(const Message& m);

std::string encode_message(const Message& m);

/// Throws Error(Routing) for a topic outside the closed set and
/// Error(Validation) for missing, extra, or ill-typed fields.
Message decode_message(std::string_view topic, std::string_view payload);

/// Formats a finite double the way the canonical encoder does.
std::string format_number(double v);
/// The value a double takes after a canonical encode/decode round trip.
double quantize(double v);

}  // namespace tagteam::protocol
