#include "tagteam/protocol.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <initializer_list>
#include <numbers>

#include "tagteam/error.hpp"
#include "tagteam/transport.hpp"

namespace tagteam::protocol {

using geometry::Vec3;
using nlohmann::json;
namespace topics = transport::topics;

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

[[noreturn]] void invalid(const std::string& field, const std::string& why) {
  throw Error(ErrorKind::Validation, field + ": " + why);
}

void check_finite(double v, const std::string& field) {
  if (!std::isfinite(v)) invalid(field, "must be finite");
}

void check_vec(const Vec3& v, const std::string& field) {
  if (!v.finite()) invalid(field, "must be finite");
}

void check_text(const std::string& s, const std::string& field) {
  if (!transport::is_valid_utf8(s)) invalid(field, "must be valid UTF-8");
}

// Small canonical writer; key order is the call order.
class Writer {
 public:
  Writer() { out_ = "{\"v\":" + std::to_string(kSchemaVersion); }

  Writer& num(const char* key, double v) {
    field(key);
    out_ += format_number(v);
    return *this;
  }
  Writer& uint(const char* key, std::uint64_t v) {
    field(key);
    out_ += std::to_string(v);
    return *this;
  }
  Writer& str(const char* key, const std::string& v) {
    field(key);
    out_ += json(v).dump();
    return *this;
  }
  Writer& boolean(const char* key, bool v) {
    field(key);
    out_ += v ? "true" : "false";
    return *this;
  }
  Writer& vec(const char* key, const Vec3& v) {
    field(key);
    out_ += vec_text(v);
    return *this;
  }
  Writer& vecs(const char* key, const std::vector<Vec3>& vs) {
    field(key);
    out_ += '[';
    for (std::size_t i = 0; i < vs.size(); ++i) {
      if (i > 0) out_ += ',';
      out_ += vec_text(vs[i]);
    }
    out_ += ']';
    return *this;
  }
  std::string finish() { return out_ + "}"; }

 private:
  static std::string vec_text(const Vec3& v) {
    return "[" + format_number(v.x) + "," + format_number(v.y) + "," + format_number(v.z) + "]";
  }
  void field(const char* key) {
    out_ += ",\"";
    out_ += key;
    out_ += "\":";
  }
  std::string out_;
};

// Strict field access over a parsed object.
class Fields {
 public:
  Fields(const json& j, std::initializer_list<const char*> keys) : j_(j) {
    if (!j.is_object()) invalid("payload", "must be a JSON object");
    for (const char* k : keys) {
      if (!j.contains(k)) invalid(k, "missing field");
    }
    for (const auto& item : j.items()) {
      bool known = false;
      for (const char* k : keys) known = known || item.key() == k;
      if (!known) invalid(item.key(), "unexpected field");
    }
    const json& v = j.at("v");
    if (!v.is_number_integer() || v.get<std::int64_t>() != kSchemaVersion) {
      invalid("v", "unsupported schema version");
    }
  }

  double num(const char* key) const {
    const json& v = j_.at(key);
    if (!v.is_number()) invalid(key, "must be a number");
    return v.get<double>();
  }
  std::uint64_t uint(const char* key) const {
    const json& v = j_.at(key);
    if (!v.is_number_unsigned()) invalid(key, "must be a non-negative integer");
    return v.get<std::uint64_t>();
  }
  std::string str(const char* key) const {
    const json& v = j_.at(key);
    if (!v.is_string()) invalid(key, "must be a string");
    return v.get<std::string>();
  }
  bool boolean(const char* key) const {
    const json& v = j_.at(key);
    if (!v.is_boolean()) invalid(key, "must be a boolean");
    return v.get<bool>();
  }
  Vec3 vec(const char* key) const { return to_vec(j_.at(key), key); }
  std::vector<Vec3> vecs(const char* key) const {
    const json& v = j_.at(key);
    if (!v.is_array()) invalid(key, "must be an array of [x,y,z]");
    std::vector<Vec3> out;
    for (const auto& e : v) out.push_back(to_vec(e, key));
    return out;
  }

 private:
  static Vec3 to_vec(const json& v, const char* key) {
    if (!v.is_array() || v.size() != 3) invalid(key, "must be [x,y,z]");
    for (const auto& c : v) {
      if (!c.is_number()) invalid(key, "components must be numbers");
    }
    return Vec3{v[0].get<double>(), v[1].get<double>(), v[2].get<double>()};
  }

  const json& j_;
};

json parse_object(std::string_view payload) {
  json j = json::parse(payload, nullptr, false);
  if (j.is_discarded()) invalid("payload", "not valid JSON");
  return j;
}

}  // namespace

std::string format_number(double v) {
  if (!std::isfinite(v)) throw Error(ErrorKind::Validation, "cannot encode non-finite number");
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.9g", v + 0.0);
  std::string s(buf);
  if (s == "-0") s = "0";
  return s;
}

double quantize(double v) { return std::strtod(format_number(v).c_str(), nullptr); }

std::string_view topic_for(const Message& m) noexcept {
  switch (m.index()) {
    case 0: return topics::kPose;
    case 1:
    case 2: return topics::kCommand;
    case 3: return topics::kDetections;
    default: return topics::kCues;
  }
}

void validate(const Message& m) {
  constexpr double kPi = std::numbers::pi;
  std::visit(
      Overloaded{
          [](const PoseMsg& p) {
            check_text(p.source, "source");
            check_vec(p.pose.position, "pos");
            check_finite(p.pose.yaw, "yaw");
            if (p.pose.yaw < -kPi || p.pose.yaw >= kPi) invalid("yaw", "must lie in [-pi, pi)");
            check_finite(p.pose.timestamp, "t");
            if (p.pose.timestamp < 0.0) invalid("t", "must be >= 0");
            if (p.pose.frame != geometry::FrameId::Wearable) invalid("frame", "must be wearable");
          },
          [](const CommandMsg& c) {
            check_vec(c.target, "target");
            check_finite(c.yaw, "yaw");
            check_finite(c.speed, "speed");
            if (c.speed <= 0.0) invalid("speed", "must be > 0");
          },
          [](const DetachMsg& d) {
            if (d.waypoints.empty()) invalid("waypoints", "must be non-empty");
            for (const auto& w : d.waypoints) check_vec(w, "waypoints");
          },
          [](const DetectionMsg& d) {
            check_text(d.object_id, "id");
            check_text(d.label, "label");
            check_vec(d.position, "pos");
            check_finite(d.confidence, "confidence");
            if (d.confidence < 0.0 || d.confidence > 1.0) invalid("confidence", "must lie in [0, 1]");
            check_finite(d.timestamp, "t");
          },
          [&](const CueMsg& c) {
            check_text(c.object_id, "id");
            check_text(c.label, "label");
            check_finite(c.distance, "distance");
            if (c.distance < 0.0) invalid("distance", "must be >= 0");
            check_finite(c.azimuth, "azimuth");
            if (c.azimuth <= -kPi || c.azimuth > kPi) invalid("azimuth", "must lie in (-pi, pi]");
            check_finite(c.timestamp, "t");
          },
      },
      m);
}

std::string encode_message(const Message& m) {
  validate(m);
  return std::visit(Overloaded{
                        [](const PoseMsg& p) {
                          return Writer()
                              .str("source", p.source)
                              .uint("seq", p.sequence)
                              .str("frame", std::string(geometry::to_string(p.pose.frame)))
                              .num("t", p.pose.timestamp)
                              .vec("pos", p.pose.position)
                              .num("yaw", p.pose.yaw)
                              .finish();
                        },
                        [](const CommandMsg& c) {
                          return Writer()
                              .str("kind", "move")
                              .uint("seq", c.sequence)
                              .vec("target", c.target)
                              .num("yaw", c.yaw)
                              .num("speed", c.speed)
                              .finish();
                        },
                        [](const DetachMsg& d) {
                          return Writer()
                              .str("kind", "detach")
                              .uint("seq", d.sequence)
                              .vecs("waypoints", d.waypoints)
                              .finish();
                        },
                        [](const DetectionMsg& d) {
                          return Writer()
                              .str("id", d.object_id)
                              .str("label", d.label)
                              .vec("pos", d.position)
                              .num("confidence", d.confidence)
                              .num("t", d.timestamp)
                              .finish();
                        },
                        [](const CueMsg& c) {
                          return Writer()
                              .str("id", c.object_id)
                              .str("label", c.label)
                              .num("distance", c.distance)
                              .num("azimuth", c.azimuth)
                              .boolean("blind_spot", c.blind_spot)
                              .num("t", c.timestamp)
                              .finish();
                        },
                    },
                    m);
}

Message decode_message(std::string_view topic, std::string_view payload) {
  Message out;
  if (topic == topics::kPose) {
    const json j = parse_object(payload);
    Fields f(j, {"v", "source", "seq", "frame", "t", "pos", "yaw"});
    PoseMsg p;
    p.source = f.str("source");
    p.sequence = f.uint("seq");
    const std::string frame = f.str("frame");
    try {
      p.pose.frame = geometry::frame_from_string(frame);
    } catch (const Error&) {
      invalid("frame", "unknown frame '" + frame + "'");
    }
    p.pose.timestamp = f.num("t");
    p.pose.position = f.vec("pos");
    p.pose.yaw = f.num("yaw");
    out = std::move(p);
  } else if (topic == topics::kCommand) {
    const json j = parse_object(payload);
    if (!j.is_object() || !j.contains("kind")) invalid("kind", "missing field");
    const json& kind = j.at("kind");
    if (!kind.is_string()) invalid("kind", "must be a string");
    if (kind == "move") {
      Fields f(j, {"v", "kind", "seq", "target", "yaw", "speed"});
      out = CommandMsg{f.vec("target"), f.num("yaw"), f.num("speed"), f.uint("seq")};
    } else if (kind == "detach") {
      Fields f(j, {"v", "kind", "seq", "waypoints"});
      out = DetachMsg{f.vecs("waypoints"), f.uint("seq")};
    } else {
      invalid("kind", "unknown command kind");
    }
  } else if (topic == topics::kDetections) {
    const json j = parse_object(payload);
    Fields f(j, {"v", "id", "label", "pos", "confidence", "t"});
    out = DetectionMsg{f.str("id"), f.str("label"), f.vec("pos"), f.num("confidence"), f.num("t")};
  } else if (topic == topics::kCues) {
    const json j = parse_object(payload);
    Fields f(j, {"v", "id", "label", "distance", "azimuth", "blind_spot", "t"});
    out = CueMsg{f.str("id"),          f.str("label"),       f.num("distance"),
                 f.num("azimuth"),     f.boolean("blind_spot"), f.num("t")};
  } else {
    throw Error(ErrorKind::Routing, "no message schema bound to topic '" + std::string(topic) + "'");
  }
  validate(out);
  return out;
}

}  // namespace tagteam::protocol
