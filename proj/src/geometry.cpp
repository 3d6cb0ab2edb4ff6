#include "tagteam/geometry.hpp"

#include <string>

#include "tagteam/error.hpp"

namespace tagteam::geometry {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kTwoPi = 2.0 * std::numbers::pi;

void require_finite(Vec3 v, const char* what) {
  if (!v.finite()) {
    throw Error(ErrorKind::InvalidInput, std::string(what) + ": non-finite component");
  }
}

}  // namespace

std::string_view to_string(FrameId frame) noexcept {
  switch (frame) {
    case FrameId::Wearable: return "wearable";
    case FrameId::Drone: return "drone";
    case FrameId::World: return "world";
  }
  return "world";
}

FrameId frame_from_string(std::string_view name) {
  if (name == "wearable") return FrameId::Wearable;
  if (name == "drone") return FrameId::Drone;
  if (name == "world") return FrameId::World;
  throw Error(ErrorKind::InvalidInput, "unknown frame '" + std::string(name) + "'");
}

double normalize_yaw(double angle) {
  if (!std::isfinite(angle)) throw Error(ErrorKind::InvalidInput, "yaw: non-finite");
  double r = std::fmod(angle + kPi, kTwoPi);
  if (r < 0.0) r += kTwoPi;
  double out = r - kPi;
  // fmod can land exactly on +pi through rounding of the shifted value
  if (out >= kPi) out -= kTwoPi;
  return out;
}

double normalize_azimuth(double angle) {
  double y = normalize_yaw(angle);
  return y == -kPi ? kPi : y;
}

Pose make_pose(Vec3 position, double yaw, FrameId frame, double timestamp) {
  require_finite(position, "pose.position");
  if (!std::isfinite(timestamp) || timestamp < 0.0) {
    throw Error(ErrorKind::InvalidInput, "pose.timestamp: must be finite and >= 0");
  }
  return Pose{position, normalize_yaw(yaw), frame, timestamp};
}

Vec3 wearable_delta_to_drone_delta(Vec3 delta) {
  require_finite(delta, "wearable delta");
  // 0.0 - z keeps a zero input from becoming -0.0
  return Vec3{0.0 - delta.z, 0.0, delta.x};
}

Vec3 drone_delta_to_wearable_delta(Vec3 delta) {
  require_finite(delta, "drone delta");
  return Vec3{delta.z, 0.0, 0.0 - delta.x};
}

double heading_of(Vec3 v) { return normalize_azimuth(std::atan2(v.z, v.x)); }

Vec3 rotate_yaw(Vec3 v, double angle) {
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  return Vec3{c * v.x - s * v.z, v.y, s * v.x + c * v.z};
}

Polar relative_polar(const Pose& observer, Vec3 target) {
  require_finite(target, "relative_polar target");
  const double dx = target.x - observer.position.x;
  const double dz = target.z - observer.position.z;
  const double distance = std::hypot(dx, dz);
  if (distance == 0.0) return Polar{0.0, 0.0};
  return Polar{distance, normalize_azimuth(std::atan2(dz, dx) - observer.yaw)};
}

}  // namespace tagteam::geometry
