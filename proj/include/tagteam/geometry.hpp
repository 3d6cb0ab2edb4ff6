#pragma once

#include <cmath>
#include <numbers>
#include <string_view>

namespace tagteam::geometry {

/// Position or displacement in meters. Frame is carried by the owner.
struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  friend constexpr Vec3 operator+(Vec3 a, Vec3 b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
  friend constexpr Vec3 operator-(Vec3 a, Vec3 b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
  friend constexpr Vec3 operator*(double s, Vec3 v) { return {s * v.x, s * v.y, s * v.z}; }
  friend constexpr bool operator==(const Vec3&, const Vec3&) = default;

  bool finite() const noexcept {
    return std::isfinite(x) && std::isfinite(y) && std::isfinite(z);
  }
  double norm() const noexcept { return std::sqrt(x * x + y * y + z * z); }
  /// Length of the projection onto the (x, z) ground plane.
  double horizontal_norm() const noexcept { return std::hypot(x, z); }
};

enum class FrameId { Wearable, Drone, World };

std::string_view to_string(FrameId frame) noexcept;
FrameId frame_from_string(std::string_view name);

/// Right-handed, y up. Yaw rotates about y; yaw 0 faces +x and positive yaw
/// turns toward +z.
struct Pose {
  Vec3 position;
  double yaw = 0.0;
  FrameId frame = FrameId::World;
  double timestamp = 0.0;

  friend bool operator==(const Pose&, const Pose&) = default;
};

/// Wraps into [-pi, pi).
double normalize_yaw(double angle);
/// Wraps into (-pi, pi].
double normalize_azimuth(double angle);

/// Builds a pose after checking finiteness and timestamp sign; yaw is normalized.
Pose make_pose(Vec3 position, double yaw, FrameId frame, double timestamp);

/// Wearable x becomes drone z, wearable z becomes drone -x. Vertical is
/// dropped; altitude is held by the drone separately.
Vec3 wearable_delta_to_drone_delta(Vec3 delta);

/// Horizontal inverse of wearable_delta_to_drone_delta.
Vec3 drone_delta_to_wearable_delta(Vec3 delta);

struct Polar {
  double distance = 0.0;
  double azimuth = 0.0;
};

/// Ground-plane distance and signed bearing from the observer's facing
/// direction to `target`. Coincident points give {0, 0}.
Polar relative_polar(const Pose& observer, Vec3 target);

/// Horizontal bearing of `v` in the yaw convention, in (-pi, pi].
double heading_of(Vec3 v);

/// Rotates the horizontal part of `v` by `angle` (positive toward +z).
Vec3 rotate_yaw(Vec3 v, double angle);

}  // namespace tagteam::geometry
