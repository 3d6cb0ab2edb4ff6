#pragma once

// Simulated participants: the wearable pose source, the drone kinematics,
// and the mock object detector that replaces on-board inference.

#include <cstdint>
#include <istream>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "tagteam/geometry.hpp"
#include "tagteam/protocol.hpp"

namespace tagteam::agents {

using geometry::Pose;
using geometry::Vec3;

struct Circle {
  double radius = 0.5;
  double angular_speed = 0.0;
};

struct Ellipse {
  double semi_axis_a = 0.75;
  double semi_axis_b = 0.5;
  double angular_speed = 0.0;
};

struct TimedPoint {
  double t = 0.0;
  Vec3 position;
};

/// Piecewise-linear path through timed points; held at the ends.
struct Waypoints {
  std::vector<TimedPoint> points;
};

struct TrajectorySpec {
  std::variant<Circle, Ellipse, Waypoints> kind = Circle{};
  double noise_sigma = 0.0;
  double rate = 10.0;
};

/// Throws Error(InvalidInput) naming the offending field.
void validate(const TrajectorySpec& spec);

/// Circle through the origin: (r cos wt - r, 0, r sin wt).
Vec3 circle_trajectory(double radius, double omega, double t);
/// Ellipse through the origin: (a cos wt - a, 0, b sin wt).
Vec3 ellipse_trajectory(double a, double b, double omega, double t);
/// Noise-free position of `spec` at time t.
Vec3 sample_trajectory(const TrajectorySpec& spec, double t);

/// Reads `t,x,y,z` rows. Throws Error(Parse) with the line number.
std::vector<TimedPoint> load_waypoints_csv(std::istream& in);
std::vector<TimedPoint> load_waypoints_csv(const std::string& path);

/// Seeded engine for one simulated component; `stream` separates components
/// sharing a scenario seed.
std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream);

/// Publishes noisy poses of a scripted trajectory at a fixed rate. Yaw is
/// held at 0 (the wearer faces +x).
class Wearable {
 public:
  Wearable(TrajectorySpec spec, std::uint64_t seed, std::string source_id = "wearable");

  /// Emits the next scheduled pose if it is due at time t.
  std::optional<protocol::PoseMsg> tick(double t);
  /// Ground-truth pose (no noise), in the wearable frame.
  Pose true_pose(double t) const;

 private:
  TrajectorySpec spec_;
  std::string source_;
  std::mt19937_64 rng_;
  std::uint64_t next_index_ = 0;
};

struct DroneState {
  Pose pose{Vec3{}, 0.0, geometry::FrameId::Drone, 0.0};
  std::optional<protocol::CommandMsg> command;
  double max_speed = 1.0;
  double altitude = 0.5;
  double yaw_rate = 3.14159265358979;  // rad/s
};

/// Straight-line move toward the commanded target at min(speed, max_speed),
/// landing exactly on the target when it is within one step; yaw slews along
/// the shorter arc at yaw_rate. Without a command the drone holds.
DroneState drone_step(const DroneState& state, double dt);

/// Maps a drone-frame position to the world frame given where the drone
/// started. World y is the hover altitude.
Vec3 drone_to_world(Vec3 drone_position, Vec3 start_world, double altitude);

struct WorldObject {
  std::string id;
  std::string label;
  Vec3 position;
};

/// Reads `id,label,x,y,z` rows; ids must be unique.
std::vector<WorldObject> load_world_csv(std::istream& in);
std::vector<WorldObject> load_world_csv(const std::string& path);

struct DetectorParams {
  double fov = 1.5707963267948966;
  double range = 4.0;
  double p_detect = 1.0;
  double pos_noise_sigma = 0.0;
};

void validate(const DetectorParams& params);

/// Mock detector over ground truth. An object is reported when it is within
/// `range` on the ground plane, inside the camera's horizontal fov, and a
/// uniform draw falls below p_detect. Confidence is synthetic: the draw
/// mapped onto [0.5, 1].
std::vector<protocol::DetectionMsg> detect_objects(const Pose& drone_world,
                                                   std::span<const WorldObject> world,
                                                   const DetectorParams& params,
                                                   std::mt19937_64& rng);

}  // namespace tagteam::agents
