#pragma once

// Middleware controller: dead-reckons drone move commands from the
// wearable's pose stream and runs the follow / detach / return mission.

#include <cstdint>
#include <mutex>
#include <optional>
#include <string_view>
#include <variant>
#include <vector>

#include "tagteam/agents.hpp"
#include "tagteam/geometry.hpp"
#include "tagteam/protocol.hpp"

namespace tagteam::follower {

using geometry::Pose;
using geometry::Vec3;

struct FollowerConfig {
  double update_period = 0.1;  // seconds between assessments
  double max_speed = 1.0;      // m/s
  double altitude = 0.5;       // m
  Vec3 follow_offset{};        // drone frame
  double deadband = 0.01;      // m per update; 0 disables
  bool clamp_speed = true;
};

void validate(const FollowerConfig& cfg);

/// Dead-reckoning step. The human's displacement between two wearable poses
/// is mapped into the drone frame and added to `drone_pos`; the commanded
/// speed is that distance over the elapsed time, clamped to max_speed.
///
/// Returns nullopt (hold) when the mapped displacement is zero or under the
/// deadband, or when more than two update periods separate the poses.
/// Throws Error(StalePose) when curr is not newer than prev. The returned
/// command has sequence 0; the caller numbers it.
std::optional<protocol::CommandMsg> assess(const Pose& prev, const Pose& curr, Vec3 drone_pos,
                                           const FollowerConfig& cfg);

enum class Mode { Follow, Detach, Return };

std::string_view to_string(Mode mode) noexcept;

struct MissionState {
  Mode mode = Mode::Follow;
  std::vector<Vec3> waypoints;  // drone frame, populated in Detach
  std::size_t index = 0;
  Pose anchor{Vec3{}, 0.0, geometry::FrameId::Wearable, 0.0};
};

struct PoseUpdate {
  Pose pose;
};
struct DetachOrder {
  std::vector<Vec3> waypoints;
};
struct WaypointReached {};
struct ReturnArrived {};

using MissionEvent = std::variant<PoseUpdate, DetachOrder, WaypointReached, ReturnArrived>;

struct MoveTo {
  Vec3 target;
};
struct Assess {};

using MissionAction = std::variant<MoveTo, Assess>;

struct MissionStep {
  MissionState state;
  std::vector<MissionAction> actions;
};

/// Drone-frame point the drone rejoins at for a given human anchor.
Vec3 rejoin_point(const Pose& anchor, const FollowerConfig& cfg);

/// Mission transition function. Illegal (mode, event) pairs throw
/// Error(MissionViolation); the input state is never modified.
///
///   Follow + DetachOrder      -> Detach, move to first waypoint
///   Detach + WaypointReached  -> next waypoint, or Return toward the rejoin point
///   Return + ReturnArrived    -> Follow
///   any    + PoseUpdate       -> anchor updated; Follow asks for an
///                                assessment, Return re-aims at the moving
///                                rejoin point
MissionStep mission_step(const MissionState& state, const MissionEvent& event, const FollowerConfig& cfg);

struct FollowerStats {
  std::uint64_t commands = 0;
  std::uint64_t stale_poses = 0;
  std::uint64_t out_of_order = 0;
  std::uint64_t held_updates = 0;
  std::uint64_t rejected_orders = 0;
};

/// The follower agent. Pose and order handlers may be called from a
/// different thread than tick(); all state is guarded by one mutex so each
/// assessment reads (prev, curr, drone position) atomically.
///
/// Arrival at waypoints is dead-reckoned: the follower runs the same
/// kinematic model as the drone against the commands it issued.
class Follower {
 public:
  Follower(FollowerConfig cfg, agents::DroneState model);

  std::vector<protocol::CommandMsg> on_pose(const protocol::PoseMsg& msg);
  std::vector<protocol::CommandMsg> on_detach(const protocol::DetachMsg& msg);
  /// Fires arrival events for the current model position. Call once per
  /// control period before handling that period's messages.
  std::vector<protocol::CommandMsg> check_arrival();
  /// Advances the kinematic model by one control period.
  void advance(double dt);

  Mode mode() const;
  MissionState mission() const;
  FollowerStats stats() const;
  /// Dead-reckoned position the next assessment builds on.
  Vec3 reference_position() const;

 private:
  std::vector<protocol::CommandMsg> apply(const MissionEvent& event);
  protocol::CommandMsg issue(Vec3 target, double speed);

  FollowerConfig cfg_;
  mutable std::mutex mutex_;
  MissionState mission_;
  agents::DroneState model_;
  std::optional<Pose> last_pose_;
  std::optional<std::uint64_t> last_sequence_;
  Vec3 reference_{};
  double commanded_yaw_ = 0.0;
  std::uint64_t next_sequence_ = 0;
  FollowerStats stats_;
};

}  // namespace tagteam::follower
