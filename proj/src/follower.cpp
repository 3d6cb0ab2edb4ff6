#include "tagteam/follower.hpp"

#include <cmath>
#include <numbers>

#include "tagteam/error.hpp"

namespace tagteam::follower {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

[[noreturn]] void illegal(Mode mode, const char* event) {
  throw Error(ErrorKind::MissionViolation,
              std::string(event) + " is not valid in mode " + std::string(to_string(mode)));
}

}  // namespace

void validate(const FollowerConfig& cfg) {
  if (!(cfg.update_period > 0.0) || !std::isfinite(cfg.update_period)) {
    throw Error(ErrorKind::InvalidInput, "follower.update_period: must be > 0");
  }
  if (!(cfg.max_speed > 0.0) || !std::isfinite(cfg.max_speed)) {
    throw Error(ErrorKind::InvalidInput, "follower.max_speed: must be > 0");
  }
  if (!std::isfinite(cfg.altitude)) throw Error(ErrorKind::InvalidInput, "follower.altitude: must be finite");
  if (!cfg.follow_offset.finite()) throw Error(ErrorKind::InvalidInput, "follower.follow_offset: must be finite");
  if (!(cfg.deadband >= 0.0)) throw Error(ErrorKind::InvalidInput, "follower.deadband: must be >= 0");
}

std::string_view to_string(Mode mode) noexcept {
  switch (mode) {
    case Mode::Follow: return "FOLLOW";
    case Mode::Detach: return "DETACH";
    case Mode::Return: return "RETURN";
  }
  return "FOLLOW";
}

std::optional<protocol::CommandMsg> assess(const Pose& prev, const Pose& curr, Vec3 drone_pos,
                                           const FollowerConfig& cfg) {
  const double elapsed = curr.timestamp - prev.timestamp;
  if (!(elapsed > 0.0)) {
    throw Error(ErrorKind::StalePose, "pose at t=" + std::to_string(curr.timestamp) +
                                          " is not newer than t=" + std::to_string(prev.timestamp));
  }
  // no extrapolation across missed updates
  if (elapsed > 2.0 * cfg.update_period + 1e-6) return std::nullopt;

  const Vec3 delta = geometry::wearable_delta_to_drone_delta(curr.position - prev.position);
  const double distance = delta.norm();
  if (distance == 0.0 || distance < cfg.deadband) return std::nullopt;

  double speed = distance / elapsed;
  if (cfg.clamp_speed) speed = std::min(speed, cfg.max_speed);

  protocol::CommandMsg cmd;
  cmd.target = drone_pos + delta;
  cmd.yaw = geometry::normalize_yaw(curr.yaw + std::numbers::pi);
  cmd.speed = speed;
  return cmd;
}

Vec3 rejoin_point(const Pose& anchor, const FollowerConfig& cfg) {
  return geometry::wearable_delta_to_drone_delta(anchor.position) + cfg.follow_offset;
}

MissionStep mission_step(const MissionState& state, const MissionEvent& event, const FollowerConfig& cfg) {
  MissionStep out{state, {}};
  MissionState& next = out.state;
  std::visit(Overloaded{
                 [&](const PoseUpdate& e) {
                   next.anchor = e.pose;
                   if (state.mode == Mode::Follow) out.actions.emplace_back(Assess{});
                   if (state.mode == Mode::Return) out.actions.emplace_back(MoveTo{rejoin_point(e.pose, cfg)});
                 },
                 [&](const DetachOrder& e) {
                   if (state.mode != Mode::Follow) illegal(state.mode, "DetachOrder");
                   if (e.waypoints.empty()) {
                     throw Error(ErrorKind::MissionViolation, "DetachOrder needs at least one waypoint");
                   }
                   next.mode = Mode::Detach;
                   next.waypoints = e.waypoints;
                   next.index = 0;
                   out.actions.emplace_back(MoveTo{e.waypoints.front()});
                 },
                 [&](const WaypointReached&) {
                   if (state.mode != Mode::Detach) illegal(state.mode, "WaypointReached");
                   if (state.index + 1 < state.waypoints.size()) {
                     next.index = state.index + 1;
                     out.actions.emplace_back(MoveTo{state.waypoints[next.index]});
                   } else {
                     next.mode = Mode::Return;
                     next.waypoints.clear();
                     next.index = 0;
                     out.actions.emplace_back(MoveTo{rejoin_point(state.anchor, cfg)});
                   }
                 },
                 [&](const ReturnArrived&) {
                   if (state.mode != Mode::Return) illegal(state.mode, "ReturnArrived");
                   next.mode = Mode::Follow;
                 },
             },
             event);
  return out;
}

// --- Follower agent ---------------------------------------------------------

Follower::Follower(FollowerConfig cfg, agents::DroneState model) : cfg_(cfg), model_(std::move(model)) {
  validate(cfg_);
  model_.command.reset();
  reference_ = model_.pose.position;
  commanded_yaw_ = model_.pose.yaw;
}

protocol::CommandMsg Follower::issue(Vec3 target, double speed) {
  // the model must see exactly what the drone will decode off the wire
  using protocol::quantize;
  const Vec3 wire_target{quantize(target.x), quantize(target.y), quantize(target.z)};
  protocol::CommandMsg cmd{wire_target, quantize(commanded_yaw_), quantize(speed), next_sequence_++};
  model_.command = cmd;
  reference_ = wire_target;
  ++stats_.commands;
  return cmd;
}

std::vector<protocol::CommandMsg> Follower::apply(const MissionEvent& event) {
  const MissionStep step = mission_step(mission_, event, cfg_);
  std::vector<protocol::CommandMsg> out;
  for (const auto& action : step.actions) {
    if (const auto* move = std::get_if<MoveTo>(&action)) {
      out.push_back(issue(move->target, cfg_.max_speed));
    }
  }
  mission_ = step.state;
  return out;
}

std::vector<protocol::CommandMsg> Follower::on_pose(const protocol::PoseMsg& msg) {
  std::lock_guard lock(mutex_);
  if (last_sequence_ && msg.sequence <= *last_sequence_) {
    ++stats_.out_of_order;
    return {};
  }
  const Pose curr = msg.pose;
  std::optional<protocol::CommandMsg> assessed;
  if (last_pose_ && mission_.mode == Mode::Follow) {
    try {
      assessed = assess(*last_pose_, curr, reference_, cfg_);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::StalePose) throw;
      ++stats_.stale_poses;
      return {};
    }
  } else if (last_pose_ && !(curr.timestamp > last_pose_->timestamp)) {
    ++stats_.stale_poses;
    return {};
  }
  last_sequence_ = msg.sequence;
  last_pose_ = curr;

  const MissionStep step = mission_step(mission_, PoseUpdate{curr}, cfg_);
  mission_ = step.state;
  std::vector<protocol::CommandMsg> out;
  for (const auto& action : step.actions) {
    if (std::holds_alternative<Assess>(action)) {
      if (assessed) {
        commanded_yaw_ = assessed->yaw;
        out.push_back(issue(assessed->target, assessed->speed));
      } else if (mission_.mode == Mode::Follow && model_.command) {
        ++stats_.held_updates;
      }
    } else if (const auto* move = std::get_if<MoveTo>(&action)) {
      commanded_yaw_ = geometry::normalize_yaw(curr.yaw + std::numbers::pi);
      out.push_back(issue(move->target, cfg_.max_speed));
    }
  }
  return out;
}

std::vector<protocol::CommandMsg> Follower::on_detach(const protocol::DetachMsg& msg) {
  std::lock_guard lock(mutex_);
  try {
    return apply(DetachOrder{msg.waypoints});
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::MissionViolation) throw;
    ++stats_.rejected_orders;
    return {};
  }
}

std::vector<protocol::CommandMsg> Follower::check_arrival() {
  std::lock_guard lock(mutex_);
  if (!model_.command || !(model_.pose.position == model_.command->target)) return {};
  if (mission_.mode == Mode::Detach) return apply(WaypointReached{});
  if (mission_.mode == Mode::Return) return apply(ReturnArrived{});
  return {};
}

void Follower::advance(double dt) {
  std::lock_guard lock(mutex_);
  model_ = agents::drone_step(model_, dt);
}

Mode Follower::mode() const {
  std::lock_guard lock(mutex_);
  return mission_.mode;
}

MissionState Follower::mission() const {
  std::lock_guard lock(mutex_);
  return mission_;
}

FollowerStats Follower::stats() const {
  std::lock_guard lock(mutex_);
  return stats_;
}

Vec3 Follower::reference_position() const {
  std::lock_guard lock(mutex_);
  return reference_;
}

}  // namespace tagteam::follower
