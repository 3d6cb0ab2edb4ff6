#include "tagteam/agents.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <set>

#include "csv.hpp"
#include "tagteam/error.hpp"

namespace tagteam::agents {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

[[noreturn]] void invalid(const std::string& what) { throw Error(ErrorKind::InvalidInput, what); }

std::ifstream open_or_throw(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Parse, "cannot open '" + path + "'");
  return in;
}

}  // namespace

void validate(const TrajectorySpec& spec) {
  if (const auto* c = std::get_if<Circle>(&spec.kind)) {
    if (!(c->radius > 0.0) || !std::isfinite(c->radius)) invalid("trajectory.radius: must be > 0");
    if (!std::isfinite(c->angular_speed)) invalid("trajectory.angular_speed: must be finite");
  } else if (const auto* e = std::get_if<Ellipse>(&spec.kind)) {
    if (!(e->semi_axis_a > 0.0) || !std::isfinite(e->semi_axis_a)) invalid("trajectory.semi_axis_a: must be > 0");
    if (!(e->semi_axis_b > 0.0) || !std::isfinite(e->semi_axis_b)) invalid("trajectory.semi_axis_b: must be > 0");
    if (!std::isfinite(e->angular_speed)) invalid("trajectory.angular_speed: must be finite");
  } else {
    const auto& pts = std::get<Waypoints>(spec.kind).points;
    if (pts.empty()) invalid("trajectory.waypoints: must be non-empty");
    for (std::size_t i = 0; i < pts.size(); ++i) {
      if (!std::isfinite(pts[i].t) || !pts[i].position.finite()) invalid("trajectory.waypoints: non-finite value");
      if (i > 0 && !(pts[i].t > pts[i - 1].t)) invalid("trajectory.waypoints: times must be strictly increasing");
    }
  }
  if (!(spec.noise_sigma >= 0.0) || !std::isfinite(spec.noise_sigma)) invalid("trajectory.noise_sigma: must be >= 0");
  if (!(spec.rate > 0.0) || !std::isfinite(spec.rate)) invalid("trajectory.rate: must be > 0");
}

Vec3 circle_trajectory(double radius, double omega, double t) {
  return Vec3{radius * std::cos(omega * t) - radius, 0.0, radius * std::sin(omega * t)};
}

Vec3 ellipse_trajectory(double a, double b, double omega, double t) {
  return Vec3{a * std::cos(omega * t) - a, 0.0, b * std::sin(omega * t)};
}

Vec3 sample_trajectory(const TrajectorySpec& spec, double t) {
  if (const auto* c = std::get_if<Circle>(&spec.kind)) return circle_trajectory(c->radius, c->angular_speed, t);
  if (const auto* e = std::get_if<Ellipse>(&spec.kind)) {
    return ellipse_trajectory(e->semi_axis_a, e->semi_axis_b, e->angular_speed, t);
  }
  const auto& pts = std::get<Waypoints>(spec.kind).points;
  if (t <= pts.front().t) return pts.front().position;
  if (t >= pts.back().t) return pts.back().position;
  const auto hi = std::upper_bound(pts.begin(), pts.end(), t,
                                   [](double v, const TimedPoint& p) { return v < p.t; });
  const auto lo = hi - 1;
  const double u = (t - lo->t) / (hi->t - lo->t);
  return lo->position + u * (hi->position - lo->position);
}

std::vector<TimedPoint> load_waypoints_csv(std::istream& in) {
  detail::expect_header(in, "t,x,y,z");
  std::vector<TimedPoint> out;
  std::string line;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != 4) {
      throw Error(ErrorKind::Parse, "line " + std::to_string(lineno) + ": expected 4 columns");
    }
    TimedPoint p;
    p.t = detail::parse_double(cells[0], lineno, "t");
    p.position = Vec3{detail::parse_double(cells[1], lineno, "x"), detail::parse_double(cells[2], lineno, "y"),
                      detail::parse_double(cells[3], lineno, "z")};
    if (!out.empty() && !(p.t > out.back().t)) {
      throw Error(ErrorKind::Parse, "line " + std::to_string(lineno) + ": t must be strictly increasing");
    }
    out.push_back(p);
  }
  return out;
}

std::vector<TimedPoint> load_waypoints_csv(const std::string& path) {
  auto in = open_or_throw(path);
  return load_waypoints_csv(in);
}

std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  return std::mt19937_64(seq);
}

// --- Wearable ---------------------------------------------------------------

Wearable::Wearable(TrajectorySpec spec, std::uint64_t seed, std::string source_id)
    : spec_(std::move(spec)), source_(std::move(source_id)), rng_(make_rng(seed, 1)) {
  validate(spec_);
}

Pose Wearable::true_pose(double t) const {
  return Pose{sample_trajectory(spec_, t), 0.0, geometry::FrameId::Wearable, t};
}

std::optional<protocol::PoseMsg> Wearable::tick(double t) {
  const double due = static_cast<double>(next_index_) / spec_.rate;
  if (due > t + 1e-9) return std::nullopt;
  Pose pose = true_pose(due);
  if (spec_.noise_sigma > 0.0) {
    std::normal_distribution<double> noise(0.0, spec_.noise_sigma);
    pose.position.x += noise(rng_);
    pose.position.y += noise(rng_);
    pose.position.z += noise(rng_);
  }
  protocol::PoseMsg msg{source_, pose, next_index_};
  ++next_index_;
  return msg;
}

// --- Drone ------------------------------------------------------------------

DroneState drone_step(const DroneState& state, double dt) {
  if (!(dt > 0.0)) throw Error(ErrorKind::InvalidInput, "drone_step: dt must be > 0");
  DroneState next = state;
  next.pose.timestamp = state.pose.timestamp + dt;
  if (!state.command) return next;

  const auto& cmd = *state.command;
  const Vec3 to_go = cmd.target - state.pose.position;
  const double remaining = to_go.norm();
  const double step = std::min(cmd.speed, state.max_speed) * dt;
  if (remaining <= step) {
    next.pose.position = cmd.target;
  } else {
    next.pose.position = state.pose.position + (step / remaining) * to_go;
  }

  const double turn = geometry::normalize_azimuth(cmd.yaw - state.pose.yaw);
  const double max_turn = state.yaw_rate * dt;
  next.pose.yaw = std::abs(turn) <= max_turn ? geometry::normalize_yaw(cmd.yaw)
                                             : geometry::normalize_yaw(state.pose.yaw + std::copysign(max_turn, turn));
  return next;
}

Vec3 drone_to_world(Vec3 drone_position, Vec3 start_world, double altitude) {
  const Vec3 horizontal = geometry::drone_delta_to_wearable_delta(drone_position);
  return Vec3{start_world.x + horizontal.x, altitude + drone_position.y, start_world.z + horizontal.z};
}

// --- World ------------------------------------------------------------------

std::vector<WorldObject> load_world_csv(std::istream& in) {
  detail::expect_header(in, "id,label,x,y,z");
  std::vector<WorldObject> out;
  std::set<std::string> ids;
  std::string line;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != 5) {
      throw Error(ErrorKind::Parse, "line " + std::to_string(lineno) + ": expected 5 columns");
    }
    if (cells[0].empty()) throw Error(ErrorKind::Parse, "line " + std::to_string(lineno) + ": empty id");
    if (!ids.insert(cells[0]).second) {
      throw Error(ErrorKind::Parse, "line " + std::to_string(lineno) + ": duplicate id '" + cells[0] + "'");
    }
    out.push_back(WorldObject{cells[0], cells[1],
                              Vec3{detail::parse_double(cells[2], lineno, "x"),
                                   detail::parse_double(cells[3], lineno, "y"),
                                   detail::parse_double(cells[4], lineno, "z")}});
  }
  return out;
}

std::vector<WorldObject> load_world_csv(const std::string& path) {
  auto in = open_or_throw(path);
  return load_world_csv(in);
}

// --- Detector ---------------------------------------------------------------

void validate(const DetectorParams& p) {
  if (!(p.fov > 0.0 && p.fov <= kTwoPi)) invalid("detector.fov: must lie in (0, 2pi]");
  if (!(p.range > 0.0) || !std::isfinite(p.range)) invalid("detector.range: must be > 0");
  if (!(p.p_detect >= 0.0 && p.p_detect <= 1.0)) invalid("detector.p_detect: must lie in [0, 1]");
  if (!(p.pos_noise_sigma >= 0.0) || !std::isfinite(p.pos_noise_sigma)) {
    invalid("detector.pos_noise_sigma: must be >= 0");
  }
}

std::vector<protocol::DetectionMsg> detect_objects(const Pose& drone_world, std::span<const WorldObject> world,
                                                   const DetectorParams& params, std::mt19937_64& rng) {
  validate(params);
  std::vector<protocol::DetectionMsg> out;
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  for (const auto& obj : world) {
    const auto polar = geometry::relative_polar(drone_world, obj.position);
    if (polar.distance > params.range) continue;
    if (std::abs(polar.azimuth) > params.fov / 2.0) continue;
    const double draw = uniform(rng);
    if (!(draw < params.p_detect)) continue;

    Vec3 reported = obj.position;
    if (params.pos_noise_sigma > 0.0) {
      std::normal_distribution<double> noise(0.0, params.pos_noise_sigma);
      reported.x += noise(rng);
      reported.y += noise(rng);
      reported.z += noise(rng);
    }
    const double confidence = 1.0 - 0.5 * (draw / params.p_detect);
    out.push_back(protocol::DetectionMsg{obj.id, obj.label, reported, confidence, drone_world.timestamp});
  }
  return out;
}

}  // namespace tagteam::agents
