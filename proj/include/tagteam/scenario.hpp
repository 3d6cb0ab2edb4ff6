#pragma once

// Scenario configuration and the end-to-end run loop binding wearable,
// follower, drone, detector and cueing agents over the broker.

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "tagteam/agents.hpp"
#include "tagteam/cueing.hpp"
#include "tagteam/eval.hpp"
#include "tagteam/follower.hpp"

namespace tagteam::scenario {

enum class RunMode { Deterministic, Sockets };

struct DetachEvent {
  double t = 0.0;
  std::vector<geometry::Vec3> waypoints;  // drone frame
};

struct ScenarioConfig {
  agents::TrajectorySpec trajectory;
  follower::FollowerConfig follower;
  agents::DetectorParams detector;
  cueing::AttentionModel attention;
  std::vector<agents::WorldObject> world;
  /// Horizontal world position of the drone at start; altitude comes from
  /// follower.altitude. Default: 1 m behind the wearer.
  double drone_start_x = -1.0;
  double drone_start_z = 0.0;
  double yaw_rate = 3.14159265358979;
  double duration = 60.0;
  std::uint64_t seed = 0;
  RunMode mode = RunMode::Deterministic;
  std::string broker_host = "127.0.0.1";
  std::uint16_t broker_port = 0;  // 0 picks a free port in sockets mode
  std::vector<DetachEvent> detach_script;
};

/// Throws Error(Config) on the first invalid field.
void validate(const ScenarioConfig& cfg);

/// Parses the JSON config schema (see docs/config.md). Relative CSV paths
/// resolve against `base_dir`. Throws Error(Config).
ScenarioConfig parse_config(const std::string& json_text, const std::string& base_dir = ".");
ScenarioConfig load_config(const std::string& path);

/// Canonical circle scenario: r = 0.5 m, one revolution per 20 s, 60 s.
ScenarioConfig circle_scenario();
/// Canonical ellipse scenario: a = 0.75 m, b = 0.5 m, one revolution per 20 s.
ScenarioConfig ellipse_scenario();

struct TraceRow {
  double t = 0.0;
  geometry::Pose human;  // world
  geometry::Pose drone;  // world
  std::optional<protocol::CommandMsg> command;
  follower::Mode mode = follower::Mode::Follow;
  geometry::Vec3 drone_local;  // drone frame
};

struct LogEntry {
  double t = 0.0;
  std::string topic;
  std::string payload;
};

struct RunTrace {
  std::vector<TraceRow> rows;
  std::vector<LogEntry> messages;
  follower::FollowerStats follower_stats;
  std::size_t cues = 0;
  std::size_t detections = 0;
};

struct RunResult {
  RunTrace trace;
  eval::SyncReport report;
};

/// Runs the scenario on a virtual clock with a fixed tick order per control
/// period: wearable, scripted orders, follower, drone, detector, cueing.
/// Deterministic mode uses in-process loopback links and never touches the
/// wall clock or the network; sockets mode starts a TCP broker and connects
/// every agent as its own session.
RunResult run_scenario(const ScenarioConfig& cfg);

/// Human path mapped into the drone frame versus the drone's own path.
eval::SyncReport evaluate_trace(const RunTrace& trace);

void write_trace_csv(std::ostream& out, const RunTrace& trace);
void write_messages_jsonl(std::ostream& out, const RunTrace& trace);

/// Reads a trace CSV back (t, human and drone world positions only).
RunTrace read_trace_csv(std::istream& in);

}  // namespace tagteam::scenario
