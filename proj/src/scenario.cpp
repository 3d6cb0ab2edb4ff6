#include "tagteam/scenario.hpp"

#include <json.hpp>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <memory>
#include <numbers>
#include <set>
#include <sstream>

#include "csv.hpp"
#include "tagteam/error.hpp"
#include "tagteam/net.hpp"
#include "tagteam/transport.hpp"

namespace tagteam::scenario {

using geometry::Vec3;
using nlohmann::json;
namespace topics = transport::topics;

namespace {

[[noreturn]] void config_error(const std::string& what) { throw Error(ErrorKind::Config, what); }

// --- config parsing -----------------------------------------------------------

class Section {
 public:
  Section(const json& j, std::string path, std::initializer_list<const char*> allowed) : j_(j), path_(std::move(path)) {
    if (!j.is_object()) config_error(path_ + ": must be an object");
    for (const auto& item : j.items()) {
      bool ok = false;
      for (const char* k : allowed) ok = ok || item.key() == k;
      if (!ok) config_error(key(item.key()) + ": unknown key");
    }
  }

  bool has(const char* k) const { return j_.contains(k); }
  const json& raw(const char* k) const { return j_.at(k); }
  std::string key(const std::string& k) const { return path_.empty() ? k : path_ + "." + k; }

  double num(const char* k, double fallback) const {
    if (!has(k)) return fallback;
    if (!j_.at(k).is_number()) config_error(key(k) + ": must be a number");
    return j_.at(k).get<double>();
  }
  std::uint64_t uint(const char* k, std::uint64_t fallback) const {
    if (!has(k)) return fallback;
    if (!j_.at(k).is_number_unsigned()) config_error(key(k) + ": must be a non-negative integer");
    return j_.at(k).get<std::uint64_t>();
  }
  std::string str(const char* k, const std::string& fallback) const {
    if (!has(k)) return fallback;
    if (!j_.at(k).is_string()) config_error(key(k) + ": must be a string");
    return j_.at(k).get<std::string>();
  }
  bool boolean(const char* k, bool fallback) const {
    if (!has(k)) return fallback;
    if (!j_.at(k).is_boolean()) config_error(key(k) + ": must be a boolean");
    return j_.at(k).get<bool>();
  }
  Vec3 vec(const char* k, Vec3 fallback) const {
    if (!has(k)) return fallback;
    return to_vec(j_.at(k), key(k));
  }

  static Vec3 to_vec(const json& v, const std::string& where) {
    if (!v.is_array() || v.size() != 3) config_error(where + ": must be [x, y, z]");
    for (const auto& c : v) {
      if (!c.is_number()) config_error(where + ": components must be numbers");
    }
    return Vec3{v[0].get<double>(), v[1].get<double>(), v[2].get<double>()};
  }

 private:
  const json& j_;
  std::string path_;
};

std::string resolve_path(const std::string& path, const std::string& base_dir) {
  std::filesystem::path p(path);
  if (p.is_relative()) p = std::filesystem::path(base_dir) / p;
  if (!std::filesystem::exists(p)) config_error("file not found: " + p.string());
  return p.string();
}

agents::TrajectorySpec parse_trajectory(const json& j, const std::string& base_dir) {
  Section s(j, "trajectory",
            {"kind", "radius", "angular_speed", "semi_axis_a", "semi_axis_b", "points", "csv", "noise_sigma", "rate"});
  agents::TrajectorySpec spec;
  const std::string kind = s.str("kind", "circle");
  const double default_omega = 2.0 * std::numbers::pi / 20.0;
  if (kind == "circle") {
    spec.kind = agents::Circle{s.num("radius", 0.5), s.num("angular_speed", default_omega)};
  } else if (kind == "ellipse") {
    spec.kind = agents::Ellipse{s.num("semi_axis_a", 0.75), s.num("semi_axis_b", 0.5),
                                s.num("angular_speed", default_omega)};
  } else if (kind == "waypoints") {
    agents::Waypoints w;
    if (s.has("csv") == s.has("points")) config_error("trajectory: waypoints need exactly one of 'csv' or 'points'");
    if (s.has("csv")) {
      try {
        w.points = agents::load_waypoints_csv(resolve_path(s.str("csv", ""), base_dir));
      } catch (const Error& e) {
        if (e.kind() == ErrorKind::Config) throw;
        config_error(std::string("trajectory.csv: ") + e.what());
      }
    } else {
      const json& pts = s.raw("points");
      if (!pts.is_array()) config_error("trajectory.points: must be an array of [t, x, y, z]");
      for (const auto& p : pts) {
        if (!p.is_array() || p.size() != 4) config_error("trajectory.points: entries must be [t, x, y, z]");
        for (const auto& c : p) {
          if (!c.is_number()) config_error("trajectory.points: entries must be numbers");
        }
        w.points.push_back(agents::TimedPoint{p[0].get<double>(), Vec3{p[1].get<double>(), p[2].get<double>(),
                                                                          p[3].get<double>()}});
      }
    }
    spec.kind = std::move(w);
  } else {
    config_error("trajectory.kind: expected circle, ellipse or waypoints");
  }
  spec.noise_sigma = s.num("noise_sigma", 0.0);
  spec.rate = s.num("rate", 10.0);
  return spec;
}

template <class F>
void rethrow_as_config(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::Config) throw;
    config_error(e.what());
  }
}

// --- run loop plumbing --------------------------------------------------------

/// One agent's connection plus the deliveries it is owed. In sockets mode
/// `await` blocks until the broker has delivered everything published so far
/// that matches this endpoint's filters.
struct Endpoint {
  std::unique_ptr<transport::Client> client;
  std::vector<std::string> filters;
  std::vector<transport::Publish> pending;
  std::size_t owed = 0;
  net::TcpClient* tcp = nullptr;

  void await() {
    if (pending.size() >= owed) return;
    if (tcp != nullptr) {
      auto got = tcp->receive(owed - pending.size(), std::chrono::seconds(10));
      pending.insert(pending.end(), got.begin(), got.end());
    } else {
      auto got = client->drain();
      pending.insert(pending.end(), got.begin(), got.end());
    }
    if (pending.size() < owed) {
      throw Error(ErrorKind::Runtime, "endpoint '" + client->id() + "' lost deliveries");
    }
  }

  std::vector<transport::Publish> take() {
    await();
    std::vector<transport::Publish> out;
    out.swap(pending);
    owed -= out.size();
    return out;
  }
};

class Bus {
 public:
  Bus(const ScenarioConfig& cfg, transport::Broker& broker) : cfg_(cfg), broker_(broker) {
    if (cfg.mode == RunMode::Sockets) {
      server_ = std::make_unique<net::TcpBrokerServer>(broker);
      server_->start(cfg.broker_host, cfg.broker_port);
    }
    recorder_ = &add("recorder", {"tagteam/#"});
  }

  ~Bus() {
    endpoints_.clear();
    if (server_) server_->stop();
  }

  Endpoint& add(const std::string& id, std::vector<std::string> filters) {
    auto ep = std::make_unique<Endpoint>();
    if (cfg_.mode == RunMode::Sockets) {
      auto tcp = std::make_unique<net::TcpClient>(cfg_.broker_host, server_->port(), id);
      ep->tcp = tcp.get();
      ep->client = std::move(tcp);
    } else {
      ep->client = std::make_unique<transport::LoopbackClient>(broker_, id);
    }
    for (const auto& f : filters) ep->client->subscribe(f);
    ep->filters = std::move(filters);
    endpoints_.push_back(std::move(ep));
    return *endpoints_.back();
  }

  void publish(Endpoint& from, const protocol::Message& msg, double t, RunTrace& trace) {
    const std::string topic(protocol::topic_for(msg));
    std::string payload = protocol::encode_message(msg);
    from.client->publish(topic, payload);
    for (auto& ep : endpoints_) {
      for (const auto& f : ep->filters) {
        if (transport::topic_matches(f, topic)) {
          ++ep->owed;
          break;
        }
      }
    }
    // serializes publishes from different sessions into one global order
    for (auto& p : recorder_->take()) trace.messages.push_back(LogEntry{t, std::move(p.topic), std::move(p.payload)});
  }

 private:
  const ScenarioConfig& cfg_;
  transport::Broker& broker_;
  std::unique_ptr<net::TcpBrokerServer> server_;
  std::vector<std::unique_ptr<Endpoint>> endpoints_;
  Endpoint* recorder_ = nullptr;
};

template <class T>
std::vector<T> decode_all(std::vector<transport::Publish> deliveries) {
  std::vector<T> out;
  for (const auto& d : deliveries) {
    auto m = protocol::decode_message(d.topic, d.payload);
    if (auto* v = std::get_if<T>(&m)) out.push_back(std::move(*v));
  }
  return out;
}

std::string fmt(double v) { return protocol::format_number(v); }

}  // namespace

void validate(const ScenarioConfig& cfg) {
  rethrow_as_config([&] {
    agents::validate(cfg.trajectory);
    follower::validate(cfg.follower);
    agents::validate(cfg.detector);
    cueing::validate(cfg.attention);
  });
  if (!(cfg.duration > 0.0) || !std::isfinite(cfg.duration)) config_error("duration: must be > 0");
  if (!std::isfinite(cfg.drone_start_x) || !std::isfinite(cfg.drone_start_z)) {
    config_error("drone.start: must be finite");
  }
  if (!(cfg.yaw_rate > 0.0) || !std::isfinite(cfg.yaw_rate)) config_error("drone.yaw_rate: must be > 0");
  std::set<std::string> ids;
  for (const auto& o : cfg.world) {
    if (!o.position.finite()) config_error("world: object '" + o.id + "' has a non-finite position");
    if (!ids.insert(o.id).second) config_error("world: duplicate object id '" + o.id + "'");
  }
  for (const auto& d : cfg.detach_script) {
    if (!(d.t >= 0.0) || !std::isfinite(d.t)) config_error("detach_script: t must be >= 0");
    if (d.waypoints.empty()) config_error("detach_script: each order needs at least one waypoint");
    for (const auto& w : d.waypoints) {
      if (!w.finite()) config_error("detach_script: waypoints must be finite");
    }
  }
}

ScenarioConfig parse_config(const std::string& json_text, const std::string& base_dir) {
  const json root = json::parse(json_text, nullptr, false);
  if (root.is_discarded()) config_error("config is not valid JSON");
  Section s(root, "", {"trajectory", "follower", "drone", "detector", "attention", "world", "world_csv", "duration",
                       "seed", "mode", "broker", "detach_script"});
  ScenarioConfig cfg = circle_scenario();
  if (s.has("trajectory")) cfg.trajectory = parse_trajectory(s.raw("trajectory"), base_dir);

  if (s.has("follower")) {
    Section f(s.raw("follower"), "follower",
              {"update_period", "max_speed", "altitude", "follow_offset", "deadband", "clamp_speed"});
    cfg.follower.update_period = f.num("update_period", cfg.follower.update_period);
    cfg.follower.max_speed = f.num("max_speed", cfg.follower.max_speed);
    cfg.follower.altitude = f.num("altitude", cfg.follower.altitude);
    cfg.follower.follow_offset = f.vec("follow_offset", cfg.follower.follow_offset);
    cfg.follower.deadband = f.num("deadband", cfg.follower.deadband);
    cfg.follower.clamp_speed = f.boolean("clamp_speed", cfg.follower.clamp_speed);
  }
  if (s.has("drone")) {
    Section d(s.raw("drone"), "drone", {"start", "yaw_rate"});
    if (d.has("start")) {
      const json& st = d.raw("start");
      if (!st.is_array() || st.size() != 2 || !st[0].is_number() || !st[1].is_number()) {
        config_error("drone.start: must be [x, z]");
      }
      cfg.drone_start_x = st[0].get<double>();
      cfg.drone_start_z = st[1].get<double>();
    }
    cfg.yaw_rate = d.num("yaw_rate", cfg.yaw_rate);
  }
  if (s.has("detector")) {
    Section d(s.raw("detector"), "detector", {"fov", "range", "p_detect", "pos_noise_sigma"});
    cfg.detector.fov = d.num("fov", cfg.detector.fov);
    cfg.detector.range = d.num("range", cfg.detector.range);
    cfg.detector.p_detect = d.num("p_detect", cfg.detector.p_detect);
    cfg.detector.pos_noise_sigma = d.num("pos_noise_sigma", cfg.detector.pos_noise_sigma);
  }
  if (s.has("attention")) {
    Section a(s.raw("attention"), "attention", {"human_fov", "cue_range", "dedup_window"});
    cfg.attention.human_fov = a.num("human_fov", cfg.attention.human_fov);
    cfg.attention.cue_range = a.num("cue_range", cfg.attention.cue_range);
    cfg.attention.dedup_window = a.num("dedup_window", cfg.attention.dedup_window);
  }
  if (s.has("world") && s.has("world_csv")) config_error("world: give either 'world' or 'world_csv'");
  if (s.has("world")) {
    const json& w = s.raw("world");
    if (!w.is_array()) config_error("world: must be an array");
    for (const auto& o : w) {
      Section obj(o, "world[]", {"id", "label", "position"});
      if (!obj.has("id") || !obj.has("position")) config_error("world[]: needs 'id' and 'position'");
      cfg.world.push_back(agents::WorldObject{obj.str("id", ""), obj.str("label", ""), obj.vec("position", {})});
    }
  }
  if (s.has("world_csv")) {
    const std::string path = resolve_path(s.str("world_csv", ""), base_dir);
    rethrow_as_config([&] { cfg.world = agents::load_world_csv(path); });
  }
  cfg.duration = s.num("duration", cfg.duration);
  cfg.seed = s.uint("seed", cfg.seed);
  const std::string mode = s.str("mode", "deterministic");
  if (mode == "deterministic") {
    cfg.mode = RunMode::Deterministic;
  } else if (mode == "sockets") {
    cfg.mode = RunMode::Sockets;
  } else {
    config_error("mode: expected deterministic or sockets");
  }
  if (s.has("broker")) {
    Section b(s.raw("broker"), "broker", {"host", "port"});
    cfg.broker_host = b.str("host", cfg.broker_host);
    const std::uint64_t port = b.uint("port", cfg.broker_port);
    if (port > 65535) config_error("broker.port: out of range");
    cfg.broker_port = static_cast<std::uint16_t>(port);
  }
  if (s.has("detach_script")) {
    const json& script = s.raw("detach_script");
    if (!script.is_array()) config_error("detach_script: must be an array");
    for (const auto& e : script) {
      Section ev(e, "detach_script[]", {"t", "waypoints"});
      DetachEvent d;
      d.t = ev.num("t", -1.0);
      if (!ev.has("waypoints") || !ev.raw("waypoints").is_array()) {
        config_error("detach_script[].waypoints: must be an array of [x, y, z]");
      }
      for (const auto& w : ev.raw("waypoints")) d.waypoints.push_back(Section::to_vec(w, "detach_script[].waypoints"));
      cfg.detach_script.push_back(std::move(d));
    }
  }
  validate(cfg);
  return cfg;
}

ScenarioConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) config_error("cannot open config '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  const auto dir = std::filesystem::path(path).parent_path();
  return parse_config(buf.str(), dir.empty() ? "." : dir.string());
}

ScenarioConfig circle_scenario() {
  ScenarioConfig cfg;
  cfg.trajectory.kind = agents::Circle{0.5, 2.0 * std::numbers::pi / 20.0};
  cfg.trajectory.rate = 10.0;
  cfg.follower.update_period = 0.1;
  cfg.duration = 60.0;
  return cfg;
}

ScenarioConfig ellipse_scenario() {
  ScenarioConfig cfg = circle_scenario();
  cfg.trajectory.kind = agents::Ellipse{0.75, 0.5, 2.0 * std::numbers::pi / 20.0};
  return cfg;
}

RunResult run_scenario(const ScenarioConfig& cfg) {
  validate(cfg);
  const double dt = cfg.follower.update_period;
  const auto ticks = static_cast<std::uint64_t>(std::llround(cfg.duration / dt));
  const Vec3 drone_start{cfg.drone_start_x, cfg.follower.altitude, cfg.drone_start_z};

  transport::Broker broker;
  Bus bus(cfg, broker);
  Endpoint& wearable_ep = bus.add("wearable", {});
  Endpoint& operator_ep = bus.add("operator", {});
  Endpoint& follower_ep = bus.add("follower", {std::string(topics::kPose), std::string(topics::kCommand)});
  Endpoint& drone_ep = bus.add("drone", {std::string(topics::kCommand)});
  Endpoint& detector_ep = bus.add("detector", {});
  Endpoint& hololens_ep = bus.add("hololens", {std::string(topics::kPose), std::string(topics::kDetections)});

  agents::Wearable wearable(cfg.trajectory, cfg.seed);
  agents::DroneState drone;
  drone.pose = geometry::Pose{Vec3{}, geometry::normalize_yaw(std::numbers::pi), geometry::FrameId::Drone, 0.0};
  drone.max_speed = cfg.follower.max_speed;
  drone.altitude = cfg.follower.altitude;
  drone.yaw_rate = cfg.yaw_rate;
  follower::Follower follower(cfg.follower, drone);
  cueing::CueingAgent cueing(cfg.attention);
  auto detector_rng = agents::make_rng(cfg.seed, 2);

  std::vector<bool> fired(cfg.detach_script.size(), false);
  std::uint64_t detach_seq = 0;
  std::uint64_t last_cmd_seq = 0;
  bool have_cmd = false;

  RunResult result;
  RunTrace& trace = result.trace;
  trace.rows.reserve(ticks + 1);

  for (std::uint64_t k = 0; k <= ticks; ++k) {
    const double t = static_cast<double>(k) * dt;

    if (auto pose = wearable.tick(t)) bus.publish(wearable_ep, *pose, t, trace);

    for (std::size_t i = 0; i < cfg.detach_script.size(); ++i) {
      if (!fired[i] && cfg.detach_script[i].t <= t + 1e-9) {
        fired[i] = true;
        bus.publish(operator_ep, protocol::DetachMsg{cfg.detach_script[i].waypoints, detach_seq++}, t, trace);
      }
    }

    // follower: arrival events for the position reached last period, then inbound messages
    for (const auto& cmd : follower.check_arrival()) bus.publish(follower_ep, cmd, t, trace);
    for (const auto& d : follower_ep.take()) {
      const auto msg = protocol::decode_message(d.topic, d.payload);
      std::vector<protocol::CommandMsg> out;
      if (const auto* pose = std::get_if<protocol::PoseMsg>(&msg)) {
        out = follower.on_pose(*pose);
      } else if (const auto* order = std::get_if<protocol::DetachMsg>(&msg)) {
        out = follower.on_detach(*order);
      }
      for (const auto& cmd : out) bus.publish(follower_ep, cmd, t, trace);
    }
    follower.advance(dt);

    for (const auto& cmd : decode_all<protocol::CommandMsg>(drone_ep.take())) {
      if (have_cmd && cmd.sequence <= last_cmd_seq) continue;
      drone.command = cmd;
      last_cmd_seq = cmd.sequence;
      have_cmd = true;
    }
    drone = agents::drone_step(drone, dt);

    const geometry::Pose drone_world{agents::drone_to_world(drone.pose.position, drone_start, drone.altitude),
                                     drone.pose.yaw, geometry::FrameId::World, t};
    for (const auto& det : agents::detect_objects(drone_world, cfg.world, cfg.detector, detector_rng)) {
      ++trace.detections;
      bus.publish(detector_ep, det, t, trace);
    }

    for (const auto& d : hololens_ep.take()) {
      const auto msg = protocol::decode_message(d.topic, d.payload);
      if (const auto* pose = std::get_if<protocol::PoseMsg>(&msg)) {
        cueing.on_pose(*pose);
      } else if (const auto* det = std::get_if<protocol::DetectionMsg>(&msg)) {
        if (auto cue = cueing.on_detection(*det)) {
          ++trace.cues;
          bus.publish(hololens_ep, *cue, t, trace);
        }
      }
    }

    geometry::Pose human = wearable.true_pose(t);
    human.frame = geometry::FrameId::World;
    trace.rows.push_back(TraceRow{t, human, drone_world, drone.command, follower.mode(), drone.pose.position});
  }

  trace.follower_stats = follower.stats();
  result.report = evaluate_trace(trace);
  return result;
}

eval::SyncReport evaluate_trace(const RunTrace& trace) {
  if (trace.rows.empty()) throw Error(ErrorKind::InvalidInput, "trace has no rows");
  eval::Trajectory human{{}, "human", eval::Units::Meters};
  eval::Trajectory drone{{}, "drone", eval::Units::Meters};
  for (const auto& row : trace.rows) {
    const Vec3 mapped = geometry::wearable_delta_to_drone_delta(row.human.position);
    human.points.push_back(eval::Sample{row.t, eval::Point2{mapped.x, mapped.z}});
    drone.points.push_back(eval::Sample{row.t, eval::Point2{row.drone_local.x, row.drone_local.z}});
  }
  return eval::sync_report(human, drone);
}

void write_trace_csv(std::ostream& out, const RunTrace& trace) {
  out << "t,hx,hy,hz,hyaw,dx,dy,dz,dyaw,mode\n";
  for (const auto& r : trace.rows) {
    out << fmt(r.t) << ',' << fmt(r.human.position.x) << ',' << fmt(r.human.position.y) << ','
        << fmt(r.human.position.z) << ',' << fmt(r.human.yaw) << ',' << fmt(r.drone.position.x) << ','
        << fmt(r.drone.position.y) << ',' << fmt(r.drone.position.z) << ',' << fmt(r.drone.yaw) << ','
        << follower::to_string(r.mode) << '\n';
  }
}

void write_messages_jsonl(std::ostream& out, const RunTrace& trace) {
  for (const auto& m : trace.messages) {
    out << "{\"t\":" << fmt(m.t) << ",\"topic\":" << json(m.topic).dump() << ",\"payload\":" << m.payload << "}\n";
  }
}

RunTrace read_trace_csv(std::istream& in) {
  detail::expect_header(in, "t,hx,hy,hz,hyaw,dx,dy,dz,dyaw,mode");
  RunTrace trace;
  std::string line;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto c = detail::split_csv_line(line);
    if (c.size() != 10) throw Error(ErrorKind::Parse, "line " + std::to_string(lineno) + ": expected 10 columns");
    auto num = [&](std::size_t i, const char* name) { return detail::parse_double(c[i], lineno, name); };
    TraceRow row;
    row.t = num(0, "t");
    row.human = geometry::Pose{Vec3{num(1, "hx"), num(2, "hy"), num(3, "hz")}, num(4, "hyaw"),
                               geometry::FrameId::World, row.t};
    row.drone = geometry::Pose{Vec3{num(5, "dx"), num(6, "dy"), num(7, "dz")}, num(8, "dyaw"),
                               geometry::FrameId::World, row.t};
    if (c[9] == "FOLLOW") {
      row.mode = follower::Mode::Follow;
    } else if (c[9] == "DETACH") {
      row.mode = follower::Mode::Detach;
    } else if (c[9] == "RETURN") {
      row.mode = follower::Mode::Return;
    } else {
      throw Error(ErrorKind::Parse, "line " + std::to_string(lineno) + ": unknown mode '" + c[9] + "'");
    }
    // world -> drone-local up to a translation, which shape normalization removes
    row.drone_local = geometry::wearable_delta_to_drone_delta(row.drone.position);
    trace.rows.push_back(row);
  }
  return trace;
}

}  // namespace tagteam::scenario
