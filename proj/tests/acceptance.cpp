// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "dtw_oracle.hpp"
#include "generators.hpp"
#include "tagteam/cueing.hpp"
#include "tagteam/error.hpp"
#include "tagteam/eval.hpp"
#include "tagteam/follower.hpp"
#include "tagteam/geometry.hpp"
#include "tagteam/protocol.hpp"
#include "tagteam/scenario.hpp"
#include "tagteam/transport.hpp"

namespace fs = std::filesystem;
using namespace tagteam;
using geometry::Vec3;

namespace {

constexpr double kPi = std::numbers::pi;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::string seconds(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f s", v);
  return buf;
}

bool same_bits(double a, double b) { return std::memcmp(&a, &b, sizeof a) == 0; }

bool same_bits(const Vec3& a, const Vec3& b) { return same_bits(a.x, b.x) && same_bits(a.y, b.y) && same_bits(a.z, b.z); }

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// 1 -------------------------------------------------------------------------
Outcome synchronization() {
  Outcome o{true, ""};
  for (const auto& [name, cfg] : {std::pair{"circle", scenario::circle_scenario()},
                                  std::pair{"ellipse", scenario::ellipse_scenario()}}) {
    const auto start = std::chrono::steady_clock::now();
    const auto r = scenario::run_scenario(cfg);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool ok = r.report.similarity >= 0.92 && secs < 10.0;
    o.pass = o.pass && ok;
    o.detail += std::string(o.detail.empty() ? "" : ", ") + name + " similarity=" + num(r.report.similarity) +
                " (" + seconds(secs) + ")";
  }
  return o;
}

// 2 -------------------------------------------------------------------------
Outcome noise_robustness() {
  Outcome o{true, ""};
  double worst = 1.0;
  int passed = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto cfg = scenario::circle_scenario();
    cfg.trajectory.noise_sigma = 0.02;
    cfg.seed = seed;
    const double s = scenario::run_scenario(cfg).report.similarity;
    worst = std::min(worst, s);
    passed += s >= 0.85 ? 1 : 0;
  }
  o.pass = passed == 10;
  o.detail = std::to_string(passed) + "/10 seeds >= 0.85, min similarity=" + num(worst);
  return o;
}

// 3 -------------------------------------------------------------------------
Outcome dtw_oracle() {
  const auto seqs = testing::ternary_sequences(6);
  testing::MonotonePathOracle oracle;
  std::size_t pairs = 0;
  std::size_t mismatches = 0;
  std::vector<eval::Point2> pa;
  std::vector<eval::Point2> pb;
  for (const auto& a : seqs) {
    pa.clear();
    for (double v : a) pa.push_back({v, 0.0});
    for (const auto& b : seqs) {
      pb.clear();
      for (double v : b) pb.push_back({v, 0.0});
      ++pairs;
      if (eval::dtw(pa, pb).distance != oracle(a, b)) ++mismatches;
    }
  }
  return {mismatches == 0, std::to_string(pairs) + " pairs, " + std::to_string(mismatches) + " mismatches"};
}

// 4 -------------------------------------------------------------------------
Outcome transform_exactness() {
  const bool ex1 = same_bits(geometry::wearable_delta_to_drone_delta({1, 0, 0}), Vec3{0, 0, 1});
  const bool ex2 = same_bits(geometry::wearable_delta_to_drone_delta({0, 0, 1}), Vec3{-1, 0, 0});
  testing::Gen gen(4);
  double worst_round = 0.0;
  double worst_norm = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const Vec3 v = gen.vec(gen.coin() ? 1.0 : 1e3);
    const Vec3 back = geometry::drone_delta_to_wearable_delta(geometry::wearable_delta_to_drone_delta(v));
    worst_round = std::max({worst_round, std::abs(back.x - v.x), std::abs(back.y), std::abs(back.z - v.z)});
    const Vec3 d = geometry::wearable_delta_to_drone_delta(v);
    worst_norm = std::max(worst_norm, std::abs(std::hypot(d.x, d.z) - std::hypot(v.x, v.z)));
  }
  const bool ok = ex1 && ex2 && worst_round <= 1e-12 && worst_norm <= 1e-12;
  return {ok, std::string("examples ") + (ex1 && ex2 ? "bit-exact" : "MISMATCH") + ", max round-trip error=" +
                  num(worst_round) + ", max norm error=" + num(worst_norm)};
}

// 5 -------------------------------------------------------------------------
Outcome codec_and_broker() {
  using namespace transport;
  testing::Gen gen(5);
  std::vector<Packet> packets;
  Bytes stream;
  std::size_t round_trip_failures = 0;
  for (int i = 0; i < 10000; ++i) {
    packets.push_back(testing::random_packet(gen));
    const Bytes wire = encode_packet(packets.back());
    const auto r = decode_packet(wire);
    if (r.status != DecodeStatus::Ok || r.consumed != wire.size() || !(*r.packet == packets.back())) {
      ++round_trip_failures;
    }
    stream.insert(stream.end(), wire.begin(), wire.end());
  }

  std::size_t chunking_failures = 0;
  for (std::size_t max_chunk : {1u, 7u, 64u, 4096u}) {
    StreamDecoder dec;
    std::vector<Packet> got;
    std::size_t pos = 0;
    while (pos < stream.size()) {
      const std::size_t n = std::min(stream.size() - pos, gen.index(max_chunk) + 1);
      dec.feed(std::span(stream).subspan(pos, n));
      pos += n;
      while (auto p = dec.next()) got.push_back(*p);
    }
    if (got != packets) ++chunking_failures;
  }

  Broker broker;
  LoopbackClient p1(broker, "pub1");
  LoopbackClient p2(broker, "pub2");
  LoopbackClient s1(broker, "sub1");
  LoopbackClient s2(broker, "sub2");
  s1.subscribe("tagteam/#");
  s2.subscribe("tagteam/#");
  for (int i = 0; i < 1000; ++i) {
    p1.publish("tagteam/a", std::to_string(i));
    p2.publish("tagteam/b", std::to_string(i));
  }
  std::size_t deliveries = 0;
  std::size_t order_errors = 0;
  for (auto* s : {&s1, &s2}) {
    std::map<std::string, int> next;
    for (const auto& p : s->drain()) {
      ++deliveries;
      if (p.payload != std::to_string(next[p.topic]++)) ++order_errors;
    }
    if (next["tagteam/a"] != 1000 || next["tagteam/b"] != 1000) ++order_errors;
  }

  const bool ok = round_trip_failures == 0 && chunking_failures == 0 && deliveries == 4000 && order_errors == 0;
  return {ok, "10000 packets, " + std::to_string(round_trip_failures) + " round-trip failures, " +
                  std::to_string(chunking_failures) + " re-framing failures, " + std::to_string(deliveries) +
                  " deliveries, " + std::to_string(order_errors) + " order errors"};
}

// 6 -------------------------------------------------------------------------
Outcome path_reconstruction() {
  follower::FollowerConfig cfg;
  cfg.deadband = 0.0;
  cfg.clamp_speed = false;
  testing::Gen gen(6);
  std::vector<agents::TrajectorySpec> specs{scenario::circle_scenario().trajectory,
                                            scenario::ellipse_scenario().trajectory};
  for (int i = 0; i < 48; ++i) {
    agents::Waypoints w;
    double t = 0;
    for (int k = 0; k < 12; ++k) {
      w.points.push_back({t, gen.vec(3)});
      t += gen.real(0.3, 4);
    }
    specs.push_back({w, 0.0, 10.0});
  }
  double worst = 0.0;
  for (const auto& spec : specs) {
    const double dt = cfg.update_period;
    geometry::Pose prev{agents::sample_trajectory(spec, 0), 0, geometry::FrameId::Wearable, 0};
    const Vec3 start = prev.position;
    Vec3 drone{};
    for (int k = 1; k <= 600; ++k) {
      const double t = k * dt;
      const geometry::Pose curr{agents::sample_trajectory(spec, t), 0, geometry::FrameId::Wearable, t};
      if (auto cmd = follower::assess(prev, curr, drone, cfg)) drone = cmd->target;
      prev = curr;
    }
    const Vec3 expect = geometry::wearable_delta_to_drone_delta(prev.position - start);
    worst = std::max(worst, (drone - expect).norm());
  }
  return {worst <= 1e-9, std::to_string(specs.size()) + " trajectories, max error=" + num(worst) + " m"};
}

// 7 -------------------------------------------------------------------------
Outcome blindspot_oracle() {
  testing::Gen gen(7);
  std::size_t mismatches = 0;
  for (int i = 0; i < 10000; ++i) {
    const geometry::Pose h{gen.vec(2), gen.real(-kPi, kPi), geometry::FrameId::World, 0};
    const Vec3 p = gen.vec(6);
    const double fov = gen.real(1e-3, 2 * kPi);
    const double dx = p.x - h.position.x;
    const double dz = p.z - h.position.z;
    const double lx = dx * std::cos(h.yaw) + dz * std::sin(h.yaw);
    const double lz = -dx * std::sin(h.yaw) + dz * std::cos(h.yaw);
    const bool expect = !(dx == 0 && dz == 0) && std::abs(std::atan2(lz, lx)) > fov / 2;
    if (cueing::is_in_blindspot(h, p, fov) != expect) ++mismatches;
  }
  return {mismatches == 0, "10000 cases, " + std::to_string(mismatches) + " mismatches"};
}

// 8 -------------------------------------------------------------------------
Outcome boomerang() {
  auto cfg = scenario::circle_scenario();
  cfg.detach_script = {{20.0, {{1, 0, 0}, {1, 0, 1}, {0, 0, 1}}}};
  const auto r = scenario::run_scenario(cfg);
  bool left = false;
  for (const auto& row : r.trace.rows) {
    if (row.mode != follower::Mode::Follow) left = true;
    if (left && row.mode == follower::Mode::Follow) {
      const geometry::Pose anchor{row.human.position, row.human.yaw, geometry::FrameId::Wearable, row.t};
      const double err = (row.drone_local - follower::rejoin_point(anchor, cfg.follower)).norm();
      const bool ok = row.t < 60.0 && err <= 0.05;
      return {ok, "back in FOLLOW at t=" + num(row.t) + " s, " + num(err) + " m from anchor + offset"};
    }
  }
  return {false, left ? "never returned to FOLLOW" : "never detached"};
}

// 9 -------------------------------------------------------------------------
Outcome annotations() {
  constexpr int kFrames = 503;
  constexpr int kDelay = 5;
  constexpr double kFps = 30.0;
  auto head = [](int f) {
    const double s = f / 30.0;
    return eval::Point2{320 + 150 * std::sin(0.9 * s) + 12 * s, 240 + 90 * std::sin(1.7 * s + 0.4)};
  };
  auto csv_for = [&](int delay) {
    std::ostringstream out;
    out << "frame,label,xmin,ymin,xmax,ymax\n";
    for (int f = 0; f < kFrames; ++f) {
      const auto h = head(f);
      const auto d = head(f - delay);
      out << f << ",head," << h.x - 20 << ',' << h.y - 25 << ',' << h.x + 20 << ',' << h.y + 25 << '\n';
      out << f << ",drone," << d.x - 15 << ',' << d.y - 10 << ',' << d.x + 15 << ',' << d.y + 10 << '\n';
    }
    return out.str();
  };
  std::istringstream exact_csv(csv_for(0));
  const auto exact = eval::load_annotations(exact_csv, kFps);
  const auto r0 = eval::sync_report(exact.at("head"), exact.at("drone"));
  std::istringstream delayed_csv(csv_for(kDelay));
  const auto delayed = eval::load_annotations(delayed_csv, kFps);
  const auto r5 = eval::sync_report(delayed.at("head"), delayed.at("drone"));
  const bool ok = std::abs(r0.similarity - 1.0) <= 1e-12 && std::abs(r5.lag_estimate - 0.1667) <= 1.0 / kFps;
  return {ok, "exact similarity=" + num(r0.similarity) + ", delayed lag=" + num(r5.lag_estimate) + " s"};
}

// 10 ------------------------------------------------------------------------
Outcome determinism(const std::string& cli, const fs::path& work) {
  fs::create_directories(work);
  const fs::path config = work / "determinism.json";
  {
    std::ofstream out(config);
    out << R"({"trajectory": {"kind": "circle", "noise_sigma": 0.02}, "seed": 1234, "duration": 30,
  "world": [{"id": "crate", "label": "crate", "position": [-2.5, 0, 0.5]}],
  "detach_script": [{"t": 10, "waypoints": [[0.5, 0, 0.5]]}]})";
  }
  std::vector<fs::path> outs{work / "run_a", work / "run_b"};
  if (!cli.empty()) {
    for (const auto& dir : outs) {
      fs::remove_all(dir);
      const std::string cmd = "\"" + cli + "\" run -c \"" + config.string() + "\" -o \"" + dir.string() + "\" > \"" +
                              (work / "stdout.txt").string() + "\"";
      if (std::system(cmd.c_str()) != 0) return {false, "CLI run failed: " + cmd};
    }
  } else {
    for (const auto& dir : outs) {
      fs::create_directories(dir);
      const auto r = scenario::run_scenario(scenario::load_config(config.string()));
      std::ofstream trace(dir / "trace.csv");
      scenario::write_trace_csv(trace, r.trace);
      std::ofstream report(dir / "report.json");
      report << eval::to_json(r.report) << '\n';
    }
  }
  std::size_t identical = 0;
  std::size_t bytes = 0;
  for (const char* name : {"trace.csv", "report.json"}) {
    const std::string a = read_file(outs[0] / name);
    const std::string b = read_file(outs[1] / name);
    bytes += a.size();
    identical += (!a.empty() && a == b) ? 1 : 0;
  }
  return {identical == 2, std::string(cli.empty() ? "in-process" : "CLI") + " runs, " + std::to_string(identical) +
                              "/2 files byte-identical (" + std::to_string(bytes) + " bytes)"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tagteam acceptance suite"};
  std::string cli;
  std::string work = (fs::temp_directory_path() / "tagteam_acceptance").string();
  app.add_option("--cli", cli, "Path to the tagteam executable, used by the determinism check");
  app.add_option("--workdir", work, "Scratch directory");
  CLI11_PARSE(app, argc, argv);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"synchronization reproduction", synchronization},
      {"noise robustness", noise_robustness},
      {"DTW oracle equivalence", dtw_oracle},
      {"transform exactness", transform_exactness},
      {"codec and broker", codec_and_broker},
      {"follower path reconstruction", path_reconstruction},
      {"blind-spot oracle", blindspot_oracle},
      {"boomerang liveness", boomerang},
      {"annotation pipeline", annotations},
      {"determinism", [&] { return determinism(cli, work); }},
  };

  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    failed += o.pass ? 0 : 1;
    std::printf("%s AC%zu %s: %s [%.2f s]\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(),
                o.detail.c_str(), secs);
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
