// tagteam: broker, scenario runner, evaluator and trajectory generator.
//
// Exit codes: 0 success, 2 configuration or input error, 3 runtime failure.

#include <CLI11.hpp>

#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numbers>
#include <optional>
#include <sstream>
#include <thread>

#include "tagteam/agents.hpp"
#include "tagteam/error.hpp"
#include "tagteam/eval.hpp"
#include "tagteam/net.hpp"
#include "tagteam/protocol.hpp"
#include "tagteam/scenario.hpp"
#include "tagteam/transport.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;
constexpr const char* kPortEnv = "TAGTEAM_BROKER_PORT";

std::atomic<bool> g_stop{false};

void on_signal(int) { g_stop = true; }

int exit_code_for(const tagteam::Error& e) {
  using tagteam::ErrorKind;
  switch (e.kind()) {
    case ErrorKind::Config:
    case ErrorKind::InvalidInput:
    case ErrorKind::Parse:
    case ErrorKind::Validation:
      return kExitConfig;
    default:
      return kExitRuntime;
  }
}

std::optional<std::uint16_t> env_port() {
  const char* v = std::getenv(kPortEnv);
  if (v == nullptr || *v == '\0') return std::nullopt;
  char* end = nullptr;
  const long port = std::strtol(v, &end, 10);
  if (*end != '\0' || port < 0 || port > 65535) {
    throw tagteam::Error(tagteam::ErrorKind::Config, std::string(kPortEnv) + ": not a valid port");
  }
  return static_cast<std::uint16_t>(port);
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw tagteam::Error(tagteam::ErrorKind::Runtime, "cannot write " + path.string());
  out << content;
}

struct RunOptions {
  std::string config;
  std::string out_dir = ".";
  std::optional<std::string> trajectory;
  std::optional<double> duration;
  std::optional<std::uint64_t> seed;
  std::optional<double> noise;
  std::optional<double> rate;
  std::optional<double> update_period;
  std::optional<double> max_speed;
  std::optional<double> deadband;
  std::optional<std::string> mode;
  std::optional<std::string> host;
  std::optional<std::uint16_t> port;
};

int cmd_run(const RunOptions& o) {
  using namespace tagteam;
  scenario::ScenarioConfig cfg = o.config.empty() ? scenario::circle_scenario() : scenario::load_config(o.config);

  if (o.trajectory) {
    if (*o.trajectory == "circle") {
      cfg.trajectory.kind = scenario::circle_scenario().trajectory.kind;
    } else if (*o.trajectory == "ellipse") {
      cfg.trajectory.kind = scenario::ellipse_scenario().trajectory.kind;
    } else {
      throw Error(ErrorKind::Config, "--trajectory: expected circle or ellipse");
    }
  }
  if (o.duration) cfg.duration = *o.duration;
  if (o.seed) cfg.seed = *o.seed;
  if (o.noise) cfg.trajectory.noise_sigma = *o.noise;
  if (o.rate) cfg.trajectory.rate = *o.rate;
  if (o.update_period) cfg.follower.update_period = *o.update_period;
  if (o.max_speed) cfg.follower.max_speed = *o.max_speed;
  if (o.deadband) cfg.follower.deadband = *o.deadband;
  if (o.mode) {
    if (*o.mode == "deterministic") {
      cfg.mode = scenario::RunMode::Deterministic;
    } else if (*o.mode == "sockets") {
      cfg.mode = scenario::RunMode::Sockets;
    } else {
      throw Error(ErrorKind::Config, "--mode: expected deterministic or sockets");
    }
  }
  if (o.host) cfg.broker_host = *o.host;
  if (auto p = env_port()) cfg.broker_port = *p;
  if (o.port) cfg.broker_port = *o.port;
  scenario::validate(cfg);

  const auto result = scenario::run_scenario(cfg);

  const std::filesystem::path dir(o.out_dir);
  std::filesystem::create_directories(dir);
  std::ostringstream trace;
  scenario::write_trace_csv(trace, result.trace);
  write_file(dir / "trace.csv", trace.str());
  std::ostringstream messages;
  scenario::write_messages_jsonl(messages, result.trace);
  write_file(dir / "messages.jsonl", messages.str());
  write_file(dir / "report.json", eval::to_json(result.report) + "\n");

  std::cout << eval::summary(result.report) << '\n';
  return 0;
}

int cmd_broker(const std::string& host, std::optional<std::uint16_t> port_flag, double run_for) {
  using namespace tagteam;
  std::uint16_t port = transport::kDefaultPort;
  if (auto p = env_port()) port = *p;
  if (port_flag) port = *port_flag;

  transport::Broker broker;
  net::TcpBrokerServer server(broker);
  server.start(host, port);
  std::cout << "broker listening on " << host << ":" << server.port() << std::endl;

  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  const auto start = std::chrono::steady_clock::now();
  while (!g_stop) {
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
    if (run_for > 0.0 &&
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count() >= run_for) {
      break;
    }
  }
  server.stop();
  return 0;
}

int cmd_eval(const std::string& annotations, const std::string& trace_path, double fps, const std::string& a,
             const std::string& b, const std::string& json_out) {
  using namespace tagteam;
  eval::SyncReport report;
  if (!trace_path.empty()) {
    std::ifstream in(trace_path);
    if (!in) throw Error(ErrorKind::Parse, "cannot open '" + trace_path + "'");
    report = scenario::evaluate_trace(scenario::read_trace_csv(in));
  } else {
    const auto tracks = eval::load_annotations(annotations, fps);
    const auto ia = tracks.find(a);
    const auto ib = tracks.find(b);
    if (ia == tracks.end()) throw Error(ErrorKind::Validation, "no annotations labelled '" + a + "'");
    if (ib == tracks.end()) throw Error(ErrorKind::Validation, "no annotations labelled '" + b + "'");
    report = eval::sync_report(ia->second, ib->second);
  }
  if (!json_out.empty()) write_file(json_out, eval::to_json(report) + "\n");
  std::cout << eval::to_json(report) << '\n' << eval::summary(report) << '\n';
  return 0;
}

struct GenOptions {
  std::string kind = "circle";
  double radius = 0.5;
  double semi_a = 0.75;
  double semi_b = 0.5;
  double omega = 2.0 * std::numbers::pi / 20.0;
  double duration = 60.0;
  double rate = 10.0;
  double noise = 0.0;
  std::uint64_t seed = 0;
  std::string out;
};

int cmd_gen(const GenOptions& o) {
  using namespace tagteam;
  agents::TrajectorySpec spec;
  if (o.kind == "circle") {
    spec.kind = agents::Circle{o.radius, o.omega};
  } else if (o.kind == "ellipse") {
    spec.kind = agents::Ellipse{o.semi_a, o.semi_b, o.omega};
  } else {
    throw Error(ErrorKind::Config, "--kind: expected circle or ellipse");
  }
  spec.rate = o.rate;
  spec.noise_sigma = o.noise;
  if (!(o.duration > 0.0)) throw Error(ErrorKind::Config, "--duration: must be > 0");
  agents::Wearable wearable(spec, o.seed);

  std::ostringstream csv;
  csv << "t,x,y,z\n";
  const auto samples = static_cast<std::uint64_t>(std::llround(o.duration * o.rate));
  for (std::uint64_t i = 0; i <= samples; ++i) {
    const auto msg = wearable.tick(static_cast<double>(i) / o.rate);
    if (!msg) continue;
    const auto& p = msg->pose;
    using protocol::format_number;
    csv << format_number(p.timestamp) << ',' << format_number(p.position.x) << ',' << format_number(p.position.y)
        << ',' << format_number(p.position.z) << '\n';
  }
  if (o.out.empty()) {
    std::cout << csv.str();
  } else {
    write_file(o.out, csv.str());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Human-drone teaming simulator: broker, scenario runner and evaluator"};
  app.require_subcommand(1);

  auto* broker = app.add_subcommand("broker", "Run the pub/sub broker over TCP");
  std::string broker_host = "0.0.0.0";
  std::optional<std::uint16_t> broker_port;
  double broker_for = 0.0;
  broker->add_option("--host", broker_host, "Address to bind");
  broker->add_option("--port", broker_port, "TCP port (default 1883, or $TAGTEAM_BROKER_PORT)");
  broker->add_option("--for", broker_for, "Exit after this many seconds (0 = until signalled)");

  auto* run = app.add_subcommand("run", "Run a scenario and write trace.csv, messages.jsonl, report.json");
  RunOptions ro;
  run->add_option("-c,--config", ro.config, "Scenario config (JSON)")->check(CLI::ExistingFile);
  run->add_option("-o,--out", ro.out_dir, "Output directory");
  run->add_option("--trajectory", ro.trajectory, "circle or ellipse (canonical shapes)");
  run->add_option("--duration", ro.duration, "Simulated seconds");
  run->add_option("--seed", ro.seed, "RNG seed");
  run->add_option("--noise", ro.noise, "Wearable pose noise sigma (m)");
  run->add_option("--rate", ro.rate, "Wearable pose rate (Hz)");
  run->add_option("--update-period", ro.update_period, "Follower update period (s)");
  run->add_option("--max-speed", ro.max_speed, "Drone speed cap (m/s)");
  run->add_option("--deadband", ro.deadband, "Follower motion deadband (m)");
  run->add_option("--mode", ro.mode, "deterministic or sockets");
  run->add_option("--host", ro.host, "Broker host in sockets mode");
  run->add_option("--port", ro.port, "Broker port in sockets mode (0 = ephemeral)");

  auto* ev = app.add_subcommand("eval", "Synchronization report from annotations or a trace");
  std::string annotations;
  std::string trace_path;
  double fps = 30.0;
  std::string label_a = "head";
  std::string label_b = "drone";
  std::string json_out;
  auto* ann_opt = ev->add_option("--annotations", annotations, "Bounding-box CSV")->check(CLI::ExistingFile);
  auto* trace_opt = ev->add_option("--trace", trace_path, "Trace CSV written by 'run'")->check(CLI::ExistingFile);
  ann_opt->excludes(trace_opt);
  ev->add_option("--fps", fps, "Annotation frame rate");
  ev->add_option("--a", label_a, "Reference label");
  ev->add_option("--b", label_b, "Follower label");
  ev->add_option("--json", json_out, "Also write the report here");

  auto* gen = app.add_subcommand("gen-trajectory", "Emit a wearable trajectory as t,x,y,z CSV");
  GenOptions go;
  gen->add_option("--kind", go.kind, "circle or ellipse");
  gen->add_option("--radius", go.radius, "Circle radius (m)");
  gen->add_option("--semi-a", go.semi_a, "Ellipse semi-axis along x (m)");
  gen->add_option("--semi-b", go.semi_b, "Ellipse semi-axis along z (m)");
  gen->add_option("--omega", go.omega, "Angular speed (rad/s)");
  gen->add_option("--duration", go.duration, "Seconds");
  gen->add_option("--rate", go.rate, "Samples per second");
  gen->add_option("--noise", go.noise, "Gaussian noise sigma (m)");
  gen->add_option("--seed", go.seed, "RNG seed");
  gen->add_option("-o,--out", go.out, "Output file (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  try {
    if (*broker) return cmd_broker(broker_host, broker_port, broker_for);
    if (*run) return cmd_run(ro);
    if (*ev) {
      if (annotations.empty() && trace_path.empty()) {
        std::cerr << "eval: one of --annotations or --trace is required\n";
        return kExitConfig;
      }
      return cmd_eval(annotations, trace_path, fps, label_a, label_b, json_out);
    }
    if (*gen) return cmd_gen(go);
  } catch (const tagteam::Error& e) {
    std::cerr << "error (" << tagteam::to_string(e.kind()) << "): " << e.what() << '\n';
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return 0;
}
