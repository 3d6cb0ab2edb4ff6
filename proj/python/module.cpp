#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "tagteam/agents.hpp"
#include "tagteam/cueing.hpp"
#include "tagteam/error.hpp"
#include "tagteam/eval.hpp"
#include "tagteam/geometry.hpp"
#include "tagteam/protocol.hpp"
#include "tagteam/scenario.hpp"
#include "tagteam/transport.hpp"

namespace py = pybind11;
using namespace tagteam;

namespace {

using Triple = std::tuple<double, double, double>;

geometry::Vec3 vec(const Triple& t) { return {std::get<0>(t), std::get<1>(t), std::get<2>(t)}; }
Triple triple(const geometry::Vec3& v) { return {v.x, v.y, v.z}; }

std::vector<eval::Point2> points(const std::vector<std::pair<double, double>>& xs) {
  std::vector<eval::Point2> out;
  out.reserve(xs.size());
  for (const auto& [x, y] : xs) out.push_back({x, y});
  return out;
}

eval::Trajectory trajectory(const std::vector<std::tuple<double, double, double>>& samples, const std::string& label) {
  eval::Trajectory t{{}, label, eval::Units::Meters};
  for (const auto& [ts, x, y] : samples) t.points.push_back({ts, {x, y}});
  return t;
}

py::dict report_dict(const eval::SyncReport& r) {
  py::dict d;
  d["dtw_distance"] = r.dtw_distance;
  d["similarity"] = r.similarity;
  d["path_length"] = r.path_length;
  d["lag_estimate"] = r.lag_estimate;
  return d;
}

geometry::Pose pose(const Triple& position, double yaw) {
  return geometry::make_pose(vec(position), yaw, geometry::FrameId::World, 0.0);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Human-drone teaming simulator core: frames, pub/sub codec, DTW evaluation and scenarios.";

  py::register_exception<Error>(m, "TagTeamError", PyExc_ValueError);

  m.def("wearable_delta_to_drone_delta", [](const Triple& d) { return triple(geometry::wearable_delta_to_drone_delta(vec(d))); },
        py::arg("delta"));
  m.def("drone_delta_to_wearable_delta", [](const Triple& d) { return triple(geometry::drone_delta_to_wearable_delta(vec(d))); },
        py::arg("delta"));
  m.def(
      "relative_polar",
      [](const Triple& position, double yaw, const Triple& target) {
        const auto p = geometry::relative_polar(pose(position, yaw), vec(target));
        return std::make_pair(p.distance, p.azimuth);
      },
      py::arg("observer"), py::arg("yaw"), py::arg("target"));
  m.def(
      "is_in_blindspot",
      [](const Triple& position, double yaw, const Triple& point, double fov) {
        return cueing::is_in_blindspot(pose(position, yaw), vec(point), fov);
      },
      py::arg("human"), py::arg("yaw"), py::arg("point"), py::arg("fov"));

  m.def("circle_trajectory", [](double r, double w, double t) { return triple(agents::circle_trajectory(r, w, t)); },
        py::arg("radius"), py::arg("omega"), py::arg("t"));
  m.def("ellipse_trajectory",
        [](double a, double b, double w, double t) { return triple(agents::ellipse_trajectory(a, b, w, t)); },
        py::arg("a"), py::arg("b"), py::arg("omega"), py::arg("t"));

  m.def("topic_matches", &transport::topic_matches, py::arg("filter"), py::arg("topic"));
  m.def(
      "encode_publish",
      [](const std::string& topic, const std::string& payload) {
        const auto bytes = transport::encode_packet(transport::Publish{topic, payload});
        return py::bytes(reinterpret_cast<const char*>(bytes.data()), bytes.size());
      },
      py::arg("topic"), py::arg("payload"));
  m.def(
      "decode_packet",
      [](const py::bytes& data) -> py::object {
        const std::string raw = data;
        const auto r = transport::decode_packet(
            std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(raw.data()), raw.size()));
        if (r.status == transport::DecodeStatus::NeedMore) return py::none();
        if (r.status == transport::DecodeStatus::ProtocolError) throw Error(ErrorKind::Protocol, r.error);
        py::dict d;
        d["type"] = std::string(transport::packet_name(*r.packet));
        d["consumed"] = r.consumed;
        if (const auto* p = std::get_if<transport::Publish>(&*r.packet)) {
          d["topic"] = p->topic;
          d["payload"] = py::bytes(p->payload);
        }
        return d;
      },
      py::arg("data"), "Decodes one packet; returns None when more bytes are needed.");

  m.def(
      "dtw",
      [](const std::vector<std::pair<double, double>>& a, const std::vector<std::pair<double, double>>& b) {
        const auto r = eval::dtw(points(a), points(b));
        return std::make_pair(r.distance, r.path);
      },
      py::arg("a"), py::arg("b"), "DTW distance and alignment path over 2-D points.");
  m.def(
      "sync_report",
      [](const std::vector<std::tuple<double, double, double>>& a,
         const std::vector<std::tuple<double, double, double>>& b) {
        return report_dict(eval::sync_report(trajectory(a, "a"), trajectory(b, "b")));
      },
      py::arg("a"), py::arg("b"), "Each trajectory is a list of (t, x, y).");
  m.def(
      "similarity",
      [](const std::vector<std::tuple<double, double, double>>& a,
         const std::vector<std::tuple<double, double, double>>& b) {
        return eval::similarity(trajectory(a, "a"), trajectory(b, "b"));
      },
      py::arg("a"), py::arg("b"));
  m.def(
      "load_annotations",
      [](const std::string& path, double fps) {
        py::dict out;
        for (const auto& [label, traj] : eval::load_annotations(path, fps)) {
          py::list pts;
          for (const auto& s : traj.points) pts.append(py::make_tuple(s.t, s.p.x, s.p.y));
          out[py::str(label)] = pts;
        }
        return out;
      },
      py::arg("path"), py::arg("fps") = 30.0);

  m.def(
      "run_scenario",
      [](const std::string& config_json) {
        scenario::RunResult result;
        {
          const auto cfg = scenario::parse_config(config_json);
          py::gil_scoped_release release;
          result = scenario::run_scenario(cfg);
        }
        std::ostringstream trace;
        scenario::write_trace_csv(trace, result.trace);
        py::dict out;
        out["report"] = report_dict(result.report);
        out["trace_csv"] = trace.str();
        out["messages"] = result.trace.messages.size();
        out["rows"] = result.trace.rows.size();
        out["cues"] = result.trace.cues;
        py::list modes;
        for (const auto& row : result.trace.rows) modes.append(std::string(follower::to_string(row.mode)));
        out["modes"] = modes;
        return out;
      },
      py::arg("config_json") = "{}", "Runs a scenario from a JSON config string.");
}
