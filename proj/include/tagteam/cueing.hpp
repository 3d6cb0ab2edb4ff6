#pragma once

#include <map>
#include <mutex>
#include <optional>
#include <string>

#include "tagteam/geometry.hpp"
#include "tagteam/protocol.hpp"

namespace tagteam::cueing {

struct AttentionModel {
  double human_fov = 2.0943951023931953;  // 120 degrees
  double cue_range = 5.0;
  double dedup_window = 1.0;  // seconds between cues for one object
};

void validate(const AttentionModel& model);

/// True when `point` lies outside the human's horizontal field of view.
/// A point coincident with the human is never in the blind spot.
bool is_in_blindspot(const geometry::Pose& human, geometry::Vec3 point, double fov);

/// Human-relative cue for a detection, or nullopt beyond cue_range. The
/// human pose and the detection share the world frame.
std::optional<protocol::CueMsg> make_cue(const geometry::Pose& human, const protocol::DetectionMsg& d,
                                         const AttentionModel& model);

/// Rate-limits cues to one per object id per window. Thread-safe.
class CueLimiter {
 public:
  explicit CueLimiter(double window) : window_(window) {}
  /// Records and admits the cue if the object's previous cue is at least one
  /// window older than `t`.
  bool admit(const std::string& object_id, double t);

 private:
  double window_;
  std::mutex mutex_;
  std::map<std::string, double> last_;
};

/// Wearable-side consumer: keeps the latest head pose and turns detections
/// into rate-limited cues.
class CueingAgent {
 public:
  explicit CueingAgent(AttentionModel model);

  void on_pose(const protocol::PoseMsg& msg);
  std::optional<protocol::CueMsg> on_detection(const protocol::DetectionMsg& msg);

 private:
  AttentionModel model_;
  CueLimiter limiter_;
  std::mutex mutex_;
  std::optional<geometry::Pose> head_;
};

}  // namespace tagteam::cueing
