#include "tagteam/cueing.hpp"

#include <cmath>
#include <numbers>

#include "tagteam/error.hpp"

namespace tagteam::cueing {

void validate(const AttentionModel& model) {
  if (!(model.human_fov > 0.0 && model.human_fov <= 2.0 * std::numbers::pi)) {
    throw Error(ErrorKind::InvalidInput, "attention.human_fov: must lie in (0, 2pi]");
  }
  if (!(model.cue_range > 0.0) || !std::isfinite(model.cue_range)) {
    throw Error(ErrorKind::InvalidInput, "attention.cue_range: must be > 0");
  }
  if (!(model.dedup_window >= 0.0) || !std::isfinite(model.dedup_window)) {
    throw Error(ErrorKind::InvalidInput, "attention.dedup_window: must be >= 0");
  }
}

bool is_in_blindspot(const geometry::Pose& human, geometry::Vec3 point, double fov) {
  if (!(fov > 0.0 && fov <= 2.0 * std::numbers::pi)) {
    throw Error(ErrorKind::InvalidInput, "fov must lie in (0, 2pi]");
  }
  const auto polar = geometry::relative_polar(human, point);
  if (polar.distance == 0.0) return false;
  return std::abs(polar.azimuth) > fov / 2.0;
}

std::optional<protocol::CueMsg> make_cue(const geometry::Pose& human, const protocol::DetectionMsg& d,
                                         const AttentionModel& model) {
  validate(model);
  const auto polar = geometry::relative_polar(human, d.position);
  if (polar.distance > model.cue_range) return std::nullopt;
  return protocol::CueMsg{d.object_id,     d.label,
                          polar.distance,  polar.azimuth,
                          is_in_blindspot(human, d.position, model.human_fov), d.timestamp};
}

bool CueLimiter::admit(const std::string& object_id, double t) {
  std::lock_guard lock(mutex_);
  auto it = last_.find(object_id);
  if (it != last_.end() && t - it->second < window_ - 1e-9) return false;
  last_[object_id] = t;
  return true;
}

CueingAgent::CueingAgent(AttentionModel model) : model_(model), limiter_(model.dedup_window) { validate(model_); }

void CueingAgent::on_pose(const protocol::PoseMsg& msg) {
  std::lock_guard lock(mutex_);
  head_ = msg.pose;
}

std::optional<protocol::CueMsg> CueingAgent::on_detection(const protocol::DetectionMsg& msg) {
  std::optional<geometry::Pose> head;
  {
    std::lock_guard lock(mutex_);
    head = head_;
  }
  if (!head) return std::nullopt;
  auto cue = make_cue(*head, msg, model_);
  if (!cue || !limiter_.admit(cue->object_id, cue->timestamp)) return std::nullopt;
  return cue;
}

}  // namespace tagteam::cueing
