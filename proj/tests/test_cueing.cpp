#include <doctest.h>

#include <cmath>
#include <numbers>

#include "generators.hpp"
#include "tagteam/cueing.hpp"
#include "tagteam/error.hpp"

using namespace tagteam;
using namespace tagteam::cueing;
using geometry::FrameId;
using geometry::Pose;
using geometry::Vec3;

namespace {

constexpr double kPi = std::numbers::pi;

Pose human_at(Vec3 p, double yaw) { return Pose{p, yaw, FrameId::World, 0.0}; }

// Rotates the offset into the human's frame and compares the bearing to the half-width.
bool brute_force_blindspot(const Pose& h, Vec3 p, double fov) {
  const double dx = p.x - h.position.x;
  const double dz = p.z - h.position.z;
  if (dx == 0.0 && dz == 0.0) return false;
  const double c = std::cos(h.yaw);
  const double s = std::sin(h.yaw);
  const double lx = dx * c + dz * s;
  const double lz = -dx * s + dz * c;
  return std::abs(std::atan2(lz, lx)) > fov / 2.0;
}

protocol::DetectionMsg det(Vec3 p, const std::string& id = "o") { return {id, "thing", p, 0.9, 1.0}; }

}  // namespace

TEST_SUITE("cueing") {
  TEST_CASE("blind spot examples") {
    const Pose h = human_at({0, 0, 0}, 0);
    CHECK(is_in_blindspot(h, {-1, 0, 0}, kPi));
    CHECK_FALSE(is_in_blindspot(h, {1, 0, 0}, 0.01));
    CHECK_FALSE(is_in_blindspot(h, {1, 0, 0}, 2 * kPi));
    CHECK_FALSE(is_in_blindspot(h, {0, 0, 0}, 0.5));
    testing::Gen gen(31);
    for (int i = 0; i < 1000; ++i) {
      CHECK_FALSE(is_in_blindspot(human_at(gen.vec(3), gen.real(-kPi, kPi)), gen.vec(5), 2 * kPi));
    }
    CHECK_THROWS_AS(is_in_blindspot(h, {1, 0, 0}, 0.0), Error);
    CHECK_THROWS_AS(is_in_blindspot(h, {1, 0, 0}, 7.0), Error);
  }

  TEST_CASE("blind spot equals a brute-force rotation check") {
    testing::Gen gen(32);
    int blind = 0;
    for (int i = 0; i < 10000; ++i) {
      const Pose h = human_at(gen.vec(2), gen.real(-kPi, kPi));
      const Vec3 p = gen.vec(6);
      const double fov = gen.real(0.01, 2 * kPi);
      const bool got = is_in_blindspot(h, p, fov);
      CHECK(got == brute_force_blindspot(h, p, fov));
      blind += got ? 1 : 0;
    }
    CHECK(blind > 1000);
    CHECK(blind < 9000);
  }

  TEST_CASE("widening the field of view is monotone") {
    testing::Gen gen(33);
    for (int i = 0; i < 5000; ++i) {
      const Pose h = human_at(gen.vec(2), gen.real(-kPi, kPi));
      const Vec3 p = gen.vec(6);
      const double narrow = gen.real(0.01, 2 * kPi);
      const double wide = gen.real(narrow, 2 * kPi);
      if (!is_in_blindspot(h, p, narrow)) CHECK_FALSE(is_in_blindspot(h, p, wide));
    }
  }

  TEST_CASE("make_cue examples") {
    const Pose h = human_at({0, 0, 0}, 0);
    const AttentionModel m;
    auto c = make_cue(h, det({0, 0, -2}), m);
    REQUIRE(c);
    CHECK(c->distance == doctest::Approx(2));
    CHECK(c->azimuth == doctest::Approx(-kPi / 2));
    CHECK(c->blind_spot);
    CHECK(c->object_id == "o");
    CHECK(c->timestamp == 1.0);

    c = make_cue(h, det({2, 0, 0}), m);
    REQUIRE(c);
    CHECK(c->distance == doctest::Approx(2));
    CHECK(c->azimuth == 0.0);
    CHECK_FALSE(c->blind_spot);

    CHECK_FALSE(make_cue(h, det({10, 0, 0}), m));
  }

  TEST_CASE("emitted cues respect range and normalization") {
    testing::Gen gen(34);
    AttentionModel m;
    m.cue_range = 3.0;
    for (int i = 0; i < 5000; ++i) {
      const Pose h = human_at(gen.vec(2), gen.real(-kPi, kPi));
      if (const auto c = make_cue(h, det(gen.vec(5)), m)) {
        CHECK(c->distance <= m.cue_range);
        CHECK(c->azimuth > -kPi);
        CHECK(c->azimuth <= kPi);
        CHECK_NOTHROW(protocol::encode_message(*c));
      }
    }
  }

  TEST_CASE("attention model validation") {
    AttentionModel m;
    m.human_fov = 0;
    CHECK_THROWS_AS(validate(m), Error);
    m = AttentionModel{};
    m.cue_range = -1;
    CHECK_THROWS_AS(validate(m), Error);
    CHECK_NOTHROW(validate(AttentionModel{}));
  }

  TEST_CASE("limiter admits one cue per object per window") {
    CueLimiter lim(1.0);
    CHECK(lim.admit("a", 0.0));
    CHECK_FALSE(lim.admit("a", 0.5));
    CHECK(lim.admit("b", 0.5));
    CHECK(lim.admit("a", 1.0));
    CHECK_FALSE(lim.admit("a", 1.9));
    CHECK(lim.admit("a", 2.0000000001));
    // accumulated float steps landing just short of the window still count
    double t = 2.0;
    for (int i = 0; i < 10; ++i) t += 0.1;
    CHECK(lim.admit("a", t));
  }

  TEST_CASE("agent needs a head pose before cueing") {
    CueingAgent agent(AttentionModel{});
    CHECK_FALSE(agent.on_detection(det({0, 0, -2})));
    agent.on_pose(protocol::PoseMsg{"w", Pose{{0, 0, 0}, 0, FrameId::Wearable, 0}, 0});
    const auto c = agent.on_detection(det({0, 0, -2}));
    REQUIRE(c);
    CHECK(c->blind_spot);
    CHECK_FALSE(agent.on_detection(det({0, 0, -2})));
  }
}
