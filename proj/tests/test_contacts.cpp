#include <phsim/contacts.hpp>

#include <gtest/gtest.h>

#include <numbers>

using namespace phsim;
using namespace phsim::rigid;

namespace {

constexpr double kH = 0.0175;

RigidBody cube(BodyId id, const Vec3& at, const UnitQuaternion& q = {}) {
  return make_box(id, 0.1, {kH, kH, kH}, {at, q});
}

}  // namespace

TEST(BoxPlane, RestingCubeTouchesAtFourCorners) {
  const auto pts = collide_box_plane(cube(1, {0, 0, kH}), 0.0);
  ASSERT_EQ(pts.size(), 4u);
  for (const auto& p : pts) {
    EXPECT_EQ(p.normal, (Vec3{0, 0, 1}));
    EXPECT_NEAR(p.penetration, 0.0, 1e-15);
    EXPECT_NEAR(p.gap, 0.0, 1e-15);
    EXPECT_NEAR(p.position.z, 0.0, 1e-15);
  }
}

TEST(BoxPlane, SunkCubeReportsPenetration) {
  const auto pts = collide_box_plane(cube(1, {0, 0, kH - 1e-3}), 0.0);
  ASSERT_EQ(pts.size(), 4u);
  for (const auto& p : pts) EXPECT_NEAR(p.penetration, 1e-3, 1e-12);
}

TEST(BoxPlane, HoveringWithinMarginGivesSpeculativePoints) {
  const auto pts = collide_box_plane(cube(1, {0, 0, kH + 3e-4}), 0.0);
  ASSERT_EQ(pts.size(), 4u);
  for (const auto& p : pts) {
    EXPECT_DOUBLE_EQ(p.penetration, 0.0);
    EXPECT_NEAR(p.gap, 3e-4, 1e-12);
  }
  EXPECT_TRUE(collide_box_plane(cube(1, {0, 0, kH + 1e-3}), 0.0).empty());
}

TEST(BoxPlane, TiltedCubeDeepestCornerFirst) {
  const auto q = UnitQuaternion::from_axis_angle({1, 0, 0}, 0.3);
  RigidBody b = cube(1, {0, 0, 0.02}, q);
  const auto pts = collide_box_plane(b, 0.0);
  ASSERT_FALSE(pts.empty());
  ASSERT_LE(pts.size(), 4u);
  // Depth (penetration, or minus the gap) never increases down the list.
  for (std::size_t i = 1; i < pts.size(); ++i)
    EXPECT_GE(pts[i - 1].penetration - pts[i - 1].gap, pts[i].penetration - pts[i].gap);
}

TEST(BoxPlane, RespectsPlaneHeight) {
  const auto pts = collide_box_plane(cube(1, {0, 0, 1.0 + kH - 2e-4}), 1.0);
  ASSERT_EQ(pts.size(), 4u);
  EXPECT_NEAR(pts[0].penetration, 2e-4, 1e-12);
}

TEST(BoxBox, FaceOverlapAlongX) {
  const auto pts = collide_boxes(cube(1, {0, 0, 0}), cube(2, {2 * kH - 1e-3, 0, 0}));
  ASSERT_EQ(pts.size(), 4u);
  for (const auto& p : pts) {
    EXPECT_NEAR(p.normal.x, 1.0, 1e-12);
    EXPECT_NEAR(p.penetration, 1e-3, 1e-12);
  }
}

TEST(BoxBox, NormalPointsFromFirstToSecond) {
  const auto pts = collide_boxes(cube(2, {2 * kH - 1e-3, 0, 0}), cube(1, {0, 0, 0}));
  ASSERT_FALSE(pts.empty());
  for (const auto& p : pts) EXPECT_NEAR(p.normal.x, -1.0, 1e-12);
}

TEST(BoxBox, SeparatedBeyondMarginHasNoContact) {
  EXPECT_TRUE(collide_boxes(cube(1, {0, 0, 0}), cube(2, {2 * kH + 2e-3, 0, 0})).empty());
  const auto near = collide_boxes(cube(1, {0, 0, 0}), cube(2, {2 * kH + 2e-4, 0, 0}));
  ASSERT_FALSE(near.empty());
  for (const auto& p : near) EXPECT_NEAR(p.gap, 2e-4, 1e-12);
}

TEST(BoxBox, OffsetFacesClipToOverlapRegion) {
  // Half-overlapping faces: contact patch spans y in [0, kH].
  const auto pts = collide_boxes(cube(1, {0, 0, 0}), cube(2, {2 * kH - 1e-3, kH, 0}));
  ASSERT_EQ(pts.size(), 4u);
  for (const auto& p : pts) {
    EXPECT_GE(p.position.y, -1e-12);
    EXPECT_LE(p.position.y, kH + 1e-12);
  }
}

TEST(BoxBox, RotatedCubeEdgeAgainstFace) {
  const auto q = UnitQuaternion::from_axis_angle({0, 0, 1}, std::numbers::pi / 4);
  const double reach = kH * std::numbers::sqrt2;
  const auto pts = collide_boxes(cube(1, {0, 0, 0}), cube(2, {kH + reach - 5e-4, 0, 0}, q));
  ASSERT_FALSE(pts.empty());
  for (const auto& p : pts) {
    EXPECT_NEAR(p.normal.x, 1.0, 1e-9);
    EXPECT_NEAR(p.penetration, 5e-4, 1e-9);
  }
}

TEST(BoxBox, CrossedEdgesGiveSinglePoint) {
  // Two cubes balanced on edges, crossing at right angles above each other.
  const auto qa = UnitQuaternion::from_axis_angle({1, 0, 0}, std::numbers::pi / 4);
  const auto qb = UnitQuaternion::from_axis_angle({0, 1, 0}, std::numbers::pi / 4);
  const double reach = kH * std::numbers::sqrt2;
  const auto pts = collide_boxes(cube(1, {0, 0, 0}, qa), cube(2, {0, 0, 2 * reach - 4e-4}, qb));
  ASSERT_EQ(pts.size(), 1u);
  EXPECT_NEAR(pts[0].normal.z, 1.0, 1e-9);
  EXPECT_NEAR(pts[0].penetration, 4e-4, 1e-9);
  EXPECT_NEAR(pts[0].position.x, 0.0, 1e-9);
  EXPECT_NEAR(pts[0].position.y, 0.0, 1e-9);
}
