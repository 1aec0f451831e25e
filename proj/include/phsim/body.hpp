#pragma once

#include <phsim/errors.hpp>
#include <phsim/math.hpp>

#include <cstdint>
#include <limits>
#include <string_view>

namespace phsim::rigid {

using BodyId = std::uint32_t;

/// Id reported for the static ground plane in contact manifolds.
inline constexpr BodyId kGroundId = std::numeric_limits<BodyId>::max();

enum class BodyKind { Dynamic, Kinematic };

enum class BodyRole { VirtualObject, EffectorClone };

inline std::string_view to_string(BodyRole r) {
  return r == BodyRole::EffectorClone ? "effector-clone" : "virtual-object";
}

struct MaterialParams {
  double friction_coefficient = 0.8;
  double restitution = 0.0;

  void validate() const {
    if (!(friction_coefficient >= 0.0)) throw InvalidArgument("friction must be >= 0");
    if (!(restitution >= 0.0 && restitution <= 1.0))
      throw InvalidArgument("restitution must lie in [0, 1]");
  }
  bool operator==(const MaterialParams&) const = default;
};

struct RigidBody {
  BodyId id = 0;
  BodyKind kind = BodyKind::Dynamic;
  BodyRole role = BodyRole::VirtualObject;
  Pose pose;
  Vec3 linear_velocity;
  Vec3 angular_velocity;  // world frame
  double mass = 1.0;
  InertiaDiag inertia{1.0, 1.0, 1.0};
  Vec3 half_extents{0.0175, 0.0175, 0.0175};
  MaterialParams material;
  bool gravity_enabled = true;

  // Cleared after every step.
  Vec3 force;
  Vec3 torque;

  /// Set when apply_force() hit a kinematic body and did nothing.
  bool ignored_force_warning = false;

  // Velocity-response overrides a constraint may install for the duration of
  // one contact solve. Bodies flagged externally_integrated are skipped by the
  // world's position update; their owner moves them.
  double inv_mass_scale = 1.0;
  Vec3 inv_inertia_scale{1.0, 1.0, 1.0};
  bool externally_integrated = false;

  bool is_dynamic() const { return kind == BodyKind::Dynamic; }

  double inv_mass() const { return is_dynamic() ? inv_mass_scale / mass : 0.0; }

  Mat3 inv_inertia_world() const {
    if (!is_dynamic()) return {};
    const Mat3 r = pose.orientation.to_matrix();
    const Vec3 inv{inv_inertia_scale.x / inertia.ixx, inv_inertia_scale.y / inertia.iyy,
                   inv_inertia_scale.z / inertia.izz};
    return r * Mat3::diagonal(inv) * r.transposed();
  }

  bool finite() const {
    return pose.position.finite() && pose.orientation.finite() && linear_velocity.finite() &&
           angular_velocity.finite();
  }
};

/// A dynamic solid box with inertia derived from its mass and size.
inline RigidBody make_box(BodyId id, double mass, const Vec3& half_extents, const Pose& pose,
                          MaterialParams material = {}) {
  material.validate();
  RigidBody b;
  b.id = id;
  b.mass = mass;
  b.inertia = box_inertia(mass, half_extents);
  b.half_extents = half_extents;
  b.pose = pose;
  b.material = material;
  return b;
}

}  // namespace phsim::rigid
