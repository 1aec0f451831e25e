#pragma once

// Effector clone bound to a tracked real pose by a critically damped 6-DOF
// spring. The clone is a simulated body: it pushes virtual objects and gets
// pushed back, while the spring pulls it toward the real pose.
//
// Integration. The linear spring (k = 50 N/m on 10 g) has w_n = 70.7 rad/s,
// and the torsion spring (150 N.m/rad on 2e-6 kg.m^2) has w_n ~ 8.6e3 rad/s,
// so an explicit force update at 240 Hz is unstable in rotation. Each axis is
// instead advanced with the closed-form critically damped solution
//
//     x(t) = (x0 + (v0 + w x0) t) e^{-w t}
//
// in coordinates relative to the real object. Contact impulses J received
// during the step are treated as a constant force J/dt inside that solution,
// which gives the clone an effective inverse mass e^{-w dt}/m in the contact
// solver and makes the resting push force exactly k*d.

#include <phsim/body.hpp>
#include <phsim/errors.hpp>
#include <phsim/math.hpp>
#include <phsim/world.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>
#include <string_view>

namespace phsim::decoupling {

using rigid::BodyId;
using rigid::RigidBody;
using rigid::WorldState;

inline constexpr double kEffectorSide = 0.035;  // [m]

inline double critical_damping_linear(double k, double m) {
  if (!(k > 0.0) || !(m > 0.0)) throw InvalidArgument("critical damping needs k > 0 and m > 0");
  return 2.0 * std::sqrt(k * m);
}

inline double critical_damping_angular(double kappa, double inertia_axis) {
  if (!(kappa > 0.0) || !(inertia_axis > 0.0))
    throw InvalidArgument("critical damping needs kappa > 0 and I > 0");
  return 2.0 * std::sqrt(kappa * inertia_axis);
}

struct DecouplingParams {
  double linear_stiffness = 50.0;      // k [N/m]
  double torsional_stiffness = 150.0;  // kappa [N.m/rad]
  double clone_mass = 0.010;           // m [kg]
  InertiaDiag clone_inertia = box_inertia(0.010, Vec3{0.0175, 0.0175, 0.0175});

  void validate() const {
    if (!(linear_stiffness > 0.0)) throw InvalidArgument("linear stiffness must be positive");
    if (!(torsional_stiffness > 0.0)) throw InvalidArgument("torsional stiffness must be positive");
    if (!(clone_mass > 0.0)) throw InvalidArgument("clone mass must be positive");
    if (!(clone_inertia.ixx > 0.0 && clone_inertia.iyy > 0.0 && clone_inertia.izz > 0.0))
      throw InvalidArgument("clone inertia must be positive");
  }

  double linear_damping() const { return critical_damping_linear(linear_stiffness, clone_mass); }

  Vec3 angular_damping() const {
    return {critical_damping_angular(torsional_stiffness, clone_inertia.ixx),
            critical_damping_angular(torsional_stiffness, clone_inertia.iyy),
            critical_damping_angular(torsional_stiffness, clone_inertia.izz)};
  }

  double linear_natural_frequency() const { return std::sqrt(linear_stiffness / clone_mass); }

  Vec3 angular_natural_frequency() const {
    return {std::sqrt(torsional_stiffness / clone_inertia.ixx),
            std::sqrt(torsional_stiffness / clone_inertia.iyy),
            std::sqrt(torsional_stiffness / clone_inertia.izz)};
  }

  bool operator==(const DecouplingParams&) const = default;
};

/// Params for a box-shaped clone of the given mass and side.
inline DecouplingParams params_for_box(double k, double kappa, double mass, double side) {
  DecouplingParams p{k, kappa, mass, box_inertia(mass, Vec3{side, side, side} * 0.5)};
  p.validate();
  return p;
}

/// F = -k d - c_c v
inline Vec3 spring_force(const Vec3& d, const Vec3& v, const DecouplingParams& params) {
  const double c = params.linear_damping();
  return d * -params.linear_stiffness - v * c;
}

/// tau_i = -kappa theta_i - C_c,i omega_i, in the frame of theta.
inline Vec3 spring_torque(const Vec3& theta, const Vec3& omega, const DecouplingParams& params) {
  const Vec3 c = params.angular_damping();
  return theta * -params.torsional_stiffness - c.cwise(omega);
}

enum class Condition { Coupled, Decoupled };  // C1, C2

inline std::string_view to_string(Condition c) { return c == Condition::Coupled ? "C1" : "C2"; }

inline Condition parse_condition(std::string_view s) {
  if (s == "C1" || s == "c1" || s == "coupled") return Condition::Coupled;
  if (s == "C2" || s == "c2" || s == "decoupled") return Condition::Decoupled;
  throw InvalidArgument("unknown condition '" + std::string(s) + "' (expected C1 or C2)");
}

enum class IntegrationMode {
  Exact,     ///< closed-form per-axis update, unconditionally stable
  Explicit,  ///< spring force/torque applied as ordinary forces; needs w_n dt < 0.5
};

struct ConstraintState {
  Vec3 d;      // [m]
  Vec3 v;      // [m/s]
  Vec3 theta;  // [rad], real-object frame
  Vec3 omega;  // [rad/s], real-object frame
  double c_c = 0.0;
  Vec3 C_c;
  Vec3 last_force;
  Vec3 last_torque;
  double peak_displacement = 0.0;
  int singularity_clamps = 0;

  /// Zero the transients; damping coefficients are kept.
  void reset_transients() {
    d = v = theta = omega = last_force = last_torque = {};
    peak_displacement = 0.0;
    singularity_clamps = 0;
  }
};

/// Spring + kinetic energy of the clone relative to the real object.
inline double constraint_energy(const ConstraintState& s, const DecouplingParams& p) {
  const Vec3 I = p.clone_inertia.as_vec();
  return 0.5 * p.linear_stiffness * s.d.norm_sq() + 0.5 * p.torsional_stiffness * s.theta.norm_sq() +
         0.5 * p.clone_mass * s.v.norm_sq() + 0.5 * I.cwise(s.omega).dot(s.omega);
}

/// Motion of the tracked real object over one step: pose at the start and a
/// constant world-frame velocity until the end.
struct RealMotion {
  Pose pose;
  Vec3 linear_velocity;
  Vec3 angular_velocity;

  Pose advanced(double dt) const {
    return {pose.position + linear_velocity * dt,
            angular_velocity.norm_sq() == 0.0
                ? pose.orientation
                : integrate_orientation(pose.orientation, angular_velocity, dt)};
  }
};

/// Two-sample finite difference between consecutive real poses.
inline RealMotion finite_difference(const Pose& from, const Pose& to, double dt) {
  const UnitQuaternion dq = to.orientation * from.orientation.conjugate();
  return {from, (to.position - from.position) / dt, dq.to_rotation_vector() / dt};
}

namespace detail {

struct AxisState {
  double x;
  double v;
};

// Homogeneous critically damped response after time t.
inline AxisState propagate(double x0, double v0, double wn, double t) {
  const double e = std::exp(-wn * t);
  const double b = v0 + wn * x0;
  return {(x0 + b * t) * e, (v0 - b * wn * t) * e};
}

// Same, with a constant force shifting the equilibrium to x_eq.
inline AxisState propagate_forced(double x0, double v0, double x_eq, double wn, double t) {
  const AxisState h = propagate(x0 - x_eq, v0, wn, t);
  return {h.x + x_eq, h.v};
}

inline constexpr double kThetaLimit = std::numbers::pi - 1e-6;

}  // namespace detail

/// Relative state of clone w.r.t. the real object at the start of a step.
struct RelativeState {
  Vec3 d, v, theta, omega;
};

inline RelativeState relative_state(const RigidBody& clone, const RealMotion& real,
                                    int* clamp_counter = nullptr) {
  const PoseError e = pose_error(real.pose, clone.pose);
  RelativeState s;
  s.d = e.d;
  s.theta = e.theta;
  const double mag = s.theta.norm();
  if (mag > detail::kThetaLimit) {
    s.theta = s.theta * (detail::kThetaLimit / mag);
    if (clamp_counter != nullptr) ++*clamp_counter;
  }
  s.v = clone.linear_velocity - real.linear_velocity;
  s.omega = real.pose.orientation.conjugate().rotate(clone.angular_velocity - real.angular_velocity);
  return s;
}

/// Exact constraint update of a clone over one step. Accumulated force/torque
/// on the clone (and any contact impulses folded in by the caller) act as
/// constant loads during the step.
class ExactStep {
 public:
  ExactStep(const DecouplingParams& params, double dt) : params_(params), dt_(dt) {
    wn_ = params.linear_natural_frequency();
    Wn_ = params.angular_natural_frequency();
  }

  /// Computes the load-free end velocities and installs the effective
  /// velocity response on the clone for the contact solver.
  void prepare(RigidBody& clone, const RealMotion& real, int* clamp_counter) {
    real_ = real;
    s0_ = relative_state(clone, real, clamp_counter);
    force_ = clone.force;
    torque_rel_ = real.pose.orientation.conjugate().rotate(clone.torque);
    clone.force = {};
    clone.torque = {};

    Vec3 v1, w1;
    for (int i = 0; i < 3; ++i) {
      v1[i] = detail::propagate_forced(s0_.d[i], s0_.v[i], force_[i] / params_.linear_stiffness,
                                       wn_, dt_).v;
      w1[i] = detail::propagate_forced(s0_.theta[i], s0_.omega[i],
                                       torque_rel_[i] / params_.torsional_stiffness, Wn_[i], dt_).v;
    }
    const Pose end = real.advanced(dt_);
    free_linear_ = real.linear_velocity + v1;
    free_angular_ = real.angular_velocity + end.orientation.rotate(w1);
    clone.linear_velocity = free_linear_;
    clone.angular_velocity = free_angular_;
    clone.inv_mass_scale = std::exp(-wn_ * dt_);
    clone.inv_inertia_scale = {std::exp(-Wn_.x * dt_), std::exp(-Wn_.y * dt_), std::exp(-Wn_.z * dt_)};
  }

  /// Reads the contact response off the clone's velocity, folds it in as a
  /// constant load, and writes the exact end-of-step pose and velocity.
  RelativeState finish(RigidBody& clone) {
    const Pose end = real_.advanced(dt_);
    const Vec3 I = params_.clone_inertia.as_vec();

    // Impulse the solver applied, recovered from the effective response.
    const Vec3 j_lin = (clone.linear_velocity - free_linear_) * (params_.clone_mass / clone.inv_mass_scale);
    const Vec3 dw_rel = end.orientation.conjugate().rotate(clone.angular_velocity - free_angular_);
    Vec3 j_ang;
    for (int i = 0; i < 3; ++i)
      j_ang[i] = clone.inv_inertia_scale[i] > 0.0 ? dw_rel[i] * I[i] / clone.inv_inertia_scale[i] : 0.0;

    const Vec3 load = force_ + j_lin / dt_;
    const Vec3 load_ang = torque_rel_ + j_ang / dt_;
    RelativeState s1;
    for (int i = 0; i < 3; ++i) {
      const auto lin = detail::propagate_forced(s0_.d[i], s0_.v[i], load[i] / params_.linear_stiffness,
                                                wn_, dt_);
      const auto ang = detail::propagate_forced(s0_.theta[i], s0_.omega[i],
                                                load_ang[i] / params_.torsional_stiffness, Wn_[i], dt_);
      s1.d[i] = lin.x;
      s1.v[i] = lin.v;
      s1.theta[i] = ang.x;
      s1.omega[i] = ang.v;
    }
    clone.pose.position = end.position + s1.d;
    clone.pose.orientation = (end.orientation * UnitQuaternion::from_rotation_vector(s1.theta)).normalized();
    clone.linear_velocity = real_.linear_velocity + s1.v;
    clone.angular_velocity = real_.angular_velocity + end.orientation.rotate(s1.omega);
    clone.inv_mass_scale = 1.0;
    clone.inv_inertia_scale = {1.0, 1.0, 1.0};
    return s1;
  }

 private:
  DecouplingParams params_;
  double dt_;
  double wn_;
  Vec3 Wn_;
  RealMotion real_;
  RelativeState s0_;
  Vec3 force_;
  Vec3 torque_rel_;
  Vec3 free_linear_;
  Vec3 free_angular_;
};

/// Advances an isolated clone (no contacts) by one exact constraint step and
/// updates `state`. The clone must be dynamic.
inline void apply_constraint(RigidBody& clone, const RealMotion& real, const DecouplingParams& params,
                             double dt, ConstraintState& state) {
  if (!clone.is_dynamic()) throw StateError("apply_constraint: clone must be dynamic (condition C2)");
  if (!(dt > 0.0)) throw InvalidArgument("apply_constraint: dt must be positive");
  ExactStep step(params, dt);
  step.prepare(clone, real, &state.singularity_clamps);
  const RelativeState s = step.finish(clone);
  state.d = s.d;
  state.v = s.v;
  state.theta = s.theta;
  state.omega = s.omega;
  state.c_c = params.linear_damping();
  state.C_c = params.angular_damping();
  state.last_force = spring_force(s.d, s.v, params);
  state.last_torque = spring_torque(s.theta, s.omega, params);
  state.peak_displacement = std::max(state.peak_displacement, s.d.norm());
}

/// Owns the clone <-> real binding inside a world: condition switch, the
/// per-step integration hooks, and the running constraint state.
class DecouplingLink {
 public:
  DecouplingLink(BodyId clone_id, const DecouplingParams& params, Condition condition,
                 IntegrationMode mode = IntegrationMode::Exact)
      : clone_id_(clone_id), params_(params), condition_(condition), mode_(mode) {
    params_.validate();
    state_.c_c = params_.linear_damping();
    state_.C_c = params_.angular_damping();
  }

  BodyId clone_id() const { return clone_id_; }
  const DecouplingParams& params() const { return params_; }
  Condition condition() const { return condition_; }
  IntegrationMode mode() const { return mode_; }
  const ConstraintState& state() const { return state_; }
  const Pose& real_pose() const { return real_pose_; }

  /// Explicit mode is only usable when every spring is resolved by the step.
  static void check_explicit_stability(const DecouplingParams& p, double dt) {
    const Vec3 wa = p.angular_natural_frequency();
    const double worst = std::max({p.linear_natural_frequency(), wa.x, wa.y, wa.z});
    if (worst * dt >= 0.5)
      throw InvalidArgument("explicit spring integration needs w_n*dt < 0.5 (got " +
                            std::to_string(worst * dt) + ")");
  }

  void set_params(const DecouplingParams& p) {
    p.validate();
    params_ = p;
    state_.c_c = params_.linear_damping();
    state_.C_c = params_.angular_damping();
  }

  /// Places the clone on the real pose and configures it for the condition.
  void attach(WorldState& world, const Pose& real_pose) {
    if (mode_ == IntegrationMode::Explicit) check_explicit_stability(params_, world.dt);
    real_pose_ = real_pose;
    RigidBody& c = clone(world);
    c.pose = real_pose;
    c.linear_velocity = c.angular_velocity = {};
    configure(c);
    state_.reset_transients();
  }

  /// Switches C1/C2. Resets the transient state.
  void set_condition(WorldState& world, Condition condition) {
    condition_ = condition;
    RigidBody& c = clone(world);
    configure(c);
    if (condition_ == Condition::Coupled) {
      c.pose = real_pose_;
    }
    state_.reset_transients();
    state_.c_c = params_.linear_damping();
    state_.C_c = params_.angular_damping();
  }

  /// Call before the contact solve with the real pose at the end of the step.
  void begin_step(WorldState& world, const Pose& real_next, double dt) {
    RigidBody& c = clone(world);
    real_next_ = real_next;
    motion_ = finite_difference(real_pose_, real_next, dt);
    if (condition_ == Condition::Coupled) {
      c.linear_velocity = motion_.linear_velocity;
      c.angular_velocity = motion_.angular_velocity;
      return;
    }
    if (mode_ == IntegrationMode::Exact) {
      exact_.emplace(params_, dt);
      exact_->prepare(c, motion_, &state_.singularity_clamps);
      return;
    }
    const RelativeState s = relative_state(c, motion_, &state_.singularity_clamps);
    rigid::apply_force(c, spring_force(s.d, s.v, params_),
                       motion_.pose.orientation.rotate(spring_torque(s.theta, s.omega, params_)));
  }

  /// Call after the world's position update.
  void end_step(WorldState& world) {
    RigidBody& c = clone(world);
    const Pose real_end = real_next_;
    if (condition_ == Condition::Coupled) {
      // Exact copy, not the integrated approximation.
      c.pose = real_end;
      real_pose_ = real_end;
      return;
    }
    if (mode_ == IntegrationMode::Exact && exact_) {
      const RelativeState s = exact_->finish(c);
      exact_.reset();
      record(s);
    } else {
      RealMotion end{motion_.advanced(world.dt), motion_.linear_velocity, motion_.angular_velocity};
      record(relative_state(c, end));
    }
    real_pose_ = real_end;
  }

  /// Live |d| of the clone.
  double displacement() const { return state_.d.norm(); }

  void reset_peak() { state_.peak_displacement = 0.0; }

 private:
  RigidBody& clone(WorldState& world) const {
    RigidBody* c = world.find(clone_id_);
    if (c == nullptr) throw InvalidArgument("clone body " + std::to_string(clone_id_) + " not in world");
    return *c;
  }

  void configure(RigidBody& c) const {
    c.role = rigid::BodyRole::EffectorClone;
    c.gravity_enabled = false;
    c.inv_mass_scale = 1.0;
    c.inv_inertia_scale = {1.0, 1.0, 1.0};
    if (condition_ == Condition::Coupled) {
      c.kind = rigid::BodyKind::Kinematic;
      c.externally_integrated = true;
      return;
    }
    c.kind = rigid::BodyKind::Dynamic;
    c.mass = params_.clone_mass;
    c.inertia = params_.clone_inertia;
    c.externally_integrated = mode_ == IntegrationMode::Exact;
  }

  void record(const RelativeState& s) {
    state_.d = s.d;
    state_.v = s.v;
    state_.theta = s.theta;
    state_.omega = s.omega;
    state_.last_force = spring_force(s.d, s.v, params_);
    state_.last_torque = spring_torque(s.theta, s.omega, params_);
    state_.peak_displacement = std::max(state_.peak_displacement, s.d.norm());
  }

  BodyId clone_id_;
  DecouplingParams params_;
  Condition condition_;
  IntegrationMode mode_;
  ConstraintState state_;
  Pose real_pose_;
  Pose real_next_;
  RealMotion motion_;
  std::optional<ExactStep> exact_;
};

/// A world with one decoupled effector clone, stepped against a stream of
/// real poses.
class Simulation {
 public:
  Simulation(WorldState world, DecouplingLink link, const Pose& real_start)
      : world_(std::move(world)), link_(std::move(link)) {
    link_.attach(world_, real_start);
  }

  /// One fixed step; `real_next` is the tracked pose at time() + dt.
  const std::vector<rigid::ContactManifold>& step(const Pose& real_next,
                                                  std::span<const rigid::ExternalForce> forces = {}) {
    for (const auto& f : forces) {
      RigidBody* b = world_.find(f.body);
      if (b == nullptr) throw InvalidArgument("external force on unknown body");
      rigid::apply_force(*b, f.force, f.torque);
    }
    const double dt = world_.dt;
    link_.begin_step(world_, real_next, dt);
    rigid::integrate_forces(world_, dt);
    contacts_ = rigid::detect_contacts(world_);
    impulses_ = rigid::resolve_contacts(world_, contacts_, dt);
    rigid::integrate_positions(world_, dt);
    link_.end_step(world_);
    rigid::finish_step(world_);
    return contacts_;
  }

  WorldState& world() { return world_; }
  const WorldState& world() const { return world_; }
  DecouplingLink& link() { return link_; }
  const DecouplingLink& link() const { return link_; }
  const std::vector<rigid::ContactManifold>& last_contacts() const { return contacts_; }
  const std::vector<rigid::ContactImpulses>& last_impulses() const { return impulses_; }

  void set_condition(Condition c) { link_.set_condition(world_, c); }

  /// Bodies the clone touched (penetrating, not merely within margin) in the last step.
  std::vector<BodyId> clone_contacts() const {
    std::vector<BodyId> out;
    for (const auto& m : contacts_) {
      const bool touching = std::any_of(m.points.begin(), m.points.end(),
                                        [](const rigid::ContactPoint& p) { return p.gap == 0.0; });
      if (!touching) continue;
      if (m.body_a == link_.clone_id() && m.body_b != rigid::kGroundId) out.push_back(m.body_b);
      if (m.body_b == link_.clone_id() && m.body_a != rigid::kGroundId) out.push_back(m.body_a);
    }
    return out;
  }

 private:
  WorldState world_;
  DecouplingLink link_;
  std::vector<rigid::ContactManifold> contacts_;
  std::vector<rigid::ContactImpulses> impulses_;
};

}  // namespace phsim::decoupling
