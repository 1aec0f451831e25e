#include <phsim/decoupling.hpp>
#include <phsim/scenario.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

using namespace phsim;
using namespace phsim::decoupling;
using rigid::BodyKind;
using rigid::RigidBody;

namespace {

// Closed-form critically damped response from rest at x0 (independent of the
// library's propagate helpers).
double analytic_x(double x0, double v0, double w, double t) {
  return (x0 + (v0 + w * x0) * t) * std::exp(-w * t);
}
double analytic_v(double x0, double v0, double w, double t) {
  return (v0 - (v0 + w * x0) * w * t) * std::exp(-w * t);
}

RigidBody isolated_clone(const DecouplingParams& p, const Pose& pose) {
  RigidBody c;
  c.id = 100;
  c.role = rigid::BodyRole::EffectorClone;
  c.mass = p.clone_mass;
  c.inertia = p.clone_inertia;
  c.gravity_enabled = false;
  c.pose = pose;
  return c;
}

RealMotion still(const Pose& p) { return {p, {}, {}}; }

}  // namespace

TEST(Damping, CriticalCoefficients) {
  EXPECT_DOUBLE_EQ(critical_damping_linear(50.0, 0.01), 2.0 * std::sqrt(0.5));
  EXPECT_DOUBLE_EQ(critical_damping_angular(150.0, 2e-6), 2.0 * std::sqrt(3e-4));
  EXPECT_THROW(critical_damping_linear(0.0, 0.01), InvalidArgument);
  EXPECT_THROW(critical_damping_linear(50.0, -1.0), InvalidArgument);
  EXPECT_THROW(critical_damping_angular(150.0, 0.0), InvalidArgument);
}

TEST(Params, DefaultValues) {
  const DecouplingParams p;
  EXPECT_EQ(p.linear_stiffness, 50.0);
  EXPECT_EQ(p.torsional_stiffness, 150.0);
  EXPECT_EQ(p.clone_mass, 0.010);
  EXPECT_NEAR(p.linear_natural_frequency(), std::sqrt(5000.0), 1e-12);
  // Inertia of a 10 g, 3.5 cm cube: m s^2 / 6.
  EXPECT_NEAR(p.clone_inertia.ixx, 0.01 * 0.035 * 0.035 / 6.0, 1e-18);
  EXPECT_THROW((DecouplingParams{-1.0, 150.0, 0.01, p.clone_inertia}.validate()), InvalidArgument);
}

TEST(Spring, ForceAndTorqueFormulas) {
  const DecouplingParams p;
  const Vec3 f = spring_force({0.01, 0, -0.02}, {0.1, 0, 0}, p);
  EXPECT_NEAR(f.x, -50 * 0.01 - p.linear_damping() * 0.1, 1e-15);
  EXPECT_NEAR(f.z, 50 * 0.02, 1e-15);
  const Vec3 t = spring_torque({0.1, 0, 0}, {0, 2, 0}, p);
  EXPECT_NEAR(t.x, -15.0, 1e-12);
  EXPECT_NEAR(t.y, -p.angular_damping().y * 2.0, 1e-15);
}

TEST(ConditionNames, RoundTrip) {
  EXPECT_EQ(to_string(Condition::Coupled), "C1");
  EXPECT_EQ(to_string(Condition::Decoupled), "C2");
  EXPECT_EQ(parse_condition("C1"), Condition::Coupled);
  EXPECT_EQ(parse_condition("decoupled"), Condition::Decoupled);
  EXPECT_THROW(parse_condition("C3"), InvalidArgument);
}

TEST(ExactStep, SingleStepMatchesClosedForm) {
  const DecouplingParams p;
  RigidBody c = isolated_clone(p, {{0.02, 0, 0}, {}});
  ConstraintState s;
  apply_constraint(c, still({}), p, 0.01, s);
  // Oracle values: x = x0 (1 + w t) e^{-w t}, v = -w^2 x0 t e^{-w t}, w = sqrt(5000), t = 0.01.
  EXPECT_NEAR(s.d.x, 0.016835, 1e-6);
  EXPECT_NEAR(s.v.x, -0.493069, 1e-6);
  EXPECT_NEAR(c.pose.position.x, s.d.x, 1e-15);
}

TEST(ExactStep, StepsComposeToTheContinuousSolution) {
  const DecouplingParams p;
  const double w = p.linear_natural_frequency();
  RigidBody c = isolated_clone(p, {{0.0, -0.01, 0.005}, {}});
  c.linear_velocity = {0.3, 0.0, 0.0};
  ConstraintState s;
  const double dt = 1.0 / 240.0;
  for (int i = 1; i <= 30; ++i) {
    apply_constraint(c, still({}), p, dt, s);
    const double t = i * dt;
    ASSERT_NEAR(s.d.x, analytic_x(0.0, 0.3, w, t), 1e-12);
    ASSERT_NEAR(s.d.y, analytic_x(-0.01, 0.0, w, t), 1e-12);
    ASSERT_NEAR(s.v.x, analytic_v(0.0, 0.3, w, t), 1e-11);
  }
}

TEST(ExactStep, RotationFollowsTheAngularSolution) {
  const DecouplingParams p;
  const double W = p.angular_natural_frequency().z;
  const Pose real{{}, UnitQuaternion::from_axis_angle({1, 0, 0}, 0.4)};
  // Clone twisted 1 mrad about the real object's z axis.
  RigidBody c = isolated_clone(p, {{}, real.orientation * UnitQuaternion::from_axis_angle({0, 0, 1}, 1e-3)});
  ConstraintState s;
  const double dt = 1e-5;
  for (int i = 1; i <= 20; ++i) {
    apply_constraint(c, still(real), p, dt, s);
    ASSERT_NEAR(s.theta.z, analytic_x(1e-3, 0.0, W, i * dt), 1e-12);
    ASSERT_NEAR(s.theta.x, 0.0, 1e-15);
  }
}

TEST(ExactStep, ConstantLoadSettlesAtForceOverStiffness) {
  const DecouplingParams p;
  RigidBody c = isolated_clone(p, {});
  ConstraintState s;
  for (int i = 0; i < 240; ++i) {
    rigid::apply_force(c, {0.0, 0.0, -p.clone_mass * 9.81}, {});
    apply_constraint(c, still({}), p, 1.0 / 240.0, s);
  }
  EXPECT_NEAR(s.d.z, -p.clone_mass * 9.81 / p.linear_stiffness, 1e-12);
}

TEST(ExactStep, TracksConstantVelocityWithoutLag) {
  const DecouplingParams p;
  RigidBody c = isolated_clone(p, {});
  ConstraintState s;
  const double dt = 1.0 / 240.0;
  Pose real;
  const Vec3 v{0.05, -0.02, 0.0};
  for (int i = 0; i < 240; ++i) {
    apply_constraint(c, {real, v, {}}, p, dt, s);
    real.position = real.position + v * dt;
  }
  EXPECT_LT(s.d.norm(), 1e-9);
  EXPECT_NEAR((c.pose.position - real.position).norm(), 0.0, 1e-9);
}

TEST(ExactStep, RejectsKinematicClone) {
  const DecouplingParams p;
  RigidBody c = isolated_clone(p, {});
  c.kind = BodyKind::Kinematic;
  ConstraintState s;
  EXPECT_THROW(apply_constraint(c, still({}), p, 0.01, s), StateError);
  c.kind = BodyKind::Dynamic;
  EXPECT_THROW(apply_constraint(c, still({}), p, 0.0, s), InvalidArgument);
}

TEST(ExactStep, ReleasedCloneNeverOvershoots) {
  const DecouplingParams p;
  RigidBody c = isolated_clone(p, {{0.02, 0, 0}, UnitQuaternion::from_axis_angle({0, 1, 0}, 0.05)});
  ConstraintState s;
  for (int i = 0; i < 240; ++i) {
    apply_constraint(c, still({}), p, 1.0 / 240.0, s);
    ASSERT_GE(s.d.x, 0.0);
    ASSERT_GE(s.theta.y, 0.0);
  }
}

TEST(ConstraintEnergy, NonIncreasingWhenReleased) {
  const DecouplingParams p;
  RigidBody c = isolated_clone(p, {{0.01, -0.02, 0.003}, UnitQuaternion::from_rotation_vector({0.02, 0.0, -0.01})});
  c.linear_velocity = {-0.2, 0.1, 0.0};
  ConstraintState s;
  apply_constraint(c, still({}), p, 1.0 / 240.0, s);
  double prev = constraint_energy(s, p);
  for (int i = 0; i < 480; ++i) {
    apply_constraint(c, still({}), p, 1.0 / 240.0, s);
    const double e = constraint_energy(s, p);
    ASSERT_LE(e, prev + 1e-9);
    prev = e;
  }
}

TEST(RelativeStateTest, ClampsNearHalfTurnAndCounts) {
  const DecouplingParams p;
  RigidBody c = isolated_clone(p, {{}, UnitQuaternion{0.0, 0.0, 0.0, 1.0}});
  int clamps = 0;
  const auto s = relative_state(c, still({}), &clamps);
  EXPECT_EQ(clamps, 1);
  EXPECT_LT(s.theta.norm(), std::numbers::pi);
}

TEST(FiniteDifference, RecoversLinearAndAngularVelocity) {
  const Pose a{{0, 0, 0}, {}};
  const Pose b{{0.01, 0, -0.02}, UnitQuaternion::from_axis_angle({0, 0, 1}, 0.03)};
  const auto m = finite_difference(a, b, 0.01);
  EXPECT_NEAR(m.linear_velocity.x, 1.0, 1e-12);
  EXPECT_NEAR(m.linear_velocity.z, -2.0, 1e-12);
  EXPECT_NEAR(m.angular_velocity.z, 3.0, 1e-12);
  const Pose e = m.advanced(0.01);
  EXPECT_NEAR((e.position - b.position).norm(), 0.0, 1e-15);
  EXPECT_NEAR(std::abs(e.orientation.w * b.orientation.w + e.orientation.z * b.orientation.z), 1.0, 1e-14);
}

TEST(ExplicitMode, StabilityGuard) {
  const DecouplingParams defaults;
  EXPECT_THROW(DecouplingLink::check_explicit_stability(defaults, 1.0 / 240.0), InvalidArgument);
  const DecouplingParams soft = params_for_box(50.0, 0.01, 0.01, 0.035);
  EXPECT_NO_THROW(DecouplingLink::check_explicit_stability(soft, 1.0 / 2000.0));
}

// ---------------------------------------------------------------------------
// Link inside a world

namespace {

Simulation empty_sim(Condition c, IntegrationMode mode = IntegrationMode::Exact,
                     const DecouplingParams& p = {}, double dt = 1.0 / 240.0) {
  rigid::WorldState w;
  w.ground.enabled = false;
  w.dt = dt;
  RigidBody clone;
  clone.id = 100;
  clone.mass = p.clone_mass;
  clone.inertia = p.clone_inertia;
  w.add(clone);
  return Simulation(std::move(w), DecouplingLink(100, p, c, mode), Pose{});
}

}  // namespace

TEST(Link, CoupledCloneCopiesRealPoseExactly) {
  Simulation sim = empty_sim(Condition::Coupled);
  for (int i = 1; i <= 100; ++i) {
    const Pose real{{0.001 * i, std::sin(0.1 * i), 0.0}, UnitQuaternion::from_axis_angle({0, 0, 1}, 0.02 * i)};
    sim.step(real);
    ASSERT_EQ(sim.world().find(100)->pose, real);
    ASSERT_EQ(sim.link().displacement(), 0.0);
  }
  EXPECT_EQ(sim.world().find(100)->kind, BodyKind::Kinematic);
}

TEST(Link, DecoupledCloneFollowsFreeMotionClosely) {
  Simulation sim = empty_sim(Condition::Decoupled);
  const double dt = sim.world().dt;
  for (int i = 1; i <= 480; ++i) sim.step({{0.02 * i * dt, 0.0, 0.0}, {}});
  // Constant velocity after the start transient: no residual lag.
  EXPECT_LT(sim.link().displacement(), 1e-6);
  EXPECT_GT(sim.link().state().peak_displacement, 0.0);
}

TEST(Link, ConditionSwitchResetsTransients) {
  Simulation sim = empty_sim(Condition::Decoupled);
  sim.step({{0.01, 0, 0}, {}});
  EXPECT_GT(sim.link().displacement(), 0.0);
  sim.set_condition(Condition::Coupled);
  EXPECT_EQ(sim.link().displacement(), 0.0);
  EXPECT_EQ(sim.link().state().peak_displacement, 0.0);
  EXPECT_EQ(sim.world().find(100)->pose, sim.link().real_pose());
}

TEST(Link, ExplicitModeAgreesWithExactForSoftSprings) {
  const DecouplingParams soft = params_for_box(50.0, 0.02, 0.01, 0.035);
  const double dt = 1.0 / 4000.0;
  Simulation a = empty_sim(Condition::Decoupled, IntegrationMode::Exact, soft, dt);
  Simulation b = empty_sim(Condition::Decoupled, IntegrationMode::Explicit, soft, dt);
  for (int i = 1; i <= 400; ++i) {
    const Pose real{{0.02 * std::min(i, 40) / 40.0, 0, 0}, {}};
    a.step(real);
    b.step(real);
  }
  EXPECT_NEAR(a.link().state().d.x, b.link().state().d.x, 2e-4);
}

TEST(Link, UnknownCloneIdThrows) {
  rigid::WorldState w;
  EXPECT_THROW(Simulation(std::move(w), DecouplingLink(7, {}, Condition::Decoupled), Pose{}), InvalidArgument);
}

TEST(Link, StaticPushAgainstHeavyCubeSettlesAtPenetrationDepth) {
  // 800 g cube, friction limit 0.8*0.8*9.81 = 6.3 N; pushing 3 cm past the
  // face asks for 1.5 N, so the cube must hold and the clone stay at the face.
  scenario::Scenario sc;
  sc.masses = {0.8};
  decoupling::Simulation sim = scenario::build_simulation(sc, scenario::effector_start_pose(sc, 0));
  const Pose start = scenario::effector_start_pose(sc, 0);
  const double depth = 0.03;
  const double travel = sc.push.approach_gap + depth;
  for (int i = 1; i <= 4 * 240; ++i) {
    Pose real = start;
    real.position.y += std::min(travel, 0.05 * i * sim.world().dt);
    sim.step(real);
  }
  const auto* cube = sim.world().find(1);
  EXPECT_NEAR(cube->pose.position.y, 0.0, 1e-5);
  EXPECT_NEAR(sim.link().displacement(), depth, 1e-3);
  EXPECT_NEAR(sim.link().state().last_force.norm(), sc.params.linear_stiffness * depth, 0.05);
}
