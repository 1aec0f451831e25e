#pragma once

// Fixed-step rigid-body world: boxes on a ground plane, gravity, and a
// sequential-impulse contact solver with Coulomb friction.
//
// A step runs in four phases that callers may also drive one at a time
// (the decoupling link hooks in between them):
//   integrate_forces -> detect_contacts -> resolve_contacts -> integrate_positions

#include <phsim/body.hpp>
#include <phsim/contacts.hpp>
#include <phsim/errors.hpp>
#include <phsim/math.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <vector>

namespace phsim::rigid {

inline constexpr double kDefaultTimestep = 1.0 / 240.0;

struct SolverParams {
  int velocity_iterations = 8;
  double baumgarte = 0.2;
  double penetration_slop = 1e-4;  // [m] left uncorrected to keep contacts alive
  bool warm_start = true;
  double warm_start_radius = 2e-3;  // [m] max drift for a point to inherit impulses
  ContactSettings contacts;

  bool operator==(const SolverParams& o) const {
    return velocity_iterations == o.velocity_iterations && baumgarte == o.baumgarte &&
           penetration_slop == o.penetration_slop && warm_start == o.warm_start &&
           warm_start_radius == o.warm_start_radius && contacts.margin == o.contacts.margin;
  }
};

struct GroundPlane {
  bool enabled = true;
  double height = 0.0;
  MaterialParams material;
};

/// Accumulated impulses of one contact point from the previous step, used to
/// warm-start the next solve.
struct CachedImpulse {
  BodyId body_a = 0;
  BodyId body_b = 0;
  Vec3 position;
  double jn = 0.0;
  double jt1 = 0.0;
  double jt2 = 0.0;
};

struct WorldState {
  std::vector<RigidBody> bodies;
  std::vector<CachedImpulse> contact_cache;
  GroundPlane ground;
  Vec3 gravity{0.0, 0.0, -9.81};
  double dt = kDefaultTimestep;
  double time = 0.0;
  std::uint64_t step_count = 0;
  SolverParams solver;

  RigidBody* find(BodyId id) {
    auto it = std::find_if(bodies.begin(), bodies.end(), [id](const RigidBody& b) { return b.id == id; });
    return it == bodies.end() ? nullptr : &*it;
  }
  const RigidBody* find(BodyId id) const {
    return const_cast<WorldState*>(this)->find(id);
  }

  /// Adds a body; ids must be unique.
  RigidBody& add(RigidBody body) {
    if (find(body.id) != nullptr || body.id == kGroundId)
      throw InvalidArgument("duplicate body id " + std::to_string(body.id));
    if (body.is_dynamic() && !(body.mass > 0.0))
      throw InvalidArgument("dynamic body mass must be positive");
    bodies.push_back(body);
    return bodies.back();
  }
};

/// An external force/torque to accumulate on one body before a step.
struct ExternalForce {
  BodyId body = 0;
  Vec3 force;
  Vec3 torque;
};

/// Accumulates into the body's force/torque for the next step. Kinematic
/// bodies ignore it and get their warning flag raised.
inline void apply_force(RigidBody& body, const Vec3& force, const Vec3& torque) {
  if (!body.is_dynamic()) {
    body.ignored_force_warning = true;
    return;
  }
  body.force += force;
  body.torque += torque;
}

// ---------------------------------------------------------------------------
// Phases

/// Semi-implicit Euler velocity update from gravity and accumulated forces.
/// Externally integrated bodies keep their accumulators for their owner.
inline void integrate_forces(WorldState& world, double dt) {
  for (auto& b : world.bodies) {
    if (!b.is_dynamic() || b.externally_integrated) continue;
    Vec3 accel = b.force / b.mass;
    if (b.gravity_enabled) accel += world.gravity;
    b.linear_velocity += accel * dt;
    b.angular_velocity += b.inv_inertia_world() * b.torque * dt;
    b.force = {};
    b.torque = {};
  }
}

/// One manifold per touching pair in body order. A body's ground contact
/// comes before its pairs with later bodies.
inline std::vector<ContactManifold> detect_contacts(const WorldState& world) {
  std::vector<ContactManifold> out;
  const auto& bs = world.bodies;
  for (std::size_t i = 0; i < bs.size(); ++i) {
    if (world.ground.enabled && bs[i].is_dynamic()) {
      auto pts = collide_box_plane(bs[i], world.ground.height, world.solver.contacts);
      if (!pts.empty()) out.push_back({kGroundId, bs[i].id, std::move(pts)});
    }
    for (std::size_t j = i + 1; j < bs.size(); ++j) {
      if (!bs[i].is_dynamic() && !bs[j].is_dynamic()) continue;
      auto pts = collide_boxes(bs[i], bs[j], world.solver.contacts);
      if (!pts.empty()) out.push_back({bs[i].id, bs[j].id, std::move(pts)});
    }
  }
  return out;
}

/// Sum of normal impulses applied during the last resolve, per manifold.
struct ContactImpulses {
  BodyId body_a = 0;
  BodyId body_b = 0;
  Vec3 linear;  ///< total impulse applied to body_b (body_a received the negation)
};

namespace detail {

struct SolverBody {
  RigidBody* body = nullptr;  // null for the ground
  double inv_mass = 0.0;
  Mat3 inv_inertia;
  Vec3 v;
  Vec3 w;
};

struct SolverPoint {
  Vec3 position;
  Vec3 ra, rb, n, t1, t2;
  double mass_n = 0.0, mass_t1 = 0.0, mass_t2 = 0.0;
  double bias = 0.0;
  double jn = 0.0, jt1 = 0.0, jt2 = 0.0;
};

struct SolverManifold {
  int a = -1;
  int b = -1;
  double friction = 0.0;
  std::vector<SolverPoint> points;
};

inline void tangent_basis(const Vec3& n, Vec3& t1, Vec3& t2) {
  if (std::abs(n.x) >= 0.57735026919)
    t1 = Vec3{n.y, -n.x, 0.0}.normalized();
  else
    t1 = Vec3{0.0, n.z, -n.y}.normalized();
  t2 = n.cross(t1);
}

inline double effective_mass(const SolverBody& a, const SolverBody& b, const Vec3& ra,
                             const Vec3& rb, const Vec3& dir) {
  const Vec3 rna = ra.cross(dir);
  const Vec3 rnb = rb.cross(dir);
  const double k = a.inv_mass + b.inv_mass + rna.dot(a.inv_inertia * rna) + rnb.dot(b.inv_inertia * rnb);
  return k > 0.0 ? 1.0 / k : 0.0;
}

inline void apply_impulse(SolverBody& a, SolverBody& b, const Vec3& ra, const Vec3& rb,
                          const Vec3& p) {
  a.v -= p * a.inv_mass;
  a.w -= a.inv_inertia * ra.cross(p);
  b.v += p * b.inv_mass;
  b.w += b.inv_inertia * rb.cross(p);
}

inline Vec3 relative_velocity(const SolverBody& a, const SolverBody& b, const Vec3& ra,
                              const Vec3& rb) {
  return (b.v + b.w.cross(rb)) - (a.v + a.w.cross(ra));
}

}  // namespace detail

/// Sequential-impulse velocity solve. Impulses on each pair are equal and
/// opposite; friction is clamped to the Coulomb cone mu * normal impulse.
inline std::vector<ContactImpulses> resolve_contacts(WorldState& world,
                                                     std::span<const ContactManifold> manifolds,
                                                     double dt) {
  using namespace detail;
  if (!(dt > 0.0)) throw InvalidArgument("resolve_contacts: dt must be positive");

  std::vector<SolverBody> sbodies;
  sbodies.reserve(world.bodies.size() + 1);
  sbodies.push_back({});  // index 0: ground
  for (auto& b : world.bodies)
    sbodies.push_back({&b, b.inv_mass(), b.inv_inertia_world(), b.linear_velocity, b.angular_velocity});
  auto index_of = [&](BodyId id) -> int {
    if (id == kGroundId) return 0;
    for (std::size_t i = 0; i < world.bodies.size(); ++i)
      if (world.bodies[i].id == id) return static_cast<int>(i) + 1;
    throw InvalidArgument("contact references unknown body " + std::to_string(id));
  };
  auto material_of = [&](int idx) -> const MaterialParams& {
    return idx == 0 ? world.ground.material : sbodies[idx].body->material;
  };
  auto center_of = [&](int idx, const Vec3& p) -> Vec3 {
    return idx == 0 ? p : sbodies[idx].body->pose.position;
  };

  const double beta = world.solver.baumgarte / dt;
  std::vector<SolverManifold> rows;
  rows.reserve(manifolds.size());
  for (const auto& m : manifolds) {
    SolverManifold sm;
    sm.a = index_of(m.body_a);
    sm.b = index_of(m.body_b);
    const auto& ma = material_of(sm.a);
    const auto& mb = material_of(sm.b);
    sm.friction = std::sqrt(ma.friction_coefficient * mb.friction_coefficient);
    const double restitution = std::max(ma.restitution, mb.restitution);
    const SolverBody& A = sbodies[sm.a];
    const SolverBody& B = sbodies[sm.b];
    for (const auto& cp : m.points) {
      SolverPoint p;
      p.position = cp.position;
      p.n = cp.normal;
      // ground "center" is the contact point itself so its lever arm is zero
      p.ra = cp.position - center_of(sm.a, cp.position);
      p.rb = cp.position - center_of(sm.b, cp.position);
      tangent_basis(p.n, p.t1, p.t2);
      p.mass_n = effective_mass(A, B, p.ra, p.rb, p.n);
      p.mass_t1 = effective_mass(A, B, p.ra, p.rb, p.t1);
      p.mass_t2 = effective_mass(A, B, p.ra, p.rb, p.t2);
      if (cp.gap > 0.0) {
        p.bias = -cp.gap / dt;
      } else {
        p.bias = beta * std::max(0.0, cp.penetration - world.solver.penetration_slop);
        const double vn = relative_velocity(A, B, p.ra, p.rb).dot(p.n);
        if (restitution > 0.0 && vn < -1e-3) p.bias = std::max(p.bias, -restitution * vn);
      }
      sm.points.push_back(p);
    }
    rows.push_back(std::move(sm));
  }

  if (world.solver.warm_start) {
    const double r2 = world.solver.warm_start_radius * world.solver.warm_start_radius;
    for (std::size_t k = 0; k < rows.size(); ++k) {
      auto& m = rows[k];
      for (auto& p : m.points) {
        const CachedImpulse* best = nullptr;
        double best_d2 = r2;
        for (const auto& c : world.contact_cache) {
          if (c.body_a != manifolds[k].body_a || c.body_b != manifolds[k].body_b) continue;
          const double d2 = (c.position - p.position).norm_sq();
          if (d2 < best_d2) {
            best_d2 = d2;
            best = &c;
          }
        }
        if (best == nullptr) continue;
        p.jn = best->jn;
        p.jt1 = best->jt1;
        p.jt2 = best->jt2;
        apply_impulse(sbodies[m.a], sbodies[m.b], p.ra, p.rb, p.n * p.jn + p.t1 * p.jt1 + p.t2 * p.jt2);
      }
    }
  }

  for (int it = 0; it < world.solver.velocity_iterations; ++it) {
    for (auto& m : rows) {
      SolverBody& A = sbodies[m.a];
      SolverBody& B = sbodies[m.b];
      for (auto& p : m.points) {
        const Vec3 dv = relative_velocity(A, B, p.ra, p.rb);
        const double vn = dv.dot(p.n);
        const double jn_old = p.jn;
        p.jn = std::max(0.0, p.jn + p.mass_n * (p.bias - vn));
        apply_impulse(A, B, p.ra, p.rb, p.n * (p.jn - jn_old));

        const Vec3 dv2 = relative_velocity(A, B, p.ra, p.rb);
        const double old1 = p.jt1;
        const double old2 = p.jt2;
        double j1 = p.jt1 - p.mass_t1 * dv2.dot(p.t1);
        double j2 = p.jt2 - p.mass_t2 * dv2.dot(p.t2);
        const double limit = m.friction * p.jn;
        const double mag = std::sqrt(j1 * j1 + j2 * j2);
        if (mag > limit) {
          const double s = mag > 0.0 ? limit / mag : 0.0;
          j1 *= s;
          j2 *= s;
        }
        p.jt1 = j1;
        p.jt2 = j2;
        apply_impulse(A, B, p.ra, p.rb, p.t1 * (j1 - old1) + p.t2 * (j2 - old2));
      }
    }
  }

  world.contact_cache.clear();
  for (std::size_t k = 0; k < rows.size(); ++k)
    for (const auto& p : rows[k].points)
      world.contact_cache.push_back({manifolds[k].body_a, manifolds[k].body_b, p.position, p.jn, p.jt1, p.jt2});

  std::vector<ContactImpulses> impulses;
  impulses.reserve(rows.size());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    Vec3 total;
    for (const auto& p : rows[k].points) total += p.n * p.jn + p.t1 * p.jt1 + p.t2 * p.jt2;
    impulses.push_back({manifolds[k].body_a, manifolds[k].body_b, total});
  }
  for (std::size_t i = 1; i < sbodies.size(); ++i) {
    RigidBody& b = *sbodies[i].body;
    if (!b.is_dynamic()) continue;
    b.linear_velocity = sbodies[i].v;
    b.angular_velocity = sbodies[i].w;
  }
  return impulses;
}

/// x += v dt and exponential-map orientation update. Kinematic bodies move
/// with their prescribed velocity; externally integrated bodies are skipped.
inline void integrate_positions(WorldState& world, double dt) {
  for (auto& b : world.bodies) {
    if (b.externally_integrated) continue;
    b.pose.position += b.linear_velocity * dt;
    b.pose.orientation = integrate_orientation(b.pose.orientation, b.angular_velocity, dt);
  }
}

inline void finish_step(WorldState& world) {
  world.step_count += 1;
  world.time = static_cast<double>(world.step_count) * world.dt;
  for (const auto& b : world.bodies)
    if (!b.finite()) throw SimulationDiverged(b.id);
}

/// Full fixed step. `dt` must equal the world's configured timestep.
inline std::vector<ContactManifold> step_world(WorldState& world,
                                               std::span<const ExternalForce> external_forces,
                                               double dt) {
  if (dt != world.dt) throw InvalidArgument("step_world: dt must equal the configured timestep");
  for (const auto& f : external_forces) {
    RigidBody* b = world.find(f.body);
    if (b == nullptr) throw InvalidArgument("external force on unknown body " + std::to_string(f.body));
    apply_force(*b, f.force, f.torque);
  }
  integrate_forces(world, dt);
  auto manifolds = detect_contacts(world);
  resolve_contacts(world, manifolds, dt);
  integrate_positions(world, dt);
  finish_step(world);
  return manifolds;
}

inline std::vector<ContactManifold> step_world(WorldState& world) {
  return step_world(world, {}, world.dt);
}

inline Vec3 total_momentum(const WorldState& world) {
  Vec3 p;
  for (const auto& b : world.bodies)
    if (b.is_dynamic()) p += b.linear_velocity * b.mass;
  return p;
}

}  // namespace phsim::rigid
