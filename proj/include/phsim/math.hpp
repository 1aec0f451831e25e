#pragma once

// Small fixed-size linear algebra for desk-scale rigid bodies: vectors,
// unit quaternions, poses and box inertia.

#include <phsim/errors.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>

namespace phsim {

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  constexpr Vec3() = default;
  constexpr Vec3(double xx, double yy, double zz) : x(xx), y(yy), z(zz) {}

  constexpr double& operator[](int i) { return i == 0 ? x : (i == 1 ? y : z); }
  constexpr double operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }

  constexpr Vec3 operator-() const { return {-x, -y, -z}; }
  constexpr Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  constexpr Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  constexpr Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  constexpr Vec3 operator/(double s) const { return {x / s, y / s, z / s}; }
  constexpr Vec3& operator+=(const Vec3& o) {
    x += o.x;
    y += o.y;
    z += o.z;
    return *this;
  }
  constexpr Vec3& operator-=(const Vec3& o) {
    x -= o.x;
    y -= o.y;
    z -= o.z;
    return *this;
  }
  constexpr Vec3& operator*=(double s) {
    x *= s;
    y *= s;
    z *= s;
    return *this;
  }
  constexpr bool operator==(const Vec3&) const = default;

  constexpr double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  constexpr Vec3 cross(const Vec3& o) const {
    return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
  }
  constexpr double norm_sq() const { return dot(*this); }
  double norm() const { return std::sqrt(norm_sq()); }
  Vec3 normalized() const {
    const double n = norm();
    return n > 0.0 ? *this / n : Vec3{};
  }
  /// Componentwise product.
  constexpr Vec3 cwise(const Vec3& o) const { return {x * o.x, y * o.y, z * o.z}; }
  bool finite() const { return std::isfinite(x) && std::isfinite(y) && std::isfinite(z); }
};

constexpr Vec3 operator*(double s, const Vec3& v) { return v * s; }

/// Row-major 3x3 matrix; only used for world-frame inverse inertia.
struct Mat3 {
  double m[3][3] = {{0, 0, 0}, {0, 0, 0}, {0, 0, 0}};

  static constexpr Mat3 diagonal(const Vec3& d) {
    Mat3 r;
    r.m[0][0] = d.x;
    r.m[1][1] = d.y;
    r.m[2][2] = d.z;
    return r;
  }

  constexpr Vec3 operator*(const Vec3& v) const {
    return {m[0][0] * v.x + m[0][1] * v.y + m[0][2] * v.z,
            m[1][0] * v.x + m[1][1] * v.y + m[1][2] * v.z,
            m[2][0] * v.x + m[2][1] * v.y + m[2][2] * v.z};
  }
  constexpr Mat3 operator*(const Mat3& o) const {
    Mat3 r;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        r.m[i][j] = m[i][0] * o.m[0][j] + m[i][1] * o.m[1][j] + m[i][2] * o.m[2][j];
    return r;
  }
  constexpr Mat3 transposed() const {
    Mat3 r;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) r.m[i][j] = m[j][i];
    return r;
  }
  constexpr Vec3 column(int j) const { return {m[0][j], m[1][j], m[2][j]}; }
};

/// Hamilton quaternion w + xi + yj + zk. Rotations use unit norm.
struct UnitQuaternion {
  double w = 1.0;
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  constexpr UnitQuaternion() = default;
  constexpr UnitQuaternion(double ww, double xx, double yy, double zz)
      : w(ww), x(xx), y(yy), z(zz) {}

  static constexpr UnitQuaternion identity() { return {}; }

  /// Rotation of `angle` radians about the unit vector `axis`.
  static UnitQuaternion from_axis_angle(const Vec3& axis, double angle) {
    const double h = 0.5 * angle;
    const double s = std::sin(h);
    return {std::cos(h), axis.x * s, axis.y * s, axis.z * s};
  }

  /// Inverse of to_rotation_vector(): rotation by |v| about v/|v|.
  static UnitQuaternion from_rotation_vector(const Vec3& v) {
    const double angle = v.norm();
    if (angle < 1e-12) {
      // second-order series keeps round trips exact for tiny angles
      return UnitQuaternion{1.0 - angle * angle / 8.0, 0.5 * v.x, 0.5 * v.y, 0.5 * v.z}
          .normalized();
    }
    return from_axis_angle(v / angle, angle);
  }

  constexpr UnitQuaternion operator*(const UnitQuaternion& o) const {
    return {w * o.w - x * o.x - y * o.y - z * o.z, w * o.x + x * o.w + y * o.z - z * o.y,
            w * o.y - x * o.z + y * o.w + z * o.x, w * o.z + x * o.y - y * o.x + z * o.w};
  }
  constexpr bool operator==(const UnitQuaternion&) const = default;

  constexpr UnitQuaternion conjugate() const { return {w, -x, -y, -z}; }
  constexpr double norm_sq() const { return w * w + x * x + y * y + z * z; }
  double norm() const { return std::sqrt(norm_sq()); }
  UnitQuaternion normalized() const {
    const double n = norm();
    return {w / n, x / n, y / n, z / n};
  }
  bool finite() const {
    return std::isfinite(w) && std::isfinite(x) && std::isfinite(y) && std::isfinite(z);
  }

  Vec3 rotate(const Vec3& v) const {
    // v + 2 u x (u x v + w v), u = vector part
    const Vec3 u{x, y, z};
    const Vec3 t = u.cross(v) * 2.0;
    return v + t * w + u.cross(t);
  }

  Mat3 to_matrix() const {
    Mat3 r;
    r.m[0][0] = 1 - 2 * (y * y + z * z);
    r.m[0][1] = 2 * (x * y - w * z);
    r.m[0][2] = 2 * (x * z + w * y);
    r.m[1][0] = 2 * (x * y + w * z);
    r.m[1][1] = 1 - 2 * (x * x + z * z);
    r.m[1][2] = 2 * (y * z - w * x);
    r.m[2][0] = 2 * (x * z - w * y);
    r.m[2][1] = 2 * (y * z + w * x);
    r.m[2][2] = 1 - 2 * (x * x + y * y);
    return r;
  }

  /// Axis-angle vector with |v| <= pi. The double cover is resolved to w >= 0;
  /// at exactly pi the lexicographically larger of the two axes wins.
  Vec3 to_rotation_vector() const {
    UnitQuaternion q = *this;
    if (q.w < 0.0) q = {-q.w, -q.x, -q.y, -q.z};
    const Vec3 u{q.x, q.y, q.z};
    const double s = u.norm();
    if (s < 1e-12) return u * (2.0 / q.w);
    if (q.w == 0.0) {
      const Vec3 n = -u;
      const bool flip = n.x > u.x || (n.x == u.x && (n.y > u.y || (n.y == u.y && n.z > u.z)));
      return (flip ? n : u) * (std::numbers::pi / s);
    }
    return u * (2.0 * std::atan2(s, q.w) / s);
  }
};

struct Pose {
  Vec3 position;
  UnitQuaternion orientation;

  bool operator==(const Pose&) const = default;
};

/// Principal inertia in the body frame.
struct InertiaDiag {
  double ixx = 0.0;
  double iyy = 0.0;
  double izz = 0.0;

  constexpr Vec3 as_vec() const { return {ixx, iyy, izz}; }
  constexpr bool operator==(const InertiaDiag&) const = default;
};

/// Translation and rotation error of `clone` relative to `real`.
struct PoseError {
  Vec3 d;      ///< clone.position - real.position, world frame [m]
  Vec3 theta;  ///< rotation vector of real^-1 * clone, real-object frame [rad]
};

inline PoseError pose_error(const Pose& real, const Pose& clone) {
  const UnitQuaternion rel = real.orientation.conjugate() * clone.orientation;
  return {clone.position - real.position, rel.to_rotation_vector()};
}

/// Solid box inertia. `half_extents` are half side lengths.
inline InertiaDiag box_inertia(double mass, const Vec3& half_extents) {
  if (!(mass > 0.0)) throw InvalidArgument("box_inertia: mass must be positive");
  if (!(half_extents.x > 0.0 && half_extents.y > 0.0 && half_extents.z > 0.0))
    throw InvalidArgument("box_inertia: extents must be positive");
  const Vec3 s = half_extents * 2.0;
  const double k = mass / 12.0;
  return {k * (s.y * s.y + s.z * s.z), k * (s.x * s.x + s.z * s.z), k * (s.x * s.x + s.y * s.y)};
}

/// Advance `q` by a world-frame angular velocity over `dt` with the exact
/// exponential map, then renormalize.
inline UnitQuaternion integrate_orientation(const UnitQuaternion& q, const Vec3& omega,
                                            double dt) {
  if (!(dt > 0.0)) throw InvalidArgument("integrate_orientation: dt must be positive");
  if (omega.norm_sq() == 0.0) return q;
  return (UnitQuaternion::from_rotation_vector(omega * dt) * q).normalized();
}

/// Spherical interpolation on the shorter arc.
inline UnitQuaternion slerp(UnitQuaternion a, const UnitQuaternion& b, double t) {
  double c = a.w * b.w + a.x * b.x + a.y * b.y + a.z * b.z;
  if (c < 0.0) {
    a = {-a.w, -a.x, -a.y, -a.z};
    c = -c;
  }
  double wa = 1.0 - t;
  double wb = t;
  if (c < 1.0 - 1e-12) {
    const double th = std::acos(std::min(c, 1.0));
    const double s = std::sin(th);
    wa = std::sin((1.0 - t) * th) / s;
    wb = std::sin(t * th) / s;
  }
  return UnitQuaternion{wa * a.w + wb * b.w, wa * a.x + wb * b.x, wa * a.y + wb * b.y,
                        wa * a.z + wb * b.z}
      .normalized();
}

}  // namespace phsim
