#pragma once

// Narrow-phase contact generation for oriented boxes and the ground plane.
// Every pair is tested (no broadphase); scenes hold a handful of bodies.

#include <phsim/body.hpp>
#include <phsim/math.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

namespace phsim::rigid {

struct ContactPoint {
  Vec3 position;
  Vec3 normal;               ///< unit, pointing from body_a to body_b
  double penetration = 0.0;  ///< overlap depth, >= 0
  double gap = 0.0;          ///< separation for speculative points, >= 0
};

struct ContactManifold {
  BodyId body_a = 0;
  BodyId body_b = 0;
  std::vector<ContactPoint> points;  // at most 4
};

struct ContactSettings {
  /// Points separated by less than this are reported with a gap so the solver
  /// can stop approaching bodies before they interpenetrate.
  double margin = 5e-4;
};

namespace detail {

struct Obb {
  Vec3 center;
  std::array<Vec3, 3> axis;
  Vec3 half;
};

inline Obb to_obb(const RigidBody& b) {
  const Mat3 r = b.pose.orientation.to_matrix();
  return {b.pose.position, {r.column(0), r.column(1), r.column(2)}, b.half_extents};
}

inline double project_radius(const Obb& o, const Vec3& n) {
  return o.half.x * std::abs(o.axis[0].dot(n)) + o.half.y * std::abs(o.axis[1].dot(n)) +
         o.half.z * std::abs(o.axis[2].dot(n));
}

inline ContactPoint make_point(const Vec3& p, const Vec3& n, double separation) {
  return {p, n, std::max(0.0, -separation), std::max(0.0, separation)};
}

// Four corners of the face of `o` whose outward normal is sign * axis[i].
inline std::array<Vec3, 4> face_corners(const Obb& o, int i, double sign) {
  const int j = (i + 1) % 3;
  const int k = (i + 2) % 3;
  const Vec3 c = o.center + o.axis[i] * (sign * o.half[i]);
  const Vec3 u = o.axis[j] * o.half[j];
  const Vec3 v = o.axis[k] * o.half[k];
  return {c + u + v, c - u + v, c - u - v, c + u - v};
}

// Sutherland-Hodgman clip of `poly` against the half-space n.x <= offset.
inline std::vector<Vec3> clip(const std::vector<Vec3>& poly, const Vec3& n, double offset) {
  std::vector<Vec3> out;
  if (poly.empty()) return out;
  Vec3 prev = poly.back();
  double dprev = n.dot(prev) - offset;
  for (const Vec3& cur : poly) {
    const double dcur = n.dot(cur) - offset;
    if (dcur <= 0.0) {
      if (dprev > 0.0) out.push_back(prev + (cur - prev) * (dprev / (dprev - dcur)));
      out.push_back(cur);
    } else if (dprev <= 0.0) {
      out.push_back(prev + (cur - prev) * (dprev / (dprev - dcur)));
    }
    prev = cur;
    dprev = dcur;
  }
  return out;
}

// Reference face of `ref` (axis index `ri`, outward normal n) against the most
// anti-parallel face of `inc`. Points are returned on the incident face.
inline std::vector<ContactPoint> face_contact(const Obb& ref, int ri, const Vec3& n, const Obb& inc,
                                              double margin) {
  int ii = 0;
  double best = -1.0;
  for (int i = 0; i < 3; ++i) {
    const double a = std::abs(inc.axis[i].dot(n));
    if (a > best) {
      best = a;
      ii = i;
    }
  }
  const double isign = inc.axis[ii].dot(n) > 0.0 ? -1.0 : 1.0;
  const auto corners = face_corners(inc, ii, isign);
  std::vector<Vec3> poly(corners.begin(), corners.end());

  const int rj = (ri + 1) % 3;
  const int rk = (ri + 2) % 3;
  for (int side : {rj, rk}) {
    const Vec3& a = ref.axis[side];
    const double c = a.dot(ref.center);
    poly = clip(poly, a, c + ref.half[side]);
    poly = clip(poly, -a, -c + ref.half[side]);
  }

  const double face_offset = n.dot(ref.center) + ref.half[ri];
  std::vector<ContactPoint> pts;
  for (const Vec3& p : poly) {
    const double sep = n.dot(p) - face_offset;
    if (sep <= margin) pts.push_back(make_point(p, n, sep));
  }
  if (pts.size() <= 4) return pts;

  // Keep the four points extremal along the reference face diagonals.
  const Vec3& u = ref.axis[rj];
  const Vec3& v = ref.axis[rk];
  std::vector<ContactPoint> kept;
  for (const auto& [su, sv] : {std::pair{1.0, 1.0}, {-1.0, 1.0}, {-1.0, -1.0}, {1.0, -1.0}}) {
    std::size_t arg = 0;
    double hi = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < pts.size(); ++i) {
      const double s = su * u.dot(pts[i].position) + sv * v.dot(pts[i].position);
      if (s > hi + 1e-15) {
        hi = s;
        arg = i;
      }
    }
    const bool dup = std::any_of(kept.begin(), kept.end(), [&](const ContactPoint& k) {
      return (k.position - pts[arg].position).norm_sq() < 1e-20;
    });
    if (!dup) kept.push_back(pts[arg]);
  }
  return kept;
}

// Closest points between the lines p + s*d and q + t*e, clamped to |s| <= ls, |t| <= lt.
inline std::pair<Vec3, Vec3> closest_segment_points(const Vec3& p, const Vec3& d, double ls,
                                                    const Vec3& q, const Vec3& e, double lt) {
  const Vec3 r = p - q;
  const double a = d.dot(d);
  const double b = d.dot(e);
  const double c = e.dot(e);
  const double f = d.dot(r);
  const double g = e.dot(r);
  const double den = a * c - b * b;
  double s = den > 1e-14 ? (b * g - c * f) / den : 0.0;
  s = std::clamp(s, -ls, ls);
  double t = std::clamp((b * s + g) / c, -lt, lt);
  s = std::clamp((b * t - f) / a, -ls, ls);
  return {p + d * s, q + e * t};
}

}  // namespace detail

/// Contacts between two oriented boxes via the separating axis test.
/// Returns an empty list when the boxes are apart by more than the margin.
inline std::vector<ContactPoint> collide_boxes(const RigidBody& a, const RigidBody& b,
                                               const ContactSettings& settings = {}) {
  using detail::Obb;
  const Obb A = detail::to_obb(a);
  const Obb B = detail::to_obb(b);
  const Vec3 delta = B.center - A.center;

  // Axis kinds: 0-2 faces of A, 3-5 faces of B, 6-14 edge pairs.
  int best_axis = -1;
  double best_overlap = std::numeric_limits<double>::infinity();
  Vec3 best_n;
  auto test = [&](int id, Vec3 n) {
    const double len = n.norm();
    if (len < 1e-6) return true;
    n = n / len;
    const double dist = delta.dot(n);
    const double overlap = detail::project_radius(A, n) + detail::project_radius(B, n) - std::abs(dist);
    if (overlap < -settings.margin) return false;
    // Edge axes must beat face axes clearly to be chosen.
    const double biased = id >= 6 ? overlap * 1.05 + 1e-6 : overlap;
    if (biased < best_overlap) {
      best_overlap = biased;
      best_axis = id;
      best_n = dist < 0.0 ? -n : n;
    }
    return true;
  };
  for (int i = 0; i < 3; ++i)
    if (!test(i, A.axis[i])) return {};
  for (int i = 0; i < 3; ++i)
    if (!test(3 + i, B.axis[i])) return {};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      if (!test(6 + 3 * i + j, A.axis[i].cross(B.axis[j]))) return {};
  if (best_axis < 0) return {};

  const Vec3 n = best_n;
  if (best_axis < 3) return detail::face_contact(A, best_axis, n, B, settings.margin);
  if (best_axis < 6) {
    auto pts = detail::face_contact(B, best_axis - 3, -n, A, settings.margin);
    // Points lie on A's face here; flip the normal back to A -> B.
    for (auto& p : pts) p.normal = n;
    return pts;
  }

  const int i = (best_axis - 6) / 3;
  const int j = (best_axis - 6) % 3;
  Vec3 pa = A.center;
  for (int k = 0; k < 3; ++k)
    if (k != i) pa += A.axis[k] * (A.axis[k].dot(n) > 0.0 ? A.half[k] : -A.half[k]);
  Vec3 pb = B.center;
  for (int k = 0; k < 3; ++k)
    if (k != j) pb += B.axis[k] * (B.axis[k].dot(n) > 0.0 ? -B.half[k] : B.half[k]);
  const auto [ca, cb] =
      detail::closest_segment_points(pa, A.axis[i], A.half[i], pb, B.axis[j], B.half[j]);
  const double sep = (cb - ca).dot(n);
  return {detail::make_point((ca + cb) * 0.5, n, sep)};
}

/// Contacts between a box and the horizontal ground plane z = height.
/// The normal is +z (ground is body_a). Deepest corners first, at most four.
inline std::vector<ContactPoint> collide_box_plane(const RigidBody& b, double height,
                                                   const ContactSettings& settings = {}) {
  const detail::Obb o = detail::to_obb(b);
  const Vec3 up{0.0, 0.0, 1.0};
  struct Corner {
    Vec3 p;
    double sep;
  };
  std::vector<Corner> corners;
  for (int c = 0; c < 8; ++c) {
    Vec3 p = o.center;
    for (int k = 0; k < 3; ++k) p += o.axis[k] * (((c >> k) & 1) ? o.half[k] : -o.half[k]);
    const double sep = p.z - height;
    if (sep <= settings.margin) corners.push_back({p, sep});
  }
  std::stable_sort(corners.begin(), corners.end(),
                   [](const Corner& l, const Corner& r) { return l.sep < r.sep; });
  if (corners.size() > 4) corners.resize(4);
  std::vector<ContactPoint> pts;
  for (const auto& c : corners) pts.push_back(detail::make_point(c.p, up, c.sep));
  return pts;
}

}  // namespace phsim::rigid
