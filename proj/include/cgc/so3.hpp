#pragma once

// Quaternion and rotation-matrix algebra used by the controllers.
//
// Conventions: Hamilton product, scalar-first storage (w, x, y, z), body-frame
// angular velocity so that q_dot = 0.5 * q (x) (0, omega).

#include <Eigen/Dense>

#include <cmath>
#include <numbers>

#include "cgc/errors.hpp"

namespace cgc {

using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat3 = Eigen::Matrix3d;

inline const Vec3 kE3{0.0, 0.0, 1.0};

/// sgn with sgn(0) = 1. The controller relies on this so that q_e.w = 0 is
/// never a fixed point.
constexpr double sgn(double x) noexcept { return x < 0.0 ? -1.0 : 1.0; }

/// [v]x, so that cross_matrix(a) * b == a.cross(b).
inline Mat3 cross_matrix(const Vec3& v) {
  Mat3 m;
  m << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
       -v.y(), v.x(), 0.0;
  return m;
}

/// Inverse of cross_matrix on the skew-symmetric part of m.
inline Vec3 vee(const Mat3& m) {
  return 0.5 * Vec3{m(2, 1) - m(1, 2), m(0, 2) - m(2, 0), m(1, 0) - m(0, 1)};
}

/// Orientation on the 3-sphere. Construction always normalizes, so every
/// instance satisfies w^2 + |v|^2 = 1 to rounding. The sign is never forced:
/// q and -q are distinct values describing the same rotation.
class UnitQuaternion {
 public:
  UnitQuaternion() = default;

  /// Normalizes (w, v). Throws std::domain_error on a zero or non-finite input.
  UnitQuaternion(double w, const Vec3& v) : w_(w), v_(v) { normalize(); }

  static UnitQuaternion identity() { return {}; }

  /// From a 4-vector in (w, x, y, z) order.
  static UnitQuaternion from_coeffs(const Vec4& c) {
    return {c[0], Vec3{c[1], c[2], c[3]}};
  }

  double scalar() const noexcept { return w_; }
  const Vec3& vec() const noexcept { return v_; }
  Vec4 coeffs() const { return {w_, v_.x(), v_.y(), v_.z()}; }
  double norm() const { return std::sqrt(w_ * w_ + v_.squaredNorm()); }

  UnitQuaternion operator-() const {
    UnitQuaternion q;
    q.w_ = -w_;
    q.v_ = -v_;
    return q;
  }

 private:
  void normalize() {
    const double n = std::sqrt(w_ * w_ + v_.squaredNorm());
    if (!(n > 0.0) || !std::isfinite(n)) {
      throw std::domain_error("UnitQuaternion: cannot normalize zero or non-finite quaternion");
    }
    w_ /= n;
    v_ /= n;
  }

  double w_ = 1.0;
  Vec3 v_ = Vec3::Zero();
};

/// Rotation by `angle` radians about `axis`. The axis is either unit length or
/// exactly zero (only meaningful with angle == 0).
struct AxisAngle {
  Vec3 axis = Vec3::Zero();
  double angle = 0.0;
};

/// Raw Hamilton product on 4-vectors; no normalization. Used for kinematics
/// where one factor is a pure quaternion (0, omega).
inline Vec4 hamilton(const Vec4& a, const Vec4& b) {
  const double aw = a[0], bw = b[0];
  const Vec3 av = a.tail<3>(), bv = b.tail<3>();
  Vec4 out;
  out[0] = aw * bw - av.dot(bv);
  out.tail<3>() = aw * bv + bw * av + av.cross(bv);
  return out;
}

inline UnitQuaternion quat_mul(const UnitQuaternion& a, const UnitQuaternion& b) {
  return UnitQuaternion::from_coeffs(hamilton(a.coeffs(), b.coeffs()));
}

inline UnitQuaternion operator*(const UnitQuaternion& a, const UnitQuaternion& b) {
  return quat_mul(a, b);
}

inline UnitQuaternion conjugate(const UnitQuaternion& q) {
  return {q.scalar(), -q.vec()};
}

/// q_dot = 0.5 * q (x) (0, omega), omega in the body frame.
inline Vec4 quat_derivative(const UnitQuaternion& q, const Vec3& omega) {
  return 0.5 * hamilton(q.coeffs(), Vec4{0.0, omega.x(), omega.y(), omega.z()});
}

/// R = I + 2 w [v]x + 2 [v]x^2.
inline Mat3 to_rotation(const UnitQuaternion& q) {
  const Mat3 vx = cross_matrix(q.vec());
  return Mat3::Identity() + 2.0 * q.scalar() * vx + 2.0 * vx * vx;
}

inline UnitQuaternion from_axis_angle(const AxisAngle& aa) {
  const double half = 0.5 * aa.angle;
  return {std::cos(half), std::sin(half) * aa.axis};
}

/// q_e = q_d* (x) q, so that to_rotation(q_e) = R_d^T R.
inline UnitQuaternion error_quaternion(const UnitQuaternion& q_d, const UnitQuaternion& q) {
  return quat_mul(conjugate(q_d), q);
}

/// Frobenius distance of R from the identity. For R generated by q this
/// equals 2*sqrt(2)*|q.vec()|.
inline double frobenius_distance(const Mat3& r) {
  return (r - Mat3::Identity()).norm();
}

/// Rotation matrix to quaternion (Shepperd). Sign is chosen so that the
/// largest component is positive.
inline UnitQuaternion from_rotation(const Mat3& r) {
  const double tr = r.trace();
  const Vec4 d{tr, r(0, 0), r(1, 1), r(2, 2)};
  Eigen::Index i = 0;
  d.maxCoeff(&i);
  Vec4 c;
  switch (i) {
    case 0: {
      const double s = 2.0 * std::sqrt(1.0 + tr);
      c << 0.25 * s, (r(2, 1) - r(1, 2)) / s, (r(0, 2) - r(2, 0)) / s, (r(1, 0) - r(0, 1)) / s;
      break;
    }
    case 1: {
      const double s = 2.0 * std::sqrt(1.0 + r(0, 0) - r(1, 1) - r(2, 2));
      c << (r(2, 1) - r(1, 2)) / s, 0.25 * s, (r(0, 1) + r(1, 0)) / s, (r(0, 2) + r(2, 0)) / s;
      break;
    }
    case 2: {
      const double s = 2.0 * std::sqrt(1.0 - r(0, 0) + r(1, 1) - r(2, 2));
      c << (r(0, 2) - r(2, 0)) / s, (r(0, 1) + r(1, 0)) / s, 0.25 * s, (r(1, 2) + r(2, 1)) / s;
      break;
    }
    default: {
      const double s = 2.0 * std::sqrt(1.0 - r(0, 0) - r(1, 1) + r(2, 2));
      c << (r(1, 0) - r(0, 1)) / s, (r(0, 2) + r(2, 0)) / s, (r(1, 2) + r(2, 1)) / s, 0.25 * s;
      break;
    }
  }
  return UnitQuaternion::from_coeffs(c);
}

/// Axis (1, 0, 0) used when u points exactly along -e3 and every horizontal
/// axis is a valid minimal rotation.
inline const Vec3 kAntiParallelAxis{1.0, 0.0, 0.0};

/// Minimal rotation taking e3 onto u/|u|, as axis-angle. The axis is
/// e3 x u_hat normalized, evaluated from the horizontal components directly
/// so it stays accurate when u is nearly anti-parallel to e3. Parallel u gives
/// a zero axis and zero angle; exactly anti-parallel u uses kAntiParallelAxis.
inline AxisAngle align_e3_axis_angle(const Vec3& u) {
  const double n = u.norm();
  if (!(n > 0.0) || !std::isfinite(n)) {
    throw SingularityError("align_e3: desired thrust direction undefined for zero-norm vector");
  }
  const double horizontal = std::hypot(u.x(), u.y());
  if (horizontal == 0.0) {
    if (u.z() > 0.0) return {Vec3::Zero(), 0.0};
    return {kAntiParallelAxis, std::numbers::pi};
  }
  return {Vec3{-u.y(), u.x(), 0.0} / horizontal, std::atan2(horizontal, u.z())};
}

inline UnitQuaternion align_e3_quaternion(const Vec3& u) {
  return from_axis_angle(align_e3_axis_angle(u));
}

/// R_d with R_d * e3 = u/|u|.
inline Mat3 align_e3(const Vec3& u) { return to_rotation(align_e3_quaternion(u)); }

}  // namespace cgc
