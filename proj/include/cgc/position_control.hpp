#pragma once

// Outer position loop. The position sliding variable is
//   S = r_e' + alpha r_e,
// the desired specific force is
//   u = r_d'' - alpha r_e' + g - K S            (nominal)
//   u += (c_hat/m)|v| v - 0.25 |v|^4 S           (drag-robust variant)
// and thrust / desired attitude follow from R_d T e3 = m u. The desired body
// rate and its derivative come from differentiating u/|u| twice.

#include <Eigen/Dense>

#include <cmath>
#include <deque>
#include <optional>
#include <string>

#include "cgc/attitude_control.hpp"
#include "cgc/dynamics.hpp"
#include "cgc/errors.hpp"
#include "cgc/so3.hpp"
#include "cgc/trajectory.hpp"

namespace cgc {

/// Norm of u below which no thrust direction is defined.
inline constexpr double kFreeFallThreshold = 1e-9;

/// alpha > 0, Kpos symmetric positive definite; rho = smallest eigenvalue.
class PositionGains {
 public:
  PositionGains() : PositionGains(2.0, Mat3::Identity() * 3.0) {}

  PositionGains(double alpha, const Mat3& k) : alpha_(alpha), k_(k) {
    if (!(alpha > 0.0) || !std::isfinite(alpha)) throw ConfigError("position alpha must be > 0");
    rho_ = min_eigenvalue_spd(k, "position gain K");
    // With an ideal inner loop each eigenmode k_i of K obeys
    //   r_e'' + (alpha + k_i) r_e' + alpha k_i r_e = 0,
    // whose roots are -alpha and -k_i.
    for (double root : second_order_roots()) {
      if (!(root < 0.0)) throw ConfigError("position gains give unstable error dynamics");
    }
  }

  double alpha() const noexcept { return alpha_; }
  const Mat3& k() const noexcept { return k_; }
  double rho() const noexcept { return rho_; }

  /// Roots of the ideal-inner-loop error dynamics: -alpha and -eig(K).
  Eigen::Matrix<double, 4, 1> second_order_roots() const {
    Eigen::SelfAdjointEigenSolver<Mat3> eig(k_);
    Eigen::Matrix<double, 4, 1> r;
    r << -alpha_, -eig.eigenvalues();
    return r;
  }

 private:
  double alpha_;
  Mat3 k_;
  double rho_ = 0.0;
};

struct PositionErrorState {
  Vec3 r_e = Vec3::Zero();
  Vec3 r_e_dot = Vec3::Zero();
  Vec3 s_pos = Vec3::Zero();
};

enum class FeedbackMode { oracle, numeric_diff };
enum class PositionLaw { nominal, robust_drag };

inline std::string to_string(FeedbackMode m) {
  return m == FeedbackMode::oracle ? "oracle" : "numeric_diff";
}
inline std::string to_string(PositionLaw l) {
  return l == PositionLaw::nominal ? "nominal" : "robust_drag";
}

inline PositionErrorState position_error(const RigidBodyState& state, const FlatReference& ref,
                                         const PositionGains& gains) {
  PositionErrorState e;
  e.r_e = state.position - ref.pos;
  e.r_e_dot = state.velocity - ref.vel;
  e.s_pos = e.r_e_dot + gains.alpha() * e.r_e;
  return e;
}

inline Vec3 desired_force(const PositionErrorState& err, const FlatReference& ref,
                          const PositionGains& gains, const Vec3& gravity) {
  return ref.acc - gains.alpha() * err.r_e_dot + gravity - gains.k() * err.s_pos;
}

/// Nominal force plus drag cancellation with estimate c_d_hat (kg/m) and the
/// -0.25 |v|^4 S damping term.
inline Vec3 desired_force_robust(const PositionErrorState& err, const FlatReference& ref,
                                 const PositionGains& gains, const Vec3& velocity,
                                 double c_d_hat, const VehicleParams& params) {
  const double speed = velocity.norm();
  return desired_force(err, ref, gains, params.gravity()) +
         (c_d_hat / params.mass()) * speed * velocity -
         0.25 * std::pow(speed, 4) * err.s_pos;
}

struct ThrustAttitude {
  double thrust = 0.0;
  UnitQuaternion q_d;
  Mat3 r_d = Mat3::Identity();
};

/// T = m|u|, R_d = align_e3(u).
inline ThrustAttitude extract_thrust_attitude(const Vec3& u, const VehicleParams& params) {
  const double n = u.norm();
  if (!(n >= kFreeFallThreshold)) {
    throw SingularityError("desired force vanishes (free fall): no attitude is defined");
  }
  ThrustAttitude out;
  out.thrust = params.mass() * n;
  out.q_d = align_e3_quaternion(u);
  out.r_d = to_rotation(out.q_d);
  return out;
}

struct FeedforwardRates {
  Vec3 omega_d = Vec3::Zero();
  Vec3 omega_d_dot = Vec3::Zero();
};

/// Body rate of R_d(t) = align_e3(u(t)) and its derivative, given u and its
/// first two time derivatives.
///
/// The x/y components follow from R_d e3 = u_hat:
///   (w_y, -w_x, 0) = R_d^T u_hat'
///   (w_y', -w_x', 0) = R_d^T u_hat'' - [w]x R_d^T u_hat'
/// The z component is the yaw rate of the minimal (swing-only) rotation,
///   w_z = -(u_x u_y' - u_y u_x') / (1 + u_z)   on the unit vector u_hat,
/// which is what keeps q_d and w_d mutually consistent.
inline FeedforwardRates feedforward_rates(const Vec3& u, const Vec3& u_dot, const Vec3& u_ddot,
                                          const Mat3& r_d) {
  const double n = u.norm();
  if (!(n >= kFreeFallThreshold)) {
    throw SingularityError("feedforward rates undefined for vanishing desired force");
  }
  const Vec3 uh = u / n;
  const double n_dot = uh.dot(u_dot);
  const Vec3 uh_dot = (u_dot - uh * n_dot) / n;
  const double n_ddot = uh_dot.dot(u_dot) + uh.dot(u_ddot);
  const Vec3 uh_ddot = (u_ddot - 2.0 * uh_dot * n_dot - uh * n_ddot) / n;

  const double one_plus_z = 1.0 + uh.z();
  if (!(one_plus_z > 1e-9)) {
    throw SingularityError("feedforward yaw rate undefined for inverted thrust direction");
  }

  FeedforwardRates out;
  const Vec3 a = r_d.transpose() * uh_dot;
  const double swing = uh.x() * uh_dot.y() - uh.y() * uh_dot.x();
  out.omega_d = Vec3{-a.y(), a.x(), -swing / one_plus_z};

  const Vec3 b = r_d.transpose() * uh_ddot - out.omega_d.cross(a);
  const double swing_dot = uh.x() * uh_ddot.y() - uh.y() * uh_ddot.x();
  out.omega_d_dot = Vec3{-b.y(), b.x(),
                         -swing_dot / one_plus_z + swing * uh_dot.z() / (one_plus_z * one_plus_z)};
  return out;
}

/// Acceleration and jerk used by the outer loop when they come from
/// measurements instead of the model.
struct MeasuredDerivatives {
  Vec3 accel = Vec3::Zero();
  Vec3 jerk = Vec3::Zero();
};

/// Backward-difference estimator of acceleration and jerk from velocity
/// samples taken at the control rate (two-sample stencils). Each simulation
/// owns one instance.
class NumericDifferentiator {
 public:
  void reset() {
    samples_ = 0;
  }

  /// Record the velocity at an accepted step.
  void push(double t, const Vec3& velocity) {
    if (samples_ > 0) {
      const double dt = t - last_t_;
      if (!(dt > 0.0)) throw std::invalid_argument("NumericDifferentiator: time must increase");
      const Vec3 accel = (velocity - last_v_) / dt;
      if (samples_ > 1) jerk_ = (accel - accel_) / dt;
      accel_ = accel;
    }
    last_t_ = t;
    last_v_ = velocity;
    ++samples_;
  }

  /// Estimates, falling back to the reference feedforward while the stencil
  /// is not yet filled.
  MeasuredDerivatives estimate(const FlatReference& ref) const {
    MeasuredDerivatives m;
    m.accel = samples_ > 1 ? accel_ : ref.acc;
    m.jerk = samples_ > 2 ? jerk_ : ref.jerk;
    return m;
  }

 private:
  int samples_ = 0;
  double last_t_ = 0.0;
  Vec3 last_v_ = Vec3::Zero();
  Vec3 accel_ = Vec3::Zero();
  Vec3 jerk_ = Vec3::Zero();
};

struct OuterLoopOptions {
  FeedbackMode mode = FeedbackMode::oracle;
  PositionLaw law = PositionLaw::nominal;
  double c_d_hat = 0.0;
  /// Treat the vehicle attitude as equal to R_d when predicting acceleration
  /// and jerk (used together with an ideal inner loop).
  bool ideal_attitude = false;
};

struct OuterLoopOutput {
  Vec3 u = Vec3::Zero();
  Vec3 u_dot = Vec3::Zero();
  Vec3 u_ddot = Vec3::Zero();
  double thrust = 0.0;
  Mat3 r_d = Mat3::Identity();
  AttitudeReference attitude_ref;
  PositionErrorState error;
  Vec3 accel = Vec3::Zero();  // r'' used for feedback
  Vec3 jerk = Vec3::Zero();   // r''' used for feedback
};

namespace detail {

/// Drag-robust extra terms of u and their first two derivatives along a
/// motion with velocity v, acceleration a, jerk j.
struct RobustTerms {
  Vec3 value = Vec3::Zero(), rate = Vec3::Zero(), accel = Vec3::Zero();
};

inline RobustTerms robust_terms(double c, const Vec3& v, const Vec3& a, const Vec3& j,
                                const Vec3& s, const Vec3& s_dot, const Vec3& s_ddot) {
  RobustTerms out;
  // c |v| v
  const double n = v.norm();
  double n_dot = 0.0, n_ddot = 0.0;
  if (n > 0.0) {
    n_dot = v.dot(a) / n;
    n_ddot = (a.squaredNorm() + v.dot(j) - n_dot * n_dot) / n;
  }
  out.value = c * n * v;
  out.rate = c * (n_dot * v + n * a);
  out.accel = c * (n_ddot * v + 2.0 * n_dot * a + n * j);
  // -0.25 |v|^4 s, with |v|^4 = w^2 and w = v.v
  const double w = v.squaredNorm(), w_dot = 2.0 * v.dot(a),
               w_ddot = 2.0 * (a.squaredNorm() + v.dot(j));
  const double p = w * w, p_dot = 2.0 * w * w_dot, p_ddot = 2.0 * (w_dot * w_dot + w * w_ddot);
  out.value -= 0.25 * p * s;
  out.rate -= 0.25 * (p_dot * s + p * s_dot);
  out.accel -= 0.25 * (p_ddot * s + 2.0 * p_dot * s_dot + p * s_ddot);
  return out;
}

}  // namespace detail

/// Full outer loop: position error, desired force, thrust/attitude extraction
/// and feedforward rates. In oracle mode the acceleration and jerk needed by
/// u' and u'' are predicted from the vehicle model (including the active
/// disturbance); in numeric_diff mode they come from `measured`.
inline OuterLoopOutput outer_loop(const RigidBodyState& state, const FlatReference& ref,
                                  const PositionGains& gains, const VehicleParams& params,
                                  const Disturbance& dist, const OuterLoopOptions& opts,
                                  const MeasuredDerivatives* measured = nullptr) {
  if (opts.mode == FeedbackMode::numeric_diff && measured == nullptr) {
    throw std::invalid_argument("outer_loop: numeric_diff mode needs measured derivatives");
  }
  const double m = params.mass();
  const double alpha = gains.alpha();
  const Mat3& k = gains.k();

  OuterLoopOutput out;
  out.error = position_error(state, ref, gains);
  const auto& e = out.error;
  const bool robust = opts.law == PositionLaw::robust_drag;

  out.u = robust ? desired_force_robust(e, ref, gains, state.velocity, opts.c_d_hat, params)
                 : desired_force(e, ref, gains, params.gravity());
  const ThrustAttitude ta = extract_thrust_attitude(out.u, params);
  out.thrust = ta.thrust;
  out.r_d = ta.r_d;

  const double applied = params.saturate_thrust(ta.thrust);
  const Mat3 r = opts.ideal_attitude ? ta.r_d : to_rotation(state.attitude);
  const Vec3 body_z = r.col(2);

  if (opts.mode == FeedbackMode::oracle) {
    out.accel = (applied / m) * body_z - params.gravity() + dist.force(state.velocity) / m;
  } else {
    out.accel = measured->accel;
  }

  const Vec3 r_e_ddot = out.accel - ref.acc;
  const Vec3 s_dot = r_e_ddot + alpha * e.r_e_dot;
  out.u_dot = ref.jerk - alpha * r_e_ddot - k * s_dot;

  // Robust terms depend on the acceleration, so their rate is added before
  // the jerk prediction (which needs the full u').
  detail::RobustTerms rt;
  if (robust) {
    rt = detail::robust_terms(opts.c_d_hat / m, state.velocity, out.accel, Vec3::Zero(), e.s_pos,
                              s_dot, Vec3::Zero());
    out.u_dot += rt.rate;
  }

  if (opts.mode == FeedbackMode::oracle) {
    const bool saturated = applied != ta.thrust;
    const double thrust_rate = saturated ? 0.0 : m * out.u.normalized().dot(out.u_dot);
    const Vec3 body_z_dot =
        opts.ideal_attitude
            ? Vec3((out.u_dot - out.u.normalized() * out.u.normalized().dot(out.u_dot)) /
                   out.u.norm())
            : Vec3(r * cross_matrix(state.angular_velocity) * kE3);
    out.jerk = (thrust_rate * body_z + applied * body_z_dot) / m +
               dist.force_rate(state.velocity, out.accel) / m;
  } else {
    out.jerk = measured->jerk;
  }

  const Vec3 r_e_dddot = out.jerk - ref.jerk;
  const Vec3 s_ddot = r_e_dddot + alpha * r_e_ddot;
  out.u_ddot = ref.snap - alpha * r_e_dddot - k * s_ddot;
  if (robust) {
    rt = detail::robust_terms(opts.c_d_hat / m, state.velocity, out.accel, out.jerk, e.s_pos,
                              s_dot, s_ddot);
    out.u_ddot += rt.accel;
  }

  const FeedforwardRates ff = feedforward_rates(out.u, out.u_dot, out.u_ddot, ta.r_d);
  out.attitude_ref.q_d = ta.q_d;
  out.attitude_ref.omega_d = ff.omega_d;
  out.attitude_ref.omega_d_dot = ff.omega_d_dot;
  return out;
}

}  // namespace cgc
