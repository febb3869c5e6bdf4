#pragma once

// Rigid-body dynamics of a thrust-vectoring vehicle:
//   m r'' = R T e3 - m g + f_dist
//   q'    = 0.5 q (x) (0, w)
//   J w'  = -w x J w + tau + tau_dist
// with a fixed-step RK4 integrator over the flattened 13-dimensional state.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>

#include "cgc/errors.hpp"
#include "cgc/so3.hpp"

namespace cgc {

using StateVector = Eigen::Matrix<double, 13, 1>;

struct RigidBodyState {
  Vec3 position = Vec3::Zero();
  Vec3 velocity = Vec3::Zero();
  UnitQuaternion attitude;
  Vec3 angular_velocity = Vec3::Zero();  // body frame

  bool finite() const {
    return position.allFinite() && velocity.allFinite() && attitude.coeffs().allFinite() &&
           angular_velocity.allFinite();
  }
};

/// Layout: r(0..2) v(3..5) q(6..9, w first) omega(10..12).
inline StateVector flatten(const RigidBodyState& s) {
  StateVector x;
  x << s.position, s.velocity, s.attitude.coeffs(), s.angular_velocity;
  return x;
}

/// Inverse of flatten; renormalizes the attitude block.
inline RigidBodyState unflatten(const StateVector& x) {
  RigidBodyState s;
  s.position = x.segment<3>(0);
  s.velocity = x.segment<3>(3);
  s.attitude = UnitQuaternion::from_coeffs(x.segment<4>(6));
  s.angular_velocity = x.segment<3>(10);
  return s;
}

/// Mass properties and environment. Invariants are checked on construction:
/// positive mass, symmetric positive-definite inertia, finite gravity.
class VehicleParams {
 public:
  VehicleParams() : VehicleParams(1.0, Mat3::Identity()) {}

  VehicleParams(double mass, const Mat3& inertia, const Vec3& gravity = Vec3{0.0, 0.0, 9.81},
                std::optional<double> drag_coeff = std::nullopt,
                std::optional<double> max_thrust = std::nullopt)
      : mass_(mass), inertia_(inertia), gravity_(gravity), drag_coeff_(drag_coeff),
        max_thrust_(max_thrust) {
    if (!(mass > 0.0) || !std::isfinite(mass)) throw ConfigError("vehicle mass must be positive");
    if (!inertia.allFinite() || (inertia - inertia.transpose()).cwiseAbs().maxCoeff() > 1e-12) {
      throw ConfigError("vehicle inertia must be finite and symmetric");
    }
    Eigen::SelfAdjointEigenSolver<Mat3> eig(inertia);
    if (!(eig.eigenvalues().minCoeff() > 0.0)) {
      throw ConfigError("vehicle inertia must be positive definite");
    }
    if (!gravity.allFinite()) throw ConfigError("gravity must be finite");
    if (drag_coeff && !(*drag_coeff >= 0.0)) throw ConfigError("drag coefficient must be >= 0");
    if (max_thrust && !(*max_thrust > 0.0)) throw ConfigError("max thrust must be > 0");
    inertia_inv_ = inertia.inverse();
  }

  double mass() const noexcept { return mass_; }
  const Mat3& inertia() const noexcept { return inertia_; }
  const Mat3& inertia_inv() const noexcept { return inertia_inv_; }
  const Vec3& gravity() const noexcept { return gravity_; }
  std::optional<double> drag_coeff() const noexcept { return drag_coeff_; }
  std::optional<double> max_thrust() const noexcept { return max_thrust_; }

  /// Thrust is never negative; the upper limit only applies when configured.
  double saturate_thrust(double thrust) const {
    thrust = std::max(thrust, 0.0);
    if (max_thrust_) thrust = std::min(thrust, *max_thrust_);
    return thrust;
  }

 private:
  double mass_;
  Mat3 inertia_;
  Mat3 inertia_inv_;
  Vec3 gravity_;
  std::optional<double> drag_coeff_;
  std::optional<double> max_thrust_;
};

struct ControlInput {
  double thrust = 0.0;            // N, along body e3
  Vec3 torque = Vec3::Zero();     // N m, body frame
};

/// Exogenous disturbance. Forces are in the inertial frame (N), torques in
/// the body frame (N m). Drag is f = -c_d |v| v.
struct Disturbance {
  enum class Kind { none, constant_force, translational_drag, constant_torque };

  Kind kind = Kind::none;
  Vec3 vector = Vec3::Zero();   // force or torque for the constant kinds
  double coefficient = 0.0;     // c_d for drag, kg/m

  static Disturbance none() { return {}; }
  static Disturbance constant_force(const Vec3& f) { return {Kind::constant_force, f, 0.0}; }
  static Disturbance drag(double c_d) { return {Kind::translational_drag, Vec3::Zero(), c_d}; }
  static Disturbance constant_torque(const Vec3& t) { return {Kind::constant_torque, t, 0.0}; }

  void validate() const {
    if (!vector.allFinite() || !std::isfinite(coefficient)) {
      throw ConfigError("disturbance parameters must be finite");
    }
    if (kind == Kind::translational_drag && coefficient < 0.0) {
      throw ConfigError("drag coefficient must be >= 0");
    }
  }

  Vec3 force(const Vec3& velocity) const {
    switch (kind) {
      case Kind::constant_force: return vector;
      case Kind::translational_drag: return -coefficient * velocity.norm() * velocity;
      default: return Vec3::Zero();
    }
  }

  /// d/dt of force() given the current acceleration.
  Vec3 force_rate(const Vec3& velocity, const Vec3& accel) const {
    if (kind != Kind::translational_drag) return Vec3::Zero();
    const double speed = velocity.norm();
    if (speed == 0.0) return Vec3::Zero();
    return -coefficient * (speed * accel + (velocity.dot(accel) / speed) * velocity);
  }

  Vec3 torque() const { return kind == Kind::constant_torque ? vector : Vec3::Zero(); }
};

inline std::string to_string(Disturbance::Kind k) {
  switch (k) {
    case Disturbance::Kind::none: return "none";
    case Disturbance::Kind::constant_force: return "constant_force";
    case Disturbance::Kind::translational_drag: return "translational_drag";
    case Disturbance::Kind::constant_torque: return "constant_torque";
  }
  return "?";
}

struct StateTangent {
  Vec3 position_dot = Vec3::Zero();
  Vec3 velocity_dot = Vec3::Zero();
  Vec4 attitude_dot = Vec4::Zero();
  Vec3 angular_velocity_dot = Vec3::Zero();

  StateVector flat() const {
    StateVector d;
    d << position_dot, velocity_dot, attitude_dot, angular_velocity_dot;
    return d;
  }
};

/// Translational acceleration for a given thrust (already saturated).
inline Vec3 translational_accel(const RigidBodyState& s, double thrust, const VehicleParams& p,
                                const Disturbance& d) {
  const Vec3 body_z = to_rotation(s.attitude).col(2);
  return (thrust / p.mass()) * body_z - p.gravity() + d.force(s.velocity) / p.mass();
}

inline StateTangent state_derivative(const RigidBodyState& s, const ControlInput& u,
                                     const VehicleParams& p, const Disturbance& d) {
  const double thrust = p.saturate_thrust(u.thrust);
  const Vec3& w = s.angular_velocity;
  StateTangent dx;
  dx.position_dot = s.velocity;
  dx.velocity_dot = translational_accel(s, thrust, p, d);
  dx.attitude_dot = quat_derivative(s.attitude, w);
  dx.angular_velocity_dot =
      p.inertia_inv() * (-w.cross(p.inertia() * w) + u.torque + d.torque());
  return dx;
}

/// One classical RK4 step of x' = f(t, x) on the flattened state. `f` maps
/// (double t, const RigidBodyState&) to StateTangent. Intermediate stages are
/// re-normalized when unflattened; the result is renormalized once more.
template <typename Rhs>
RigidBodyState rk4_step(Rhs&& f, double t, const RigidBodyState& s, double dt) {
  if (!(dt > 0.0)) throw ConfigError("integration step must be positive");
  const StateVector x = flatten(s);
  const StateVector k1 = f(t, s).flat();
  const StateVector k2 = f(t + 0.5 * dt, unflatten(x + 0.5 * dt * k1)).flat();
  const StateVector k3 = f(t + 0.5 * dt, unflatten(x + 0.5 * dt * k2)).flat();
  const StateVector k4 = f(t + dt, unflatten(x + dt * k3)).flat();
  const StateVector next = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  if (!next.allFinite()) throw IntegrationBlowup("non-finite state", t + dt);
  return unflatten(next);
}

/// RK4 step with the control input held over the step.
inline RigidBodyState integrate_step(const RigidBodyState& s, const ControlInput& u,
                                     const VehicleParams& p, const Disturbance& d, double dt,
                                     double t = 0.0) {
  return rk4_step([&](double, const RigidBodyState& x) { return state_derivative(x, u, p, d); },
                  t, s, dt);
}

/// Inertial angular momentum R J w.
inline Vec3 angular_momentum(const RigidBodyState& s, const VehicleParams& p) {
  return to_rotation(s.attitude) * (p.inertia() * s.angular_velocity);
}

}  // namespace cgc
