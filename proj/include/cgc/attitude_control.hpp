#pragma once

// Inner attitude loop built on the quaternion sliding variable
//   s = w_e + 2 lambda sgn(q_e.w) q_e.vec,   w_e = w - R_e^T w_d,
// with the torque law tau = w x J w + J w_r' - K s, which gives J s' = -K s.

#include <Eigen/Dense>

#include "cgc/dynamics.hpp"
#include "cgc/errors.hpp"
#include "cgc/so3.hpp"

namespace cgc {

struct AttitudeReference {
  UnitQuaternion q_d;
  Vec3 omega_d = Vec3::Zero();      // body frame of q_d, rad/s
  Vec3 omega_d_dot = Vec3::Zero();  // rad/s^2
};

/// Smallest eigenvalue of a symmetric matrix; throws unless it is positive.
inline double min_eigenvalue_spd(const Mat3& k, const char* what) {
  if (!k.allFinite() || (k - k.transpose()).cwiseAbs().maxCoeff() > 1e-12) {
    throw ConfigError(std::string(what) + " must be finite and symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Mat3> eig(k);
  const double lo = eig.eigenvalues().minCoeff();
  if (!(lo > 0.0)) throw ConfigError(std::string(what) + " must be positive definite");
  return lo;
}

/// lambda > 0 and K symmetric positive definite. upsilon is derived as the
/// smallest eigenvalue of K and is not user-settable.
class AttitudeGains {
 public:
  AttitudeGains() : AttitudeGains(3.0, Vec3{8.0, 8.0, 4.0}.asDiagonal()) {}

  AttitudeGains(double lambda, const Mat3& k) : lambda_(lambda), k_(k) {
    if (!(lambda > 0.0) || !std::isfinite(lambda)) throw ConfigError("attitude lambda must be > 0");
    upsilon_ = min_eigenvalue_spd(k, "attitude gain K");
  }

  double lambda() const noexcept { return lambda_; }
  const Mat3& k() const noexcept { return k_; }
  double upsilon() const noexcept { return upsilon_; }

 private:
  double lambda_;
  Mat3 k_;
  double upsilon_ = 0.0;
};

struct AttitudeErrorState {
  UnitQuaternion q_e;
  Mat3 r_e = Mat3::Identity();
  Vec3 omega_e = Vec3::Zero();
  Vec3 s = Vec3::Zero();
};

inline AttitudeErrorState attitude_error(const RigidBodyState& state, const AttitudeReference& ref,
                                         double lambda) {
  AttitudeErrorState e;
  e.q_e = error_quaternion(ref.q_d, state.attitude);
  e.r_e = to_rotation(e.q_e);
  e.omega_e = state.angular_velocity - e.r_e.transpose() * ref.omega_d;
  e.s = e.omega_e + 2.0 * lambda * sgn(e.q_e.scalar()) * e.q_e.vec();
  return e;
}

/// w_r = R_e^T w_d - 2 lambda sgn(q_e.w) q_e.vec, so that s = w - w_r.
inline Vec3 omega_r(const AttitudeReference& ref, const AttitudeErrorState& err, double lambda) {
  return err.r_e.transpose() * ref.omega_d - 2.0 * lambda * sgn(err.q_e.scalar()) * err.q_e.vec();
}

/// Time derivative of q_e.vec along the error kinematics.
inline Vec3 error_vec_rate(const AttitudeErrorState& err) {
  return 0.5 * (err.q_e.scalar() * err.omega_e + err.q_e.vec().cross(err.omega_e));
}

/// w_r' = R_e'^T w_d + R_e^T w_d' - 2 lambda sgn(q_e.w) q_e.vec', with
/// R_e' = R_e [w_e]x.
inline Vec3 omega_r_dot(const AttitudeReference& ref, const AttitudeErrorState& err,
                        double lambda) {
  const Mat3 r_e_dot = err.r_e * cross_matrix(err.omega_e);
  return r_e_dot.transpose() * ref.omega_d + err.r_e.transpose() * ref.omega_d_dot -
         2.0 * lambda * sgn(err.q_e.scalar()) * error_vec_rate(err);
}

struct AttitudeCommand {
  Vec3 torque = Vec3::Zero();
  AttitudeErrorState error;
};

/// tau = w x J w + J w_r' - K s.
inline AttitudeCommand attitude_torque(const RigidBodyState& state, const AttitudeReference& ref,
                                       const AttitudeGains& gains, const VehicleParams& params) {
  AttitudeCommand cmd;
  cmd.error = attitude_error(state, ref, gains.lambda());
  const Vec3& w = state.angular_velocity;
  const Mat3& j = params.inertia();
  cmd.torque = w.cross(j * w) + j * omega_r_dot(ref, cmd.error, gains.lambda()) -
               gains.k() * cmd.error.s;
  return cmd;
}

}  // namespace cgc
