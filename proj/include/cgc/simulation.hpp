#pragma once

// Closed-loop simulation of the cascade. Both loops are evaluated at every
// RK4 stage, so the integrated system is the continuous-time closed loop.
// Numerically differentiated feedback (numeric_diff) is the exception: its
// acceleration/jerk estimates are refreshed once per step from stored
// velocity samples and held over the step.

#include <cmath>
#include <string>

#include "cgc/analysis.hpp"
#include "cgc/attitude_control.hpp"
#include "cgc/dynamics.hpp"
#include "cgc/errors.hpp"
#include "cgc/position_control.hpp"
#include "cgc/trajectory.hpp"

namespace cgc {

struct SimulationSetup {
  VehicleParams vehicle;
  AttitudeGains attitude_gains;
  PositionGains position_gains;
  TrajectorySpec trajectory = traj::Setpoint{};
  Disturbance disturbance;
  OuterLoopOptions outer;
  /// Replace the attitude loop by R = R_d, w = w_d.
  bool ideal_inner_loop = false;
  double dt = 1e-3;
  double horizon = 10.0;
  RigidBodyState initial;
};

/// Everything evaluated at one (t, state): the control and the diagnostics.
struct ClosedLoopSample {
  ControlInput control;
  AttitudeReference attitude_ref;
  Vec3 r_d = Vec3::Zero();
  Vec3 u = Vec3::Zero();
  TraceNorms norms;
  StateTangent derivative;
};

class ClosedLoop {
 public:
  explicit ClosedLoop(const SimulationSetup& setup) : setup_(setup) {
    setup_.disturbance.validate();
    if (setup_.ideal_inner_loop && is_attitude_only(setup_.trajectory)) {
      throw ConfigError("ideal inner loop requires a position trajectory");
    }
    outer_ = setup_.outer;
    outer_.ideal_attitude = setup_.ideal_inner_loop;
  }

  const SimulationSetup& setup() const { return setup_; }

  /// Refresh the held numeric-differentiation estimates at an accepted step.
  void on_step(double t, const RigidBodyState& s) {
    if (outer_.mode != FeedbackMode::numeric_diff || is_attitude_only(setup_.trajectory)) return;
    diff_.push(t, s.velocity);
    measured_ = diff_.estimate(sample_flat(setup_.trajectory, t));
  }

  ClosedLoopSample evaluate(double t, const RigidBodyState& s) const {
    const auto& p = setup_.vehicle;
    ClosedLoopSample out;
    if (is_attitude_only(setup_.trajectory)) {
      out.attitude_ref = sample_attitude(setup_.trajectory, t);
      const AttitudeCommand cmd = attitude_torque(s, out.attitude_ref, setup_.attitude_gains, p);
      out.control = {0.0, cmd.torque};
      fill_attitude_norms(out.norms, cmd.error);
      out.r_d = s.position;
      out.derivative = state_derivative(s, out.control, p, setup_.disturbance);
      return out;
    }

    const FlatReference ref = sample_flat(setup_.trajectory, t);
    OuterLoopOutput ol;
    try {
      ol = outer_loop(s, ref, setup_.position_gains, p, setup_.disturbance, outer_,
                      outer_.mode == FeedbackMode::numeric_diff ? &measured_ : nullptr);
    } catch (const SingularityError& e) {
      throw SingularityError(std::string(e.what()) + " at t=" + std::to_string(t), t);
    }
    out.attitude_ref = ol.attitude_ref;
    out.r_d = ref.pos;
    out.u = ol.u;

    if (setup_.ideal_inner_loop) {
      out.control = {ol.thrust, Vec3::Zero()};
      RigidBodyState aligned = s;
      aligned.attitude = ol.attitude_ref.q_d;
      out.derivative = state_derivative(aligned, out.control, p, setup_.disturbance);
      out.derivative.attitude_dot.setZero();
      out.derivative.angular_velocity_dot.setZero();
      fill_attitude_norms(out.norms, attitude_error(aligned, ol.attitude_ref,
                                                    setup_.attitude_gains.lambda()));
    } else {
      const AttitudeCommand cmd = attitude_torque(s, ol.attitude_ref, setup_.attitude_gains, p);
      out.control = {ol.thrust, cmd.torque};
      out.derivative = state_derivative(s, out.control, p, setup_.disturbance);
      fill_attitude_norms(out.norms, cmd.error);
    }
    out.norms.r_e = ol.error.r_e.norm();
    out.norms.s_pos = ol.error.s_pos.norm();
    out.norms.delta2 = out.norms.delta1 *
        (ref.acc - setup_.position_gains.alpha() * ol.error.r_e_dot + p.gravity()).norm();
    return out;
  }

  /// Post-step projection: with an ideal inner loop the attitude state is
  /// overwritten by the desired attitude and rate.
  RigidBodyState project(double t, RigidBodyState s) const {
    if (!setup_.ideal_inner_loop) return s;
    const ClosedLoopSample smp = evaluate(t, s);
    s.attitude = smp.attitude_ref.q_d;
    s.angular_velocity = smp.attitude_ref.omega_d;
    return s;
  }

 private:
  static void fill_attitude_norms(TraceNorms& n, const AttitudeErrorState& e) {
    n.qe_vec = e.q_e.vec().norm();
    n.s_att = e.s.norm();
    n.delta1 = 2.0 * std::sqrt(2.0) * n.qe_vec;
  }

  SimulationSetup setup_;
  OuterLoopOptions outer_;
  NumericDifferentiator diff_;
  MeasuredDerivatives measured_;
};

/// Runs the closed loop from setup.initial over [0, horizon] and records
/// every step. Throws SingularityError / IntegrationBlowup with the time of
/// failure.
inline SimTrace simulate(const SimulationSetup& setup) {
  if (!(setup.dt > 0.0)) throw ConfigError("dt must be positive");
  if (!(setup.horizon >= 10.0 * setup.dt)) throw ConfigError("horizon must be at least 10 dt");
  if (!setup.initial.finite()) throw ConfigError("initial state must be finite");

  ClosedLoop loop(setup);
  const auto steps = static_cast<std::size_t>(std::llround(setup.horizon / setup.dt));
  SimTrace trace;
  trace.reserve(steps + 1);

  RigidBodyState s = loop.project(0.0, setup.initial);
  for (std::size_t k = 0;; ++k) {
    const double t = static_cast<double>(k) * setup.dt;
    loop.on_step(t, s);
    const ClosedLoopSample smp = loop.evaluate(t, s);
    trace.time.push_back(t);
    trace.states.push_back(s);
    trace.controls.push_back(smp.control);
    trace.r_d.push_back(smp.r_d);
    trace.q_d.push_back(smp.attitude_ref.q_d);
    trace.norms.push_back(smp.norms);
    if (k == steps) break;
    s = rk4_step([&loop](double tt, const RigidBodyState& x) { return loop.evaluate(tt, x).derivative; },
                 t, s, setup.dt);
    s = loop.project(t + setup.dt, s);
  }
  return trace;
}

}  // namespace cgc
