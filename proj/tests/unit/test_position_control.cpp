#include <catch_amalgamated.hpp>

#include <cmath>

#include "cgc/errors.hpp"
#include "cgc/position_control.hpp"
#include "cgc/simulation.hpp"
#include "test_util.hpp"

using namespace cgc;
using testutil::max_abs;
using testutil::random_vec;

namespace {

const Vec3 kG{0.0, 0.0, 9.81};

// u(t) along a smooth curve with closed-form derivatives.
struct Curve {
  Vec3 u, u_dot, u_ddot;
};

Curve wobble(double t) {
  Curve c;
  c.u = Vec3{2.0 * std::sin(1.3 * t), -1.5 * std::cos(0.7 * t), 9.81 + std::sin(2.0 * t)};
  c.u_dot = Vec3{2.6 * std::cos(1.3 * t), 1.05 * std::sin(0.7 * t), 2.0 * std::cos(2.0 * t)};
  c.u_ddot = Vec3{-3.38 * std::sin(1.3 * t), 0.735 * std::cos(0.7 * t), -4.0 * std::sin(2.0 * t)};
  return c;
}

// Body rate recovered from R_d(t) by the central difference of the rotation log.
Vec3 rate_from_rotations(double t, double h) {
  const Mat3 a = align_e3(wobble(t - h).u), b = align_e3(wobble(t + h).u);
  const UnitQuaternion dq = from_rotation(a.transpose() * b);
  const double sgn_w = dq.scalar() < 0 ? -1.0 : 1.0;
  const Vec3 v = sgn_w * dq.vec();
  const double angle = 2.0 * std::atan2(v.norm(), std::abs(dq.scalar()));
  const Vec3 axis = v.norm() > 0 ? Vec3(v.normalized()) : Vec3(Vec3::Zero());
  return axis * angle / (2 * h);
}

FeedforwardRates ff_at(double t) {
  const Curve c = wobble(t);
  return feedforward_rates(c.u, c.u_dot, c.u_ddot, align_e3(c.u));
}

}  // namespace

TEST_CASE("position gains") {
  const PositionGains g;
  REQUIRE(g.alpha() == 2.0);
  REQUIRE(g.rho() == Catch::Approx(3.0));
  const auto roots = g.second_order_roots();
  REQUIRE(roots.maxCoeff() < 0.0);
  REQUIRE_THROWS_AS(PositionGains(0.0, Mat3::Identity()), ConfigError);
  REQUIRE_THROWS_AS(PositionGains(-1.0, Mat3::Identity()), ConfigError);
  REQUIRE_THROWS_AS(PositionGains(1.0, Vec3{1.0, 0.0, 1.0}.asDiagonal()), ConfigError);
}

TEST_CASE("position_error") {
  const PositionGains g;
  FlatReference ref;
  ref.pos = random_vec();
  ref.vel = random_vec();
  RigidBodyState s;
  s.position = ref.pos;
  s.velocity = ref.vel;
  SECTION("on reference") {
    const PositionErrorState e = position_error(s, ref, g);
    REQUIRE(e.r_e.norm() == 0.0);
    REQUIRE(e.s_pos.norm() == 0.0);
  }
  SECTION("hand example") {
    s.position += Vec3::UnitX();
    const PositionErrorState e = position_error(s, ref, g);
    REQUIRE((e.s_pos - Vec3{2, 0, 0}).norm() < 1e-15);
  }
  SECTION("sliding-variable reconstruction") {
    s.position += random_vec();
    s.velocity += random_vec();
    const PositionErrorState e = position_error(s, ref, g);
    REQUIRE((e.s_pos - (e.r_e_dot + g.alpha() * e.r_e)).norm() < 1e-12);
  }
}

TEST_CASE("desired_force") {
  FlatReference ref;
  PositionErrorState e;
  SECTION("hover") {
    REQUIRE((desired_force(e, ref, PositionGains(), kG) - kG).norm() == 0.0);
  }
  SECTION("pure feedforward") {
    ref.acc = random_vec(3.0);
    REQUIRE((desired_force(e, ref, PositionGains(), kG) - (ref.acc + kG)).norm() == 0.0);
  }
  SECTION("hand example") {
    e.r_e = Vec3::UnitX();
    e.s_pos = Vec3::UnitX();
    REQUIRE((desired_force(e, ref, PositionGains(1.0, Mat3::Identity()), kG) - Vec3{-1, 0, 9.81}).norm() == 0.0);
  }
}

TEST_CASE("desired_force_robust") {
  const VehicleParams p(1.0, Mat3::Identity());
  FlatReference ref;
  PositionErrorState e;
  e.r_e = random_vec();
  e.r_e_dot = random_vec();
  e.s_pos = e.r_e_dot + 2.0 * e.r_e;
  const PositionGains g;
  REQUIRE((desired_force_robust(e, ref, g, Vec3::Zero(), 0.1, p) - desired_force(e, ref, g, kG)).norm() == 0.0);
  PositionErrorState zero;
  const Vec3 extra = desired_force_robust(zero, ref, g, Vec3{2, 0, 0}, 0.1, p) - desired_force(zero, ref, g, kG);
  REQUIRE((extra - Vec3{0.4, 0, 0}).norm() < 1e-15);
}

TEST_CASE("extract_thrust_attitude") {
  const VehicleParams p(1.0, Mat3::Identity());
  SECTION("hover") {
    const ThrustAttitude ta = extract_thrust_attitude(kG, p);
    REQUIRE(ta.thrust == Catch::Approx(9.81));
    REQUIRE(max_abs(ta.r_d - Mat3::Identity()) == 0.0);
  }
  SECTION("horizontal component tilts toward it") {
    const double a = 2.0;
    const ThrustAttitude ta = extract_thrust_attitude(kG + Vec3{a, 0, 0}, p);
    REQUIRE(ta.thrust == Catch::Approx(std::hypot(a, 9.81)));
    const AxisAngle aa = align_e3_axis_angle(kG + Vec3{a, 0, 0});
    REQUIRE((aa.axis - Vec3::UnitY()).norm() < 1e-15);  // e3 x x_hat
    REQUIRE(aa.angle == Catch::Approx(std::atan(a / 9.81)));
  }
  SECTION("anti-parallel") {
    const ThrustAttitude ta = extract_thrust_attitude(-kG, VehicleParams(2.0, Mat3::Identity()));
    REQUIRE(ta.thrust == Catch::Approx(2.0 * 9.81));
    REQUIRE((ta.r_d * kE3 + kE3).norm() < 1e-15);
    REQUIRE(std::abs(ta.r_d(0, 0) - 1.0) < 1e-15);
  }
  SECTION("free fall") {
    REQUIRE_THROWS_AS(extract_thrust_attitude(Vec3{0, 0, 1e-10}, p), SingularityError);
  }
  SECTION("R_d T e3 = m u") {
    const VehicleParams q(1.7, Mat3::Identity());
    for (int i = 0; i < 200; ++i) {
      const Vec3 u = random_vec(20.0);
      const ThrustAttitude ta = extract_thrust_attitude(u, q);
      REQUIRE((ta.r_d * ta.thrust * kE3 - q.mass() * u).norm() < 1e-9);
    }
  }
}

TEST_CASE("feedforward_rates") {
  SECTION("constant u") {
    const Vec3 u{1.0, -2.0, 9.0};
    const FeedforwardRates ff = feedforward_rates(u, Vec3::Zero(), Vec3::Zero(), align_e3(u));
    REQUIRE(ff.omega_d.norm() == 0.0);
    REQUIRE(ff.omega_d_dot.norm() == 0.0);
  }
  SECTION("singularities") {
    REQUIRE_THROWS_AS(feedforward_rates(Vec3::Zero(), Vec3::Ones(), Vec3::Ones(), Mat3::Identity()),
                      SingularityError);
    REQUIRE_THROWS_AS(feedforward_rates(-kG, Vec3::Ones(), Vec3::Ones(), align_e3(-kG)), SingularityError);
  }
  SECTION("rates match rotation finite differences") {
    for (double t : {0.1, 0.7, 1.9, 3.3, 5.0}) {
      const Vec3 fd = rate_from_rotations(t, 1e-5);
      INFO("t " << t << " fd " << fd.transpose() << " analytic " << ff_at(t).omega_d.transpose());
      REQUIRE((ff_at(t).omega_d - fd).norm() < 1e-6);
    }
  }
  SECTION("rate derivative matches finite differences of the rate") {
    const double h = 1e-5;
    for (double t : {0.1, 0.7, 1.9, 3.3, 5.0}) {
      const Vec3 fd = (ff_at(t + h).omega_d - ff_at(t - h).omega_d) / (2 * h);
      REQUIRE((ff_at(t).omega_d_dot - fd).norm() < 1e-6);
    }
  }
  SECTION("propagating R_d with w_d reproduces the minimal rotation") {
    Mat3 r = align_e3(wobble(0.0).u);
    const double dt = 1e-3;
    double worst = 0.0;
    for (int k = 0; k < 5000; ++k) {
      const double t = k * dt;
      // midpoint rotation update
      const Vec3 w = ff_at(t + 0.5 * dt).omega_d;
      r = r * to_rotation(from_axis_angle({w.norm() > 0 ? Vec3(w.normalized()) : Vec3(kE3), w.norm() * dt}));
      worst = std::max(worst, max_abs(r - align_e3(wobble(t + dt).u)));
    }
    REQUIRE(worst < 1e-5);
  }
}

TEST_CASE("numeric differentiator") {
  NumericDifferentiator d;
  FlatReference ref;
  ref.acc = Vec3{1, 2, 3};
  ref.jerk = Vec3{4, 5, 6};
  REQUIRE((d.estimate(ref).accel - ref.acc).norm() == 0.0);
  const double dt = 1e-3;
  // v(t) = (t^2, 0, t)
  for (int k = 0; k < 3; ++k) {
    const double t = k * dt;
    d.push(t, Vec3{t * t, 0.0, t});
  }
  const MeasuredDerivatives m = d.estimate(ref);
  REQUIRE((m.accel - Vec3{2 * 2 * dt - dt, 0, 1}).norm() < 1e-9);
  REQUIRE((m.jerk - Vec3{2, 0, 0}).norm() < 1e-6);
  REQUIRE_THROWS_AS(d.push(0.0, Vec3::Zero()), std::invalid_argument);
}

TEST_CASE("outer loop") {
  const VehicleParams p(1.0, Vec3{0.03, 0.03, 0.06}.asDiagonal());
  const PositionGains g;
  SECTION("hover on reference") {
    FlatReference ref;
    ref.pos = Vec3{0, 0, 1};
    RigidBodyState s;
    s.position = ref.pos;
    const OuterLoopOutput o = outer_loop(s, ref, g, p, {}, {});
    REQUIRE(o.thrust == Catch::Approx(9.81));
    REQUIRE(std::abs(o.attitude_ref.q_d.scalar() - 1.0) < 1e-15);
    REQUIRE(o.attitude_ref.omega_d.norm() == 0.0);
    REQUIRE(o.attitude_ref.omega_d_dot.norm() == 0.0);
  }
  SECTION("numeric mode needs measurements") {
    OuterLoopOptions opts;
    opts.mode = FeedbackMode::numeric_diff;
    REQUIRE_THROWS_AS(outer_loop(RigidBodyState{}, FlatReference{}, g, p, {}, opts), std::invalid_argument);
  }
  SECTION("oracle derivatives match finite differences along the closed loop") {
    for (auto law : {PositionLaw::nominal, PositionLaw::robust_drag}) {
      SimulationSetup setup;
      setup.vehicle = p;
      setup.trajectory = traj::Circle{1.0, 1.0, Vec3{0, 0, 1}};
      setup.outer.law = law;
      setup.outer.c_d_hat = 0.1;
      setup.disturbance = law == PositionLaw::robust_drag ? Disturbance::drag(0.1) : Disturbance::none();
      setup.initial.position = Vec3{0.6, 0.3, 1.2};
      setup.initial.attitude = from_axis_angle({Vec3::UnitX(), 0.2});
      setup.horizon = 0.5;
      const SimTrace tr = simulate(setup);
      auto u_at = [&](std::size_t i) {
        return outer_loop(tr.states[i], sample_flat(setup.trajectory, tr.time[i]), g, p,
                          setup.disturbance, setup.outer);
      };
      const double dt = setup.dt;
      for (std::size_t i : {100u, 250u, 400u}) {
        const OuterLoopOutput o = u_at(i);
        const Vec3 fd1 = (u_at(i + 1).u - u_at(i - 1).u) / (2 * dt);
        const Vec3 fd2 = (u_at(i + 1).u - 2 * o.u + u_at(i - 1).u) / (dt * dt);
        INFO("law " << to_string(law) << " i " << i);
        REQUIRE((o.u_dot - fd1).norm() < 1e-4 * (1 + o.u_dot.norm()));
        REQUIRE((o.u_ddot - fd2).norm() < 1e-2 * (1 + o.u_ddot.norm()));
      }
    }
  }
  SECTION("steady circle tilts inward by the centripetal angle") {
    SimulationSetup setup;
    setup.vehicle = p;
    const double radius = 1.5, rate = 1.2;
    setup.trajectory = traj::Circle{radius, rate, Vec3{0, 0, 2}};
    setup.initial.position = Vec3{radius, 0, 2};
    setup.initial.velocity = Vec3{0, radius * rate, 0};
    setup.horizon = 8.0;
    const SimTrace tr = simulate(setup);
    const Mat3 r_d = to_rotation(tr.q_d.back());
    const double tilt = std::acos(r_d(2, 2));
    REQUIRE(tilt == Catch::Approx(std::atan(radius * rate * rate / 9.81)).epsilon(1e-6));
    const Vec3 horiz = (r_d * kE3).cwiseProduct(Vec3{1, 1, 0});
    const Vec3 inward = -(tr.states.back().position - Vec3{0, 0, 2}).cwiseProduct(Vec3{1, 1, 0});
    REQUIRE(horiz.normalized().dot(inward.normalized()) > 1 - 1e-6);
  }
  SECTION("numeric_diff steady rates agree with oracle to O(dt)") {
    SimulationSetup setup;
    setup.vehicle = p;
    setup.trajectory = traj::Circle{1.0, 1.0, Vec3{0, 0, 1}};
    setup.initial.position = Vec3{1.0, 0, 1};
    setup.initial.velocity = Vec3{0, 1.0, 0};
    setup.horizon = 6.0;
    SimulationSetup numeric = setup;
    numeric.outer.mode = FeedbackMode::numeric_diff;
    const SimTrace a = simulate(setup), b = simulate(numeric);
    const double t = a.time.back();
    const Vec3 wa = ClosedLoop(setup).evaluate(t, a.states.back()).attitude_ref.omega_d;
    // the numeric loop needs its velocity history; replay it from the trace
    ClosedLoop lb(numeric);
    for (std::size_t i = 0; i < b.size(); ++i) lb.on_step(b.time[i], b.states[i]);
    const Vec3 wb = lb.evaluate(t, b.states.back()).attitude_ref.omega_d;
    REQUIRE((wa - wb).norm() < 50 * setup.dt);
  }
}

TEST_CASE("ideal inner loop reduces to the linear error dynamics") {
  SimulationSetup setup;
  setup.vehicle = VehicleParams(1.0, Vec3{0.03, 0.03, 0.06}.asDiagonal());
  setup.position_gains = PositionGains(2.0, Vec3{3.0, 2.5, 4.0}.asDiagonal());
  setup.trajectory = traj::Lissajous{Vec3{1.0, 0.5, 0.3}, Vec3{1.0, 2.0, 1.5}, Vec3{0, 0.5, 0}, Vec3{0, 0, 1}};
  setup.ideal_inner_loop = true;
  setup.initial.position = Vec3{0.3, 0.6, 0.8};
  setup.initial.velocity = Vec3{-0.4, 0.2, 0.5};
  setup.horizon = 5.0;
  const SimTrace tr = simulate(setup);
  const FlatReference r0 = sample_flat(setup.trajectory, 0.0);
  const Vec3 e0 = setup.initial.position - r0.pos, e0_dot = setup.initial.velocity - r0.vel;
  double worst = 0.0;
  for (std::size_t i = 0; i < tr.size(); ++i) {
    const Vec3 analytic = ideal_loop_position_error(setup.position_gains, e0, e0_dot, tr.time[i]);
    const Vec3 sim = tr.states[i].position - sample_flat(setup.trajectory, tr.time[i]).pos;
    worst = std::max(worst, (analytic - sim).norm());
  }
  REQUIRE(worst < 1e-6);
}
