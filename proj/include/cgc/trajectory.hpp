#pragma once

// Reference generators with analytic derivatives. Position references are
// sampled through snap (needed by the desired angular acceleration), attitude
// references return q_d with a consistent body rate and its derivative.

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <stdexcept>
#include <string>
#include <variant>

#include "cgc/attitude_control.hpp"
#include "cgc/errors.hpp"
#include "cgc/so3.hpp"

namespace cgc {

/// Desired position and its first four time derivatives.
struct FlatReference {
  Vec3 pos = Vec3::Zero();
  Vec3 vel = Vec3::Zero();
  Vec3 acc = Vec3::Zero();
  Vec3 jerk = Vec3::Zero();
  Vec3 snap = Vec3::Zero();
};

namespace traj {

struct Setpoint {
  Vec3 position = Vec3::Zero();
};

/// r(t) = center + radius (cos(rate t), sin(rate t), 0).
struct Circle {
  double radius = 1.0;
  double rate = 1.0;  // rad/s
  Vec3 center = Vec3::Zero();
};

/// r_i(t) = center_i + amplitude_i sin(frequency_i t + phase_i).
struct Lissajous {
  Vec3 amplitude = Vec3::Ones();
  Vec3 frequency = Vec3::Ones();
  Vec3 phase = Vec3::Zero();
  Vec3 center = Vec3::Zero();
};

/// Single 7th-order segment on [0, duration] matching position, velocity,
/// acceleration and jerk at both ends. Coefficients are solved on
/// construction (one dense 8x8 solve shared by the three axes).
class Polynomial {
 public:
  using Boundary = std::array<Vec3, 4>;  // pos, vel, acc, jerk

  Polynomial() : Polynomial(1.0, {}, {}) {}

  Polynomial(double duration, const Boundary& start, const Boundary& end)
      : duration_(duration), start_(start), end_(end) {
    if (!(duration > 0.0) || !std::isfinite(duration)) {
      throw ConfigError("polynomial duration must be positive");
    }
    Eigen::Matrix<double, 8, 8> a = Eigen::Matrix<double, 8, 8>::Zero();
    Eigen::Matrix<double, 8, 3> b;
    for (int d = 0; d < 4; ++d) {
      for (int k = d; k < 8; ++k) {
        const double c = falling(k, d);
        a(d, k) = d == k ? c : 0.0;
        a(4 + d, k) = c * std::pow(duration, k - d);
      }
      b.row(d) = start[d].transpose();
      b.row(4 + d) = end[d].transpose();
    }
    coeffs_ = a.fullPivLu().solve(b);
  }

  double duration() const noexcept { return duration_; }
  const Boundary& start() const noexcept { return start_; }
  const Boundary& end() const noexcept { return end_; }

  /// d-th derivative at t.
  Vec3 derivative(double t, int d) const {
    Vec3 out = Vec3::Zero();
    for (int k = d; k < 8; ++k) {
      out += falling(k, d) * std::pow(t, k - d) * coeffs_.row(k).transpose();
    }
    return out;
  }

 private:
  static double falling(int k, int d) {
    double c = 1.0;
    for (int i = 0; i < d; ++i) c *= k - i;
    return c;
  }

  double duration_;
  Boundary start_, end_;
  Eigen::Matrix<double, 8, 3> coeffs_;
};

/// q_d(t) = initial (x) exp(axis*rate*t) (x) exp(nutation_axis*nutation_rate*t),
/// each factor a constant-rate spin about a fixed body axis. With
/// nutation_rate = 0 this is a plain spin.
struct AttitudeSpin {
  UnitQuaternion initial;
  Vec3 axis = kE3;
  double rate = 0.0;
  Vec3 nutation_axis = Vec3::UnitX();
  double nutation_rate = 0.0;
};

}  // namespace traj

using TrajectorySpec =
    std::variant<traj::Setpoint, traj::Polynomial, traj::Circle, traj::Lissajous, traj::AttitudeSpin>;

inline std::string kind_name(const TrajectorySpec& spec) {
  static constexpr const char* names[] = {"setpoint", "polynomial", "circle", "lissajous",
                                          "attitude_spin"};
  return names[spec.index()];
}

inline bool is_attitude_only(const TrajectorySpec& spec) {
  return std::holds_alternative<traj::AttitudeSpin>(spec);
}

namespace detail {
template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;
}  // namespace detail

inline FlatReference sample_flat(const TrajectorySpec& spec, double t) {
  if (!std::isfinite(t)) throw std::out_of_range("sample_flat: non-finite time");
  return std::visit(
      detail::overloaded{
          [](const traj::Setpoint& s) {
            FlatReference r;
            r.pos = s.position;
            return r;
          },
          [t](const traj::Circle& c) {
            const double a = c.rate * t, w = c.rate, w2 = w * w;
            const Vec3 cs{std::cos(a), std::sin(a), 0.0};
            const Vec3 sc{-std::sin(a), std::cos(a), 0.0};
            FlatReference r;
            r.pos = c.center + c.radius * cs;
            r.vel = c.radius * w * sc;
            r.acc = -c.radius * w2 * cs;
            r.jerk = -c.radius * w2 * w * sc;
            r.snap = c.radius * w2 * w2 * cs;
            return r;
          },
          [t](const traj::Lissajous& l) {
            FlatReference r;
            for (int i = 0; i < 3; ++i) {
              const double w = l.frequency[i], a = l.amplitude[i];
              const double sn = std::sin(w * t + l.phase[i]), cs = std::cos(w * t + l.phase[i]);
              r.pos[i] = l.center[i] + a * sn;
              r.vel[i] = a * w * cs;
              r.acc[i] = -a * w * w * sn;
              r.jerk[i] = -a * w * w * w * cs;
              r.snap[i] = a * w * w * w * w * sn;
            }
            return r;
          },
          [t](const traj::Polynomial& p) {
            if (t < 0.0 || t > p.duration()) {
              throw std::out_of_range("sample_flat: t outside polynomial segment");
            }
            FlatReference r;
            r.pos = p.derivative(t, 0);
            r.vel = p.derivative(t, 1);
            r.acc = p.derivative(t, 2);
            r.jerk = p.derivative(t, 3);
            r.snap = p.derivative(t, 4);
            return r;
          },
          [](const traj::AttitudeSpin&) -> FlatReference {
            throw ConfigError("sample_flat: attitude_spin has no position reference");
          }},
      spec);
}

inline AttitudeReference sample_attitude(const TrajectorySpec& spec, double t) {
  if (!std::isfinite(t)) throw std::out_of_range("sample_attitude: non-finite time");
  const auto* spin = std::get_if<traj::AttitudeSpin>(&spec);
  if (spin == nullptr) throw ConfigError("sample_attitude: " + kind_name(spec) + " is not an attitude reference");
  const UnitQuaternion first = from_axis_angle({spin->axis, spin->rate * t});
  const UnitQuaternion second = from_axis_angle({spin->nutation_axis, spin->nutation_rate * t});
  const Vec3 w1 = spin->rate * spin->axis;
  const Vec3 w2 = spin->nutation_rate * spin->nutation_axis;
  const Mat3 r2t = to_rotation(second).transpose();
  AttitudeReference ref;
  ref.q_d = quat_mul(quat_mul(spin->initial, first), second);
  ref.omega_d = r2t * w1 + w2;
  ref.omega_d_dot = -w2.cross(r2t * w1);
  return ref;
}

}  // namespace cgc
