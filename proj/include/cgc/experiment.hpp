#pragma once

// Experiment configs (JSON), bound certification checks, single runs and
// parallel suites, plus the CSV trace writer.

#include "json.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <mutex>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "cgc/analysis.hpp"
#include "cgc/errors.hpp"
#include "cgc/simulation.hpp"

namespace cgc {

using json = nlohmann::json;

/// One bound-certification request attached to an experiment.
struct CheckSpec {
  enum class Kind {
    max_position_error,   // |r_e| <= threshold at every sample
    attitude_envelope,    // |q_e.vec| <= 2 e^{-lambda t} (1 + slack)
    sliding_envelope,     // |s| <= |s(0)| e^{-upsilon t} (1 + slack)
    sliding_rate,         // d/dt |s|^2 <= -2 upsilon |s|^2 + slack
    position_convergence, // |r_e| falls below ratio |r_e(0)|
    position_decay_rate,  // tail rate of |r_e| >= factor min(alpha, rho)
    perturbed_inequality, // D+|S| <= -rho (1 - D1)|S| + D2 + |d|/m + slack
    disturbance_bound,    // tail sup |S| <= factor |d|/(m rho)
    max_torque,           // |tau| <= threshold at every sample
    envelope,             // signal <= amplitude e^{-rate t} (1 + slack)
  };

  Kind kind = Kind::max_position_error;
  double threshold = 0.0;
  double slack = 0.0;
  double ratio = 0.0;
  double factor = 1.0;
  std::string signal;
  double amplitude = 1.0;
  bool relative = false;
  double rate = 0.0;
};

struct RandomInitial {
  double attitude_error_max = 0.0;       // bound on |q_e.vec|, < 1
  double position_radius = 0.0;          // m
  double velocity_radius = 0.0;          // m/s
  double angular_velocity_radius = 0.0;  // rad/s
};

struct InitialStateSpec {
  RigidBodyState state;
  /// Attitude given relative to the desired attitude at t = 0.
  std::optional<UnitQuaternion> attitude_error;
  /// Choose w(0) so that the attitude sliding variable starts at zero
  /// (attitude-only references).
  bool on_manifold = false;
  std::optional<RandomInitial> random;
};

struct ExperimentConfig {
  std::string name = "experiment";
  SimulationSetup setup;
  InitialStateSpec initial;
  std::vector<CheckSpec> checks;
  std::uint64_t seed = 0;
};

// ---------------------------------------------------------------------------
// Parsing
// ---------------------------------------------------------------------------

namespace config_detail {

inline void expect_keys(const json& j, std::initializer_list<const char*> allowed,
                        const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [key, _] : j.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; })) {
      throw ConfigError(where + ": unknown key '" + key + "'");
    }
  }
}

inline double number(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) throw ConfigError(where + ": missing '" + key + "'");
  const auto& v = j.at(key);
  if (!v.is_number()) throw ConfigError(where + "." + key + ": expected a number");
  const double x = v.get<double>();
  if (!std::isfinite(x)) throw ConfigError(where + "." + key + ": must be finite");
  return x;
}

inline double number_or(const json& j, const char* key, double fallback, const std::string& where) {
  return j.contains(key) ? number(j, key, where) : fallback;
}

inline Vec3 vec3(const json& v, const std::string& where) {
  if (!v.is_array() || v.size() != 3) throw ConfigError(where + ": expected 3 numbers");
  Vec3 out;
  for (int i = 0; i < 3; ++i) {
    if (!v[i].is_number()) throw ConfigError(where + ": expected 3 numbers");
    out[i] = v[i].get<double>();
  }
  if (!out.allFinite()) throw ConfigError(where + ": must be finite");
  return out;
}

inline Vec3 vec3_or(const json& j, const char* key, const Vec3& fallback, const std::string& where) {
  return j.contains(key) ? vec3(j.at(key), where + "." + key) : fallback;
}

inline Vec3 unit3(const json& v, const std::string& where) {
  const Vec3 a = vec3(v, where);
  if (!(a.norm() > 0.0)) throw ConfigError(where + ": axis must be nonzero");
  return a.normalized();
}

/// [w, x, y, z]; normalized.
inline UnitQuaternion quat(const json& v, const std::string& where) {
  if (!v.is_array() || v.size() != 4) throw ConfigError(where + ": expected [w, x, y, z]");
  Vec4 c;
  for (int i = 0; i < 4; ++i) {
    if (!v[i].is_number()) throw ConfigError(where + ": expected [w, x, y, z]");
    c[i] = v[i].get<double>();
  }
  try {
    return UnitQuaternion::from_coeffs(c);
  } catch (const std::domain_error&) {
    throw ConfigError(where + ": quaternion must be nonzero and finite");
  }
}

/// Either a 3-vector (diagonal) or a 3x3 nested array.
inline Mat3 mat3(const json& v, const std::string& where) {
  if (v.is_array() && v.size() == 3 && v[0].is_number()) return vec3(v, where).asDiagonal();
  if (!v.is_array() || v.size() != 3) throw ConfigError(where + ": expected diagonal or 3x3 matrix");
  Mat3 m;
  for (int i = 0; i < 3; ++i) m.row(i) = vec3(v[i], where).transpose();
  return m;
}

inline std::string string(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key) || !j.at(key).is_string()) {
    throw ConfigError(where + ": missing string '" + key + "'");
  }
  return j.at(key).get<std::string>();
}

inline VehicleParams parse_vehicle(const json& j) {
  const std::string w = "vehicle";
  expect_keys(j, {"mass", "inertia", "gravity", "drag_coeff", "max_thrust"}, w);
  if (!j.contains("inertia")) throw ConfigError(w + ": missing 'inertia'");
  std::optional<double> drag, tmax;
  if (j.contains("drag_coeff")) drag = number(j, "drag_coeff", w);
  if (j.contains("max_thrust")) tmax = number(j, "max_thrust", w);
  return VehicleParams(number(j, "mass", w), mat3(j.at("inertia"), w + ".inertia"),
                       vec3_or(j, "gravity", Vec3{0.0, 0.0, 9.81}, w), drag, tmax);
}

inline TrajectorySpec parse_trajectory(const json& j) {
  const std::string w = "trajectory";
  const std::string kind = string(j, "kind", w);
  if (kind == "setpoint") {
    expect_keys(j, {"kind", "position"}, w);
    return traj::Setpoint{vec3_or(j, "position", Vec3::Zero(), w)};
  }
  if (kind == "circle") {
    expect_keys(j, {"kind", "radius", "rate", "center"}, w);
    return traj::Circle{number(j, "radius", w), number(j, "rate", w),
                        vec3_or(j, "center", Vec3::Zero(), w)};
  }
  if (kind == "lissajous") {
    expect_keys(j, {"kind", "amplitude", "frequency", "phase", "center"}, w);
    return traj::Lissajous{vec3_or(j, "amplitude", Vec3::Ones(), w),
                           vec3_or(j, "frequency", Vec3::Ones(), w),
                           vec3_or(j, "phase", Vec3::Zero(), w),
                           vec3_or(j, "center", Vec3::Zero(), w)};
  }
  if (kind == "polynomial") {
    expect_keys(j, {"kind", "duration", "start", "end"}, w);
    auto boundary = [&](const char* key) {
      traj::Polynomial::Boundary b{Vec3::Zero(), Vec3::Zero(), Vec3::Zero(), Vec3::Zero()};
      if (!j.contains(key)) return b;
      const auto& e = j.at(key);
      const std::string we = w + "." + key;
      expect_keys(e, {"position", "velocity", "acceleration", "jerk"}, we);
      b[0] = vec3_or(e, "position", Vec3::Zero(), we);
      b[1] = vec3_or(e, "velocity", Vec3::Zero(), we);
      b[2] = vec3_or(e, "acceleration", Vec3::Zero(), we);
      b[3] = vec3_or(e, "jerk", Vec3::Zero(), we);
      return b;
    };
    return traj::Polynomial(number(j, "duration", w), boundary("start"), boundary("end"));
  }
  if (kind == "attitude_spin") {
    expect_keys(j, {"kind", "initial", "axis", "rate", "nutation_axis", "nutation_rate"}, w);
    traj::AttitudeSpin s;
    if (j.contains("initial")) s.initial = quat(j.at("initial"), w + ".initial");
    if (j.contains("axis")) s.axis = unit3(j.at("axis"), w + ".axis");
    s.rate = number_or(j, "rate", 0.0, w);
    if (j.contains("nutation_axis")) s.nutation_axis = unit3(j.at("nutation_axis"), w + ".nutation_axis");
    s.nutation_rate = number_or(j, "nutation_rate", 0.0, w);
    return s;
  }
  throw ConfigError(w + ": unknown kind '" + kind + "'");
}

inline Disturbance parse_disturbance(const json& j) {
  const std::string w = "disturbance";
  const std::string kind = string(j, "kind", w);
  Disturbance d;
  if (kind == "none") {
    expect_keys(j, {"kind"}, w);
  } else if (kind == "constant_force") {
    expect_keys(j, {"kind", "force"}, w);
    d = Disturbance::constant_force(vec3_or(j, "force", Vec3::Zero(), w));
  } else if (kind == "translational_drag") {
    expect_keys(j, {"kind", "c_d"}, w);
    d = Disturbance::drag(number(j, "c_d", w));
  } else if (kind == "constant_torque") {
    expect_keys(j, {"kind", "torque"}, w);
    d = Disturbance::constant_torque(vec3_or(j, "torque", Vec3::Zero(), w));
  } else {
    throw ConfigError(w + ": unknown kind '" + kind + "'");
  }
  d.validate();
  return d;
}

inline CheckSpec parse_check(const json& j, const std::string& w) {
  using K = CheckSpec::Kind;
  const std::string kind = string(j, "kind", w);
  CheckSpec c;
  if (kind == "max_position_error") {
    expect_keys(j, {"kind", "threshold"}, w);
    c.kind = K::max_position_error;
    c.threshold = number(j, "threshold", w);
  } else if (kind == "attitude_envelope") {
    expect_keys(j, {"kind", "slack"}, w);
    c.kind = K::attitude_envelope;
    c.slack = number_or(j, "slack", 1e-6, w);
  } else if (kind == "sliding_envelope") {
    expect_keys(j, {"kind", "slack"}, w);
    c.kind = K::sliding_envelope;
    c.slack = number_or(j, "slack", 1e-6, w);
  } else if (kind == "sliding_rate") {
    expect_keys(j, {"kind", "slack"}, w);
    c.kind = K::sliding_rate;
    c.slack = number_or(j, "slack", 1e-3, w);
  } else if (kind == "position_convergence") {
    expect_keys(j, {"kind", "ratio"}, w);
    c.kind = K::position_convergence;
    c.ratio = number(j, "ratio", w);
  } else if (kind == "position_decay_rate") {
    expect_keys(j, {"kind", "factor"}, w);
    c.kind = K::position_decay_rate;
    c.factor = number_or(j, "factor", 0.9, w);
  } else if (kind == "perturbed_inequality") {
    expect_keys(j, {"kind", "slack"}, w);
    c.kind = K::perturbed_inequality;
    c.slack = number_or(j, "slack", 1e-3, w);
  } else if (kind == "disturbance_bound") {
    expect_keys(j, {"kind", "factor"}, w);
    c.kind = K::disturbance_bound;
    c.factor = number_or(j, "factor", 1.1, w);
  } else if (kind == "max_torque") {
    expect_keys(j, {"kind", "threshold"}, w);
    c.kind = K::max_torque;
    c.threshold = number(j, "threshold", w);
  } else if (kind == "envelope") {
    expect_keys(j, {"kind", "signal", "amplitude", "relative", "rate", "slack"}, w);
    c.kind = K::envelope;
    c.signal = string(j, "signal", w);
    c.amplitude = number_or(j, "amplitude", 1.0, w);
    c.relative = j.value("relative", false);
    c.rate = number(j, "rate", w);
    c.slack = number_or(j, "slack", 0.0, w);
  } else {
    throw ConfigError(w + ": unknown check kind '" + kind + "'");
  }
  return c;
}

inline InitialStateSpec parse_initial(const json& j) {
  const std::string w = "initial_state";
  expect_keys(j, {"position", "velocity", "attitude", "attitude_error", "angular_velocity",
                  "on_manifold", "random"}, w);
  InitialStateSpec spec;
  spec.state.position = vec3_or(j, "position", Vec3::Zero(), w);
  spec.state.velocity = vec3_or(j, "velocity", Vec3::Zero(), w);
  spec.state.angular_velocity = vec3_or(j, "angular_velocity", Vec3::Zero(), w);
  if (j.contains("attitude") && j.contains("attitude_error")) {
    throw ConfigError(w + ": give either 'attitude' or 'attitude_error', not both");
  }
  if (j.contains("attitude")) spec.state.attitude = quat(j.at("attitude"), w + ".attitude");
  if (j.contains("attitude_error")) spec.attitude_error = quat(j.at("attitude_error"), w + ".attitude_error");
  spec.on_manifold = j.value("on_manifold", false);
  if (j.contains("random")) {
    const auto& r = j.at("random");
    const std::string wr = w + ".random";
    expect_keys(r, {"attitude_error_max", "position_radius", "velocity_radius",
                    "angular_velocity_radius"}, wr);
    RandomInitial ri;
    ri.attitude_error_max = number_or(r, "attitude_error_max", 0.0, wr);
    ri.position_radius = number_or(r, "position_radius", 0.0, wr);
    ri.velocity_radius = number_or(r, "velocity_radius", 0.0, wr);
    ri.angular_velocity_radius = number_or(r, "angular_velocity_radius", 0.0, wr);
    if (!(ri.attitude_error_max >= 0.0 && ri.attitude_error_max < 1.0)) {
      throw ConfigError(wr + ".attitude_error_max must lie in [0, 1)");
    }
    if (ri.position_radius < 0.0 || ri.velocity_radius < 0.0 || ri.angular_velocity_radius < 0.0) {
      throw ConfigError(wr + ": radii must be >= 0");
    }
    spec.random = ri;
  }
  return spec;
}

}  // namespace config_detail

/// Parses and validates a config. Unknown keys anywhere are errors.
inline ExperimentConfig parse_config(const json& j, std::string name = "experiment") {
  using namespace config_detail;
  expect_keys(j, {"vehicle", "gains", "trajectory", "disturbance", "feedback_mode", "dt",
                  "horizon", "initial_state", "checks", "seed"}, "config");
  ExperimentConfig cfg;
  cfg.name = std::move(name);
  auto& s = cfg.setup;

  if (!j.contains("vehicle")) throw ConfigError("config: missing 'vehicle'");
  s.vehicle = parse_vehicle(j.at("vehicle"));

  if (!j.contains("gains")) throw ConfigError("config: missing 'gains'");
  const auto& g = j.at("gains");
  expect_keys(g, {"attitude", "position"}, "gains");
  if (g.contains("attitude")) {
    const auto& a = g.at("attitude");
    expect_keys(a, {"lambda", "K", "ideal"}, "gains.attitude");
    if (!a.contains("K")) throw ConfigError("gains.attitude: missing 'K'");
    s.attitude_gains = AttitudeGains(number(a, "lambda", "gains.attitude"),
                                     mat3(a.at("K"), "gains.attitude.K"));
    s.ideal_inner_loop = a.value("ideal", false);
  }
  if (g.contains("position")) {
    const auto& p = g.at("position");
    expect_keys(p, {"alpha", "K", "law", "c_d_hat"}, "gains.position");
    if (!p.contains("K")) throw ConfigError("gains.position: missing 'K'");
    s.position_gains = PositionGains(number(p, "alpha", "gains.position"),
                                     mat3(p.at("K"), "gains.position.K"));
    const std::string law = p.value("law", std::string("nominal"));
    if (law == "nominal") {
      s.outer.law = PositionLaw::nominal;
    } else if (law == "robust_drag") {
      s.outer.law = PositionLaw::robust_drag;
    } else {
      throw ConfigError("gains.position.law: expected 'nominal' or 'robust_drag'");
    }
    s.outer.c_d_hat = number_or(p, "c_d_hat", s.vehicle.drag_coeff().value_or(0.0), "gains.position");
    if (s.outer.c_d_hat < 0.0) throw ConfigError("gains.position.c_d_hat must be >= 0");
  }

  if (!j.contains("trajectory")) throw ConfigError("config: missing 'trajectory'");
  s.trajectory = parse_trajectory(j.at("trajectory"));
  if (j.contains("disturbance")) s.disturbance = parse_disturbance(j.at("disturbance"));

  const std::string mode = j.value("feedback_mode", std::string("oracle"));
  if (mode == "oracle") {
    s.outer.mode = FeedbackMode::oracle;
  } else if (mode == "numeric_diff") {
    s.outer.mode = FeedbackMode::numeric_diff;
  } else {
    throw ConfigError("feedback_mode: expected 'oracle' or 'numeric_diff'");
  }

  s.dt = number_or(j, "dt", 1e-3, "config");
  s.horizon = number(j, "horizon", "config");
  if (!(s.dt > 0.0)) throw ConfigError("dt must be > 0");
  if (!(s.horizon >= 10.0 * s.dt)) throw ConfigError("horizon must be >= 10 dt");

  if (j.contains("initial_state")) cfg.initial = parse_initial(j.at("initial_state"));
  if (cfg.initial.on_manifold && !is_attitude_only(s.trajectory)) {
    throw ConfigError("initial_state.on_manifold requires an attitude_spin trajectory");
  }
  if (s.ideal_inner_loop && is_attitude_only(s.trajectory)) {
    throw ConfigError("gains.attitude.ideal requires a position trajectory");
  }

  if (j.contains("checks")) {
    const auto& cs = j.at("checks");
    if (!cs.is_array()) throw ConfigError("checks: expected an array");
    for (std::size_t i = 0; i < cs.size(); ++i) {
      cfg.checks.push_back(parse_check(cs[i], "checks[" + std::to_string(i) + "]"));
    }
  }
  if (j.contains("seed")) {
    if (!j.at("seed").is_number_integer() || j.at("seed").get<std::int64_t>() < 0) {
      throw ConfigError("seed: expected a non-negative integer");
    }
    cfg.seed = j.at("seed").get<std::uint64_t>();
  }
  return cfg;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return parse_config(j, path.stem().string());
}

// ---------------------------------------------------------------------------
// Initial conditions
// ---------------------------------------------------------------------------

namespace experiment_detail {

inline Vec3 random_unit(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Vec3 v;
  do {
    v = Vec3{n(rng), n(rng), n(rng)};
  } while (v.norm() < 1e-12);
  return v.normalized();
}

inline Vec3 random_in_ball(std::mt19937_64& rng, double radius) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  return radius * std::cbrt(u(rng)) * random_unit(rng);
}

/// q_d at t = 0 as produced by the configured reference / outer loop.
inline UnitQuaternion initial_desired_attitude(const SimulationSetup& s, const RigidBodyState& x) {
  if (is_attitude_only(s.trajectory)) return sample_attitude(s.trajectory, 0.0).q_d;
  const FlatReference ref = sample_flat(s.trajectory, 0.0);
  const PositionErrorState e = position_error(x, ref, s.position_gains);
  const Vec3 u = s.outer.law == PositionLaw::robust_drag
                     ? desired_force_robust(e, ref, s.position_gains, x.velocity, s.outer.c_d_hat, s.vehicle)
                     : desired_force(e, ref, s.position_gains, s.vehicle.gravity());
  return extract_thrust_attitude(u, s.vehicle).q_d;
}

}  // namespace experiment_detail

/// Random unit quaternion with |vec| <= max_vec_norm and a random sign of the
/// scalar part.
inline UnitQuaternion random_error_quaternion(std::mt19937_64& rng, double max_vec_norm) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const Vec3 axis = experiment_detail::random_unit(rng);
  const double v = max_vec_norm * u(rng);
  const double w = std::sqrt(std::max(0.0, 1.0 - v * v)) * (u(rng) < 0.5 ? -1.0 : 1.0);
  return {w, v * axis};
}

/// Resolves the configured initial state: seeded randomization, attitude
/// relative to q_d(0), and optionally w(0) on the sliding manifold.
inline RigidBodyState resolve_initial_state(const ExperimentConfig& cfg) {
  using namespace experiment_detail;
  const auto& s = cfg.setup;
  RigidBodyState x = cfg.initial.state;
  std::mt19937_64 rng(cfg.seed);
  std::optional<UnitQuaternion> q_err = cfg.initial.attitude_error;
  if (cfg.initial.random) {
    const auto& r = *cfg.initial.random;
    x.position += random_in_ball(rng, r.position_radius);
    x.velocity += random_in_ball(rng, r.velocity_radius);
    x.angular_velocity += random_in_ball(rng, r.angular_velocity_radius);
    if (r.attitude_error_max > 0.0) {
      const UnitQuaternion extra = random_error_quaternion(rng, r.attitude_error_max);
      q_err = q_err ? quat_mul(*q_err, extra) : extra;
    }
  }
  if (q_err) x.attitude = quat_mul(initial_desired_attitude(s, x), *q_err);
  if (cfg.initial.on_manifold) {
    const AttitudeReference ref = sample_attitude(s.trajectory, 0.0);
    const AttitudeErrorState e = attitude_error(x, ref, s.attitude_gains.lambda());
    x.angular_velocity = omega_r(ref, e, s.attitude_gains.lambda());
  }
  return x;
}

// ---------------------------------------------------------------------------
// Checks
// ---------------------------------------------------------------------------

struct CheckResult {
  std::string kind;
  bool passed = false;
  std::string detail;
};

inline std::string check_kind_name(CheckSpec::Kind k) {
  using K = CheckSpec::Kind;
  switch (k) {
    case K::max_position_error: return "max_position_error";
    case K::attitude_envelope: return "attitude_envelope";
    case K::sliding_envelope: return "sliding_envelope";
    case K::sliding_rate: return "sliding_rate";
    case K::position_convergence: return "position_convergence";
    case K::position_decay_rate: return "position_decay_rate";
    case K::perturbed_inequality: return "perturbed_inequality";
    case K::disturbance_bound: return "disturbance_bound";
    case K::max_torque: return "max_torque";
    case K::envelope: return "envelope";
  }
  return "?";
}

namespace experiment_detail {

inline std::string fmt(const char* f, auto... args) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

inline std::string describe(const BoundReport& r) {
  std::string s = fmt("worst_ratio=%.6g at t=%.6g violations=%zu", r.worst_ratio, r.worst_time,
                      r.violations);
  if (r.first_violation) s += fmt(" first_violation_t=%.6g", *r.first_violation);
  return s;
}

inline std::vector<double> signal_series(const SimTrace& tr, const std::string& name) {
  if (name == "norm_qe_vec") return tr.series(&TraceNorms::qe_vec);
  if (name == "norm_s_att") return tr.series(&TraceNorms::s_att);
  if (name == "norm_r_e") return tr.series(&TraceNorms::r_e);
  if (name == "norm_s_pos") return tr.series(&TraceNorms::s_pos);
  if (name == "Delta1") return tr.series(&TraceNorms::delta1);
  if (name == "Delta2") return tr.series(&TraceNorms::delta2);
  throw ConfigError("unknown signal '" + name + "'");
}

/// |d|/m per sample for the translational disturbance.
inline std::vector<double> disturbance_accel(const SimTrace& tr, const SimulationSetup& s) {
  std::vector<double> out;
  out.reserve(tr.size());
  for (const auto& x : tr.states) {
    out.push_back(s.disturbance.force(x.velocity).norm() / s.vehicle.mass());
  }
  return out;
}

}  // namespace experiment_detail

inline CheckResult evaluate_check(const CheckSpec& c, const SimTrace& tr, const SimulationSetup& s) {
  using namespace experiment_detail;
  using K = CheckSpec::Kind;
  CheckResult res;
  res.kind = check_kind_name(c.kind);
  const std::span<const double> t(tr.time);
  switch (c.kind) {
    case K::max_position_error: {
      const auto v = tr.series(&TraceNorms::r_e);
      const double worst = *std::max_element(v.begin(), v.end());
      res.passed = worst <= c.threshold;
      res.detail = fmt("max_norm_r_e=%.6g threshold=%.6g", worst, c.threshold);
      break;
    }
    case K::attitude_envelope: {
      const double lambda = s.attitude_gains.lambda();
      const auto rep = certify_bound(t, tr.series(&TraceNorms::qe_vec),
                                     [lambda](double tt) { return 2.0 * std::exp(-lambda * tt); },
                                     c.slack);
      res.passed = rep.passed;
      res.detail = describe(rep);
      break;
    }
    case K::sliding_envelope: {
      const auto v = tr.series(&TraceNorms::s_att);
      const double v0 = v.front(), ups = s.attitude_gains.upsilon();
      const auto rep =
          certify_bound(t, v, [=](double tt) { return v0 * std::exp(-ups * tt); }, c.slack);
      res.passed = rep.passed;
      res.detail = describe(rep) + fmt(" upsilon=%.6g", ups);
      break;
    }
    case K::sliding_rate: {
      auto v = tr.series(&TraceNorms::s_att);
      std::vector<double> rhs(v.size());
      const double ups = s.attitude_gains.upsilon();
      for (std::size_t i = 0; i < v.size(); ++i) {
        v[i] *= v[i];
        rhs[i] = -2.0 * ups * v[i];
      }
      const auto rep = check_differential_inequality(t, v, rhs, c.slack);
      res.passed = rep.passed;
      res.detail = fmt("worst_excess=%.6g at t=%.6g violations=%zu", rep.worst_excess,
                       rep.worst_time, rep.violations);
      break;
    }
    case K::position_convergence: {
      const auto v = tr.series(&TraceNorms::r_e);
      const double target = c.ratio * v.front();
      const auto it = std::find_if(v.begin(), v.end(), [&](double x) { return x < target; });
      res.passed = it != v.end();
      const double final_ratio = v.front() > 0.0 ? v.back() / v.front() : 0.0;
      res.detail = fmt("final_ratio=%.6g required=%.6g", final_ratio, c.ratio);
      if (res.passed) res.detail += fmt(" reached_t=%.6g", t[static_cast<std::size_t>(it - v.begin())]);
      break;
    }
    case K::position_decay_rate: {
      const auto fit = fit_exponential(t, tr.series(&TraceNorms::r_e));
      const double target = c.factor * std::min(s.position_gains.alpha(), s.position_gains.rho());
      res.passed = fit.rate >= target;
      res.detail = fmt("fitted_rate=%.6g required=%.6g window=[%.4g,%.4g] residual=%.3g",
                       fit.rate, target, fit.window.t_start, fit.window.t_end, fit.residual);
      break;
    }
    case K::perturbed_inequality: {
      const auto v = tr.series(&TraceNorms::s_pos);
      const auto d = disturbance_accel(tr, s);
      const double rho = s.position_gains.rho();
      std::vector<double> rhs(v.size());
      for (std::size_t i = 0; i < v.size(); ++i) {
        rhs[i] = -rho * (1.0 - tr.norms[i].delta1) * v[i] + tr.norms[i].delta2 + d[i];
      }
      const auto rep = check_differential_inequality(t, v, rhs, c.slack);
      res.passed = rep.passed;
      res.detail = fmt("worst_excess=%.6g at t=%.6g violations=%zu", rep.worst_excess,
                       rep.worst_time, rep.violations);
      break;
    }
    case K::disturbance_bound: {
      const auto v = tr.series(&TraceNorms::s_pos);
      const auto d = disturbance_accel(tr, s);
      const FitWindow w = tail_window(t);
      double sup_s = 0.0, sup_d = 0.0;
      for (std::size_t i = 0; i < v.size(); ++i) {
        if (t[i] < w.t_start) continue;
        sup_s = std::max(sup_s, v[i]);
        sup_d = std::max(sup_d, d[i]);
      }
      const double bound = c.factor * sup_d / s.position_gains.rho();
      res.passed = sup_s <= bound;
      res.detail = fmt("tail_sup_norm_s_pos=%.6g bound=%.6g", sup_s, bound);
      break;
    }
    case K::max_torque: {
      double worst = 0.0;
      for (const auto& u : tr.controls) worst = std::max(worst, u.torque.norm());
      res.passed = worst <= c.threshold;
      res.detail = fmt("max_norm_tau=%.6g threshold=%.6g", worst, c.threshold);
      break;
    }
    case K::envelope: {
      const auto v = signal_series(tr, c.signal);
      const double a = c.relative ? c.amplitude * v.front() : c.amplitude;
      const double rate = c.rate;
      const auto rep = certify_bound(t, v, [=](double tt) { return a * std::exp(-rate * tt); }, c.slack);
      res.passed = rep.passed;
      res.detail = c.signal + " " + describe(rep);
      break;
    }
  }
  return res;
}

// ---------------------------------------------------------------------------
// Running
// ---------------------------------------------------------------------------

struct ExperimentResult {
  std::string name;
  bool passed = false;
  std::optional<std::string> error;
  std::vector<CheckResult> checks;
  SimTrace trace;
  std::size_t samples = 0;
  double wall_seconds = 0.0;
};

/// Deterministic given (config, seed). Inner-module errors are captured in
/// `error` (with their timestamps) and mark the run failed.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  ExperimentResult res;
  res.name = cfg.name;
  const auto start = std::chrono::steady_clock::now();
  try {
    SimulationSetup setup = cfg.setup;
    setup.initial = resolve_initial_state(cfg);
    res.trace = simulate(setup);
    res.samples = res.trace.size();
    res.passed = true;
    for (const auto& c : cfg.checks) {
      res.checks.push_back(evaluate_check(c, res.trace, setup));
      res.passed = res.passed && res.checks.back().passed;
    }
  } catch (const std::exception& e) {
    res.passed = false;
    res.error = e.what();
  }
  res.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return res;
}

struct SuiteReport {
  std::vector<ExperimentResult> runs;  // in input order
  std::size_t passed = 0;
  std::size_t failed = 0;
  bool all_passed() const { return failed == 0; }
};

/// Runs independent experiments on up to `jobs` threads. A failing run is
/// recorded and the suite continues. Traces are dropped unless keep_traces.
inline SuiteReport run_suite(const std::vector<ExperimentConfig>& configs, unsigned jobs,
                             bool keep_traces = false) {
  SuiteReport rep;
  rep.runs.resize(configs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < configs.size(); i = next++) {
      rep.runs[i] = run_experiment(configs[i]);
      if (!keep_traces) rep.runs[i].trace = SimTrace{};
    }
  };
  jobs = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(configs.size())));
  std::vector<std::thread> pool;
  for (unsigned j = 1; j < jobs; ++j) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  for (const auto& r : rep.runs) (r.passed ? rep.passed : rep.failed)++;
  return rep;
}

// ---------------------------------------------------------------------------
// Output
// ---------------------------------------------------------------------------

inline const char* kCsvHeader =
    "t,r_x,r_y,r_z,r_d_x,r_d_y,r_d_z,v_x,v_y,v_z,q_w,q_x,q_y,q_z,q_d_w,q_d_x,q_d_y,q_d_z,"
    "omega_x,omega_y,omega_z,T,tau_x,tau_y,tau_z,norm_qe_vec,norm_s_att,norm_r_e,norm_s_pos,"
    "Delta1,Delta2";

/// One row per sample, 17 significant digits so values round-trip.
inline void write_csv(std::ostream& out, const SimTrace& tr) {
  out << kCsvHeader << '\n';
  char buf[32];
  auto put = [&](double x, bool last = false) {
    std::snprintf(buf, sizeof buf, "%.17g", x);
    out << buf << (last ? '\n' : ',');
  };
  auto put3 = [&](const Vec3& v) {
    for (int i = 0; i < 3; ++i) put(v[i]);
  };
  auto put4 = [&](const UnitQuaternion& q) {
    const Vec4 c = q.coeffs();
    for (int i = 0; i < 4; ++i) put(c[i]);
  };
  for (std::size_t i = 0; i < tr.size(); ++i) {
    const auto& x = tr.states[i];
    const auto& n = tr.norms[i];
    put(tr.time[i]);
    put3(x.position);
    put3(tr.r_d[i]);
    put3(x.velocity);
    put4(x.attitude);
    put4(tr.q_d[i]);
    put3(x.angular_velocity);
    put(tr.controls[i].thrust);
    put3(tr.controls[i].torque);
    put(n.qe_vec);
    put(n.s_att);
    put(n.r_e);
    put(n.s_pos);
    put(n.delta1);
    put(n.delta2, true);
  }
}

/// Structured text report: one `check` line per certification plus a
/// summary line.
inline std::string format_report(const ExperimentResult& r) {
  std::ostringstream os;
  os << "experiment " << r.name << '\n';
  if (r.error) os << "error " << *r.error << '\n';
  for (const auto& c : r.checks) {
    os << "check " << c.kind << ' ' << (c.passed ? "PASS" : "FAIL") << ' ' << c.detail << '\n';
  }
  os << "result " << (r.passed ? "PASS" : "FAIL") << " checks=" << r.checks.size()
     << " samples=" << r.samples << '\n';
  return os.str();
}

}  // namespace cgc
