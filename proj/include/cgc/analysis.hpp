#pragma once

// Convergence measurement on simulation traces and closed-form references for
// the perturbed differential inequalities used in the stability argument.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "cgc/dynamics.hpp"
#include "cgc/position_control.hpp"
#include "cgc/so3.hpp"

namespace cgc {

/// Per-sample scalar diagnostics.
struct TraceNorms {
  double qe_vec = 0.0;   // |q_e.vec|
  double s_att = 0.0;    // |s|
  double r_e = 0.0;      // |r_e|
  double s_pos = 0.0;    // |S|
  double delta1 = 0.0;   // 2 sqrt(2) |q_e.vec|
  double delta2 = 0.0;   // delta1 |r_d'' - alpha r_e' + g|
};

/// Time-indexed record of a closed-loop run. All vectors have equal length
/// and time is strictly increasing.
struct SimTrace {
  std::vector<double> time;
  std::vector<RigidBodyState> states;
  std::vector<ControlInput> controls;
  std::vector<Vec3> r_d;
  std::vector<UnitQuaternion> q_d;
  std::vector<TraceNorms> norms;

  std::size_t size() const { return time.size(); }

  void reserve(std::size_t n) {
    time.reserve(n);
    states.reserve(n);
    controls.reserve(n);
    r_d.reserve(n);
    q_d.reserve(n);
    norms.reserve(n);
  }

  /// Throws std::logic_error if the invariants do not hold.
  void validate() const {
    const auto n = time.size();
    if (states.size() != n || controls.size() != n || r_d.size() != n || q_d.size() != n ||
        norms.size() != n) {
      throw std::logic_error("SimTrace: arrays differ in length");
    }
    for (std::size_t i = 1; i < n; ++i) {
      if (!(time[i] > time[i - 1])) throw std::logic_error("SimTrace: time not increasing");
    }
  }

  /// Extracts one diagnostic as a series.
  std::vector<double> series(double TraceNorms::*field) const {
    std::vector<double> out;
    out.reserve(norms.size());
    for (const auto& n : norms) out.push_back(n.*field);
    return out;
  }
};

struct FitWindow {
  double t_start = 0.0;
  double t_end = std::numeric_limits<double>::infinity();
};

/// Second half of [t_first, t_last].
inline FitWindow tail_window(std::span<const double> t) {
  if (t.empty()) return {};
  return {0.5 * (t.front() + t.back()), t.back()};
}

struct DecayFit {
  double rate = 0.0;       // 1/s, minus the fitted log-slope
  double overshoot = 1.0;  // exp(max residual above the fitted line)
  FitWindow window;
  double residual = 0.0;   // RMS of log-residuals
  std::size_t samples = 0;
};

/// Least-squares fit of log v against t on the window. Values are clipped at
/// 1e-15 before taking logs. Throws std::invalid_argument if fewer than 8
/// samples fall inside the window.
inline DecayFit fit_exponential(std::span<const double> t, std::span<const double> v,
                                FitWindow window) {
  if (t.size() != v.size()) throw std::invalid_argument("fit_exponential: size mismatch");
  std::vector<double> xs, ys;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (t[i] >= window.t_start && t[i] <= window.t_end) {
      xs.push_back(t[i]);
      ys.push_back(std::log(std::max(v[i], 1e-15)));
    }
  }
  if (xs.size() < 8) throw std::invalid_argument("fit_exponential: fewer than 8 samples in window");
  const double n = static_cast<double>(xs.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
  }
  const double slope = sxx > 0.0 ? sxy / sxx : 0.0;
  DecayFit fit;
  fit.rate = -slope;
  fit.window = {xs.front(), xs.back()};
  fit.samples = xs.size();
  double max_res = -std::numeric_limits<double>::infinity(), ss = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double r = ys[i] - (my + slope * (xs[i] - mx));
    max_res = std::max(max_res, r);
    ss += r * r;
  }
  fit.overshoot = std::exp(max_res);
  fit.residual = std::sqrt(ss / n);
  return fit;
}

inline DecayFit fit_exponential(std::span<const double> t, std::span<const double> v) {
  return fit_exponential(t, v, tail_window(t));
}

/// Solution of x' = -sigma x sqrt(1 - x), x(0) = x0 in [0, 1):
///   x(t) = 4 c e^{-sigma t} / (1 + c e^{-sigma t})^2,
///   c = (1 - sqrt(1 - x0)) / (1 + sqrt(1 - x0)).
inline double lemma3_constant(double x0) {
  if (!(x0 >= 0.0 && x0 < 1.0)) throw std::domain_error("lemma3: x0 must lie in [0, 1)");
  const double y0 = std::sqrt(1.0 - x0);
  return (1.0 - y0) / (1.0 + y0);
}

inline double lemma3_closed_form(double x0, double sigma, double t) {
  if (!(sigma > 0.0)) throw std::domain_error("lemma3: sigma must be positive");
  const double c = lemma3_constant(x0);
  const double e = c * std::exp(-sigma * t);
  return 4.0 * e / ((1.0 + e) * (1.0 + e));
}

/// 4 c e^{-sigma t}, the looser exponential envelope.
inline double lemma3_loose_bound(double x0, double sigma, double t) {
  return 4.0 * lemma3_constant(x0) * std::exp(-sigma * t);
}

/// v(t) = v0 e^{-lambda t} + C/(lambda - p) (e^{-p t} - e^{-lambda t}), the
/// solution of v' = -lambda v + C e^{-p t}. The resonant case lambda == p is
/// rejected.
inline double lemma6_solution(double v0, double lambda, double c, double p, double t) {
  if (!(lambda > 0.0) || !(p > 0.0)) throw std::domain_error("lemma6: lambda and p must be > 0");
  if (lambda == p) throw std::domain_error("lemma6: resonant case lambda == p not covered");
  return v0 * std::exp(-lambda * t) + c / (lambda - p) * (std::exp(-p * t) - std::exp(-lambda * t));
}

/// Envelopes for v' <= (-lambda + C e^{-p t}) v.
struct OvershootEnvelope {
  double v0 = 0.0, lambda = 0.0, c = 0.0, p = 0.0;

  /// e^{C/p}
  double overshoot() const { return std::exp(c / p); }
  /// v0 exp(-lambda t + C (1 - e^{-p t}) / p)
  double tight(double t) const {
    return v0 * std::exp(-lambda * t + c * (1.0 - std::exp(-p * t)) / p);
  }
  /// R v0 e^{-lambda t}
  double loose(double t) const { return overshoot() * v0 * std::exp(-lambda * t); }
};

inline OvershootEnvelope overshoot_bound(double v0, double lambda, double c, double p) {
  if (!(lambda > 0.0) || !(c >= 0.0) || !(p > 0.0)) {
    throw std::domain_error("overshoot_bound: need lambda > 0, C >= 0, p > 0");
  }
  return {v0, lambda, c, p};
}

/// Result of checking v(t) <= bound(t) (1 + slack) at every sample.
struct BoundReport {
  bool passed = true;
  double worst_ratio = 0.0;  // max v / bound
  double worst_time = 0.0;
  std::optional<double> first_violation;
  std::size_t violations = 0;
  std::size_t samples = 0;
};

inline BoundReport certify_bound(std::span<const double> t, std::span<const double> v,
                                 const std::function<double(double)>& bound, double slack) {
  if (t.size() != v.size()) throw std::invalid_argument("certify_bound: size mismatch");
  BoundReport rep;
  rep.samples = t.size();
  rep.worst_ratio = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double b = bound(t[i]);
    const double ratio = b > 0.0 ? v[i] / b : (v[i] > 0.0 ? std::numeric_limits<double>::infinity() : 0.0);
    if (ratio > rep.worst_ratio) {
      rep.worst_ratio = ratio;
      rep.worst_time = t[i];
    }
    if (!(v[i] <= b * (1.0 + slack))) {
      ++rep.violations;
      if (!rep.first_violation) rep.first_violation = t[i];
    }
  }
  rep.passed = rep.violations == 0;
  return rep;
}

/// Result of checking a differential inequality D+v <= rhs along samples.
struct InequalityReport {
  bool passed = true;
  double worst_excess = -std::numeric_limits<double>::infinity();  // max (D+v - rhs)
  double worst_time = 0.0;
  std::size_t violations = 0;
};

/// Checks the forward difference (v[i+1] - v[i]) / (t[i+1] - t[i]) against
/// the step-average (rhs[i] + rhs[i+1]) / 2 plus an absolute slack. A forward
/// difference is the mean of the derivative over the step, so it is compared
/// with the mean of the bound over the same step.
inline InequalityReport check_differential_inequality(std::span<const double> t,
                                                      std::span<const double> v,
                                                      std::span<const double> rhs, double slack) {
  if (t.size() != v.size() || t.size() != rhs.size()) {
    throw std::invalid_argument("check_differential_inequality: size mismatch");
  }
  InequalityReport rep;
  for (std::size_t i = 0; i + 1 < t.size(); ++i) {
    const double dv = (v[i + 1] - v[i]) / (t[i + 1] - t[i]);
    const double excess = dv - 0.5 * (rhs[i] + rhs[i + 1]);
    if (excess > rep.worst_excess) {
      rep.worst_excess = excess;
      rep.worst_time = t[i];
    }
    if (!(excess <= slack)) ++rep.violations;
  }
  rep.passed = rep.violations == 0;
  return rep;
}

/// Fixed-step classical RK4 for a scalar ODE x' = f(t, x); returns the
/// samples at t0, t0 + h, ..., t0 + n h. Kept separate from the rigid-body
/// integrator so it can serve as an independent reference.
template <typename F>
std::vector<double> rk4_scalar(F&& f, double x0, double t0, double h, std::size_t n) {
  std::vector<double> xs;
  xs.reserve(n + 1);
  double x = x0, t = t0;
  xs.push_back(x);
  for (std::size_t i = 0; i < n; ++i) {
    const double k1 = f(t, x);
    const double k2 = f(t + 0.5 * h, x + 0.5 * h * k1);
    const double k3 = f(t + 0.5 * h, x + 0.5 * h * k2);
    const double k4 = f(t + h, x + h * k3);
    x += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    t = t0 + static_cast<double>(i + 1) * h;
    xs.push_back(x);
  }
  return xs;
}

/// Position error of the cascade when the attitude equals R_d exactly. Then
/// S' = -K S and r_e' = -alpha r_e + S, solved per eigenmode of K:
///   r_i(t) = e^{-alpha t} r_i(0) + S_i(0) (e^{-k_i t} - e^{-alpha t}) / (alpha - k_i)
/// (or S_i(0) t e^{-alpha t} when k_i == alpha).
inline Vec3 ideal_loop_position_error(const PositionGains& gains, const Vec3& r0,
                                      const Vec3& r0_dot, double t) {
  Eigen::SelfAdjointEigenSolver<Mat3> eig(gains.k());
  const Mat3& v = eig.eigenvectors();
  const Vec3 r_modal = v.transpose() * r0;
  const Vec3 s_modal = v.transpose() * (r0_dot + gains.alpha() * r0);
  const double a = gains.alpha();
  Vec3 out;
  for (int i = 0; i < 3; ++i) {
    const double k = eig.eigenvalues()[i];
    const double ea = std::exp(-a * t);
    const double forced = std::abs(a - k) < 1e-12 ? t * ea : (std::exp(-k * t) - ea) / (a - k);
    out[i] = ea * r_modal[i] + s_modal[i] * forced;
  }
  return v * out;
}

}  // namespace cgc
